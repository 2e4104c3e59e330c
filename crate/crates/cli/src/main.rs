mod io;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use causalkg::rectifier::RectifiedGraph;
use causalkg::senses::DEFAULT_SENSE_THRESHOLD;
use causalkg::training::train_with_history;
use causalkg::{
    compute_valence, emit_dot, link_senses, merge_corpus, rectify, score_with_schema, Encoder,
    EncoderConfig, KnowledgeGraph, Model, Query, Schema, SenseInventory, TokenEncoder, TrainConfig,
};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(
    name = "causalkg",
    version,
    about = "Extract, repair and reason over causal knowledge graphs"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Built-in schema name (sciclaim, ethno) or schema JSON file.
    #[arg(long, global = true)]
    schema: Option<String>,
    /// JSON config with `train`, `encoder` and threshold fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for every random choice; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model file to read (or, for train, to write).
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Output file or directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    threshold_relation: Option<f64>,
    #[arg(long, global = true)]
    threshold_attribute: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on a dataset JSON file.
    Train { dataset: PathBuf },
    /// Score predictions against a gold dataset.
    Eval {
        dataset: PathBuf,
        /// Score these graphs instead of extracting with --model.
        #[arg(long)]
        predicted: Option<PathBuf>,
        /// Rectify predictions before scoring.
        #[arg(long)]
        rectify: bool,
    },
    /// Extract one graph per sentence into --out DIR.
    Extract {
        /// Dataset JSON, or text with one tokenized sentence per line.
        sentences: PathBuf,
        #[arg(long)]
        rectify: bool,
    },
    /// Prune graphs until they satisfy the schema.
    Rectify { graphs: PathBuf },
    /// Link graph nodes to senses of an inventory.
    Senses {
        graphs: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        glosses: Option<PathBuf>,
        #[arg(long)]
        skip_list: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_SENSE_THRESHOLD)]
        threshold: f64,
    },
    /// Compute valence assertions for ethno graphs.
    Valence { graphs: PathBuf },
    /// Find paths between pattern matches across a corpus.
    Query {
        query: PathBuf,
        #[arg(required = true)]
        graphs: Vec<PathBuf>,
        /// Do not join nodes of different sentences that share a lemma.
        #[arg(long)]
        no_lemma_links: bool,
    },
    /// Render graphs as Graphviz DOT.
    Dot { graphs: PathBuf },
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct Config {
    train: TrainConfig,
    encoder: EncoderConfig,
    relation_threshold: Option<f64>,
    attribute_threshold: Option<f64>,
}

/// Invocation problems found after parsing; reported like clap errors.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

impl Common {
    fn config(&self) -> Result<Config> {
        let mut config = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("cannot read config {}", p.display()))?;
                serde_json::from_str(&text)
                    .with_context(|| format!("invalid config {}", p.display()))?
            }
            None => Config::default(),
        };
        if let Some(seed) = self.seed {
            config.train.seed = seed;
            config.encoder.seed = seed;
        }
        if let Some(t) = self.threshold_relation.or(config.relation_threshold) {
            config.train.relation_threshold = t;
        }
        if let Some(t) = self.threshold_attribute.or(config.attribute_threshold) {
            config.train.attribute_threshold = t;
        }
        Ok(config)
    }

    fn schema_or(&self, fallback: impl FnOnce() -> Schema) -> Result<Schema> {
        self.schema
            .as_deref()
            .map_or_else(|| Ok(fallback()), io::resolve_schema)
    }

    fn model_path(&self) -> Result<&Path> {
        self.model
            .as_deref()
            .ok_or_else(|| usage("--model is required"))
    }

    fn load_model(&self) -> Result<Model> {
        let path = self.model_path()?;
        let mut model =
            Model::load(path).with_context(|| format!("cannot load model {}", path.display()))?;
        if let Some(t) = self.threshold_relation {
            model.relation_threshold = t;
        }
        if let Some(t) = self.threshold_attribute {
            model.attribute_threshold = t;
        }
        Ok(model)
    }

    fn out_dir(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| usage("--out DIR is required"))
    }
}

fn extract_all(
    model: &Model,
    sentences: &[causalkg::Example],
    rectify_too: bool,
) -> Result<Vec<KnowledgeGraph>> {
    let encoder = model.build_encoder()?;
    sentences
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let g = model
                .extract_with(&encoder, &ex.tokens, ex.lemmas.clone())
                .with_context(|| format!("sentence {}", ex.provenance(i)))?
                .with_provenance(ex.provenance(i));
            Ok(if rectify_too {
                rectify(&g, &model.schema)?.0
            } else {
                g
            })
        })
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    let c = &cli.common;
    match cli.command {
        Command::Train { dataset } => {
            let out = c
                .out
                .as_deref()
                .or(c.model.as_deref())
                .ok_or_else(|| usage("train needs --out or --model for the model file"))?;
            let config = c.config()?;
            let schema = c.schema_or(Schema::sciclaim)?;
            let data = causalkg::load_dataset(&dataset)?;
            let (model, history) =
                train_with_history(&data, &schema, &config.encoder, &config.train)?;
            model
                .save(out)
                .with_context(|| format!("cannot write {}", out.display()))?;
            if let Some(last) = history.last() {
                eprintln!(
                    "trained {} epochs on {} examples; final loss {:.6} (entity {:.6}, relation {:.6}, attribute {:.6})",
                    history.len(),
                    data.len(),
                    last.total,
                    last.entity,
                    last.relation,
                    last.attribute
                );
            }
        }
        Command::Eval {
            dataset,
            predicted,
            rectify: rectify_too,
        } => {
            let data = causalkg::load_dataset(&dataset)?;
            let (schema, mut preds) = match &predicted {
                Some(p) => (c.schema_or(Schema::sciclaim)?, io::read_graphs(p)?),
                None => {
                    let model = c.load_model()?;
                    let graphs = extract_all(&model, &data, false)?;
                    (c.schema_or(|| model.schema.clone())?, graphs)
                }
            };
            if rectify_too {
                preds = preds
                    .iter()
                    .map(|g| rectify(g, &schema).map(|r| r.0))
                    .collect::<Result<_, _>>()?;
            }
            let gold = data
                .iter()
                .enumerate()
                .map(|(i, ex)| ex.validate(i, &schema))
                .collect::<Result<Vec<_>, _>>()?;
            let report = score_with_schema(&preds, &gold, &schema)?;
            print!("{}", report.to_table());
            if let Some(out) = &c.out {
                io::write_text(Some(out), &(report.to_json() + "\n"))?;
            }
        }
        Command::Extract {
            sentences,
            rectify: rectify_too,
        } => {
            let model = c.load_model()?;
            let out = c.out_dir()?;
            let data = io::read_sentences(&sentences)?;
            let graphs = extract_all(&model, &data, rectify_too)?;
            let files = io::write_per_graph(out, &model.schema, "json", &graphs, |g| {
                Ok((g.provenance().to_string(), io::to_json(g)?))
            })?;
            eprintln!("wrote {} graphs to {}", files.len(), out.display());
        }
        Command::Rectify { graphs } => {
            let schema = c.schema_or(Schema::sciclaim)?;
            let rendered = io::read_graphs(&graphs)?
                .into_iter()
                .map(|g| {
                    let (fixed, log) = rectify(&g, &schema)?;
                    let text = io::to_json(&RectifiedGraph {
                        graph: fixed.clone(),
                        rectification: log,
                    })?;
                    Ok((fixed, text))
                })
                .collect::<Result<Vec<_>>>()?;
            io::write_graphs(c.out.as_deref(), &schema, &rendered, "json")?;
        }
        Command::Senses {
            graphs,
            inventory,
            glosses,
            skip_list,
            threshold,
        } => {
            if !(0.0..=1.0).contains(&threshold) {
                return Err(usage(format!(
                    "--threshold must lie in [0, 1], got {threshold}"
                )));
            }
            let mut inv = SenseInventory::load(&inventory)?;
            if let Some(p) = glosses {
                inv = inv.load_glosses(&p)?;
            }
            if let Some(p) = skip_list {
                inv = inv.load_skip_list(&p)?;
            }
            let encoder_config = match &c.model {
                Some(_) => c.load_model()?.encoder,
                None => c.config()?.encoder,
            };
            let encoder = Encoder::from_config(&encoder_config)?;
            let schema = c.schema_or(Schema::sciclaim)?;
            let rendered = io::read_graphs(&graphs)?
                .into_iter()
                .map(|g| {
                    let enc = encoder.encode(g.tokens())?;
                    let linked = link_senses(&g, &enc.tokens, &inv, threshold)?;
                    let text = io::to_json(&linked)?;
                    Ok((linked, text))
                })
                .collect::<Result<Vec<_>>>()?;
            io::write_graphs(c.out.as_deref(), &schema, &rendered, "json")?;
        }
        Command::Valence { graphs } => {
            #[derive(Serialize)]
            struct GraphValence {
                provenance: String,
                assertions: Vec<causalkg::ValenceAssertion>,
            }
            let out = io::read_graphs(&graphs)?
                .iter()
                .map(|g| {
                    Ok(GraphValence {
                        provenance: g.provenance().to_string(),
                        assertions: compute_valence(g)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            io::write_text(c.out.as_deref(), &io::to_json(&out)?)?;
        }
        Command::Query {
            query,
            graphs,
            no_lemma_links,
        } => {
            let q = Query::load(&query)?;
            let mut all = Vec::new();
            for p in &graphs {
                all.extend(io::read_graphs(p)?);
            }
            let corpus = merge_corpus(all, !no_lemma_links)?;
            let result = q.run(&corpus)?;
            eprintln!("{} paths", result.paths.len());
            io::write_text(c.out.as_deref(), &io::to_json(&result)?)?;
        }
        Command::Dot { graphs } => {
            let schema = c.schema_or(Schema::sciclaim)?;
            let rendered: Vec<_> = io::read_graphs(&graphs)?
                .into_iter()
                .map(|g| {
                    let dot = emit_dot(&g, &schema);
                    (g, dot)
                })
                .collect();
            io::write_graphs(c.out.as_deref(), &schema, &rendered, "dot")?;
        }
    }
    Ok(())
}

/// The error chain joined by ": ", skipping causes already quoted by their parent.
fn diagnostic(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !last.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
        last = text;
    }
    out
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<Usage>() => {
            eprintln!("error: {e}\n\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {}", diagnostic(&e));
            ExitCode::from(2)
        }
    }
}
