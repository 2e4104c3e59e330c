use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use causalkg::{load_dataset, Example, KnowledgeGraph, Schema};
use serde::{Deserialize, Serialize};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub provenance: String,
    pub file: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: String,
    pub graphs: Vec<ManifestEntry>,
}

/// A built-in schema name or the path of a schema JSON file.
pub fn resolve_schema(name: &str) -> Result<Schema> {
    if let Some(s) = Schema::builtin(name) {
        return Ok(s);
    }
    let text = fs::read_to_string(name).with_context(|| format!("cannot read schema {name}"))?;
    causalkg::load_schema(&text).with_context(|| format!("invalid schema {name}"))
}

/// Sentences from a dataset JSON file or a text file with one
/// whitespace-tokenized sentence per line.
pub fn read_sentences(path: &Path) -> Result<Vec<Example>> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(load_dataset(path)?);
    }
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| Example {
            id: None,
            tokens: l.split_whitespace().map(String::from).collect(),
            lemmas: None,
            entities: vec![],
            attributes: vec![],
            relations: vec![],
        })
        .collect())
}

fn read_graph(path: &Path) -> Result<KnowledgeGraph> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("invalid graph file {}", path.display()))
}

/// Graphs named by `path`: a graph file, a manifest, or a directory holding a manifest.
pub fn read_graphs(path: &Path) -> Result<Vec<KnowledgeGraph>> {
    let manifest = if path.is_dir() {
        path.join(MANIFEST)
    } else if path.file_name().is_some_and(|n| n == MANIFEST) {
        path.to_path_buf()
    } else {
        return Ok(vec![read_graph(path)?]);
    };
    let text = fs::read_to_string(&manifest)
        .with_context(|| format!("cannot read {}", manifest.display()))?;
    let m: Manifest = serde_json::from_str(&text)
        .with_context(|| format!("invalid manifest {}", manifest.display()))?;
    let dir = manifest.parent().unwrap_or(Path::new("."));
    m.graphs
        .iter()
        .map(|e| read_graph(&dir.join(&e.file)))
        .collect()
}

fn file_stem(index: usize, provenance: &str) -> String {
    let clean: String = provenance
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    format!("{index:04}-{clean}")
}

pub fn write_text(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Writes one file per item into `dir` plus a manifest. `render` yields the
/// provenance and file contents of each item.
pub fn write_per_graph<T>(
    dir: &Path,
    schema: &Schema,
    extension: &str,
    items: &[T],
    render: impl Fn(&T) -> Result<(String, String)>,
) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut entries = Vec::with_capacity(items.len());
    let mut written = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let (provenance, contents) = render(item)?;
        let file = format!("{}.{extension}", file_stem(i, &provenance));
        let path = dir.join(&file);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        entries.push(ManifestEntry { provenance, file });
        written.push(path);
    }
    let manifest = Manifest {
        schema: schema.name().to_string(),
        graphs: entries,
    };
    let path = dir.join(MANIFEST);
    fs::write(&path, to_json(&manifest)?)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(written)
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

/// Single output goes to `out` (or stdout); several need `out` to be a directory.
pub fn write_graphs(
    out: Option<&Path>,
    schema: &Schema,
    graphs: &[(KnowledgeGraph, String)],
    extension: &str,
) -> Result<()> {
    match graphs {
        [(_, text)] => write_text(out, text),
        _ => {
            let Some(dir) = out else {
                bail!("--out DIR is required when the input holds several graphs");
            };
            write_per_graph(dir, schema, extension, graphs, |(g, text)| {
                Ok((g.provenance().to_string(), text.clone()))
            })?;
            Ok(())
        }
    }
}
