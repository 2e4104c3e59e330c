#[path = "../../core/tests/common/dot_check.rs"]
mod dot_check;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const DATASET: &str = r#"[
  {"id": "c1", "tokens": ["exercise", "improves", "sleep", "quality", "."],
   "entities": [{"start": 0, "end": 1, "type": "factor"}, {"start": 1, "end": 2, "type": "association"}, {"start": 2, "end": 4, "type": "factor"}],
   "attributes": [{"entity": 1, "type": "causation"}, {"entity": 1, "type": "sign+"}],
   "relations": [{"head": 1, "tail": 0, "type": "arg0"}, {"head": 1, "tail": 2, "type": "arg1"}, {"head": 0, "tail": 2, "type": "q+"}]},
  {"id": "c2", "tokens": ["stress", "predicts", "fatigue", "."],
   "entities": [{"start": 0, "end": 1, "type": "factor"}, {"start": 1, "end": 2, "type": "association"}, {"start": 2, "end": 3, "type": "factor"}],
   "attributes": [{"entity": 1, "type": "indicates"}],
   "relations": [{"head": 1, "tail": 0, "type": "arg0"}, {"head": 1, "tail": 2, "type": "arg1"}]}
]"#;

const CONFIG: &str = r#"{"train": {"epochs": 60, "learning_rate": 3.0}, "encoder": {"kind": "synthetic", "dimension": 16, "context_window": 2}}"#;

const DISGRACE: &str = r#"{
  "tokens": ["Please", "do", "n't", "disgrace", "the", "man", "."],
  "provenance": "disgrace",
  "entities": [
    {"id": 0, "start": 3, "end": 4, "type": "element", "confidence": 1.0,
     "attributes": [{"type": "prescribed", "confidence": 1.0}, {"type": "negated", "confidence": 1.0}]},
    {"id": 1, "start": 5, "end": 6, "type": "element", "confidence": 1.0}
  ],
  "relations": [{"head": 0, "tail": 1, "type": "object", "confidence": 1.0}]
}"#;

fn causalkg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_causalkg"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("data.json"), DATASET).unwrap();
    fs::write(dir.path().join("config.json"), CONFIG).unwrap();
    fs::write(
        dir.path().join("sentences.txt"),
        "exercise improves sleep quality .\nstress predicts fatigue .\n",
    )
    .unwrap();
    dir
}

/// Runs train, extract, rectify and dot into `run/` and returns every file written.
fn pipeline(dir: &Path, run: &str) -> Vec<(PathBuf, Vec<u8>)> {
    let model = format!("{run}/model.json");
    fs::create_dir_all(dir.join(run)).unwrap();
    let steps: [Vec<String>; 4] = [
        vec![
            "train".into(),
            "data.json".into(),
            "--config".into(),
            "config.json".into(),
            "--seed".into(),
            "7".into(),
            "--out".into(),
            model.clone(),
        ],
        vec![
            "extract".into(),
            "sentences.txt".into(),
            "--model".into(),
            model,
            "--out".into(),
            format!("{run}/graphs"),
        ],
        vec![
            "rectify".into(),
            format!("{run}/graphs"),
            "--out".into(),
            format!("{run}/rectified"),
        ],
        vec![
            "dot".into(),
            format!("{run}/rectified"),
            "--out".into(),
            format!("{run}/dot"),
        ],
    ];
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let o = causalkg(dir, &args);
        assert!(o.status.success(), "{step:?}: {}", stderr(&o));
    }
    let mut files = Vec::new();
    let mut stack = vec![dir.join(run)];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.push((
                    p.strip_prefix(dir.join(run)).unwrap().to_path_buf(),
                    fs::read(&p).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn extract_and_dot_produce_valid_files() {
    let dir = setup();
    let files = pipeline(dir.path(), "a");
    let graphs: Vec<_> = files
        .iter()
        .filter(|(p, _)| p.starts_with("graphs") && !p.ends_with("manifest.json"))
        .collect();
    assert_eq!(graphs.len(), 2);
    let dots: Vec<_> = files
        .iter()
        .filter(|(p, _)| p.extension().is_some_and(|e| e == "dot"))
        .collect();
    assert_eq!(dots.len(), 2);
    for (p, bytes) in dots {
        let text = String::from_utf8(bytes.clone()).unwrap();
        dot_check::check_dot(&text).unwrap_or_else(|e| panic!("{}: {e}\n{text}", p.display()));
    }
    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a/graphs/manifest.json")).unwrap())
            .unwrap();
    assert_eq!(manifest["schema"], "sciclaim");
    assert_eq!(manifest["graphs"].as_array().unwrap().len(), 2);
}

#[test]
fn seeded_runs_are_byte_identical() {
    let dir = setup();
    let a = pipeline(dir.path(), "a");
    let b = pipeline(dir.path(), "b");
    assert_eq!(a.len(), b.len());
    for ((pa, ba), (pb, bb)) in a.iter().zip(&b) {
        assert_eq!(pa, pb);
        assert!(ba == bb, "{} differs", pa.display());
    }
}

#[test]
fn eval_prints_table() {
    let dir = setup();
    pipeline(dir.path(), "a");
    let o = causalkg(
        dir.path(),
        &[
            "eval",
            "data.json",
            "--model",
            "a/model.json",
            "--out",
            "report.json",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = String::from_utf8(o.stdout).unwrap();
    assert!(table.contains("Micro-Averaged"));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report["relations"]["micro"].is_object());
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let dir = setup();
    let o = causalkg(dir.path(), &["frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let dir = setup();
    let o = causalkg(dir.path(), &["extract", "sentences.txt", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"));
    assert!(!dir.path().join("x").exists());
}

#[test]
fn undeclared_type_is_a_data_error() {
    let dir = setup();
    fs::write(
        dir.path().join("bad.json"),
        DATASET.replace("\"indicates\"", "\"suggests\""),
    )
    .unwrap();
    let o = causalkg(
        dir.path(),
        &[
            "train",
            "bad.json",
            "--config",
            "config.json",
            "--out",
            "m.json",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("suggests"), "{}", stderr(&o));
    assert!(!dir.path().join("m.json").exists());
}

#[test]
fn help_exits_cleanly() {
    let dir = setup();
    let o = causalkg(dir.path(), &["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("extract"));
}

#[test]
fn valence_and_query_on_ethno_graphs() {
    let dir = setup();
    fs::write(dir.path().join("disgrace.json"), DISGRACE).unwrap();
    let o = causalkg(dir.path(), &["valence", "disgrace.json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let assertions = v[0]["assertions"].as_array().unwrap();
    assert_eq!(assertions.len(), 2);
    assert!(assertions
        .iter()
        .all(|a| a["holder"] == "NORM" && a["sign"] == "-"));

    fs::write(
        dir.path().join("q.json"),
        r#"{"start": {"lemma_any_of": ["disgrace"]}, "end": {"lemma_any_of": ["man"]}}"#,
    )
    .unwrap();
    let o = causalkg(
        dir.path(),
        &["query", "q.json", "disgrace.json", "--out", "paths.json"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("paths.json")).unwrap()).unwrap();
    assert_eq!(r["paths"].as_array().unwrap().len(), 1);

    let o = causalkg(dir.path(), &["dot", "disgrace.json", "--schema", "ethno"]);
    assert!(o.status.success());
    let dot = String::from_utf8(o.stdout).unwrap();
    dot_check::check_dot(&dot).unwrap();
    assert!(dot.contains("disgrace (prescribed, negated)"));
}

#[test]
fn valence_rejects_sciclaim_graphs() {
    let dir = setup();
    pipeline(dir.path(), "a");
    let o = causalkg(dir.path(), &["valence", "a/graphs"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn senses_link_nodes_from_inventory() {
    let dir = setup();
    fs::write(dir.path().join("disgrace.json"), DISGRACE).unwrap();
    fs::write(
        dir.path().join("inv.tsv"),
        "a\tdisgrace\t-\t1\t0\t0\t0\nb\tman\ta\t0\t1\t0\t0\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"encoder": {"kind": "synthetic", "dimension": 4}}"#,
    )
    .unwrap();
    let o = causalkg(
        dir.path(),
        &[
            "senses",
            "disgrace.json",
            "--inventory",
            "inv.tsv",
            "--config",
            "cfg.json",
            "--threshold",
            "0",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let g: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for e in g["entities"].as_array().unwrap() {
        let confidences: Vec<f64> = e["senses"]
            .as_array()
            .unwrap()
            .iter()
            .map(|s| s["confidence"].as_f64().unwrap())
            .collect();
        assert!(confidences.iter().all(|&c| c > 0.0 && c <= 1.0));
        assert!(confidences.windows(2).all(|w| w[0] >= w[1]));
    }
    let o = causalkg(
        dir.path(),
        &[
            "senses",
            "disgrace.json",
            "--inventory",
            "inv.tsv",
            "--config",
            "cfg.json",
            "--threshold=1.5",
        ],
    );
    assert_eq!(o.status.code(), Some(1));
    let o = causalkg(
        dir.path(),
        &["senses", "disgrace.json", "--inventory", "inv.tsv"],
    );
    assert_eq!(o.status.code(), Some(2), "dimension mismatch expected");
}
