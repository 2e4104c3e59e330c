//! Contextual token encoders.
//!
//! The extraction model consumes one vector per word token plus a passage
//! vector. Two encoders are provided: a deterministic synthetic encoder built
//! from seeded hash vectors mixed over a small context window, and a lookup
//! encoder backed by a precomputed embedding file.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty token sequence")]
    EmptyInput,
    #[error("token {0:?} is not in the embedding table")]
    OutOfVocabulary(String),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("embedding file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("cannot read embedding file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    Synthetic,
    File,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub dimension: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub context_window: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_path: Option<PathBuf>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::Synthetic,
            dimension: 64,
            seed: 0,
            context_window: 2,
            embedding_path: None,
        }
    }
}

impl EncoderConfig {
    pub fn synthetic(dimension: usize, seed: u64, context_window: usize) -> Self {
        Self {
            kind: EncoderKind::Synthetic,
            dimension,
            seed,
            context_window,
            embedding_path: None,
        }
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.dimension < 2 {
            return Err(EncoderError::InvalidConfig(format!(
                "dimension must be at least 2, got {}",
                self.dimension
            )));
        }
        if self.kind == EncoderKind::File && self.embedding_path.is_none() {
            return Err(EncoderError::InvalidConfig(
                "file encoder needs embedding_path".into(),
            ));
        }
        Ok(())
    }
}

/// Passage vector plus one contextual vector per token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEncoding {
    pub passage: Vec<f64>,
    pub tokens: Vec<Vec<f64>>,
}

impl TokenEncoding {
    pub fn dimension(&self) -> usize {
        self.passage.len()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

pub trait TokenEncoder {
    fn dimension(&self) -> usize;
    fn encode(&self, tokens: &[String]) -> Result<TokenEncoding, EncoderError>;
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| {
        (h ^ u64::from(b)).wrapping_mul(FNV_PRIME)
    })
}

fn splitmix_next(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN_GAMMA);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded hash vector of a token: FNV-1a of its UTF-8 bytes, mixed with the
/// seed, expanded by splitmix64 into components uniform on `[-1, 1)`, then
/// scaled to unit length.
pub fn hash_unit_vector(token: &str, seed: u64, dimension: usize) -> Vec<f64> {
    let mut state = fnv1a(token.as_bytes()) ^ seed.wrapping_mul(GOLDEN_GAMMA);
    let mut v: Vec<f64> = (0..dimension)
        .map(|_| {
            let bits = splitmix_next(&mut state) >> 11;
            2.0 * (bits as f64 / (1u64 << 53) as f64) - 1.0
        })
        .collect();
    if !normalize(&mut v) {
        v[0] = 1.0;
    }
    v
}

/// Scales `v` to unit length; returns false if it is all zeros.
pub(crate) fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

fn mean(vectors: &[Vec<f64>], dimension: usize) -> Vec<f64> {
    let mut out = vec![0.0; dimension];
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|x| *x /= n);
    out
}

#[derive(Debug, Clone)]
pub struct SyntheticEncoder {
    dimension: usize,
    seed: u64,
    context_window: usize,
}

impl SyntheticEncoder {
    pub fn new(dimension: usize, seed: u64, context_window: usize) -> Self {
        Self {
            dimension,
            seed,
            context_window,
        }
    }
}

impl TokenEncoder for SyntheticEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, tokens: &[String]) -> Result<TokenEncoding, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let base: Vec<Vec<f64>> = tokens
            .iter()
            .map(|t| hash_unit_vector(t, self.seed, self.dimension))
            .collect();
        let n = tokens.len();
        let w = self.context_window;
        let contextual: Vec<Vec<f64>> = (0..n)
            .map(|t| {
                let mut v = vec![0.0; self.dimension];
                let lo = t.saturating_sub(w);
                for (j, h) in base.iter().enumerate().take((t + w + 1).min(n)).skip(lo) {
                    let weight = 0.5f64.powi(t.abs_diff(j) as i32);
                    for (o, x) in v.iter_mut().zip(h) {
                        *o += weight * x;
                    }
                }
                if !normalize(&mut v) {
                    v.clone_from(&base[t]);
                }
                v
            })
            .collect();
        Ok(TokenEncoding {
            passage: mean(&contextual, self.dimension),
            tokens: contextual,
        })
    }
}

/// Context-free lookup into a precomputed embedding table.
#[derive(Debug, Clone)]
pub struct FileEncoder {
    dimension: usize,
    table: HashMap<String, Vec<f64>>,
}

impl FileEncoder {
    pub fn load(path: &Path, dimension: usize) -> Result<Self, EncoderError> {
        let text = fs::read_to_string(path).map_err(|source| EncoderError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, dimension)
    }

    /// Parses `token f1 ... fd` records, one per line. Blank lines are skipped.
    pub fn parse(text: &str, dimension: usize) -> Result<Self, EncoderError> {
        let mut table = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let parse_err = |message: String| EncoderError::Parse {
                line: i + 1,
                message,
            };
            let values = fields
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|e| parse_err(format!("{f:?}: {e}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != dimension {
                return Err(parse_err(format!(
                    "expected {dimension} values, found {}",
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(parse_err("non-finite value".into()));
            }
            if table.insert(token.to_string(), values).is_some() {
                return Err(parse_err(format!("duplicate token {token:?}")));
            }
        }
        Ok(Self { dimension, table })
    }
}

impl TokenEncoder for FileEncoder {
    fn dimension(&self) -> usize {
        self.dimension
    }

    fn encode(&self, tokens: &[String]) -> Result<TokenEncoding, EncoderError> {
        if tokens.is_empty() {
            return Err(EncoderError::EmptyInput);
        }
        let vectors = tokens
            .iter()
            .map(|t| {
                self.table
                    .get(t)
                    .cloned()
                    .ok_or_else(|| EncoderError::OutOfVocabulary(t.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TokenEncoding {
            passage: mean(&vectors, self.dimension),
            tokens: vectors,
        })
    }
}

#[derive(Debug, Clone)]
pub enum Encoder {
    Synthetic(SyntheticEncoder),
    File(FileEncoder),
}

impl Encoder {
    pub fn from_config(config: &EncoderConfig) -> Result<Self, EncoderError> {
        config.validate()?;
        Ok(match config.kind {
            EncoderKind::Synthetic => Encoder::Synthetic(SyntheticEncoder::new(
                config.dimension,
                config.seed,
                config.context_window,
            )),
            EncoderKind::File => {
                let path = config.embedding_path.as_deref().expect("validated");
                Encoder::File(FileEncoder::load(path, config.dimension)?)
            }
        })
    }
}

impl TokenEncoder for Encoder {
    fn dimension(&self) -> usize {
        match self {
            Encoder::Synthetic(e) => e.dimension(),
            Encoder::File(e) => e.dimension(),
        }
    }

    fn encode(&self, tokens: &[String]) -> Result<TokenEncoding, EncoderError> {
        match self {
            Encoder::Synthetic(e) => e.encode(tokens),
            Encoder::File(e) => e.encode(tokens),
        }
    }
}

pub fn encode_tokens(
    tokens: &[String],
    config: &EncoderConfig,
) -> Result<TokenEncoding, EncoderError> {
    Encoder::from_config(config)?.encode(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    /// Written separately from the library path: byte loop over FNV-1a, then
    /// splitmix64 with the state advanced before each output, using u128
    /// arithmetic for the multiplications.
    fn reference_hash_vector(token: &str, seed: u64, d: usize) -> Vec<f64> {
        let mask = u128::from(u64::MAX);
        let mut h: u128 = 14695981039346656037;
        for b in token.bytes() {
            h ^= u128::from(b);
            h = (h * 1099511628211) & mask;
        }
        let gamma: u128 = 11400714819323198485;
        let mut state = (h as u64) ^ ((u128::from(seed) * gamma) & mask) as u64;
        let mut raw = Vec::new();
        for _ in 0..d {
            state = ((u128::from(state) + gamma) & mask) as u64;
            let mut z = u128::from(state);
            z = ((z ^ (z >> 30)) * 13787848793156543929) & mask;
            z = ((z ^ (z >> 27)) * 10723151780598845931) & mask;
            z ^= z >> 31;
            let top53 = (z >> 11) as f64;
            raw.push(top53 / 9007199254740992.0 * 2.0 - 1.0);
        }
        let norm: f64 = raw.iter().map(|x| x * x).sum::<f64>().sqrt();
        raw.into_iter().map(|x| x / norm).collect()
    }

    #[test]
    fn hash_vector_matches_reference() {
        let got = hash_unit_vector("cat", 7, 8);
        let want = reference_hash_vector("cat", 7, 8);
        assert_eq!(got, want);
        for (token, seed) in [("", 0), ("Movement", 3), ("naïve", u64::MAX)] {
            assert_eq!(
                hash_unit_vector(token, seed, 16),
                reference_hash_vector(token, seed, 16)
            );
        }
    }

    #[test]
    fn encoding_is_deterministic() {
        let cfg = EncoderConfig::synthetic(16, 3, 2);
        let t = toks("sleep reduces stress in adults");
        assert_eq!(
            encode_tokens(&t, &cfg).unwrap(),
            encode_tokens(&t, &cfg).unwrap()
        );
    }

    #[test]
    fn zero_window_gives_base_vectors() {
        let cfg = EncoderConfig::synthetic(16, 1, 0);
        let t = toks("a b a");
        let enc = encode_tokens(&t, &cfg).unwrap();
        for (v, tok) in enc.tokens.iter().zip(&t) {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
            for (a, b) in v.iter().zip(hash_unit_vector(tok, 1, 16)) {
                assert!((a - b).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn context_changes_vectors() {
        let cfg = EncoderConfig::synthetic(32, 0, 2);
        let enc = encode_tokens(&toks("bank of the river bank loan approved"), &cfg).unwrap();
        assert_ne!(enc.tokens[0], enc.tokens[4]);
    }

    #[test]
    fn window_weights_halve_with_distance() {
        let cfg = EncoderConfig::synthetic(8, 5, 1);
        let t = toks("x y z");
        let enc = encode_tokens(&t, &cfg).unwrap();
        let b: Vec<_> = t.iter().map(|s| hash_unit_vector(s, 5, 8)).collect();
        let mut want: Vec<f64> = (0..8)
            .map(|i| 0.5 * b[0][i] + b[1][i] + 0.5 * b[2][i])
            .collect();
        normalize(&mut want);
        for (g, w) in enc.tokens[1].iter().zip(&want) {
            assert!((g - w).abs() < 1e-12);
        }
        let passage: Vec<f64> = (0..8)
            .map(|i| enc.tokens.iter().map(|v| v[i]).sum::<f64>() / 3.0)
            .collect();
        assert_eq!(enc.passage, passage);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(
            encode_tokens(&[], &EncoderConfig::default()),
            Err(EncoderError::EmptyInput)
        ));
    }

    #[test]
    fn file_encoder_reproduces_table() {
        let text = "cat 0.5 -1.25 3\ndog 1e-3 0 -0.0\n\n";
        let enc = FileEncoder::parse(text, 3).unwrap();
        let out = enc.encode(&toks("dog cat")).unwrap();
        assert_eq!(
            out.tokens,
            vec![vec![1e-3, 0.0, -0.0], vec![0.5, -1.25, 3.0]]
        );
        assert!(
            matches!(enc.encode(&toks("cow")), Err(EncoderError::OutOfVocabulary(t)) if t == "cow")
        );
        assert!(matches!(
            FileEncoder::parse("cat 1 2", 3),
            Err(EncoderError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn file_encoder_from_config() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.txt");
        std::fs::write(&path, "a 1 0\nb 0 1\n").unwrap();
        let cfg = EncoderConfig {
            kind: EncoderKind::File,
            dimension: 2,
            seed: 0,
            context_window: 0,
            embedding_path: Some(path),
        };
        let out = encode_tokens(&toks("a b"), &cfg).unwrap();
        assert_eq!(out.passage, vec![0.5, 0.5]);
    }

    #[test]
    fn tiny_dimension_is_invalid() {
        let cfg = EncoderConfig::synthetic(1, 0, 0);
        assert!(matches!(
            encode_tokens(&toks("a"), &cfg),
            Err(EncoderError::InvalidConfig(_))
        ));
    }
}
