//! Differentiable document encoders built from engine primitives.
//!
//! `mean_pool` averages the word vectors. `tiny_attention` runs one
//! single-head self-attention block and exposes how much attention each word
//! receives, averaged over the query rows.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Graph, Shape, ValueRef};

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error("cannot encode an empty document")]
    EmptyDocument,
    #[error("{0}")]
    Config(String),
    #[error("parameter {name}: expected {expected_rows}x{expected_cols}, got {rows}x{cols}")]
    ParamShape { name: &'static str, expected_rows: usize, expected_cols: usize, rows: usize, cols: usize },
    #[error("cannot read parameter file {path}: {message}")]
    ParamFile { path: String, message: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    MeanPool,
    TinyAttention,
}

/// Dense row-major matrix used for encoder parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }
}

/// Attention parameters: `wq`, `wk`, `wv` are e×e and `wo` is e×h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    pub e: usize,
    pub h: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<AttentionParams>,
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.e == 0 || self.h == 0 {
            return Err(EncoderError::Config("encoder dimensions must be positive".into()));
        }
        match (self.kind, &self.params) {
            (EncoderKind::MeanPool, _) if self.h != self.e => {
                Err(EncoderError::Config(format!("mean_pool requires h = e, got h={} e={}", self.h, self.e)))
            }
            (EncoderKind::MeanPool, _) => Ok(()),
            (EncoderKind::TinyAttention, None) => Err(EncoderError::Config("tiny_attention requires parameters".into())),
            (EncoderKind::TinyAttention, Some(p)) => {
                let checks = [("wq", &p.wq, self.e, self.e), ("wk", &p.wk, self.e, self.e), ("wv", &p.wv, self.e, self.e), ("wo", &p.wo, self.e, self.h)];
                for (name, m, r, c) in checks {
                    if m.rows != r || m.cols != c || m.data.len() != r * c {
                        return Err(EncoderError::ParamShape { name, expected_rows: r, expected_cols: c, rows: m.rows, cols: m.cols });
                    }
                    if m.data.iter().any(|v| !v.is_finite()) {
                        return Err(EncoderError::Config(format!("parameter {name} has non-finite entries")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// Seeded parameters drawn uniformly from `[-1/sqrt(e), 1/sqrt(e)]`.
pub fn init_params(kind: EncoderKind, e: usize, h: usize, seed: u64) -> Result<EncoderConfig, EncoderError> {
    if e == 0 || h == 0 {
        return Err(EncoderError::Config("encoder dimensions must be positive".into()));
    }
    let params = match kind {
        EncoderKind::MeanPool => None,
        EncoderKind::TinyAttention => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let bound = 1.0 / (e as f64).sqrt();
            let mut draw = |rows: usize, cols: usize| Matrix {
                rows,
                cols,
                data: (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect(),
            };
            Some(AttentionParams { wq: draw(e, e), wk: draw(e, e), wv: draw(e, e), wo: draw(e, h) })
        }
    };
    let cfg = EncoderConfig { kind, e, h, seed, params };
    cfg.validate()?;
    Ok(cfg)
}

/// Load attention parameters from JSON (`{"wq": {"rows":..,"cols":..,"data":[..]}, ...}`).
pub fn load_params(path: impl AsRef<Path>, cfg: &EncoderConfig) -> Result<AttentionParams, EncoderError> {
    let path = path.as_ref();
    let err = |message: String| EncoderError::ParamFile { path: path.display().to_string(), message };
    let text = fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let params: AttentionParams = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    EncoderConfig { params: Some(params.clone()), ..cfg.clone() }.validate()?;
    Ok(params)
}

#[derive(Debug, Clone)]
pub struct EncodeResult {
    /// vector(h)
    pub embedding: ValueRef,
    /// Per-word received attention; sums to one. Only for `tiny_attention`.
    pub attention: Option<Vec<f64>>,
}

pub fn encode(graph: &mut Graph, x: ValueRef, cfg: &EncoderConfig) -> Result<EncodeResult, EncoderError> {
    match cfg.kind {
        EncoderKind::MeanPool => encode_mean_pool(graph, x),
        EncoderKind::TinyAttention => encode_tiny_attention(graph, x, cfg),
    }
}

fn rows_of(x: &ValueRef) -> Result<(usize, usize), EncoderError> {
    match x.shape() {
        Shape::Matrix(0, _) => Err(EncoderError::EmptyDocument),
        Shape::Matrix(d, e) => Ok((d, e)),
        other => Err(EncoderError::Config(format!("expected a d×e token matrix, got {other}"))),
    }
}

pub fn encode_mean_pool(graph: &mut Graph, x: ValueRef) -> Result<EncodeResult, EncoderError> {
    rows_of(&x)?;
    let embedding = graph.mean_rows(x)?;
    Ok(EncodeResult { embedding, attention: None })
}

pub fn encode_tiny_attention(graph: &mut Graph, x: ValueRef, cfg: &EncoderConfig) -> Result<EncodeResult, EncoderError> {
    if cfg.kind != EncoderKind::TinyAttention {
        return Err(EncoderError::Config("configuration is not tiny_attention".into()));
    }
    cfg.validate()?;
    let (_, e) = rows_of(&x)?;
    if e != cfg.e {
        return Err(EncoderError::Config(format!("token vectors have dimension {e}, encoder expects {}", cfg.e)));
    }
    let p = cfg.params.as_ref().expect("validated");
    let mut constant = |m: &Matrix| graph.constant(m.data.clone(), Shape::Matrix(m.rows, m.cols));
    let (wq, wk, wv, wo) = (constant(&p.wq)?, constant(&p.wk)?, constant(&p.wv)?, constant(&p.wo)?);

    let q = graph.matmul(x, wq)?;
    let k = graph.matmul(x, wk)?;
    let v = graph.matmul(x, wv)?;
    let kt = graph.transpose(k)?;
    let logits = graph.matmul(q, kt)?;
    let logits = graph.scale(logits, 1.0 / (e as f64).sqrt())?;
    let scores = graph.softmax_rows(logits)?;
    let context = graph.matmul(scores, v)?;
    let out = graph.matmul(context, wo)?;
    let embedding = graph.mean_rows(out)?;

    let attention = column_means(graph.value(&scores), scores.shape());
    Ok(EncodeResult { embedding, attention: Some(attention) })
}

fn column_means(values: &[f64], shape: Shape) -> Vec<f64> {
    let (r, c) = (shape.rows(), shape.cols());
    let mut out = vec![0.0; c];
    for i in 0..r {
        for (o, v) in out.iter_mut().zip(&values[i * c..(i + 1) * c]) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= r as f64);
    out
}
