//! Dimensionality reduction recorded on the tape.
//!
//! Both reducers unroll their iterations on the caller's [`Graph`], so a
//! backward pass from a projected coordinate reaches the embeddings (and,
//! through the encoder, the word vectors). Random initial layouts and t-SNE
//! bandwidths enter as constants.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Graph, Shape, ValueRef};

const INIT_SPREAD: f64 = 1e-2;
const P_FLOOR: f64 = 1e-12;
const MASKED_LOGIT: f64 = -1e30;

#[derive(Debug, Error)]
pub enum ProjectorError {
    #[error("{method} needs at least {min} points, got {n}")]
    TooFewPoints { method: &'static str, min: usize, n: usize },
    #[error("perplexity {perplexity} outside [1, {max}]")]
    Perplexity { perplexity: f64, max: f64 },
    #[error("perplexity calibration failed for row {row}: reached {reached:.6}, target {target}")]
    Calibration { row: usize, reached: f64, target: f64 },
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectorKind {
    #[default]
    Mds,
    Tsne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdsConfig {
    pub iterations: usize,
    /// Stop once the stress decrease falls below this; `None` runs every iteration.
    pub tol: Option<f64>,
}

impl Default for MdsConfig {
    fn default() -> Self {
        Self { iterations: 300, tol: Some(1e-9) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    /// Defaults to `min(30, (n - 1) / 3)`.
    pub perplexity: Option<f64>,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    /// Bandwidths to reuse instead of calibrating.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fixed_sigmas: Option<Vec<f64>>,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: None,
            iterations: 250,
            early_exaggeration: 4.0,
            exaggeration_iterations: 50,
            learning_rate: 100.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 100,
            fixed_sigmas: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectorConfig {
    pub kind: ProjectorKind,
    pub seed: u64,
    pub mds: MdsConfig,
    pub tsne: TsneConfig,
}

impl ProjectorConfig {
    pub fn mds(seed: u64) -> Self {
        Self { kind: ProjectorKind::Mds, seed, ..Default::default() }
    }

    pub fn tsne(seed: u64) -> Self {
        Self { kind: ProjectorKind::Tsne, seed, ..Default::default() }
    }

    /// Configuration that replays `run` exactly: same iteration count, no
    /// early stopping and the same t-SNE bandwidths. Reruns on perturbed
    /// inputs then follow the same control flow.
    pub fn pinned(&self, run: &Projection) -> Self {
        let mut cfg = self.clone();
        match self.kind {
            ProjectorKind::Mds => {
                cfg.mds.iterations = run.executed_iterations;
                cfg.mds.tol = None;
            }
            ProjectorKind::Tsne => {
                cfg.tsne.iterations = run.executed_iterations;
                cfg.tsne.fixed_sigmas = run.sigmas.clone();
            }
        }
        cfg
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    /// matrix(n, 2)
    pub coords: ValueRef,
    /// Stress (MDS) or KL divergence (t-SNE), one entry per executed iteration.
    pub trace: Vec<f64>,
    pub executed_iterations: usize,
    pub sigmas: Option<Vec<f64>>,
}

impl Projection {
    pub fn points(&self, graph: &Graph) -> Vec<[f64; 2]> {
        graph.value(&self.coords).chunks(2).map(|c| [c[0], c[1]]).collect()
    }
}

pub fn project(graph: &mut Graph, embeddings: ValueRef, cfg: &ProjectorConfig) -> Result<Projection, ProjectorError> {
    match cfg.kind {
        ProjectorKind::Mds => mds_smacof(graph, embeddings, cfg),
        ProjectorKind::Tsne => tsne(graph, embeddings, cfg),
    }
}

fn point_count(e: &ValueRef) -> Result<usize, ProjectorError> {
    match e.shape() {
        Shape::Matrix(n, _) => Ok(n),
        other => Err(ProjectorError::Config(format!("embeddings must be a matrix, got {other}"))),
    }
}

fn initial_layout(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * 2).map(|_| rng.gen_range(-INIT_SPREAD..=INIT_SPREAD)).collect()
}

fn off_diagonal(n: usize, on: f64, off: f64) -> Vec<f64> {
    let mut m = vec![off; n * n];
    for i in 0..n {
        m[i * n + i] = on;
    }
    m
}

/// Raw stress: sum over pairs of squared differences between layout and
/// target distances.
pub fn stress(points: &[f64], target: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = points[2 * i] - points[2 * j];
            let dy = points[2 * i + 1] - points[2 * j + 1];
            let r = (dx * dx + dy * dy).sqrt() - target[i * n + j];
            s += r * r;
        }
    }
    s
}

/// Metric MDS by SMACOF with unit weights.
///
/// Each Guttman transform `X <- B(X) X / n` is recorded, where
/// `B = diag(rowsum R) - R` and `R_ij = delta_ij / d_ij(X)`.
pub fn mds_smacof(graph: &mut Graph, embeddings: ValueRef, cfg: &ProjectorConfig) -> Result<Projection, ProjectorError> {
    let n = point_count(&embeddings)?;
    if n < 2 {
        return Err(ProjectorError::TooFewPoints { method: "mds", min: 2, n });
    }
    if cfg.mds.iterations == 0 {
        return Err(ProjectorError::Config("mds iterations must be at least 1".into()));
    }

    let mask = graph.constant(off_diagonal(n, 0.0, 1.0), Shape::Matrix(n, n))?;
    let ones = graph.constant(vec![1.0; n * 2], Shape::Matrix(n, 2))?;
    let hd_sq = graph.pairwise_sq_dist(embeddings)?;
    let hd = graph.sqrt_safe(hd_sq)?;
    let delta = graph.mul(hd, mask)?;

    let mut x = graph.constant(initial_layout(n, cfg.seed), Shape::Matrix(n, 2))?;
    let mut previous = stress(graph.value(&x), graph.value(&delta), n);
    let mut trace = Vec::with_capacity(cfg.mds.iterations);

    for _ in 0..cfg.mds.iterations {
        let d_sq = graph.pairwise_sq_dist(x)?;
        let d = graph.sqrt_safe(d_sq)?;
        let inv = graph.reciprocal_safe(d)?;
        let ratio = graph.mul(delta, inv)?;
        // diag(rowsum R) X via (R 1) * X
        let row_totals = graph.matmul(ratio, ones)?;
        let diag_part = graph.mul(row_totals, x)?;
        let off_part = graph.matmul(ratio, x)?;
        let b_x = graph.sub(diag_part, off_part)?;
        x = graph.scale(b_x, 1.0 / n as f64)?;

        let current = stress(graph.value(&x), graph.value(&delta), n);
        trace.push(current);
        if let Some(tol) = cfg.mds.tol {
            if previous - current < tol {
                break;
            }
        }
        previous = current;
    }

    Ok(Projection { coords: x, executed_iterations: trace.len(), trace, sigmas: None })
}

/// Conditional neighbour probabilities and the bandwidths that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    /// n×n, rows sum to one, zero diagonal.
    pub conditional: Vec<f64>,
    pub sigmas: Vec<f64>,
}

fn gaussian_row(d_sq: &[f64], row: usize, beta: f64, out: &mut [f64]) {
    let mut max = f64::NEG_INFINITY;
    for (j, d) in d_sq.iter().enumerate() {
        if j != row {
            max = max.max(-beta * d);
        }
    }
    let mut total = 0.0;
    for (j, d) in d_sq.iter().enumerate() {
        out[j] = if j == row { 0.0 } else { (-beta * d - max).exp() };
        total += out[j];
    }
    out.iter_mut().for_each(|p| *p /= total);
}

/// Shannon entropy in bits.
pub fn entropy_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|v| **v > 0.0).map(|v| v * v.log2()).sum::<f64>()
}

/// Binary search each row's bandwidth so `2^H(P_i)` hits the target.
///
/// The search runs geometrically over `sigma in [1e-20, 1e20]` for at most
/// 50 steps and accepts a row once its perplexity is within `1e-5`.
pub fn calibrate_perplexity(d_sq: &[f64], n: usize, target: f64) -> Result<Calibration, ProjectorError> {
    assert_eq!(d_sq.len(), n * n, "distance matrix must be n×n");
    if n < 2 || !(1.0..=(n - 1) as f64).contains(&target) {
        return Err(ProjectorError::Perplexity { perplexity: target, max: n.saturating_sub(1) as f64 });
    }
    let mut conditional = vec![0.0; n * n];
    let mut sigmas = vec![0.0; n];
    for i in 0..n {
        let row = &d_sq[i * n..(i + 1) * n];
        let out = &mut conditional[i * n..(i + 1) * n];
        let (mut lo, mut hi) = (1e-20f64.ln(), 1e20f64.ln());
        let mut found = None;
        let mut reached = f64::NAN;
        for _ in 0..50 {
            let log_sigma = 0.5 * (lo + hi);
            let sigma = log_sigma.exp();
            gaussian_row(row, i, 1.0 / (2.0 * sigma * sigma), out);
            reached = entropy_bits(out).exp2();
            if (reached - target).abs() < 1e-5 {
                found = Some(sigma);
                break;
            }
            if reached > target {
                hi = log_sigma;
            } else {
                lo = log_sigma;
            }
        }
        sigmas[i] = found.ok_or(ProjectorError::Calibration { row: i, reached, target })?;
    }
    Ok(Calibration { conditional, sigmas })
}

/// Default perplexity for `n` points.
pub fn default_perplexity(n: usize) -> f64 {
    30f64.min((n as f64 - 1.0) / 3.0)
}

/// Symmetrised joint probabilities `(P + P^T) / 2n`; off-diagonal entries
/// are floored at `1e-12`, the diagonal stays zero.
pub fn symmetrize(conditional: &[f64], n: usize) -> Vec<f64> {
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in (0..n).filter(|&j| j != i) {
            p[i * n + j] = ((conditional[i * n + j] + conditional[j * n + i]) / (2.0 * n as f64)).max(P_FLOOR);
        }
    }
    p
}

/// KL(P || Q) over off-diagonal pairs, with Q floored like P.
pub fn kl_divergence(p: &[f64], q: &[f64], n: usize) -> f64 {
    let mut kl = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let (pij, qij) = (p[i * n + j], q[i * n + j].max(P_FLOOR));
                kl += pij * (pij / qij).ln();
            }
        }
    }
    kl
}

/// Exact t-SNE with momentum gradient descent, fully unrolled on the tape.
pub fn tsne(graph: &mut Graph, embeddings: ValueRef, cfg: &ProjectorConfig) -> Result<Projection, ProjectorError> {
    let n = point_count(&embeddings)?;
    if n < 4 {
        return Err(ProjectorError::TooFewPoints { method: "tsne", min: 4, n });
    }
    let t = &cfg.tsne;
    if t.iterations == 0 {
        return Err(ProjectorError::Config("tsne iterations must be at least 1".into()));
    }
    let perplexity = t.perplexity.unwrap_or_else(|| default_perplexity(n));
    if !(1.0..=(n - 1) as f64).contains(&perplexity) {
        return Err(ProjectorError::Perplexity { perplexity, max: (n - 1) as f64 });
    }

    let hd_sq = graph.pairwise_sq_dist(embeddings)?;
    let sigmas = match &t.fixed_sigmas {
        Some(s) if s.len() == n => s.clone(),
        Some(s) => return Err(ProjectorError::Config(format!("{} fixed sigmas for {n} points", s.len()))),
        None => calibrate_perplexity(graph.value(&hd_sq), n, perplexity)?.sigmas,
    };

    // Row-wise Gaussian affinities as a masked softmax over -beta_i * d_ij.
    let mut neg_beta = vec![0.0; n * n];
    for i in 0..n {
        let beta = 1.0 / (2.0 * sigmas[i] * sigmas[i]);
        for j in 0..n {
            if i != j {
                neg_beta[i * n + j] = -beta;
            }
        }
    }
    let neg_beta = graph.constant(neg_beta, Shape::Matrix(n, n))?;
    let logit_mask = graph.constant(off_diagonal(n, MASKED_LOGIT, 0.0), Shape::Matrix(n, n))?;
    let logits = graph.mul(hd_sq, neg_beta)?;
    let logits = graph.add(logits, logit_mask)?;
    let conditional = graph.softmax_rows(logits)?;
    let conditional_t = graph.transpose(conditional)?;
    let joint = graph.add(conditional, conditional_t)?;
    let joint = graph.scale(joint, 1.0 / (2.0 * n as f64))?;
    let mask = graph.constant(off_diagonal(n, 0.0, 1.0), Shape::Matrix(n, n))?;
    let p = graph.clamp_min(joint, P_FLOOR)?;
    let p = graph.mul(p, mask)?;
    let p_exaggerated = graph.scale(p, t.early_exaggeration)?;

    let ones_nn = graph.constant(vec![1.0; n * n], Shape::Matrix(n, n))?;
    let ones_n2 = graph.constant(vec![1.0; n * 2], Shape::Matrix(n, 2))?;
    let mut centering = vec![-1.0 / n as f64; n * n];
    for i in 0..n {
        centering[i * n + i] += 1.0;
    }
    let centering = graph.constant(centering, Shape::Matrix(n, n))?;

    let mut y = graph.constant(initial_layout(n, cfg.seed), Shape::Matrix(n, 2))?;
    let mut velocity = graph.constant(vec![0.0; n * 2], Shape::Matrix(n, 2))?;
    let mut trace = Vec::with_capacity(t.iterations);

    for iter in 0..t.iterations {
        let target = if iter < t.exaggeration_iterations { p_exaggerated } else { p };
        let d_sq = graph.pairwise_sq_dist(y)?;
        let shifted = graph.add(d_sq, ones_nn)?;
        let kernel = graph.reciprocal_safe(shifted)?;
        let kernel = graph.mul(kernel, mask)?;
        let total = graph.sum(kernel)?;
        let inv_total = graph.reciprocal_safe(total)?;
        let q = graph.scalar_mul(inv_total, kernel)?;

        trace.push(kl_divergence(graph.value(&p), graph.value(&q), n));

        // dC/dy_i = 4 sum_j (p_ij - q_ij) k_ij (y_i - y_j)
        let diff = graph.sub(target, q)?;
        let weights = graph.mul(diff, kernel)?;
        let row_totals = graph.matmul(weights, ones_n2)?;
        let diag_part = graph.mul(row_totals, y)?;
        let off_part = graph.matmul(weights, y)?;
        let grad = graph.sub(diag_part, off_part)?;
        let grad = graph.scale(grad, 4.0)?;

        let momentum = if iter < t.momentum_switch { t.momentum } else { t.final_momentum };
        let carried = graph.scale(velocity, momentum)?;
        let step = graph.scale(grad, t.learning_rate)?;
        velocity = graph.sub(carried, step)?;
        let moved = graph.add(y, velocity)?;
        y = graph.matmul(centering, moved)?;
    }

    Ok(Projection { coords: y, executed_iterations: trace.len(), trace, sigmas: Some(sigmas) })
}
