//! Per-word impact on a document's projected position.
//!
//! For each document two backward passes (one per projected axis) give the
//! Jacobian of `(x, y)` with respect to every entry of the document's word
//! matrix. Each word's block of that Jacobian is reduced to a 2-vector, the
//! word's pull on the point, and its Euclidean norm is the word's impact.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::TokenSequence;
use crate::encoder::EncodeResult;
use crate::engine::{EngineError, Graph, Shape, ValueRef};

#[derive(Debug, Error)]
pub enum AttributionError {
    #[error("projected outputs are not scalars on the given graph")]
    OutputsNotOnGraph,
    #[error("word leaves of {doc_id:?} are not a matrix on the given graph")]
    LeavesNotOnGraph { doc_id: String },
    #[error("alignment mismatch for {doc_id:?}: {detail}")]
    Alignment { doc_id: String, detail: String },
    #[error("encoder exposes no attention")]
    NoAttention,
    #[error(transparent)]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    /// `g_j = (J_x[j] . X[j], J_y[j] . X[j])`, the derivative along the word's own vector.
    #[default]
    GradTimesInput,
    /// `g_j = (|J_x[j]|, |J_y[j]|)`.
    RowNorm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSource {
    Gradient,
    Attention,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TangentMap {
    pub doc_id: String,
    pub d: usize,
    pub e: usize,
    /// `[axis][word][dim]` flattened: `2 * d * e` entries.
    pub jacobian: Vec<f64>,
    pub impact_vectors: Vec<[f64; 2]>,
    pub magnitudes: Vec<f64>,
    pub reduction: Reduction,
}

impl TangentMap {
    pub fn partial(&self, axis: usize, word: usize, dim: usize) -> f64 {
        self.jacobian[(axis * self.d + word) * self.e + dim]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordScore {
    pub doc_id: String,
    pub position: usize,
    pub word: String,
    pub score: f64,
    pub source: ScoreSource,
}

pub fn impact_magnitude(g: [f64; 2]) -> f64 {
    (g[0] * g[0] + g[1] * g[1]).sqrt()
}

/// Jacobian of the projected point `outputs = [v_x, v_y]` with respect to
/// the document's word matrix, reduced per word.
pub fn tangent_map(
    graph: &Graph,
    doc_id: &str,
    leaves: &ValueRef,
    outputs: [ValueRef; 2],
    reduction: Reduction,
) -> Result<TangentMap, AttributionError> {
    if outputs.iter().any(|o| !graph.owns(o) || o.shape() != Shape::Scalar) {
        return Err(AttributionError::OutputsNotOnGraph);
    }
    let Shape::Matrix(d, e) = leaves.shape() else {
        return Err(AttributionError::LeavesNotOnGraph { doc_id: doc_id.to_string() });
    };
    if !graph.owns(leaves) {
        return Err(AttributionError::LeavesNotOnGraph { doc_id: doc_id.to_string() });
    }

    let mut jacobian = Vec::with_capacity(2 * d * e);
    for output in &outputs {
        let grads = graph.backward(output)?;
        let block = grads
            .get(leaves)
            .ok_or_else(|| AttributionError::LeavesNotOnGraph { doc_id: doc_id.to_string() })?;
        jacobian.extend_from_slice(block);
    }

    let x = graph.value(leaves);
    let impact_vectors: Vec<[f64; 2]> = (0..d)
        .map(|j| {
            let mut g = [0.0; 2];
            for (axis, slot) in g.iter_mut().enumerate() {
                let row = &jacobian[(axis * d + j) * e..(axis * d + j + 1) * e];
                *slot = match reduction {
                    Reduction::GradTimesInput => row.iter().zip(&x[j * e..(j + 1) * e]).map(|(a, b)| a * b).sum(),
                    Reduction::RowNorm => row.iter().map(|a| a * a).sum::<f64>().sqrt(),
                };
            }
            g
        })
        .collect();
    let magnitudes = impact_vectors.iter().map(|g| impact_magnitude(*g)).collect();

    Ok(TangentMap { doc_id: doc_id.to_string(), d, e, jacobian, impact_vectors, magnitudes, reduction })
}

fn check_alignment(doc_id: &str, seq: &TokenSequence, len: usize) -> Result<(), AttributionError> {
    if seq.doc_id != doc_id {
        return Err(AttributionError::Alignment { doc_id: doc_id.to_string(), detail: format!("paired with sequence {:?}", seq.doc_id) });
    }
    if seq.tokens.len() != len {
        return Err(AttributionError::Alignment {
            doc_id: doc_id.to_string(),
            detail: format!("{len} scores for {} tokens", seq.tokens.len()),
        });
    }
    Ok(())
}

fn scores_for(doc_id: &str, seq: &TokenSequence, values: &[f64], source: ScoreSource) -> Vec<WordScore> {
    seq.tokens
        .iter()
        .zip(values)
        .map(|(tok, &score)| WordScore { doc_id: doc_id.to_string(), position: tok.position, word: tok.word.clone(), score, source })
        .collect()
}

/// One score per word instance: the impact magnitude.
pub fn gradient_scores(tmaps: &[TangentMap], seqs: &[TokenSequence]) -> Result<Vec<WordScore>, AttributionError> {
    if tmaps.len() != seqs.len() {
        return Err(AttributionError::Alignment { doc_id: String::new(), detail: format!("{} tangent maps for {} sequences", tmaps.len(), seqs.len()) });
    }
    let mut out = Vec::new();
    for (tmap, seq) in tmaps.iter().zip(seqs) {
        check_alignment(&tmap.doc_id, seq, tmap.magnitudes.len())?;
        out.extend(scores_for(&tmap.doc_id, seq, &tmap.magnitudes, ScoreSource::Gradient));
    }
    Ok(out)
}

/// One score per word instance: the attention the word receives.
pub fn attention_scores(results: &[EncodeResult], seqs: &[TokenSequence]) -> Result<Vec<WordScore>, AttributionError> {
    if results.len() != seqs.len() {
        return Err(AttributionError::Alignment { doc_id: String::new(), detail: format!("{} encodings for {} sequences", results.len(), seqs.len()) });
    }
    let mut out = Vec::new();
    for (result, seq) in results.iter().zip(seqs) {
        let attention = result.attention.as_ref().ok_or(AttributionError::NoAttention)?;
        check_alignment(&seq.doc_id, seq, attention.len())?;
        out.extend(scores_for(&seq.doc_id, seq, attention, ScoreSource::Attention));
    }
    Ok(out)
}
