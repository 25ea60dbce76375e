//! Tape-based reverse-mode automatic differentiation over small dense arrays.
//!
//! Every operation is evaluated eagerly and appended to a [`Graph`]. Seeding a
//! scalar output with [`Graph::backward`] sweeps the tape in reverse and
//! returns the adjoint of every differentiable leaf.
//!
//! ```
//! use wordpull::engine::{Graph, Shape};
//!
//! let mut g = Graph::new();
//! let x = g.leaf(vec![3.0], Shape::Scalar).unwrap();
//! let y = g.mul(x, x).unwrap();
//! let grads = g.backward(&y).unwrap();
//! assert_eq!(grads.get(&x).unwrap(), &[6.0]);
//! ```

mod check;
mod graph;
mod shape;

pub use check::{check_gradients, relative_error, GradCheckEntry, GradCheckReport, LeafSpec, REL_ERR_FLOOR};
pub use graph::{GradientMap, Graph, Prim, ValueRef, SAFE_EPS};
pub use shape::Shape;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("non-finite input at index {index} ({value})")]
    NonFiniteInput { index: usize, value: f64 },
    #[error("{shape} needs {expected} values, got {actual}")]
    ValueCount { shape: Shape, expected: usize, actual: usize },
    #[error("{op}: non-finite result at index {index}")]
    NonFiniteValue { op: &'static str, index: usize },
    #[error("{op}: shape mismatch, expected {expected}, got {actual}")]
    ShapeMismatch { op: &'static str, expected: String, actual: String },
    #[error("{op}: expected {expected} operands, got {actual}")]
    Arity { op: &'static str, expected: usize, actual: usize },
    #[error("{op}: argument {value} at index {index} outside the domain")]
    Domain { op: &'static str, index: usize, value: f64 },
    #[error("value {index} does not belong to this graph")]
    ForeignValue { index: usize },
    #[error("backward seed must be scalar, got {shape}")]
    NonScalarSeed { shape: String },
    #[error("non-finite adjoint at node {node}")]
    NanAdjoint { node: usize },
    #[error("graph was built without recording")]
    NotRecorded,
}
