use std::fmt;

use serde::{Deserialize, Serialize};

/// Shape of a value recorded on the graph. Vectors behave as a single row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Shape {
    Scalar,
    Vector(usize),
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(k) => k,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn rows(&self) -> usize {
        match *self {
            Shape::Matrix(r, _) => r,
            _ => 1,
        }
    }

    pub fn cols(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(k) => k,
            Shape::Matrix(_, c) => c,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Shape::Scalar => write!(f, "scalar"),
            Shape::Vector(k) => write!(f, "vector({k})"),
            Shape::Matrix(r, c) => write!(f, "matrix({r},{c})"),
        }
    }
}
