use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

use super::shape::Shape;
use super::EngineError;

/// Guard used by [`Prim::ReciprocalSafe`] and [`Prim::SqrtSafe`].
pub const SAFE_EPS: f64 = 1e-12;

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Primitive operations understood by [`Graph::apply`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prim {
    Add,
    Sub,
    /// Elementwise product.
    Mul,
    Div,
    /// `s * x` where the first operand is a scalar.
    ScalarMul,
    MatMul,
    Transpose,
    /// matrix(r,c) -> vector(r); vector(k) -> scalar.
    RowSum,
    /// Mean over rows: matrix(r,c) -> vector(c).
    MeanRows,
    Exp,
    Log,
    /// Elementwise power by a constant exponent.
    Pow(f64),
    Sqrt,
    /// `sqrt(x + SAFE_EPS)` for `x >= 0`.
    SqrtSafe,
    Neg,
    /// `1/x`, or `0` where `|x| <= SAFE_EPS`.
    ReciprocalSafe,
    SoftmaxRows,
    /// matrix(n,k) -> matrix(n,n) of squared Euclidean row distances.
    PairwiseSqDist,
    SelectEntry { row: usize, col: usize },
    /// Scalars -> vector(n); vector(k) -> matrix(n,k).
    Stack,
    /// `max(x, floor)` elementwise.
    ClampMin(f64),
}

impl Prim {
    fn name(&self) -> &'static str {
        match self {
            Prim::Add => "add",
            Prim::Sub => "sub",
            Prim::Mul => "mul",
            Prim::Div => "div",
            Prim::ScalarMul => "scalar_mul",
            Prim::MatMul => "matmul",
            Prim::Transpose => "transpose",
            Prim::RowSum => "row_sum",
            Prim::MeanRows => "mean_rows",
            Prim::Exp => "exp",
            Prim::Log => "log",
            Prim::Pow(_) => "pow",
            Prim::Sqrt => "sqrt",
            Prim::SqrtSafe => "sqrt_safe",
            Prim::Neg => "neg",
            Prim::ReciprocalSafe => "reciprocal_safe",
            Prim::SoftmaxRows => "softmax_rows",
            Prim::PairwiseSqDist => "pairwise_sq_dist",
            Prim::SelectEntry { .. } => "select_entry",
            Prim::Stack => "stack",
            Prim::ClampMin(_) => "clamp_min",
        }
    }
}

#[derive(Debug, Clone)]
enum NodeKind {
    Leaf,
    Constant,
    Derived(Prim, Vec<usize>),
}

#[derive(Debug, Clone)]
struct Node {
    kind: NodeKind,
    shape: Shape,
    value: Vec<f64>,
}

/// Handle to a value recorded on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueRef {
    graph: u64,
    index: usize,
    shape: Shape,
}

impl ValueRef {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
}

/// Adjoints of every differentiable leaf for one backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMap {
    graph: u64,
    entries: BTreeMap<usize, Vec<f64>>,
}

impl GradientMap {
    /// Adjoint of `leaf`, or `None` when it is not a leaf of the seeded graph.
    pub fn get(&self, leaf: &ValueRef) -> Option<&[f64]> {
        if leaf.graph != self.graph {
            return None;
        }
        self.entries.get(&leaf.index).map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.entries.iter().map(|(k, v)| (*k, v.as_slice()))
    }
}

/// A tape of operations evaluated eagerly.
///
/// Nodes are appended in evaluation order, so the node list is always
/// topologically sorted. A graph created with [`Graph::untracked`] evaluates
/// the same values but keeps no operation records and refuses `backward`.
#[derive(Debug)]
pub struct Graph {
    id: u64,
    recording: bool,
    nodes: Vec<Node>,
    backward_passes: AtomicUsize,
}

impl Default for Graph {
    fn default() -> Self {
        Self::new()
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::with_recording(true)
    }

    /// A graph that computes forward values only.
    pub fn untracked() -> Self {
        Self::with_recording(false)
    }

    fn with_recording(recording: bool) -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            recording,
            nodes: Vec::new(),
            backward_passes: AtomicUsize::new(0),
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of backward passes started on this graph.
    pub fn backward_passes(&self) -> usize {
        self.backward_passes.load(Ordering::SeqCst)
    }

    pub fn owns(&self, v: &ValueRef) -> bool {
        v.graph == self.id && v.index < self.nodes.len()
    }

    pub fn value(&self, v: &ValueRef) -> &[f64] {
        assert!(self.owns(v), "value reference from another graph");
        &self.nodes[v.index].value
    }

    pub fn scalar(&self, v: &ValueRef) -> f64 {
        self.value(v)[0]
    }

    /// Record a differentiable input.
    pub fn leaf(&mut self, values: Vec<f64>, shape: Shape) -> Result<ValueRef, EngineError> {
        self.input(values, shape, NodeKind::Leaf)
    }

    /// Record a non-differentiable input.
    pub fn constant(&mut self, values: Vec<f64>, shape: Shape) -> Result<ValueRef, EngineError> {
        self.input(values, shape, NodeKind::Constant)
    }

    pub fn constant_scalar(&mut self, value: f64) -> Result<ValueRef, EngineError> {
        self.constant(vec![value], Shape::Scalar)
    }

    fn input(&mut self, values: Vec<f64>, shape: Shape, kind: NodeKind) -> Result<ValueRef, EngineError> {
        if values.len() != shape.len() {
            return Err(EngineError::ValueCount { shape, expected: shape.len(), actual: values.len() });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(EngineError::NonFiniteInput { index, value: values[index] });
        }
        Ok(self.push(kind, shape, values))
    }

    fn push(&mut self, kind: NodeKind, shape: Shape, value: Vec<f64>) -> ValueRef {
        let index = self.nodes.len();
        self.nodes.push(Node { kind, shape, value });
        ValueRef { graph: self.id, index, shape }
    }

    fn check_owned(&self, v: &ValueRef) -> Result<(), EngineError> {
        if self.owns(v) {
            Ok(())
        } else {
            Err(EngineError::ForeignValue { index: v.index })
        }
    }

    /// Evaluate `prim` on `operands` and record the result.
    pub fn apply(&mut self, prim: Prim, operands: &[ValueRef]) -> Result<ValueRef, EngineError> {
        for v in operands {
            self.check_owned(v)?;
        }
        let (shape, value) = self.forward(prim, operands)?;
        if let Some(index) = value.iter().position(|v| !v.is_finite()) {
            return Err(EngineError::NonFiniteValue { op: prim.name(), index });
        }
        let kind = if self.recording {
            NodeKind::Derived(prim, operands.iter().map(|v| v.index).collect())
        } else {
            NodeKind::Constant
        };
        Ok(self.push(kind, shape, value))
    }

    fn forward(&self, prim: Prim, ops: &[ValueRef]) -> Result<(Shape, Vec<f64>), EngineError> {
        let name = prim.name();
        let arity = |n: usize| -> Result<(), EngineError> {
            if ops.len() == n {
                Ok(())
            } else {
                Err(EngineError::Arity { op: name, expected: n, actual: ops.len() })
            }
        };
        let val = |i: usize| self.nodes[ops[i].index].value.as_slice();
        let same_shape = |a: Shape, b: Shape| -> Result<(), EngineError> {
            if a == b {
                Ok(())
            } else {
                Err(EngineError::ShapeMismatch { op: name, expected: a.to_string(), actual: b.to_string() })
            }
        };

        match prim {
            Prim::Add | Prim::Sub | Prim::Mul | Prim::Div => {
                arity(2)?;
                same_shape(ops[0].shape, ops[1].shape)?;
                let (a, b) = (val(0), val(1));
                let out: Vec<f64> = match prim {
                    Prim::Add => a.iter().zip(b).map(|(x, y)| x + y).collect(),
                    Prim::Sub => a.iter().zip(b).map(|(x, y)| x - y).collect(),
                    Prim::Mul => a.iter().zip(b).map(|(x, y)| x * y).collect(),
                    _ => {
                        if let Some(index) = b.iter().position(|y| *y == 0.0) {
                            return Err(EngineError::Domain { op: name, index, value: 0.0 });
                        }
                        a.iter().zip(b).map(|(x, y)| x / y).collect()
                    }
                };
                Ok((ops[0].shape, out))
            }
            Prim::ScalarMul => {
                arity(2)?;
                same_shape(Shape::Scalar, ops[0].shape)?;
                let s = val(0)[0];
                Ok((ops[1].shape, val(1).iter().map(|x| s * x).collect()))
            }
            Prim::MatMul => {
                arity(2)?;
                let (sa, sb) = (ops[0].shape, ops[1].shape);
                if matches!(sa, Shape::Scalar) || matches!(sb, Shape::Scalar) || sa.cols() != sb.rows() {
                    return Err(EngineError::ShapeMismatch {
                        op: name,
                        expected: format!("({}, k) x (k, c) with k = {}", sa.rows(), sa.cols()),
                        actual: format!("{sa} x {sb}"),
                    });
                }
                let (r, k, c) = (sa.rows(), sa.cols(), sb.cols());
                let out = matmul(val(0), val(1), r, k, c);
                let shape = match sa {
                    Shape::Vector(_) => Shape::Vector(c),
                    _ => Shape::Matrix(r, c),
                };
                Ok((shape, out))
            }
            Prim::Transpose => {
                arity(1)?;
                let Shape::Matrix(r, c) = ops[0].shape else {
                    return Err(EngineError::ShapeMismatch { op: name, expected: "matrix".into(), actual: ops[0].shape.to_string() });
                };
                Ok((Shape::Matrix(c, r), transpose(val(0), r, c)))
            }
            Prim::RowSum => {
                arity(1)?;
                match ops[0].shape {
                    Shape::Matrix(r, c) => {
                        let a = val(0);
                        let out = (0..r).map(|i| a[i * c..(i + 1) * c].iter().sum()).collect();
                        Ok((Shape::Vector(r), out))
                    }
                    Shape::Vector(_) => Ok((Shape::Scalar, vec![val(0).iter().sum()])),
                    s => Err(EngineError::ShapeMismatch { op: name, expected: "matrix or vector".into(), actual: s.to_string() }),
                }
            }
            Prim::MeanRows => {
                arity(1)?;
                let Shape::Matrix(r, c) = ops[0].shape else {
                    return Err(EngineError::ShapeMismatch { op: name, expected: "matrix".into(), actual: ops[0].shape.to_string() });
                };
                if r == 0 {
                    return Err(EngineError::ShapeMismatch { op: name, expected: "at least one row".into(), actual: ops[0].shape.to_string() });
                }
                let a = val(0);
                let mut out = vec![0.0; c];
                for i in 0..r {
                    for (o, x) in out.iter_mut().zip(&a[i * c..(i + 1) * c]) {
                        *o += x;
                    }
                }
                let inv = 1.0 / r as f64;
                out.iter_mut().for_each(|o| *o *= inv);
                Ok((Shape::Vector(c), out))
            }
            Prim::Exp => {
                arity(1)?;
                Ok((ops[0].shape, val(0).iter().map(|x| x.exp()).collect()))
            }
            Prim::Log => {
                arity(1)?;
                let a = val(0);
                if let Some(index) = a.iter().position(|x| *x <= 0.0) {
                    return Err(EngineError::Domain { op: name, index, value: a[index] });
                }
                Ok((ops[0].shape, a.iter().map(|x| x.ln()).collect()))
            }
            Prim::Pow(p) => {
                arity(1)?;
                let a = val(0);
                if p.fract() != 0.0 {
                    if let Some(index) = a.iter().position(|x| *x < 0.0) {
                        return Err(EngineError::Domain { op: name, index, value: a[index] });
                    }
                }
                Ok((ops[0].shape, a.iter().map(|x| x.powf(p)).collect()))
            }
            Prim::Sqrt | Prim::SqrtSafe => {
                arity(1)?;
                let a = val(0);
                if let Some(index) = a.iter().position(|x| *x < 0.0) {
                    return Err(EngineError::Domain { op: name, index, value: a[index] });
                }
                let eps = if prim == Prim::SqrtSafe { SAFE_EPS } else { 0.0 };
                Ok((ops[0].shape, a.iter().map(|x| (x + eps).sqrt()).collect()))
            }
            Prim::Neg => {
                arity(1)?;
                Ok((ops[0].shape, val(0).iter().map(|x| -x).collect()))
            }
            Prim::ReciprocalSafe => {
                arity(1)?;
                Ok((ops[0].shape, val(0).iter().map(|&x| safe_recip(x)).collect()))
            }
            Prim::SoftmaxRows => {
                arity(1)?;
                let s = ops[0].shape;
                if matches!(s, Shape::Scalar) {
                    return Err(EngineError::ShapeMismatch { op: name, expected: "matrix or vector".into(), actual: s.to_string() });
                }
                let (r, c) = (s.rows(), s.cols());
                let a = val(0);
                let mut out = vec![0.0; r * c];
                for i in 0..r {
                    let row = &a[i * c..(i + 1) * c];
                    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let dst = &mut out[i * c..(i + 1) * c];
                    let mut total = 0.0;
                    for (o, x) in dst.iter_mut().zip(row) {
                        *o = (x - max).exp();
                        total += *o;
                    }
                    dst.iter_mut().for_each(|o| *o /= total);
                }
                Ok((s, out))
            }
            Prim::PairwiseSqDist => {
                arity(1)?;
                let Shape::Matrix(n, k) = ops[0].shape else {
                    return Err(EngineError::ShapeMismatch { op: name, expected: "matrix".into(), actual: ops[0].shape.to_string() });
                };
                let a = val(0);
                let mut out = vec![0.0; n * n];
                for i in 0..n {
                    for j in (i + 1)..n {
                        let d: f64 = a[i * k..(i + 1) * k]
                            .iter()
                            .zip(&a[j * k..(j + 1) * k])
                            .map(|(x, y)| (x - y) * (x - y))
                            .sum();
                        out[i * n + j] = d;
                        out[j * n + i] = d;
                    }
                }
                Ok((Shape::Matrix(n, n), out))
            }
            Prim::SelectEntry { row, col } => {
                arity(1)?;
                let s = ops[0].shape;
                if row >= s.rows() || col >= s.cols() {
                    return Err(EngineError::ShapeMismatch { op: name, expected: format!("entry ({row},{col}) inside"), actual: s.to_string() });
                }
                Ok((Shape::Scalar, vec![val(0)[row * s.cols() + col]]))
            }
            Prim::Stack => {
                if ops.is_empty() {
                    return Err(EngineError::Arity { op: name, expected: 1, actual: 0 });
                }
                let first = ops[0].shape;
                for v in &ops[1..] {
                    same_shape(first, v.shape)?;
                }
                let shape = match first {
                    Shape::Scalar => Shape::Vector(ops.len()),
                    Shape::Vector(k) => Shape::Matrix(ops.len(), k),
                    s => return Err(EngineError::ShapeMismatch { op: name, expected: "scalars or vectors".into(), actual: s.to_string() }),
                };
                let mut out = Vec::with_capacity(shape.len());
                for i in 0..ops.len() {
                    out.extend_from_slice(val(i));
                }
                Ok((shape, out))
            }
            Prim::ClampMin(floor) => {
                arity(1)?;
                Ok((ops[0].shape, val(0).iter().map(|x| x.max(floor)).collect()))
            }
        }
    }

    /// Propagate adjoints from the scalar `output` back to every leaf.
    ///
    /// Adjoint buffers are local to the call, so repeated or concurrent
    /// passes over the same graph do not interfere.
    pub fn backward(&self, output: &ValueRef) -> Result<GradientMap, EngineError> {
        self.check_owned(output)?;
        if !self.recording {
            return Err(EngineError::NotRecorded);
        }
        if output.shape != Shape::Scalar {
            return Err(EngineError::NonScalarSeed { shape: output.shape.to_string() });
        }
        self.backward_passes.fetch_add(1, Ordering::SeqCst);

        let mut adjoints: Vec<Option<Vec<f64>>> = vec![None; output.index + 1];
        adjoints[output.index] = Some(vec![1.0]);
        let mut entries = BTreeMap::new();

        for i in (0..=output.index).rev() {
            let Some(g) = adjoints[i].take() else { continue };
            let node = &self.nodes[i];
            if g.iter().any(|x| !x.is_finite()) {
                return Err(EngineError::NanAdjoint { node: i });
            }
            match &node.kind {
                NodeKind::Leaf => {
                    entries.insert(i, g);
                }
                NodeKind::Constant => {}
                NodeKind::Derived(prim, operands) => self.propagate(*prim, operands, node, &g, &mut adjoints),
            }
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if matches!(node.kind, NodeKind::Leaf) {
                entries.entry(i).or_insert_with(|| vec![0.0; node.shape.len()]);
            }
        }
        Ok(GradientMap { graph: self.id, entries })
    }

    fn propagate(&self, prim: Prim, operands: &[usize], node: &Node, g: &[f64], adjoints: &mut [Option<Vec<f64>>]) {
        let value = |k: usize| self.nodes[operands[k]].value.as_slice();
        let shape = |k: usize| self.nodes[operands[k]].shape;
        let y = &node.value;

        match prim {
            Prim::Add => {
                accumulate(adjoints, &self.nodes, operands[0], |a| add_into(a, g));
                accumulate(adjoints, &self.nodes, operands[1], |a| add_into(a, g));
            }
            Prim::Sub => {
                accumulate(adjoints, &self.nodes, operands[0], |a| add_into(a, g));
                accumulate(adjoints, &self.nodes, operands[1], |a| a.iter_mut().zip(g).for_each(|(a, g)| *a -= g));
            }
            Prim::Mul => {
                let (x0, x1) = (value(0), value(1));
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for ((a, g), x) in a.iter_mut().zip(g).zip(x1) {
                        *a += g * x;
                    }
                });
                accumulate(adjoints, &self.nodes, operands[1], |a| {
                    for ((a, g), x) in a.iter_mut().zip(g).zip(x0) {
                        *a += g * x;
                    }
                });
            }
            Prim::Div => {
                let (x0, x1) = (value(0), value(1));
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for ((a, g), d) in a.iter_mut().zip(g).zip(x1) {
                        *a += g / d;
                    }
                });
                accumulate(adjoints, &self.nodes, operands[1], |a| {
                    for (((a, g), n), d) in a.iter_mut().zip(g).zip(x0).zip(x1) {
                        *a -= g * n / (d * d);
                    }
                });
            }
            Prim::ScalarMul => {
                let s = value(0)[0];
                let x = value(1);
                let gs: f64 = g.iter().zip(x).map(|(g, x)| g * x).sum();
                accumulate(adjoints, &self.nodes, operands[0], |a| a[0] += gs);
                accumulate(adjoints, &self.nodes, operands[1], |a| a.iter_mut().zip(g).for_each(|(a, g)| *a += s * g));
            }
            Prim::MatMul => {
                let (sa, sb) = (shape(0), shape(1));
                let (r, k, c) = (sa.rows(), sa.cols(), sb.cols());
                let (a, b) = (value(0), value(1));
                // dA = G B^T, dB = A^T G
                accumulate(adjoints, &self.nodes, operands[0], |da| {
                    for i in 0..r {
                        for p in 0..k {
                            let mut s = 0.0;
                            for j in 0..c {
                                s += g[i * c + j] * b[p * c + j];
                            }
                            da[i * k + p] += s;
                        }
                    }
                });
                accumulate(adjoints, &self.nodes, operands[1], |db| {
                    for i in 0..r {
                        for p in 0..k {
                            let aip = a[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let dst = &mut db[p * c..(p + 1) * c];
                            for (d, gij) in dst.iter_mut().zip(&g[i * c..(i + 1) * c]) {
                                *d += aip * gij;
                            }
                        }
                    }
                });
            }
            Prim::Transpose => {
                let s = shape(0);
                let (r, c) = (s.rows(), s.cols());
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for i in 0..r {
                        for j in 0..c {
                            a[i * c + j] += g[j * r + i];
                        }
                    }
                });
            }
            Prim::RowSum => {
                let s = shape(0);
                let c = s.cols();
                accumulate(adjoints, &self.nodes, operands[0], |a| match s {
                    Shape::Matrix(r, _) => {
                        for i in 0..r {
                            a[i * c..(i + 1) * c].iter_mut().for_each(|a| *a += g[i]);
                        }
                    }
                    _ => a.iter_mut().for_each(|a| *a += g[0]),
                });
            }
            Prim::MeanRows => {
                let s = shape(0);
                let (r, c) = (s.rows(), s.cols());
                let inv = 1.0 / r as f64;
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for i in 0..r {
                        for (a, g) in a[i * c..(i + 1) * c].iter_mut().zip(g) {
                            *a += g * inv;
                        }
                    }
                });
            }
            Prim::Exp => accumulate(adjoints, &self.nodes, operands[0], |a| {
                for ((a, g), y) in a.iter_mut().zip(g).zip(y) {
                    *a += g * y;
                }
            }),
            Prim::Log => {
                let x = value(0);
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for ((a, g), x) in a.iter_mut().zip(g).zip(x) {
                        *a += g / x;
                    }
                });
            }
            Prim::Pow(p) => {
                let x = value(0);
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for ((a, g), x) in a.iter_mut().zip(g).zip(x) {
                        if p == 0.0 {
                            continue;
                        }
                        *a += g * p * x.powf(p - 1.0);
                    }
                });
            }
            Prim::Sqrt | Prim::SqrtSafe => accumulate(adjoints, &self.nodes, operands[0], |a| {
                for ((a, g), y) in a.iter_mut().zip(g).zip(y) {
                    *a += g / (2.0 * y);
                }
            }),
            Prim::Neg => accumulate(adjoints, &self.nodes, operands[0], |a| a.iter_mut().zip(g).for_each(|(a, g)| *a -= g)),
            Prim::ReciprocalSafe => accumulate(adjoints, &self.nodes, operands[0], |a| {
                for ((a, g), y) in a.iter_mut().zip(g).zip(y) {
                    *a -= g * y * y;
                }
            }),
            Prim::SoftmaxRows => {
                let s = shape(0);
                let (r, c) = (s.rows(), s.cols());
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for i in 0..r {
                        let yr = &y[i * c..(i + 1) * c];
                        let gr = &g[i * c..(i + 1) * c];
                        let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        for ((a, y), g) in a[i * c..(i + 1) * c].iter_mut().zip(yr).zip(gr) {
                            *a += y * (g - dot);
                        }
                    }
                });
            }
            Prim::PairwiseSqDist => {
                let s = shape(0);
                let (n, k) = (s.rows(), s.cols());
                let x = value(0);
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for i in 0..n {
                        for j in 0..n {
                            if i == j {
                                continue;
                            }
                            let w = 2.0 * (g[i * n + j] + g[j * n + i]);
                            if w == 0.0 {
                                continue;
                            }
                            for m in 0..k {
                                a[i * k + m] += w * (x[i * k + m] - x[j * k + m]);
                            }
                        }
                    }
                });
            }
            Prim::SelectEntry { row, col } => {
                let c = shape(0).cols();
                accumulate(adjoints, &self.nodes, operands[0], |a| a[row * c + col] += g[0]);
            }
            Prim::Stack => {
                let width = shape(0).len();
                for (slot, &operand) in operands.iter().enumerate() {
                    let part = &g[slot * width..(slot + 1) * width];
                    accumulate(adjoints, &self.nodes, operand, |a| add_into(a, part));
                }
            }
            Prim::ClampMin(floor) => {
                let x = value(0);
                accumulate(adjoints, &self.nodes, operands[0], |a| {
                    for ((a, g), x) in a.iter_mut().zip(g).zip(x) {
                        if *x > floor {
                            *a += g;
                        }
                    }
                });
            }
        }
    }

    // Convenience wrappers over `apply`.

    pub fn add(&mut self, a: ValueRef, b: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Add, &[a, b])
    }

    pub fn sub(&mut self, a: ValueRef, b: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: ValueRef, b: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Mul, &[a, b])
    }

    pub fn div(&mut self, a: ValueRef, b: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Div, &[a, b])
    }

    pub fn scalar_mul(&mut self, s: ValueRef, x: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::ScalarMul, &[s, x])
    }

    /// Multiply by a constant factor.
    pub fn scale(&mut self, x: ValueRef, factor: f64) -> Result<ValueRef, EngineError> {
        let s = self.constant_scalar(factor)?;
        self.scalar_mul(s, x)
    }

    pub fn matmul(&mut self, a: ValueRef, b: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::MatMul, &[a, b])
    }

    pub fn transpose(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Transpose, &[a])
    }

    pub fn row_sum(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::RowSum, &[a])
    }

    /// Sum of every entry as a scalar.
    pub fn sum(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        match a.shape {
            Shape::Scalar => Ok(a),
            Shape::Vector(_) => self.row_sum(a),
            Shape::Matrix(..) => {
                let rows = self.row_sum(a)?;
                self.row_sum(rows)
            }
        }
    }

    pub fn mean_rows(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::MeanRows, &[a])
    }

    pub fn exp(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Exp, &[a])
    }

    pub fn log(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Log, &[a])
    }

    pub fn pow(&mut self, a: ValueRef, exponent: f64) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Pow(exponent), &[a])
    }

    pub fn sqrt(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Sqrt, &[a])
    }

    pub fn sqrt_safe(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::SqrtSafe, &[a])
    }

    pub fn neg(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Neg, &[a])
    }

    pub fn reciprocal_safe(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::ReciprocalSafe, &[a])
    }

    pub fn softmax_rows(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::SoftmaxRows, &[a])
    }

    pub fn pairwise_sq_dist(&mut self, a: ValueRef) -> Result<ValueRef, EngineError> {
        self.apply(Prim::PairwiseSqDist, &[a])
    }

    pub fn select(&mut self, a: ValueRef, row: usize, col: usize) -> Result<ValueRef, EngineError> {
        self.apply(Prim::SelectEntry { row, col }, &[a])
    }

    pub fn stack(&mut self, parts: &[ValueRef]) -> Result<ValueRef, EngineError> {
        self.apply(Prim::Stack, parts)
    }

    pub fn clamp_min(&mut self, a: ValueRef, floor: f64) -> Result<ValueRef, EngineError> {
        self.apply(Prim::ClampMin(floor), &[a])
    }
}

fn accumulate(adjoints: &mut [Option<Vec<f64>>], nodes: &[Node], index: usize, f: impl FnOnce(&mut [f64])) {
    if matches!(nodes[index].kind, NodeKind::Constant) {
        return;
    }
    let slot = adjoints[index].get_or_insert_with(|| vec![0.0; nodes[index].shape.len()]);
    f(slot);
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn safe_recip(x: f64) -> f64 {
    if x.abs() <= SAFE_EPS {
        0.0
    } else {
        1.0 / x
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], r: usize, k: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let dst = &mut out[i * c..(i + 1) * c];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            for (d, bpj) in dst.iter_mut().zip(&b[p * c..(p + 1) * c]) {
                *d += aip * bpj;
            }
        }
    }
    out
}

fn transpose(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}
