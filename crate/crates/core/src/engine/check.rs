use super::{EngineError, Graph, Shape, ValueRef};

/// Values and shape of one differentiable input for [`check_gradients`].
#[derive(Debug, Clone, PartialEq)]
pub struct LeafSpec {
    pub values: Vec<f64>,
    pub shape: Shape,
}

impl LeafSpec {
    pub fn new(values: Vec<f64>, shape: Shape) -> Self {
        Self { values, shape }
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(vec![value], Shape::Scalar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub leaf: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    /// Builder or backward failures, recorded instead of raised.
    pub failures: Vec<String>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty() && self.max_rel_err < self.tolerance
    }
}

/// Absolute floor of the gradient-check denominator. Central differences
/// carry roundoff of order `eps * |f| / h` (about 1e-10 for `h = 1e-5`), so
/// coordinates whose true derivative is zero or tiny need a floor well above
/// that to be judged on accuracy rather than noise.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Relative error used by the gradient check: `|a - fd| / (|fd| + 1e-6)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + REL_ERR_FLOOR)
}

/// Compare reverse-mode adjoints with central finite differences.
///
/// `builder` must rebuild the same scalar function from the leaves it is
/// handed; it is invoked once on a recording graph and twice per coordinate
/// on untracked graphs with the coordinate shifted by `±h`.
pub fn check_gradients<F>(builder: F, leaves: &[LeafSpec], h: f64, tol: f64) -> GradCheckReport
where
    F: Fn(&mut Graph, &[ValueRef]) -> Result<ValueRef, EngineError>,
{
    let mut report = GradCheckReport { entries: Vec::new(), failures: Vec::new(), max_rel_err: 0.0, tolerance: tol };

    let eval = |graph: &mut Graph, specs: &[LeafSpec]| -> Result<(Vec<ValueRef>, ValueRef), EngineError> {
        let refs = specs
            .iter()
            .map(|s| graph.leaf(s.values.clone(), s.shape))
            .collect::<Result<Vec<_>, _>>()?;
        let out = builder(graph, &refs)?;
        Ok((refs, out))
    };

    let mut graph = Graph::new();
    let adjoints = match eval(&mut graph, leaves).and_then(|(refs, out)| {
        let grads = graph.backward(&out)?;
        Ok(refs.iter().map(|r| grads.get(r).map(<[f64]>::to_vec).unwrap_or_default()).collect::<Vec<_>>())
    }) {
        Ok(a) => a,
        Err(e) => {
            report.failures.push(format!("base evaluation: {e}"));
            report.max_rel_err = f64::INFINITY;
            return report;
        }
    };

    let mut shifted = leaves.to_vec();
    for (leaf, input) in leaves.iter().enumerate() {
        for coord in 0..input.values.len() {
            let x = input.values[coord];
            let mut side = |delta: f64| -> Result<f64, EngineError> {
                shifted[leaf].values[coord] = x + delta;
                let mut g = Graph::untracked();
                let (_, out) = eval(&mut g, &shifted)?;
                Ok(g.scalar(&out))
            };
            let plus = side(h);
            let minus = side(-h);
            shifted[leaf].values[coord] = x;
            match (plus, minus) {
                (Ok(p), Ok(m)) => {
                    let numeric = (p - m) / (2.0 * h);
                    let analytic = adjoints[leaf][coord];
                    let rel_err = relative_error(analytic, numeric);
                    report.max_rel_err = report.max_rel_err.max(rel_err);
                    report.entries.push(GradCheckEntry { leaf, coord, analytic, numeric, rel_err });
                }
                (Err(e), _) | (_, Err(e)) => {
                    report.failures.push(format!("leaf {leaf} coord {coord}: {e}"));
                    report.max_rel_err = f64::INFINITY;
                }
            }
        }
    }
    report
}
