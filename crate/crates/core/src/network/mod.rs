//! Layered piecewise-linear networks: ReLU and maxout hidden layers with an
//! optional linear read-out.
//!
//! Inside a fixed activation pattern every layer is affine in the input, so the
//! preactivations of layer `l` can be written as `W̄ x + b̄` where `W̄` is the
//! product of the weight matrices with inactive rows zeroed (ReLU) or the
//! winning rows selected (maxout). [`Network::compose_region_map`] builds that
//! map and [`Network::region_image_dimension`] measures the rank of the
//! post-activation part.

mod io;
mod pattern;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub use io::{from_json_str, read_network, to_json_string, write_network};
pub use pattern::{ActivationPattern, LayerActivation};

/// Row-major dense matrix.
pub type Matrix = Vec<Vec<f64>>;

/// Singular values at or below `RANK_TOLERANCE * max(largest, 1)` count as zero.
pub const RANK_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Relu {
        weights: Matrix,
        bias: Vec<f64>,
    },
    /// `weights[j]` and `bias[j]` hold the `j`-th affine piece of every unit.
    Maxout {
        weights: Vec<Matrix>,
        bias: Vec<Vec<f64>>,
    },
}

impl Layer {
    pub fn relu(weights: Matrix, bias: Vec<f64>) -> Self {
        Layer::Relu { weights, bias }
    }

    pub fn maxout(weights: Vec<Matrix>, bias: Vec<Vec<f64>>) -> Self {
        Layer::Maxout { weights, bias }
    }

    /// Number of units in the layer.
    pub fn width(&self) -> usize {
        match self {
            Layer::Relu { bias, .. } => bias.len(),
            Layer::Maxout { bias, .. } => bias.first().map_or(0, Vec::len),
        }
    }

    /// Maxout rank, or `None` for a ReLU layer.
    pub fn rank(&self) -> Option<usize> {
        match self {
            Layer::Relu { .. } => None,
            Layer::Maxout { weights, .. } => Some(weights.len()),
        }
    }

    pub fn is_maxout(&self) -> bool {
        matches!(self, Layer::Maxout { .. })
    }

    /// Rows of the layer's preactivation. ReLU: one per unit. Maxout: `k` per
    /// unit, unit-major (`unit * k + piece`).
    pub(crate) fn preactivation_rows(&self) -> Vec<(&[f64], f64)> {
        match self {
            Layer::Relu { weights, bias } => weights.iter().zip(bias).map(|(row, &b)| (row.as_slice(), b)).collect(),
            Layer::Maxout { weights, bias } => {
                let k = weights.len();
                let n = self.width();
                let mut rows = Vec::with_capacity(n * k);
                for i in 0..n {
                    for j in 0..k {
                        rows.push((weights[j][i].as_slice(), bias[j][i]));
                    }
                }
                rows
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearOutput {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

/// Box or unrestricted input space.
#[derive(Debug, Clone, PartialEq)]
pub enum InputDomain {
    Box { lower: Vec<f64>, upper: Vec<f64> },
    Unrestricted,
}

impl InputDomain {
    /// The box `[lo, hi]^dim`.
    pub fn uniform(dim: usize, lo: f64, hi: f64) -> Self {
        InputDomain::Box {
            lower: vec![lo; dim],
            upper: vec![hi; dim],
        }
    }

    pub fn check(&self, dim: usize) -> Result<()> {
        if let InputDomain::Box { lower, upper } = self {
            if lower.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: lower.len(),
                });
            }
            if upper.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: upper.len(),
                });
            }
            for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                if !l.is_finite() || !u.is_finite() {
                    return Err(Error::NonFinite("input box"));
                }
                if l > u {
                    return Err(Error::precondition(format!(
                        "box lower bound exceeds upper bound in coordinate {}",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_bounded(&self) -> bool {
        matches!(self, InputDomain::Box { .. })
    }
}

/// Input-space affine form `matrix * x + offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub matrix: Matrix,
    pub offset: Vec<f64>,
}

impl AffineMap {
    pub fn identity(dim: usize) -> Self {
        let matrix = (0..dim)
            .map(|i| (0..dim).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        AffineMap {
            matrix,
            offset: vec![0.0; dim],
        }
    }

    pub fn rows(&self) -> usize {
        self.offset.len()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.offset)
            .map(|(row, c)| dot(row, x) + c)
            .collect()
    }

    /// `layer_rows` applied after `self`: rows of `W * self`.
    pub(crate) fn then(&self, layer_rows: &[(&[f64], f64)], input_dim: usize) -> AffineMap {
        let mut matrix = Vec::with_capacity(layer_rows.len());
        let mut offset = Vec::with_capacity(layer_rows.len());
        for (w, b) in layer_rows {
            let mut row = vec![0.0; input_dim];
            let mut c = *b;
            for (j, &wj) in w.iter().enumerate() {
                if wj == 0.0 {
                    continue;
                }
                for (r, a) in row.iter_mut().zip(&self.matrix[j]) {
                    *r += wj * a;
                }
                c += wj * self.offset[j];
            }
            matrix.push(row);
            offset.push(c);
        }
        AffineMap { matrix, offset }
    }

    /// Numerical rank of the linear part.
    pub fn rank(&self, tolerance: f64) -> usize {
        numerical_rank(&self.matrix, tolerance)
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn numerical_rank(matrix: &Matrix, tolerance: f64) -> usize {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if rows == 0 || cols == 0 {
        return 0;
    }
    let m = DMatrix::from_fn(rows, cols, |i, j| matrix[i][j]);
    let sv = m.singular_values();
    let largest = sv.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = tolerance * largest.max(1.0);
    sv.iter().filter(|&&s| s > cutoff).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    Shape,
    NonFinite,
    Rank,
    Empty,
}

/// One invariant failure reported by [`Network::validate`]. `layer` is
/// 1-based; `None` refers to the network header or the output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub layer: Option<usize>,
    pub kind: ViolationKind,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.layer {
            Some(l) => write!(f, "layer {l}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub input_dim: usize,
    pub layers: Vec<Layer>,
    pub output: Option<LinearOutput>,
}

impl Network {
    pub fn new(input_dim: usize, layers: Vec<Layer>) -> Self {
        Network {
            input_dim,
            layers,
            output: None,
        }
    }

    pub fn with_output(mut self, output: LinearOutput) -> Self {
        self.output = Some(output);
        self
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        self.layers.iter().map(Layer::width).collect()
    }

    pub fn hidden_units(&self) -> usize {
        self.layers.iter().map(Layer::width).sum()
    }

    pub fn has_maxout(&self) -> bool {
        self.layers.iter().any(Layer::is_maxout)
    }

    /// Every shape and finiteness violation, in layer order.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.input_dim == 0 {
            out.push(Violation {
                layer: None,
                kind: ViolationKind::Empty,
                message: "input_dim must be positive".into(),
            });
        }
        let mut prev = self.input_dim;
        for (idx, layer) in self.layers.iter().enumerate() {
            let l = Some(idx + 1);
            match layer {
                Layer::Relu { weights, bias } => {
                    check_block(&mut out, l, weights, bias, prev, "weights", "bias");
                }
                Layer::Maxout { weights, bias } => {
                    if weights.len() < 2 {
                        out.push(Violation {
                            layer: l,
                            kind: ViolationKind::Rank,
                            message: "rank must be ≥ 2".into(),
                        });
                    }
                    if weights.len() != bias.len() {
                        out.push(Violation {
                            layer: l,
                            kind: ViolationKind::Shape,
                            message: format!("{} weight matrices but {} bias vectors", weights.len(), bias.len()),
                        });
                    }
                    let n = layer.width();
                    for (j, (w, b)) in weights.iter().zip(bias).enumerate() {
                        if b.len() != n {
                            out.push(Violation {
                                layer: l,
                                kind: ViolationKind::Shape,
                                message: format!("piece {} has {} units, piece 1 has {n}", j + 1, b.len()),
                            });
                        }
                        check_block(
                            &mut out,
                            l,
                            w,
                            b,
                            prev,
                            &format!("weights[{}]", j + 1),
                            &format!("bias[{}]", j + 1),
                        );
                    }
                }
            }
            if layer.width() == 0 {
                out.push(Violation {
                    layer: l,
                    kind: ViolationKind::Empty,
                    message: "layer has no units".into(),
                });
            }
            prev = layer.width();
        }
        if let Some(o) = &self.output {
            let mut tmp = Vec::new();
            check_block(
                &mut tmp,
                None,
                &o.weights,
                &o.bias,
                prev,
                "output weights",
                "output bias",
            );
            out.extend(tmp);
        }
        out
    }

    pub fn check(&self) -> Result<()> {
        match self.validate().first() {
            None => Ok(()),
            Some(v) if v.kind == ViolationKind::NonFinite => Err(Error::NonFinite("network weights")),
            Some(v) => Err(Error::InvalidNetwork(v.to_string())),
        }
    }

    /// Network output and the activation pattern of `x`. A ReLU is active
    /// iff its preactivation is strictly positive; maxout ties go to the
    /// lowest piece index.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ActivationPattern)> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut h = x.to_vec();
        let mut pattern = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            match layer {
                Layer::Relu { weights, bias } => {
                    let mut active = Vec::with_capacity(bias.len());
                    let next = weights
                        .iter()
                        .zip(bias)
                        .map(|(row, b)| {
                            let z = dot(row, &h) + b;
                            active.push(z > 0.0);
                            z.max(0.0)
                        })
                        .collect();
                    pattern.push(LayerActivation::Relu(active));
                    h = next;
                }
                Layer::Maxout { weights, bias } => {
                    let n = layer.width();
                    let mut winners = Vec::with_capacity(n);
                    let mut next = Vec::with_capacity(n);
                    for i in 0..n {
                        let mut best = 0;
                        let mut best_val = dot(&weights[0][i], &h) + bias[0][i];
                        for j in 1..weights.len() {
                            let v = dot(&weights[j][i], &h) + bias[j][i];
                            if v > best_val {
                                best = j;
                                best_val = v;
                            }
                        }
                        winners.push(best);
                        next.push(best_val);
                    }
                    pattern.push(LayerActivation::Maxout(winners));
                    h = next;
                }
            }
        }
        if let Some(o) = &self.output {
            h = o.weights.iter().zip(&o.bias).map(|(row, b)| dot(row, &h) + b).collect();
        }
        Ok((h, ActivationPattern::new(pattern)))
    }

    fn check_entry(&self, layer_idx: usize, act: &LayerActivation) -> Result<()> {
        let layer = &self.layers[layer_idx];
        let ok = match (layer, act) {
            (Layer::Relu { .. }, LayerActivation::Relu(a)) => a.len() == layer.width(),
            (Layer::Maxout { weights, .. }, LayerActivation::Maxout(w)) => {
                w.len() == layer.width() && w.iter().all(|&j| j < weights.len())
            }
            _ => false,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::precondition(format!(
                "activation entry for layer {} does not match the layer",
                layer_idx + 1
            )))
        }
    }

    /// Post-activation input-space map of the region `prefix`: rows of
    /// `σ(W^t) ··· σ(W^1)` (or the maxout selections) with offsets.
    pub fn region_output_map(&self, prefix: &ActivationPattern) -> Result<AffineMap> {
        if prefix.len() > self.layers.len() {
            return Err(Error::PrefixLength {
                expected: self.layers.len(),
                got: prefix.len(),
            });
        }
        let mut map = AffineMap::identity(self.input_dim);
        for (t, act) in prefix.layers().iter().enumerate() {
            self.check_entry(t, act)?;
            let pre = map.then(&self.layers[t].preactivation_rows(), self.input_dim);
            map = act.select(pre, self.layers[t].rank().unwrap_or(1));
        }
        Ok(map)
    }

    /// Input-space preactivations of `layer` (1-based) inside the region
    /// given by `prefix`, which must cover exactly layers `1..layer-1`.
    /// Maxout layers yield `k` rows per unit, unit-major.
    pub fn compose_region_map(&self, prefix: &ActivationPattern, layer: usize) -> Result<AffineMap> {
        if layer == 0 || layer > self.layers.len() {
            return Err(Error::LayerIndex(layer));
        }
        if prefix.len() != layer - 1 {
            return Err(Error::PrefixLength {
                expected: layer - 1,
                got: prefix.len(),
            });
        }
        let map = self.region_output_map(prefix)?;
        Ok(map.then(&self.layers[layer - 1].preactivation_rows(), self.input_dim))
    }

    /// Dimension of the image of the region under `h^l`, where `l` is the
    /// number of layers `pattern` covers. The empty pattern gives the input
    /// dimension.
    pub fn region_image_dimension(&self, pattern: &ActivationPattern) -> Result<usize> {
        self.region_image_dimension_with_tolerance(pattern, RANK_TOLERANCE)
    }

    pub fn region_image_dimension_with_tolerance(&self, pattern: &ActivationPattern, tolerance: f64) -> Result<usize> {
        Ok(self.region_output_map(pattern)?.rank(tolerance))
    }

    /// Copy with unit `unit` of layer `layer` (both 1-based, ReLU only) scaled
    /// by `c > 0` and its outgoing weights divided by `c`. The network function
    /// and all activation patterns are unchanged.
    pub fn rescaled_unit(&self, layer: usize, unit: usize, c: f64) -> Result<Network> {
        if c.is_nan() || c <= 0.0 || !c.is_finite() {
            return Err(Error::precondition("rescaling factor must be positive"));
        }
        let mut net = self.clone();
        let li = layer.checked_sub(1).ok_or(Error::LayerIndex(layer))?;
        let ui = unit.checked_sub(1).ok_or(Error::LayerIndex(layer))?;
        match net.layers.get_mut(li) {
            Some(Layer::Relu { weights, bias }) if ui < bias.len() => {
                weights[ui].iter_mut().for_each(|w| *w *= c);
                bias[ui] *= c;
            }
            Some(_) => return Err(Error::precondition("rescaling needs an existing ReLU unit")),
            None => return Err(Error::LayerIndex(layer)),
        }
        let divide = |m: &mut Matrix| m.iter_mut().for_each(|row| row[ui] /= c);
        match net.layers.get_mut(li + 1) {
            Some(Layer::Relu { weights, .. }) => divide(weights),
            Some(Layer::Maxout { weights, .. }) => weights.iter_mut().for_each(divide),
            None => {
                if let Some(o) = net.output.as_mut() {
                    divide(&mut o.weights);
                }
            }
        }
        Ok(net)
    }

    /// Copy with the units of `layer` (1-based) reordered so that new unit `i`
    /// is old unit `perm[i]`; the next layer's columns follow.
    pub fn permuted_layer(&self, layer: usize, perm: &[usize]) -> Result<Network> {
        let li = layer.checked_sub(1).ok_or(Error::LayerIndex(layer))?;
        let n = self.layers.get(li).ok_or(Error::LayerIndex(layer))?.width();
        let mut seen = vec![false; n];
        if perm.len() != n || !perm.iter().all(|&p| p < n && !std::mem::replace(&mut seen[p], true)) {
            return Err(Error::precondition("not a permutation of the layer's units"));
        }
        let mut net = self.clone();
        let reorder_rows = |m: &Matrix| perm.iter().map(|&p| m[p].clone()).collect::<Matrix>();
        let reorder_vec = |v: &Vec<f64>| perm.iter().map(|&p| v[p]).collect::<Vec<f64>>();
        net.layers[li] = match &self.layers[li] {
            Layer::Relu { weights, bias } => Layer::relu(reorder_rows(weights), reorder_vec(bias)),
            Layer::Maxout { weights, bias } => Layer::maxout(
                weights.iter().map(reorder_rows).collect(),
                bias.iter().map(reorder_vec).collect(),
            ),
        };
        let reorder_cols = |m: &mut Matrix| {
            for row in m.iter_mut() {
                *row = perm.iter().map(|&p| row[p]).collect();
            }
        };
        match net.layers.get_mut(li + 1) {
            Some(Layer::Relu { weights, .. }) => reorder_cols(weights),
            Some(Layer::Maxout { weights, .. }) => weights.iter_mut().for_each(reorder_cols),
            None => {
                if let Some(o) = net.output.as_mut() {
                    reorder_cols(&mut o.weights);
                }
            }
        }
        Ok(net)
    }
}

fn check_block(
    out: &mut Vec<Violation>,
    layer: Option<usize>,
    weights: &Matrix,
    bias: &[f64],
    cols: usize,
    wname: &str,
    bname: &str,
) {
    if weights.len() != bias.len() {
        out.push(Violation {
            layer,
            kind: ViolationKind::Shape,
            message: format!(
                "{wname} has {} rows but {bname} has {} entries",
                weights.len(),
                bias.len()
            ),
        });
    }
    if let Some((r, row)) = weights.iter().enumerate().find(|(_, row)| row.len() != cols) {
        out.push(Violation {
            layer,
            kind: ViolationKind::Shape,
            message: format!("{wname} row {} has {} columns, expected {cols}", r + 1, row.len()),
        });
    }
    if weights.iter().flatten().chain(bias).any(|v| !v.is_finite()) {
        out.push(Violation {
            layer,
            kind: ViolationKind::NonFinite,
            message: format!("{wname}/{bname} contain a non-finite value"),
        });
    }
}
