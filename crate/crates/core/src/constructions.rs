//! Networks that attain known region counts.
//!
//! The building block is a one-input layer of `n ≥ 3` ReLUs whose signed sum
//! `h̃(x) = Σ s_i h_i(x) + d` zigzags between 0 and 1 across `n + 1` pieces of
//! `[0, 1]`. Stacking such layers replicates the zigzag inside every piece, and
//! running `n0` of them side by side covers the unit cube.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::network::{Layer, LinearOutput, Matrix, Network};

/// A solved zigzag layer. Unit `i` computes `h_i = max{0, w̃_i x + b̃_i}` and
/// switches at `t_i`; all units point right except the third.
#[derive(Debug, Clone, PartialEq)]
pub struct ZigzagSpec {
    pub n: usize,
    /// `t_1 < … < t_n` in `(0, 1)`.
    pub breakpoints: Vec<f64>,
    /// Signed contributions `w_i = s_i w̃_i`.
    pub weights: Vec<f64>,
    /// Signed contributions `b_i = s_i b̃_i`.
    pub biases: Vec<f64>,
    pub signs: Vec<f64>,
    pub offset: f64,
    pub relu_weights: Vec<f64>,
    pub relu_biases: Vec<f64>,
}

impl ZigzagSpec {
    /// Unit outputs at `x`.
    pub fn units(&self, x: f64) -> Vec<f64> {
        self.relu_weights
            .iter()
            .zip(&self.relu_biases)
            .map(|(w, b)| (w * x + b).max(0.0))
            .collect()
    }

    /// `h̃(x) = s · h(x) + d`.
    pub fn eval(&self, x: f64) -> f64 {
        self.units(x).iter().zip(&self.signs).map(|(h, s)| h * s).sum::<f64>() + self.offset
    }

    /// `1/t_1 − 1/(t_3 − t_2) − 1/(t_4 − t_3)` with `t_{n+1} = 1`; zero when the
    /// breakpoints admit a solution.
    pub fn consistency_residual(&self) -> f64 {
        let t = |i: usize| if i == self.n + 1 { 1.0 } else { self.breakpoints[i - 1] };
        1.0 / t(1) - 1.0 / (t(3) - t(2)) - 1.0 / (t(4) - t(3))
    }

    pub fn layer(&self) -> Layer {
        Layer::relu(
            self.relu_weights.iter().map(|&w| vec![w]).collect(),
            self.relu_biases.clone(),
        )
    }

    /// The layer on one input with `h̃` as the linear output.
    pub fn network(&self) -> Network {
        Network::new(1, vec![self.layer()]).with_output(self.readout())
    }

    fn readout(&self) -> LinearOutput {
        LinearOutput {
            weights: vec![self.signs.clone()],
            bias: vec![self.offset],
        }
    }
}

/// Zigzag layer of `n ≥ 3` units with breakpoints `t_1 = 1/(2n+1)` and
/// `t_i = (2i−1)/(2n+1)`.
///
/// Piece `R_i` on `[t_{i−1}, t_i]` (with `t_0 = 0`, `t_{n+1} = 1`) rises from 0
/// to 1 for odd `i` and falls for even `i`. Walking left to right the active
/// sets are `{3}`, `{1,3}`, `{1,2,3}`, `{1,2}`, `{1,2,4}`, …, so consecutive
/// pieces differ by one unit and the signed weights follow from slope and
/// intercept differences.
pub fn zigzag_layer(n: usize) -> Result<ZigzagSpec> {
    if n < 3 {
        return Err(Error::precondition(format!("zigzag needs at least 3 units, got {n}")));
    }
    let denom = (2 * n + 1) as f64;
    let mut t = vec![0.0; n + 2];
    t[1] = 1.0 / denom;
    for (i, ti) in t.iter_mut().enumerate().take(n + 1).skip(2) {
        *ti = (2 * i - 1) as f64 / denom;
    }
    t[n + 1] = 1.0;

    // slope and intercept of piece i (1-based)
    let piece = |i: usize| -> (f64, f64) {
        let (s, e) = (t[i - 1], t[i]);
        if i % 2 == 1 {
            (1.0 / (e - s), -s / (e - s))
        } else {
            (-1.0 / (e - s), e / (e - s))
        }
    };
    let (sl, ic): (Vec<f64>, Vec<f64>) = (0..=n + 1).map(|i| if i == 0 { (0.0, 0.0) } else { piece(i) }).unzip();

    let mut w = vec![0.0; n + 1];
    let mut b = vec![0.0; n + 1];
    w[3] = sl[1];
    w[1] = sl[2] - sl[1];
    w[2] = sl[3] - sl[2];
    b[3] = ic[3] - ic[4];
    let d = ic[1] - b[3];
    b[1] = ic[2] - ic[1];
    b[2] = ic[3] - ic[2];
    for i in 5..=n + 1 {
        w[i - 1] = sl[i] - sl[i - 1];
        b[i - 1] = ic[i] - ic[i - 1];
    }

    let signs: Vec<f64> = (1..=n)
        .map(|i| {
            let nonneg = w[i] >= 0.0;
            // unit 3 points left, so its ReLU slope must be negative
            if (i == 3) ^ nonneg {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let weights = w[1..].to_vec();
    let biases = b[1..].to_vec();
    Ok(ZigzagSpec {
        n,
        breakpoints: t[1..=n].to_vec(),
        relu_weights: weights.iter().zip(&signs).map(|(w, s)| w * s).collect(),
        relu_biases: biases.iter().zip(&signs).map(|(b, s)| b * s).collect(),
        weights,
        biases,
        signs,
        offset: d,
    })
}

/// Stack of zigzag layers on one input. Each layer's readout `h̃` is folded
/// into the next layer's weights, so unit `i` of layer `l+1` sees
/// `w̃_i (s · h^l + d) + b̃_i`. The last readout becomes the linear output.
pub fn deep_1d(widths: &[usize]) -> Result<Network> {
    if widths.is_empty() {
        return Err(Error::precondition("deep_1d needs at least one layer"));
    }
    let specs = widths.iter().map(|&n| zigzag_layer(n)).collect::<Result<Vec<_>>>()?;
    let mut layers = Vec::with_capacity(specs.len());
    for (l, spec) in specs.iter().enumerate() {
        if l == 0 {
            layers.push(spec.layer());
            continue;
        }
        let prev = &specs[l - 1];
        let (weights, bias) = fold(spec, &prev.signs, prev.offset);
        layers.push(Layer::relu(weights, bias));
    }
    let last = specs.last().expect("non-empty");
    Ok(Network::new(1, layers).with_output(last.readout()))
}

/// Rows of `spec` reading `s · h + d` from the previous block.
fn fold(spec: &ZigzagSpec, signs: &[f64], offset: f64) -> (Matrix, Vec<f64>) {
    let weights = spec
        .relu_weights
        .iter()
        .map(|&wt| signs.iter().map(|s| wt * s).collect())
        .collect();
    let bias = spec
        .relu_weights
        .iter()
        .zip(&spec.relu_biases)
        .map(|(wt, bt)| wt * offset + bt)
        .collect();
    (weights, bias)
}

const DET_TOLERANCE: f64 = 1e-9;
const MAX_DRAWS: usize = 10_000;

/// `n0` independent zigzag stacks of `⌊n_l/n0⌋` units per layer followed by a
/// last layer of `n_L` hyperplanes in general position in the cube of
/// readouts. Remainder units have zero weights and bias. Intended domain:
/// `[0, 1]^n0`.
pub fn multi_dim(n0: usize, widths: &[usize], seed: u64) -> Result<Network> {
    if n0 == 0 || widths.is_empty() {
        return Err(Error::precondition("multi_dim needs n0 ≥ 1 and at least one layer"));
    }
    if let Some(&n) = widths.iter().find(|&&n| n < 3 * n0) {
        return Err(Error::precondition(format!(
            "layer width {n} is below 3·n0 = {}",
            3 * n0
        )));
    }
    let depth = widths.len();
    let mut layers = Vec::with_capacity(depth);
    let mut prev_specs: Option<(ZigzagSpec, usize)> = None;
    let mut prev_width = n0;
    for &width in &widths[..depth - 1] {
        let m = width / n0;
        let spec = zigzag_layer(m)?;
        let mut weights = vec![vec![0.0; prev_width]; width];
        let mut bias = vec![0.0; width];
        for blk in 0..n0 {
            let rows = match &prev_specs {
                None => {
                    let mut w = vec![vec![0.0; 1]; m];
                    for (i, row) in w.iter_mut().enumerate() {
                        row[0] = spec.relu_weights[i];
                    }
                    (w, spec.relu_biases.clone())
                }
                Some((p, _)) => fold(&spec, &p.signs, p.offset),
            };
            let (cols, col0) = match &prev_specs {
                None => (1, blk),
                Some((_, pm)) => (*pm, blk * pm),
            };
            for i in 0..m {
                for c in 0..cols {
                    weights[blk * m + i][col0 + c] = rows.0[i][c];
                }
                bias[blk * m + i] = rows.1[i];
            }
        }
        layers.push(Layer::relu(weights, bias));
        prev_specs = Some((spec, m));
        prev_width = width;
    }

    let n_last = widths[depth - 1];
    let (normals, offsets) = general_position(n0, n_last, seed)?;
    let mut weights = vec![vec![0.0; prev_width]; n_last];
    let mut bias = offsets.clone();
    for i in 0..n_last {
        match &prev_specs {
            None => weights[i][..n0].copy_from_slice(&normals[i]),
            Some((p, pm)) => {
                for blk in 0..n0 {
                    let a = normals[i][blk];
                    for c in 0..*pm {
                        weights[i][blk * pm + c] = a * p.signs[c];
                    }
                    bias[i] += a * p.offset;
                }
            }
        }
    }
    layers.push(Layer::relu(weights, bias));
    Ok(Network::new(n0, layers))
}

/// `count` hyperplanes `a·y + c = 0` in `R^dim` with every `dim`-subset of
/// normals independent, no `dim + 1` of them concurrent, and every vertex
/// inside `(0.1, 0.9)^dim`.
fn general_position(dim: usize, count: usize, seed: u64) -> Result<(Matrix, Vec<f64>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        let mut normals: Matrix = Vec::with_capacity(count);
        let mut offsets = Vec::with_capacity(count);
        for i in 0..count {
            let a: Vec<f64> = if dim == 2 {
                let theta = std::f64::consts::PI * (i as f64 + rng.gen_range(0.2..0.8)) / count as f64;
                vec![theta.cos(), theta.sin()]
            } else {
                (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect()
            };
            let p: Vec<f64> = (0..dim).map(|_| 0.5 + rng.gen_range(-0.02..0.02)).collect();
            offsets.push(-a.iter().zip(&p).map(|(x, y)| x * y).sum::<f64>());
            normals.push(a);
        }
        if in_general_position(&normals, &offsets) {
            return Ok((normals, offsets));
        }
    }
    Err(Error::Numerical("no general-position arrangement found".into()))
}

fn in_general_position(normals: &Matrix, offsets: &[f64]) -> bool {
    let dim = normals[0].len();
    let n = normals.len();
    let ok_vertex = |idx: &[usize]| -> bool {
        let a = nalgebra::DMatrix::from_fn(dim, dim, |r, c| normals[idx[r]][c]);
        if a.determinant().abs() <= DET_TOLERANCE {
            return false;
        }
        let rhs = nalgebra::DVector::from_fn(dim, |r, _| -offsets[idx[r]]);
        match a.lu().solve(&rhs) {
            Some(v) => v.iter().all(|&y| y > 0.1 && y < 0.9),
            None => false,
        }
    };
    let ok_concurrent = |idx: &[usize]| -> bool {
        let m = nalgebra::DMatrix::from_fn(dim + 1, dim + 1, |r, c| {
            if c < dim {
                normals[idx[r]][c]
            } else {
                offsets[idx[r]]
            }
        });
        m.determinant().abs() > DET_TOLERANCE
    };
    if n >= dim && !subsets(n, dim).iter().all(|s| ok_vertex(s)) {
        return false;
    }
    n <= dim || subsets(n, dim + 1).iter().all(|s| ok_concurrent(s))
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    rec(0, n, k, &mut cur, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_unit_layer() {
        let z = zigzag_layer(4).unwrap();
        let expect = [1.0 / 9.0, 3.0 / 9.0, 5.0 / 9.0, 7.0 / 9.0];
        for (t, e) in z.breakpoints.iter().zip(expect) {
            assert!((t - e).abs() < 1e-15);
        }
        let want_w = [13.5, 9.0, -9.0, 9.0];
        let want_b = [-1.5, -3.0, 5.0, -7.0];
        for i in 0..4 {
            assert!((z.relu_weights[i] - want_w[i]).abs() < 1e-12, "{:?}", z.relu_weights);
            assert!((z.relu_biases[i] - want_b[i]).abs() < 1e-12, "{:?}", z.relu_biases);
        }
        assert_eq!(z.signs, vec![-1.0, 1.0, -1.0, 1.0]);
        assert!((z.offset - 5.0).abs() < 1e-12);
    }

    #[test]
    fn zigzag_endpoints_alternate() {
        for n in 3..=12 {
            let z = zigzag_layer(n).unwrap();
            let mut pts = vec![0.0];
            pts.extend(&z.breakpoints);
            pts.push(1.0);
            for (k, &x) in pts.iter().enumerate() {
                let want = if k % 2 == 0 { 0.0 } else { 1.0 };
                assert!((z.eval(x) - want).abs() < 1e-7, "n={n} x={x}");
            }
            assert!(z.consistency_residual().abs() < 1e-9);
            // unit i switches exactly at t_i
            for (i, &t) in z.breakpoints.iter().enumerate() {
                assert!((z.relu_weights[i] * t + z.relu_biases[i]).abs() < 1e-9);
                assert_eq!(z.relu_weights[i] > 0.0, i != 2);
            }
        }
    }

    #[test]
    fn too_few_units() {
        assert!(zigzag_layer(2).is_err());
        assert!(deep_1d(&[3, 2]).is_err());
        assert!(multi_dim(2, &[5], 0).is_err());
    }

    #[test]
    fn deep_readout_composes() {
        let net = deep_1d(&[3, 4]).unwrap();
        let (a, b) = (zigzag_layer(3).unwrap(), zigzag_layer(4).unwrap());
        for k in 0..=50 {
            let x = k as f64 / 50.0;
            let (y, _) = net.forward(&[x]).unwrap();
            assert!((y[0] - b.eval(a.eval(x))).abs() < 1e-9);
        }
    }

    #[test]
    fn multi_dim_shapes_and_determinism() {
        let net = multi_dim(2, &[7, 6], 3).unwrap();
        assert_eq!(net.widths(), vec![7, 6]);
        assert!(net.validate().is_empty());
        // remainder unit has zero weights and bias
        if let Layer::Relu { weights, bias } = &net.layers[0] {
            assert_eq!(weights[6], vec![0.0, 0.0]);
            assert_eq!(bias[6], 0.0);
        }
        assert_eq!(net, multi_dim(2, &[7, 6], 3).unwrap());
    }
}
