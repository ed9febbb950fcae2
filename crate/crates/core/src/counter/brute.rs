//! Reference counters: exhaustive pattern enumeration and grid sampling.

use std::collections::BTreeSet;
use std::time::Instant;

use super::{CountResult, CounterOptions, Witness, DEFAULT_EPSILON};
use crate::bounds::BigCount;
use crate::error::{Error, Result};
use crate::feasibility::{max_margin, FeasibilityQuery, Row, Verdict};
use crate::network::{dot, ActivationPattern, InputDomain, Layer, LayerActivation, Network};

const MAX_RELU_UNITS: usize = 20;
const MAX_MAXOUT_PATTERNS: u128 = 1_000_000;
const MAX_GRID_POINTS: u128 = 100_000_000;

/// Input-space rows of `pattern`, composed layer by layer through the public
/// network API.
fn pattern_query(net: &Network, pattern: &ActivationPattern, domain: &InputDomain) -> Result<FeasibilityQuery> {
    let mut q = FeasibilityQuery::new(net.input_dim, domain.clone());
    for (l, act) in pattern.layers().iter().enumerate() {
        let map = net.compose_region_map(&pattern.truncated(l), l + 1)?;
        match act {
            LayerActivation::Relu(active) => {
                for (i, &on) in active.iter().enumerate() {
                    let row = Row::new(map.matrix[i].clone(), -map.offset[i]);
                    if on {
                        q.margin.push(row);
                    } else {
                        q.hard.push(row);
                    }
                }
            }
            LayerActivation::Maxout(winners) => {
                let k = net.layers[l].rank().unwrap_or(1);
                for (i, &j) in winners.iter().enumerate() {
                    let (aj, oj) = (&map.matrix[i * k + j], map.offset[i * k + j]);
                    for jj in (0..k).filter(|&jj| jj != j) {
                        let (ab, ob) = (&map.matrix[i * k + jj], map.offset[i * k + jj]);
                        let diff = aj.iter().zip(ab).map(|(x, y)| x - y).collect();
                        q.margin.push(Row::new(diff, ob - oj));
                    }
                }
            }
        }
    }
    Ok(q)
}

/// Counts regions by solving one margin LP per pattern in `∏ radix^width`.
/// Same contract as the tree counters; refuses more than 2^20 ReLU patterns
/// or 10^6 patterns when maxout layers are present.
pub fn brute_force_count(net: &Network, opts: &CounterOptions) -> Result<CountResult> {
    opts.check(net)?;
    let radices: Vec<u128> = net
        .layers
        .iter()
        .flat_map(|l| std::iter::repeat_n(l.rank().unwrap_or(2) as u128, l.width()))
        .collect();
    if net.has_maxout() {
        let total = radices.iter().try_fold(1u128, |acc, &r| {
            acc.checked_mul(r).filter(|&p| p <= MAX_MAXOUT_PATTERNS)
        });
        if total.is_none() {
            return Err(Error::SizeGuard(format!(
                "more than {MAX_MAXOUT_PATTERNS} maxout patterns"
            )));
        }
    } else if radices.len() > MAX_RELU_UNITS {
        return Err(Error::SizeGuard(format!(
            "{} ReLU units exceed the limit of {MAX_RELU_UNITS}",
            radices.len()
        )));
    }

    let start = Instant::now();
    let total: u128 = radices.iter().product();
    let mut digits = vec![0usize; radices.len()];
    let mut count = 0u64;
    let mut nodes = 0u64;
    let mut witnesses = Vec::new();
    for _ in 0..total {
        let pattern = digits_to_pattern(net, &digits);
        let q = pattern_query(net, &pattern, &opts.domain)?;
        nodes += 1;
        let verdict = max_margin(&q, opts.lp_tolerance)?;
        if verdict.exceeds(opts.epsilon) {
            count += 1;
            if opts.collect_witnesses {
                let (point, margin) = match verdict {
                    Verdict::Feasible { witness, margin } => (witness, Some(margin)),
                    Verdict::MarginUnbounded { witness } => (witness, None),
                    Verdict::Infeasible => unreachable!(),
                };
                witnesses.push(Witness { pattern, point, margin });
            }
        }
        // mixed-radix increment, last unit fastest
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if (digits[pos] as u128) < radices[pos] {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(CountResult {
        count: BigCount::from(count),
        witnesses: opts.collect_witnesses.then_some(witnesses),
        nodes,
        pruned: nodes - count,
        seconds: start.elapsed().as_secs_f64(),
        capped: false,
        certification: None,
    })
}

fn digits_to_pattern(net: &Network, digits: &[usize]) -> ActivationPattern {
    let mut pos = 0;
    let mut layers = Vec::with_capacity(net.depth());
    for layer in &net.layers {
        let d = &digits[pos..pos + layer.width()];
        pos += layer.width();
        layers.push(match layer.rank() {
            None => LayerActivation::Relu(d.iter().map(|&v| v == 1).collect()),
            Some(_) => LayerActivation::Maxout(d.to_vec()),
        });
    }
    ActivationPattern::new(layers)
}

/// Forward pattern of `x` together with its margin: the smallest active ReLU
/// preactivation or maxout winner gap (`+inf` when there is none).
pub fn forward_margin(net: &Network, x: &[f64]) -> Result<(ActivationPattern, f64)> {
    if x.len() != net.input_dim {
        return Err(Error::DimensionMismatch {
            expected: net.input_dim,
            got: x.len(),
        });
    }
    let mut h = x.to_vec();
    let mut margin = f64::INFINITY;
    let mut layers = Vec::with_capacity(net.depth());
    for layer in &net.layers {
        match layer {
            Layer::Relu { weights, bias } => {
                let pre: Vec<f64> = weights.iter().zip(bias).map(|(w, b)| dot(w, &h) + b).collect();
                for &z in pre.iter().filter(|&&z| z > 0.0) {
                    margin = margin.min(z);
                }
                layers.push(LayerActivation::Relu(pre.iter().map(|&z| z > 0.0).collect()));
                h = pre.into_iter().map(|z| z.max(0.0)).collect();
            }
            Layer::Maxout { weights, bias } => {
                let mut winners = Vec::with_capacity(layer.width());
                let mut next = Vec::with_capacity(layer.width());
                for i in 0..layer.width() {
                    let vals: Vec<f64> = (0..weights.len())
                        .map(|j| dot(&weights[j][i], &h) + bias[j][i])
                        .collect();
                    let mut best = 0;
                    for j in 1..vals.len() {
                        if vals[j] > vals[best] {
                            best = j;
                        }
                    }
                    let gap = vals
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != best)
                        .map(|(_, v)| vals[best] - v)
                        .fold(f64::INFINITY, f64::min);
                    margin = margin.min(gap);
                    winners.push(best);
                    next.push(vals[best]);
                }
                layers.push(LayerActivation::Maxout(winners));
                h = next;
            }
        }
    }
    Ok((ActivationPattern::new(layers), margin))
}

/// Distinct patterns seen at the cell centres of a `resolution^n0` grid,
/// keeping only points whose margin exceeds the default epsilon. Every kept
/// point witnesses a counted region, so the result never exceeds the exact
/// count.
pub fn grid_sample_count(net: &Network, domain: &InputDomain, resolution: usize) -> Result<BigCount> {
    net.check()?;
    domain.check(net.input_dim)?;
    let InputDomain::Box { lower, upper } = domain else {
        return Err(Error::UnboundedDomain);
    };
    if resolution == 0 {
        return Err(Error::precondition("resolution must be positive"));
    }
    let n = net.input_dim;
    let points = (resolution as u128)
        .checked_pow(n as u32)
        .filter(|&p| p <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::SizeGuard(format!("{resolution}^{n} grid points exceed {MAX_GRID_POINTS}")))?;
    let mut seen = BTreeSet::new();
    let mut idx = vec![0usize; n];
    let mut x = vec![0.0; n];
    for _ in 0..points {
        for j in 0..n {
            x[j] = lower[j] + (upper[j] - lower[j]) * (idx[j] as f64 + 0.5) / resolution as f64;
        }
        let (pattern, margin) = forward_margin(net, &x)?;
        if margin > DEFAULT_EPSILON {
            seen.insert(pattern);
        }
        for j in (0..n).rev() {
            idx[j] += 1;
            if idx[j] < resolution {
                break;
            }
            idx[j] = 0;
        }
    }
    Ok(BigCount::from(seen.len()))
}
