//! Exact upper and lower bounds on the number of linear regions of ReLU and
//! maxout networks.
//!
//! Everything except [`asymptotic_cap`] is computed in arbitrary precision.

use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::{One, Zero};

use crate::error::{Error, Result};

/// Exact nonnegative region count.
pub type BigCount = BigUint;

/// Architecture summary used by the bound formulas.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetConfig {
    pub input_dim: usize,
    pub widths: Vec<usize>,
    /// Per-layer `rank(W^l)` caps for the rank-refined bound.
    pub rank_caps: Option<Vec<usize>>,
    pub maxout_rank: Option<usize>,
}

impl NetConfig {
    pub fn new(input_dim: usize, widths: impl Into<Vec<usize>>) -> Self {
        NetConfig {
            input_dim,
            widths: widths.into(),
            rank_caps: None,
            maxout_rank: None,
        }
    }

    pub fn with_rank_caps(mut self, caps: impl Into<Vec<usize>>) -> Self {
        self.rank_caps = Some(caps.into());
        self
    }

    pub fn with_maxout_rank(mut self, k: usize) -> Self {
        self.maxout_rank = Some(k);
        self
    }

    pub fn depth(&self) -> usize {
        self.widths.len()
    }

    pub fn total_units(&self) -> usize {
        self.widths.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return Err(Error::precondition("input dimension must be positive"));
        }
        if self.widths.contains(&0) {
            return Err(Error::precondition("layer widths must be positive"));
        }
        if let Some(caps) = &self.rank_caps {
            if caps.len() != self.widths.len() {
                return Err(Error::precondition("one rank cap per layer is required"));
            }
            if caps.iter().zip(&self.widths).any(|(c, w)| c > w) {
                return Err(Error::precondition("rank caps cannot exceed layer widths"));
            }
        }
        if let Some(k) = self.maxout_rank {
            if k < 2 {
                return Err(Error::precondition("maxout rank must be at least 2"));
            }
        }
        Ok(())
    }

    fn require_layers(&self) -> Result<()> {
        self.validate()?;
        if self.widths.is_empty() {
            return Err(Error::precondition("at least one hidden layer is required"));
        }
        Ok(())
    }
}

/// `C(n, k)`, zero when `k > n`.
pub fn binomial(n: u64, k: u64) -> BigCount {
    if k > n {
        return BigCount::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigCount::one();
    for i in 0..k {
        acc *= n - i;
        acc /= i + 1;
    }
    acc
}

/// `Σ_{j=0}^{d} C(n, j)`.
pub fn binomial_prefix_sum(n: u64, d: u64) -> BigCount {
    if d >= n {
        return BigCount::one() << n;
    }
    // walk the row incrementally: C(n, j+1) = C(n, j) (n - j) / (j + 1)
    let mut term = BigCount::one();
    let mut sum = BigCount::one();
    for j in 0..d {
        term *= n - j;
        term /= j + 1;
        sum += &term;
    }
    sum
}

/// Maximum number of regions cut out of `R^d` by `m` hyperplanes.
pub fn zaslavsky(m: u64, d: u64) -> BigCount {
    binomial_prefix_sum(m, d)
}

/// The improved ReLU upper bound, `Σ_{J} Π_l C(n_l, j_l)`, evaluated through
/// the recurrence over (layer, remaining image dimension). Rank caps, when
/// present, replace `n_l` as the upper limit on `j_l`.
pub fn relu_upper(config: &NetConfig) -> Result<BigCount> {
    config.require_layers()?;
    let caps = config.rank_caps.clone().unwrap_or_else(|| config.widths.clone());
    let widest = *config.widths.iter().max().unwrap_or(&0);
    let d0 = config.input_dim.min(widest);
    let mut memo = HashMap::new();
    Ok(recurrence(&config.widths, &caps, 0, d0, &mut memo))
}

fn recurrence(
    widths: &[usize],
    caps: &[usize],
    layer: usize,
    dim: usize,
    memo: &mut HashMap<(usize, usize), BigCount>,
) -> BigCount {
    if let Some(v) = memo.get(&(layer, dim)) {
        return v.clone();
    }
    let n = widths[layer];
    let top = caps[layer].min(dim);
    let value = if layer + 1 == widths.len() {
        binomial_prefix_sum(n as u64, top as u64)
    } else {
        let mut acc = BigCount::zero();
        for j in 0..=top {
            // j inactive units leave n - j active ones to carry the image
            let next = recurrence(widths, caps, layer + 1, (n - j).min(dim), memo);
            acc += binomial(n as u64, j as u64) * next;
        }
        acc
    };
    memo.insert((layer, dim), value.clone());
    value
}

/// `Π_l Σ_{j=0}^{d_l} C(n_l, j)` with `d_l = min{n_0, ..., n_l}`.
pub fn montufar2017_upper(config: &NetConfig) -> Result<BigCount> {
    config.require_layers()?;
    let mut d = config.input_dim;
    let mut acc = BigCount::one();
    for &n in &config.widths {
        d = d.min(n);
        acc *= binomial_prefix_sum(n as u64, d as u64);
    }
    Ok(acc)
}

/// `2^N` with `N` the total number of units.
pub fn naive_upper(config: &NetConfig) -> BigCount {
    BigCount::one() << config.total_units()
}

/// `(Π_{l<L} ⌊n_l/n_0⌋^{n_0}) Σ_{j=0}^{n_0} C(n_L, j)`, requires `n_l ≥ n_0`.
pub fn montufar2014_lower(config: &NetConfig) -> Result<BigCount> {
    config.require_layers()?;
    let n0 = config.input_dim;
    if config.widths.iter().any(|&n| n < n0) {
        return Err(Error::precondition("every layer width must be at least n0"));
    }
    Ok(replicated_lower(config, 0))
}

/// `(Π_{l<L} (⌊n_l/n_0⌋ + 1)^{n_0}) Σ_{j=0}^{n_0} C(n_L, j)`, requires
/// `n_l ≥ 3 n_0`.
pub fn zigzag_lower(config: &NetConfig) -> Result<BigCount> {
    config.require_layers()?;
    let n0 = config.input_dim;
    if config.widths.iter().any(|&n| n < 3 * n0) {
        return Err(Error::precondition("every layer width must be at least 3 n0"));
    }
    Ok(replicated_lower(config, 1))
}

fn replicated_lower(config: &NetConfig, extra: usize) -> BigCount {
    let n0 = config.input_dim;
    let (last, inner) = config.widths.split_last().expect("checked non-empty");
    let mut acc = binomial_prefix_sum(*last as u64, n0 as u64);
    for &n in inner {
        acc *= num_traits::pow(BigCount::from(n / n0 + extra), n0);
    }
    acc
}

/// `2 Σ_{j=0}^{n_0-1} C(m-1, j) (w+1)^{L-1}` for a network of `L` layers of
/// size `2m + w(L-1)`.
pub fn arora_lower(input_dim: usize, m: usize, w: usize, depth: usize) -> Result<BigCount> {
    if input_dim == 0 || m == 0 || w < 2 || depth == 0 {
        return Err(Error::precondition("need n0 ≥ 1, m ≥ 1, w ≥ 2 and L ≥ 1"));
    }
    let first = binomial_prefix_sum((m - 1) as u64, (input_dim - 1) as u64) * 2u32;
    Ok(first * num_traits::pow(BigCount::from(w + 1), depth - 1))
}

/// `Π_l Σ_{j=0}^{d_l} C(k(k-1)/2 · n_l, j)` for rank-`k` maxout layers.
pub fn maxout_upper(config: &NetConfig) -> Result<BigCount> {
    config.require_layers()?;
    let k = config
        .maxout_rank
        .ok_or_else(|| Error::precondition("maxout rank is required"))?;
    let pairs = (k * (k - 1) / 2) as u64;
    let mut d = config.input_dim;
    let mut acc = BigCount::one();
    for &n in &config.widths {
        d = d.min(n);
        acc *= binomial_prefix_sum(pairs * n as u64, d as u64);
    }
    Ok(acc)
}

/// Closed form `Σ_{j=0}^{n_1} C(n_1 + n_2, j)` of the two-layer bound, valid
/// when `n_0 ≥ max{n_1, n_2}`.
pub fn two_layer_closed_form(n0: usize, n1: usize, n2: usize) -> Result<BigCount> {
    if n0 < n1.max(n2) {
        return Err(Error::precondition("closed form needs n0 ≥ max(n1, n2)"));
    }
    Ok(binomial_prefix_sum((n1 + n2) as u64, n1 as u64))
}

/// Depth-`L`, width-`n` cap independent of the input dimension:
/// `2^{Ln} (1/2 + 1/(2 sqrt(πn)))^{L/2} sqrt(2)`.
pub fn asymptotic_cap(n: usize, depth: usize) -> Result<f64> {
    if n == 0 || depth == 0 {
        return Err(Error::precondition("need n ≥ 1 and L ≥ 1"));
    }
    let n = n as f64;
    let l = depth as f64;
    let base = 0.5 + 1.0 / (2.0 * (std::f64::consts::PI * n).sqrt());
    Ok((l * n).exp2() * base.powf(l / 2.0) * std::f64::consts::SQRT_2)
}

/// `(⌊n/⌊n/3⌋⌋ + 1)^{L⌊n/3⌋}`, an exponential lower bound for width-`n`
/// networks whose input dimension is at least `n/3`.
pub fn exp_lower_large_input(n: usize, depth: usize) -> Result<BigCount> {
    if n < 3 {
        return Err(Error::precondition("need n ≥ 3"));
    }
    let third = n / 3;
    Ok(num_traits::pow(BigCount::from(n / third + 1), depth * third))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn big(v: u64) -> BigCount {
        BigCount::from(v)
    }

    /// Direct enumeration of the index set J.
    fn upper_by_enumeration(n0: usize, widths: &[usize]) -> BigCount {
        fn go(n0: usize, widths: &[usize], chosen: &mut Vec<usize>) -> BigCount {
            let l = chosen.len();
            if l == widths.len() {
                return chosen
                    .iter()
                    .zip(widths)
                    .map(|(&j, &n)| binomial(n as u64, j as u64))
                    .product();
            }
            let mut limit = n0.min(widths[l]);
            for (k, &j) in chosen.iter().enumerate() {
                limit = limit.min(widths[k] - j);
            }
            let mut acc = BigCount::zero();
            for j in 0..=limit {
                chosen.push(j);
                acc += go(n0, widths, chosen);
                chosen.pop();
            }
            acc
        }
        go(n0, widths, &mut Vec::new())
    }

    #[test]
    fn zaslavsky_values() {
        assert_eq!(zaslavsky(2, 2), big(4));
        assert_eq!(zaslavsky(7, 0), big(1));
        assert_eq!(zaslavsky(5, 2), big(1 + 5 + 10));
        assert_eq!(zaslavsky(5, 9), big(32));
    }

    #[test]
    fn relu_upper_examples() {
        assert_eq!(relu_upper(&NetConfig::new(784, [1, 21, 10])).unwrap(), big(243));
        for n in 1..8 {
            assert_eq!(relu_upper(&NetConfig::new(1, [n])).unwrap(), big(n as u64 + 1));
        }
        assert_eq!(relu_upper(&NetConfig::new(4, [2, 2])).unwrap(), big(11));
        assert_eq!(upper_by_enumeration(4, &[2, 2]), big(11));
    }

    #[test]
    fn relu_upper_matches_enumeration_small() {
        for n0 in 1..5 {
            for a in 1..5 {
                for b in 1..5 {
                    for c in 1..4 {
                        let w = [a, b, c];
                        assert_eq!(
                            relu_upper(&NetConfig::new(n0, w)).unwrap(),
                            upper_by_enumeration(n0, &w),
                            "n0={n0} widths={w:?}"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn rank_caps_tighten() {
        let plain = relu_upper(&NetConfig::new(4, [3, 3])).unwrap();
        let capped = relu_upper(&NetConfig::new(4, [3, 3]).with_rank_caps([1, 3])).unwrap();
        assert!(capped < plain);
        // first layer of rank 1: j1 ≤ 1, so 1·R(2, min(3, 4)) + 3·R(2, 2) = 8 + 3·7
        assert_eq!(capped, big(8 + 21));
        assert!(NetConfig::new(4, [3, 3]).with_rank_caps([4, 3]).validate().is_err());
    }

    #[test]
    fn montufar2017_examples() {
        assert_eq!(montufar2017_upper(&NetConfig::new(784, [1, 21, 10])).unwrap(), big(484));
        assert_eq!(montufar2017_upper(&NetConfig::new(1, [6])).unwrap(), big(7));
        assert_eq!(montufar2017_upper(&NetConfig::new(2, [3, 3])).unwrap(), big(49));
    }

    #[test]
    fn naive_examples() {
        assert_eq!(naive_upper(&NetConfig::new(784, [11, 11, 10])), big(4294967296));
        assert_eq!(naive_upper(&NetConfig::new(3, Vec::<usize>::new())), big(1));
        assert_eq!(naive_upper(&NetConfig::new(3, [4, 6])), big(1024));
    }

    #[test]
    fn montufar2014_examples() {
        assert_eq!(montufar2014_lower(&NetConfig::new(1, [3, 3])).unwrap(), big(12));
        assert_eq!(montufar2014_lower(&NetConfig::new(1, [5])).unwrap(), big(6));
        assert_eq!(montufar2014_lower(&NetConfig::new(2, [4, 4])).unwrap(), big(44));
        assert!(montufar2014_lower(&NetConfig::new(3, [2, 4])).is_err());
    }

    #[test]
    fn zigzag_lower_examples() {
        assert_eq!(zigzag_lower(&NetConfig::new(1, [3, 3])).unwrap(), big(16));
        assert_eq!(zigzag_lower(&NetConfig::new(2, [6, 6])).unwrap(), big(352));
        assert_eq!(zigzag_lower(&NetConfig::new(1, [3])).unwrap(), big(4));
        assert!(zigzag_lower(&NetConfig::new(2, [5, 6])).is_err());
    }

    #[test]
    fn arora_examples() {
        assert_eq!(arora_lower(2, 2, 2, 2).unwrap(), big(12));
        assert_eq!(arora_lower(3, 4, 2, 1).unwrap(), big(2 * (1 + 3 + 3)));
        assert_eq!(arora_lower(1, 3, 3, 3).unwrap(), big(32));
        assert!(arora_lower(1, 3, 1, 3).is_err());
        assert!(arora_lower(1, 0, 2, 3).is_err());
    }

    #[test]
    fn maxout_examples() {
        let c = NetConfig::new(2, [3]).with_maxout_rank(2);
        assert_eq!(maxout_upper(&c).unwrap(), big(7));
        // k = 2 reduces to the Montúfar 2017 product
        let c2 = NetConfig::new(3, [4, 5, 2]).with_maxout_rank(2);
        assert_eq!(
            maxout_upper(&c2).unwrap(),
            montufar2017_upper(&NetConfig::new(3, [4, 5, 2])).unwrap()
        );
        assert_eq!(
            maxout_upper(&NetConfig::new(1, [2]).with_maxout_rank(3)).unwrap(),
            big(7)
        );
        assert!(maxout_upper(&NetConfig::new(1, [2])).is_err());
    }

    #[test]
    fn two_layer_examples() {
        assert_eq!(two_layer_closed_form(4, 2, 2).unwrap(), big(11));
        assert_eq!(two_layer_closed_form(5, 0, 3).unwrap(), big(1));
        assert_eq!(two_layer_closed_form(10, 3, 3).unwrap(), big(42));
        assert!(two_layer_closed_form(2, 3, 1).is_err());
        for n0 in 1..9 {
            for n1 in 1..=n0 {
                for n2 in 1..=n0 {
                    assert_eq!(
                        two_layer_closed_form(n0, n1, n2).unwrap(),
                        relu_upper(&NetConfig::new(n0, [n1, n2])).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn asymptotic_cap_values() {
        let expected = 4.0 * (0.5 + 0.5 / std::f64::consts::PI.sqrt()) * 2f64.sqrt();
        let got = asymptotic_cap(1, 2).unwrap();
        assert!((got - expected).abs() < 1e-12);
        assert!((got - 4.4242).abs() < 1e-3);

        for n0 in 1..=6 {
            for n in 1..=4 {
                let b = relu_upper(&NetConfig::new(n0, [n, n])).unwrap();
                let b: f64 = b.to_string().parse().unwrap();
                assert!(asymptotic_cap(n, 2).unwrap() >= b, "n0={n0} n={n}");
            }
        }

        let mut prev = f64::INFINITY;
        for l in 1..=40 {
            let ratio = asymptotic_cap(2, l).unwrap() / (2.0 * l as f64).exp2();
            assert!(ratio < prev);
            prev = ratio;
        }
        assert!(prev < 1e-2);
    }

    #[test]
    fn exp_lower_examples() {
        assert_eq!(exp_lower_large_input(3, 1).unwrap(), big(4));
        assert_eq!(exp_lower_large_input(6, 2).unwrap(), big(256));
        for n in 3..20 {
            for l in 1..4 {
                let v = exp_lower_large_input(n, l).unwrap();
                assert!(v >= num_traits::pow(big(4), l * (n / 3)));
            }
        }
        assert!(exp_lower_large_input(2, 1).is_err());
    }

    #[test]
    fn non_monotone_counterexample() {
        assert_eq!(relu_upper(&NetConfig::new(4, [3, 2, 1])).unwrap(), big(47));
        assert_eq!(relu_upper(&NetConfig::new(4, [4, 1, 1])).unwrap(), big(46));
    }

    #[test]
    fn tight_single_layer() {
        for n0 in 1..10 {
            for n in 1..12 {
                assert_eq!(
                    relu_upper(&NetConfig::new(n0, [n])).unwrap(),
                    zaslavsky(n as u64, n0.min(n) as u64)
                );
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn dominance_chain(n0 in 1usize..=1000, widths in prop::collection::vec(1usize..=30, 1..=5)) {
                let c = NetConfig::new(n0, widths);
                let t1 = relu_upper(&c).unwrap();
                let m17 = montufar2017_upper(&c).unwrap();
                prop_assert!(t1 <= m17);
                prop_assert!(m17 <= naive_upper(&c));
            }

            #[test]
            fn lower_below_upper(n0 in 1usize..=4, widths in prop::collection::vec(1usize..=14, 1..=4)) {
                let c = NetConfig::new(n0, widths);
                let ub = relu_upper(&c).unwrap();
                if let Ok(lb) = zigzag_lower(&c) {
                    prop_assert!(lb <= ub);
                    prop_assert!(lb >= montufar2014_lower(&c).unwrap());
                }
                if let Ok(lb) = montufar2014_lower(&c) {
                    prop_assert!(lb <= ub);
                }
            }

            #[test]
            fn bottleneck(n1 in 1usize..=20, n2 in 1usize..=20, extra in 0usize..=20) {
                let n0 = n1.max(n2) + 1 + extra;
                let front = relu_upper(&NetConfig::new(n0, [n1 + 1, n2])).unwrap();
                let back = relu_upper(&NetConfig::new(n0, [n1, n2 + 1])).unwrap();
                prop_assert!(front > back);
            }

            #[test]
            fn shallow_beats_deep(n in 1usize..=6, depth in 2usize..=5, extra in 0usize..=10) {
                let n0 = depth * n + extra;
                let deep = relu_upper(&NetConfig::new(n0, vec![n; depth])).unwrap();
                prop_assert!(deep < BigCount::one() << (depth * n));
            }
        }
    }
}
