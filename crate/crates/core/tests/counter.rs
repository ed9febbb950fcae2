use linregions::bounds::{maxout_upper, relu_upper};
use linregions::counter::{
    brute_force_count, compute_big_m, count_regions_maxout, count_regions_relu, grid_sample_count, CounterOptions,
};
use linregions::fixtures::{random_maxout, random_relu, three_layer_2d};
use linregions::{BigCount, InputDomain, Layer, NetConfig, Network};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Input dimension in 1..=3, depth in 1..=3, at most 12 units in total.
fn random_shape(seed: u64) -> (usize, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let n0 = rng.gen_range(1..=3);
    let depth = rng.gen_range(1..=3);
    let mut budget = 12;
    let mut widths = Vec::new();
    for l in 0..depth {
        let left = depth - l - 1;
        let w = rng.gen_range(1..=(budget - left).min(6));
        widths.push(w);
        budget -= w;
    }
    (n0, widths)
}

fn count(net: &Network, domain: InputDomain) -> BigCount {
    count_regions_relu(net, &CounterOptions::new(domain)).unwrap().count
}

#[test]
fn tree_search_matches_exhaustive_enumeration() {
    for seed in 0..60 {
        let (n0, widths) = random_shape(seed);
        let net = random_relu(n0, &widths, seed);
        let domain = if seed % 4 == 3 {
            InputDomain::Unrestricted
        } else {
            InputDomain::uniform(n0, -2.0, 2.0)
        };
        let opts = CounterOptions::new(domain);
        let tree = count_regions_relu(&net, &opts).unwrap();
        let brute = brute_force_count(&net, &opts).unwrap();
        assert_eq!(tree.count, brute.count, "seed {seed}: n0={n0} widths={widths:?}");
        let bound = relu_upper(&NetConfig::new(n0, widths.clone())).unwrap();
        assert!(tree.count <= bound, "seed {seed}");
    }
}

#[test]
fn parallel_search_matches_sequential() {
    for seed in 0..10 {
        let (n0, widths) = random_shape(seed);
        let net = random_relu(n0, &widths, seed);
        let opts = CounterOptions::new(InputDomain::uniform(n0, -2.0, 2.0)).with_witnesses();
        let one = count_regions_relu(&net, &opts).unwrap();
        let many = count_regions_relu(&net, &opts.clone().with_workers(3)).unwrap();
        assert_eq!(one.count, many.count);
        assert_eq!(one.witnesses, many.witnesses);
    }
}

#[test]
fn nested_boxes_never_lose_regions() {
    for seed in 0..15 {
        let (n0, widths) = random_shape(seed);
        let net = random_relu(n0, &widths, seed + 100);
        let mut prev = BigCount::from(0u32);
        for r in [0.25, 1.0, 3.0, 10.0] {
            let c = count(&net, InputDomain::uniform(n0, -r, r));
            assert!(c >= prev, "seed {seed} radius {r}");
            prev = c;
        }
        assert!(count(&net, InputDomain::Unrestricted) >= prev);
    }
}

#[test]
fn unrestricted_count_matches_large_box() {
    let net = three_layer_2d();
    assert_eq!(
        count(&net, InputDomain::Unrestricted),
        count(&net, InputDomain::uniform(2, -50.0, 50.0))
    );
}

#[test]
fn big_m_bounds_hold_on_samples() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for seed in 0..4 {
        let net = random_relu(3, &[5, 4, 3], seed);
        let (lo, hi) = (-1.5, 2.0);
        let domain = InputDomain::uniform(3, lo, hi);
        let bounds = compute_big_m(&net, &domain).unwrap();
        for _ in 0..2500 {
            let mut h: Vec<f64> = (0..3).map(|_| rng.gen_range(lo..=hi)).collect();
            for (l, layer) in net.layers.iter().enumerate() {
                let Layer::Relu { weights, bias } = layer else {
                    unreachable!()
                };
                let pre: Vec<f64> = weights
                    .iter()
                    .zip(bias)
                    .map(|(w, b)| w.iter().zip(&h).map(|(x, y)| x * y).sum::<f64>() + b)
                    .collect();
                for (i, z) in pre.iter().enumerate() {
                    let nb = &bounds[l][i];
                    let slack = 1e-12 * (1.0 + nb.h.max(nb.h_bar));
                    assert!(z.max(0.0) <= nb.h + slack);
                    assert!((-z).max(0.0) <= nb.h_bar + slack);
                }
                h = pre.into_iter().map(|z| z.max(0.0)).collect();
            }
        }
    }
}

#[test]
fn maxout_counts_match_exhaustive_enumeration() {
    let mut checked = 0;
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n0 = rng.gen_range(1..=2);
        let k = rng.gen_range(2..=3);
        let depth = rng.gen_range(1..=2);
        let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=3)).collect();
        let patterns = (k as u64).pow(widths.iter().sum::<usize>() as u32);
        if patterns > 4096 {
            continue;
        }
        let net = random_maxout(n0, &widths, k, seed);
        let opts = CounterOptions::new(InputDomain::uniform(n0, -2.0, 2.0));
        let tree = count_regions_maxout(&net, &opts).unwrap();
        let brute = brute_force_count(&net, &opts).unwrap();
        assert_eq!(tree.count, brute.count, "seed {seed}");
        let bound = maxout_upper(&NetConfig::new(n0, widths).with_maxout_rank(k)).unwrap();
        assert!(tree.count <= bound);
        checked += 1;
    }
    assert!(checked >= 20, "only {checked} instances");
}

#[test]
fn three_generic_rank_two_units_in_the_plane() {
    for seed in 0..5 {
        let net = random_maxout(2, &[3], 2, seed);
        let opts = CounterOptions::new(InputDomain::uniform(2, -3.0, 3.0));
        let tree = count_regions_maxout(&net, &opts).unwrap();
        assert_eq!(tree.count, brute_force_count(&net, &opts).unwrap().count);
        assert!(tree.count <= BigCount::from(7u32));
    }
}

#[test]
fn grid_never_exceeds_exact_count() {
    for seed in 0..12 {
        let (n0, widths) = random_shape(seed);
        let net = random_relu(n0, &widths, seed + 7);
        let domain = InputDomain::uniform(n0, -2.0, 2.0);
        let res = match n0 {
            1 => 4000,
            2 => 120,
            _ => 25,
        };
        assert!(grid_sample_count(&net, &domain, res).unwrap() <= count(&net, domain));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn permuting_units_keeps_the_count(seed in 0u64..10_000, layer_pick in any::<usize>(), perm_seed in any::<u64>()) {
        let (n0, widths) = random_shape(seed);
        let net = random_relu(n0, &widths, seed);
        let layer = layer_pick % widths.len() + 1;
        let mut perm: Vec<usize> = (0..widths[layer - 1]).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..perm.len()).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let permuted = net.permuted_layer(layer, &perm).unwrap();
        let domain = InputDomain::uniform(n0, -2.0, 2.0);
        prop_assert_eq!(count(&net, domain.clone()), count(&permuted, domain));
    }

    #[test]
    fn rescaling_a_unit_keeps_the_count(seed in 0u64..10_000, unit_pick in any::<usize>(), c in 0.5f64..2.0) {
        let (n0, widths) = random_shape(seed);
        let net = random_relu(n0, &widths, seed);
        let unit = unit_pick % widths[0] + 1;
        let scaled = net.rescaled_unit(1, unit, c).unwrap();
        let domain = InputDomain::uniform(n0, -2.0, 2.0);
        prop_assert_eq!(count(&net, domain.clone()), count(&scaled, domain));
    }
}
