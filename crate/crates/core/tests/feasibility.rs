use linregions::feasibility::{
    exact_max_margin, feasible_nonstrict, max_margin, ExactMargin, FeasibilityQuery, Verdict, DEFAULT_TOLERANCE,
};
use linregions::InputDomain;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_query(rng: &mut ChaCha8Rng) -> FeasibilityQuery {
    let n = rng.gen_range(1..=5);
    let domain = if rng.gen_bool(0.5) {
        InputDomain::uniform(n, -1.0, 1.0)
    } else {
        InputDomain::Unrestricted
    };
    let mut q = FeasibilityQuery::new(n, domain);
    let rows = rng.gen_range(0..=20);
    for _ in 0..rows {
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let c = rng.gen_range(-1.0..1.0);
        if rng.gen_bool(0.5) {
            q.hard.push(linregions::feasibility::Row::new(a, c));
        } else {
            q.margin.push(linregions::feasibility::Row::new(a, c));
        }
    }
    q
}

#[test]
fn nonstrict_agrees_with_max_margin_on_random_queries() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut infeasible, mut negative, mut positive, mut unbounded) = (0, 0, 0, 0);
    for _ in 0..1000 {
        let q = random_query(&mut rng);
        let v = max_margin(&q, DEFAULT_TOLERANCE).unwrap();
        let ns = feasible_nonstrict(&q).unwrap();
        match &v {
            Verdict::Infeasible => {
                infeasible += 1;
                assert!(!ns, "{q:?}");
            }
            Verdict::MarginUnbounded { .. } => {
                unbounded += 1;
                assert!(ns, "{q:?}");
            }
            Verdict::Feasible { margin, .. } => {
                if *margin >= 0.0 {
                    positive += 1;
                } else {
                    negative += 1;
                }
                // the closed system is feasible exactly when the best margin is nonnegative
                if *margin > 1e-6 {
                    assert!(ns, "{q:?}");
                }
                if *margin < -1e-6 {
                    assert!(!ns, "{q:?}");
                }
            }
        }
    }
    assert!(infeasible > 0 && negative > 0 && positive > 0 && unbounded > 0);
}

#[test]
fn witnesses_are_sound() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let q = random_query(&mut rng);
        let v = max_margin(&q, DEFAULT_TOLERANCE).unwrap();
        let Some(x) = v.witness() else { continue };
        assert!(q.hard_excess(x) <= 1e-7, "{q:?}");
        if let InputDomain::Box { lower, upper } = &q.domain {
            assert!(x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| l <= v && v <= u));
        }
        match &v {
            Verdict::Feasible { margin, .. } => {
                for row in &q.margin {
                    assert!(row.slack(x) >= margin - 1e-7);
                }
                assert!((q.margin_at(x).unwrap() - margin).abs() <= 1e-7);
            }
            Verdict::MarginUnbounded { .. } => {
                if let Some(m) = q.margin_at(x) {
                    assert!(m >= 1.0 - 1e-7, "{m}");
                }
            }
            Verdict::Infeasible => unreachable!(),
        }
    }
}

#[test]
fn float_and_exact_oracles_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..300 {
        let q = random_query(&mut rng);
        let v = max_margin(&q, DEFAULT_TOLERANCE).unwrap();
        let e = exact_max_margin(&q).unwrap();
        match (&v, &e) {
            (Verdict::Infeasible, ExactMargin::Infeasible) => {}
            (Verdict::MarginUnbounded { .. }, ExactMargin::Unbounded) => {}
            (Verdict::Feasible { margin, .. }, ExactMargin::Bounded(f)) => {
                let f: f64 = num_traits::ToPrimitive::to_f64(f).unwrap();
                assert!((margin - f).abs() < 1e-7, "{margin} vs {f}");
            }
            _ => panic!("float {v:?} vs exact {e:?} on {q:?}"),
        }
    }
}

#[test]
fn repeated_calls_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..200 {
        let q = random_query(&mut rng);
        let a = max_margin(&q, DEFAULT_TOLERANCE).unwrap();
        let b = max_margin(&q.clone(), DEFAULT_TOLERANCE).unwrap();
        match (&a, &b) {
            (
                Verdict::Feasible {
                    witness: w1,
                    margin: m1,
                },
                Verdict::Feasible {
                    witness: w2,
                    margin: m2,
                },
            ) => {
                assert_eq!(m1.to_bits(), m2.to_bits());
                assert!(w1.iter().zip(w2).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            _ => assert_eq!(a, b),
        }
    }
}

fn variant(v: &Verdict) -> u8 {
    match v {
        Verdict::Infeasible => 0,
        Verdict::Feasible { .. } => 1,
        Verdict::MarginUnbounded { .. } => 2,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn positive_row_scaling_keeps_the_variant(seed in any::<u64>(), pick in any::<usize>(), scale in 1e-3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_query(&mut rng);
        let total = q.hard.len() + q.margin.len();
        prop_assume!(total > 0);
        let mut scaled = q.clone();
        let k = pick % total;
        let row = if k < q.hard.len() { &mut scaled.hard[k] } else { &mut scaled.margin[k - q.hard.len()] };
        row.a.iter_mut().for_each(|v| *v *= scale);
        row.c *= scale;
        let before = max_margin(&q, DEFAULT_TOLERANCE).unwrap();
        let after = max_margin(&scaled, DEFAULT_TOLERANCE).unwrap();
        prop_assert_eq!(variant(&before), variant(&after));
    }
}
