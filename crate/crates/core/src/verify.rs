//! Self-check suites exposed through the command line.
//!
//! Each suite returns one line per property so a failure names what broke
//! without a debugger. The suites are deterministic: every random draw is
//! seeded from the check's own index.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::bounds::{
    montufar2014_lower, montufar2017_upper, naive_upper, relu_upper, zaslavsky, zigzag_lower, BigCount, NetConfig,
};
use crate::constructions::{deep_1d, multi_dim, zigzag_layer};
use crate::counter::{brute_force_count, count_regions_maxout, count_regions_relu, CounterOptions};
use crate::error::{Error, Result};
use crate::fixtures::{printed_zigzag4, random_maxout, random_relu, three_layer_2d};
use crate::network::{InputDomain, Network};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Bounds,
    Oracle,
    Constructions,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Bounds, Suite::Oracle, Suite::Constructions];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Bounds => "bounds",
            Suite::Oracle => "oracle",
            Suite::Constructions => "constructions",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL.into_iter().find(|suite| suite.name() == s).ok_or_else(|| {
            Error::precondition(format!("unknown suite {s:?}; expected bounds, oracle or constructions"))
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, failures: Vec<String>, cases: usize) -> Self {
        let passed = failures.is_empty();
        let detail = if passed {
            format!("{cases} cases")
        } else {
            format!("{} of {cases} failed; first: {}", failures.len(), failures[0])
        };
        Check {
            name: name.into(),
            passed,
            detail,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "suite": self.suite.name(),
            "passed": self.passed(),
            "seconds": self.seconds,
            "checks": self.checks.iter().map(|c| json!({
                "name": c.name,
                "passed": c.passed,
                "detail": c.detail,
            })).collect::<Vec<_>>(),
        })
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.checks {
            let tag = if c.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} {}: {} ({})", self.suite, c.name, c.detail)?;
        }
        Ok(())
    }
}

/// Runs one suite. `seeds` sets the number of random networks the oracle
/// suite compares; the other suites ignore it.
pub fn run_suite(suite: Suite, seeds: u64) -> SuiteReport {
    let start = Instant::now();
    let checks = match suite {
        Suite::Bounds => bounds_suite(),
        Suite::Oracle => oracle_suite(seeds),
        Suite::Constructions => constructions_suite(),
    };
    SuiteReport {
        suite,
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// `(n1, n2, improved bound, 2017 bound)` for a 784-input network with a
/// 10-unit third layer; the naive bound is `2^32` throughout.
pub const PUBLISHED_SERIES: [(usize, usize, u64, u64); 21] = [
    (1, 21, 243, 484),
    (2, 20, 12279, 47264),
    (3, 19, 236909, 1633280),
    (4, 18, 2316709, 25000448),
    (5, 17, 13756567, 191951232),
    (6, 16, 56128117, 808272896),
    (7, 15, 171071287, 2030043136),
    (8, 14, 411552217, 3348183808),
    (9, 13, 800917467, 4092785664),
    (10, 12, 1283052848, 4281335808),
    (11, 11, 1690286436, 4294967296),
    (12, 10, 1902816995, 4294967296),
    (13, 9, 1858910222, 4290772992),
    (14, 8, 1636341897, 4248829952),
    (15, 7, 1312054984, 4060086272),
    (16, 6, 965299552, 3556769792),
    (17, 5, 645713191, 2675965952),
    (18, 4, 385283875, 1619001344),
    (19, 3, 198153450, 738197504),
    (20, 2, 82836506, 234881024),
    (21, 1, 25165813, 46137344),
];

fn sweep(seed: u64, cases: usize, n0_max: usize, width_max: usize, depth_max: usize) -> Vec<NetConfig> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..cases)
        .map(|_| {
            let n0 = rng.gen_range(1..=n0_max);
            let depth = rng.gen_range(1..=depth_max);
            let widths: Vec<usize> = (0..depth).map(|_| rng.gen_range(1..=width_max)).collect();
            NetConfig::new(n0, widths)
        })
        .collect()
}

fn bounds_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    let mut bad = Vec::new();
    for &(n1, n2, improved, older) in &PUBLISHED_SERIES {
        let c = NetConfig::new(784, [n1, n2, 10]);
        let got = (relu_upper(&c).ok(), montufar2017_upper(&c).ok(), naive_upper(&c));
        let want = (
            Some(BigCount::from(improved)),
            Some(BigCount::from(older)),
            BigCount::from(1u64 << 32),
        );
        if got != want {
            bad.push(format!("{n1};{n2};10 gave {got:?}"));
        }
    }
    checks.push(Check::new("published two-layer series", bad, PUBLISHED_SERIES.len()));

    let mut bad = Vec::new();
    let small = relu_upper(&NetConfig::new(4, [3, 2, 1])).ok();
    let large = relu_upper(&NetConfig::new(4, [4, 1, 1])).ok();
    if small != Some(BigCount::from(47u32)) || large != Some(BigCount::from(46u32)) {
        bad.push(format!("got {small:?} and {large:?}"));
    }
    checks.push(Check::new("adding a unit can lower the bound (47 > 46)", bad, 1));

    let configs = sweep(1, 500, 1000, 30, 5);
    let mut bad = Vec::new();
    for c in &configs {
        let (Ok(t1), Ok(m17)) = (relu_upper(c), montufar2017_upper(c)) else {
            bad.push(format!("{c:?} errored"));
            continue;
        };
        if !(t1 <= m17 && m17 <= naive_upper(c)) {
            bad.push(format!("{c:?}: {t1} / {m17}"));
        }
    }
    checks.push(Check::new("improved ≤ 2017 ≤ 2^N", bad, configs.len()));

    let configs = sweep(2, 500, 4, 14, 4);
    let mut bad = Vec::new();
    for c in &configs {
        let Ok(ub) = relu_upper(c) else {
            bad.push(format!("{c:?} errored"));
            continue;
        };
        if let (Ok(lb), Ok(old)) = (zigzag_lower(c), montufar2014_lower(c)) {
            if !(old <= lb && lb <= ub) {
                bad.push(format!("{c:?}: {old} / {lb} / {ub}"));
            }
        } else if let Ok(old) = montufar2014_lower(c) {
            if old > ub {
                bad.push(format!("{c:?}: {old} > {ub}"));
            }
        }
    }
    checks.push(Check::new(
        "lower bounds stay below the upper bound",
        bad,
        configs.len(),
    ));

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad = Vec::new();
    for _ in 0..200 {
        let n1 = rng.gen_range(1..=20);
        let n2 = rng.gen_range(1..=20);
        let n0 = n1.max(n2) + 1 + rng.gen_range(0..=20);
        let front = relu_upper(&NetConfig::new(n0, [n1 + 1, n2]));
        let back = relu_upper(&NetConfig::new(n0, [n1, n2 + 1]));
        match (front, back) {
            (Ok(f), Ok(b)) if f > b => {}
            (f, b) => bad.push(format!("n0={n0} n1={n1} n2={n2}: {f:?} vs {b:?}")),
        }
    }
    checks.push(Check::new("a unit placed earlier raises the bound", bad, 200));

    let mut bad = Vec::new();
    let mut cases = 0;
    for n in 1..=6 {
        for depth in 2..=5 {
            for extra in [0, 3, 10] {
                cases += 1;
                let n0 = depth * n + extra;
                match relu_upper(&NetConfig::new(n0, vec![n; depth])) {
                    Ok(deep) if deep < BigCount::from(1u32) << (depth * n) => {}
                    other => bad.push(format!("n0={n0} n={n} L={depth}: {other:?}")),
                }
            }
        }
    }
    checks.push(Check::new("one wide layer beats the same units stacked", bad, cases));

    let mut bad = Vec::new();
    let mut cases = 0;
    for n0 in 1..10usize {
        for n in 1..12usize {
            cases += 1;
            let got = relu_upper(&NetConfig::new(n0, [n])).ok();
            if got != Some(zaslavsky(n as u64, n0.min(n) as u64)) {
                bad.push(format!("n0={n0} n={n}"));
            }
        }
    }
    checks.push(Check::new("single layer equals the arrangement count", bad, cases));
    checks
}

/// Input dimension 1..=3, depth 1..=3, at most 12 units.
fn random_shape(rng: &mut ChaCha8Rng) -> (usize, Vec<usize>) {
    let n0 = rng.gen_range(1..=3);
    let depth = rng.gen_range(1..=3);
    let mut budget: usize = 12;
    let mut widths = Vec::new();
    for l in 0..depth {
        let w = rng.gen_range(1..=(budget - (depth - l - 1)).min(6));
        widths.push(w);
        budget -= w;
    }
    (n0, widths)
}

fn compare(net: &Network, opts: &CounterOptions, maxout: bool) -> std::result::Result<BigCount, String> {
    let tree = if maxout {
        count_regions_maxout(net, opts)
    } else {
        count_regions_relu(net, opts)
    }
    .map_err(|e| e.to_string())?;
    let brute = brute_force_count(net, opts).map_err(|e| e.to_string())?;
    if tree.count == brute.count {
        Ok(tree.count)
    } else {
        Err(format!("tree {} vs exhaustive {}", tree.count, brute.count))
    }
}

fn oracle_suite(seeds: u64) -> Vec<Check> {
    let mut relu_bad = Vec::new();
    let mut bound_bad = Vec::new();
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n0, widths) = random_shape(&mut rng);
        let net = random_relu(n0, &widths, seed);
        let domain = if seed % 4 == 3 {
            InputDomain::Unrestricted
        } else {
            InputDomain::uniform(n0, -2.0, 2.0)
        };
        match compare(&net, &CounterOptions::new(domain), false) {
            Ok(count) => {
                if relu_upper(&NetConfig::new(n0, widths.clone())).is_ok_and(|b| count > b) {
                    bound_bad.push(format!("seed {seed}: {count} regions"));
                }
            }
            Err(e) => relu_bad.push(format!("seed {seed} (n0={n0}, widths={widths:?}): {e}")),
        }
    }

    let mut maxout_bad = Vec::new();
    let mut maxout_cases = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd);
        let n0 = rng.gen_range(1..=2);
        let k = rng.gen_range(2..=3);
        let widths: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(1..=3)).collect();
        if (k as u64).pow(widths.iter().sum::<usize>() as u32) > 4096 {
            continue;
        }
        maxout_cases += 1;
        let net = random_maxout(n0, &widths, k, seed);
        if let Err(e) = compare(&net, &CounterOptions::new(InputDomain::uniform(n0, -2.0, 2.0)), true) {
            maxout_bad.push(format!("seed {seed}: {e}"));
        }
    }

    let cases = seeds as usize;
    vec![
        Check::new("ReLU tree search equals exhaustive enumeration", relu_bad, cases),
        Check::new("ReLU counts stay below the improved bound", bound_bad, cases),
        Check::new(
            "maxout tree search equals exhaustive enumeration",
            maxout_bad,
            maxout_cases,
        ),
    ]
}

fn unit_cube_count(net: &Network) -> Result<BigCount> {
    let opts = CounterOptions::new(InputDomain::uniform(net.input_dim, 0.0, 1.0));
    Ok(count_regions_relu(net, &opts)?.count)
}

fn expect_count(bad: &mut Vec<String>, label: String, got: Result<BigCount>, want: &BigCount) {
    match got {
        Ok(c) if &c == want => {}
        other => bad.push(format!("{label}: {other:?}, expected {want}")),
    }
}

fn constructions_suite() -> Vec<Check> {
    let mut checks = Vec::new();

    let mut bad = Vec::new();
    for n in 3..=12usize {
        let got = zigzag_layer(n).and_then(|z| unit_cube_count(&z.network()));
        expect_count(&mut bad, format!("n={n}"), got, &BigCount::from(n + 1));
    }
    checks.push(Check::new("zigzag layer of n units has n + 1 regions", bad, 10));

    let mut bad = Vec::new();
    let mut lists: Vec<Vec<usize>> = vec![vec![]];
    let mut all = Vec::new();
    for _ in 0..3 {
        lists = lists
            .iter()
            .flat_map(|w| {
                [3, 4, 5].map(|n| {
                    let mut v = w.clone();
                    v.push(n);
                    v
                })
            })
            .collect();
        all.extend(lists.iter().cloned());
    }
    for widths in &all {
        let want: BigCount = widths.iter().map(|&n| BigCount::from(n + 1)).product();
        let bound = relu_upper(&NetConfig::new(1, widths.clone()));
        if bound.as_ref().ok() != Some(&want) {
            bad.push(format!("bound for {widths:?} is {bound:?}"));
        }
        let got = deep_1d(widths).and_then(|net| unit_cube_count(&net));
        expect_count(&mut bad, format!("{widths:?}"), got, &want);
    }
    checks.push(Check::new(
        "deep one-input construction meets the upper bound",
        bad,
        all.len(),
    ));

    let mut bad = Vec::new();
    expect_count(
        &mut bad,
        "printed layer".into(),
        unit_cube_count(&printed_zigzag4()),
        &BigCount::from(5u32),
    );
    let whole_plane = CounterOptions::new(InputDomain::Unrestricted);
    expect_count(
        &mut bad,
        "three-layer plane network".into(),
        count_regions_relu(&three_layer_2d(), &whole_plane).map(|r| r.count),
        &BigCount::from(20u32),
    );
    checks.push(Check::new("hand-specified fixtures", bad, 2));

    let mut bad = Vec::new();
    let configs: &[(usize, &[usize])] = &[(1, &[3, 3]), (2, &[6]), (2, &[6, 6]), (2, &[7, 6]), (3, &[9])];
    for &(n0, widths) in configs {
        let config = NetConfig::new(n0, widths.to_vec());
        let (Ok(lower), Ok(upper)) = (zigzag_lower(&config), relu_upper(&config)) else {
            bad.push(format!("bounds failed for n0={n0} widths={widths:?}"));
            continue;
        };
        match multi_dim(n0, widths, 7).and_then(|net| unit_cube_count(&net)) {
            Ok(c) if lower <= c && c <= upper => {}
            other => bad.push(format!(
                "n0={n0} widths={widths:?}: {other:?} outside [{lower}, {upper}]"
            )),
        }
    }
    checks.push(Check::new(
        "multi-input construction reaches the lower bound",
        bad,
        configs.len(),
    ));
    checks
}
