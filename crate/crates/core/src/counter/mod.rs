//! Exact region counting by branch-and-prune over activation patterns.
//!
//! Units are visited layer-major. Each tree node carries the input-space rows
//! accumulated for its pattern prefix and the oracle verdict for them. A node
//! survives only while its best margin exceeds `epsilon`; since adding rows can
//! only shrink the margin, every surviving leaf is a counted region.

mod brute;
mod milp;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde_json::{json, Value};

use crate::bounds::BigCount;
use crate::error::{Error, Result};
use crate::feasibility::{exact_max_margin, max_margin, FeasibilityQuery, Row, Verdict, DEFAULT_TOLERANCE};
use crate::network::{dot, ActivationPattern, AffineMap, InputDomain, LayerActivation, Network};

pub use brute::{brute_force_count, forward_margin, grid_sample_count};
pub use milp::{compute_big_m, export_milp, Interval, MilpModel, MilpRow, NeuronBound, Sense, VarBound};

/// Default strict-activation threshold.
pub const DEFAULT_EPSILON: f64 = 1e-6;
/// Default stop valve on the number of counted regions.
pub const DEFAULT_REGION_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct CounterOptions {
    pub domain: InputDomain,
    /// A region counts iff some point has every active preactivation (and
    /// every maxout winner gap) above `epsilon` and every inactive one ≤ 0.
    pub epsilon: f64,
    pub lp_tolerance: f64,
    pub region_cap: Option<u64>,
    pub collect_witnesses: bool,
    pub workers: usize,
    /// Re-solve every `n`-th oracle call in exact rational arithmetic.
    pub certify_every: Option<u64>,
}

impl CounterOptions {
    pub fn new(domain: InputDomain) -> Self {
        CounterOptions {
            domain,
            epsilon: DEFAULT_EPSILON,
            lp_tolerance: DEFAULT_TOLERANCE,
            region_cap: Some(DEFAULT_REGION_CAP),
            collect_witnesses: false,
            workers: 1,
            certify_every: None,
        }
    }

    pub fn with_witnesses(mut self) -> Self {
        self.collect_witnesses = true;
        self
    }

    pub fn with_workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_cap(mut self, cap: Option<u64>) -> Self {
        self.region_cap = cap;
        self
    }

    pub fn with_certification(mut self, every: u64) -> Self {
        self.certify_every = Some(every.max(1));
        self
    }

    fn check(&self, net: &Network) -> Result<()> {
        net.check()?;
        self.domain.check(net.input_dim)?;
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::precondition("epsilon must be positive and finite"));
        }
        if self.workers == 0 {
            return Err(Error::precondition("workers must be at least 1"));
        }
        Ok(())
    }
}

/// A counted region: its pattern, an interior point, and the point's margin
/// (`None` when the margin is unbounded).
#[derive(Debug, Clone, PartialEq)]
pub struct Witness {
    pub pattern: ActivationPattern,
    pub point: Vec<f64>,
    pub margin: Option<f64>,
}

/// Float verdicts re-checked in exact arithmetic.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Certification {
    pub checked: u64,
    pub disagreements: u64,
}

#[derive(Debug, Clone)]
pub struct CountResult {
    pub count: BigCount,
    pub witnesses: Option<Vec<Witness>>,
    pub nodes: u64,
    pub pruned: u64,
    pub seconds: f64,
    /// The region cap was reached; `count` is a lower bound.
    pub capped: bool,
    pub certification: Option<Certification>,
}

impl CountResult {
    pub fn to_json(&self) -> Value {
        let count = u64::try_from(&self.count)
            .map(Value::from)
            .unwrap_or_else(|_| Value::from(self.count.to_string()));
        let mut doc = json!({
            "count": count,
            "nodes": self.nodes,
            "pruned": self.pruned,
            "seconds": self.seconds,
        });
        if self.capped {
            doc["capped"] = Value::Bool(true);
        }
        if let Some(c) = &self.certification {
            doc["certification"] = json!({"checked": c.checked, "disagreements": c.disagreements});
        }
        if let Some(ws) = &self.witnesses {
            doc["witnesses"] = ws
                .iter()
                .map(|w| json!({"pattern": w.pattern, "point": w.point, "margin": w.margin}))
                .collect();
        }
        doc
    }
}

/// Counts the regions of a ReLU network.
pub fn count_regions_relu(net: &Network, opts: &CounterOptions) -> Result<CountResult> {
    if net.has_maxout() {
        return Err(Error::MaxoutLayer);
    }
    count_regions(net, opts)
}

/// Counts the regions of a network with maxout layers (ReLU layers may be
/// mixed in). A winner counts only where it beats every other piece by more
/// than `epsilon`.
pub fn count_regions_maxout(net: &Network, opts: &CounterOptions) -> Result<CountResult> {
    count_regions(net, opts)
}

/// Histogram of `dim h^L(S)` over the collected witnesses.
pub fn dimension_profile(result: &CountResult, net: &Network) -> Result<BTreeMap<usize, u64>> {
    let witnesses = result.witnesses.as_ref().ok_or(Error::Missing("witnesses"))?;
    let mut hist = BTreeMap::new();
    for w in witnesses {
        *hist.entry(net.region_image_dimension(&w.pattern)?).or_insert(0) += 1;
    }
    Ok(hist)
}

#[derive(Clone)]
struct Node {
    layer: usize,
    unit: usize,
    /// Input-space preactivations of `layer` under `prefix`.
    pre: Arc<AffineMap>,
    choices: Vec<usize>,
    prefix: ActivationPattern,
    query: FeasibilityQuery,
    verdict: Verdict,
}

#[derive(Default)]
struct Tally {
    count: u64,
    nodes: u64,
    pruned: u64,
    witnesses: Vec<Witness>,
    oracle_calls: u64,
    cert: Certification,
}

impl Tally {
    fn absorb(&mut self, other: Tally) {
        self.count += other.count;
        self.nodes += other.nodes;
        self.pruned += other.pruned;
        self.witnesses.extend(other.witnesses);
        self.cert.checked += other.cert.checked;
        self.cert.disagreements += other.cert.disagreements;
    }
}

struct Search<'a> {
    net: &'a Network,
    opts: &'a CounterOptions,
    counted: AtomicU64,
    stop: AtomicBool,
}

impl Search<'_> {
    fn is_leaf(&self, node: &Node) -> bool {
        node.layer == self.net.depth()
    }

    fn evaluate(&self, query: &FeasibilityQuery, tally: &mut Tally) -> Result<Verdict> {
        let verdict = max_margin(query, self.opts.lp_tolerance)?;
        tally.oracle_calls += 1;
        if let Some(every) = self.opts.certify_every {
            if tally.oracle_calls.is_multiple_of(every) {
                let exact = exact_max_margin(query)?;
                tally.cert.checked += 1;
                if exact.exceeds(self.opts.epsilon) != verdict.exceeds(self.opts.epsilon) {
                    tally.cert.disagreements += 1;
                }
            }
        }
        Ok(verdict)
    }

    /// Children of `node` that keep a margin above epsilon.
    fn expand(&self, node: &Node, tally: &mut Tally) -> Result<Vec<Node>> {
        let layer = &self.net.layers[node.layer];
        let eps = self.opts.epsilon;
        let witness = node.verdict.witness().unwrap_or(&[]);
        let parent_margin = match &node.verdict {
            Verdict::Feasible { margin, .. } => Some(*margin),
            _ => None,
        };
        let free = node.query.margin.is_empty();
        let i = node.unit;
        let mut out = Vec::new();

        let options: Vec<(usize, FeasibilityQuery, bool)> = match layer.rank() {
            None => {
                let a = &node.pre.matrix[i];
                let off = node.pre.offset[i];
                let v = dot(a, witness) + off;
                let mut inactive = node.query.clone();
                inactive.hard.push(Row::new(a.clone(), -off));
                // the parent witness stays optimal when it already satisfies the new row
                let keep_inactive = v <= 0.0 && (parent_margin.is_some() || free);
                let mut active = node.query.clone();
                active.margin.push(Row::new(a.clone(), -off));
                let keep_active = parent_margin.is_some_and(|m| v >= m);
                vec![(0, inactive, keep_inactive), (1, active, keep_active)]
            }
            Some(k) => (0..k)
                .map(|j| {
                    let mut q = node.query.clone();
                    let (aj, oj) = (&node.pre.matrix[i * k + j], node.pre.offset[i * k + j]);
                    let mut min_gap = f64::INFINITY;
                    for jj in (0..k).filter(|&jj| jj != j) {
                        let (ab, ob) = (&node.pre.matrix[i * k + jj], node.pre.offset[i * k + jj]);
                        let diff: Vec<f64> = aj.iter().zip(ab).map(|(x, y)| x - y).collect();
                        let c = ob - oj;
                        min_gap = min_gap.min(dot(&diff, witness) - c);
                        q.margin.push(Row::new(diff, c));
                    }
                    let keep = parent_margin.is_some_and(|m| min_gap >= m);
                    (j, q, keep)
                })
                .collect(),
        };

        for (choice, query, keep) in options {
            tally.nodes += 1;
            let verdict = if keep {
                node.verdict.clone()
            } else {
                self.evaluate(&query, tally)?
            };
            if !verdict.exceeds(eps) {
                tally.pruned += 1;
                continue;
            }
            out.push(self.advance(node, choice, query, verdict));
        }
        Ok(out)
    }

    fn advance(&self, node: &Node, choice: usize, query: FeasibilityQuery, verdict: Verdict) -> Node {
        let layer = &self.net.layers[node.layer];
        let mut choices = node.choices.clone();
        choices.push(choice);
        if choices.len() < layer.width() {
            return Node {
                unit: node.unit + 1,
                choices,
                query,
                verdict,
                pre: Arc::clone(&node.pre),
                layer: node.layer,
                prefix: node.prefix.clone(),
            };
        }
        let act = match layer.rank() {
            None => LayerActivation::Relu(choices.iter().map(|&c| c == 1).collect()),
            Some(_) => LayerActivation::Maxout(choices),
        };
        let next = node.layer + 1;
        let pre = if next < self.net.depth() {
            let post = act.select((*node.pre).clone(), layer.rank().unwrap_or(1));
            Arc::new(post.then(&self.net.layers[next].preactivation_rows(), self.net.input_dim))
        } else {
            Arc::clone(&node.pre)
        };
        let mut prefix = node.prefix.clone();
        prefix.push(act);
        Node {
            layer: next,
            unit: 0,
            pre,
            choices: Vec::new(),
            prefix,
            query,
            verdict,
        }
    }

    fn record_leaf(&self, node: Node, tally: &mut Tally) {
        if let Some(cap) = self.opts.region_cap {
            let prev = self.counted.fetch_add(1, Ordering::SeqCst);
            if prev >= cap {
                self.stop.store(true, Ordering::SeqCst);
                return;
            }
            if prev + 1 >= cap {
                self.stop.store(true, Ordering::SeqCst);
            }
        }
        tally.count += 1;
        if self.opts.collect_witnesses {
            let (point, margin) = match node.verdict {
                Verdict::Feasible { witness, margin } => (witness, Some(margin)),
                Verdict::MarginUnbounded { witness } => (witness, None),
                Verdict::Infeasible => unreachable!("infeasible nodes are pruned"),
            };
            tally.witnesses.push(Witness {
                pattern: node.prefix,
                point,
                margin,
            });
        }
    }

    fn dfs(&self, node: Node, tally: &mut Tally) -> Result<()> {
        if self.stop.load(Ordering::Relaxed) {
            return Ok(());
        }
        if self.is_leaf(&node) {
            self.record_leaf(node, tally);
            return Ok(());
        }
        for child in self.expand(&node, tally)? {
            self.dfs(child, tally)?;
        }
        Ok(())
    }
}

fn count_regions(net: &Network, opts: &CounterOptions) -> Result<CountResult> {
    opts.check(net)?;
    let start = Instant::now();
    let search = Search {
        net,
        opts,
        counted: AtomicU64::new(0),
        stop: AtomicBool::new(false),
    };
    let mut tally = Tally::default();
    let root_query = FeasibilityQuery::new(net.input_dim, opts.domain.clone());
    let root_verdict = search.evaluate(&root_query, &mut tally)?;
    let pre = match net.layers.first() {
        Some(l) => AffineMap::identity(net.input_dim).then(&l.preactivation_rows(), net.input_dim),
        None => AffineMap::identity(net.input_dim),
    };
    let root = Node {
        layer: 0,
        unit: 0,
        pre: Arc::new(pre),
        choices: Vec::new(),
        prefix: ActivationPattern::default(),
        query: root_query,
        verdict: root_verdict,
    };

    if opts.workers <= 1 {
        search.dfs(root, &mut tally)?;
    } else {
        // breadth-first split until there is enough work to share
        let target = 8 * opts.workers;
        let mut frontier = vec![root];
        while frontier.len() < target && frontier.iter().any(|n| !search.is_leaf(n)) {
            let mut next = Vec::new();
            for node in frontier {
                if search.is_leaf(&node) {
                    next.push(node);
                } else {
                    next.extend(search.expand(&node, &mut tally)?);
                }
            }
            frontier = next;
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(opts.workers)
            .build()
            .map_err(|e| Error::precondition(format!("cannot start worker pool: {e}")))?;
        let parts: Vec<Result<Tally>> = pool.install(|| {
            frontier
                .into_par_iter()
                .map(|node| {
                    let mut t = Tally::default();
                    search.dfs(node, &mut t)?;
                    Ok(t)
                })
                .collect()
        });
        for part in parts {
            tally.absorb(part?);
        }
    }

    Ok(CountResult {
        count: BigCount::from(tally.count),
        witnesses: opts.collect_witnesses.then_some(tally.witnesses),
        nodes: tally.nodes,
        pruned: tally.pruned,
        seconds: start.elapsed().as_secs_f64(),
        capped: search.stop.load(Ordering::SeqCst),
        certification: opts.certify_every.map(|_| tally.cert),
    })
}
