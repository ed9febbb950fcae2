//! Big-M bounds and the mixed-integer model whose feasible binary assignments
//! with positive margin are the regions counted by the tree search.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::CounterOptions;
use crate::error::{Error, Result};
use crate::feasibility::simplex::{solve, LpOutcome};
use crate::network::{InputDomain, Layer, Network};

/// Absolute part of the slack added to the margin-row constants.
const FCUT_ABS_SLACK: f64 = 1e-6;
/// Relative part of the slack added to the margin-row constants.
const FCUT_REL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

/// Bounds for one unit over the input box. ReLU units have one preactivation
/// interval, maxout units one per piece. `h` and `h_bar` bound the positive
/// and negative parts of the unit's output (for ReLU: `h` and `h̄`).
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronBound {
    pub preactivation: Vec<Interval>,
    pub output: Interval,
    pub h: f64,
    pub h_bar: f64,
}

/// Interval propagation through the network. After a ReLU layer the lower
/// output bounds are zero and the upper bounds follow
/// `H_i = max{0, Σ_j max{0, w_ij H_j} + b_i}`; the first layer and layers fed
/// by maxout units use full interval arithmetic.
pub fn compute_big_m(net: &Network, domain: &InputDomain) -> Result<Vec<Vec<NeuronBound>>> {
    net.check()?;
    domain.check(net.input_dim)?;
    let InputDomain::Box { lower, upper } = domain else {
        return Err(Error::UnboundedDomain);
    };
    let mut inputs: Vec<Interval> = lower.iter().zip(upper).map(|(&lo, &hi)| Interval { lo, hi }).collect();
    let mut out = Vec::with_capacity(net.depth());
    for layer in &net.layers {
        let k = layer.rank().unwrap_or(1);
        let rows = layer.preactivation_rows();
        let mut bounds = Vec::with_capacity(layer.width());
        for i in 0..layer.width() {
            let pre: Vec<Interval> = rows[i * k..(i + 1) * k]
                .iter()
                .map(|(w, b)| {
                    let (mut lo, mut hi) = (*b, *b);
                    for (wj, x) in w.iter().zip(&inputs) {
                        if *wj >= 0.0 {
                            lo += wj * x.lo;
                            hi += wj * x.hi;
                        } else {
                            lo += wj * x.hi;
                            hi += wj * x.lo;
                        }
                    }
                    Interval { lo, hi }
                })
                .collect();
            let output = if layer.is_maxout() {
                Interval {
                    lo: pre.iter().map(|p| p.lo).fold(f64::NEG_INFINITY, f64::max),
                    hi: pre.iter().map(|p| p.hi).fold(f64::NEG_INFINITY, f64::max),
                }
            } else {
                Interval {
                    lo: pre[0].lo.max(0.0),
                    hi: pre[0].hi.max(0.0),
                }
            };
            let (h, h_bar) = if layer.is_maxout() {
                (output.hi.max(0.0), (-output.lo).max(0.0))
            } else {
                (pre[0].hi.max(0.0), (-pre[0].lo).max(0.0))
            };
            bounds.push(NeuronBound {
                preactivation: pre,
                output,
                h,
                h_bar,
            });
        }
        inputs = bounds.iter().map(|b| b.output).collect();
        out.push(bounds);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MilpRow {
    pub name: String,
    pub terms: Vec<(String, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

/// `None` bounds are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct VarBound {
    pub name: String,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// Maximize `f` subject to `rows`, with every continuous variable listed in
/// `bounds` and every binary in `binaries`.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpModel {
    pub rows: Vec<MilpRow>,
    pub bounds: Vec<VarBound>,
    pub binaries: Vec<String>,
    pub big_m: Vec<Vec<NeuronBound>>,
}

fn inflate(h: f64) -> f64 {
    h + FCUT_ABS_SLACK + FCUT_REL_SLACK * h.abs()
}

fn row(name: String, terms: Vec<(String, f64)>, sense: Sense, rhs: f64) -> MilpRow {
    MilpRow {
        name,
        terms: terms.into_iter().filter(|(_, c)| *c != 0.0).collect(),
        sense,
        rhs,
    }
}

/// Builds the mixed-integer model over the options' box. The output layer, if
/// any, does not take part.
pub fn export_milp(net: &Network, opts: &CounterOptions) -> Result<MilpModel> {
    let big_m = compute_big_m(net, &opts.domain)?;
    let InputDomain::Box { lower, upper } = &opts.domain else {
        return Err(Error::UnboundedDomain);
    };
    let mut rows = Vec::new();
    let mut bounds = Vec::new();
    let mut binaries = Vec::new();
    for j in 0..net.input_dim {
        bounds.push(VarBound {
            name: format!("x{}", j + 1),
            lower: Some(lower[j]),
            upper: Some(upper[j]),
        });
    }
    let mut prev: Vec<String> = (1..=net.input_dim).map(|j| format!("x{j}")).collect();

    for (li, layer) in net.layers.iter().enumerate() {
        let l = li + 1;
        let mut names = Vec::with_capacity(layer.width());
        for i in 0..layer.width() {
            let u = i + 1;
            let nb = &big_m[li][i];
            let h = format!("h{l}_{u}");
            match layer {
                Layer::Relu { weights, bias } => {
                    let (hb, z) = (format!("hb{l}_{u}"), format!("z{l}_{u}"));
                    let mut terms: Vec<(String, f64)> = prev.iter().cloned().zip(weights[i].iter().copied()).collect();
                    terms.push((h.clone(), -1.0));
                    terms.push((hb.clone(), 1.0));
                    rows.push(row(format!("map{l}_{u}"), terms, Sense::Eq, -bias[i]));
                    rows.push(row(
                        format!("act{l}_{u}"),
                        vec![(h.clone(), 1.0), (z.clone(), -nb.h)],
                        Sense::Le,
                        0.0,
                    ));
                    rows.push(row(
                        format!("ina{l}_{u}"),
                        vec![(hb.clone(), 1.0), (z.clone(), nb.h_bar)],
                        Sense::Le,
                        nb.h_bar,
                    ));
                    let m = inflate(nb.h);
                    rows.push(row(
                        format!("fcut{l}_{u}"),
                        vec![("f".into(), 1.0), (h.clone(), -1.0), (z.clone(), m)],
                        Sense::Le,
                        m,
                    ));
                    bounds.push(VarBound {
                        name: h.clone(),
                        lower: Some(0.0),
                        upper: Some(nb.h),
                    });
                    bounds.push(VarBound {
                        name: hb,
                        lower: Some(0.0),
                        upper: Some(nb.h_bar),
                    });
                    binaries.push(z);
                }
                Layer::Maxout { weights, bias } => {
                    let k = weights.len();
                    let mut sel = Vec::with_capacity(k);
                    for j in 0..k {
                        let p = j + 1;
                        let (g, z) = (format!("g{l}_{u}_{p}"), format!("z{l}_{u}_{p}"));
                        let piece = nb.preactivation[j];
                        let mut terms: Vec<(String, f64)> =
                            prev.iter().cloned().zip(weights[j][i].iter().copied()).collect();
                        terms.push((g.clone(), -1.0));
                        rows.push(row(format!("map{l}_{u}_{p}"), terms, Sense::Eq, -bias[j][i]));
                        rows.push(row(
                            format!("ina{l}_{u}_{p}"),
                            vec![(h.clone(), 1.0), (g.clone(), -1.0)],
                            Sense::Ge,
                            0.0,
                        ));
                        // h − g_j never exceeds the output ceiling minus the piece floor
                        let m = (nb.output.hi - piece.lo).max(0.0);
                        rows.push(row(
                            format!("act{l}_{u}_{p}"),
                            vec![(h.clone(), 1.0), (g.clone(), -1.0), (z.clone(), m)],
                            Sense::Le,
                            m,
                        ));
                        let mf = inflate(m);
                        rows.push(row(
                            format!("fcut{l}_{u}_{p}"),
                            vec![("f".into(), 1.0), (h.clone(), -1.0), (g.clone(), 1.0), (z.clone(), -mf)],
                            Sense::Le,
                            0.0,
                        ));
                        bounds.push(VarBound {
                            name: g,
                            lower: Some(piece.lo),
                            upper: Some(piece.hi),
                        });
                        sel.push((z.clone(), 1.0));
                        binaries.push(z);
                    }
                    rows.push(row(format!("sel{l}_{u}"), sel, Sense::Eq, 1.0));
                    bounds.push(VarBound {
                        name: h.clone(),
                        lower: Some(nb.output.lo),
                        upper: Some(nb.output.hi),
                    });
                }
            }
            names.push(h);
        }
        prev = names;
    }
    bounds.push(VarBound {
        name: "f".into(),
        lower: None,
        upper: None,
    });
    Ok(MilpModel {
        rows,
        bounds,
        binaries,
        big_m,
    })
}

fn fmt_num(v: f64) -> String {
    // `{:?}` is the shortest round-trip form and uses exponents for extremes
    // adding zero turns -0 into 0
    let s = format!("{:?}", v + 0.0);
    s.strip_suffix(".0").map(str::to_string).unwrap_or(s)
}

impl MilpModel {
    /// Every variable name declared in the bounds or binaries sections.
    pub fn declared(&self) -> BTreeSet<&str> {
        self.bounds
            .iter()
            .map(|b| b.name.as_str())
            .chain(self.binaries.iter().map(String::as_str))
            .collect()
    }

    /// Rows named `prefix<l>_<i>` or `prefix<l>_<i>_<j>` for one unit.
    pub fn unit_rows(&self, layer: usize, unit: usize) -> Vec<&MilpRow> {
        let tag = format!("{layer}_{unit}");
        self.rows
            .iter()
            .filter(|r| {
                let body = r.name.trim_start_matches(|c: char| c.is_ascii_alphabetic());
                body == tag || body.strip_prefix(&tag).is_some_and(|rest| rest.starts_with('_'))
            })
            .collect()
    }

    /// Rendering in the LP file format.
    pub fn to_lp_string(&self) -> String {
        let mut s = String::new();
        s.push_str("Maximize\n obj: f\nSubject To\n");
        for r in &self.rows {
            let _ = write!(s, " {}:", r.name);
            if r.terms.is_empty() {
                s.push_str(" 0 f");
            }
            for (k, (name, c)) in r.terms.iter().enumerate() {
                let sign = if *c < 0.0 {
                    "-"
                } else if k == 0 {
                    ""
                } else {
                    "+"
                };
                let mag = c.abs();
                if sign.is_empty() {
                    let _ = write!(s, " {} {}", fmt_num(mag), name);
                } else {
                    let _ = write!(s, " {} {} {}", sign, fmt_num(mag), name);
                }
            }
            let op = match r.sense {
                Sense::Le => "<=",
                Sense::Ge => ">=",
                Sense::Eq => "=",
            };
            let _ = writeln!(s, " {} {}", op, fmt_num(r.rhs));
        }
        s.push_str("Bounds\n");
        for b in &self.bounds {
            match (b.lower, b.upper) {
                (None, None) => {
                    let _ = writeln!(s, " {} free", b.name);
                }
                (Some(lo), Some(hi)) => {
                    let _ = writeln!(s, " {} <= {} <= {}", fmt_num(lo), b.name, fmt_num(hi));
                }
                (Some(lo), None) => {
                    let _ = writeln!(s, " {} >= {}", b.name, fmt_num(lo));
                }
                (None, Some(hi)) => {
                    let _ = writeln!(s, " -inf <= {} <= {}", b.name, fmt_num(hi));
                }
            }
        }
        s.push_str("Binaries\n");
        for z in &self.binaries {
            let _ = writeln!(s, " {z}");
        }
        s.push_str("End\n");
        s
    }
}

/// Largest number of binaries `enumerate_binary_solutions` will sweep.
pub const ENUMERATION_MAX_BINARIES: usize = 20;

/// Continuous variable written as `constant + Σ coef · column` over
/// nonnegative LP columns.
struct Shifted {
    constant: f64,
    columns: Vec<(usize, f64)>,
}

impl MilpModel {
    /// Every binary assignment, in lexicographic order of the binaries (first
    /// binary most significant), whose continuous relaxation with the binaries
    /// fixed has objective above `min_objective` (or is unbounded). This is a
    /// solution-pool enumeration for small models that needs no external
    /// solver.
    pub fn enumerate_binary_solutions(&self, min_objective: f64) -> Result<Vec<Vec<bool>>> {
        let nz = self.binaries.len();
        if nz > ENUMERATION_MAX_BINARIES {
            return Err(Error::SizeGuard(format!(
                "{nz} binaries exceed the enumeration limit of {ENUMERATION_MAX_BINARIES}"
            )));
        }
        let binary_index: HashMap<&str, usize> =
            self.binaries.iter().enumerate().map(|(i, z)| (z.as_str(), i)).collect();

        let mut vars: HashMap<&str, Shifted> = HashMap::new();
        let mut ncols = 0;
        let mut box_rows: Vec<(usize, f64)> = Vec::new();
        for b in &self.bounds {
            let shifted = match (b.lower, b.upper) {
                (Some(lo), hi) => {
                    if let Some(hi) = hi {
                        box_rows.push((ncols, hi - lo));
                    }
                    ncols += 1;
                    Shifted {
                        constant: lo,
                        columns: vec![(ncols - 1, 1.0)],
                    }
                }
                (None, Some(hi)) => {
                    ncols += 1;
                    Shifted {
                        constant: hi,
                        columns: vec![(ncols - 1, -1.0)],
                    }
                }
                (None, None) => {
                    ncols += 2;
                    Shifted {
                        constant: 0.0,
                        columns: vec![(ncols - 2, 1.0), (ncols - 1, -1.0)],
                    }
                }
            };
            vars.insert(b.name.as_str(), shifted);
        }
        let objective = vars.get("f").ok_or(Error::Missing("objective variable f"))?;
        let mut c = vec![0.0; ncols];
        for &(col, coef) in &objective.columns {
            c[col] += coef;
        }

        let mut solutions = Vec::new();
        for mask in 0..(1u64 << nz) {
            let z: Vec<bool> = (0..nz).map(|i| mask >> (nz - 1 - i) & 1 == 1).collect();
            let mut a = Vec::new();
            let mut rhs = Vec::new();
            for &(col, width) in &box_rows {
                let mut r = vec![0.0; ncols];
                r[col] = 1.0;
                a.push(r);
                rhs.push(width);
            }
            for row in &self.rows {
                let mut r = vec![0.0; ncols];
                let mut constant = 0.0;
                for (name, coef) in &row.terms {
                    if let Some(&i) = binary_index.get(name.as_str()) {
                        if z[i] {
                            constant += coef;
                        }
                    } else {
                        let v = vars
                            .get(name.as_str())
                            .ok_or_else(|| Error::precondition(format!("row {} uses undeclared {name}", row.name)))?;
                        constant += coef * v.constant;
                        for &(col, k) in &v.columns {
                            r[col] += coef * k;
                        }
                    }
                }
                let b = row.rhs - constant;
                if matches!(row.sense, Sense::Le | Sense::Eq) {
                    a.push(r.clone());
                    rhs.push(b);
                }
                if matches!(row.sense, Sense::Ge | Sense::Eq) {
                    a.push(r.iter().map(|v| -v).collect());
                    rhs.push(-b);
                }
            }
            let keep = match solve(&a, &rhs, &c, false, 1e-8) {
                LpOutcome::Optimal { value, .. } => value + objective.constant > min_objective,
                LpOutcome::Unbounded { .. } => true,
                LpOutcome::Infeasible => false,
                LpOutcome::Stalled => {
                    return Err(Error::Numerical(format!("LP for assignment {mask:b} stalled")));
                }
            };
            if keep {
                solutions.push(z);
            }
        }
        Ok(solutions)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn single_neuron_bounds() {
        let net = Network::new(2, vec![Layer::relu(vec![vec![1.0, -1.0]], vec![0.0])]);
        let b = compute_big_m(&net, &InputDomain::uniform(2, 0.0, 1.0)).unwrap();
        assert_eq!((b[0][0].h, b[0][0].h_bar), (1.0, 1.0));
    }

    #[test]
    fn zero_weights_bounds() {
        for bias in [-2.5, 0.0, 3.0] {
            let net = Network::new(2, vec![Layer::relu(vec![vec![0.0, 0.0]], vec![bias])]);
            let b = compute_big_m(&net, &InputDomain::uniform(2, -1.0, 1.0)).unwrap();
            assert_eq!((b[0][0].h, b[0][0].h_bar), (bias.max(0.0), (-bias).max(0.0)));
        }
    }

    #[test]
    fn three_layer_2d_second_unit() {
        let b = compute_big_m(&fixtures::three_layer_2d(), &InputDomain::uniform(2, 0.0, 4.0)).unwrap();
        assert_eq!(b[0][1].h, 4.0);
        assert!(matches!(
            compute_big_m(&fixtures::three_layer_2d(), &InputDomain::Unrestricted),
            Err(Error::UnboundedDomain)
        ));
    }

    #[test]
    fn single_neuron_model_structure() {
        let opts = CounterOptions::new(InputDomain::uniform(1, -1.0, 1.0));
        let m = export_milp(&fixtures::single_neuron(), &opts).unwrap();
        let names: Vec<&str> = m.unit_rows(1, 1).iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["map1_1", "act1_1", "ina1_1", "fcut1_1"]);
        assert_eq!(m.binaries, ["z1_1"]);
        let text = m.to_lp_string();
        for needle in [
            "Maximize",
            "Subject To",
            "Bounds",
            "Binaries",
            "End",
            " -1 <= x1 <= 1",
            " f free",
        ] {
            assert!(text.contains(needle), "{needle} missing:\n{text}");
        }
        assert!(
            text.contains(" 0 <= h1_1 <= 1") && text.contains(" 0 <= hb1_1 <= 1"),
            "{text}"
        );
    }

    #[test]
    fn maxout_model_structure() {
        let opts = CounterOptions::new(InputDomain::uniform(1, -1.0, 1.0));
        let m = export_milp(&fixtures::abs_maxout(), &opts).unwrap();
        let names: BTreeSet<&str> = m.rows.iter().map(|r| r.name.as_str()).collect();
        for n in ["map1_1_1", "map1_1_2", "ina1_1_1", "act1_1_2", "fcut1_1_1", "sel1_1"] {
            assert!(names.contains(n), "{n}");
        }
        let sel = m.rows.iter().find(|r| r.name == "sel1_1").unwrap();
        assert_eq!(sel.sense, Sense::Eq);
        assert_eq!(sel.rhs, 1.0);
        assert_eq!(sel.terms.len(), 2);
    }

    #[test]
    fn rows_reference_declared_variables() {
        let opts = CounterOptions::new(InputDomain::uniform(2, -50.0, 50.0));
        let m = export_milp(&fixtures::three_layer_2d(), &opts).unwrap();
        assert_eq!(m.binaries.len(), 6);
        let declared = m.declared();
        for r in &m.rows {
            for (v, _) in &r.terms {
                assert!(declared.contains(v.as_str()), "{} uses {v}", r.name);
            }
        }
        for layer in &m.big_m {
            for nb in layer {
                assert!(nb.h >= 0.0 && nb.h_bar >= 0.0);
            }
        }
    }

    /// Binary assignments in the order the model declares them.
    fn flatten(pattern: &crate::network::ActivationPattern) -> Vec<bool> {
        use crate::network::LayerActivation;
        let mut out = Vec::new();
        for layer in pattern.layers() {
            match layer {
                LayerActivation::Relu(a) => out.extend(a),
                LayerActivation::Maxout(w) => {
                    for &j in w {
                        out.extend((0..3).map(|p| p == j));
                    }
                }
            }
        }
        out
    }

    fn counted_patterns(net: &Network, opts: &CounterOptions) -> BTreeSet<Vec<bool>> {
        let result = super::super::count_regions_maxout(net, &opts.clone().with_witnesses()).unwrap();
        result.witnesses.unwrap().iter().map(|w| flatten(&w.pattern)).collect()
    }

    #[test]
    fn enumeration_recovers_the_counted_regions() {
        let opts = CounterOptions::new(InputDomain::uniform(2, -1.0, 5.0));
        let net = fixtures::three_layer_2d();
        let m = export_milp(&net, &opts).unwrap();
        let found: BTreeSet<Vec<bool>> = m.enumerate_binary_solutions(1e-7).unwrap().into_iter().collect();
        assert_eq!(found.len(), 20);
        assert_eq!(found, counted_patterns(&net, &opts));

        for seed in 0..6 {
            let net = fixtures::random_relu(2, &[4, 3], seed);
            let opts = CounterOptions::new(InputDomain::uniform(2, -2.0, 2.0));
            let m = export_milp(&net, &opts).unwrap();
            let found: BTreeSet<Vec<bool>> = m.enumerate_binary_solutions(1e-7).unwrap().into_iter().collect();
            assert_eq!(found, counted_patterns(&net, &opts), "seed {seed}");
        }
    }

    #[test]
    fn enumeration_handles_maxout_selection() {
        let opts = CounterOptions::new(InputDomain::uniform(1, -1.0, 1.0));
        let m = export_milp(&fixtures::abs_maxout(), &opts).unwrap();
        assert_eq!(m.enumerate_binary_solutions(1e-7).unwrap().len(), 2);

        let net = fixtures::random_maxout(2, &[2], 3, 4);
        let opts = CounterOptions::new(InputDomain::uniform(2, -2.0, 2.0));
        let m = export_milp(&net, &opts).unwrap();
        let found: BTreeSet<Vec<bool>> = m.enumerate_binary_solutions(1e-7).unwrap().into_iter().collect();
        assert_eq!(found, counted_patterns(&net, &opts));
    }

    #[test]
    fn enumeration_refuses_large_models() {
        let opts = CounterOptions::new(InputDomain::uniform(2, -1.0, 1.0));
        let m = export_milp(&fixtures::random_relu(2, &[11, 10], 0), &opts).unwrap();
        assert!(matches!(m.enumerate_binary_solutions(1e-7), Err(Error::SizeGuard(_))));
    }
}
