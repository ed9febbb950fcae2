//! LP oracle for region membership.
//!
//! A query holds hard rows `a·x ≤ c` (inactive units) and margin rows
//! `a·x − c ≥ f` (active units). [`max_margin`] maximizes the common slack `f`
//! over the input domain; [`feasible_nonstrict`] only asks whether the closed
//! system with `f = 0` has a point.

pub(crate) mod simplex;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;

use crate::error::{Error, Result};
use crate::network::{dot, InputDomain};
use simplex::{solve, LpOutcome, Scalar};

/// LP feasibility tolerance applied to row-normalized constraints.
pub const DEFAULT_TOLERANCE: f64 = 1e-7;

/// A linear row `(a, c)`: `a·x ≤ c` when hard, `a·x − c ≥ f` when margin.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub a: Vec<f64>,
    pub c: f64,
}

impl Row {
    pub fn new(a: Vec<f64>, c: f64) -> Self {
        Row { a, c }
    }

    /// `a·x − c`.
    pub fn slack(&self, x: &[f64]) -> f64 {
        dot(&self.a, x) - self.c
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityQuery {
    pub dim: usize,
    pub hard: Vec<Row>,
    pub margin: Vec<Row>,
    pub domain: InputDomain,
}

impl FeasibilityQuery {
    pub fn new(dim: usize, domain: InputDomain) -> Self {
        FeasibilityQuery {
            dim,
            hard: Vec::new(),
            margin: Vec::new(),
            domain,
        }
    }

    pub fn with_hard(mut self, a: Vec<f64>, c: f64) -> Self {
        self.hard.push(Row::new(a, c));
        self
    }

    pub fn with_margin(mut self, a: Vec<f64>, c: f64) -> Self {
        self.margin.push(Row::new(a, c));
        self
    }

    pub fn check(&self) -> Result<()> {
        self.domain.check(self.dim)?;
        for row in self.hard.iter().chain(&self.margin) {
            if row.a.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: row.a.len(),
                });
            }
            if !row.c.is_finite() || row.a.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("feasibility query"));
            }
        }
        Ok(())
    }

    /// Smallest margin-row slack at `x`; `None` without margin rows.
    pub fn margin_at(&self, x: &[f64]) -> Option<f64> {
        self.margin.iter().map(|r| r.slack(x)).reduce(f64::min)
    }

    /// Largest hard-row excess `a·x − c` at `x`, or `-inf` without hard rows.
    pub fn hard_excess(&self, x: &[f64]) -> f64 {
        self.hard.iter().map(|r| r.slack(x)).fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Verdict {
    Infeasible,
    Feasible {
        witness: Vec<f64>,
        margin: f64,
    },
    /// The margin grows without bound; the witness has margin at least 1
    /// whenever margin rows exist.
    MarginUnbounded {
        witness: Vec<f64>,
    },
}

impl Verdict {
    pub fn is_infeasible(&self) -> bool {
        matches!(self, Verdict::Infeasible)
    }

    /// Counted as a full-dimensional region at threshold `eps`.
    pub fn exceeds(&self, eps: f64) -> bool {
        match self {
            Verdict::Infeasible => false,
            Verdict::Feasible { margin, .. } => *margin > eps,
            Verdict::MarginUnbounded { .. } => true,
        }
    }

    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            Verdict::Infeasible => None,
            Verdict::Feasible { witness, .. } | Verdict::MarginUnbounded { witness } => Some(witness),
        }
    }
}

/// Exact optimum of the margin LP.
#[derive(Debug, Clone, PartialEq)]
pub enum ExactMargin {
    Infeasible,
    Bounded(BigRational),
    Unbounded,
}

// Column layout: box mode substitutes x = lower + y (y ≥ 0, y ≤ upper − lower);
// unrestricted mode splits x = p − q. A free f becomes f⁺ − f⁻ at the end.
struct Lp<T> {
    a: Vec<Vec<T>>,
    b: Vec<T>,
    c: Vec<T>,
}

fn build<T: Scalar>(q: &FeasibilityQuery, conv: &dyn Fn(f64) -> T, with_f: bool) -> Lp<T> {
    let n = q.dim;
    let lower: Option<Vec<T>> = match &q.domain {
        InputDomain::Box { lower, .. } => Some(lower.iter().map(|&v| conv(v)).collect()),
        InputDomain::Unrestricted => None,
    };
    let xcols = if lower.is_some() { n } else { 2 * n };
    let ncols = xcols + if with_f { 2 } else { 0 };

    // Row for `sign·(a·x) + f_coef·f ≤ sign·c`, written over the substituted columns.
    let row = |a: &[f64], c: f64, sign: f64, f_coef: f64| -> (Vec<T>, T) {
        let mut out = vec![T::zero(); ncols];
        let mut rhs = conv(sign * c);
        for j in 0..n {
            let aj = conv(sign * a[j]);
            match &lower {
                Some(l) => {
                    rhs = rhs - aj.clone() * l[j].clone();
                    out[j] = aj;
                }
                None => {
                    out[n + j] = -aj.clone();
                    out[j] = aj;
                }
            }
        }
        if with_f {
            out[xcols] = conv(f_coef);
            out[xcols + 1] = conv(-f_coef);
        }
        (out, rhs)
    };

    let mut a = Vec::new();
    let mut b = Vec::new();
    for r in &q.hard {
        let (ra, rb) = row(&r.a, r.c, 1.0, 0.0);
        a.push(ra);
        b.push(rb);
    }
    for r in &q.margin {
        // a·x − c ≥ f  ⇔  −a·x + f ≤ −c
        let (ra, rb) = row(&r.a, r.c, -1.0, if with_f { 1.0 } else { 0.0 });
        a.push(ra);
        b.push(rb);
    }
    if let InputDomain::Box { lower, upper } = &q.domain {
        for j in 0..n {
            let mut ra = vec![T::zero(); ncols];
            ra[j] = T::one();
            a.push(ra);
            b.push(conv(upper[j]) - conv(lower[j]));
        }
    }
    let mut c = vec![T::zero(); ncols];
    if with_f {
        c[xcols] = T::one();
        c[xcols + 1] = -T::one();
    }
    Lp { a, b, c }
}

fn normalize(lp: &mut Lp<f64>) {
    for (row, rhs) in lp.a.iter_mut().zip(lp.b.iter_mut()) {
        let scale = row.iter().fold(rhs.abs(), |m, v| m.max(v.abs()));
        if scale > 0.0 && scale != 1.0 {
            row.iter_mut().for_each(|v| *v /= scale);
            *rhs /= scale;
        }
    }
}

fn to_input(q: &FeasibilityQuery, v: &[f64]) -> Vec<f64> {
    let n = q.dim;
    match &q.domain {
        InputDomain::Box { lower, upper } => (0..n).map(|j| (lower[j] + v[j]).clamp(lower[j], upper[j])).collect(),
        InputDomain::Unrestricted => (0..n).map(|j| v[j] - v[n + j]).collect(),
    }
}

fn stalled() -> Error {
    Error::Numerical("simplex iteration limit reached".into())
}

/// Maximizes the margin `f` subject to the query. `tol` is the feasibility
/// tolerance on row-normalized constraints.
pub fn max_margin(q: &FeasibilityQuery, tol: f64) -> Result<Verdict> {
    q.check()?;
    let mut lp = build(q, &|v| v, true);
    normalize(&mut lp);
    let xcols = lp.c.len() - 2;
    match solve(&lp.a, &lp.b, &lp.c, false, tol) {
        LpOutcome::Infeasible => Ok(Verdict::Infeasible),
        LpOutcome::Stalled => Err(stalled()),
        LpOutcome::Optimal { point, .. } => {
            let witness = to_input(q, &point);
            match q.margin_at(&witness) {
                Some(margin) => Ok(Verdict::Feasible { witness, margin }),
                // f is free without margin rows; the solver cannot stop there
                None => Ok(Verdict::MarginUnbounded { witness }),
            }
        }
        LpOutcome::Unbounded { point, ray } => {
            let f0 = point[xcols] - point[xcols + 1];
            let df = ray[xcols] - ray[xcols + 1];
            let t = if df > 0.0 { ((1.0 - f0) / df).max(0.0) } else { 0.0 };
            let moved: Vec<f64> = point.iter().zip(&ray).map(|(p, r)| p + t * r).collect();
            Ok(Verdict::MarginUnbounded {
                witness: to_input(q, &moved[..xcols]),
            })
        }
    }
}

/// Whether the hard rows and the margin rows with `f = 0` share a point of the
/// domain.
pub fn feasible_nonstrict(q: &FeasibilityQuery) -> Result<bool> {
    feasible_nonstrict_with_tolerance(q, DEFAULT_TOLERANCE)
}

pub fn feasible_nonstrict_with_tolerance(q: &FeasibilityQuery, tol: f64) -> Result<bool> {
    q.check()?;
    let mut lp = build(q, &|v| v, false);
    normalize(&mut lp);
    match solve(&lp.a, &lp.b, &lp.c, true, tol) {
        LpOutcome::Infeasible => Ok(false),
        LpOutcome::Stalled => Err(stalled()),
        _ => Ok(true),
    }
}

fn rational(v: f64) -> BigRational {
    // callers have checked finiteness
    BigRational::from_float(v).unwrap_or_else(|| BigRational::from_integer(<BigInt as Zero>::zero()))
}

/// Solves the margin LP in exact rational arithmetic over the binary values of
/// the query's coefficients.
pub fn exact_max_margin(q: &FeasibilityQuery) -> Result<ExactMargin> {
    q.check()?;
    let lp = build(q, &rational, true);
    let zero = <BigRational as Zero>::zero();
    let xcols = lp.c.len() - 2;
    match solve(&lp.a, &lp.b, &lp.c, false, zero) {
        LpOutcome::Infeasible => Ok(ExactMargin::Infeasible),
        LpOutcome::Stalled => Err(stalled()),
        LpOutcome::Unbounded { .. } => Ok(ExactMargin::Unbounded),
        LpOutcome::Optimal { point, .. } => {
            if q.margin.is_empty() {
                return Ok(ExactMargin::Unbounded);
            }
            Ok(ExactMargin::Bounded(point[xcols].clone() - point[xcols + 1].clone()))
        }
    }
}

impl ExactMargin {
    pub fn exceeds(&self, eps: f64) -> bool {
        match self {
            ExactMargin::Infeasible => false,
            ExactMargin::Bounded(f) => *f > rational(eps),
            ExactMargin::Unbounded => true,
        }
    }
}
