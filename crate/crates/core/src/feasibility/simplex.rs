//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Solves `max c·v  s.t.  A v ≤ b, v ≥ 0` for tiny dense problems. The solver is
//! generic over the scalar so the same pivoting code runs in `f64` and in exact
//! rationals; Bland's smallest-index rule makes it terminate in exact
//! arithmetic and keeps the float path deterministic.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_rational::BigRational;
use num_traits::{Signed, Zero};

pub(crate) trait Scalar:
    Clone
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    /// Magnitude below which pivots and reduced costs are treated as zero.
    fn eps() -> Self;
    fn abs(&self) -> Self;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn eps() -> Self {
        1e-11
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        num_traits::One::one()
    }
    fn eps() -> Self {
        Zero::zero()
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum LpOutcome<T> {
    Optimal {
        point: Vec<T>,
        value: T,
    },
    Infeasible,
    /// `point + t * ray` is feasible for all `t ≥ 0` and the objective grows
    /// along `ray`.
    Unbounded {
        point: Vec<T>,
        ray: Vec<T>,
    },
    /// Iteration cap hit; only reachable through float round-off.
    Stalled,
}

const MAX_PIVOTS: usize = 100_000;

struct Tableau<T> {
    rows: Vec<Vec<T>>,
    rhs: Vec<T>,
    basis: Vec<usize>,
    reduced: Vec<T>,
    value: T,
}

impl<T: Scalar> Tableau<T> {
    fn pivot(&mut self, r: usize, s: usize) {
        let p = self.rows[r][s].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() / p.clone();
        }
        self.rhs[r] = self.rhs[r].clone() / p;
        let pivot_row = self.rows[r].clone();
        let pivot_rhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let factor = self.rows[i][s].clone();
            if factor == T::zero() {
                continue;
            }
            for (v, pr) in self.rows[i].iter_mut().zip(&pivot_row) {
                *v = v.clone() - factor.clone() * pr.clone();
            }
            self.rows[i][s] = T::zero();
            self.rhs[i] = self.rhs[i].clone() - factor * pivot_rhs.clone();
        }
        let factor = self.reduced[s].clone();
        if factor != T::zero() {
            for (v, pr) in self.reduced.iter_mut().zip(&pivot_row) {
                *v = v.clone() - factor.clone() * pr.clone();
            }
            self.reduced[s] = T::zero();
            self.value = self.value.clone() + factor * pivot_rhs;
        }
        self.basis[r] = s;
    }

    fn price(&mut self, cost: &[T]) {
        let ncols = cost.len();
        self.reduced = cost.to_vec();
        self.value = T::zero();
        for (i, &b) in self.basis.iter().enumerate() {
            let cb = cost[b].clone();
            if cb == T::zero() {
                continue;
            }
            for j in 0..ncols {
                self.reduced[j] = self.reduced[j].clone() - cb.clone() * self.rows[i][j].clone();
            }
            self.value = self.value.clone() + cb * self.rhs[i].clone();
        }
    }

    /// Bland's rule over columns `< allowed`. `Ok(None)` at optimality,
    /// `Err(col)` when `col` is an unbounded direction.
    fn iterate(&mut self, allowed: usize) -> Result<Option<()>, usize> {
        let eps = T::eps();
        let entering = (0..allowed).find(|&j| self.reduced[j] > eps);
        let Some(s) = entering else {
            return Ok(None);
        };
        let mut best: Option<(usize, T)> = None;
        for i in 0..self.rows.len() {
            let a = self.rows[i][s].clone();
            if a > eps {
                let ratio = self.rhs[i].clone() / a;
                let better = match &best {
                    None => true,
                    Some((r, q)) => ratio < *q || (ratio == *q && self.basis[i] < self.basis[*r]),
                };
                if better {
                    best = Some((i, ratio));
                }
            }
        }
        match best {
            Some((r, _)) => {
                self.pivot(r, s);
                Ok(Some(()))
            }
            None => Err(s),
        }
    }

    fn structural(&self, n: usize) -> Vec<T> {
        let mut x = vec![T::zero(); n];
        for (i, &b) in self.basis.iter().enumerate() {
            if b < n {
                x[b] = self.rhs[i].clone();
            }
        }
        x
    }
}

/// Solves `max c·v, A v ≤ b, v ≥ 0`. With `feasibility_only` the objective is
/// ignored and any feasible vertex is returned as `Optimal` with value zero.
/// `tolerance` bounds the phase-one residual accepted as feasible.
pub(crate) fn solve<T: Scalar>(a: &[Vec<T>], b: &[T], c: &[T], feasibility_only: bool, tolerance: T) -> LpOutcome<T> {
    let m = a.len();
    let n = c.len();
    let negative: Vec<usize> = (0..m).filter(|&i| b[i] < T::zero()).collect();
    let n_art = negative.len();
    let ncols = n + m + n_art;

    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    let mut basis = Vec::with_capacity(m);
    let mut art = 0;
    for i in 0..m {
        let mut row = vec![T::zero(); ncols];
        let flip = b[i] < T::zero();
        for j in 0..n {
            row[j] = if flip { -a[i][j].clone() } else { a[i][j].clone() };
        }
        row[n + i] = if flip { -T::one() } else { T::one() };
        if flip {
            row[n + m + art] = T::one();
            basis.push(n + m + art);
            art += 1;
            rhs.push(-b[i].clone());
        } else {
            basis.push(n + i);
            rhs.push(b[i].clone());
        }
        rows.push(row);
    }

    let mut t = Tableau {
        rows,
        rhs,
        basis,
        reduced: vec![T::zero(); ncols],
        value: T::zero(),
    };

    if n_art > 0 {
        let mut cost = vec![T::zero(); ncols];
        for v in cost.iter_mut().skip(n + m) {
            *v = -T::one();
        }
        t.price(&cost);
        let mut pivots = 0;
        loop {
            match t.iterate(ncols) {
                Ok(Some(())) => {}
                Ok(None) => break,
                // phase one is bounded below by zero
                Err(_) => return LpOutcome::Stalled,
            }
            pivots += 1;
            if pivots > MAX_PIVOTS {
                return LpOutcome::Stalled;
            }
        }
        if -t.value.clone() > tolerance {
            return LpOutcome::Infeasible;
        }
        // drive remaining artificials out of the basis
        let eps = T::eps();
        for r in 0..m {
            if t.basis[r] >= n + m {
                if let Some(s) = (0..n + m).find(|&j| t.rows[r][j].abs() > eps) {
                    t.pivot(r, s);
                }
            }
        }
    }

    if feasibility_only {
        return LpOutcome::Optimal {
            point: t.structural(n),
            value: T::zero(),
        };
    }

    let mut cost = vec![T::zero(); ncols];
    cost[..n].clone_from_slice(c);
    t.price(&cost);
    let mut pivots = 0;
    loop {
        match t.iterate(n + m) {
            Ok(Some(())) => {}
            Ok(None) => {
                return LpOutcome::Optimal {
                    point: t.structural(n),
                    value: t.value.clone(),
                }
            }
            Err(s) => {
                let point = t.structural(n);
                let mut ray = vec![T::zero(); n];
                if s < n {
                    ray[s] = T::one();
                }
                for (i, &bv) in t.basis.iter().enumerate() {
                    if bv < n {
                        ray[bv] = -t.rows[i][s].clone();
                    }
                }
                return LpOutcome::Unbounded { point, ray };
            }
        }
        pivots += 1;
        if pivots > MAX_PIVOTS {
            return LpOutcome::Stalled;
        }
    }
}
