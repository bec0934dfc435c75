//! Dense two-phase primal simplex with Bland's rule.
//!
//! Solves `min cᵀx  s.t.  Ax = b, x ≥ 0` over any [`Scalar`]. In rational
//! mode every pivot is exact, which the rational approximation module relies
//! on; in float mode the problems are tiny (a few dozen rows) and unit scaled.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Clone, Debug)]
pub enum LpOutcome<S> {
    Optimal { x: Vec<S>, objective: S, basis: Vec<usize> },
    /// The objective decreases without bound along `x + t·ray`, `t ≥ 0`.
    Unbounded { x: Vec<S>, ray: Vec<S> },
}

struct Tableau<S> {
    rows: Vec<Vec<S>>,
    rhs: Vec<S>,
    basis: Vec<usize>,
    ncols: usize,
}

impl<S: Scalar> Tableau<S> {
    fn pivot(&mut self, r: usize, j: usize) {
        let piv = self.rows[r][j].clone();
        for v in self.rows[r].iter_mut() {
            *v = v.clone() / piv.clone();
        }
        self.rhs[r] = self.rhs[r].clone() / piv;
        let prow = self.rows[r].clone();
        let prhs = self.rhs[r].clone();
        for i in 0..self.rows.len() {
            if i == r {
                continue;
            }
            let f = self.rows[i][j].clone();
            if f.is_zero() {
                continue;
            }
            for (v, p) in self.rows[i].iter_mut().zip(&prow) {
                if !p.is_zero() {
                    *v -= &(f.clone() * p.clone());
                }
            }
            self.rows[i][j] = S::zero();
            self.rhs[i] -= &(f * prhs.clone());
        }
        self.basis[r] = j;
    }

    fn reduced_costs(&self, cost: &[S]) -> Vec<S> {
        let mut d = cost.to_vec();
        for (r, &bj) in self.basis.iter().enumerate() {
            let cb = cost[bj].clone();
            if cb.is_zero() {
                continue;
            }
            for (dj, t) in d.iter_mut().zip(&self.rows[r]) {
                *dj -= &(cb.clone() * t.clone());
            }
        }
        d
    }

    fn solution(&self) -> Vec<S> {
        let mut x = vec![S::zero(); self.ncols];
        for (r, &bj) in self.basis.iter().enumerate() {
            x[bj] = self.rhs[r].clone();
        }
        x
    }

    /// Runs Bland-rule pivots on `cost` over the columns in `allowed`.
    fn optimize(&mut self, cost: &[S], allowed: &[bool], max_iter: usize, iters: &mut usize) -> Result<Option<usize>> {
        let neg_eps = -S::pivot_eps();
        loop {
            if *iters >= max_iter {
                return Err(Error::Lp(format!("iteration limit {max_iter} reached")));
            }
            *iters += 1;
            let d = self.reduced_costs(cost);
            let entering = (0..self.ncols).find(|&j| allowed[j] && !self.basis.contains(&j) && d[j] < neg_eps);
            let Some(j) = entering else {
                return Ok(None);
            };
            let mut leave: Option<(usize, S)> = None;
            for r in 0..self.rows.len() {
                let a = &self.rows[r][j];
                if *a <= S::pivot_eps() {
                    continue;
                }
                let ratio = self.rhs[r].clone() / a.clone();
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, bratio)) => {
                        if ratio < bratio || (ratio == bratio && self.basis[r] < self.basis[br]) {
                            Some((r, ratio))
                        } else {
                            Some((br, bratio))
                        }
                    }
                };
            }
            match leave {
                None => return Ok(Some(j)),
                Some((r, _)) => self.pivot(r, j),
            }
        }
    }
}

/// Minimizes `cᵀx` subject to `Ax = b`, `x ≥ 0`.
pub fn minimize<S: Scalar>(a: &DMatrix<S>, b: &[S], c: &[S], max_iter: usize) -> Result<LpOutcome<S>> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(Error::DimensionMismatch(format!("LP shapes A {m}×{n}, b {}, c {}", b.len(), c.len())));
    }
    // columns 0..n are structural, n..n+m artificial
    let ncols = n + m;
    let mut rows = Vec::with_capacity(m);
    let mut rhs = Vec::with_capacity(m);
    for i in 0..m {
        let flip = b[i] < S::zero();
        let mut row: Vec<S> = (0..n).map(|j| if flip { -a[(i, j)].clone() } else { a[(i, j)].clone() }).collect();
        row.extend((0..m).map(|l| if l == i { S::one() } else { S::zero() }));
        rows.push(row);
        rhs.push(if flip { -b[i].clone() } else { b[i].clone() });
    }
    let mut t = Tableau { rows, rhs, basis: (n..n + m).collect(), ncols };
    let mut iters = 0;

    let phase1: Vec<S> = (0..ncols).map(|j| if j >= n { S::one() } else { S::zero() }).collect();
    let all = vec![true; ncols];
    if t.optimize(&phase1, &all, max_iter, &mut iters)?.is_some() {
        return Err(Error::Lp("phase one unbounded".into()));
    }
    let infeasibility: S = t.basis.iter().enumerate().filter(|(_, &bj)| bj >= n).fold(S::zero(), |acc, (r, _)| {
        acc + t.rhs[r].clone()
    });
    let feas_tol = if S::EXACT { S::zero() } else { S::from_f64(1e-9) };
    if infeasibility > feas_tol {
        return Err(Error::Lp(format!("infeasible (phase-one residual {infeasibility})")));
    }

    // drive remaining artificials out of the basis, dropping redundant rows
    let mut r = 0;
    while r < t.rows.len() {
        if t.basis[r] < n {
            r += 1;
            continue;
        }
        let col = (0..n).find(|&j| !t.rows[r][j].is_negligible() && !t.basis.contains(&j));
        match col {
            Some(j) => {
                t.pivot(r, j);
                r += 1;
            }
            None => {
                t.rows.remove(r);
                t.rhs.remove(r);
                t.basis.remove(r);
            }
        }
    }

    let mut cost: Vec<S> = c.to_vec();
    cost.extend((0..m).map(|_| S::zero()));
    let structural: Vec<bool> = (0..ncols).map(|j| j < n).collect();
    let unbounded = t.optimize(&cost, &structural, max_iter, &mut iters)?;
    let full = t.solution();
    let x: Vec<S> = full[..n].to_vec();
    if let Some(j) = unbounded {
        let mut ray = vec![S::zero(); n];
        ray[j] = S::one();
        for (row, &bj) in t.basis.iter().enumerate() {
            if bj < n {
                ray[bj] = -t.rows[row][j].clone();
            }
        }
        return Ok(LpOutcome::Unbounded { x, ray });
    }
    let mut objective = S::zero();
    for (cj, xj) in c.iter().zip(&x) {
        objective += &(cj.clone() * xj.clone());
    }
    let basis = t.basis.iter().copied().filter(|&j| j < n).collect();
    Ok(LpOutcome::Optimal { x, objective, basis })
}
