//! Exact fold-in: constrained least squares of a pair difference onto the
//! cone basis.
//!
//! Two constraint sets are supported:
//! - the unit simplex `w >= 0, sum(w) = 1` used in training and in the loss;
//! - the non-negative orthant `w >= 0` (plain conic projection), used to test
//!   cone membership.
//!
//! Both are solved by a primal active-set method on the Gram system
//! `min 1/2 w'Hw - b'w` with `H = U'U`, `b = U'z`. Each equality-constrained
//! subproblem is solved through an SVD, so rank-deficient bases get the
//! minimum-norm step. If the active-set loop fails to certify optimality the
//! result is polished by projected gradient.

use nalgebra::{DMatrix, DVector};

use crate::cone::{ConeBasis, ConicCoefficients};
use crate::error::{Error, Result};

/// First-order optimality target for the simplex problem, measured as the
/// Frank-Wolfe gap in units of the squared residual.
pub const OPTIMALITY_TOL: f64 = 1e-8;

/// Smallest Cholesky pivot, relative to the largest diagonal entry, for
/// which the fast subproblem solve is trusted.
const CHOLESKY_MIN_PIVOT: f64 = 1e-8;
const FALLBACK_MAX_ITERS: usize = 10_000;
const FALLBACK_MIN_IMPROVEMENT: f64 = 1e-10;

/// Projects `z` onto `{Uw : w >= 0, ||w||_1 = 1}`.
///
/// Returns the coefficients and the residual `||z - Uw||_2`.
pub fn fold_in_exact(basis: &ConeBasis, z: &DVector<f64>) -> Result<(ConicCoefficients, f64)> {
    let w = solve(basis, z, Constraint::Simplex)?;
    let residual = (z - basis.matrix() * &w).norm();
    Ok((ConicCoefficients(w), residual))
}

/// Projects `z` onto the cone `{Uw : w >= 0}`.
///
/// Returns the coefficients and the residual `||z - Uw||_2`.
pub fn fold_in_cone(basis: &ConeBasis, z: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let w = solve(basis, z, Constraint::Orthant)?;
    let residual = (z - basis.matrix() * &w).norm();
    Ok((w, residual))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Constraint {
    Simplex,
    Orthant,
}

fn solve(basis: &ConeBasis, z: &DVector<f64>, constraint: Constraint) -> Result<DVector<f64>> {
    let u = basis.matrix();
    if u.ncols() == 0 {
        return Err(Error::InvalidModel("basis has no columns".into()));
    }
    if z.len() != u.nrows() {
        return Err(Error::input(format!(
            "difference has length {}, basis dimension is {}",
            z.len(),
            u.nrows()
        )));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::input("difference has non-finite entries"));
    }
    let qp = Qp { h: u.tr_mul(u), b: u.tr_mul(z), constraint };
    let w = qp.active_set();
    if qp.stationarity(&w) <= OPTIMALITY_TOL {
        return Ok(w);
    }
    Ok(qp.projected_gradient(w))
}

struct Qp {
    h: DMatrix<f64>,
    b: DVector<f64>,
    constraint: Constraint,
}

impl Qp {
    fn objective(&self, w: &DVector<f64>) -> f64 {
        0.5 * w.dot(&(&self.h * w)) - self.b.dot(w)
    }

    fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        &self.h * w - &self.b
    }

    fn scale(&self) -> f64 {
        1.0 + self.h.amax().max(self.b.amax())
    }

    /// Frank-Wolfe gap on the simplex (an upper bound on suboptimality);
    /// complementarity violation on the orthant. Both are in the units of
    /// `||z - Uw||^2`.
    fn stationarity(&self, w: &DVector<f64>) -> f64 {
        let g = self.gradient(w);
        match self.constraint {
            Constraint::Simplex => {
                let min_g = g.iter().copied().fold(f64::INFINITY, f64::min);
                2.0 * (w.dot(&g) - min_g).max(0.0)
            }
            Constraint::Orthant => {
                2.0 * w.iter().zip(g.iter()).map(|(&wi, &gi)| wi.min(gi).abs()).fold(0.0, f64::max)
            }
        }
    }

    fn start(&self) -> (DVector<f64>, Vec<bool>) {
        let k = self.b.len();
        let mut w = DVector::zeros(k);
        let mut free = vec![false; k];
        if self.constraint == Constraint::Simplex {
            // best vertex
            let j = (0..k)
                .min_by(|&i, &j| {
                    let fi = 0.5 * self.h[(i, i)] - self.b[i];
                    let fj = 0.5 * self.h[(j, j)] - self.b[j];
                    fi.total_cmp(&fj)
                })
                .unwrap_or(0);
            w[j] = 1.0;
            free[j] = true;
        }
        (w, free)
    }

    /// Minimizer of the objective with coordinates outside `free` pinned to 0
    /// (and the simplex equality, if any). Minimum-norm on degeneracy.
    fn subproblem(&self, free: &[bool]) -> DVector<f64> {
        let k = self.b.len();
        let idx: Vec<usize> = (0..k).filter(|&i| free[i]).collect();
        let m = idx.len();
        let mut out = DVector::zeros(k);
        if m == 0 {
            return out;
        }
        if let Some(sol) = self.subproblem_cholesky(&idx) {
            for (a, &i) in idx.iter().enumerate() {
                out[i] = sol[a];
            }
            return out;
        }
        let extra = usize::from(self.constraint == Constraint::Simplex);
        let size = m + extra;
        let mut kkt = DMatrix::zeros(size, size);
        let mut rhs = DVector::zeros(size);
        for (a, &i) in idx.iter().enumerate() {
            for (c, &j) in idx.iter().enumerate() {
                kkt[(a, c)] = self.h[(i, j)];
            }
            rhs[a] = self.b[i];
        }
        if extra == 1 {
            for a in 0..m {
                kkt[(a, m)] = 1.0;
                kkt[(m, a)] = 1.0;
            }
            rhs[m] = 1.0;
        }
        let svd = kkt.svd(true, true);
        let smax = svd.singular_values.amax();
        let eps = 1e-13 * smax.max(f64::MIN_POSITIVE);
        let sol = match svd.solve(&rhs, eps) {
            Ok(s) => s,
            Err(_) => return out,
        };
        for (a, &i) in idx.iter().enumerate() {
            out[i] = sol[a];
        }
        out
    }

    /// Fast path for a well-conditioned free block: `H_F x = b_F`, plus
    /// `H_F y = 1` to restore the simplex equality. `None` hands over to the
    /// SVD solve.
    fn subproblem_cholesky(&self, idx: &[usize]) -> Option<DVector<f64>> {
        let m = idx.len();
        let hf = DMatrix::from_fn(m, m, |a, c| self.h[(idx[a], idx[c])]);
        let bf = DVector::from_fn(m, |a, _| self.b[idx[a]]);
        let top = hf.diagonal().amax();
        let ch = hf.cholesky()?;
        let l = ch.l_dirty();
        let pivot = (0..m).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(pivot > CHOLESKY_MIN_PIVOT * top) {
            return None;
        }
        let x = ch.solve(&bf);
        match self.constraint {
            Constraint::Orthant => Some(x),
            Constraint::Simplex => {
                let y = ch.solve(&DVector::from_element(m, 1.0));
                let s = y.sum();
                if !(s > 0.0) {
                    return None;
                }
                Some(&x + y * ((1.0 - x.sum()) / s))
            }
        }
    }

    fn active_set(&self) -> DVector<f64> {
        let k = self.b.len();
        let (mut w, mut free) = self.start();
        let scale = self.scale();
        let step_tol = 1e-14;
        let mult_tol = 1e-12 * scale;
        for _ in 0..(50 + 20 * k) {
            let cand = self.subproblem(&free);
            let p = &cand - &w;
            let moves = p.amax() > step_tol
                && self.objective(&cand) < self.objective(&w) - 1e-15 * scale;
            if moves {
                let mut alpha = 1.0;
                let mut blocking = None;
                for i in (0..k).filter(|&i| free[i]) {
                    if p[i] < 0.0 {
                        let ratio = w[i] / -p[i];
                        if ratio < alpha {
                            alpha = ratio;
                            blocking = Some(i);
                        }
                    }
                }
                w += alpha * &p;
                for v in w.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                if let Some(i) = blocking {
                    w[i] = 0.0;
                    free[i] = false;
                    if self.constraint == Constraint::Simplex {
                        renormalize(&mut w);
                    }
                }
                continue;
            }

            let g = self.gradient(&w);
            let lambda = match self.constraint {
                Constraint::Simplex => {
                    let (sum, count) = (0..k)
                        .filter(|&i| free[i])
                        .fold((0.0, 0usize), |(s, c), i| (s + g[i], c + 1));
                    sum / count.max(1) as f64
                }
                Constraint::Orthant => 0.0,
            };
            let entering = (0..k)
                .filter(|&i| !free[i])
                .map(|i| (i, g[i] - lambda))
                .filter(|&(_, r)| r < -mult_tol)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((i, _)) => free[i] = true,
                None => break,
            }
        }
        w
    }

    fn project(&self, w: &mut DVector<f64>) {
        match self.constraint {
            Constraint::Simplex => project_simplex(w),
            Constraint::Orthant => w.iter_mut().for_each(|v| *v = v.max(0.0)),
        }
    }

    fn projected_gradient(&self, start: DVector<f64>) -> DVector<f64> {
        let lipschitz = gram_bound(&self.h).max(f64::MIN_POSITIVE);
        let step = 1.0 / lipschitz;
        let mut w = start;
        self.project(&mut w);
        let mut f = self.objective(&w);
        for _ in 0..FALLBACK_MAX_ITERS {
            let mut next = &w - step * self.gradient(&w);
            self.project(&mut next);
            let f_next = self.objective(&next);
            if f_next > f {
                break;
            }
            let improvement = f - f_next;
            w = next;
            f = f_next;
            if improvement < FALLBACK_MIN_IMPROVEMENT {
                break;
            }
        }
        w
    }
}

/// Upper bound on the largest eigenvalue of a symmetric PSD matrix
/// (the smaller of its trace and its maximum absolute row sum).
pub(crate) fn gram_bound(h: &DMatrix<f64>) -> f64 {
    let trace = h.trace();
    let row_sum = h.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    trace.min(row_sum)
}

fn renormalize(w: &mut DVector<f64>) {
    let s: f64 = w.iter().sum();
    if s > 0.0 {
        *w /= s;
    }
}

/// Euclidean projection onto the unit simplex `{w >= 0, sum(w) = 1}`.
pub fn project_simplex(v: &mut DVector<f64>) {
    let mut sorted: Vec<f64> = v.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        cumsum += x;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if x - t > 0.0 {
            theta = t;
        }
    }
    v.iter_mut().for_each(|x| *x = (*x - theta).max(0.0));
    renormalize(v);
}
