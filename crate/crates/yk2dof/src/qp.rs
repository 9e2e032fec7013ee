//! Dense convex QP solver.
//!
//! Minimizes `0.5 v' H v + g' v` subject to `l <= A v <= u` with strictly
//! convex `H`. The algorithm is an operator-splitting iteration (alternating
//! projection with scaled dual update and a fixed step derived from the
//! problem norms) followed by a polish step that solves the KKT system on the
//! identified active set. The iteration schedule is fixed, so identical
//! inputs produce identical outputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Problem data for `min 0.5 v'Hv + g'v  s.t.  l <= Av <= u`.
#[derive(Debug, Clone)]
pub struct QpProblem {
    pub h: Mat,
    pub g: Vector,
    pub a: Mat,
    pub lower: Vector,
    pub upper: Vector,
}

/// Termination status of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QpStatus {
    /// Converged and polished to an exact active-set KKT solution.
    Solved,
    /// Converged within tolerance; polish was skipped or rejected.
    SolvedRaw,
}

/// Solution with duals for the two-sided rows (negative at lower, positive at upper).
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub v: Vector,
    pub duals: Vector,
    pub status: QpStatus,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(h: Mat, g: Vector, a: Mat, lower: Vector, upper: Vector) -> Self {
        let n = h.nrows();
        assert_eq!(h.ncols(), n);
        assert_eq!(g.len(), n);
        assert_eq!(a.ncols(), n);
        assert_eq!(a.nrows(), lower.len());
        assert_eq!(a.nrows(), upper.len());
        assert!(
            lower.iter().zip(upper.iter()).all(|(l, u)| l <= u),
            "bounds must be ordered"
        );
        Self {
            h,
            g,
            a,
            lower,
            upper,
        }
    }

    pub fn objective(&self, v: &Vector) -> f64 {
        0.5 * (v.transpose() * &self.h * v)[(0, 0)] + self.g.dot(v)
    }
}

/// Factorization-reusing solver; the MPC loop re-solves with fresh `g`, `l`,
/// `u` every sample while `H` and `A` stay fixed.
#[derive(Debug)]
pub struct QpSolver {
    h: Mat,
    a: Mat,
    sigma: f64,
    rho: f64,
    kkt: Mat,
}

const SIGMA: f64 = 1e-6;

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 40_000;

impl QpSolver {
    pub fn new(h: Mat, a: Mat) -> Result<Self> {
        let n = h.nrows();
        assert_eq!(h.ncols(), n);
        assert_eq!(a.ncols(), n);
        let min_eig = h
            .symmetric_eigenvalues()
            .iter()
            .fold(f64::INFINITY, |m, &e| m.min(e));
        if !(min_eig > 1e-12) {
            return Err(Error::IndefiniteH(min_eig));
        }
        // fixed step from the problem scaling
        let rho = if a.nrows() == 0 {
            1.0
        } else {
            (h.norm() / a.norm_squared().max(1e-12)).clamp(1e-4, 1e6)
        };
        let kkt = &h + Mat::identity(n, n) * SIGMA + a.transpose() * &a * rho;
        Ok(Self {
            h,
            a,
            sigma: SIGMA,
            rho,
            kkt,
        })
    }

    /// Cold-started solve.
    pub fn solve(
        &self,
        g: &Vector,
        lower: &Vector,
        upper: &Vector,
        tol: f64,
        max_iter: usize,
    ) -> Result<QpSolution> {
        let n = self.h.nrows();
        let m = self.a.nrows();
        self.solve_warm(
            g,
            lower,
            upper,
            &Vector::zeros(n),
            &Vector::zeros(m),
            tol,
            max_iter,
        )
    }

    /// Warm-started solve from a previous primal/dual pair.
    #[allow(clippy::too_many_arguments)]
    pub fn solve_warm(
        &self,
        g: &Vector,
        lower: &Vector,
        upper: &Vector,
        v0: &Vector,
        y0: &Vector,
        tol: f64,
        max_iter: usize,
    ) -> Result<QpSolution> {
        let n = self.h.nrows();
        let m = self.a.nrows();
        assert_eq!(g.len(), n);
        assert_eq!(lower.len(), m);
        assert_eq!(upper.len(), m);
        assert!(
            lower.iter().zip(upper.iter()).all(|(l, u)| l <= u),
            "bounds must be ordered"
        );

        if m == 0 {
            let v = -lu_solve_vec(&self.h, g)?;
            return Ok(QpSolution {
                v,
                duals: Vector::zeros(0),
                status: QpStatus::Solved,
                iterations: 0,
            });
        }

        let clip = |z: &mut Vector| {
            for i in 0..m {
                z[i] = z[i].clamp(lower[i], upper[i]);
            }
        };

        let mut v = v0.clone();
        let mut y = y0.clone();
        let mut z = &self.a * &v;
        clip(&mut z);

        let mut iterations = 0;
        let mut converged = false;
        let mut infeas_count = 0usize;
        let mut y_prev_norm = y.norm();
        let mut av = &self.a * &v;
        while iterations < max_iter {
            iterations += 1;
            // rhs = sigma v - g + A'(rho z - y)
            let rhs = &v * self.sigma - g + self.a.transpose() * (&z * self.rho - &y);
            let vt = lu_solve_vec(&self.kkt, &rhs)?;
            av = &self.a * &vt;
            let mut z_next = &av + &y / self.rho;
            clip(&mut z_next);
            y += (&av - &z_next) * self.rho;
            v = vt;
            z = z_next;

            if iterations % 25 == 0 || iterations == max_iter {
                let r_prim = (&av - &z).amax();
                let r_dual = (&self.h * &v + g + self.a.transpose() * &y).amax();
                if r_prim <= tol && r_dual <= tol {
                    converged = true;
                    break;
                }
                // divergence certificate: the dual iterate keeps growing while
                // the primal residual stays far from feasibility
                let yn = y.norm();
                if yn > y_prev_norm * (1.0 + 1e-9) && r_prim > 1e3 * tol {
                    infeas_count += 1;
                    if infeas_count >= 100 && yn > 1e9 {
                        return Err(Error::Infeasible);
                    }
                } else {
                    infeas_count = 0;
                }
                y_prev_norm = yn;
            }
        }

        // Active-set polish: exact KKT solve on the rows pinned at a bound.
        if let Some((pv, py)) = self.polish(g, lower, upper, &av, &y, tol) {
            return Ok(QpSolution {
                v: pv,
                duals: py,
                status: QpStatus::Solved,
                iterations,
            });
        }
        if converged {
            return Ok(QpSolution {
                v,
                duals: y,
                status: QpStatus::SolvedRaw,
                iterations,
            });
        }
        Err(Error::MaxIterations)
    }

    /// Solve the equality-constrained KKT system on the active set guessed
    /// from the splitting iterate; `None` when the guess does not verify.
    fn polish(
        &self,
        g: &Vector,
        lower: &Vector,
        upper: &Vector,
        av: &Vector,
        y: &Vector,
        tol: f64,
    ) -> Option<(Vector, Vector)> {
        let n = self.h.nrows();
        let m = self.a.nrows();
        let act_tol = (tol * 1e3).max(1e-6);
        // (row, bound value, is_lower)
        let mut active: Vec<(usize, f64, bool)> = Vec::new();
        for i in 0..m {
            let span = upper[i] - lower[i];
            let near_lower = lower[i].is_finite()
                && (av[i] - lower[i]).abs() <= act_tol * (1.0 + lower[i].abs());
            let near_upper = upper[i].is_finite()
                && (upper[i] - av[i]).abs() <= act_tol * (1.0 + upper[i].abs());
            let pinned_span = span <= act_tol && (near_lower || near_upper);
            if pinned_span || (near_lower && y[i] < act_tol) {
                active.push((i, lower[i], true));
            } else if near_upper && y[i] > -act_tol {
                active.push((i, upper[i], false));
            }
        }
        let k = active.len();
        let mut kkt = Mat::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&self.h);
        for (row, (i, _, _)) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + row, j)] = self.a[(*i, j)];
                kkt[(j, n + row)] = self.a[(*i, j)];
            }
        }
        let mut rhs = Vector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -g[j];
        }
        for (row, (_, b, _)) in active.iter().enumerate() {
            rhs[n + row] = *b;
        }
        let sol = lu_solve_vec(&kkt, &rhs).ok()?;
        let pv = sol.rows(0, n).into_owned();
        let mut py = Vector::zeros(m);
        for (row, (i, _, _)) in active.iter().enumerate() {
            py[*i] = sol[n + row];
        }
        // verify feasibility, dual signs and KKT residuals
        let pav = &self.a * &pv;
        for i in 0..m {
            if pav[i] < lower[i] - act_tol * (1.0 + lower[i].abs())
                || pav[i] > upper[i] + act_tol * (1.0 + upper[i].abs())
            {
                return None;
            }
        }
        for (i, _, is_lower) in &active {
            let tight = (upper[*i] - lower[*i]).abs() <= act_tol;
            if tight {
                continue; // equality row: any dual sign is fine
            }
            if *is_lower && py[*i] > act_tol {
                return None;
            }
            if !is_lower && py[*i] < -act_tol {
                return None;
            }
        }
        let r_dual = (&self.h * &pv + g + self.a.transpose() * &py).amax();
        let r_prim = (0..m)
            .map(|i| (pav[i] - pav[i].clamp(lower[i], upper[i])).abs())
            .fold(0.0, f64::max);
        if r_dual <= tol && r_prim <= tol {
            Some((pv, py))
        } else {
            None
        }
    }
}

fn lu_solve_vec(a: &Mat, b: &Vector) -> Result<Vector> {
    let x = linalg::solve_linear(a, &Mat::from_column_slice(b.len(), 1, b.as_slice()))?;
    Ok(Vector::from_column_slice(x.as_slice()))
}

/// One-shot interface over [`QpSolver`].
pub fn solve(qp: &QpProblem, tol: f64, max_iter: usize) -> Result<QpSolution> {
    let solver = QpSolver::new(qp.h.clone(), qp.a.clone())?;
    solver.solve(&qp.g, &qp.lower, &qp.upper, tol, max_iter)
}
