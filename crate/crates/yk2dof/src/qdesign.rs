//! H2 design of the YK parameter Q.
//!
//! With the dual parameter at zero the disturbance-to-error map of the
//! parameterized loop is affine in Q: `T11 + T12 Q T21` with `T22 = 0`, so a
//! weighted H2 model-matching problem over a finite-impulse-response Q is a
//! plain linear least squares. Stability of Q holds by construction and the
//! truncation length `l_ir` controls the surrogate error.
//!
//! The error stack is `e = [C x; u]`; the printed low-pass weight acts on the
//! output rows while the control rows carry a small flat weight that keeps
//! the fit regular without fighting dc disturbance rejection.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::ss::{self, StateSpace, Tap};

/// Flat weight on the control rows of the error stack, relative to the
/// low-pass output weight. Small enough not to fight dc disturbance
/// rejection, large enough to keep the control rows in the fit.
pub const CONTROL_ERROR_WEIGHT: f64 = 1e-3;

/// Weighted model-matching problem data.
#[derive(Debug, Clone)]
pub struct QDesignProblem {
    /// Generalized plant, inputs `[d; u]`, outputs `[y; e]`.
    pub p: StateSpace,
    /// Weight on the full error stack (block diagonal: low-pass on outputs,
    /// flat on control rows).
    pub w: StateSpace,
    /// Closed map `[d; wq] -> [e; zq]` with the nominal controller inside.
    pub t: StateSpace,
    pub t11: StateSpace,
    pub t12: StateSpace,
    pub t21: StateSpace,
    /// Impulse truncation length of the least-squares surrogate.
    pub l_ir: usize,
    /// FIR order (number of taps).
    pub nq: usize,
    pub ny: usize,
    pub nu: usize,
    pub nd: usize,
}

/// FIR parameter: taps and the realized shift-register system.
#[derive(Debug, Clone)]
pub struct FirQ {
    pub taps: Vec<Mat>,
    pub realized: StateSpace,
}

/// Generalized plant `[A | E B; C 0 0; C 0 0; 0 0 I]` with output groups
/// `(y)` and `(e = [C x; u])`.
pub fn build_generalized_plant(a: &Mat, b: &Mat, c: &Mat, e: &Mat) -> StateSpace {
    let nx = a.nrows();
    let ny = c.nrows();
    let nu = b.ncols();
    let nd = e.ncols();
    let mut bp = Mat::zeros(nx, nd + nu);
    bp.view_mut((0, 0), (nx, nd)).copy_from(e);
    bp.view_mut((0, nd), (nx, nu)).copy_from(b);
    let mut cp = Mat::zeros(ny + ny + nu, nx);
    cp.view_mut((0, 0), (ny, nx)).copy_from(c);
    cp.view_mut((ny, 0), (ny, nx)).copy_from(c);
    let mut dp = Mat::zeros(ny + ny + nu, nd + nu);
    dp.view_mut((2 * ny, nd), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    StateSpace::new(a.clone(), bp, cp, dp, 1.0)
}

/// Close the measurement/control loop of `p` through the `J` block, keeping
/// the disturbance input, the error stack and the open Q channels:
/// `T: [d; wq] -> [e; zq]`.
///
/// The controller block receives `[y; u]` with `u` its own first output, so
/// the wiring resolves that algebraic loop. `T22 = 0` and stability of `T`
/// are asserted.
pub fn build_t(p: &StateSpace, j: &StateSpace) -> Result<StateSpace> {
    // j: inputs [yu (ny+nu); wq (nu)], outputs [u (nu); zq (ny+nu)];
    // p: inputs [d; u], outputs [y (ny); e (ny+nu)]. Solving the two width
    // equations pins ny and nu.
    let ji = j.n_inputs();
    let po = p.n_outputs();
    assert_eq!(j.n_outputs(), ji, "J block must be square");
    assert_eq!(
        (2 * ji).checked_sub(po).map(|v| v % 3),
        Some(0),
        "channel widths inconsistent"
    );
    let nu = (2 * ji - po) / 3;
    let ny = (2 * po - ji) / 3;
    let nyk = ny + nu;
    let ne = ny + nu;
    let nd = p.n_inputs() - nu;
    assert_eq!(p.n_outputs(), ny + ne, "plant outputs must be [y; e]");

    let in_off_p = 0;
    let in_off_j = p.n_inputs();
    let n_u_tot = in_off_j + j.n_inputs();
    let out_off_p = 0;
    let out_off_j = p.n_outputs();
    let n_y_tot = out_off_j + j.n_outputs();

    let eye = |k: usize| Mat::identity(k, k);
    let mut l = Mat::zeros(n_u_tot, n_y_tot);
    // plant control input <- j's u output
    l.view_mut((in_off_p + nd, out_off_j), (nu, nu))
        .copy_from(&eye(nu));
    // j's y channel <- plant y output
    l.view_mut((in_off_j, out_off_p), (ny, ny))
        .copy_from(&eye(ny));
    // j's u channel <- j's own u output (total applied control)
    l.view_mut((in_off_j + ny, out_off_j), (nu, nu))
        .copy_from(&eye(nu));

    let mut r = Mat::zeros(n_u_tot, nd + nu);
    // external d -> plant disturbance input
    r.view_mut((in_off_p, 0), (nd, nd)).copy_from(&eye(nd));
    // external wq -> j's q input
    r.view_mut((in_off_j + nyk, nd), (nu, nu))
        .copy_from(&eye(nu));

    let mut taps: Vec<Tap> = (0..ne).map(|i| Tap::Y(out_off_p + ny + i)).collect();
    taps.extend((0..nyk).map(|i| Tap::Y(out_off_j + nu + i)));

    let t = ss::interconnect(&[p, j], &l, &r, &taps)?;
    if !ss::is_stable(&t, 0.0) {
        return Err(Error::UnstableSystem);
    }
    let t22 = t.subsystem(
        &(ne..ne + nyk).collect::<Vec<_>>(),
        &(nd..nd + nu).collect::<Vec<_>>(),
    );
    let t22_norm = ss::impulse_response(&t22, 64)
        .iter()
        .map(|m| m.norm())
        .fold(0.0, f64::max);
    if t22_norm > 1e-9 {
        return Err(Error::NonzeroT22(t22_norm));
    }
    Ok(t)
}

/// Diagonal first-order low-pass `b / (z - a)` on `ny` channels.
pub fn make_lowpass_weight(pole: f64, gain: f64, ny: usize) -> Result<StateSpace> {
    if pole.abs() >= 1.0 {
        return Err(Error::UnstablePole);
    }
    Ok(StateSpace::new(
        Mat::identity(ny, ny) * pole,
        Mat::identity(ny, ny) * gain,
        Mat::identity(ny, ny),
        Mat::zeros(ny, ny),
        1.0,
    ))
}

/// Weight on the full error stack: the low-pass on the `ny` output rows and
/// a flat `CONTROL_ERROR_WEIGHT * I` on the `nu` control rows.
pub fn error_weight(pole: f64, gain: f64, ny: usize, nu: usize) -> Result<StateSpace> {
    let wy = make_lowpass_weight(pole, gain, ny)?;
    let mut a = Mat::zeros(ny, ny);
    a.copy_from(&wy.a);
    let mut b = Mat::zeros(ny, ny + nu);
    b.view_mut((0, 0), (ny, ny)).copy_from(&wy.b);
    let mut c = Mat::zeros(ny + nu, ny);
    c.view_mut((0, 0), (ny, ny)).copy_from(&wy.c);
    let mut d = Mat::zeros(ny + nu, ny + nu);
    d.view_mut((ny, ny), (nu, nu))
        .copy_from(&(Mat::identity(nu, nu) * CONTROL_ERROR_WEIGHT));
    Ok(StateSpace::new(a, b, c, d, 1.0))
}

impl QDesignProblem {
    /// Assemble the problem from the generalized plant, the `J` block, the
    /// error weight and the FIR configuration.
    pub fn new(
        p: StateSpace,
        j: &StateSpace,
        w: StateSpace,
        nq: usize,
        l_ir: usize,
    ) -> Result<Self> {
        assert!(nq >= 1);
        assert!(l_ir > nq, "truncation must cover the FIR span");
        let t = build_t(&p, j)?;
        let ji = j.n_inputs();
        let po = p.n_outputs();
        let nu = (2 * ji - po) / 3;
        let ny = (2 * po - ji) / 3;
        let nyk = ny + nu;
        let ne = ny + nu;
        let nd = p.n_inputs() - nu;
        assert_eq!(w.n_inputs(), ne, "weight must act on the error stack");
        if !ss::is_stable(&w, 0.0) {
            return Err(Error::UnstablePole);
        }
        let rows: Vec<usize> = (0..ne).collect();
        let cols_d: Vec<usize> = (0..nd).collect();
        let cols_q: Vec<usize> = (nd..nd + nu).collect();
        let rows_z: Vec<usize> = (ne..ne + nyk).collect();
        let t11 = t.subsystem(&rows, &cols_d);
        let t12 = t.subsystem(&rows, &cols_q);
        let t21 = t.subsystem(&rows_z, &cols_d);
        Ok(Self {
            p,
            w,
            t,
            t11,
            t12,
            t21,
            l_ir,
            nq,
            ny,
            nu,
            nd,
        })
    }

    /// Exact weighted H2 cost `||W (T11 + T12 Q T21)||_2^2` by Lyapunov
    /// computation; the oracle for the truncated surrogate.
    pub fn weighted_h2_cost(&self, q: &StateSpace) -> Result<f64> {
        let sys = self.weighted_error_system(q)?;
        Ok(ss::h2_norm(&sys)?.powi(2))
    }

    /// `W (T11 + T12 Q T21)` as one realization.
    pub fn weighted_error_system(&self, q: &StateSpace) -> Result<StateSpace> {
        if !ss::is_stable(q, 0.0) {
            return Err(Error::UnstableSystem);
        }
        let qt21 = ss::series(&self.t21, q)?;
        let t12q = ss::series(&qt21, &self.t12)?;
        let inner = ss::parallel(&self.t11, &t12q)?;
        ss::series(&inner, &self.w)
    }

    /// Truncated-impulse least-squares cost of a tap set (test oracle).
    pub fn surrogate_cost(&self, taps: &[Mat]) -> f64 {
        let (big_a, big_b) = self.assemble_ls();
        let theta = stack_taps(taps);
        (big_a * theta - big_b).norm_squared()
    }

    /// Stack the truncated-impulse least-squares system over the taps.
    fn assemble_ls(&self) -> (Mat, Vector) {
        let ne = self.ny + self.nu;
        let nzq = self.ny + self.nu;
        let nd = self.nd;
        let l = self.l_ir;
        let wt11 = ss::series(&self.t11, &self.w).expect("weight chain");
        let wt12 = ss::series(&self.t12, &self.w).expect("weight chain");
        let h0 = ss::impulse_response(&wt11, l);
        let f = ss::impulse_response(&wt12, l); // ne x nu per sample
        let g = ss::impulse_response(&self.t21, l); // nzq x nd per sample
                                                    // per-sample operator O(m) = sum_{a+b=m} G(b)' (x) F(a)
        let blk_rows = ne * nd;
        let blk_cols = self.nu * nzq;
        let mut ops: Vec<Mat> = Vec::with_capacity(l);
        for m in 0..l {
            let mut op = Mat::zeros(blk_rows, blk_cols);
            for a in 0..=m {
                let b = m - a;
                // vec(F theta G) = (G' (x) F) vec(theta), column-major vec
                let fa = &f[a];
                let gb = &g[b];
                for dcol in 0..nd {
                    for erow in 0..ne {
                        let row = dcol * ne + erow;
                        for tc in 0..nzq {
                            for tr in 0..self.nu {
                                let col = tc * self.nu + tr;
                                op[(row, col)] += fa[(erow, tr)] * gb[(tc, dcol)];
                            }
                        }
                    }
                }
            }
            ops.push(op);
        }
        let mut big_a = Mat::zeros(l * blk_rows, self.nq * blk_cols);
        for k in 0..l {
            for j in 0..self.nq {
                if k >= j {
                    big_a
                        .view_mut((k * blk_rows, j * blk_cols), (blk_rows, blk_cols))
                        .copy_from(&ops[k - j]);
                }
            }
        }
        let mut big_b = Vector::zeros(l * blk_rows);
        for k in 0..l {
            for dcol in 0..nd {
                for erow in 0..ne {
                    big_b[k * blk_rows + dcol * ne + erow] = -h0[k][(erow, dcol)];
                }
            }
        }
        (big_a, big_b)
    }
}

fn stack_taps(taps: &[Mat]) -> Vector {
    let (nu, nzq) = (taps[0].nrows(), taps[0].ncols());
    let mut v = Vector::zeros(taps.len() * nu * nzq);
    for (j, t) in taps.iter().enumerate() {
        for tc in 0..nzq {
            for tr in 0..nu {
                v[j * nu * nzq + tc * nu + tr] = t[(tr, tc)];
            }
        }
    }
    v
}

fn unstack_taps(v: &Vector, nq: usize, nu: usize, nzq: usize) -> Vec<Mat> {
    (0..nq)
        .map(|j| Mat::from_fn(nu, nzq, |tr, tc| v[j * nu * nzq + tc * nu + tr]))
        .collect()
}

/// Fit the FIR taps by least squares on the truncated impulse surrogate and
/// realize the result as a shift register (stable by construction).
pub fn synthesize_q_fir(prob: &QDesignProblem) -> Result<FirQ> {
    let nzq = prob.ny + prob.nu;
    let (big_a, big_b) = prob.assemble_ls();
    if big_a.norm() <= 1e-300 {
        // no authority at all: keep Q = 0, the cost cannot change
        let taps = vec![Mat::zeros(prob.nu, nzq); prob.nq];
        let realized = realize_fir(&taps, 1.0);
        return Ok(FirQ { taps, realized });
    }
    let rhs = Mat::from_column_slice(big_b.len(), 1, big_b.as_slice());
    // The tap space carries a structural null space (FIR annihilators of
    // T21), so the QR route can flag rank deficiency; fall back to the
    // minimum-norm solution through the SVD in that case.
    let sol = match linalg::lstsq(&big_a, &rhs) {
        Ok(sol) => sol,
        Err(Error::RankDeficient) => {
            let svd = big_a.clone().svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            svd.solve(&rhs, 1e-10 * smax)
                .map_err(|_| Error::RankDeficient)?
        }
        Err(e) => return Err(e),
    };
    let theta = Vector::from_column_slice(sol.as_slice());
    // guaranteed not to be worse than Q = 0
    let cost = (&big_a * &theta - &big_b).norm_squared();
    let cost_zero = big_b.norm_squared();
    debug_assert!(cost <= cost_zero * (1.0 + 1e-12));
    let _ = (cost, cost_zero);
    let taps = unstack_taps(&theta, prob.nq, prob.nu, nzq);
    let realized = realize_fir(&taps, 1.0);
    Ok(FirQ { taps, realized })
}

/// Shift-register realization of an FIR tap sequence.
pub fn realize_fir(taps: &[Mat], ts: f64) -> StateSpace {
    let nu_out = taps[0].nrows();
    let nin = taps[0].ncols();
    let nq = taps.len();
    let nx = nin * (nq - 1);
    let mut a = Mat::zeros(nx, nx);
    for k in 1..(nq - 1) {
        a.view_mut((k * nin, (k - 1) * nin), (nin, nin))
            .copy_from(&Mat::identity(nin, nin));
    }
    let mut b = Mat::zeros(nx, nin);
    if nq > 1 {
        b.view_mut((0, 0), (nin, nin))
            .copy_from(&Mat::identity(nin, nin));
    }
    let mut c = Mat::zeros(nu_out, nx);
    for j in 1..nq {
        c.view_mut((0, (j - 1) * nin), (nu_out, nin))
            .copy_from(&taps[j]);
    }
    StateSpace::new(a, b, c, taps[0].clone(), ts)
}
