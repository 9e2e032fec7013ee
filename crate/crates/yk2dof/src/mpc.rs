//! Condensed MPC construction and decomposition.
//!
//! The unconstrained finite-horizon problem over the stacked control sequence
//! `U` is
//!
//! ```text
//!   phi = 0.5 ||Wz_bar (Gamma U + Phi_x x - Zbar)||^2
//!       + 0.5 ||Wu_bar (U - Ubar)||^2
//!       + 0.5 ||Wdu_bar (Lambda U - I0 u_prev)||^2
//! ```
//!
//! whose gradient `H U + g` yields the analytic control law
//! `u = Lx x + LZ Zbar + LU Ubar + LDu u_prev` after extracting the first
//! block row. The same three-term objective, rewritten through the
//! closed-loop maps `A_cl = A + B Lx`, `B_cl = B Kff`, gives the constrained
//! feedforward MPC over the reference sequence `Rbar`.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::qp::{QpSolver, QpStatus, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::ss::StateSpace;

/// Horizon and stage weights.
#[derive(Debug, Clone)]
pub struct MpcConfig {
    pub n: usize,
    /// Output-tracking weight (applied inside the norm, i.e. the square root
    /// of the quadratic penalty).
    pub wz: Mat,
    /// Control-deviation weight.
    pub wu: Mat,
    /// Control-rate weight.
    pub wdu: Mat,
}

impl MpcConfig {
    /// Defaults used throughout the four-tank study: N = 20, Wz = I,
    /// Wu = 1e-4 I, Wdu = 0.01 I.
    pub fn default_for(ny: usize, nu: usize) -> Self {
        Self {
            n: 20,
            wz: Mat::identity(ny, ny),
            wu: Mat::identity(nu, nu) * 1e-4,
            wdu: Mat::identity(nu, nu) * 0.01,
        }
    }
}

/// Stacked matrices of the condensed problem.
#[derive(Debug, Clone)]
pub struct CondensedQp {
    pub h: Mat,
    pub phi_x: Mat,
    pub gamma: Mat,
    pub lambda: Mat,
    pub i0: Mat,
    pub wz_bar: Mat,
    pub wu_bar: Mat,
    pub wdu_bar: Mat,
    pub n: usize,
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
}

/// First-block-row gains of the analytic solution.
#[derive(Debug, Clone)]
pub struct MpcGains {
    pub lx: Mat,
    pub lz: Mat,
    pub lu: Mat,
    pub ldu: Mat,
}

/// `I_N (x) m` block-diagonal stack.
pub fn block_kron(n: usize, m: &Mat) -> Mat {
    let (r, c) = (m.nrows(), m.ncols());
    let mut out = Mat::zeros(n * r, n * c);
    for k in 0..n {
        out.view_mut((k * r, k * c), (r, c)).copy_from(m);
    }
    out
}

/// Prediction matrices: `Phi_x` stacks `C A^i`, `Gamma` is the lower
/// block-Toeplitz of the Markov parameters `H_i = C A^{i-1} B`.
pub fn build_prediction(sys: &StateSpace, n: usize) -> (Mat, Mat) {
    assert!(n >= 1);
    let (nx, nu, ny) = (sys.nx(), sys.n_inputs(), sys.n_outputs());
    let mut phi_x = Mat::zeros(n * ny, nx);
    let mut markov = Vec::with_capacity(n);
    let mut apow = sys.a.clone(); // A^1
    let mut akb = sys.b.clone(); // A^0 B
    for i in 0..n {
        phi_x
            .view_mut((i * ny, 0), (ny, nx))
            .copy_from(&(&sys.c * &apow));
        markov.push(&sys.c * &akb);
        apow = &sys.a * apow;
        akb = &sys.a * akb;
    }
    let mut gamma = Mat::zeros(n * ny, n * nu);
    for i in 0..n {
        for j in 0..=i {
            gamma
                .view_mut((i * ny, j * nu), (ny, nu))
                .copy_from(&markov[i - j]);
        }
    }
    (phi_x, gamma)
}

/// Banded difference operator: `Lambda U = [u_0, u_1 - u_0, ...]`.
pub fn build_lambda(n: usize, nu: usize) -> Mat {
    let mut l = Mat::zeros(n * nu, n * nu);
    for i in 0..n {
        l.view_mut((i * nu, i * nu), (nu, nu))
            .copy_from(&Mat::identity(nu, nu));
        if i > 0 {
            l.view_mut((i * nu, (i - 1) * nu), (nu, nu))
                .copy_from(&(-Mat::identity(nu, nu)));
        }
    }
    l
}

/// First-block extraction column `I0 = [I 0 ... 0]'`.
pub fn build_i0(n: usize, nu: usize) -> Mat {
    let mut m = Mat::zeros(n * nu, nu);
    m.view_mut((0, 0), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    m
}

/// Assemble the condensed Hessian and stacks; `H` must come out positive
/// definite.
pub fn build_condensed(sys: &StateSpace, cfg: &MpcConfig) -> Result<CondensedQp> {
    let (nx, nu, ny) = (sys.nx(), sys.n_inputs(), sys.n_outputs());
    assert_eq!(cfg.wz.nrows(), ny, "Wz must be ny x ny");
    assert_eq!(cfg.wu.nrows(), nu, "Wu must be nu x nu");
    assert_eq!(cfg.wdu.nrows(), nu, "Wdu must be nu x nu");
    let n = cfg.n;
    let (phi_x, gamma) = build_prediction(sys, n);
    let lambda = build_lambda(n, nu);
    let i0 = build_i0(n, nu);
    let wz_bar = block_kron(n, &cfg.wz);
    let wu_bar = block_kron(n, &cfg.wu);
    let wdu_bar = block_kron(n, &cfg.wdu);

    let wzg = &wz_bar * &gamma;
    let wdl = &wdu_bar * &lambda;
    let h = wzg.transpose() * &wzg + wu_bar.transpose() * &wu_bar + wdl.transpose() * &wdl;
    let h = (&h + h.transpose()) * 0.5;
    let min_eig = h
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, &e| m.min(e));
    if min_eig <= 1e-12 {
        return Err(Error::IndefiniteH(min_eig));
    }
    Ok(CondensedQp {
        h,
        phi_x,
        gamma,
        lambda,
        i0,
        wz_bar,
        wu_bar,
        wdu_bar,
        n,
        nx,
        nu,
        ny,
    })
}

impl CondensedQp {
    /// Gradient `g = g_z + g_u + g_du` of the condensed objective at `U = 0`.
    pub fn gradient(&self, xhat: &Vector, zbar: &Vector, ubar: &Vector, u_prev: &Vector) -> Vector {
        self.gradient_with_gz(&self.gz(xhat, zbar), ubar, u_prev)
    }

    /// `g_z = (Wz Gamma)' Wz (Phi_x x - Zbar)`.
    pub fn gz(&self, xhat: &Vector, zbar: &Vector) -> Vector {
        assert_eq!(zbar.len(), self.n * self.ny);
        let err = &self.wz_bar * (&self.phi_x * xhat - zbar);
        (&self.wz_bar * &self.gamma).transpose() * err
    }

    /// Total gradient from an externally supplied tracking term (the
    /// offset-free variant swaps in a disturbance-aware `g_z`).
    pub fn gradient_with_gz(&self, gz: &Vector, ubar: &Vector, u_prev: &Vector) -> Vector {
        assert_eq!(ubar.len(), self.n * self.nu);
        assert_eq!(u_prev.len(), self.nu);
        let gu = -(self.wu_bar.transpose() * &self.wu_bar * ubar);
        let wdl = &self.wdu_bar * &self.lambda;
        let gdu = -(wdl.transpose() * (&self.wdu_bar * (&self.i0 * u_prev)));
        gz + gu + gdu
    }

    /// Full objective value `phi` including the constant terms `rho_j`;
    /// used by the finite-difference oracle.
    pub fn objective(
        &self,
        useq: &Vector,
        xhat: &Vector,
        zbar: &Vector,
        ubar: &Vector,
        u_prev: &Vector,
    ) -> f64 {
        let ez = &self.wz_bar * (&self.gamma * useq + &self.phi_x * xhat - zbar);
        let eu = &self.wu_bar * (useq - ubar);
        let edu = &self.wdu_bar * (&self.lambda * useq - &self.i0 * u_prev);
        0.5 * (ez.norm_squared() + eu.norm_squared() + edu.norm_squared())
    }

    /// Constant terms of the three penalties at `U = 0` (excluded from
    /// solver inputs; they do not move the argmin).
    pub fn rho(
        &self,
        xhat: &Vector,
        zbar: &Vector,
        ubar: &Vector,
        u_prev: &Vector,
    ) -> (f64, f64, f64) {
        let ez = &self.wz_bar * (&self.phi_x * xhat - zbar);
        let eu = &self.wu_bar * ubar;
        let edu = &self.wdu_bar * (&self.i0 * u_prev);
        (
            0.5 * ez.norm_squared(),
            0.5 * eu.norm_squared(),
            0.5 * edu.norm_squared(),
        )
    }

    /// Minimizer `U = -H^{-1} g` of the unconstrained problem.
    pub fn solve_unconstrained(&self, g: &Vector) -> Result<Vector> {
        let x = linalg::solve_linear(&self.h, &Mat::from_column_slice(g.len(), 1, g.as_slice()))?;
        Ok(-Vector::from_column_slice(x.as_slice()))
    }
}

/// Disturbance prediction stack: rows `C X_i E` with `X_i = sum A^(j-1)`.
pub fn build_phi_d(sys: &StateSpace, e: &Mat, n: usize) -> Mat {
    let (nx, ny) = (sys.nx(), sys.n_outputs());
    let nd = e.ncols();
    let mut phi_d = Mat::zeros(n * ny, nd);
    let mut xn = Mat::zeros(nx, nx); // X_0
    let mut apow = Mat::identity(nx, nx);
    for i in 0..n {
        xn += &apow; // X_{i+1} = X_i + A^i
        apow = &sys.a * &apow;
        phi_d
            .view_mut((i * ny, 0), (ny, nd))
            .copy_from(&(&sys.c * &xn * e));
    }
    phi_d
}

/// Offset-free tracking term `g_z` with the constant-disturbance prediction
/// `Phi_x x + Phi_d d` in place of `Phi_x x`.
pub fn offset_free_gz(
    qp: &CondensedQp,
    phi_d: &Mat,
    xhat: &Vector,
    dhat: &Vector,
    zbar: &Vector,
) -> Vector {
    let err = &qp.wz_bar * (&qp.phi_x * xhat + phi_d * dhat - zbar);
    (&qp.wz_bar * &qp.gamma).transpose() * err
}

/// Extract the receding-horizon gains from the condensed problem and certify
/// that the feedback part stabilizes the plant.
pub fn unconstrained_gains(sys: &StateSpace, qp: &CondensedQp) -> Result<MpcGains> {
    let i0ux = build_i0(qp.n, qp.nu).transpose();
    let hinv = |m: &Mat| linalg::solve_linear(&qp.h, m);

    let wz2 = qp.wz_bar.transpose() * &qp.wz_bar;
    let lx = -(&i0ux * hinv(&(qp.gamma.transpose() * &wz2 * &qp.phi_x))?);
    let lz = &i0ux * hinv(&(qp.gamma.transpose() * &wz2))?;
    let lu = &i0ux * hinv(&(qp.wu_bar.transpose() * &qp.wu_bar))?;
    let ldu =
        &i0ux * hinv(&(qp.lambda.transpose() * qp.wdu_bar.transpose() * &qp.wdu_bar * &qp.i0))?;

    let acl = &sys.a + &sys.b * &lx;
    let rho = linalg::spectral_radius(&acl)?;
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop(rho));
    }
    Ok(MpcGains { lx, lz, lu, ldu })
}

impl MpcGains {
    /// Receding-horizon control law `u = Lx x + LZ Zbar + LU Ubar + LDu u_prev`.
    pub fn control(&self, xhat: &Vector, zbar: &Vector, ubar: &Vector, u_prev: &Vector) -> Vector {
        &self.lx * xhat + &self.lz * zbar + &self.lu * ubar + &self.ldu * u_prev
    }
}

// ---------------------------------------------------------------------------
// Constrained feedforward MPC over the reference sequence
// ---------------------------------------------------------------------------

/// Optional stacked bounds; each vector is either one stage (broadcast) or the
/// full horizon stack.
#[derive(Debug, Clone, Default)]
pub struct FfBounds {
    pub x_min: Option<Vector>,
    pub x_max: Option<Vector>,
    pub y_min: Option<Vector>,
    pub y_max: Option<Vector>,
    pub u_min: Option<Vector>,
    pub u_max: Option<Vector>,
    pub du_min: Option<Vector>,
    pub du_max: Option<Vector>,
}

/// Constrained feedforward MPC over `Rbar`, built around the inner loop
/// `x+ = (A + B Lx) x + B Kff r`, `u = Lx x + Kff r`.
#[derive(Debug, Clone)]
pub struct FfMpcProblem {
    pub a_cl: Mat,
    pub b_cl: Mat,
    pub phi_cl: Mat,
    pub gamma_cl: Mat,
    pub phi_cl0: Mat,
    pub gamma_cl0: Mat,
    pub lbar_x: Mat,
    pub kbar_ff: Mat,
    pub cbar: Mat,
    pub lambda: Mat,
    pub i0: Mat,
    /// Map from `Rbar` to the stacked predicted control sequence.
    pub u_map: Mat,
    /// Constant part multiplier: `Ubar_pred = u_base_map x + u_map Rbar`.
    pub u_base_map: Mat,
    pub h_ff: Mat,
    pub wz_bar: Mat,
    pub wu_bar: Mat,
    pub wdu_bar: Mat,
    pub bounds: FfBounds,
    /// Rows of the stacked inequality system, fixed across solves.
    pub a_ineq: Mat,
    pub n: usize,
    pub nx: usize,
    pub nu: usize,
    pub ny: usize,
    solver: std::sync::Arc<QpSolver>,
}

fn broadcast(v: &Vector, dim: usize, n: usize, what: &str) -> Result<Vector> {
    if v.len() == dim {
        let mut out = Vector::zeros(n * dim);
        for k in 0..n {
            out.rows_mut(k * dim, dim).copy_from(v);
        }
        Ok(out)
    } else if v.len() == n * dim {
        Ok(v.clone())
    } else {
        Err(Error::InfeasibleBoundsShape(format!(
            "{what}: expected length {dim} or {}, got {}",
            n * dim,
            v.len()
        )))
    }
}

/// Build the feedforward MPC problem.
pub fn build_ffmpc(
    sys: &StateSpace,
    lx: &Mat,
    kff: &Mat,
    cfg: &MpcConfig,
    bounds: &FfBounds,
) -> Result<FfMpcProblem> {
    let (nx, nu, ny) = (sys.nx(), sys.n_inputs(), sys.n_outputs());
    assert_eq!(lx.nrows(), nu);
    assert_eq!(lx.ncols(), nx);
    assert_eq!(kff.nrows(), nu);
    assert_eq!(kff.ncols(), ny);
    let n = cfg.n;
    let a_cl = &sys.a + &sys.b * lx;
    let rho = linalg::spectral_radius(&a_cl)?;
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop(rho));
    }
    let b_cl = &sys.b * kff;

    // state prediction stacks (no output map here: Phi_cl stacks A_cl^i)
    let mut phi_cl = Mat::zeros(n * nx, nx);
    let mut markov = Vec::with_capacity(n);
    let mut apow = a_cl.clone();
    let mut akb = b_cl.clone();
    for i in 0..n {
        phi_cl.view_mut((i * nx, 0), (nx, nx)).copy_from(&apow);
        markov.push(akb.clone());
        apow = &a_cl * apow;
        akb = &a_cl * akb;
    }
    let mut gamma_cl = Mat::zeros(n * nx, n * ny);
    for i in 0..n {
        for j in 0..=i {
            gamma_cl
                .view_mut((i * nx, j * ny), (nx, ny))
                .copy_from(&markov[i - j]);
        }
    }
    // shifted stacks for X_{0,k} = [x_k, ..., x_{k+N-1}]
    let mut phi_cl0 = Mat::zeros(n * nx, nx);
    phi_cl0
        .view_mut((0, 0), (nx, nx))
        .copy_from(&Mat::identity(nx, nx));
    if n > 1 {
        let top = phi_cl.view((0, 0), ((n - 1) * nx, nx)).into_owned();
        phi_cl0
            .view_mut((nx, 0), ((n - 1) * nx, nx))
            .copy_from(&top);
    }
    let mut gamma_cl0 = Mat::zeros(n * nx, n * ny);
    if n > 1 {
        let top = gamma_cl.view((0, 0), ((n - 1) * nx, n * ny)).into_owned();
        gamma_cl0
            .view_mut((nx, 0), ((n - 1) * nx, n * ny))
            .copy_from(&top);
    }

    let lbar_x = block_kron(n, lx);
    let kbar_ff = block_kron(n, kff);
    let cbar = block_kron(n, &sys.c);
    let lambda = build_lambda(n, nu);
    let i0 = build_i0(n, nu);
    let wz_bar = block_kron(n, &cfg.wz);
    let wu_bar = block_kron(n, &cfg.wu);
    let wdu_bar = block_kron(n, &cfg.wdu);

    // Ubar_pred = Lbar_x Phi_cl0 x + (Lbar_x Gamma_cl0 + Kbar_ff) Rbar
    let u_map = &lbar_x * &gamma_cl0 + &kbar_ff;
    let u_base_map = &lbar_x * &phi_cl0;

    // objective over Rbar
    let zmap = &cbar * &gamma_cl;
    let wz_zmap = &wz_bar * &zmap;
    let wu_umap = &wu_bar * &u_map;
    let wdu_dumap = &wdu_bar * (&lambda * &u_map);
    let h_ff = wz_zmap.transpose() * &wz_zmap
        + wu_umap.transpose() * &wu_umap
        + wdu_dumap.transpose() * &wdu_dumap;
    let h_ff = (&h_ff + h_ff.transpose()) * 0.5;

    // stacked inequality rows in fixed order: X, Y, U, dU (present kinds only)
    let b = &bounds;
    let mut rows: Vec<Mat> = Vec::new();
    let bx = normalize_bounds(&b.x_min, &b.x_max, nx, n, "Xbar")?;
    if bx.is_some() {
        rows.push(gamma_cl.clone());
    }
    let by = normalize_bounds(&b.y_min, &b.y_max, ny, n, "Ybar")?;
    if by.is_some() {
        rows.push(&cbar * &gamma_cl);
    }
    let bu = normalize_bounds(&b.u_min, &b.u_max, nu, n, "Ubar")?;
    if bu.is_some() {
        rows.push(u_map.clone());
    }
    let bdu = normalize_bounds(&b.du_min, &b.du_max, nu, n, "dUbar")?;
    if bdu.is_some() {
        rows.push(&lambda * &u_map);
    }
    let m: usize = rows.iter().map(|r| r.nrows()).sum();
    let mut a_ineq = Mat::zeros(m, n * ny);
    let mut at = 0;
    for r in &rows {
        a_ineq
            .view_mut((at, 0), (r.nrows(), r.ncols()))
            .copy_from(r);
        at += r.nrows();
    }

    let solver = QpSolver::new(h_ff.clone(), a_ineq.clone())?;

    let mut norm_bounds = FfBounds::default();
    if let Some((lo, hi)) = bx {
        norm_bounds.x_min = Some(lo);
        norm_bounds.x_max = Some(hi);
    }
    if let Some((lo, hi)) = by {
        norm_bounds.y_min = Some(lo);
        norm_bounds.y_max = Some(hi);
    }
    if let Some((lo, hi)) = bu {
        norm_bounds.u_min = Some(lo);
        norm_bounds.u_max = Some(hi);
    }
    if let Some((lo, hi)) = bdu {
        norm_bounds.du_min = Some(lo);
        norm_bounds.du_max = Some(hi);
    }

    Ok(FfMpcProblem {
        a_cl,
        b_cl,
        phi_cl,
        gamma_cl,
        phi_cl0,
        gamma_cl0,
        lbar_x,
        kbar_ff,
        cbar,
        lambda,
        i0,
        u_map,
        u_base_map,
        h_ff,
        wz_bar,
        wu_bar,
        wdu_bar,
        bounds: norm_bounds,
        a_ineq,
        n,
        nx,
        nu,
        ny,
        solver: std::sync::Arc::new(solver),
    })
}

/// Broadcast a min/max pair; both sides must be present together.
fn normalize_bounds(
    min: &Option<Vector>,
    max: &Option<Vector>,
    dim: usize,
    n: usize,
    what: &str,
) -> Result<Option<(Vector, Vector)>> {
    match (min, max) {
        (None, None) => Ok(None),
        (lo, hi) => {
            let lo = match lo {
                Some(v) => broadcast(v, dim, n, what)?,
                None => Vector::from_element(n * dim, f64::NEG_INFINITY),
            };
            let hi = match hi {
                Some(v) => broadcast(v, dim, n, what)?,
                None => Vector::from_element(n * dim, f64::INFINITY),
            };
            if lo.iter().zip(hi.iter()).any(|(l, u)| l > u) {
                return Err(Error::InfeasibleBoundsShape(format!(
                    "{what}: min exceeds max"
                )));
            }
            Ok(Some((lo, hi)))
        }
    }
}

impl FfMpcProblem {
    /// Linear term of the objective over `Rbar`.
    pub fn gradient(&self, x: &Vector, zbar: &Vector, ubar: &Vector, u_prev: &Vector) -> Vector {
        let zmap = &self.cbar * &self.gamma_cl;
        let wz2 = self.wz_bar.transpose() * &self.wz_bar;
        let gz = zmap.transpose() * (&wz2 * (&self.cbar * (&self.phi_cl * x) - zbar));
        let base_u = &self.u_base_map * x;
        let wu2 = self.wu_bar.transpose() * &self.wu_bar;
        let gu = self.u_map.transpose() * (&wu2 * (&base_u - ubar));
        let dumap = &self.lambda * &self.u_map;
        let wdu2 = self.wdu_bar.transpose() * &self.wdu_bar;
        let gdu = dumap.transpose() * (&wdu2 * (&self.lambda * &base_u - &self.i0 * u_prev));
        gz + gu + gdu
    }

    /// Stacked two-sided bound vectors for the current state.
    pub fn bound_vectors(&self, x: &Vector, u_prev: &Vector) -> (Vector, Vector) {
        let mut lo = Vec::new();
        let mut hi = Vec::new();
        let b = &self.bounds;
        if let (Some(mn), Some(mx)) = (&b.x_min, &b.x_max) {
            let base = &self.phi_cl * x;
            for i in 0..mn.len() {
                lo.push(mn[i] - base[i]);
                hi.push(mx[i] - base[i]);
            }
        }
        if let (Some(mn), Some(mx)) = (&b.y_min, &b.y_max) {
            let base = &self.cbar * (&self.phi_cl * x);
            for i in 0..mn.len() {
                lo.push(mn[i] - base[i]);
                hi.push(mx[i] - base[i]);
            }
        }
        if let (Some(mn), Some(mx)) = (&b.u_min, &b.u_max) {
            let base = &self.u_base_map * x;
            for i in 0..mn.len() {
                lo.push(mn[i] - base[i]);
                hi.push(mx[i] - base[i]);
            }
        }
        if let (Some(mn), Some(mx)) = (&b.du_min, &b.du_max) {
            let base = &self.lambda * (&self.u_base_map * x) - &self.i0 * u_prev;
            for i in 0..mn.len() {
                lo.push(mn[i] - base[i]);
                hi.push(mx[i] - base[i]);
            }
        }
        (
            Vector::from_column_slice(&lo),
            Vector::from_column_slice(&hi),
        )
    }

    /// Predicted stacked control sequence for a given `Rbar`.
    pub fn predicted_u(&self, x: &Vector, rbar: &Vector) -> Vector {
        &self.u_base_map * x + &self.u_map * rbar
    }
}

/// Solve the feedforward MPC for the reference sequence; the first `ny` block
/// of the result is the reference injected into the loop.
pub fn solve_ffmpc(
    p: &FfMpcProblem,
    x: &Vector,
    zbar: &Vector,
    ubar: &Vector,
    u_prev: &Vector,
    warm: Option<(&Vector, &Vector)>,
) -> Result<(Vector, QpStatus)> {
    let g = p.gradient(x, zbar, ubar, u_prev);
    let (lo, hi) = p.bound_vectors(x, u_prev);
    let sol = match warm {
        Some((v0, y0)) => {
            p.solver
                .solve_warm(&g, &lo, &hi, v0, y0, DEFAULT_TOL, DEFAULT_MAX_ITER)?
        }
        None => p
            .solver
            .solve(&g, &lo, &hi, DEFAULT_TOL, DEFAULT_MAX_ITER)?,
    };
    Ok((sol.v, sol.status))
}
