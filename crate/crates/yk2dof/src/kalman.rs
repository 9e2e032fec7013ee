//! Stationary Kalman filtering, plain and disturbance-augmented.
//!
//! The filtered (current) estimator form is used throughout:
//! `xhat_k|k = (I - Kfx C)(A xhat_{k-1|k-1} + B u_{k-1}) + Kfx y_k`,
//! which is exactly the state recursion realized inside the nominal
//! controller block.

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::ss::StateSpace;

/// Stationary filter gain with the covariances that produced it.
#[derive(Debug, Clone)]
pub struct KalmanDesign {
    pub kfx: Mat,
    pub qn: Mat,
    pub rn: Mat,
}

/// Plant model augmented with an integrating disturbance state.
#[derive(Debug, Clone)]
pub struct AugmentedModel {
    pub aa: Mat,
    pub ba: Mat,
    pub ca: Mat,
    pub n_d: usize,
}

/// Solve the filtering Riccati equation by duality and form the stationary
/// gain `Kfx = P C' (C P C' + Rn)^{-1}`; the filter matrix `(I - Kfx C) A`
/// is certified stable.
pub fn stationary_gain(a: &Mat, c: &Mat, qn: &Mat, rn: &Mat) -> Result<KalmanDesign> {
    let p = linalg::solve_dare(&a.transpose(), &c.transpose(), qn, rn)?;
    let s = c * &p * c.transpose() + rn;
    // Kfx' = S^{-1} C P  (S symmetric)
    let kfx_t = linalg::solve_linear(&s, &(c * &p))?;
    let kfx = kfx_t.transpose();
    let n = a.nrows();
    let filt = (Mat::identity(n, n) - &kfx * c) * a;
    let rho = linalg::spectral_radius(&filt)?;
    if rho >= 1.0 {
        return Err(Error::NoStabilizingSolution("filter matrix unstable"));
    }
    Ok(KalmanDesign {
        kfx,
        qn: qn.clone(),
        rn: rn.clone(),
    })
}

/// One filtered-form measurement update.
pub fn filter_step(
    design: &KalmanDesign,
    sys: &StateSpace,
    xhat_prev: &Vector,
    u_prev: &Vector,
    y: &Vector,
) -> Vector {
    let n = sys.nx();
    let pred = &sys.a * xhat_prev + &sys.b * u_prev;
    let ikc = Mat::identity(n, n) - &design.kfx * &sys.c;
    ikc * pred + &design.kfx * y
}

/// Augment `(A, B, C)` with an integrating disturbance entering through `E`:
/// `Aa = [A E; 0 I]`, `Ba = [B; 0]`, `Ca = [C 0]`.
///
/// Detectability of `(Ca, Aa)` is verified with a PBH rank test at `z = 1`,
/// the eigenvalue introduced by the augmentation.
pub fn augment(a: &Mat, b: &Mat, c: &Mat, e: &Mat) -> Result<AugmentedModel> {
    let nx = a.nrows();
    let nd = e.ncols();
    assert_eq!(e.nrows(), nx);
    let ny = c.nrows();
    let mut aa = Mat::identity(nx + nd, nx + nd);
    aa.view_mut((0, 0), (nx, nx)).copy_from(a);
    aa.view_mut((0, nx), (nx, nd)).copy_from(e);
    let mut ba = Mat::zeros(nx + nd, b.ncols());
    ba.view_mut((0, 0), (nx, b.ncols())).copy_from(b);
    let mut ca = Mat::zeros(ny, nx + nd);
    ca.view_mut((0, 0), (ny, nx)).copy_from(c);

    if nd > 0 {
        // PBH at z = 1: [Aa - I; Ca] must have full column rank
        let mut pbh = Mat::zeros(nx + nd + ny, nx + nd);
        pbh.view_mut((0, 0), (nx + nd, nx + nd))
            .copy_from(&(&aa - Mat::identity(nx + nd, nx + nd)));
        pbh.view_mut((nx + nd, 0), (ny, nx + nd)).copy_from(&ca);
        let rank = pbh.rank(1e-9 * pbh.norm().max(1.0));
        if rank < nx + nd {
            return Err(Error::UndetectableAugmentation);
        }
    }
    Ok(AugmentedModel {
        aa,
        ba,
        ca,
        n_d: nd,
    })
}

impl AugmentedModel {
    /// Wrap the augmented matrices as a state-space block for reuse of
    /// [`filter_step`].
    pub fn as_statespace(&self, ts: f64) -> StateSpace {
        StateSpace::new(
            self.aa.clone(),
            self.ba.clone(),
            self.ca.clone(),
            Mat::zeros(self.ca.nrows(), self.ba.ncols()),
            ts,
        )
    }
}

/// Filtered update of the augmented state, split into `(xhat, dhat)`.
pub fn augmented_filter_step(
    design: &KalmanDesign,
    aug: &AugmentedModel,
    xa_prev: &Vector,
    u_prev: &Vector,
    y: &Vector,
) -> (Vector, Vector) {
    let sys = aug.as_statespace(1.0);
    let xa = filter_step(design, &sys, xa_prev, u_prev, y);
    let nx = aug.aa.nrows() - aug.n_d;
    (
        xa.rows(0, nx).into_owned(),
        xa.rows(nx, aug.n_d).into_owned(),
    )
}

/// Default covariances: disturbance-shaped process noise with a small
/// regularizer, measurement noise `rn_scale * I`.
pub fn default_noise(e: &Mat, ny: usize, rn_scale: f64) -> (Mat, Mat) {
    let n = e.nrows();
    let qn = e * e.transpose() + Mat::identity(n, n) * 1e-9;
    let rn = Mat::identity(ny, ny) * rn_scale;
    (qn, rn)
}

/// Process noise for the augmented model: the plant block keeps the
/// disturbance-shaped covariance, the integrator block gets `sigma_d^2 I` so
/// the Riccati equation stays solvable and the disturbance estimate moves.
pub fn augmented_noise(e: &Mat, sigma_d2: f64) -> Mat {
    let n = e.nrows();
    let nd = e.ncols();
    let mut qn = Mat::identity(n + nd, n + nd) * 1e-9;
    let blk = e * e.transpose();
    for i in 0..n {
        for j in 0..n {
            qn[(i, j)] += blk[(i, j)];
        }
    }
    for i in 0..nd {
        qn[(n + i, n + i)] += sigma_d2;
    }
    qn
}
