//! Nonlinear quadruple-tank benchmark: physics, linearization and sampling.
//!
//! Two pumps feed four coupled tanks through split valves; the measured
//! outputs are the voltage-scaled levels of the two lower tanks. Unmeasured
//! disturbances add onto the pump voltages, so the disturbance gain of the
//! linearized model equals its input gain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::ss::StateSpace;

/// Physical parameters; defaults are the benchmark values.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FourTankParams {
    #[serde(rename = "A1")]
    pub area1: f64,
    #[serde(rename = "A2")]
    pub area2: f64,
    #[serde(rename = "A3")]
    pub area3: f64,
    #[serde(rename = "A4")]
    pub area4: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: f64,
    pub a4: f64,
    pub h0_1: f64,
    pub h0_2: f64,
    pub h0_3: f64,
    pub h0_4: f64,
    pub u0_1: f64,
    pub u0_2: f64,
    pub k1: f64,
    pub k2: f64,
    pub kc: f64,
    pub g: f64,
    pub gamma1: f64,
    pub gamma2: f64,
}

impl Default for FourTankParams {
    fn default() -> Self {
        Self {
            area1: 28.0,
            area2: 32.0,
            area3: 28.0,
            area4: 32.0,
            a1: 0.071,
            a2: 0.057,
            a3: 0.071,
            a4: 0.057,
            h0_1: 12.4,
            h0_2: 12.7,
            h0_3: 1.8,
            h0_4: 1.4,
            u0_1: 3.00,
            u0_2: 3.00,
            k1: 3.33,
            k2: 3.35,
            kc: 0.5,
            g: 981.0,
            gamma1: 0.7,
            gamma2: 0.6,
        }
    }
}

impl FourTankParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.area1, self.area2, self.area3, self.area4, self.a1, self.a2, self.a3, self.a4,
            self.k1, self.k2, self.kc, self.g,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("areas, gains and g must be positive".into()));
        }
        if !(self.gamma1 > 0.0 && self.gamma1 < 1.0 && self.gamma2 > 0.0 && self.gamma2 < 1.0) {
            return Err(Error::Config("valve splits must lie in (0, 1)".into()));
        }
        if [self.h0_1, self.h0_2, self.h0_3, self.h0_4]
            .iter()
            .any(|h| *h < 0.0)
        {
            return Err(Error::Config(
                "linearization levels must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    pub fn h0(&self) -> [f64; 4] {
        [self.h0_1, self.h0_2, self.h0_3, self.h0_4]
    }

    pub fn u0(&self) -> [f64; 2] {
        [self.u0_1, self.u0_2]
    }
}

/// Tank levels in cm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourTankState {
    pub h: [f64; 4],
}

/// Level derivatives plus a flag for clamped (negative) levels inside the
/// square roots.
pub fn dynamics(
    p: &FourTankParams,
    h: &FourTankState,
    u: &[f64; 2],
    d: &[f64; 2],
) -> ([f64; 4], bool) {
    let mut clamped = false;
    let mut sq = [0.0; 4];
    for i in 0..4 {
        let hi = if h.h[i] < 0.0 {
            clamped = true;
            0.0
        } else {
            h.h[i]
        };
        sq[i] = (2.0 * p.g * hi).sqrt();
    }
    let v1 = u[0] + d[0];
    let v2 = u[1] + d[1];
    let dh = [
        (-p.a1 * sq[0] + p.a3 * sq[2] + p.gamma1 * p.k1 * v1) / p.area1,
        (-p.a2 * sq[1] + p.a4 * sq[3] + p.gamma2 * p.k2 * v2) / p.area2,
        (-p.a3 * sq[2] + (1.0 - p.gamma2) * p.k2 * v2) / p.area3,
        (-p.a4 * sq[3] + (1.0 - p.gamma1) * p.k1 * v1) / p.area4,
    ];
    (dh, clamped)
}

/// Analytic Jacobian of the dynamics at the linearization point:
/// `(Ac, Bc, Cc, Ec)` with time constants `T_i = (A_i/a_i) sqrt(2 h0_i / g)`.
pub fn linearize(p: &FourTankParams) -> Result<(Mat, Mat, Mat, Mat)> {
    let h0 = p.h0();
    if h0.iter().any(|h| *h <= 1e-9) {
        return Err(Error::DegenerateLevel);
    }
    let areas = [p.area1, p.area2, p.area3, p.area4];
    let outs = [p.a1, p.a2, p.a3, p.a4];
    let mut t = [0.0; 4];
    for i in 0..4 {
        t[i] = (areas[i] / outs[i]) * (2.0 * h0[i] / p.g).sqrt();
    }
    let mut ac = Mat::zeros(4, 4);
    for i in 0..4 {
        ac[(i, i)] = -1.0 / t[i];
    }
    ac[(0, 2)] = areas[2] / (areas[0] * t[2]);
    ac[(1, 3)] = areas[3] / (areas[1] * t[3]);

    let mut bc = Mat::zeros(4, 2);
    bc[(0, 0)] = p.gamma1 * p.k1 / p.area1;
    bc[(1, 1)] = p.gamma2 * p.k2 / p.area2;
    bc[(2, 1)] = (1.0 - p.gamma2) * p.k2 / p.area3;
    bc[(3, 0)] = (1.0 - p.gamma1) * p.k1 / p.area4;

    let mut cc = Mat::zeros(2, 4);
    cc[(0, 0)] = p.kc;
    cc[(1, 1)] = p.kc;

    let ec = bc.clone();
    Ok((ac, bc, cc, ec))
}

/// Exact zero-order-hold sampling through the block matrix exponential of
/// `[[Ac, Bc], [0, 0]] * Ts`.
pub fn discretize_zoh(ac: &Mat, bc: &Mat, ts: f64) -> Result<(Mat, Mat)> {
    assert!(ts > 0.0);
    let n = ac.nrows();
    let m = bc.ncols();
    let mut blk = Mat::zeros(n + m, n + m);
    blk.view_mut((0, 0), (n, n)).copy_from(&(ac * ts));
    blk.view_mut((0, n), (n, m)).copy_from(&(bc * ts));
    let e = linalg::expm(&blk)?;
    let a = e.view((0, 0), (n, n)).into_owned();
    let b = e.view((0, n), (n, m)).into_owned();
    Ok((a, b))
}

/// Discrete four-tank deviation model at sampling period `ts`:
/// `(StateSpace, E)` with `y = kc (h_{1,2} - h0_{1,2})` and `E = B`.
pub fn discrete_model(p: &FourTankParams, ts: f64) -> Result<(StateSpace, Mat)> {
    let (ac, bc, cc, _) = linearize(p)?;
    let (a, b) = discretize_zoh(&ac, &bc, ts)?;
    let d = Mat::zeros(2, 2);
    let e = b.clone();
    Ok((StateSpace::new(a, b, cc, d, ts), e))
}

/// Classical RK4 over `substeps` stages with level clamping at zero after
/// every substep.
pub fn step_rk4(
    p: &FourTankParams,
    h: &FourTankState,
    u: &[f64; 2],
    d: &[f64; 2],
    dt: f64,
    substeps: usize,
) -> FourTankState {
    assert!(dt > 0.0 && substeps >= 1);
    let sub = dt / substeps as f64;
    let mut state = *h;
    for _ in 0..substeps {
        let k1 = dynamics(p, &state, u, d).0;
        let k2 = dynamics(p, &offset(&state, &k1, sub / 2.0), u, d).0;
        let k3 = dynamics(p, &offset(&state, &k2, sub / 2.0), u, d).0;
        let k4 = dynamics(p, &offset(&state, &k3, sub), u, d).0;
        for i in 0..4 {
            state.h[i] += sub / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            state.h[i] = state.h[i].max(0.0);
        }
    }
    state
}

fn offset(h: &FourTankState, k: &[f64; 4], s: f64) -> FourTankState {
    let mut out = *h;
    for i in 0..4 {
        out.h[i] += s * k[i];
    }
    out
}

/// Absolute levels/voltages to deviation coordinates.
pub fn to_deviation(
    p: &FourTankParams,
    h_abs: &FourTankState,
    u_abs: &[f64; 2],
) -> (Vector, Vector) {
    let h0 = p.h0();
    let u0 = p.u0();
    let x = Vector::from_fn(4, |i, _| h_abs.h[i] - h0[i]);
    let u = Vector::from_fn(2, |i, _| u_abs[i] - u0[i]);
    (x, u)
}

/// Deviation coordinates back to absolute levels/voltages.
pub fn from_deviation(p: &FourTankParams, x: &Vector, u_dev: &Vector) -> (FourTankState, [f64; 2]) {
    let h0 = p.h0();
    let u0 = p.u0();
    let mut h = [0.0; 4];
    for i in 0..4 {
        h[i] = h0[i] + x[i];
    }
    (
        [FourTankState { h }][0],
        [u0[0] + u_dev[0], u0[1] + u_dev[1]],
    )
}

/// Measured output (deviation volts) for absolute levels.
pub fn measure(p: &FourTankParams, h_abs: &FourTankState) -> Vector {
    Vector::from_column_slice(&[p.kc * (h_abs.h[0] - p.h0_1), p.kc * (h_abs.h[1] - p.h0_2)])
}
