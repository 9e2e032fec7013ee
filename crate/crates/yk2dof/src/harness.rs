//! Scenario engine around the nonlinear four-tank plant.
//!
//! One synthesized design (gains, filters, factorization, Q) drives five
//! loop configurations: the YK structure with a direct reference, the YK
//! structure with a constrained or unconstrained feedforward MPC, and the
//! traditional MPC baselines with a plain or disturbance-augmented Kalman
//! filter. Control is computed on the linear deviation model; the plant is
//! always the nonlinear tank simulation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fourtank::{self, FourTankParams, FourTankState};
use crate::kalman::{self, AugmentedModel, KalmanDesign};
use crate::linalg::{self, Mat, Vector};
use crate::mpc::{self, CondensedQp, FfBounds, FfMpcProblem, MpcConfig, MpcGains};
use crate::qdesign::{self, FirQ, QDesignProblem};
use crate::qp::{QpSolver, QpStatus};
use crate::ss::{self, StateSpace};
use crate::youla::{self, CoprimeFactors, YkBlocks};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Loop configuration selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    RefControl,
    FfmpcConstrained,
    FfmpcUnconstrained,
    StandardMpc,
    AugmentedMpc,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::RefControl,
        Mode::FfmpcConstrained,
        Mode::FfmpcUnconstrained,
        Mode::StandardMpc,
        Mode::AugmentedMpc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Mode::RefControl => "ref_control",
            Mode::FfmpcConstrained => "ffmpc_constrained",
            Mode::FfmpcUnconstrained => "ffmpc_unconstrained",
            Mode::StandardMpc => "standard_mpc",
            Mode::AugmentedMpc => "augmented_mpc",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Reference,
    Disturbance,
}

/// One persistent step change on a reference or disturbance channel.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Event {
    pub time: usize,
    pub channel: usize,
    pub kind: EventKind,
    pub magnitude: f64,
}

/// Simulation timeline and loop selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct Scenario {
    pub mode: Mode,
    /// Number of samples; the run records `duration + 1` rows.
    pub duration: usize,
    pub events: Vec<Event>,
    /// Actuator limit in volts for the constrained modes.
    pub u_limit: Option<f64>,
    /// Multiplier on reference event magnitudes (saturation studies).
    pub ref_scale: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        default_scenario()
    }
}

/// The benchmark timeline: r1 steps at t = 3 s, r2 at t = 17 s, unmeasured
/// input disturbances at t = 31 s and t = 45 s, 10 V actuator limit.
pub fn default_scenario() -> Scenario {
    Scenario {
        mode: Mode::RefControl,
        duration: 60,
        events: vec![
            Event {
                time: 3,
                channel: 0,
                kind: EventKind::Reference,
                magnitude: 1.0,
            },
            Event {
                time: 17,
                channel: 1,
                kind: EventKind::Reference,
                magnitude: 1.0,
            },
            Event {
                time: 31,
                channel: 0,
                kind: EventKind::Disturbance,
                magnitude: 0.5,
            },
            Event {
                time: 45,
                channel: 1,
                kind: EventKind::Disturbance,
                magnitude: 0.5,
            },
        ],
        u_limit: Some(10.0),
        ref_scale: 1.0,
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        for e in &self.events {
            if e.time > self.duration {
                return Err(Error::Config(format!(
                    "event at t = {} beyond duration {}",
                    e.time, self.duration
                )));
            }
            if e.channel > 1 {
                return Err(Error::Config("event channel must be 0 or 1".into()));
            }
            if !e.magnitude.is_finite() {
                return Err(Error::Config("event magnitude must be finite".into()));
            }
        }
        if !(self.ref_scale.is_finite() && self.ref_scale > 0.0) {
            return Err(Error::Config("ref_scale must be positive".into()));
        }
        Ok(())
    }

    /// Reference level (deviation output units) at sample `t`.
    pub fn reference_at(&self, t: usize) -> Vector {
        let mut r = Vector::zeros(2);
        for e in &self.events {
            if e.kind == EventKind::Reference && t >= e.time {
                r[e.channel] += e.magnitude * self.ref_scale;
            }
        }
        r
    }

    /// Disturbance (volts on the pump inputs) at sample `t`.
    pub fn disturbance_at(&self, t: usize) -> Vector {
        let mut d = Vector::zeros(2);
        for e in &self.events {
            if e.kind == EventKind::Disturbance && t >= e.time {
                d[e.channel] += e.magnitude;
            }
        }
        d
    }
}

fn default_weight(v: f64) -> WeightSpec {
    WeightSpec::Scalar(v)
}

/// Stage weight given either as a scalar multiple of the identity or as a
/// full matrix in row-major rows.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Scalar(f64),
    Matrix(Vec<Vec<f64>>),
}

impl WeightSpec {
    fn to_mat(&self, dim: usize) -> Result<Mat> {
        match self {
            WeightSpec::Scalar(s) => Ok(Mat::identity(dim, dim) * *s),
            WeightSpec::Matrix(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Config(format!("weight matrix must be {dim}x{dim}")));
                }
                Ok(Mat::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct MpcJson {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "Wz")]
    pub wz: WeightSpec,
    #[serde(rename = "Wu")]
    pub wu: WeightSpec,
    #[serde(rename = "Wdu")]
    pub wdu: WeightSpec,
}

impl Default for MpcJson {
    fn default() -> Self {
        Self {
            n: 20,
            wz: default_weight(1.0),
            wu: default_weight(1e-4),
            wdu: default_weight(0.01),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KalmanJson {
    #[serde(rename = "Rn_scale")]
    pub rn_scale: f64,
}

impl Default for KalmanJson {
    fn default() -> Self {
        Self { rn_scale: 0.01 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightFilterJson {
    pub pole: f64,
    pub gain: f64,
}

impl Default for WeightFilterJson {
    fn default() -> Self {
        Self {
            pole: 0.95,
            gain: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct QdesignJson {
    #[serde(rename = "Nq")]
    pub nq: usize,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "W")]
    pub w: WeightFilterJson,
}

impl Default for QdesignJson {
    fn default() -> Self {
        Self {
            nq: 40,
            l: 400,
            w: WeightFilterJson::default(),
        }
    }
}

/// Top-level configuration; every field has benchmark defaults.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct AppConfig {
    pub plant: FourTankParams,
    pub mpc: MpcJson,
    pub kalman: KalmanJson,
    pub qdesign: QdesignJson,
    pub scenario: Scenario,
}

impl AppConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: AppConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.plant.validate()?;
        cfg.scenario.validate()?;
        if cfg.mpc.n == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        Ok(cfg)
    }
}

// ---------------------------------------------------------------------------
// Synthesis
// ---------------------------------------------------------------------------

/// Process noise variance of the integrating disturbance states in the
/// augmented filter.
pub const AUGMENTED_DISTURBANCE_VARIANCE: f64 = 0.1;

/// Everything derived from one configuration, shared by all modes.
pub struct Synthesis {
    pub params: FourTankParams,
    pub sys: StateSpace,
    pub e: Mat,
    pub mpc_cfg: MpcConfig,
    pub condensed: CondensedQp,
    pub gains: MpcGains,
    pub filter: KalmanDesign,
    pub augmented: AugmentedModel,
    pub augmented_filter: KalmanDesign,
    pub phi_d: Mat,
    pub kn: StateSpace,
    pub gn: StateSpace,
    pub fac: CoprimeFactors,
    pub kff: Mat,
    pub blocks: YkBlocks,
    pub qdesign: QDesignProblem,
    pub q: FirQ,
    /// Open-channel controller: inputs `[r; y; u_ch]`, output `u_cmd`.
    pub controller: StateSpace,
    pub ffmpc: FfMpcProblem,
    /// Box-constraint solver over the control sequence for the MPC baselines.
    pub useq_solver: QpSolver,
    /// Steady-state control per unit reference (plant dc inverse).
    pub dc_inv: Mat,
}

fn synth_err(what: &'static str) -> impl FnOnce(Error) -> Error {
    move |e| Error::Synthesis(format!("{what}: {e}"))
}

/// Build the full design from the configuration.
pub fn synthesize(cfg: &AppConfig) -> Result<Synthesis> {
    cfg.plant.validate()?;
    let (sys, e) = fourtank::discrete_model(&cfg.plant, 1.0).map_err(synth_err("plant model"))?;
    let ny = sys.n_outputs();
    let nu = sys.n_inputs();
    let mpc_cfg = MpcConfig {
        n: cfg.mpc.n,
        wz: cfg.mpc.wz.to_mat(ny)?,
        wu: cfg.mpc.wu.to_mat(nu)?,
        wdu: cfg.mpc.wdu.to_mat(nu)?,
    };
    let condensed = mpc::build_condensed(&sys, &mpc_cfg).map_err(synth_err("condensed MPC"))?;
    let gains = mpc::unconstrained_gains(&sys, &condensed).map_err(synth_err("gain extraction"))?;

    let (qn, rn) = kalman::default_noise(&e, ny, cfg.kalman.rn_scale);
    let filter =
        kalman::stationary_gain(&sys.a, &sys.c, &qn, &rn).map_err(synth_err("kalman gain"))?;
    let augmented =
        kalman::augment(&sys.a, &sys.b, &sys.c, &e).map_err(synth_err("augmentation"))?;
    let qn_a = kalman::augmented_noise(&e, AUGMENTED_DISTURBANCE_VARIANCE);
    let augmented_filter = kalman::stationary_gain(&augmented.aa, &augmented.ca, &qn_a, &rn)
        .map_err(synth_err("augmented kalman gain"))?;
    let phi_d = mpc::build_phi_d(&sys, &e, mpc_cfg.n);

    let kn = youla::build_nominal_controller(&sys.a, &sys.b, &sys.c, &gains.lx, &filter.kfx);
    let gn = youla::build_nominal_plant(&sys.a, &sys.b, &sys.c);
    let fac = youla::coprime_factorize(&gn, &kn, &gains.lx, &Mat::zeros(kn.nx(), kn.nx()))
        .map_err(synth_err("coprime factorization"))?;
    let kff = youla::feedforward_gain(&sys.a, &sys.b, &sys.c, &gains.lx)
        .map_err(synth_err("feedforward gain"))?;
    let mut gd = youla::build_nominal_plant(&sys.a, &e, &sys.c);
    gd.d = Mat::zeros(ny + nu, e.ncols());
    let blocks = YkBlocks::build(&fac, &kn, &gn, &kff, &gd).map_err(synth_err("YK blocks"))?;

    let p = qdesign::build_generalized_plant(&sys.a, &sys.b, &sys.c, &e);
    let w = qdesign::error_weight(cfg.qdesign.w.pole, cfg.qdesign.w.gain, ny, nu)
        .map_err(synth_err("error weight"))?;
    let qdes = QDesignProblem::new(p, &blocks.j, w, cfg.qdesign.nq, cfg.qdesign.l)
        .map_err(synth_err("Q design problem"))?;
    let q = qdesign::synthesize_q_fir(&qdes).map_err(synth_err("Q synthesis"))?;

    let controller = youla::assemble_controller(&blocks.jaug, &q.realized)
        .map_err(synth_err("controller assembly"))?;

    let u0 = cfg.plant.u0();
    let bounds = match cfg.scenario.u_limit {
        Some(lim) => FfBounds {
            u_max: Some(Vector::from_column_slice(&[lim - u0[0], lim - u0[1]])),
            ..Default::default()
        },
        None => FfBounds::default(),
    };
    let ffmpc = mpc::build_ffmpc(&sys, &gains.lx, &kff, &mpc_cfg, &bounds)
        .map_err(synth_err("feedforward MPC"))?;

    // box constraints directly on the stacked control sequence
    let useq_solver = QpSolver::new(
        condensed.h.clone(),
        if cfg.scenario.u_limit.is_some() {
            Mat::identity(mpc_cfg.n * nu, mpc_cfg.n * nu)
        } else {
            Mat::zeros(0, mpc_cfg.n * nu)
        },
    )
    .map_err(synth_err("control-sequence solver"))?;

    let dc_inv = linalg::inv(&ss::dc_gain(&sys).map_err(synth_err("plant dc gain"))?)
        .map_err(synth_err("plant dc inverse"))?;

    Ok(Synthesis {
        params: cfg.plant.clone(),
        sys,
        e,
        mpc_cfg,
        condensed,
        gains,
        filter,
        augmented,
        augmented_filter,
        phi_d,
        kn,
        gn,
        fac,
        kff,
        blocks,
        qdesign: qdes,
        q,
        controller,
        ffmpc,
        useq_solver,
        dc_inv,
    })
}

// ---------------------------------------------------------------------------
// Simulation
// ---------------------------------------------------------------------------

/// Time series produced by one scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    pub mode: Mode,
    pub t: Vec<f64>,
    /// Measured output, deviation units.
    pub y: Vec<[f64; 2]>,
    /// Measured output, absolute units (`kc h`).
    pub y_abs: Vec<[f64; 2]>,
    /// Reference, deviation units.
    pub r: Vec<[f64; 2]>,
    /// Applied control, absolute volts.
    pub u: Vec<[f64; 2]>,
    /// Injected disturbance, volts.
    pub d: Vec<[f64; 2]>,
    /// Tank levels, cm.
    pub h: Vec<[f64; 4]>,
    /// State estimate (deviation), when the mode runs a filter.
    pub xhat: Vec<[f64; 4]>,
    /// Disturbance estimate, when the mode runs the augmented filter.
    pub dhat: Vec<[f64; 2]>,
    /// Per-step QP status, when the mode solves a QP.
    pub qp_status: Vec<QpStatus>,
}

/// The YK controller stepped with an explicit applied-control channel: the
/// output solves the feedthrough loop `u = f(x, r, y, u)`, while the state
/// update uses the control actually sent to the plant, keeping the embedded
/// observer consistent under saturation.
struct ControllerSim {
    a: Mat,
    br: Mat,
    by: Mat,
    bu: Mat,
    c: Mat,
    dr: Mat,
    dy: Mat,
    /// LU-ready loop matrix `I - D_u`.
    loop_mat: Mat,
    x: Vector,
}

impl ControllerSim {
    fn new(ctrl: &StateSpace, ny: usize, nu: usize) -> Result<Self> {
        let nr = ctrl.n_inputs() - ny - nu;
        let cols = |m: &Mat, off: usize, w: usize| m.columns(off, w).into_owned();
        let du = cols(&ctrl.d, nr + ny, nu);
        let loop_mat = Mat::identity(nu, nu) - du;
        // fail early if the feedthrough loop is ill posed
        linalg::solve_linear(&loop_mat, &Mat::identity(nu, nu))
            .map_err(|_| Error::IllPosed("controller feedthrough loop"))?;
        Ok(Self {
            a: ctrl.a.clone(),
            br: cols(&ctrl.b, 0, nr),
            by: cols(&ctrl.b, nr, ny),
            bu: cols(&ctrl.b, nr + ny, nu),
            c: ctrl.c.clone(),
            dr: cols(&ctrl.d, 0, nr),
            dy: cols(&ctrl.d, nr, ny),
            loop_mat,
            x: Vector::zeros(ctrl.nx()),
        })
    }

    /// Commanded control for the current sample.
    fn command(&self, r: &Vector, y: &Vector) -> Vector {
        let rhs = &self.c * &self.x + &self.dr * r + &self.dy * y;
        let sol = linalg::solve_linear(
            &self.loop_mat,
            &Mat::from_column_slice(rhs.len(), 1, rhs.as_slice()),
        )
        .expect("loop matrix verified at construction");
        Vector::from_column_slice(sol.as_slice())
    }

    /// Advance the state with the control actually applied.
    fn advance(&mut self, r: &Vector, y: &Vector, u_applied: &Vector) {
        self.x = &self.a * &self.x + &self.br * r + &self.by * y + &self.bu * u_applied;
    }
}

/// Run one scenario against the nonlinear plant.
pub fn run_scenario(synth: &Synthesis, scenario: &Scenario) -> Result<SimResult> {
    scenario.validate()?;
    let p = &synth.params;
    let n = synth.mpc_cfg.n;
    let (nx, nu, ny) = (synth.sys.nx(), synth.sys.n_inputs(), synth.sys.n_outputs());
    let u0 = p.u0();
    let u_limit_dev = scenario.u_limit.map(|l| [l - u0[0], l - u0[1]]);

    let mode = scenario.mode;
    let uses_yk = matches!(
        mode,
        Mode::RefControl | Mode::FfmpcConstrained | Mode::FfmpcUnconstrained
    );
    let mut ctrl = if uses_yk {
        Some(ControllerSim::new(&synth.controller, ny, nu)?)
    } else {
        None
    };

    let mut h_abs = FourTankState { h: p.h0() };
    let mut u_prev = Vector::zeros(nu); // applied control, deviation
    let mut xhat = Vector::zeros(nx);
    let mut xa = Vector::zeros(nx + synth.augmented.n_d);
    let mut ff_warm: Option<(Vector, Vector)> = None;

    let len = scenario.duration + 1;
    let mut out = SimResult {
        mode,
        t: Vec::with_capacity(len),
        y: Vec::with_capacity(len),
        y_abs: Vec::with_capacity(len),
        r: Vec::with_capacity(len),
        u: Vec::with_capacity(len),
        d: Vec::with_capacity(len),
        h: Vec::with_capacity(len),
        xhat: Vec::new(),
        dhat: Vec::new(),
        qp_status: Vec::new(),
    };

    for t in 0..=scenario.duration {
        let r_t = scenario.reference_at(t);
        let d_t = scenario.disturbance_at(t);
        let y_t = fourtank::measure(p, &h_abs);

        // previews over the horizon
        let mut zbar = Vector::zeros(n * ny);
        let mut ubar = Vector::zeros(n * nu);
        for i in 0..n {
            let fut = scenario.reference_at(t + 1 + i);
            zbar.rows_mut(i * ny, ny).copy_from(&fut);
            ubar.rows_mut(i * nu, nu).copy_from(&(&synth.dc_inv * fut));
        }

        let mut dhat_t: Option<Vector> = None;
        let mut status_t: Option<QpStatus> = None;

        let u_applied = match mode {
            Mode::RefControl | Mode::FfmpcConstrained | Mode::FfmpcUnconstrained => {
                // external filter supplies the feedforward MPC state
                xhat = kalman::filter_step(&synth.filter, &synth.sys, &xhat, &u_prev, &y_t);
                let rk = match mode {
                    Mode::RefControl => r_t.clone(),
                    _ => {
                        let prob = &synth.ffmpc;
                        let warm = ff_warm.as_ref().map(|(v, y)| (v, y));
                        let (rbar, status) = if mode == Mode::FfmpcConstrained {
                            mpc::solve_ffmpc(prob, &xhat, &zbar, &ubar, &u_prev, warm)
                        } else {
                            solve_ffmpc_unbounded(prob, &xhat, &zbar, &ubar, &u_prev)
                        }
                        .map_err(|e| Error::SolverFailed {
                            step: t,
                            source: Box::new(e),
                        })?;
                        status_t = Some(status);
                        let rk = rbar.rows(0, ny).into_owned();
                        ff_warm = Some((rbar, Vector::zeros(prob.a_ineq.nrows())));
                        rk
                    }
                };
                let sim = ctrl.as_mut().expect("YK controller present");
                let u_cmd = sim.command(&rk, &y_t);
                let u_app = match (mode, u_limit_dev) {
                    (Mode::FfmpcConstrained, Some(lim)) => {
                        // actuator saturation; the saturated value is fed back
                        // into the controller state below
                        Vector::from_fn(nu, |i, _| u_cmd[i].min(lim[i]))
                    }
                    _ => u_cmd.clone(),
                };
                sim.advance(&rk, &y_t, &u_app);
                u_app
            }
            Mode::StandardMpc | Mode::AugmentedMpc => {
                let gz = if mode == Mode::StandardMpc {
                    xhat = kalman::filter_step(&synth.filter, &synth.sys, &xhat, &u_prev, &y_t);
                    synth.condensed.gz(&xhat, &zbar)
                } else {
                    let (xh, dh) = kalman::augmented_filter_step(
                        &synth.augmented_filter,
                        &synth.augmented,
                        &xa,
                        &u_prev,
                        &y_t,
                    );
                    xa.rows_mut(0, nx).copy_from(&xh);
                    xa.rows_mut(nx, synth.augmented.n_d).copy_from(&dh);
                    xhat = xh;
                    let gz = mpc::offset_free_gz(&synth.condensed, &synth.phi_d, &xhat, &dh, &zbar);
                    dhat_t = Some(dh);
                    gz
                };
                let g = synth.condensed.gradient_with_gz(&gz, &ubar, &u_prev);
                let useq = match u_limit_dev {
                    Some(lim) => {
                        let m = n * nu;
                        let mut lower = Vector::from_element(m, f64::NEG_INFINITY);
                        let mut upper = Vector::zeros(m);
                        for i in 0..n {
                            for c in 0..nu {
                                upper[i * nu + c] = lim[c];
                                lower[i * nu + c] = f64::NEG_INFINITY;
                            }
                        }
                        let sol = synth
                            .useq_solver
                            .solve(
                                &g,
                                &lower,
                                &upper,
                                crate::qp::DEFAULT_TOL,
                                crate::qp::DEFAULT_MAX_ITER,
                            )
                            .map_err(|e| Error::SolverFailed {
                                step: t,
                                source: Box::new(e),
                            })?;
                        status_t = Some(sol.status);
                        sol.v
                    }
                    None => synth.condensed.solve_unconstrained(&g).map_err(|e| {
                        Error::SolverFailed {
                            step: t,
                            source: Box::new(e),
                        }
                    })?,
                };
                useq.rows(0, nu).into_owned()
            }
        };

        let u_abs = [u_applied[0] + u0[0], u_applied[1] + u0[1]];
        out.t.push(t as f64);
        out.y.push([y_t[0], y_t[1]]);
        out.y_abs.push([p.kc * h_abs.h[0], p.kc * h_abs.h[1]]);
        out.r.push([r_t[0], r_t[1]]);
        out.u.push(u_abs);
        out.d.push([d_t[0], d_t[1]]);
        out.h.push(h_abs.h);
        if mode != Mode::RefControl {
            out.xhat.push([xhat[0], xhat[1], xhat[2], xhat[3]]);
        }
        if let Some(dh) = dhat_t {
            out.dhat.push([dh[0], dh[1]]);
        }
        if let Some(st) = status_t {
            out.qp_status.push(st);
        }

        if t < scenario.duration {
            h_abs = fourtank::step_rk4(p, &h_abs, &u_abs, &[d_t[0], d_t[1]], 1.0, 10);
        }
        u_prev = u_applied;
    }

    Ok(out)
}

/// The unconstrained feedforward MPC ignores every bound but keeps the same
/// objective; solved in closed form.
fn solve_ffmpc_unbounded(
    p: &FfMpcProblem,
    x: &Vector,
    zbar: &Vector,
    ubar: &Vector,
    u_prev: &Vector,
) -> Result<(Vector, QpStatus)> {
    let g = p.gradient(x, zbar, ubar, u_prev);
    let sol = linalg::solve_linear(&p.h_ff, &Mat::from_column_slice(g.len(), 1, g.as_slice()))?;
    Ok((-Vector::from_column_slice(sol.as_slice()), QpStatus::Solved))
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EventMetrics {
    pub time: usize,
    pub channel: usize,
    pub kind: EventKind,
    pub magnitude: f64,
    /// Mean |y - r| over the last 3 samples of the event window, per channel.
    pub steady_state_error: [f64; 2],
    /// Peak |y - r| over the window, per channel.
    pub peak_deviation: [f64; 2],
    /// First sample (relative to the event) after which |y - r| stays inside
    /// 2% of the peak deviation; `None` when the window never settles.
    pub settling_time: [Option<f64>; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: Mode,
    pub per_event: Vec<EventMetrics>,
    /// Largest applied |u| in volts.
    pub max_abs_u: f64,
    /// Samples where the applied control exceeded the limit.
    pub violation_count: usize,
}

/// Windowed per-event metrics: each event owns the samples up to the next
/// event (the last one runs to the end of the record).
pub fn compute_metrics(res: &SimResult, scenario: &Scenario) -> Metrics {
    let mut events = scenario.events.clone();
    events.sort_by_key(|e| e.time);
    let steps = res.t.len();
    let mut per_event = Vec::new();
    for (i, ev) in events.iter().enumerate() {
        let start = ev.time;
        let end = events.get(i + 1).map_or(steps, |nxt| nxt.time.min(steps));
        if start >= steps || start >= end {
            continue;
        }
        let mut sse = [0.0; 2];
        let mut peak = [0.0f64; 2];
        let mut settle = [None; 2];
        for ch in 0..2 {
            let err_at = |k: usize| (res.y[k][ch] - res.r[k][ch]).abs();
            for k in start..end {
                peak[ch] = peak[ch].max(err_at(k));
            }
            let tail = 3.min(end - start);
            sse[ch] = (end - tail..end).map(err_at).sum::<f64>() / tail as f64;
            let band = 0.02 * peak[ch];
            if peak[ch] > 0.0 {
                let mut settled_at = None;
                for k in (start..end).rev() {
                    if err_at(k) > band {
                        break;
                    }
                    settled_at = Some(k);
                }
                settle[ch] = settled_at.map(|k| (k - start) as f64);
            } else {
                settle[ch] = Some(0.0);
            }
        }
        per_event.push(EventMetrics {
            time: ev.time,
            channel: ev.channel,
            kind: ev.kind,
            magnitude: ev.magnitude,
            steady_state_error: sse,
            peak_deviation: peak,
            settling_time: settle,
        });
    }
    let max_abs_u = res
        .u
        .iter()
        .flat_map(|u| u.iter())
        .fold(0.0f64, |m, v| m.max(v.abs()));
    let violation_count = match scenario.u_limit {
        Some(lim) => res
            .u
            .iter()
            .filter(|u| u.iter().any(|v| *v > lim + 1e-9))
            .count(),
        None => 0,
    };
    Metrics {
        mode: res.mode,
        per_event,
        max_abs_u,
        violation_count,
    }
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str = "t,y1,y2,r1,r2,u1,u2,d1,d2,h1,h2,h3,h4,mode";

/// Render the run as CSV with the fixed column schema.
pub fn to_csv(res: &SimResult) -> String {
    let mut s = String::with_capacity(res.t.len() * 96);
    s.push_str(CSV_HEADER);
    s.push('\n');
    for k in 0..res.t.len() {
        let row = [
            res.t[k],
            res.y[k][0],
            res.y[k][1],
            res.r[k][0],
            res.r[k][1],
            res.u[k][0],
            res.u[k][1],
            res.d[k][0],
            res.d[k][1],
            res.h[k][0],
            res.h[k][1],
            res.h[k][2],
            res.h[k][3],
        ];
        for v in row {
            s.push_str(&format!("{v}"));
            s.push(',');
        }
        s.push_str(res.mode.name());
        s.push('\n');
    }
    s
}

/// Parse the numeric columns of an exported CSV (round-trip checks and the
/// report command).
pub fn parse_csv(text: &str) -> Result<(Vec<[f64; 13]>, Vec<String>)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?;
    if header != CSV_HEADER {
        return Err(Error::Config("unexpected CSV header".into()));
    }
    let mut rows = Vec::new();
    let mut modes = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 14 {
            return Err(Error::Config("bad CSV row".into()));
        }
        let mut row = [0.0; 13];
        for (i, p) in parts[..13].iter().enumerate() {
            row[i] = p
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("bad number in CSV: {e}")))?;
        }
        rows.push(row);
        modes.push(parts[13].to_string());
    }
    Ok((rows, modes))
}

pub fn export_csv(res: &SimResult, path: &std::path::Path) -> Result<()> {
    std::fs::write(path, to_csv(res))?;
    Ok(())
}

/// JSON comparison table over several runs.
pub fn compare_report(entries: &[(Scenario, Metrics)]) -> Result<String> {
    #[derive(Serialize)]
    struct Row<'a> {
        mode: Mode,
        scenario: &'a Scenario,
        metrics: &'a Metrics,
    }
    let rows: Vec<Row> = entries
        .iter()
        .map(|(s, m)| Row {
            mode: m.mode,
            scenario: s,
            metrics: m,
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "runs": rows }))
        .map_err(|e| Error::Config(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_cfg() -> AppConfig {
        AppConfig::default()
    }

    #[test]
    fn default_scenario_matches_benchmark_timeline() {
        let s = default_scenario();
        assert_eq!(s.duration, 60);
        let times: Vec<usize> = s.events.iter().map(|e| e.time).collect();
        assert_eq!(times, vec![3, 17, 31, 45]);
        assert_eq!(s.u_limit, Some(10.0));
        let r = s.reference_at(20);
        assert_eq!(r[0], 1.0);
        assert_eq!(r[1], 1.0);
        let d = s.disturbance_at(50);
        assert_eq!(d[0], 0.5);
        assert_eq!(d[1], 0.5);
        assert_eq!(s.disturbance_at(30).norm(), 0.0);
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg = AppConfig::from_json("{}").unwrap();
        assert_eq!(cfg.mpc.n, 20);
        assert_eq!(cfg.qdesign.nq, 40);
        assert_eq!(cfg.kalman.rn_scale, 0.01);
        let text = serde_json::to_string(&cfg).unwrap();
        let back = AppConfig::from_json(&text).unwrap();
        assert_eq!(back.mpc.n, cfg.mpc.n);

        let cfg2 = AppConfig::from_json(
            r#"{"mpc": {"N": 10, "Wu": [[0.1, 0.0], [0.0, 0.2]]}, "kalman": {"Rn_scale": 0.05}}"#,
        )
        .unwrap();
        assert_eq!(cfg2.mpc.n, 10);
        assert_eq!(cfg2.kalman.rn_scale, 0.05);
        match cfg2.mpc.wu {
            WeightSpec::Matrix(ref m) => assert_eq!(m[1][1], 0.2),
            _ => panic!("expected matrix weight"),
        }
    }

    #[test]
    fn config_rejects_bad_inputs() {
        assert!(AppConfig::from_json("{").is_err());
        assert!(AppConfig::from_json(r#"{"scenario": {"events": [{"time": 99, "channel": 0, "kind": "reference", "magnitude": 1.0}], "duration": 10}}"#).is_err());
        assert!(AppConfig::from_json(r#"{"plant": {"gamma1": 1.5}}"#).is_err());
    }

    #[test]
    fn metrics_on_constant_zero_record() {
        let res = SimResult {
            mode: Mode::RefControl,
            t: (0..10).map(|k| k as f64).collect(),
            y: vec![[0.0; 2]; 10],
            y_abs: vec![[0.0; 2]; 10],
            r: vec![[0.0; 2]; 10],
            u: vec![[0.0; 2]; 10],
            d: vec![[0.0; 2]; 10],
            h: vec![[0.0; 4]; 10],
            xhat: vec![],
            dhat: vec![],
            qp_status: vec![],
        };
        let scen = Scenario {
            mode: Mode::RefControl,
            duration: 9,
            events: vec![Event {
                time: 2,
                channel: 0,
                kind: EventKind::Reference,
                magnitude: 0.0,
            }],
            u_limit: Some(10.0),
            ref_scale: 1.0,
        };
        let m = compute_metrics(&res, &scen);
        assert_eq!(m.per_event.len(), 1);
        assert_eq!(m.per_event[0].steady_state_error, [0.0, 0.0]);
        assert_eq!(m.per_event[0].settling_time, [Some(0.0), Some(0.0)]);
        assert_eq!(m.max_abs_u, 0.0);
        assert_eq!(m.violation_count, 0);
    }

    #[test]
    fn settling_time_matches_first_order_analytic() {
        // y relaxes to r with pole 0.8: tau = 1/ln(1/0.8), settle ~ ln(50) tau
        let pole: f64 = 0.8;
        let steps = 60;
        let mut y = Vec::new();
        let mut r = Vec::new();
        let mut err = 1.0;
        for _ in 0..steps {
            y.push([1.0 - err, 0.0]);
            r.push([1.0, 0.0]);
            err *= pole;
        }
        let res = SimResult {
            mode: Mode::RefControl,
            t: (0..steps).map(|k| k as f64).collect(),
            y: y.clone(),
            y_abs: y,
            r,
            u: vec![[0.0; 2]; steps],
            d: vec![[0.0; 2]; steps],
            h: vec![[0.0; 4]; steps],
            xhat: vec![],
            dhat: vec![],
            qp_status: vec![],
        };
        let scen = Scenario {
            mode: Mode::RefControl,
            duration: steps - 1,
            events: vec![Event {
                time: 0,
                channel: 0,
                kind: EventKind::Reference,
                magnitude: 1.0,
            }],
            u_limit: None,
            ref_scale: 1.0,
        };
        let m = compute_metrics(&res, &scen);
        let analytic = (0.02f64.ln() / pole.ln()).ceil();
        let got = m.per_event[0].settling_time[0].unwrap();
        assert!(
            (got - analytic).abs() <= 1.0,
            "settling {got} vs analytic {analytic}"
        );
    }

    #[test]
    fn csv_schema_and_round_trip() {
        let res = SimResult {
            mode: Mode::StandardMpc,
            t: vec![0.0, 1.0],
            y: vec![[0.125, -0.25], [0.3, 0.7]],
            y_abs: vec![[6.2, 6.35], [6.5, 7.05]],
            r: vec![[0.0, 0.0], [1.0, 0.0]],
            u: vec![[3.0, 3.0], [3.7071067811865475, 2.9]],
            d: vec![[0.0, 0.0], [0.5, 0.0]],
            h: vec![[12.4, 12.7, 1.8, 1.4], [12.5, 12.8, 1.9, 1.5]],
            xhat: vec![],
            dhat: vec![],
            qp_status: vec![],
        };
        let text = to_csv(&res);
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        assert_eq!(text.lines().count(), 3);
        let (rows, modes) = parse_csv(&text).unwrap();
        assert_eq!(modes[0], "standard_mpc");
        assert_eq!(rows[1][5], 3.7071067811865475); // exact numeric round trip
        assert_eq!(rows[0][1], 0.125);
    }

    #[test]
    fn synthesis_succeeds_on_defaults() {
        let cfg = quick_cfg();
        let synth = synthesize(&cfg).unwrap();
        assert_eq!(synth.controller.n_inputs(), 6);
        assert_eq!(synth.controller.n_outputs(), 2);
        assert!(
            linalg::spectral_radius(&(&synth.sys.a + &synth.sys.b * &synth.gains.lx)).unwrap()
                < 1.0
        );
    }
}
