//! Discrete-time LTI state-space algebra.
//!
//! Interconnections never perform state reduction: series, parallel, feedback
//! and the LFTs concatenate the operand states, so dimensions stay explicit
//! and deterministic. Algebraic loops are resolved through one primitive,
//! [`interconnect`], which closes `u = L y + R w` around a stack of systems
//! with a conditioning check on the loop matrix.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};

/// Discrete-time LTI system `x+ = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    /// Sampling period in seconds.
    pub ts: f64,
}

/// Named, disjoint channel ranges carried alongside a system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IoPartition {
    pub inputs: Vec<(String, std::ops::Range<usize>)>,
    pub outputs: Vec<(String, std::ops::Range<usize>)>,
}

impl IoPartition {
    /// Validates that the ranges are disjoint, ordered and cover `0..n`.
    pub fn validate(&self, n_inputs: usize, n_outputs: usize) -> bool {
        let covers = |groups: &[(String, std::ops::Range<usize>)], n: usize| {
            let mut at = 0;
            for (_, r) in groups {
                if r.start != at || r.end < r.start {
                    return false;
                }
                at = r.end;
            }
            at == n
        };
        covers(&self.inputs, n_inputs) && covers(&self.outputs, n_outputs)
    }

    pub fn input_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.inputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }

    pub fn output_range(&self, name: &str) -> Option<std::ops::Range<usize>> {
        self.outputs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, r)| r.clone())
    }
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat, ts: f64) -> Self {
        let sys = Self { a, b, c, d, ts };
        sys.assert_consistent();
        sys
    }

    fn assert_consistent(&self) {
        let n = self.a.nrows();
        assert_eq!(self.a.ncols(), n, "A must be square");
        assert_eq!(self.b.nrows(), n, "B rows must match A");
        assert_eq!(self.c.ncols(), n, "C cols must match A");
        assert_eq!(self.d.nrows(), self.c.nrows(), "D rows must match C");
        assert_eq!(self.d.ncols(), self.b.ncols(), "D cols must match B");
        assert!(self.ts > 0.0, "sampling period must be positive");
        for m in [&self.a, &self.b, &self.c, &self.d] {
            assert!(linalg::all_finite(m), "state-space entries must be finite");
        }
    }

    /// Memoryless system `y = D u`.
    pub fn static_gain(d: Mat, ts: f64) -> Self {
        let (ny, nu) = (d.nrows(), d.ncols());
        Self::new(
            Mat::zeros(0, 0),
            Mat::zeros(0, nu),
            Mat::zeros(ny, 0),
            d,
            ts,
        )
    }

    /// Identity map on `n` channels.
    pub fn identity(n: usize, ts: f64) -> Self {
        Self::static_gain(Mat::identity(n, n), ts)
    }

    /// All-zero map with the given channel counts.
    pub fn zero(ny: usize, nu: usize, ts: f64) -> Self {
        Self::static_gain(Mat::zeros(ny, nu), ts)
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn n_outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Keep only the selected output rows and input columns (states untouched).
    pub fn subsystem(&self, rows: &[usize], cols: &[usize]) -> Self {
        let c = self.c.select_rows(rows.iter());
        let d = self.d.select_rows(rows.iter()).select_columns(cols.iter());
        let b = self.b.select_columns(cols.iter());
        Self::new(self.a.clone(), b, c, d, self.ts)
    }

    /// Output negation.
    pub fn negate(&self) -> Self {
        Self::new(self.a.clone(), self.b.clone(), -&self.c, -&self.d, self.ts)
    }

    /// Inverse by feedthrough inversion; requires square invertible `D`.
    pub fn inverse(&self) -> Result<Self> {
        if self.d.nrows() != self.d.ncols() {
            return Err(Error::IllPosed("inverse needs a square feedthrough"));
        }
        let dinv = linalg::inv(&self.d).map_err(|_| Error::IllPosedFeedthrough)?;
        let bdinv = &self.b * &dinv;
        Ok(Self::new(
            &self.a - &bdinv * &self.c,
            bdinv,
            -&dinv * &self.c,
            dinv,
            self.ts,
        ))
    }

    /// Frequency response `C (zI - A)^{-1} B + D` at a point on or off the unit circle.
    pub fn eval(&self, z: Complex<f64>) -> Result<DMatrix<Complex<f64>>> {
        let n = self.nx();
        let zi_a = DMatrix::from_fn(n, n, |i, j| {
            let d = if i == j { z } else { Complex::new(0.0, 0.0) };
            d - Complex::new(self.a[(i, j)], 0.0)
        });
        let bc = self.b.map(|x| Complex::new(x, 0.0));
        let x = zi_a
            .lu()
            .solve(&bc)
            .ok_or(Error::IllPosed("frequency point coincides with a pole"))?;
        let cc = self.c.map(|x| Complex::new(x, 0.0));
        let dc = self.d.map(|x| Complex::new(x, 0.0));
        Ok(cc * x + dc)
    }
}

// ---------------------------------------------------------------------------
// JSON form: row-major nested arrays under keys A, B, C, D, Ts.
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct StateSpaceJson {
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    d: Vec<Vec<f64>>,
    #[serde(rename = "Ts")]
    ts: f64,
}

fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

fn from_rows(rows: &[Vec<f64>], ncols_hint: usize) -> std::result::Result<Mat, String> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(ncols_hint, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return Err("ragged matrix rows".into());
    }
    let mut m = Mat::zeros(nrows, ncols);
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            m[(i, j)] = *v;
        }
    }
    Ok(m)
}

impl Serialize for StateSpace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateSpaceJson {
            a: to_rows(&self.a),
            b: to_rows(&self.b),
            c: to_rows(&self.c),
            d: to_rows(&self.d),
            ts: self.ts,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateSpace {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = StateSpaceJson::deserialize(de)?;
        let a = from_rows(&raw.a, 0).map_err(serde::de::Error::custom)?;
        let n = a.nrows();
        let b = from_rows(&raw.b, 0).map_err(serde::de::Error::custom)?;
        let nu = b.ncols();
        let c = from_rows(&raw.c, n).map_err(serde::de::Error::custom)?;
        let d = from_rows(&raw.d, nu).map_err(serde::de::Error::custom)?;
        let d = if d.nrows() == 0 && c.nrows() > 0 {
            Mat::zeros(c.nrows(), nu)
        } else {
            d
        };
        Ok(StateSpace::new(a, b, c, d, raw.ts))
    }
}

/// Serde adapter storing a bare [`Mat`] as row-major nested arrays.
pub mod mat_serde {
    use super::{from_rows, to_rows, Mat};
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> Result<S::Ok, S::Error> {
        to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        from_rows(&rows, 0).map_err(serde::de::Error::custom)
    }
}

// ---------------------------------------------------------------------------
// Interconnection primitive
// ---------------------------------------------------------------------------

/// One row of the requested output map: a linear combination over the stacked
/// outputs `y` and stacked inputs `u` of the parts.
#[derive(Debug, Clone, Copy)]
pub enum Tap {
    /// Stacked-output index.
    Y(usize),
    /// Stacked-input index (useful to expose an internal control signal).
    U(usize),
}

/// Close `u = L y + R w` around block-diagonally stacked `parts`, returning
/// the system from `w` to the rows selected by `taps`.
///
/// `l` is `n_u_total x n_y_total`, `r` is `n_u_total x n_w`. Well-posedness of
/// `I - D L` is checked through a reciprocal-condition estimate.
pub fn interconnect(parts: &[&StateSpace], l: &Mat, r: &Mat, taps: &[Tap]) -> Result<StateSpace> {
    assert!(!parts.is_empty());
    let ts = parts[0].ts;
    assert!(
        parts.iter().all(|p| (p.ts - ts).abs() <= 1e-12 * ts.abs()),
        "sampling periods must agree"
    );
    let nx: usize = parts.iter().map(|p| p.nx()).sum();
    let nu: usize = parts.iter().map(|p| p.n_inputs()).sum();
    let ny: usize = parts.iter().map(|p| p.n_outputs()).sum();
    assert_eq!(l.nrows(), nu);
    assert_eq!(l.ncols(), ny);
    assert_eq!(r.nrows(), nu);
    let nw = r.ncols();

    // Stacked (block diagonal) realization.
    let mut a = Mat::zeros(nx, nx);
    let mut b = Mat::zeros(nx, nu);
    let mut c = Mat::zeros(ny, nx);
    let mut d = Mat::zeros(ny, nu);
    let (mut ix, mut iu, mut iy) = (0, 0, 0);
    for p in parts {
        a.view_mut((ix, ix), (p.nx(), p.nx())).copy_from(&p.a);
        b.view_mut((ix, iu), (p.nx(), p.n_inputs())).copy_from(&p.b);
        c.view_mut((iy, ix), (p.n_outputs(), p.nx()))
            .copy_from(&p.c);
        d.view_mut((iy, iu), (p.n_outputs(), p.n_inputs()))
            .copy_from(&p.d);
        ix += p.nx();
        iu += p.n_inputs();
        iy += p.n_outputs();
    }

    // y = (I - D L)^{-1} (C x + D R w)
    let x_loop = Mat::identity(ny, ny) - &d * l;
    let rhs = {
        let mut rhs = Mat::zeros(ny, nx + nw);
        rhs.view_mut((0, 0), (ny, nx)).copy_from(&c);
        rhs.view_mut((0, nx), (ny, nw)).copy_from(&(&d * r));
        rhs
    };
    let (sol, rcond) = linalg::solve_linear_rcond(&x_loop, &rhs)
        .map_err(|_| Error::IllPosed("loop matrix is singular"))?;
    if rcond <= linalg::tol::WELL_POSED_RCOND {
        return Err(Error::IllPosed("loop matrix is numerically singular"));
    }
    let cy = sol.view((0, 0), (ny, nx)).into_owned();
    let dy = sol.view((0, nx), (ny, nw)).into_owned();
    // u = L y + R w
    let cu = l * &cy;
    let du = l * &dy + r;

    let a_cl = &a + &b * &cu;
    let b_cl = &b * &du;

    let nout = taps.len();
    let mut c_cl = Mat::zeros(nout, nx);
    let mut d_cl = Mat::zeros(nout, nw);
    for (k, tap) in taps.iter().enumerate() {
        match tap {
            Tap::Y(i) => {
                c_cl.set_row(k, &cy.row(*i));
                d_cl.set_row(k, &dy.row(*i));
            }
            Tap::U(i) => {
                c_cl.set_row(k, &cu.row(*i));
                d_cl.set_row(k, &du.row(*i));
            }
        }
    }
    Ok(StateSpace::new(a_cl, b_cl, c_cl, d_cl, ts))
}

fn y_taps(range: std::ops::Range<usize>) -> Vec<Tap> {
    range.map(Tap::Y).collect()
}

/// Cascade: the signal flows through `g1` first, then `g2` (`G2 * G1`).
pub fn series(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    assert_eq!(g1.n_outputs(), g2.n_inputs(), "series channel mismatch");
    let (n1u, n1y) = (g1.n_inputs(), g1.n_outputs());
    let n2u = g2.n_inputs();
    let mut l = Mat::zeros(n1u + n2u, n1y + g2.n_outputs());
    l.view_mut((n1u, 0), (n2u, n1y))
        .copy_from(&Mat::identity(n2u, n1y));
    let mut r = Mat::zeros(n1u + n2u, n1u);
    r.view_mut((0, 0), (n1u, n1u))
        .copy_from(&Mat::identity(n1u, n1u));
    interconnect(&[g1, g2], &l, &r, &y_taps(n1y..n1y + g2.n_outputs()))
}

/// Parallel sum `G1 + G2` (shared input, outputs added).
pub fn parallel(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    assert_eq!(g1.n_inputs(), g2.n_inputs(), "parallel input mismatch");
    assert_eq!(g1.n_outputs(), g2.n_outputs(), "parallel output mismatch");
    let nu = g1.n_inputs();
    let ny = g1.n_outputs();
    let l = Mat::zeros(2 * nu, 2 * ny);
    let mut r = Mat::zeros(2 * nu, nu);
    r.view_mut((0, 0), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    r.view_mut((nu, 0), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    let sys = interconnect(&[g1, g2], &l, &r, &y_taps(0..ny))?;
    // add the second output group onto the first
    let mut c = sys.c.clone();
    let mut d = sys.d.clone();
    let full = interconnect(&[g1, g2], &l, &r, &y_taps(0..2 * ny))?;
    for i in 0..ny {
        c.set_row(i, &(full.c.row(i) + full.c.row(ny + i)));
        d.set_row(i, &(full.d.row(i) + full.d.row(ny + i)));
    }
    Ok(StateSpace::new(sys.a, sys.b, c, d, sys.ts))
}

/// Closed loop `y = G(w + sign * K y)` from the external input to `G`'s output.
pub fn feedback(g: &StateSpace, k: &StateSpace, sign: f64) -> Result<StateSpace> {
    assert!(sign == 1.0 || sign == -1.0, "sign must be +1 or -1");
    assert_eq!(g.n_outputs(), k.n_inputs(), "feedback channel mismatch");
    assert_eq!(k.n_outputs(), g.n_inputs(), "feedback channel mismatch");
    let (ngu, ngy) = (g.n_inputs(), g.n_outputs());
    let (nku, _nky) = (k.n_inputs(), k.n_outputs());
    let mut l = Mat::zeros(ngu + nku, ngy + k.n_outputs());
    // u_g = w + sign * y_k
    l.view_mut((0, ngy), (ngu, k.n_outputs()))
        .copy_from(&(Mat::identity(ngu, k.n_outputs()) * sign));
    // u_k = y_g
    l.view_mut((ngu, 0), (nku, ngy))
        .copy_from(&Mat::identity(nku, ngy));
    let mut r = Mat::zeros(ngu + nku, ngu);
    r.view_mut((0, 0), (ngu, ngu))
        .copy_from(&Mat::identity(ngu, ngu));
    interconnect(&[g, k], &l, &r, &y_taps(0..ngy))
}

/// Horizontal concatenation `[G1 G2]`: stacked inputs, outputs added.
pub fn hcat(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    assert_eq!(g1.n_outputs(), g2.n_outputs(), "hcat output mismatch");
    let (n1, n2) = (g1.n_inputs(), g2.n_inputs());
    let ny = g1.n_outputs();
    let l = Mat::zeros(n1 + n2, 2 * ny);
    let r = Mat::identity(n1 + n2, n1 + n2);
    let full = interconnect(&[g1, g2], &l, &r, &y_taps(0..2 * ny))?;
    let mut c = Mat::zeros(ny, full.nx());
    let mut d = Mat::zeros(ny, n1 + n2);
    for i in 0..ny {
        c.set_row(i, &(full.c.row(i) + full.c.row(ny + i)));
        d.set_row(i, &(full.d.row(i) + full.d.row(ny + i)));
    }
    Ok(StateSpace::new(full.a, full.b, c, d, full.ts))
}

/// Vertical concatenation `[G1; G2]`: shared input, stacked outputs.
pub fn vcat(g1: &StateSpace, g2: &StateSpace) -> Result<StateSpace> {
    assert_eq!(g1.n_inputs(), g2.n_inputs(), "vcat input mismatch");
    let nu = g1.n_inputs();
    let l = Mat::zeros(2 * nu, g1.n_outputs() + g2.n_outputs());
    let mut r = Mat::zeros(2 * nu, nu);
    r.view_mut((0, 0), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    r.view_mut((nu, 0), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    interconnect(
        &[g1, g2],
        &l,
        &r,
        &y_taps(0..g1.n_outputs() + g2.n_outputs()),
    )
}

/// 2x2 block system `[g11 g12; g21 g22]` with stacked input and output groups.
pub fn block2x2(
    g11: &StateSpace,
    g12: &StateSpace,
    g21: &StateSpace,
    g22: &StateSpace,
) -> Result<StateSpace> {
    vcat(&hcat(g11, g12)?, &hcat(g21, g22)?)
}

/// Lower LFT: close `p`'s trailing input/output groups through `k`.
///
/// The retained map runs from the leading input group to the leading output
/// group: `P11 + P12 K (I - P22 K)^{-1} P21`.
pub fn lft_lower(p: &StateSpace, k: &StateSpace) -> Result<StateSpace> {
    let nw = p
        .n_inputs()
        .checked_sub(k.n_outputs())
        .expect("lft_lower: k has more outputs than p has inputs");
    let nz = p
        .n_outputs()
        .checked_sub(k.n_inputs())
        .expect("lft_lower: k has more inputs than p has outputs");
    let (npu, npy) = (p.n_inputs(), p.n_outputs());
    let mut l = Mat::zeros(npu + k.n_inputs(), npy + k.n_outputs());
    // p's trailing inputs <- k's outputs
    l.view_mut((nw, npy), (k.n_outputs(), k.n_outputs()))
        .copy_from(&Mat::identity(k.n_outputs(), k.n_outputs()));
    // k's inputs <- p's trailing outputs
    l.view_mut((npu, nz), (k.n_inputs(), k.n_inputs()))
        .copy_from(&Mat::identity(k.n_inputs(), k.n_inputs()));
    let mut r = Mat::zeros(npu + k.n_inputs(), nw);
    r.view_mut((0, 0), (nw, nw))
        .copy_from(&Mat::identity(nw, nw));
    interconnect(&[p, k], &l, &r, &y_taps(0..nz))
}

/// Upper LFT: close `p`'s leading input/output groups through `s`.
///
/// The retained map is `P22 + P21 S (I - P11 S)^{-1} P12`.
pub fn lft_upper(p: &StateSpace, s: &StateSpace) -> Result<StateSpace> {
    let nw = p
        .n_inputs()
        .checked_sub(s.n_outputs())
        .expect("lft_upper: s has more outputs than p has inputs");
    let nz = p
        .n_outputs()
        .checked_sub(s.n_inputs())
        .expect("lft_upper: s has more inputs than p has outputs");
    let (npu, npy) = (p.n_inputs(), p.n_outputs());
    let mut l = Mat::zeros(npu + s.n_inputs(), npy + s.n_outputs());
    // p's leading inputs <- s's outputs
    l.view_mut((0, npy), (s.n_outputs(), s.n_outputs()))
        .copy_from(&Mat::identity(s.n_outputs(), s.n_outputs()));
    // s's inputs <- p's leading outputs
    l.view_mut((npu, 0), (s.n_inputs(), s.n_inputs()))
        .copy_from(&Mat::identity(s.n_inputs(), s.n_inputs()));
    let mut r = Mat::zeros(npu + s.n_inputs(), nw);
    r.view_mut((s.n_outputs(), 0), (nw, nw))
        .copy_from(&Mat::identity(nw, nw));
    interconnect(&[p, s], &l, &r, &y_taps(s.n_inputs()..s.n_inputs() + nz))
}

// ---------------------------------------------------------------------------
// Analysis
// ---------------------------------------------------------------------------

/// True when the spectral radius of `A` is below `1 - margin`.
pub fn is_stable(sys: &StateSpace, margin: f64) -> bool {
    match linalg::spectral_radius(&sys.a) {
        Ok(r) => r < 1.0 - margin,
        Err(_) => false,
    }
}

/// Markov parameters `[D, CB, CAB, ..., C A^{L-2} B]`.
pub fn impulse_response(sys: &StateSpace, len: usize) -> Vec<Mat> {
    assert!(len >= 1);
    let mut out = Vec::with_capacity(len);
    out.push(sys.d.clone());
    let mut akb = sys.b.clone();
    for _ in 1..len {
        out.push(&sys.c * &akb);
        akb = &sys.a * akb;
    }
    out
}

/// Peak Frobenius norm of the difference of two impulse responses.
pub fn impulse_distance(g1: &StateSpace, g2: &StateSpace, len: usize) -> f64 {
    let h1 = impulse_response(g1, len);
    let h2 = impulse_response(g2, len);
    h1.iter()
        .zip(&h2)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max)
}

/// H2 norm `sqrt(trace(C P C^T + D D^T))` with `P` the controllability Gramian.
pub fn h2_norm(sys: &StateSpace) -> Result<f64> {
    if !is_stable(sys, linalg::tol::STABILITY_MARGIN) {
        return Err(Error::UnstableSystem);
    }
    let p = if sys.nx() == 0 {
        Mat::zeros(0, 0)
    } else {
        linalg::solve_dlyap(&sys.a, &(&sys.b * sys.b.transpose()))
            .map_err(|_| Error::UnstableSystem)?
    };
    let val = (&sys.c * p * sys.c.transpose() + &sys.d * sys.d.transpose()).trace();
    Ok(val.max(0.0).sqrt())
}

/// Static gain `C (I - A)^{-1} B + D`.
pub fn dc_gain(sys: &StateSpace) -> Result<Mat> {
    let n = sys.nx();
    let x = linalg::solve_linear(&(Mat::identity(n, n) - &sys.a), &sys.b)
        .map_err(|_| Error::PoleAtOne)?;
    Ok(&sys.c * x + &sys.d)
}

/// Zero-initial-state output sequence for the given input sequence.
pub fn step_response_sim(sys: &StateSpace, inputs: &[Vector]) -> Vec<Vector> {
    assert!(!inputs.is_empty());
    let mut x = Vector::zeros(sys.nx());
    let mut out = Vec::with_capacity(inputs.len());
    for u in inputs {
        assert_eq!(u.len(), sys.n_inputs());
        out.push(&sys.c * &x + &sys.d * u);
        x = &sys.a * x + &sys.b * u;
    }
    out
}
