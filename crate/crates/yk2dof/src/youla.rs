//! Coprime factorization and the Youla-Kucera control structure.
//!
//! The nominal plant carries an extra output channel for the control input
//! (`G_n: u -> [y; u]`) and the nominal controller takes both channels
//! (`K_n: [y; u] -> u_fb`), so the whole loop runs in positive feedback with
//! the total control fed back into the observer. Eight stable factors give
//! `G_n = N M^{-1} = Mt^{-1} Nt` and `K_n = U V^{-1} = Vt^{-1} Ut` linked by
//! the double Bezout identity; the parameterized controller and plant are the
//! LFTs of the `J` and `J_G` blocks with the free parameters `Q` and `S`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat, Vector};
use crate::ss::{self, IoPartition, StateSpace, Tap};

/// The eight Bezout factors with the ancillary gains that produced them.
///
/// Tilde factors are suffixed `t`. The factorized pair is kept to make
/// downstream block construction and validation self-contained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoprimeFactors {
    #[serde(rename = "M")]
    pub m: StateSpace,
    #[serde(rename = "N")]
    pub n: StateSpace,
    #[serde(rename = "U")]
    pub u: StateSpace,
    #[serde(rename = "V")]
    pub v: StateSpace,
    #[serde(rename = "Mt")]
    pub mt: StateSpace,
    #[serde(rename = "Nt")]
    pub nt: StateSpace,
    #[serde(rename = "Ut")]
    pub ut: StateSpace,
    #[serde(rename = "Vt")]
    pub vt: StateSpace,
    #[serde(rename = "F", with = "ss::mat_serde")]
    pub f: Mat,
    #[serde(rename = "Fc", with = "ss::mat_serde")]
    pub fc: Mat,
    #[serde(rename = "Gn")]
    pub plant: StateSpace,
    #[serde(rename = "Kn")]
    pub controller: StateSpace,
}

/// J/J_G blocks and their 2DOF augmentations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct YkBlocks {
    pub j: StateSpace,
    pub jg: StateSpace,
    pub jaug: StateSpace,
    pub jgaug: StateSpace,
    pub uf: StateSpace,
    pub nd: StateSpace,
    pub j_partition: IoPartition,
    pub jg_partition: IoPartition,
    pub ny: usize,
    pub nu: usize,
}

/// Nominal controller realization around the stationary filter and the MPC
/// feedback gain: inputs `[y; u]`, output `u_fb = Lx xhat_{k|k}`.
pub fn build_nominal_controller(a: &Mat, b: &Mat, c: &Mat, lx: &Mat, kfx: &Mat) -> StateSpace {
    let nx = a.nrows();
    let ny = c.nrows();
    let nu = b.ncols();
    let ikc = Mat::identity(nx, nx) - kfx * c;
    let ak = &ikc * a;
    let mut bk = Mat::zeros(nx, ny + nu);
    bk.view_mut((0, 0), (nx, ny)).copy_from(kfx);
    bk.view_mut((0, ny), (nx, nu)).copy_from(&(&ikc * b));
    let ck = lx * &ak;
    let mut dk = Mat::zeros(nu, ny + nu);
    dk.view_mut((0, 0), (nu, ny)).copy_from(&(lx * kfx));
    dk.view_mut((0, ny), (nu, nu)).copy_from(&(lx * &ikc * b));
    StateSpace::new(ak, bk, ck, dk, 1.0)
}

/// Nominal plant with the control input mirrored as a second output group:
/// `u -> [y; u]`.
pub fn build_nominal_plant(a: &Mat, b: &Mat, c: &Mat) -> StateSpace {
    let nx = a.nrows();
    let ny = c.nrows();
    let nu = b.ncols();
    let mut c_aug = Mat::zeros(ny + nu, nx);
    c_aug.view_mut((0, 0), (ny, nx)).copy_from(c);
    let mut d_aug = Mat::zeros(ny + nu, nu);
    d_aug
        .view_mut((ny, 0), (nu, nu))
        .copy_from(&Mat::identity(nu, nu));
    StateSpace::new(a.clone(), b.clone(), c_aug, d_aug, 1.0)
}

/// Stable coprime factorization of a general plant/controller pair.
///
/// `f` must stabilize the plant (`A + B F`) and `fc` the controller
/// (`Ac + Bc fc`); the tilde side comes out stable exactly when the pair is
/// stabilizing in positive feedback.
pub fn coprime_factorize(
    g: &StateSpace,
    k: &StateSpace,
    f: &Mat,
    fc: &Mat,
) -> Result<CoprimeFactors> {
    let (a, b, c, d) = (&g.a, &g.b, &g.c, &g.d);
    let (ac, bc, cc, dc) = (&k.a, &k.b, &k.c, &k.d);
    let nu = g.n_inputs();
    let nyk = g.n_outputs();
    assert_eq!(
        k.n_inputs(),
        nyk,
        "controller input must match plant output"
    );
    assert_eq!(
        k.n_outputs(),
        nu,
        "controller output must match plant input"
    );
    assert_eq!(f.nrows(), nu);
    assert_eq!(f.ncols(), g.nx());
    assert_eq!(fc.nrows(), nyk);
    assert_eq!(fc.ncols(), k.nx());

    let abf = a + b * f;
    if linalg::spectral_radius(&abf)? >= 1.0 {
        return Err(Error::UnstableAncillary("plant"));
    }
    let abfc = ac + bc * fc;
    if linalg::spectral_radius(&abfc)? >= 1.0 {
        return Err(Error::UnstableAncillary("controller"));
    }
    let y =
        linalg::inv(&(Mat::identity(nu, nu) - dc * d)).map_err(|_| Error::IllPosedFeedthrough)?;
    let z =
        linalg::inv(&(Mat::identity(nyk, nyk) - d * dc)).map_err(|_| Error::IllPosedFeedthrough)?;

    let ts = g.ts;
    // left block [M U; N V]: block-diagonal states (x_g, x_k)
    let m = StateSpace::new(abf.clone(), b.clone(), f.clone(), Mat::identity(nu, nu), ts);
    let u_sys = StateSpace::new(abfc.clone(), bc.clone(), cc + dc * fc, dc.clone(), ts);
    let n_sys = StateSpace::new(abf.clone(), b.clone(), c + d * f, d.clone(), ts);
    let v = StateSpace::new(
        abfc.clone(),
        bc.clone(),
        fc.clone(),
        Mat::identity(nyk, nyk),
        ts,
    );

    // right block [Vt -Ut; -Nt Mt]: coupled states
    let ng = g.nx();
    let nk = k.nx();
    let mut at = Mat::zeros(ng + nk, ng + nk);
    at.view_mut((0, 0), (ng, ng))
        .copy_from(&(a + b * &y * dc * c));
    at.view_mut((0, ng), (ng, nk)).copy_from(&(-(b * &y * cc)));
    at.view_mut((ng, 0), (nk, ng)).copy_from(&(-(bc * &z * c)));
    at.view_mut((ng, ng), (nk, nk))
        .copy_from(&(ac + bc * &z * d * cc));
    let rho_t = linalg::spectral_radius(&at)?;
    if rho_t >= 1.0 {
        return Err(Error::UnstablePair(rho_t));
    }
    let mut bt1 = Mat::zeros(ng + nk, nu);
    bt1.view_mut((0, 0), (ng, nu)).copy_from(&(-(b * &y)));
    bt1.view_mut((ng, 0), (nk, nu)).copy_from(&(bc * &z * d));
    let mut bt2 = Mat::zeros(ng + nk, nyk);
    bt2.view_mut((0, 0), (ng, nyk)).copy_from(&(b * &y * dc));
    bt2.view_mut((ng, 0), (nk, nyk)).copy_from(&(-(bc * &z)));
    let mut ct1 = Mat::zeros(nu, ng + nk);
    ct1.view_mut((0, 0), (nu, ng)).copy_from(&(f - &y * dc * c));
    ct1.view_mut((0, ng), (nu, nk)).copy_from(&(&y * cc));
    let mut ct2 = Mat::zeros(nyk, ng + nk);
    ct2.view_mut((0, 0), (nyk, ng)).copy_from(&(&z * c));
    ct2.view_mut((0, ng), (nyk, nk))
        .copy_from(&(fc - &z * d * cc));

    let vt = StateSpace::new(at.clone(), bt1.clone(), ct1.clone(), y.clone(), ts);
    let ut = StateSpace::new(at.clone(), bt2.clone(), -&ct1, &y * dc, ts);
    let nt = StateSpace::new(at.clone(), bt1, -&ct2, &z * d, ts);
    let mt = StateSpace::new(at, bt2, ct2, z, ts);

    Ok(CoprimeFactors {
        m,
        n: n_sys,
        u: u_sys,
        v,
        mt,
        nt,
        ut,
        vt,
        f: f.clone(),
        fc: fc.clone(),
        plant: g.clone(),
        controller: k.clone(),
    })
}

/// Peak impulse-response deviation of the double Bezout product from `I`
/// over `len` samples.
pub fn verify_bezout(fac: &CoprimeFactors, len: usize) -> Result<f64> {
    let left = ss::block2x2(&fac.vt, &fac.ut.negate(), &fac.nt.negate(), &fac.mt)?;
    let right = ss::block2x2(&fac.m, &fac.u, &fac.n, &fac.v)?;
    let product = ss::series(&right, &left)?;
    let eye = StateSpace::identity(product.n_inputs(), product.ts);
    Ok(ss::impulse_distance(&product, &eye, len))
}

/// `J = [K_n, Vt^{-1}; V^{-1}, -V^{-1} N]`, inputs `[[y; u]; w_q]`, outputs
/// `[u_fb; z_q]`.
pub fn build_j(fac: &CoprimeFactors, kn: &StateSpace) -> Result<StateSpace> {
    let vt_inv = fac.vt.inverse()?;
    let v_inv = fac.v.inverse()?;
    let v_inv_n = ss::series(&fac.n, &v_inv)?;
    ss::block2x2(kn, &vt_inv, &v_inv, &v_inv_n.negate())
}

/// `J_G = [-M^{-1} U, M^{-1}; Mt^{-1}, G_n]`, inputs `[w_s; u]`, outputs
/// `[z_s; [y; u]]`.
pub fn build_jg(fac: &CoprimeFactors, gn: &StateSpace) -> Result<StateSpace> {
    let m_inv = fac.m.inverse()?;
    let mt_inv = fac.mt.inverse()?;
    let m_inv_u = ss::series(&fac.u, &m_inv)?;
    ss::block2x2(&m_inv_u.negate(), &m_inv, &mt_inv, gn)
}

/// Static feedforward gain `Kff = [C (I - A - B Lx)^{-1} B]^{-1}` matching
/// the closed-loop dc gain to the identity.
pub fn feedforward_gain(a: &Mat, b: &Mat, c: &Mat, lx: &Mat) -> Result<Mat> {
    let n = a.nrows();
    let inner = Mat::identity(n, n) - a - b * lx;
    let x = linalg::solve_linear(&inner, b).map_err(|_| Error::SingularDcGain)?;
    linalg::inv(&(c * x)).map_err(|_| Error::SingularDcGain)
}

/// Prepend the feedforward column to `J`: the new first input is the
/// reference. Returns the augmented block and `Uf_t = Vt Kff`.
pub fn augment_j(
    j: &StateSpace,
    kff_sys: &StateSpace,
    fac: &CoprimeFactors,
) -> Result<(StateSpace, StateSpace)> {
    let uf = ss::series(kff_sys, &fac.vt)?;
    let v_inv = fac.v.inverse()?;
    let v_inv_n = ss::series(&fac.n, &v_inv)?;
    let col_bot = ss::series(&uf, &v_inv_n)?.negate();
    let col = ss::vcat(kff_sys, &col_bot)?;
    Ok((ss::hcat(&col, j)?, uf))
}

/// Append the disturbance column to `J_G`: the new last input is the
/// exogenous signal. Returns the augmented block and `Nd_t = Mt G_d`.
pub fn augment_jg(
    jg: &StateSpace,
    gd: &StateSpace,
    fac: &CoprimeFactors,
) -> Result<(StateSpace, StateSpace)> {
    let nd = ss::series(gd, &fac.mt)?;
    let m_inv = fac.m.inverse()?;
    let m_inv_u = ss::series(&fac.u, &m_inv)?;
    let col_top = ss::series(&nd, &m_inv_u)?.negate();
    let col = ss::vcat(&col_top, gd)?;
    Ok((ss::hcat(jg, &col)?, nd))
}

/// Product-form parameterized controller `(U + M Q)(V + N Q)^{-1}`.
pub fn parameterize_controller(fac: &CoprimeFactors, q: &StateSpace) -> Result<StateSpace> {
    let u_plus = ss::parallel(&fac.u, &ss::series(q, &fac.m)?)?;
    let v_plus = ss::parallel(&fac.v, &ss::series(q, &fac.n)?)?;
    ss::series(&v_plus.inverse()?, &u_plus)
}

/// Product-form parameterized plant `(N + V S)(M + U S)^{-1}`.
pub fn parameterize_plant(fac: &CoprimeFactors, s: &StateSpace) -> Result<StateSpace> {
    let n_plus = ss::parallel(&fac.n, &ss::series(s, &fac.v)?)?;
    let m_plus = ss::parallel(&fac.m, &ss::series(s, &fac.u)?)?;
    ss::series(&m_plus.inverse()?, &n_plus)
}

/// YK parameter of a stable plant/controller pair: `Qs = Ks (I + Gs Ks)^{-1}`.
pub fn yk_parameter_stable(gs: &StateSpace, ks: &StateSpace) -> Result<StateSpace> {
    let loop_gk = ss::series(ks, gs)?;
    let inner = ss::parallel(
        &StateSpace::identity(loop_gk.n_inputs(), loop_gk.ts),
        &loop_gk,
    )?;
    ss::series(
        &inner
            .inverse()
            .map_err(|_| Error::IllPosed("I + Gs Ks not invertible"))?,
        ks,
    )
}

/// Dual YK parameter of an actual plant under the nominal controller:
/// `S = V^{-1} V_act (Nt_act M - Mt_act N)`, validated against the
/// parameterized plant's impulse response.
pub fn dual_s_from_actual(
    fac: &CoprimeFactors,
    g_act: &StateSpace,
    kn: &StateSpace,
) -> Result<StateSpace> {
    let fac_act = coprime_factorize(g_act, kn, &fac.f, &fac.fc)?;
    let term = ss::parallel(
        &ss::series(&fac.m, &fac_act.nt)?,
        &ss::series(&fac.n, &fac_act.mt)?.negate(),
    )?;
    let s = ss::series(&ss::series(&term, &fac_act.v)?, &fac.v.inverse()?)?;
    // validity: the parameterized plant must reproduce the actual plant
    let jg = build_jg(fac, &fac.plant)?;
    let gs = ss::lft_upper(&jg, &s)?;
    let mismatch = ss::impulse_distance(&gs, g_act, 200);
    if mismatch > 1e-5 {
        return Err(Error::ValidationFailed(mismatch));
    }
    Ok(s)
}

impl YkBlocks {
    /// Assemble every block from the factorization, nominal systems,
    /// feedforward gain and disturbance model.
    pub fn build(
        fac: &CoprimeFactors,
        kn: &StateSpace,
        gn: &StateSpace,
        kff: &Mat,
        gd: &StateSpace,
    ) -> Result<Self> {
        let nu = kn.n_outputs();
        let ny = gn.n_outputs() - nu;
        let nyk = ny + nu;
        let j = build_j(fac, kn)?;
        let jg = build_jg(fac, gn)?;
        let kff_sys = StateSpace::static_gain(kff.clone(), kn.ts);
        let (jaug, uf) = augment_j(&j, &kff_sys, fac)?;
        let (jgaug, nd) = augment_jg(&jg, gd, fac)?;
        let j_partition = IoPartition {
            inputs: vec![
                ("r".into(), 0..ny),
                ("yu".into(), ny..ny + nyk),
                ("wq".into(), ny + nyk..ny + nyk + nu),
            ],
            outputs: vec![("u".into(), 0..nu), ("zq".into(), nu..nu + nyk)],
        };
        let jg_partition = IoPartition {
            inputs: vec![
                ("ws".into(), 0..nyk),
                ("u".into(), nyk..nyk + nu),
                ("d".into(), nyk + nu..nyk + nu + gd.n_inputs()),
            ],
            outputs: vec![("zs".into(), 0..nu), ("yu".into(), nu..nu + nyk)],
        };
        assert!(j_partition.validate(jaug.n_inputs(), jaug.n_outputs()));
        assert!(jg_partition.validate(jgaug.n_inputs(), jgaug.n_outputs()));
        Ok(Self {
            j,
            jg,
            jaug,
            jgaug,
            uf,
            nd,
            j_partition,
            jg_partition,
            ny,
            nu,
        })
    }
}

/// Close the whole parameterized loop: plant side `LFT_u(JG_aug, S)` against
/// controller side `LFT_l(J_aug, Q)`, from `[r; d]` to `[y; u]`.
pub fn assemble_closed_loop(
    jgaug: &StateSpace,
    jaug: &StateSpace,
    q: &StateSpace,
    s: &StateSpace,
) -> Result<StateSpace> {
    let nu = q.n_outputs();
    let nyk = q.n_inputs();
    let ny = nyk - nu;
    assert_eq!(s.n_inputs(), nu, "S must map z_s (nu) to w_s (ny+nu)");
    assert_eq!(s.n_outputs(), nyk);
    let nd = jgaug.n_inputs() - nyk - nu;
    let nr = jaug.n_inputs() - nyk - nu;
    assert_eq!(nr, ny, "J_aug reference group width mismatch");

    // stacked order: [jgaug, jaug, q, s]
    let in_off_jg = 0;
    let in_off_j = jgaug.n_inputs();
    let in_off_q = in_off_j + jaug.n_inputs();
    let in_off_s = in_off_q + q.n_inputs();
    let n_u_tot = in_off_s + s.n_inputs();
    let out_off_jg = 0;
    let out_off_j = jgaug.n_outputs();
    let out_off_q = out_off_j + jaug.n_outputs();
    let out_off_s = out_off_q + q.n_outputs();
    let n_y_tot = out_off_s + s.n_outputs();

    let mut l = Mat::zeros(n_u_tot, n_y_tot);
    let eye = |k: usize| Mat::identity(k, k);
    // jgaug.w1 <- s.out
    l.view_mut((in_off_jg, out_off_s), (nyk, nyk))
        .copy_from(&eye(nyk));
    // jgaug.u <- jaug u_cmd
    l.view_mut((in_off_jg + nyk, out_off_j), (nu, nu))
        .copy_from(&eye(nu));
    // jaug.yu <- jgaug measured [y; u] group
    l.view_mut((in_off_j + ny, out_off_jg + nu), (nyk, nyk))
        .copy_from(&eye(nyk));
    // jaug.w2 <- q.out
    l.view_mut((in_off_j + ny + nyk, out_off_q), (nu, nu))
        .copy_from(&eye(nu));
    // q.in <- jaug z2
    l.view_mut((in_off_q, out_off_j + nu), (nyk, nyk))
        .copy_from(&eye(nyk));
    // s.in <- jgaug z1
    l.view_mut((in_off_s, out_off_jg), (nu, nu))
        .copy_from(&eye(nu));

    let mut r = Mat::zeros(n_u_tot, ny + nd);
    // external r -> jaug reference group
    r.view_mut((in_off_j, 0), (ny, ny)).copy_from(&eye(ny));
    // external d -> jgaug disturbance group
    r.view_mut((in_off_jg + nyk + nu, ny), (nd, nd))
        .copy_from(&eye(nd));

    let mut taps: Vec<Tap> = (0..ny).map(|i| Tap::Y(out_off_jg + nu + i)).collect();
    taps.extend((0..nu).map(|i| Tap::Y(out_off_j + i)));

    let cl = ss::interconnect(&[jgaug, jaug, q, s], &l, &r, &taps)?;
    let rho = linalg::spectral_radius(&cl.a)?;
    if rho >= 1.0 {
        return Err(Error::InternalInstability(rho));
    }
    Ok(cl)
}

/// Controller half of the loop with `Q` closed but the plant channels open:
/// inputs `[r; y; u_ch]`, output `u_cmd`.
///
/// The `u_ch` channel must be driven with the control actually applied to the
/// plant so the embedded observer stays consistent.
pub fn assemble_controller(jaug: &StateSpace, q: &StateSpace) -> Result<StateSpace> {
    let nu = q.n_outputs();
    let nyk = q.n_inputs();
    let ny = jaug.n_inputs() - nyk - nu;

    let in_off_j = 0;
    let in_off_q = jaug.n_inputs();
    let n_u_tot = in_off_q + q.n_inputs();
    let out_off_j = 0;
    let out_off_q = jaug.n_outputs();
    let n_y_tot = out_off_q + q.n_outputs();

    let mut l = Mat::zeros(n_u_tot, n_y_tot);
    let eye = |k: usize| Mat::identity(k, k);
    // jaug.w2 <- q.out
    l.view_mut((in_off_j + ny + nyk, out_off_q), (nu, nu))
        .copy_from(&eye(nu));
    // q.in <- jaug z2
    l.view_mut((in_off_q, out_off_j + nu), (nyk, nyk))
        .copy_from(&eye(nyk));

    let next = ny + nyk; // external inputs: r, y, u_ch
    let mut r = Mat::zeros(n_u_tot, next);
    r.view_mut((in_off_j, 0), (ny + nyk, ny + nyk))
        .copy_from(&eye(ny + nyk));

    let taps: Vec<Tap> = (0..nu).map(|i| Tap::Y(out_off_j + i)).collect();
    ss::interconnect(&[jaug, q], &l, &r, &taps)
}

/// A conformally-sized zero parameter (`Q = 0`: controller side).
pub fn zero_q(ny: usize, nu: usize, ts: f64) -> StateSpace {
    StateSpace::zero(nu, ny + nu, ts)
}

/// A conformally-sized zero dual parameter (`S = 0`: plant side).
pub fn zero_s(ny: usize, nu: usize, ts: f64) -> StateSpace {
    StateSpace::zero(ny + nu, nu, ts)
}

/// Stack a constant reference/disturbance into the assembled loop's input.
pub fn loop_input(r: &Vector, d: &Vector) -> Vector {
    let mut w = Vector::zeros(r.len() + d.len());
    w.rows_mut(0, r.len()).copy_from(r);
    w.rows_mut(r.len(), d.len()).copy_from(d);
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{four_tank_nominal, rand_sys, FourTankNominal};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nominal_controller_zero_gain_cases() {
        let setup = four_tank_nominal();
        let FourTankNominal { sys, kfx, .. } = &setup;
        // Lx = 0 kills the output entirely
        let kn0 = build_nominal_controller(&sys.a, &sys.b, &sys.c, &Mat::zeros(2, 4), kfx);
        assert!(kn0.c.norm() == 0.0 && kn0.d.norm() == 0.0);
        // Kfx = 0 leaves the open-loop observer
        let kn_ol = build_nominal_controller(&sys.a, &sys.b, &sys.c, &setup.lx, &Mat::zeros(4, 2));
        assert!((kn_ol.a.clone() - &sys.a).norm() < 1e-15);
        assert!((kn_ol.b.view((0, 2), (4, 2)).into_owned() - &sys.b).norm() < 1e-15);
    }

    #[test]
    fn nominal_controller_matches_filter_plus_gain() {
        let setup = four_tank_nominal();
        let kn = &setup.kn;
        let design = crate::kalman::KalmanDesign {
            kfx: setup.kfx.clone(),
            qn: Mat::identity(4, 4),
            rn: Mat::identity(2, 2),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let mut xk = Vector::zeros(4);
        let mut xh = Vector::zeros(4);
        for _ in 0..50 {
            let y = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let w = Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let mut input = Vector::zeros(4);
            input.rows_mut(0, 2).copy_from(&y);
            input.rows_mut(2, 2).copy_from(&w);
            let out = &kn.c * &xk + &kn.d * &input;
            xk = &kn.a * &xk + &kn.b * &input;
            // the same signals through the estimation module + gain
            xh = crate::kalman::filter_step(&design, &setup.sys, &xh, &w, &y);
            let u_fb = &setup.lx * &xh;
            assert!((out - u_fb).norm() < 1e-12);
        }
    }

    #[test]
    fn nominal_plant_mirrors_input() {
        let setup = four_tank_nominal();
        let gn = &setup.gn;
        let mut rng = ChaCha8Rng::seed_from_u64(72);
        let inputs: Vec<Vector> = (0..20)
            .map(|_| Vector::from_fn(2, |_, _| rng.random_range(-1.0..1.0)))
            .collect();
        let out = ss::step_response_sim(gn, &inputs);
        for (o, u) in out.iter().zip(&inputs) {
            assert!((o.rows(2, 2) - u).norm() < 1e-15);
        }
        // first output group equals original plant response
        let h_full = ss::impulse_response(gn, 60);
        let h_plant = ss::impulse_response(&setup.sys, 60);
        for (hf, hp) in h_full.iter().zip(&h_plant) {
            assert!((hf.view((0, 0), (2, 2)).into_owned() - hp).norm() < 1e-13);
        }
    }

    #[test]
    fn trivial_static_factorization() {
        // static zero plant with zero controller: M, V, Mt, Vt identity; N, U zero
        let g = StateSpace::zero(1, 1, 1.0);
        let gn = build_nominal_plant(&Mat::zeros(0, 0), &Mat::zeros(0, 1), &Mat::zeros(1, 0));
        let k = StateSpace::zero(1, 2, 1.0);
        let fac = coprime_factorize(&gn, &k, &Mat::zeros(1, 0), &Mat::zeros(2, 0)).unwrap();
        assert!((fac.m.d.clone() - Mat::identity(1, 1)).norm() < 1e-15);
        assert!((fac.v.d.clone() - Mat::identity(2, 2)).norm() < 1e-15);
        assert!(fac.u.d.norm() == 0.0);
        assert!((verify_bezout(&fac, 10).unwrap()).abs() < 1e-14);
        let _ = g;
    }

    #[test]
    fn four_tank_bezout_residual() {
        let setup = four_tank_nominal();
        let res = verify_bezout(&setup.fac, 200).unwrap();
        assert!(res <= 1e-7, "double Bezout residual {res}");
    }

    #[test]
    fn bezout_residual_detects_perturbation() {
        let setup = four_tank_nominal();
        let mut fac = setup.fac.clone();
        fac.u.d[(0, 0)] += 0.01;
        let res = verify_bezout(&fac, 200).unwrap();
        assert!(res > 1e-3, "perturbed residual {res}");
    }

    #[test]
    fn factor_ratio_reproduces_plant() {
        // N M^{-1} must equal G_n on the unit circle
        let setup = four_tank_nominal();
        let m_inv = setup.fac.m.inverse().unwrap();
        let nm = ss::series(&m_inv, &setup.fac.n).unwrap();
        for i in 0..16 {
            let th = 2.0 * std::f64::consts::PI * (i as f64) / 16.0 + 0.05;
            let z = nalgebra::Complex::new(th.cos(), th.sin());
            let lhs = nm.eval(z).unwrap();
            let rhs = setup.gn.eval(z).unwrap();
            assert!((lhs - rhs).norm() < 1e-7);
        }
    }

    #[test]
    fn all_eight_factors_stable() {
        let setup = four_tank_nominal();
        let f = &setup.fac;
        for (name, sys) in [
            ("m", &f.m),
            ("n", &f.n),
            ("u", &f.u),
            ("v", &f.v),
            ("mt", &f.mt),
            ("nt", &f.nt),
            ("ut", &f.ut),
            ("vt", &f.vt),
        ] {
            assert!(ss::is_stable(sys, 1e-9), "{name} unstable");
        }
    }

    #[test]
    fn j_reduces_to_kn_at_zero_q() {
        let setup = four_tank_nominal();
        let j = build_j(&setup.fac, &setup.kn).unwrap();
        let kq = ss::lft_lower(&j, &zero_q(2, 2, 1.0)).unwrap();
        assert!(ss::impulse_distance(&kq, &setup.kn, 200) < 1e-9);
    }

    #[test]
    fn jg_reduces_to_gn_at_zero_s() {
        let setup = four_tank_nominal();
        let jg = build_jg(&setup.fac, &setup.gn).unwrap();
        let gs = ss::lft_upper(&jg, &zero_s(2, 2, 1.0)).unwrap();
        assert!(ss::impulse_distance(&gs, &setup.gn, 200) < 1e-9);
    }

    #[test]
    fn lft_and_product_forms_agree() {
        let setup = four_tank_nominal();
        let j = build_j(&setup.fac, &setup.kn).unwrap();
        let jg = build_jg(&setup.fac, &setup.gn).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..5 {
            // small parameters keep K(Q)/G(S) internally stable so impulse
            // responses of the two realizations can be compared directly
            let mut q = rand_sys(&mut rng, 3, 4, 2, 0.6);
            q.c *= 0.05;
            q.d *= 0.05;
            let k_lft = ss::lft_lower(&j, &q).unwrap();
            let k_prod = parameterize_controller(&setup.fac, &q).unwrap();
            assert!(ss::impulse_distance(&k_lft, &k_prod, 150) < 1e-7);

            // tiny S: the plant pole near the unit circle crosses it for
            // anything larger, making the impulse comparison ill conditioned
            let mut s = rand_sys(&mut rng, 3, 2, 4, 0.6);
            s.c *= 1e-3;
            s.d *= 1e-3;
            let g_lft = ss::lft_upper(&jg, &s).unwrap();
            let g_prod = parameterize_plant(&setup.fac, &s).unwrap();
            assert!(ss::impulse_distance(&g_lft, &g_prod, 150) < 1e-7);
        }
        // larger parameters: compare transfer matrices on the unit circle,
        // which is insensitive to internal stability of the realization
        for _ in 0..5 {
            let q = rand_sys(&mut rng, 3, 4, 2, 0.6);
            let k_lft = ss::lft_lower(&j, &q).unwrap();
            let k_prod = parameterize_controller(&setup.fac, &q).unwrap();
            let s = rand_sys(&mut rng, 3, 2, 4, 0.6);
            let g_lft = ss::lft_upper(&jg, &s).unwrap();
            let g_prod = parameterize_plant(&setup.fac, &s).unwrap();
            for i in 0..16 {
                let th = 2.0 * std::f64::consts::PI * (i as f64) / 16.0 + 0.07;
                let z = nalgebra::Complex::new(th.cos(), th.sin());
                let dk = (k_lft.eval(z).unwrap() - k_prod.eval(z).unwrap()).norm();
                assert!(dk < 1e-7, "controller forms differ by {dk}");
                let dg = (g_lft.eval(z).unwrap() - g_prod.eval(z).unwrap()).norm();
                assert!(dg < 1e-7, "plant forms differ by {dg}");
            }
        }
    }

    #[test]
    fn feedforward_gain_scalar_and_dc_property() {
        // scalar A=0.5, B=1, C=1, Lx=-0.5: dc of closed loop = 1, Kff = 1
        let kff = feedforward_gain(
            &Mat::from_row_slice(1, 1, &[0.5]),
            &Mat::identity(1, 1),
            &Mat::identity(1, 1),
            &Mat::from_row_slice(1, 1, &[-0.5]),
        )
        .unwrap();
        assert!((kff[(0, 0)] - 1.0).abs() < 1e-12);

        let setup = four_tank_nominal();
        let sys = &setup.sys;
        let kff = feedforward_gain(&sys.a, &sys.b, &sys.c, &setup.lx).unwrap();
        // closed loop x+ = (A + B Lx) x + B Kff r, y = C x has dc gain I
        let acl = &sys.a + &sys.b * &setup.lx;
        let cl = StateSpace::new(acl, &sys.b * &kff, sys.c.clone(), Mat::zeros(2, 2), 1.0);
        let dc = ss::dc_gain(&cl).unwrap();
        assert!((dc - Mat::identity(2, 2)).norm() < 1e-9);
    }

    #[test]
    fn yk_parameter_of_stable_pair() {
        // Gs = 0 gives Qs = Ks
        let mut rng = ChaCha8Rng::seed_from_u64(74);
        let ks = rand_sys(&mut rng, 2, 2, 2, 0.5);
        let gs0 = StateSpace::zero(2, 2, 1.0);
        let qs = yk_parameter_stable(&gs0, &ks).unwrap();
        assert!(ss::impulse_distance(&qs, &ks, 100) < 1e-12);

        // static scalar: Gs = Ks = 1 -> Qs = 1/2
        let one = StateSpace::identity(1, 1.0);
        let qs = yk_parameter_stable(&one, &one).unwrap();
        assert!((qs.d[(0, 0)] - 0.5).abs() < 1e-12);

        // random stable pair with small loop gain (the closed loop stays
        // stable, so the impulse comparison is well conditioned)
        for _ in 0..5 {
            let gs = rand_sys(&mut rng, 3, 2, 2, 0.5);
            let mut ks = rand_sys(&mut rng, 2, 2, 2, 0.4);
            ks.c *= 0.2;
            ks.d *= 0.2;
            let qs = yk_parameter_stable(&gs, &ks).unwrap();
            let t_direct = ss::feedback(
                &ss::series(&ks, &gs).unwrap(),
                &StateSpace::identity(2, 1.0),
                -1.0,
            )
            .unwrap();
            let t_param = ss::series(&qs, &gs).unwrap();
            assert!(ss::impulse_distance(&t_direct, &t_param, 120) < 1e-8);
        }
    }

    #[test]
    fn closed_loop_stable_for_random_stable_q() {
        let setup = four_tank_nominal();
        let blocks = setup.blocks();
        let mut rng = ChaCha8Rng::seed_from_u64(75);
        for _ in 0..50 {
            let nxq = rng.random_range(1..4);
            let rho = rng.random_range(0.1..0.9);
            let mut q = rand_sys(&mut rng, nxq, 4, 2, rho);
            // normalize to H2 norm <= 1
            let h2 = ss::h2_norm(&q).unwrap();
            if h2 > 1.0 {
                q.c /= h2;
                q.d /= h2;
            }
            let s = zero_s(2, 2, 1.0);
            let cl = assemble_closed_loop(&blocks.jgaug, &blocks.jaug, &q, &s).unwrap();
            assert!(ss::is_stable(&cl, 0.0), "loop unstable for random stable Q");
        }
    }

    #[test]
    fn assembled_loop_zero_parameters_track_reference_dc() {
        let setup = four_tank_nominal();
        let blocks = setup.blocks();
        let q = zero_q(2, 2, 1.0);
        let s = zero_s(2, 2, 1.0);
        let cl = assemble_closed_loop(&blocks.jgaug, &blocks.jaug, &q, &s).unwrap();
        // zero input -> zero output
        let zero_in: Vec<Vector> = (0..10).map(|_| Vector::zeros(4)).collect();
        for y in ss::step_response_sim(&cl, &zero_in) {
            assert!(y.norm() == 0.0);
        }
        // step r with the Kff path: offset-free steady state in y
        let dc = ss::dc_gain(&cl).unwrap();
        let r_to_y = dc.view((0, 0), (2, 2)).into_owned();
        assert!((r_to_y - Mat::identity(2, 2)).norm() < 1e-8);
    }

    #[test]
    fn reference_response_is_independent_of_q() {
        // the feedforward column cancels the reference inside the Q channel,
        // so Q reshapes only the disturbance response
        let setup = four_tank_nominal();
        let blocks = setup.blocks();
        let s0 = zero_s(2, 2, 1.0);
        let cl0 = assemble_closed_loop(&blocks.jgaug, &blocks.jaug, &zero_q(2, 2, 1.0), &s0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(76);
        for _ in 0..3 {
            let mut q = rand_sys(&mut rng, 3, 4, 2, 0.6);
            q.c *= 0.3;
            q.d *= 0.3;
            let cl = assemble_closed_loop(&blocks.jgaug, &blocks.jaug, &q, &s0).unwrap();
            let r_cols = [0usize, 1];
            let all_rows = [0usize, 1, 2, 3];
            let from_r0 = cl0.subsystem(&all_rows, &r_cols);
            let from_r = cl.subsystem(&all_rows, &r_cols);
            let d = ss::impulse_distance(&from_r, &from_r0, 200);
            assert!(d < 1e-7, "reference response moved by {d} under Q");
        }
    }

    #[test]
    fn assembled_disturbance_map_matches_direct_loop_simulation() {
        // step-by-step simulation of the raw observer/feedback loop with the
        // disturbance entering through E must reproduce the assembled map
        let setup = four_tank_nominal();
        let blocks = setup.blocks();
        let cl = assemble_closed_loop(
            &blocks.jgaug,
            &blocks.jaug,
            &zero_q(2, 2, 1.0),
            &zero_s(2, 2, 1.0),
        )
        .unwrap();
        let d_cols = [2usize, 3];
        let y_rows = [0usize, 1];
        let from_d = cl.subsystem(&y_rows, &d_cols);
        let steps = 120;
        let d_step = Vector::from_column_slice(&[1.0, -0.5]);
        let inputs: Vec<Vector> = (0..steps).map(|_| d_step.clone()).collect();
        let assembled = ss::step_response_sim(&from_d, &inputs);

        // direct loop: x+ = A x + B u + E d, u solved from the controller's
        // feedthrough loop, observer state advanced with the applied u
        let sys = &setup.sys;
        let kn = &setup.kn;
        let dku = kn.d.view((0, 2), (2, 2)).into_owned();
        let loop_mat = Mat::identity(2, 2) - dku;
        let mut x = Vector::zeros(4);
        let mut xk = Vector::zeros(4);
        for k in 0..steps {
            let y = &sys.c * &x;
            assert!((assembled[k].rows(0, 2) - &y).norm() < 1e-8, "step {k}");
            let rhs = &kn.c * &xk + kn.d.view((0, 0), (2, 2)).into_owned() * &y;
            let u = linalg::solve_linear(&loop_mat, &Mat::from_column_slice(2, 1, rhs.as_slice()))
                .unwrap();
            let u = Vector::from_column_slice(u.as_slice());
            let mut kin = Vector::zeros(4);
            kin.rows_mut(0, 2).copy_from(&y);
            kin.rows_mut(2, 2).copy_from(&u);
            xk = &kn.a * &xk + &kn.b * &kin;
            x = &sys.a * &x + &sys.b * &u + &setup.e * &d_step;
        }
    }

    #[test]
    fn dual_s_zero_for_nominal_plant() {
        let setup = four_tank_nominal();
        let s = dual_s_from_actual(&setup.fac, &setup.gn, &setup.kn).unwrap();
        let h = ss::impulse_response(&s, 100);
        let norm = h.iter().map(|m| m.norm()).fold(0.0, f64::max);
        assert!(
            norm <= 1e-7,
            "S for the nominal plant should vanish, got {norm}"
        );
    }

    #[test]
    fn dual_s_for_relinearized_plant_validates() {
        let setup = four_tank_nominal();
        let mut p = crate::fourtank::FourTankParams::default();
        p.h0_1 *= 1.1;
        p.h0_2 *= 1.1;
        p.h0_3 *= 1.1;
        p.h0_4 *= 1.1;
        let (sys2, _) = crate::fourtank::discrete_model(&p, 1.0).unwrap();
        let g_act = build_nominal_plant(&sys2.a, &sys2.b, &sys2.c);
        let s = dual_s_from_actual(&setup.fac, &g_act, &setup.kn).unwrap();
        assert!(ss::is_stable(&s, 0.0));
    }

    #[test]
    fn dual_s_rejects_destabilized_plant() {
        let setup = four_tank_nominal();
        // uncontrollable unstable pole at 1.05 breaks the factorization
        let mut a = Mat::zeros(5, 5);
        a.view_mut((0, 0), (4, 4)).copy_from(&setup.sys.a);
        a[(4, 4)] = 1.05;
        let mut b = Mat::zeros(5, 2);
        b.view_mut((0, 0), (4, 2)).copy_from(&setup.sys.b);
        let mut c = Mat::zeros(2, 5);
        c.view_mut((0, 0), (2, 4)).copy_from(&setup.sys.c);
        c[(0, 4)] = 1.0;
        let g_act = build_nominal_plant(&a, &b, &c);
        // extend F with a zero column: it cannot stabilize the new mode
        let mut f = Mat::zeros(2, 5);
        f.view_mut((0, 0), (2, 4)).copy_from(&setup.lx);
        let fac_bad = coprime_factorize(&g_act, &setup.kn, &f, &setup.fac.fc);
        assert!(fac_bad.is_err());
    }
}
