//! Shared helpers for unit tests.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::linalg::{spectral_radius, Mat};
use crate::ss::StateSpace;

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Random matrix rescaled to the requested spectral radius.
pub fn rand_stable(rng: &mut ChaCha8Rng, n: usize, rho: f64) -> Mat {
    let a = rand_mat(rng, n, n);
    let r = spectral_radius(&a).unwrap();
    if r < 1e-12 {
        return Mat::zeros(n, n);
    }
    a * (rho / r)
}

pub fn rand_sys(rng: &mut ChaCha8Rng, nx: usize, nu: usize, ny: usize, rho: f64) -> StateSpace {
    let a = rand_stable(rng, nx, rho);
    let b = rand_mat(rng, nx, nu);
    let c = rand_mat(rng, ny, nx);
    let d = rand_mat(rng, ny, nu);
    StateSpace::new(a, b, c, d, 1.0)
}

/// Everything the YK tests need from the nominal four-tank design.
pub struct FourTankNominal {
    pub sys: StateSpace,
    pub e: Mat,
    pub lx: Mat,
    pub kfx: Mat,
    pub kn: StateSpace,
    pub gn: StateSpace,
    pub fac: crate::youla::CoprimeFactors,
}

impl FourTankNominal {
    pub fn kff(&self) -> Mat {
        crate::youla::feedforward_gain(&self.sys.a, &self.sys.b, &self.sys.c, &self.lx).unwrap()
    }

    /// Disturbance model: the plant realization with B replaced by E,
    /// mirrored through the [y; u] output convention (zero feedthrough).
    pub fn gd(&self) -> StateSpace {
        let mut g = crate::youla::build_nominal_plant(&self.sys.a, &self.e, &self.sys.c);
        g.d = Mat::zeros(4, 2);
        g
    }

    pub fn blocks(&self) -> crate::youla::YkBlocks {
        crate::youla::YkBlocks::build(&self.fac, &self.kn, &self.gn, &self.kff(), &self.gd())
            .unwrap()
    }
}

pub fn four_tank_nominal() -> FourTankNominal {
    let (sys, e) =
        crate::fourtank::discrete_model(&crate::fourtank::FourTankParams::default(), 1.0).unwrap();
    let cfg = crate::mpc::MpcConfig::default_for(2, 2);
    let qp = crate::mpc::build_condensed(&sys, &cfg).unwrap();
    let gains = crate::mpc::unconstrained_gains(&sys, &qp).unwrap();
    let (qn, rn) = crate::kalman::default_noise(&e, 2, 0.01);
    let design = crate::kalman::stationary_gain(&sys.a, &sys.c, &qn, &rn).unwrap();
    let kn = crate::youla::build_nominal_controller(&sys.a, &sys.b, &sys.c, &gains.lx, &design.kfx);
    let gn = crate::youla::build_nominal_plant(&sys.a, &sys.b, &sys.c);
    let fac = crate::youla::coprime_factorize(&gn, &kn, &gains.lx, &Mat::zeros(4, 4)).unwrap();
    FourTankNominal {
        sys,
        e,
        lx: gains.lx,
        kfx: design.kfx,
        kn,
        gn,
        fac,
    }
}
