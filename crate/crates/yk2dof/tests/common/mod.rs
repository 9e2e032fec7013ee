//! Helpers shared by the integration suites.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use yk2dof::linalg::{self, Mat, Vector};
use yk2dof::qp::QpProblem;
use yk2dof::ss::StateSpace;

pub fn rand_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

#[allow(dead_code)]
pub fn rand_stable_sys(
    rng: &mut ChaCha8Rng,
    nx: usize,
    nu: usize,
    ny: usize,
    rho: f64,
) -> StateSpace {
    let a = rand_mat(rng, nx, nx);
    let r = linalg::spectral_radius(&a).unwrap();
    let a = if r < 1e-12 {
        Mat::zeros(nx, nx)
    } else {
        a * (rho / r)
    };
    StateSpace::new(
        a,
        rand_mat(rng, nx, nu),
        rand_mat(rng, ny, nx),
        rand_mat(rng, ny, nu),
        1.0,
    )
}

/// Brute-force optimum by enumerating every lower/upper active-set
/// assignment of the two-sided rows and solving the KKT equalities.
pub fn enumeration_optimum(prob: &QpProblem) -> Option<f64> {
    let n = prob.h.nrows();
    let m = prob.a.nrows();
    let tol = 1e-7;
    let mut best: Option<f64> = None;
    let total = 3usize.pow(m as u32);
    for code in 0..total {
        let mut c = code;
        let mut active: Vec<(usize, f64, bool)> = Vec::new();
        for i in 0..m {
            match c % 3 {
                1 => active.push((i, prob.lower[i], true)),
                2 => active.push((i, prob.upper[i], false)),
                _ => {}
            }
            c /= 3;
        }
        if active.len() > n {
            continue;
        }
        // skip assignments pinning an infinite bound
        if active.iter().any(|(_, b, _)| !b.is_finite()) {
            continue;
        }
        let k = active.len();
        let mut kkt = Mat::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&prob.h);
        for (row, (i, _, _)) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(n + row, j)] = prob.a[(*i, j)];
                kkt[(j, n + row)] = prob.a[(*i, j)];
            }
        }
        let mut rhs = Vector::zeros(n + k);
        for j in 0..n {
            rhs[j] = -prob.g[j];
        }
        for (row, (_, b, _)) in active.iter().enumerate() {
            rhs[n + row] = *b;
        }
        let sol =
            match linalg::solve_linear(&kkt, &Mat::from_column_slice(n + k, 1, rhs.as_slice())) {
                Ok(s) => s,
                Err(_) => continue,
            };
        let v = Vector::from_fn(n, |i, _| sol[(i, 0)]);
        let mut ok = true;
        for (row, (_, _, is_lower)) in active.iter().enumerate() {
            let dual = sol[(n + row, 0)];
            if (*is_lower && dual > tol) || (!is_lower && dual < -tol) {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let av = &prob.a * &v;
        for i in 0..m {
            if av[i] < prob.lower[i] - tol || av[i] > prob.upper[i] + tol {
                ok = false;
                break;
            }
        }
        if !ok {
            continue;
        }
        let f = prob.objective(&v);
        best = Some(best.map_or(f, |b: f64| b.min(f)));
    }
    best
}
