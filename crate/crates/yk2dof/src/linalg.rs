//! Dense real-matrix kernels and matrix-equation solvers.
//!
//! Everything downstream works on [`Mat`] (row-major semantics via
//! `nalgebra::DMatrix`). The solvers here are deliberately small and
//! residual-checkable: LU with partial pivoting, Householder least squares,
//! a Smith squared-doubling Lyapunov solver, a structure-preserving doubling
//! Riccati solver and a Pade(6) scaling-and-squaring matrix exponential.
//! Eigenvalues go through a real Schur decomposition.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};

/// Dense real matrix, the common currency of the crate.
pub type Mat = DMatrix<f64>;
/// Dense real column vector.
pub type Vector = DVector<f64>;

/// Centralized tolerances so solvers and tests agree.
pub mod tol {
    /// Relative pivot threshold for LU elimination.
    pub const PIVOT_REL: f64 = 1e-12;
    /// Relative rank threshold on QR diagonals.
    pub const QR_RANK_REL: f64 = 1e-10;
    /// Convergence tolerance of the Riccati doubling iteration.
    pub const DARE_CONVERGENCE: f64 = 1e-14;
    /// Iteration cap of the Riccati doubling iteration.
    pub const DARE_MAX_DOUBLINGS: usize = 100;
    /// Required relative DARE residual on return.
    pub const DARE_RESIDUAL: f64 = 1e-9;
    /// Default stability margin: stable means spectral radius < 1 - margin.
    pub const STABILITY_MARGIN: f64 = 1e-9;
    /// Reciprocal-condition threshold for well-posedness of algebraic loops.
    pub const WELL_POSED_RCOND: f64 = 1e-10;
}

fn assert_square(a: &Mat) {
    assert_eq!(a.nrows(), a.ncols(), "matrix must be square");
}

/// Frobenius norm.
pub fn fro(a: &Mat) -> f64 {
    a.norm()
}

/// True if every entry is finite.
pub fn all_finite(a: &Mat) -> bool {
    a.iter().all(|x| x.is_finite())
}

/// In-place LU factorization with partial pivoting.
///
/// Returns the combined L/U factor and the row permutation applied to the
/// right-hand side. Fails when a pivot falls below `PIVOT_REL * ||A||_F`.
struct Lu {
    lu: Mat,
    perm: Vec<usize>,
    /// Crude reciprocal-condition estimate from the U diagonal.
    rcond_est: f64,
}

fn lu_factor(a: &Mat) -> Result<Lu> {
    assert_square(a);
    let n = a.nrows();
    let norm_a = fro(a);
    let threshold = tol::PIVOT_REL * norm_a;
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if !(best > threshold) {
            return Err(Error::SingularMatrix {
                pivot: best,
                threshold,
            });
        }
        if p != k {
            lu.swap_rows(p, k);
            perm.swap(p, k);
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let f = lu[(i, k)] / pivot;
            lu[(i, k)] = f;
            for j in (k + 1)..n {
                let v = lu[(k, j)];
                lu[(i, j)] -= f * v;
            }
        }
    }
    let mut dmin = f64::INFINITY;
    let mut dmax = 0.0f64;
    for k in 0..n {
        let d = lu[(k, k)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    let rcond_est = if n == 0 {
        1.0
    } else {
        dmin / dmax.max(f64::MIN_POSITIVE)
    };
    Ok(Lu {
        lu,
        perm,
        rcond_est,
    })
}

impl Lu {
    fn solve_mat(&self, b: &Mat) -> Mat {
        let n = self.lu.nrows();
        assert_eq!(b.nrows(), n, "rhs row count must match");
        let mut x = Mat::zeros(n, b.ncols());
        for i in 0..n {
            x.set_row(i, &b.row(self.perm[i]));
        }
        // forward substitution, unit lower triangular
        for k in 0..n {
            for i in (k + 1)..n {
                let f = self.lu[(i, k)];
                if f != 0.0 {
                    for j in 0..x.ncols() {
                        let v = x[(k, j)];
                        x[(i, j)] -= f * v;
                    }
                }
            }
        }
        // back substitution
        for k in (0..n).rev() {
            let d = self.lu[(k, k)];
            for j in 0..x.ncols() {
                x[(k, j)] /= d;
            }
            for i in 0..k {
                let f = self.lu[(i, k)];
                if f != 0.0 {
                    for j in 0..x.ncols() {
                        let v = x[(k, j)];
                        x[(i, j)] -= f * v;
                    }
                }
            }
        }
        x
    }
}

/// Solve `A X = B` for square `A`.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    Ok(lu_factor(a)?.solve_mat(b))
}

/// Solve `A X = B` and also report a crude reciprocal-condition estimate of `A`.
pub(crate) fn solve_linear_rcond(a: &Mat, b: &Mat) -> Result<(Mat, f64)> {
    let lu = lu_factor(a)?;
    let rc = lu.rcond_est;
    Ok((lu.solve_mat(b), rc))
}

/// Inverse of a square matrix.
pub fn inv(a: &Mat) -> Result<Mat> {
    solve_linear(a, &Mat::identity(a.nrows(), a.nrows()))
}

/// Eigenvalues of a square real matrix: balance, reduce to upper Hessenberg
/// by stabilized elimination, then Francis double-shift QR with exceptional
/// shifts (the classic `hqr` sequence).
pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex<f64>>> {
    assert_square(a);
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !all_finite(a) {
        return Err(Error::NoConvergence);
    }
    let mut h = a.clone();
    balance(&mut h);
    hessenberg(&mut h);
    hqr(&mut h)
}

/// Diagonal similarity scaling to even out row/column norms.
fn balance(a: &mut Mat) {
    let n = a.nrows();
    const RADIX: f64 = 2.0;
    let sqrdx = RADIX * RADIX;
    loop {
        let mut done = true;
        for i in 0..n {
            let mut r = 0.0;
            let mut c = 0.0;
            for j in 0..n {
                if j != i {
                    c += a[(j, i)].abs();
                    r += a[(i, j)].abs();
                }
            }
            if c != 0.0 && r != 0.0 {
                let mut g = r / RADIX;
                let mut f = 1.0;
                let s = c + r;
                let mut c_var = c;
                while c_var < g {
                    f *= RADIX;
                    c_var *= sqrdx;
                }
                g = r * RADIX;
                while c_var > g {
                    f /= RADIX;
                    c_var /= sqrdx;
                }
                if (c_var + r) / f < 0.95 * s {
                    done = false;
                    let g = 1.0 / f;
                    for j in 0..n {
                        a[(i, j)] *= g;
                    }
                    for j in 0..n {
                        a[(j, i)] *= f;
                    }
                }
            }
        }
        if done {
            break;
        }
    }
}

/// Reduction to upper Hessenberg form by Gaussian elimination with pivoting;
/// entries below the first subdiagonal are cleared afterwards.
fn hessenberg(a: &mut Mat) {
    let n = a.nrows();
    for m in 1..n.saturating_sub(1) {
        let mut x = 0.0f64;
        let mut pivot = m;
        for j in m..n {
            if a[(j, m - 1)].abs() > x.abs() {
                x = a[(j, m - 1)];
                pivot = j;
            }
        }
        if pivot != m {
            a.swap_rows(pivot, m);
            a.swap_columns(pivot, m);
        }
        if x != 0.0 {
            for i in (m + 1)..n {
                let mut y = a[(i, m - 1)];
                if y != 0.0 {
                    y /= x;
                    a[(i, m - 1)] = y;
                    for j in m..n {
                        let v = a[(m, j)];
                        a[(i, j)] -= y * v;
                    }
                    for j in 0..n {
                        let v = a[(j, i)];
                        a[(j, m)] += y * v;
                    }
                }
            }
        }
    }
    for i in 2..n {
        for j in 0..(i - 1) {
            a[(i, j)] = 0.0;
        }
    }
}

/// Francis double-shift QR on an upper Hessenberg matrix, eigenvalues only.
#[allow(clippy::needless_range_loop)]
fn hqr(a: &mut Mat) -> Result<Vec<Complex<f64>>> {
    let n = a.nrows();
    let mut eig = vec![Complex::new(0.0, 0.0); n];
    let mut anorm = 0.0;
    for i in 0..n {
        for j in i.saturating_sub(1)..n {
            anorm += a[(i, j)].abs();
        }
    }
    if anorm == 0.0 {
        return Ok(eig);
    }
    let eps = f64::EPSILON;
    let mut t = 0.0;
    let mut nn = n as isize - 1;
    while nn >= 0 {
        let mut its = 0;
        loop {
            // locate a negligible subdiagonal element
            let mut l = nn;
            while l >= 1 {
                let s =
                    a[(l as usize - 1, l as usize - 1)].abs() + a[(l as usize, l as usize)].abs();
                let s = if s == 0.0 { anorm } else { s };
                if a[(l as usize, l as usize - 1)].abs() <= eps * s {
                    a[(l as usize, l as usize - 1)] = 0.0;
                    break;
                }
                l -= 1;
            }
            let x = a[(nn as usize, nn as usize)];
            if l == nn {
                eig[nn as usize] = Complex::new(x + t, 0.0);
                nn -= 1;
                break;
            }
            let y = a[(nn as usize - 1, nn as usize - 1)];
            let w = a[(nn as usize, nn as usize - 1)] * a[(nn as usize - 1, nn as usize)];
            if l == nn - 1 {
                let p = 0.5 * (y - x);
                let q = p * p + w;
                let z = q.abs().sqrt();
                let x_sh = x + t;
                if q >= 0.0 {
                    let z = p + z.copysign(p);
                    eig[nn as usize - 1] = Complex::new(x_sh + z, 0.0);
                    eig[nn as usize] = if z != 0.0 {
                        Complex::new(x_sh - w / z, 0.0)
                    } else {
                        Complex::new(x_sh + z, 0.0)
                    };
                } else {
                    eig[nn as usize] = Complex::new(x_sh + p, z);
                    eig[nn as usize - 1] = Complex::new(x_sh + p, -z);
                }
                nn -= 2;
                break;
            }
            if its == 30 {
                return Err(Error::NoConvergence);
            }
            let (mut x, mut y, mut w) = (x, y, w);
            if its == 10 || its == 20 {
                // exceptional shift
                t += x;
                for i in 0..=nn as usize {
                    a[(i, i)] -= x;
                }
                let s = a[(nn as usize, nn as usize - 1)].abs()
                    + a[(nn as usize - 1, nn as usize - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            its += 1;
            // find two consecutive small subdiagonals
            let mut m = nn - 2;
            let (mut p, mut q, mut r) = (0.0, 0.0, 0.0);
            while m >= l {
                let mu = m as usize;
                let z = a[(mu, mu)];
                let rr = x - z;
                let ss = y - z;
                p = (rr * ss - w) / a[(mu + 1, mu)] + a[(mu, mu + 1)];
                q = a[(mu + 1, mu + 1)] - z - rr - ss;
                r = a[(mu + 2, mu + 1)];
                let scale = p.abs() + q.abs() + r.abs();
                if scale != 0.0 {
                    p /= scale;
                    q /= scale;
                    r /= scale;
                }
                if m == l {
                    break;
                }
                let u = a[(mu, mu - 1)].abs() * (q.abs() + r.abs());
                let v = p.abs() * (a[(mu - 1, mu - 1)].abs() + z.abs() + a[(mu + 1, mu + 1)].abs());
                if u <= eps * v {
                    break;
                }
                m -= 1;
            }
            let m = m.max(l) as usize;
            let nnu = nn as usize;
            for i in (m + 2)..=nnu {
                a[(i, i - 2)] = 0.0;
            }
            for i in (m + 3)..=nnu {
                a[(i, i - 3)] = 0.0;
            }
            // double QR sweep over rows m..nn
            for k in m..nnu {
                let mut x_sc = 0.0;
                if k != m {
                    p = a[(k, k - 1)];
                    q = a[(k + 1, k - 1)];
                    r = if k != nnu - 1 { a[(k + 2, k - 1)] } else { 0.0 };
                    x_sc = p.abs() + q.abs() + r.abs();
                    if x_sc != 0.0 {
                        p /= x_sc;
                        q /= x_sc;
                        r /= x_sc;
                    }
                }
                let s = (p * p + q * q + r * r).sqrt().copysign(p);
                if s == 0.0 {
                    continue;
                }
                if k == m {
                    if l as usize != m {
                        a[(k, k - 1)] = -a[(k, k - 1)];
                    }
                } else {
                    a[(k, k - 1)] = -s * x_sc;
                }
                p += s;
                let x_h = p / s;
                let y_h = q / s;
                let z_h = r / s;
                q /= p;
                r /= p;
                for j in k..=nnu {
                    let mut pp = a[(k, j)] + q * a[(k + 1, j)];
                    if k != nnu - 1 {
                        pp += r * a[(k + 2, j)];
                        a[(k + 2, j)] -= pp * z_h;
                    }
                    a[(k + 1, j)] -= pp * y_h;
                    a[(k, j)] -= pp * x_h;
                }
                let mmin = if nnu < k + 3 { nnu } else { k + 3 };
                for i in (l as usize)..=mmin {
                    let mut pp = x_h * a[(i, k)] + y_h * a[(i, k + 1)];
                    if k != nnu - 1 {
                        pp += z_h * a[(i, k + 2)];
                        a[(i, k + 2)] -= pp * r;
                    }
                    a[(i, k + 1)] -= pp * q;
                    a[(i, k)] -= pp;
                }
            }
        }
    }
    Ok(eig)
}

/// Largest eigenvalue magnitude; 0 for an empty matrix.
pub fn spectral_radius(a: &Mat) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Solve the discrete Lyapunov equation `P = A P A^T + Q` by Smith
/// squared-doubling: `P_{k+1} = P_k + X_k P_k X_k^T`, `X_{k+1} = X_k^2`.
pub fn solve_dlyap(a: &Mat, q: &Mat) -> Result<Mat> {
    assert_square(a);
    assert_eq!(a.nrows(), q.nrows());
    assert_eq!(q.nrows(), q.ncols());
    let rho = spectral_radius(a)?;
    if rho >= 1.0 - tol::STABILITY_MARGIN {
        return Err(Error::UnstableA(rho));
    }
    let mut p = symmetrize(q);
    let mut x = a.clone();
    for _ in 0..128 {
        let term = &x * &p * x.transpose();
        let tn = term.norm();
        p += term;
        p = symmetrize(&p);
        if tn <= 1e-17 * p.norm() + f64::MIN_POSITIVE {
            break;
        }
        x = &x * &x;
        if !all_finite(&x) {
            return Err(Error::UnstableA(rho));
        }
    }
    Ok(p)
}

fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Residual `||A^T P A - P - A^T P B (R + B^T P B)^{-1} B^T P A + Q||_F`.
pub fn dare_residual(a: &Mat, b: &Mat, q: &Mat, r: &Mat, p: &Mat) -> Result<f64> {
    let atpa = a.transpose() * p * a;
    let btpb = r + b.transpose() * p * b;
    let btpa = b.transpose() * p * a;
    let mid = a.transpose() * p * b * solve_linear(&btpb, &btpa)?;
    Ok((atpa - p - mid + q).norm())
}

/// Solve the DARE `P = A^T P A - A^T P B (R + B^T P B)^{-1} B^T P A + Q`
/// by the structure-preserving doubling algorithm.
///
/// Returns the stabilizing solution; the closed loop
/// `A - B (R + B^T P B)^{-1} B^T P A` is certified stable before returning.
pub fn solve_dare(a: &Mat, b: &Mat, q: &Mat, r: &Mat) -> Result<Mat> {
    assert_square(a);
    assert_eq!(b.nrows(), a.nrows());
    assert_eq!(q.nrows(), a.nrows());
    assert_eq!(r.nrows(), b.ncols());
    let n = a.nrows();
    let eye = Mat::identity(n, n);

    // G0 = B R^-1 B^T
    let rinv_bt = solve_linear(r, &b.transpose())
        .map_err(|_| Error::NoStabilizingSolution("R is singular"))?;
    let mut g = symmetrize(&(b * rinv_bt));
    let mut h = symmetrize(q);
    let mut e = a.clone();

    let mut converged = false;
    for _ in 0..tol::DARE_MAX_DOUBLINGS {
        let w = &eye + &g * &h;
        let winv_e = solve_linear(&w, &e)
            .map_err(|_| Error::NoStabilizingSolution("doubling iteration broke down"))?;
        let winv_g_et = solve_linear(&w, &(&g * e.transpose()))
            .map_err(|_| Error::NoStabilizingSolution("doubling iteration broke down"))?;
        let e_next = &e * &winv_e;
        let g_next = symmetrize(&(&g + &e * winv_g_et));
        let h_next = symmetrize(&(&h + e.transpose() * &h * &winv_e));
        if !(all_finite(&e_next) && all_finite(&g_next) && all_finite(&h_next)) {
            return Err(Error::NoStabilizingSolution("iteration diverged"));
        }
        let delta = (&h_next - &h).norm();
        e = e_next;
        g = g_next;
        h = h_next;
        if delta <= tol::DARE_CONVERGENCE * h.norm().max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoStabilizingSolution("doubling did not converge"));
    }
    let p = h;

    // Certify: closed loop stable and residual small.
    let btpb = r + b.transpose() * &p * b;
    let btpa = b.transpose() * &p * a;
    let k = solve_linear(&btpb, &btpa)
        .map_err(|_| Error::NoStabilizingSolution("R + B^T P B singular"))?;
    let acl = a - b * &k;
    let rho = spectral_radius(&acl)?;
    if rho >= 1.0 {
        return Err(Error::NoStabilizingSolution("closed loop unstable"));
    }
    let res = dare_residual(a, b, q, r, &p)?;
    if res > tol::DARE_RESIDUAL * (1.0 + p.norm()) {
        return Err(Error::NoStabilizingSolution("residual above tolerance"));
    }
    Ok(p)
}

/// Matrix exponential by scaling and squaring with a Pade(6) approximant.
pub fn expm(m: &Mat) -> Result<Mat> {
    assert_square(m);
    if !all_finite(m) {
        return Err(Error::Overflow(f64::INFINITY));
    }
    let n = m.nrows();
    if n == 0 {
        return Ok(Mat::zeros(0, 0));
    }
    let norm = m.camax(); // max |entry|, cheap scaling estimate
    let mut s: i32 = 0;
    if norm > 0.5 {
        s = (norm / 0.5).log2().ceil() as i32;
    }
    if s > 64 {
        return Err(Error::Overflow(norm));
    }
    let a = m / 2f64.powi(s);

    // Pade(6,6): c_k = (12-k)! 6! / (12! k! (6-k)!)
    const C: [f64; 7] = [
        1.0,
        0.5,
        5.0 / 44.0,
        1.0 / 66.0,
        1.0 / 792.0,
        1.0 / 15840.0,
        1.0 / 665280.0,
    ];
    let eye = Mat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let odd = &a * (&eye * C[1] + &a2 * C[3] + &a4 * C[5]);
    let even = &eye * C[0] + &a2 * C[2] + &a4 * C[4] + &a4 * &a2 * C[6];
    let num = &even + &odd;
    let den = &even - &odd;
    let mut r = solve_linear(&den, &num).map_err(|_| Error::Overflow(norm))?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

/// Least-squares solution of `A X = B` by Householder QR.
///
/// `A` must have full column rank; a small diagonal of `R` raises
/// [`Error::RankDeficient`].
pub fn lstsq(a: &Mat, b: &Mat) -> Result<Mat> {
    let m = a.nrows();
    let n = a.ncols();
    assert!(m >= n, "lstsq needs a tall (or square) matrix");
    assert_eq!(b.nrows(), m);
    let norm_a = fro(a);
    let mut qr = a.clone();
    let mut rhs = b.clone();
    // Householder sweep applied to both A and B.
    for k in 0..n {
        let mut alpha = 0.0;
        for i in k..m {
            alpha += qr[(i, k)] * qr[(i, k)];
        }
        alpha = alpha.sqrt();
        if alpha == 0.0 {
            return Err(Error::RankDeficient);
        }
        if qr[(k, k)] > 0.0 {
            alpha = -alpha;
        }
        let mut v = DVector::zeros(m - k);
        for i in k..m {
            v[i - k] = qr[(i, k)];
        }
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > 0.0 {
            let apply = |mat: &mut Mat| {
                for j in 0..mat.ncols() {
                    let mut dot = 0.0;
                    for i in k..mat.nrows() {
                        dot += v[i - k] * mat[(i, j)];
                    }
                    let f = 2.0 * dot / vnorm2;
                    for i in k..mat.nrows() {
                        mat[(i, j)] -= f * v[i - k];
                    }
                }
            };
            apply(&mut qr);
            apply(&mut rhs);
        }
        qr[(k, k)] = alpha;
        if qr[(k, k)].abs() < tol::QR_RANK_REL * norm_a {
            return Err(Error::RankDeficient);
        }
    }
    // Back substitution on the leading n x n triangle.
    let mut x = Mat::zeros(n, b.ncols());
    for j in 0..b.ncols() {
        for k in (0..n).rev() {
            let mut v = rhs[(k, j)];
            for i in (k + 1)..n {
                v -= qr[(k, i)] * x[(i, j)];
            }
            x[(k, j)] = v / qr[(k, k)];
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::test_util::{rand_mat, rand_stable};
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solve_identity_and_diagonal() {
        let a = Mat::identity(2, 2);
        let b = Mat::from_row_slice(2, 1, &[3.0, 4.0]);
        assert_eq!(solve_linear(&a, &b).unwrap(), b);

        let a = Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let x = solve_linear(&a, &Mat::identity(2, 2)).unwrap();
        assert!((x - Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.25])).norm() < 1e-15);
    }

    #[test]
    fn solve_residual_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let a = rand_mat(&mut rng, 8, 8) + Mat::identity(8, 8) * 4.0;
            let b = rand_mat(&mut rng, 8, 3);
            let x = solve_linear(&a, &b).unwrap();
            let res = (&a * &x - &b).norm();
            assert!(res <= 1e-10 * (1.0 + b.norm()), "residual {res}");
        }
    }

    #[test]
    fn solve_rejects_singular() {
        let a = Mat::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let b = Mat::identity(2, 2);
        assert!(matches!(
            solve_linear(&a, &b),
            Err(Error::SingularMatrix { .. })
        ));
    }

    #[test]
    fn eigenvalues_diagonal_and_rotation() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.2]);
        let mut ev: Vec<f64> = eigenvalues(&a).unwrap().iter().map(|l| l.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 0.2).abs() < 1e-12 && (ev[1] - 0.5).abs() < 1e-12);

        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let ev = eigenvalues(&a).unwrap();
        let mut ims: Vec<f64> = ev.iter().map(|l| l.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-12 && (ims[1] - 1.0).abs() < 1e-12);
        assert!(ev.iter().all(|l| l.re.abs() < 1e-12));
    }

    #[test]
    fn eigenvalue_trace_and_det_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [3usize, 5, 8] {
            for _ in 0..10 {
                let a = rand_mat(&mut rng, n, n);
                let ev = eigenvalues(&a).unwrap();
                let sum: Complex<f64> = ev.iter().sum();
                assert!((sum.re - a.trace()).abs() < 1e-9 * (1.0 + a.trace().abs()));
                assert!(sum.im.abs() < 1e-9);
                let prod: Complex<f64> = ev.iter().product();
                let det = a.determinant();
                assert!((prod.re - det).abs() < 1e-9 * (1.0 + det.abs()));
            }
        }
    }

    #[test]
    fn eigenvalues_cross_check_against_nalgebra() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for n in [2usize, 4, 6, 8] {
            for _ in 0..10 {
                let a = rand_mat(&mut rng, n, n);
                let mut mine: Vec<Complex<f64>> = eigenvalues(&a).unwrap();
                let mut theirs: Vec<Complex<f64>> =
                    a.clone().complex_eigenvalues().iter().copied().collect();
                let key = |l: &Complex<f64>| (l.re, l.im);
                mine.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
                theirs.sort_by(|a, b| key(a).partial_cmp(&key(b)).unwrap());
                for (m, t) in mine.iter().zip(&theirs) {
                    assert!((m - t).norm() < 1e-8, "{m} vs {t}");
                }
            }
        }
    }

    #[test]
    fn eigenvalues_handle_highly_structured_matrices() {
        // nilpotent shift, repeated zeros
        let mut a = Mat::zeros(12, 12);
        for i in 1..12 {
            a[(i, i - 1)] = 1.0;
        }
        let ev = eigenvalues(&a).unwrap();
        assert!(ev.iter().all(|l| l.norm() < 1e-8));

        // block diagonal with identical blocks
        let mut b = Mat::zeros(8, 8);
        for k in 0..4 {
            b[(2 * k, 2 * k)] = 0.3;
            b[(2 * k, 2 * k + 1)] = 1.0;
            b[(2 * k + 1, 2 * k)] = -1.0;
            b[(2 * k + 1, 2 * k + 1)] = 0.3;
        }
        let ev = eigenvalues(&b).unwrap();
        for l in &ev {
            assert!((l.re - 0.3).abs() < 1e-8 && (l.im.abs() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn spectral_radius_cases() {
        assert_eq!(spectral_radius(&Mat::zeros(3, 3)).unwrap(), 0.0);
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, -0.9]);
        assert!((spectral_radius(&a).unwrap() - 0.9).abs() < 1e-12);
        // companion of z^2 - z + 0.25 = (z - 0.5)^2
        let a = Mat::from_row_slice(2, 2, &[0.0, -0.25, 1.0, 1.0]);
        assert!((spectral_radius(&a).unwrap() - 0.5).abs() < 1e-7);
    }

    #[test]
    fn dlyap_trivial_and_scalar() {
        let p = solve_dlyap(&Mat::zeros(2, 2), &Mat::identity(2, 2)).unwrap();
        assert!((p - Mat::identity(2, 2)).norm() < 1e-14);

        let a = Mat::from_row_slice(1, 1, &[0.5]);
        let q = Mat::from_row_slice(1, 1, &[1.0]);
        let p = solve_dlyap(&a, &q).unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn dlyap_residual_and_symmetry_on_random_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(2..7);
            let rho = 0.3 + 0.6 * rng.random_range(0.0..1.0);
            let a = rand_stable(&mut rng, n, rho);
            let m = rand_mat(&mut rng, n, n);
            let q = &m * m.transpose();
            let p = solve_dlyap(&a, &q).unwrap();
            assert!((&p - p.transpose()).norm() < 1e-12 * p.norm().max(1.0));
            let res = (&p - &a * &p * a.transpose() - &q).norm();
            assert!(res <= 1e-10 * q.norm().max(1e-30), "residual {res}");
        }
    }

    #[test]
    fn dlyap_rejects_unstable() {
        let a = Mat::from_row_slice(1, 1, &[1.0]);
        assert!(matches!(
            solve_dlyap(&a, &Mat::identity(1, 1)),
            Err(Error::UnstableA(_))
        ));
    }

    #[test]
    fn dare_scalar_cases() {
        // A = 0 forces P = Q.
        let z = Mat::from_row_slice(1, 1, &[0.0]);
        let one = Mat::from_row_slice(1, 1, &[1.0]);
        let p = solve_dare(&z, &one, &one, &one).unwrap();
        assert!((p[(0, 0)] - 1.0).abs() < 1e-12);

        // A = B = Q = R = 1: P = P - P^2/(1+P) + 1 => P^2 - P - 1 = 0.
        let p = solve_dare(&one, &one, &one, &one).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p[(0, 0)] - golden).abs() < 1e-10);
    }

    #[test]
    fn dare_random_instances_residual_and_stability() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.random_range(2..6);
            let m = rng.random_range(1..3);
            let a = rand_mat(&mut rng, n, n) * 1.2;
            let b = rand_mat(&mut rng, n, m);
            let qs = rand_mat(&mut rng, n, n);
            let q = &qs * qs.transpose() + Mat::identity(n, n) * 1e-6;
            let r = Mat::identity(m, m);
            let p = match solve_dare(&a, &b, &q, &r) {
                Ok(p) => p,
                // rare: random (A, B) pair effectively unstabilizable
                Err(_) => continue,
            };
            let res = dare_residual(&a, &b, &q, &r, &p).unwrap();
            assert!(res <= 1e-9 * (1.0 + p.norm()), "residual {res}");
            let btpb = &r + b.transpose() * &p * &b;
            let k = solve_linear(&btpb, &(b.transpose() * &p * &a)).unwrap();
            assert!(spectral_radius(&(&a - &b * k)).unwrap() < 1.0);
        }
    }

    #[test]
    fn expm_trivial_and_diagonal() {
        let r = expm(&Mat::zeros(3, 3)).unwrap();
        assert!((r - Mat::identity(3, 3)).norm() < 1e-15);
        let a = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let r = expm(&a).unwrap();
        assert!((r[(0, 0)] - 1f64.exp()).abs() < 1e-14);
        assert!((r[(1, 1)] - (-1f64).exp()).abs() < 1e-14);
    }

    #[test]
    fn expm_matches_limit_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = rand_mat(&mut rng, 4, 4);
        let m = &m / m.norm();
        let e = expm(&m).unwrap();
        // (I + M/2^24)^(2^24) by repeated squaring
        let mut p = Mat::identity(4, 4) + &m / 2f64.powi(24);
        for _ in 0..24 {
            p = &p * &p;
        }
        assert!((e - p).norm() < 1e-6);
    }

    #[test]
    fn expm_overflows_on_huge_norm() {
        let m = Mat::identity(2, 2) * 1e30;
        assert!(matches!(expm(&m), Err(Error::Overflow(_))));
    }

    #[test]
    fn expm_inverse_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let m = rand_mat(&mut rng, 4, 4);
            let m = &m * (2.0 / m.norm().max(1e-9));
            let prod = expm(&m).unwrap() * expm(&(-&m)).unwrap();
            assert!((prod - Mat::identity(4, 4)).norm() < 1e-9);
        }
    }

    #[test]
    fn lstsq_identity_and_mean() {
        let b = Mat::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let x = lstsq(&Mat::identity(3, 3), &b).unwrap();
        assert!((x - &b).norm() < 1e-14);

        let a = Mat::from_row_slice(2, 1, &[1.0, 1.0]);
        let b = Mat::from_row_slice(2, 1, &[0.0, 2.0]);
        let x = lstsq(&a, &b).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lstsq_stationarity_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let a = rand_mat(&mut rng, 20, 5);
            let b = rand_mat(&mut rng, 20, 2);
            let x = lstsq(&a, &b).unwrap();
            let grad = a.transpose() * (&a * &x - &b);
            let scale = (a.transpose() * &b).norm();
            assert!(
                grad.norm() <= 1e-8 * scale.max(1e-30),
                "grad {}",
                grad.norm()
            );
        }
    }

    #[test]
    fn lstsq_rejects_rank_deficient() {
        let a = Mat::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]);
        let b = Mat::zeros(3, 1);
        assert!(matches!(lstsq(&a, &b), Err(Error::RankDeficient)));
    }
}
