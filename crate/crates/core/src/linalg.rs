//! Dense complex linear-algebra helpers on top of `faer`.
//!
//! Everything here runs sequentially; parallelism lives at the trajectory
//! level so that results do not depend on the worker count.

use faer::linalg::matmul::matmul;
use faer::linalg::solvers::Solve;
use faer::traits::Conjugate;
use faer::{Accum, Mat, MatMut, MatRef, Par, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = Mat<C64>;

pub const ONE: C64 = C64::new(1.0, 0.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// `dst = lhs * rhs`.
pub fn matmul_into<L, R>(dst: MatMut<'_, C64>, lhs: MatRef<'_, L>, rhs: MatRef<'_, R>)
where
    L: Conjugate<Canonical = C64>,
    R: Conjugate<Canonical = C64>,
{
    matmul(dst, Accum::Replace, lhs, rhs, ONE, Par::Seq);
}

pub fn mul<L, R>(lhs: MatRef<'_, L>, rhs: MatRef<'_, R>) -> CMat
where
    L: Conjugate<Canonical = C64>,
    R: Conjugate<Canonical = C64>,
{
    let mut out = CMat::zeros(lhs.nrows(), rhs.ncols());
    matmul_into(out.as_mut(), lhs, rhs);
    out
}

pub fn scale(m: MatRef<'_, C64>, s: C64) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

pub fn adjoint(m: MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.ncols(), m.nrows(), |i, j| m[(j, i)].conj())
}

pub fn conj(m: MatRef<'_, C64>) -> CMat {
    CMat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].conj())
}

/// Largest entrywise modulus of `a - b`.
pub fn max_abs_diff(a: MatRef<'_, C64>, b: MatRef<'_, C64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    worst
}

/// Largest entrywise modulus of `m† m - 1`.
pub fn unitarity_deviation(m: MatRef<'_, C64>) -> f64 {
    let gram = mul(m.adjoint(), m);
    let id = CMat::identity(m.ncols(), m.ncols());
    max_abs_diff(gram.as_ref(), id.as_ref())
}

/// Largest entrywise modulus of `m - m†`.
pub fn hermiticity_deviation(m: MatRef<'_, C64>) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..=j.min(m.nrows() - 1) {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Induced 1-norm (max column sum).
pub fn one_norm(m: MatRef<'_, C64>) -> f64 {
    (0..m.ncols())
        .map(|j| (0..m.nrows()).map(|i| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn hermitian_eigenvalues(m: MatRef<'_, C64>) -> Result<Vec<f64>> {
    m.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Linalg(format!("hermitian eigensolve: {e:?}")))
}

/// `exp(factor * h)` for Hermitian `h`, through its eigendecomposition.
pub fn expm_hermitian(h: MatRef<'_, C64>, factor: C64) -> Result<CMat> {
    let n = h.nrows();
    let evd = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("hermitian eigensolve: {e:?}")))?;
    let vecs = evd.U();
    let vals = evd.S().column_vector();
    let scaled = CMat::from_fn(n, n, |i, j| vecs[(i, j)] * (factor * vals[j]).exp());
    Ok(mul(scaled.as_ref(), vecs.adjoint()))
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by scaling and squaring with a degree-13 Padé
/// approximant.
pub fn expm(a: MatRef<'_, C64>) -> Result<CMat> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    if n == 0 {
        return Ok(CMat::zeros(0, 0));
    }
    let norm = one_norm(a);
    if !norm.is_finite() {
        return Err(Error::Linalg("expm of a non-finite matrix".into()));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let a = scale(a, C64::from(0.5f64.powi(squarings)));
    let b = |k: usize| C64::from(PADE13[k]);

    let id = CMat::identity(n, n);
    let a2 = mul(a.as_ref(), a.as_ref());
    let a4 = mul(a2.as_ref(), a2.as_ref());
    let a6 = mul(a4.as_ref(), a2.as_ref());

    let comb = |c6: C64, c4: C64, c2: C64, c0: C64| {
        CMat::from_fn(n, n, |i, j| {
            c6 * a6[(i, j)] + c4 * a4[(i, j)] + c2 * a2[(i, j)] + c0 * id[(i, j)]
        })
    };

    let inner_u = comb(b(13), b(11), b(9), ZERO);
    let tail_u = comb(b(7), b(5), b(3), b(1));
    let mut u_poly = mul(a6.as_ref(), inner_u.as_ref());
    u_poly += &tail_u;
    let u = mul(a.as_ref(), u_poly.as_ref());

    let inner_v = comb(b(12), b(10), b(8), ZERO);
    let tail_v = comb(b(6), b(4), b(2), b(0));
    let mut v = mul(a6.as_ref(), inner_v.as_ref());
    v += &tail_v;

    let denom = &v - &u;
    let mut r = &v + &u;
    denom.partial_piv_lu().solve_in_place(r.as_mut());

    for _ in 0..squarings {
        r = mul(r.as_ref(), r.as_ref());
    }
    if r.as_ref().norm_max().is_finite() {
        Ok(r)
    } else {
        Err(Error::Linalg("expm overflowed".into()))
    }
}

/// Thin QR factorisation of a tall matrix with the gauge fixed so that the
/// diagonal of `R` is real and positive. Returns `Q` together with the ratio
/// of the largest to the smallest `|R_kk|`, a cheap condition estimate.
pub fn thin_qr_positive(y: MatRef<'_, C64>) -> (CMat, f64) {
    let qr = y.qr();
    let mut q = qr.compute_thin_Q();
    let r = qr.thin_R();
    let mut rmax = 0.0f64;
    let mut rmin = f64::INFINITY;
    for k in 0..q.ncols() {
        let d = r[(k, k)];
        let mag = d.norm();
        rmax = rmax.max(mag);
        rmin = rmin.min(mag);
        let phase = if mag > 0.0 { d / mag } else { ONE };
        for i in 0..q.nrows() {
            q[(i, k)] *= phase;
        }
    }
    let condition = if rmin > 0.0 {
        rmax / rmin
    } else {
        f64::INFINITY
    };
    (q, condition)
}
