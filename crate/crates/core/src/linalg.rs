//! Dense complex linear algebra used throughout the crate: the matrix
//! exponential, its Fréchet derivative, the principal logarithm and a few
//! small helpers.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type RMat = DMatrix<f64>;
pub type RVec = DVector<f64>;

pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Padé [13/13] coefficients for exp.
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

/// Scaling threshold for the degree-13 approximant.
const THETA13: f64 = 5.371920351148152;

pub fn norm1(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn max_abs_real(a: &RMat) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

pub fn to_complex(a: &RMat) -> CMat {
    a.map(|x| C64::new(x, 0.0))
}

/// Matrix exponential by scaling and squaring with a fixed degree-13 Padé
/// approximant. Backward error is at the level of unit roundoff.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm of non-square matrix");
    if n == 0 {
        return a.clone();
    }
    let nrm = norm1(a);
    let s = if nrm > THETA13 {
        (nrm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scale = 0.5f64.powi(s);
    let a = a * C64::new(scale, 0.0);

    let b = PADE13;
    let ident = CMat::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let sc = |m: &CMat, x: f64| m * C64::new(x, 0.0);

    let u_inner = &a6 * (sc(&a6, b[13]) + sc(&a4, b[11]) + sc(&a2, b[9]))
        + sc(&a6, b[7])
        + sc(&a4, b[5])
        + sc(&a2, b[3])
        + sc(&ident, b[1]);
    let u = &a * u_inner;
    let v = &a6 * (sc(&a6, b[12]) + sc(&a4, b[10]) + sc(&a2, b[8]))
        + sc(&a6, b[6])
        + sc(&a4, b[4])
        + sc(&a2, b[2])
        + sc(&ident, b[0]);

    let p = &v + &u;
    let q = &v - &u;
    let mut r = q
        .lu()
        .solve(&p)
        .expect("Padé denominator is singular; input norm is not finite");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// Eigenvalues of a general complex matrix.
pub fn complex_eigenvalues(a: &CMat) -> Vec<C64> {
    a.clone()
        .schur()
        .eigenvalues()
        .map(|v| v.iter().copied().collect())
        .unwrap_or_default()
}

/// Real matrix exponential through the complex routine.
pub fn expm_real(a: &RMat) -> RMat {
    expm(&to_complex(a)).map(|z| z.re)
}

/// Returns `(exp(A), L(A, E))` where `L` is the Fréchet derivative of the
/// exponential at `A` in direction `E`, read off the top-right block of
/// `exp([[A, E], [0, A]])`.
pub fn expm_frechet(a: &CMat, e: &CMat) -> (CMat, CMat) {
    let n = a.nrows();
    // L is linear in E; normalizing keeps the block norm (and hence the
    // number of squarings) governed by A alone.
    let e_norm = norm1(e);
    let e_scale = if e_norm > 0.0 { e_norm } else { 1.0 };
    let mut big = CMat::zeros(2 * n, 2 * n);
    big.view_mut((0, 0), (n, n)).copy_from(a);
    big.view_mut((n, n), (n, n)).copy_from(a);
    big.view_mut((0, n), (n, n))
        .copy_from(&(e * C64::new(1.0 / e_scale, 0.0)));
    let ex = expm(&big);
    (
        ex.view((0, 0), (n, n)).into_owned(),
        ex.view((0, n), (n, n)).into_owned() * C64::new(e_scale, 0.0),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogmFailure {
    /// Spectrum touches the closed negative real axis.
    NegativeSpectrum,
    /// The square-root iteration did not settle.
    NoConvergence,
}

fn inverse(a: &CMat) -> Option<CMat> {
    a.clone().try_inverse()
}

/// Principal square root by the scaled product form of the Denman–Beavers
/// iteration.
pub fn sqrtm(a: &CMat) -> Result<CMat, LogmFailure> {
    let n = a.nrows();
    let ident = CMat::identity(n, n);
    let half = C64::new(0.5, 0.0);
    let mut m = a.clone();
    let mut y = a.clone();
    for _ in 0..100 {
        let det = m.determinant();
        if det.norm() == 0.0 || !det.is_finite() {
            return Err(LogmFailure::NoConvergence);
        }
        let mu = det.norm().powf(-1.0 / (2.0 * n as f64));
        let minv = inverse(&m).ok_or(LogmFailure::NoConvergence)?;
        let mu2 = C64::new(mu * mu, 0.0);
        let mu2inv = C64::new(1.0 / (mu * mu), 0.0);
        y = (&y * C64::new(mu, 0.0)) * (&ident + &minv * mu2inv) * half;
        m = (&ident + (&m * mu2 + &minv * mu2inv) * half) * half;
        if max_abs(&(&m - &ident)) < 1e-14 {
            return Ok(y);
        }
    }
    Err(LogmFailure::NoConvergence)
}

/// Principal matrix logarithm by inverse scaling and squaring: repeated
/// square roots until `X - I` is small, then the Mercator series.
pub fn logm(a: &CMat, eigenvalues: &[C64]) -> Result<CMat, LogmFailure> {
    let scale = eigenvalues.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if eigenvalues
        .iter()
        .any(|z| z.re <= 0.0 && z.im.abs() <= 1e-12 * scale)
    {
        return Err(LogmFailure::NegativeSpectrum);
    }
    let n = a.nrows();
    let ident = CMat::identity(n, n);
    let mut x = a.clone();
    let mut k = 0;
    while max_abs(&(&x - &ident)) > 0.05 {
        x = sqrtm(&x)?;
        k += 1;
        if k > 60 {
            return Err(LogmFailure::NoConvergence);
        }
    }
    let y = &x - &ident;
    let mut term = y.clone();
    let mut acc = y.clone();
    for j in 2..40 {
        term = &term * &y;
        let coeff = if j % 2 == 0 { -1.0 } else { 1.0 } / j as f64;
        let add = &term * C64::new(coeff, 0.0);
        acc += &add;
        if max_abs(&add) < 1e-18 {
            break;
        }
    }
    Ok(acc * C64::new(2f64.powi(k), 0.0))
}

/// Kronecker product.
pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint()
}

pub fn trace(a: &CMat) -> C64 {
    a.trace()
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMat) -> Vec<f64> {
    let herm = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let mut ev: Vec<f64> = herm.symmetric_eigenvalues().iter().copied().collect();
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev
}

/// Eigenvalues of a real square matrix.
pub fn real_eigenvalues(a: &RMat) -> Vec<C64> {
    a.complex_eigenvalues().iter().copied().collect()
}
