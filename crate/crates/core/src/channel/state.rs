use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::pauli::PauliBasis;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigenvalues, max_abs, CMat, C64};

/// Density matrix of a d-level system.
///
/// Construction through [`DensityMatrix::new`] checks Hermiticity and unit
/// trace; positivity is only reported (see [`DensityMatrix::is_positive`])
/// because states rebuilt from shot estimates may leave the PSD cone.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    mat: CMat,
}

pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-10;

impl DensityMatrix {
    pub fn new(mat: CMat) -> Result<Self> {
        Self::with_tolerance(mat, HERMITIAN_TOL)
    }

    /// Like [`new`](Self::new) with a caller-chosen tolerance for both the
    /// Hermiticity and trace checks.
    pub fn with_tolerance(mat: CMat, tol: f64) -> Result<Self> {
        if mat.nrows() != mat.ncols() {
            return Err(Error::DimensionMismatch {
                expected: mat.nrows(),
                found: mat.ncols(),
            });
        }
        let herm = max_abs(&(&mat - mat.adjoint()));
        if herm > tol {
            return Err(Error::InvalidParameter(format!(
                "matrix is not Hermitian (deviation {herm:e})"
            )));
        }
        let tr = mat.trace();
        if (tr - C64::new(1.0, 0.0)).norm() > tol {
            return Err(Error::InvalidParameter(format!(
                "trace is {tr}, expected 1"
            )));
        }
        Ok(Self { mat })
    }

    /// Wraps a matrix without any checks.
    pub fn from_matrix_unchecked(mat: CMat) -> Self {
        Self { mat }
    }

    /// `|ψ⟩⟨ψ|` for a (not necessarily normalized) state vector.
    pub fn pure(psi: &[C64]) -> Self {
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let d = psi.len();
        let mat = CMat::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / norm2);
        Self { mat }
    }

    /// Computational basis projector `|k⟩⟨k|`.
    pub fn basis_state(dim: usize, k: usize) -> Self {
        let mut mat = CMat::zeros(dim, dim);
        mat[(k, k)] = C64::new(1.0, 0.0);
        Self { mat }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            mat: CMat::identity(dim, dim) / C64::new(dim as f64, 0.0),
        }
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.mat
    }

    pub fn into_matrix(self) -> CMat {
        self.mat
    }

    pub fn trace(&self) -> C64 {
        self.mat.trace()
    }

    pub fn purity(&self) -> f64 {
        (&self.mat * &self.mat).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigenvalues(&self.mat)[0]
    }

    pub fn is_positive(&self, tol: f64) -> bool {
        self.min_eigenvalue() >= -tol
    }

    pub fn tensor(&self, other: &DensityMatrix) -> DensityMatrix {
        DensityMatrix {
            mat: self.mat.kronecker(&other.mat),
        }
    }
}

/// Pauli-string expectation values `v_j = Tr[F_j ρ]`, with `v_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CoherenceVector(pub Vec<f64>);

impl CoherenceVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hilbert-space dimension d, from the length d².
    pub fn dim(&self) -> usize {
        (self.0.len() as f64).sqrt().round() as usize
    }

    pub fn norm_sqr(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum()
    }

    pub fn distance_sqr(&self, other: &CoherenceVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn as_dvector(&self) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(&self.0)
    }
}

/// Imaginary residue allowed when reading Pauli expectations off a density
/// matrix.
const IMAG_TOL: f64 = 1e-12;
/// Allowed rounding in the leading coherence entry.
const NORM_TOL: f64 = 1e-10;

pub fn coherence_from_density(rho: &DensityMatrix, basis: &PauliBasis) -> Result<CoherenceVector> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch {
            expected: basis.dim(),
            found: rho.dim(),
        });
    }
    let coeffs = basis.decompose(rho.matrix());
    let scale = rho.matrix().iter().map(|z| z.norm()).fold(1.0, f64::max);
    if let Some(bad) = coeffs.iter().find(|z| z.im.abs() > IMAG_TOL * scale) {
        return Err(Error::InvalidParameter(format!(
            "Pauli expectation has imaginary part {:e}",
            bad.im
        )));
    }
    let mut values: Vec<f64> = coeffs.into_iter().map(|z| z.re).collect();
    // The trace check already bounds the deviation; pin it to the convention.
    values[0] = 1.0;
    Ok(CoherenceVector(values))
}

pub fn density_from_coherence(v: &CoherenceVector, basis: &PauliBasis) -> Result<DensityMatrix> {
    if v.len() != basis.len() {
        return Err(Error::DimensionMismatch {
            expected: basis.len(),
            found: v.len(),
        });
    }
    if (v.0[0] - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized(v.0[0]));
    }
    let coeffs: Vec<C64> = v.0.iter().map(|&x| C64::new(x, 0.0)).collect();
    Ok(DensityMatrix::from_matrix_unchecked(basis.compose(&coeffs)))
}

/// Haar-random pure qubit state drawn from `rng`.
pub fn haar_pure_qubit<R: Rng + ?Sized>(rng: &mut R) -> DensityMatrix {
    let mut draw = || C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
    let psi = [draw(), draw()];
    DensityMatrix::pure(&psi)
}

/// Haar-random pure qubit state, deterministic in `seed`.
pub fn haar_random_pure_qubit(seed: u64) -> DensityMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    haar_pure_qubit(&mut rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c;

    fn q1() -> PauliBasis {
        PauliBasis::new(1)
    }

    #[test]
    fn ground_state_coherence() {
        let v = coherence_from_density(&DensityMatrix::basis_state(2, 0), &q1()).unwrap();
        assert_eq!(v.values(), &[1.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn maximally_mixed_coherence() {
        let v = coherence_from_density(&DensityMatrix::maximally_mixed(2), &q1()).unwrap();
        assert_eq!(v.values(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn bell_state_coherence_by_direct_trace() {
        let h = 1.0 / 2f64.sqrt();
        let rho = DensityMatrix::pure(&[c(h, 0.), c(0., 0.), c(0., 0.), c(h, 0.)]);
        let basis = PauliBasis::new(2);
        let v = coherence_from_density(&rho, &basis).unwrap();
        for (j, label) in basis.labels().iter().enumerate() {
            // Oracle: explicit Tr[F ρ] through the full matrix product.
            let direct = (basis.string(j) * rho.matrix()).trace().re;
            let expect = match label.as_str() {
                "II" | "XX" | "ZZ" => 1.0,
                "YY" => -1.0,
                _ => 0.0,
            };
            assert!((direct - expect).abs() < 1e-14, "{label}");
            assert!((v.values()[j] - expect).abs() < 1e-14, "{label}");
        }
    }

    #[test]
    fn density_from_trivial_vectors() {
        let rho = density_from_coherence(&CoherenceVector::new(vec![1., 0., 0., 0.]), &q1()).unwrap();
        assert!(max_abs(&(rho.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-15);
        let rho = density_from_coherence(&CoherenceVector::new(vec![1., 0., 0., 1.]), &q1()).unwrap();
        assert!(max_abs(&(rho.matrix() - DensityMatrix::basis_state(2, 0).matrix())) < 1e-15);
    }

    #[test]
    fn overlong_bloch_vector_is_accepted_but_not_positive() {
        let rho = density_from_coherence(&CoherenceVector::new(vec![1., 1.02, 0., 0.]), &q1()).unwrap();
        // Eigenvalues of (I + 1.02 X)/2 are (1 ± 1.02)/2.
        assert!((rho.min_eigenvalue() - (-0.01)).abs() < 1e-14);
        assert!(!rho.is_positive(PSD_TOL));
        assert!(max_abs(&(rho.matrix() - rho.matrix().adjoint())) == 0.0);
    }

    #[test]
    fn unnormalized_vector_rejected() {
        let err = density_from_coherence(&CoherenceVector::new(vec![0.9, 0., 0., 0.]), &q1());
        assert!(matches!(err, Err(Error::NotNormalized(_))));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let err = coherence_from_density(&DensityMatrix::basis_state(4, 0), &q1());
        assert!(matches!(err, Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn haar_states_are_pure_and_deterministic() {
        for seed in 0..20 {
            let a = haar_random_pure_qubit(seed);
            assert!((a.purity() - 1.0).abs() < 1e-12);
            assert_eq!(a, haar_random_pure_qubit(seed));
        }
    }

    #[test]
    fn haar_mean_bloch_vector_vanishes() {
        let n = 10_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut mean = [0.0; 4];
        for _ in 0..n {
            let v = coherence_from_density(&haar_pure_qubit(&mut rng), &q1()).unwrap();
            assert_eq!(v.values()[0], 1.0);
            for (m, x) in mean.iter_mut().zip(v.values()) {
                *m += x / n as f64;
            }
        }
        assert!((mean[0] - 1.0).abs() < 1e-12);
        for m in &mean[1..] {
            assert!(m.abs() < 4.0 / (n as f64).sqrt(), "{mean:?}");
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = CMat::from_row_slice(2, 2, &[c(1., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        assert!(DensityMatrix::new(m).is_err());
    }
}
