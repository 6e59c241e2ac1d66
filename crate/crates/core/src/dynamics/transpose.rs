//! The qubit channel `ρ ↦ (Tr[ρ] 𝟙 + ρᵀ)/3`: CPTP but not reachable by any
//! Lindblad evolution.

use crate::channel::{coherence_from_density, CoherenceVector, DensityMatrix, KrausSet, PauliBasis, TransferMatrix};
use crate::dataset::{Provenance, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{c, CMat, RMat};

pub fn apply_transpose_channel(rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: rho.dim(),
        });
    }
    let m = rho.matrix();
    let out = (CMat::identity(2, 2) * m.trace() + m.transpose()) / c(3.0, 0.0);
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

/// Rank-3 Kraus form: `√(2/3)|0⟩⟨0|`, `√(2/3)|1⟩⟨1|`, `√(1/3)σx`.
pub fn transpose_kraus() -> KrausSet {
    let a = (2.0f64 / 3.0).sqrt();
    let b = (1.0f64 / 3.0).sqrt();
    let z = c(0.0, 0.0);
    let ops = vec![
        CMat::from_row_slice(2, 2, &[c(a, 0.), z, z, z]),
        CMat::from_row_slice(2, 2, &[z, z, z, c(a, 0.)]),
        CMat::from_row_slice(2, 2, &[z, c(b, 0.), c(b, 0.), z]),
    ];
    KrausSet::new(ops).expect("transpose Kraus set is complete")
}

/// Transfer matrix `diag(1, 1/3, −1/3, 1/3)`.
pub fn transpose_transfer() -> TransferMatrix {
    TransferMatrix::new(RMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        1.0,
        1.0 / 3.0,
        -1.0 / 3.0,
        1.0 / 3.0,
    ])))
}

pub fn transpose_trajectory(rho0: &DensityMatrix, steps: u32) -> Result<Trajectory> {
    let basis = PauliBasis::new(1);
    let initial = coherence_from_density(rho0, &basis)?;
    let mut rho = rho0.clone();
    let mut states: Vec<CoherenceVector> = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        rho = apply_transpose_channel(&rho)?;
        states.push(coherence_from_density(&rho, &basis)?);
    }
    Trajectory::new(0, initial, (1..=steps).collect(), states, Provenance::Exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::haar_random_pure_qubit;
    use crate::linalg::{hermitian_eigenvalues, max_abs};

    #[test]
    fn maximally_mixed_is_fixed() {
        let out = apply_transpose_channel(&DensityMatrix::maximally_mixed(2)).unwrap();
        assert!(max_abs(&(out.matrix() - DensityMatrix::maximally_mixed(2).matrix())) < 1e-15);
    }

    #[test]
    fn ground_state_image() {
        let out = apply_transpose_channel(&DensityMatrix::basis_state(2, 0)).unwrap();
        let m = out.matrix();
        assert!((m[(0, 0)].re - 2.0 / 3.0).abs() < 1e-15);
        assert!((m[(1, 1)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!(m[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn kraus_form_matches_definition() {
        let k = transpose_kraus();
        for seed in 0..10 {
            let rho = haar_random_pure_qubit(seed);
            let a = apply_transpose_channel(&rho).unwrap();
            let b = k.apply(&rho).unwrap();
            assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-15);
        }
    }

    #[test]
    fn transfer_matrix_is_diagonal() {
        let t = transpose_kraus().transfer_matrix(&PauliBasis::new(1)).unwrap();
        assert!(t.max_diff(&transpose_transfer()) < 1e-15);
    }

    #[test]
    fn choi_rank_is_three() {
        let eig = hermitian_eigenvalues(&transpose_kraus().choi_matrix());
        assert!(eig[0].abs() < 1e-14);
        assert!(eig[1..].iter().all(|&e| e > 0.1));
    }

    #[test]
    fn converges_geometrically() {
        let traj = transpose_trajectory(&haar_random_pure_qubit(4), 12).unwrap();
        let bloch = |v: &CoherenceVector| v.values()[1..].iter().map(|x| x * x).sum::<f64>().sqrt();
        let mut prev = bloch(&traj.initial);
        for v in &traj.states {
            let cur = bloch(v);
            assert!((cur - prev / 3.0).abs() < 1e-14);
            prev = cur;
        }
    }
}
