use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::kraus::{KrausSet, TransferMatrix};
use super::pauli::PauliBasis;
use super::state::DensityMatrix;
use crate::error::{Error, Result};
use crate::linalg::{expm, expm_frechet, CMat, C64};

/// A channel given by a unitary `U = exp(A(θ))` on system ⊗ environment,
/// with the environment prepared in `|0_E⟩`.
///
/// `A(θ)` is skew-Hermitian of size `D = d·d_E`. The first `D` parameters are
/// the imaginary parts of the diagonal; the remaining `D(D−1)` come in
/// (real, imaginary) pairs for the strict upper triangle in row-major order.
/// Index `(a, k)` of the joint space is `a·d_E + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StinespringModel {
    sys_dim: usize,
    env_dim: usize,
    params: Vec<f64>,
}

/// Location of a parameter inside `A(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

impl StinespringModel {
    pub fn new(sys_dim: usize, env_dim: usize, params: Vec<f64>) -> Result<Self> {
        if sys_dim == 0 || env_dim == 0 {
            return Err(Error::InvalidParameter(
                "system and environment dimensions must be positive".into(),
            ));
        }
        let expected = Self::param_count(sys_dim, env_dim);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i} is {}", params[i])));
        }
        Ok(Self {
            sys_dim,
            env_dim,
            params,
        })
    }

    /// The model with `θ = 0`, i.e. `U = 𝟙`.
    pub fn identity(sys_dim: usize, env_dim: usize) -> Self {
        Self::new(sys_dim, env_dim, vec![0.0; Self::param_count(sys_dim, env_dim)]).unwrap()
    }

    /// Entries drawn i.i.d. from `N(0, scale²)`.
    pub fn random<R: Rng + ?Sized>(sys_dim: usize, env_dim: usize, scale: f64, rng: &mut R) -> Self {
        let n = Self::param_count(sys_dim, env_dim);
        let params = (0..n)
            .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Self::new(sys_dim, env_dim, params).unwrap()
    }

    pub fn param_count(sys_dim: usize, env_dim: usize) -> usize {
        let n = sys_dim * env_dim;
        n * n
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    pub fn env_dim(&self) -> usize {
        self.env_dim
    }

    /// Joint dimension `d·d_E`.
    pub fn joint_dim(&self) -> usize {
        self.sys_dim * self.env_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: self.params.len(),
                found: params.len(),
            });
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn slots(&self) -> impl Iterator<Item = Slot> {
        let n = self.joint_dim();
        let diag = (0..n).map(Slot::Diag);
        let upper = (0..n).flat_map(move |j| {
            ((j + 1)..n).flat_map(move |k| [Slot::Re(j, k), Slot::Im(j, k)])
        });
        diag.chain(upper)
    }

    /// The skew-Hermitian generator `A(θ)`.
    pub fn generator(&self) -> CMat {
        let n = self.joint_dim();
        let mut a = CMat::zeros(n, n);
        for (slot, &x) in self.slots().zip(&self.params) {
            match slot {
                Slot::Diag(j) => a[(j, j)] += C64::new(0.0, x),
                Slot::Re(j, k) => {
                    a[(j, k)] += C64::new(x, 0.0);
                    a[(k, j)] -= C64::new(x, 0.0);
                }
                Slot::Im(j, k) => {
                    a[(j, k)] += C64::new(0.0, x);
                    a[(k, j)] += C64::new(0.0, x);
                }
            }
        }
        a
    }

    /// `∂A/∂θ` along an arbitrary parameter-space direction.
    pub fn generator_direction(&self, direction: &[f64]) -> CMat {
        let mut tmp = self.clone();
        tmp.params.copy_from_slice(direction);
        tmp.generator()
    }

    pub fn unitary(&self) -> CMat {
        expm(&self.generator())
    }

    /// `(U, ∂U)` where `∂U` is the derivative along `direction`.
    pub fn unitary_and_derivative(&self, direction: &[f64]) -> (CMat, CMat) {
        expm_frechet(&self.generator(), &self.generator_direction(direction))
    }

    /// `∂U/∂θ_i`.
    pub fn unitary_partial(&self, i: usize) -> CMat {
        let mut dir = vec![0.0; self.params.len()];
        dir[i] = 1.0;
        self.unitary_and_derivative(&dir).1
    }

    pub fn kraus(&self) -> KrausSet {
        kraus_from_unitary(&self.unitary(), self.sys_dim, self.env_dim)
    }

    pub fn transfer_matrix(&self, basis: &PauliBasis) -> Result<TransferMatrix> {
        self.kraus().transfer_matrix(basis)
    }

    /// Evaluates `Tr_E[U (ρ ⊗ |0_E⟩⟨0_E|) U†]` directly from the dilation.
    pub fn apply_dilated(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.sys_dim {
            return Err(Error::DimensionMismatch {
                expected: self.sys_dim,
                found: rho.dim(),
            });
        }
        let mut env0 = CMat::zeros(self.env_dim, self.env_dim);
        env0[(0, 0)] = C64::new(1.0, 0.0);
        let u = self.unitary();
        let joint = &u * rho.matrix().kronecker(&env0) * u.adjoint();
        Ok(DensityMatrix::from_matrix_unchecked(partial_trace_env(
            &joint,
            self.sys_dim,
            self.env_dim,
        )))
    }

    /// Pulls a cotangent on `U` back to the parameters.
    ///
    /// If a scalar `f` satisfies `df = Re Tr(dU · W)`, the result is `∇_θ f`.
    /// Uses `Tr(L(A, E) W) = Tr(E L(A, W))` so a single Fréchet derivative
    /// covers every parameter.
    pub fn pullback(&self, w: &CMat) -> Vec<f64> {
        let (_, z) = expm_frechet(&self.generator(), w);
        self.slots()
            .map(|slot| match slot {
                Slot::Diag(j) => -z[(j, j)].im,
                Slot::Re(j, k) => z[(k, j)].re - z[(j, k)].re,
                Slot::Im(j, k) => -(z[(k, j)].im + z[(j, k)].im),
            })
            .collect()
    }

    /// Embeds per-Kraus cotangents into a cotangent on `U`.
    ///
    /// For `df = Re Σ_k Tr(dK_k M_k)` this returns `W` with
    /// `df = Re Tr(dU W)`.
    pub fn kraus_cotangent_to_unitary(&self, m: &[CMat]) -> CMat {
        let n = self.joint_dim();
        let de = self.env_dim;
        let mut w = CMat::zeros(n, n);
        for (k, mk) in m.iter().enumerate() {
            for a in 0..self.sys_dim {
                for b in 0..self.sys_dim {
                    w[(b * de, a * de + k)] = mk[(b, a)];
                }
            }
        }
        w
    }
}

/// `K_k[a, b] = U[(a, k), (b, 0)]`.
pub fn kraus_from_unitary(u: &CMat, sys_dim: usize, env_dim: usize) -> KrausSet {
    let ops = (0..env_dim)
        .map(|k| CMat::from_fn(sys_dim, sys_dim, |a, b| u[(a * env_dim + k, b * env_dim)]))
        .collect();
    KrausSet::new_unchecked(ops).expect("non-empty Kraus set")
}

/// Partial trace over the second tensor factor.
pub fn partial_trace_env(joint: &CMat, sys_dim: usize, env_dim: usize) -> CMat {
    CMat::from_fn(sys_dim, sys_dim, |a, b| {
        (0..env_dim)
            .map(|k| joint[(a * env_dim + k, b * env_dim + k)])
            .sum()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::pauli::pauli;
    use crate::linalg::{c, max_abs};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_parameters_give_identity() {
        let m = StinespringModel::identity(2, 2);
        assert!(max_abs(&(m.unitary() - CMat::identity(4, 4))) == 0.0);
        let k = m.kraus();
        assert!(max_abs(&(&k.operators()[0] - CMat::identity(2, 2))) == 0.0);
        assert!(max_abs(&k.operators()[1]) == 0.0);
    }

    #[test]
    fn generator_is_skew_hermitian_and_unitary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = StinespringModel::random(2, 3, 1.0, &mut rng);
        let a = m.generator();
        assert!(max_abs(&(&a + a.adjoint())) == 0.0);
        let u = m.unitary();
        assert!(max_abs(&(u.adjoint() * &u - CMat::identity(6, 6))) < 1e-10);
        assert!(m.kraus().completeness_error() < 1e-10);
    }

    #[test]
    fn swap_dilation_is_reset() {
        let swap = CMat::from_fn(4, 4, |r, col| {
            // |a, k⟩ -> |k, a⟩
            let (a, k) = (col / 2, col % 2);
            if r == k * 2 + a { c(1., 0.) } else { c(0., 0.) }
        });
        let ks = kraus_from_unitary(&swap, 2, 2);
        for (k, op) in ks.operators().iter().enumerate() {
            // Oracle: K_k = |0⟩⟨k|.
            let mut expect = CMat::zeros(2, 2);
            expect[(0, k)] = c(1., 0.);
            assert!(max_abs(&(op - expect)) == 0.0);
        }
        assert!(ks.completeness_error() < 1e-15);
    }

    #[test]
    fn dilated_and_kraus_application_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = StinespringModel::random(2, 4, 0.8, &mut rng);
        let rho = DensityMatrix::pure(&[c(0.3, -0.4), c(0.5, 0.7)]);
        let a = m.kraus().apply(&rho).unwrap();
        let b = m.apply_dilated(&rho).unwrap();
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-10);
    }

    #[test]
    fn single_environment_level_is_unitary_channel() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = StinespringModel::random(4, 1, 1.0, &mut rng);
        let ks = m.kraus();
        let k = &ks.operators()[0];
        assert!(max_abs(&(k.adjoint() * k - CMat::identity(4, 4))) < 1e-10);
    }

    #[test]
    fn partial_derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = StinespringModel::random(2, 2, 0.7, &mut rng);
        let h = 1e-5;
        for i in [0, 3, 5, 10, 15] {
            let du = m.unitary_partial(i);
            let mut p = m.params().to_vec();
            p[i] += h;
            let up = StinespringModel::new(2, 2, p.clone()).unwrap().unitary();
            p[i] -= 2.0 * h;
            let um = StinespringModel::new(2, 2, p).unwrap().unitary();
            let fd = (up - um) / c(2.0 * h, 0.);
            let rel = max_abs(&(&du - &fd)) / max_abs(&du);
            assert!(rel < 1e-5, "param {i}: {rel}");
        }
    }

    #[test]
    fn pullback_matches_directional_derivatives() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let m = StinespringModel::random(2, 2, 0.5, &mut rng);
        let w = CMat::from_fn(4, 4, |i, j| c((i + 2 * j) as f64 * 0.1 - 0.3, 0.05 * i as f64));
        let g = m.pullback(&w);
        for i in 0..m.params().len() {
            let du = m.unitary_partial(i);
            let direct = (du * &w).trace().re;
            assert!((direct - g[i]).abs() < 1e-12, "param {i}");
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StinespringModel::new(2, 2, vec![0.0; 15]).is_err());
        let mut p = vec![0.0; 16];
        p[2] = f64::NAN;
        assert!(matches!(StinespringModel::new(2, 2, p), Err(Error::NonFinite(_))));
    }

    #[test]
    fn pauli_x_dilation_round_trip() {
        // exp(-i π/2 X) = -i X on a system with trivial environment.
        let mut p = vec![0.0; 4];
        p[2] = 0.0;
        p[3] = -std::f64::consts::FRAC_PI_2;
        let m = StinespringModel::new(2, 1, p).unwrap();
        let u = m.unitary();
        assert!(max_abs(&(u - pauli(1) * c(0., -1.))) < 1e-14);
    }
}
