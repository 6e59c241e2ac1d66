use super::pauli::PauliBasis;
use super::state::{CoherenceVector, DensityMatrix};
use crate::error::{Error, Result};
use crate::linalg::{max_abs, max_abs_real, CMat, RMat, C64};

pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Kraus representation `E[ρ] = Σ_k K_k ρ K_k†` of a channel on a
/// d-dimensional system.
#[derive(Debug, Clone)]
pub struct KrausSet {
    sys_dim: usize,
    operators: Vec<CMat>,
}

impl KrausSet {
    /// Builds a Kraus set and checks completeness to [`COMPLETENESS_TOL`].
    pub fn new(operators: Vec<CMat>) -> Result<Self> {
        let set = Self::new_unchecked(operators)?;
        let err = set.completeness_error();
        if err > COMPLETENESS_TOL {
            return Err(Error::InvalidParameter(format!(
                "Kraus operators violate completeness by {err:e}"
            )));
        }
        Ok(set)
    }

    /// Checks only that all operators share one square shape.
    pub fn new_unchecked(operators: Vec<CMat>) -> Result<Self> {
        let first = operators
            .first()
            .ok_or_else(|| Error::InvalidParameter("empty Kraus set".into()))?;
        let sys_dim = first.nrows();
        for k in &operators {
            if k.nrows() != sys_dim || k.ncols() != sys_dim {
                return Err(Error::DimensionMismatch {
                    expected: sys_dim,
                    found: k.nrows().max(k.ncols()),
                });
            }
        }
        Ok(Self { sys_dim, operators })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            sys_dim: dim,
            operators: vec![CMat::identity(dim, dim)],
        }
    }

    pub fn sys_dim(&self) -> usize {
        self.sys_dim
    }

    /// Number of operators, i.e. the environment dimension.
    pub fn env_dim(&self) -> usize {
        self.operators.len()
    }

    pub fn operators(&self) -> &[CMat] {
        &self.operators
    }

    /// `max |Σ K†K − 𝟙|`.
    pub fn completeness_error(&self) -> f64 {
        let d = self.sys_dim;
        let mut sum = CMat::zeros(d, d);
        for k in &self.operators {
            sum += k.adjoint() * k;
        }
        max_abs(&(sum - CMat::identity(d, d)))
    }

    /// Action on an arbitrary (not necessarily Hermitian) matrix.
    pub fn apply_matrix(&self, x: &CMat) -> CMat {
        let d = self.sys_dim;
        let mut out = CMat::zeros(d, d);
        for k in &self.operators {
            out += k * x * k.adjoint();
        }
        out
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.dim() != self.sys_dim {
            return Err(Error::DimensionMismatch {
                expected: self.sys_dim,
                found: rho.dim(),
            });
        }
        Ok(DensityMatrix::from_matrix_unchecked(
            self.apply_matrix(rho.matrix()),
        ))
    }

    /// Pauli transfer matrix `T[i, j] = Tr[F_i E[F_j]] / d`.
    pub fn transfer_matrix(&self, basis: &PauliBasis) -> Result<TransferMatrix> {
        if basis.dim() != self.sys_dim {
            return Err(Error::DimensionMismatch {
                expected: basis.dim(),
                found: self.sys_dim,
            });
        }
        let n = basis.len();
        let d = self.sys_dim as f64;
        let mut t = RMat::zeros(n, n);
        for j in 0..n {
            let image = self.apply_matrix(basis.string(j));
            for (i, coeff) in basis.decompose(&image).into_iter().enumerate() {
                t[(i, j)] = coeff.re / d;
            }
        }
        Ok(TransferMatrix::new(t))
    }

    /// Choi matrix `Σ_ab |a⟩⟨b| ⊗ E[|a⟩⟨b|]`.
    pub fn choi_matrix(&self) -> CMat {
        choi_of(self.sys_dim, |x| self.apply_matrix(x))
    }
}

/// Choi matrix of an arbitrary linear map on d×d matrices.
pub fn choi_of(dim: usize, map: impl Fn(&CMat) -> CMat) -> CMat {
    let mut choi = CMat::zeros(dim * dim, dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            let mut unit = CMat::zeros(dim, dim);
            unit[(a, b)] = C64::new(1.0, 0.0);
            let image = map(&unit);
            choi.view_mut((a * dim, b * dim), (dim, dim)).copy_from(&image);
        }
    }
    choi
}

/// Real matrix acting on coherence vectors, `v ↦ T v`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    mat: RMat,
}

impl TransferMatrix {
    pub fn new(mat: RMat) -> Self {
        assert_eq!(mat.nrows(), mat.ncols(), "transfer matrix must be square");
        Self { mat }
    }

    pub fn identity(len: usize) -> Self {
        Self::new(RMat::identity(len, len))
    }

    pub fn matrix(&self) -> &RMat {
        &self.mat
    }

    pub fn into_matrix(self) -> RMat {
        self.mat
    }

    /// Number of rows, d².
    pub fn len(&self) -> usize {
        self.mat.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.mat.nrows() == 0
    }

    /// Deviation of the first row from `(1, 0, …, 0)`.
    pub fn trace_preservation_error(&self) -> f64 {
        let mut row = self.mat.row(0).clone_owned();
        row[0] -= 1.0;
        row.iter().map(|x| x.abs()).fold(0.0, f64::max)
    }

    pub fn propagate(&self, v: &CoherenceVector) -> CoherenceVector {
        CoherenceVector::new((&self.mat * v.as_dvector()).iter().copied().collect())
    }

    /// Applies the map `steps` times.
    pub fn propagate_steps(&self, v: &CoherenceVector, steps: usize) -> CoherenceVector {
        let mut x = v.as_dvector();
        for _ in 0..steps {
            x = &self.mat * x;
        }
        CoherenceVector::new(x.iter().copied().collect())
    }

    pub fn compose(&self, after: &TransferMatrix) -> TransferMatrix {
        TransferMatrix::new(&after.mat * &self.mat)
    }

    pub fn pow(&self, n: usize) -> TransferMatrix {
        let len = self.len();
        let mut acc = RMat::identity(len, len);
        for _ in 0..n {
            acc = &self.mat * acc;
        }
        TransferMatrix::new(acc)
    }

    pub fn max_diff(&self, other: &TransferMatrix) -> f64 {
        max_abs_real(&(&self.mat - &other.mat))
    }

    /// Superoperator action on a matrix, using the Pauli expansion.
    pub fn apply_matrix(&self, basis: &PauliBasis, x: &CMat) -> CMat {
        let coeffs = basis.decompose(x);
        let n = self.len();
        let out: Vec<C64> = (0..n)
            .map(|i| (0..n).map(|j| coeffs[j] * self.mat[(i, j)]).sum())
            .collect();
        basis.compose(&out)
    }
}
