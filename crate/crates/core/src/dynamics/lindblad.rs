//! Lindblad generators in the Pauli (coherence-vector) representation, the
//! time-periodic single-qubit benchmark and the interacting two-qubit model.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::ode::{integrate, OdeOptions};
use crate::channel::pauli::pauli;
use crate::channel::{coherence_from_density, CoherenceVector, DensityMatrix, PauliBasis, TransferMatrix};
use crate::dataset::{Provenance, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{expm_real, CMat, RMat, C64};

/// `L[X] = −i[H, X] + Σ_k (J_k X J_k† − ½{J_k†J_k, X})` on an arbitrary matrix.
pub fn lindblad_action(h: &CMat, jumps: &[CMat], x: &CMat) -> CMat {
    let mi = C64::new(0.0, -1.0);
    let mut out = (h * x - x * h) * mi;
    for j in jumps {
        let jd = j.adjoint();
        let jdj = &jd * j;
        out += j * x * &jd - (&jdj * x + x * &jdj) * C64::new(0.5, 0.0);
    }
    out
}

/// Generator as a real matrix on coherence vectors,
/// `G[i, j] = Tr[F_i L[F_j]] / d`.
pub fn pauli_generator(h: &CMat, jumps: &[CMat], basis: &PauliBasis) -> RMat {
    let n = basis.len();
    let d = basis.dim() as f64;
    let mut g = RMat::zeros(n, n);
    for j in 0..n {
        let image = lindblad_action(h, jumps, basis.string(j));
        for (i, coeff) in basis.decompose(&image).into_iter().enumerate() {
            g[(i, j)] = coeff.re / d;
        }
    }
    g
}

/// `H(s) = E_z σz + E_x cos(ω s) σx` with decay `γ (JρJ† − ½{J†J, ρ})`,
/// `J = |0⟩⟨1|`. Time is measured in units of `1/E_z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicLindbladParams {
    pub e_z: f64,
    /// `E_x / E_z`.
    pub ratio_ex: f64,
    /// `ω / E_z`.
    pub ratio_omega: f64,
    /// `γ / E_z`.
    pub gamma: f64,
}

impl Default for PeriodicLindbladParams {
    fn default() -> Self {
        Self {
            e_z: 1.0,
            ratio_ex: 0.5,
            ratio_omega: 1.0,
            gamma: 0.01,
        }
    }
}

impl PeriodicLindbladParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_omega > 0.0) {
            return Err(Error::InvalidParameter("ω/E_z must be positive".into()));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::InvalidParameter("γ must be non-negative".into()));
        }
        if !(self.e_z > 0.0) || !self.ratio_ex.is_finite() {
            return Err(Error::InvalidParameter("E_z must be positive and E_x finite".into()));
        }
        Ok(())
    }

    pub fn omega(&self) -> f64 {
        self.ratio_omega * self.e_z
    }

    /// Drive period `2π/ω`.
    pub fn period(&self) -> f64 {
        2.0 * PI / self.omega()
    }

    /// `(G_static, G_drive)` with `G(s) = G_static + cos(ω s) G_drive`.
    fn generator_parts(&self) -> (RMat, RMat) {
        let basis = PauliBasis::new(1);
        let hz = pauli(3) * C64::new(self.e_z, 0.0);
        let mut jump = CMat::zeros(2, 2);
        jump[(0, 1)] = C64::new((self.gamma * self.e_z).sqrt(), 0.0);
        let g_static = pauli_generator(&hz, &[jump], &basis);
        let hx = pauli(1) * C64::new(self.ratio_ex * self.e_z, 0.0);
        let g_drive = pauli_generator(&hx, &[], &basis);
        (g_static, g_drive)
    }
}

struct PeriodicRhs {
    g_static: RMat,
    g_drive: RMat,
    omega: f64,
}

impl PeriodicRhs {
    fn new(p: &PeriodicLindbladParams) -> Self {
        let (g_static, g_drive) = p.generator_parts();
        Self {
            g_static,
            g_drive,
            omega: p.omega(),
        }
    }

    /// `dY/ds = G(s) Y` for `Y` an `n × cols` column-major block.
    fn eval(&self, s: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.g_static.nrows();
        let cs = (self.omega * s).cos();
        for (col, dcol) in y.chunks(n).zip(dy.chunks_mut(n)) {
            for i in 0..n {
                let mut acc = 0.0;
                for j in 0..n {
                    acc += (self.g_static[(i, j)] + cs * self.g_drive[(i, j)]) * col[j];
                }
                dcol[i] = acc;
            }
        }
    }
}

/// Stroboscopic trajectory at `t = 1..=n_periods` (units of `2π/ω`).
pub fn integrate_periodic_lindblad(
    p: &PeriodicLindbladParams,
    rho0: &DensityMatrix,
    n_periods: u32,
) -> Result<Trajectory> {
    integrate_periodic_lindblad_with(p, rho0, n_periods, &OdeOptions::default())
}

pub fn integrate_periodic_lindblad_with(
    p: &PeriodicLindbladParams,
    rho0: &DensityMatrix,
    n_periods: u32,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    p.validate()?;
    if rho0.dim() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            found: rho0.dim(),
        });
    }
    let basis = PauliBasis::new(1);
    let initial = coherence_from_density(rho0, &basis)?;
    let rhs = PeriodicRhs::new(p);
    let period = p.period();
    let mut y = initial.values().to_vec();
    let mut states = Vec::with_capacity(n_periods as usize);
    for _ in 0..n_periods {
        // The generator is periodic, so each period restarts at s = 0.
        y = integrate(|s, y, dy| rhs.eval(s, y, dy), 0.0, period, &y, opts)?;
        y[0] = 1.0;
        states.push(CoherenceVector::new(y.clone()));
    }
    Trajectory::new(0, initial, (1..=n_periods).collect(), states, Provenance::Exact)
}

/// Transfer matrix of the one-period map, from propagating the four Pauli
/// basis elements through one drive period.
pub fn one_period_superoperator(p: &PeriodicLindbladParams) -> Result<TransferMatrix> {
    one_period_superoperator_with(p, &OdeOptions::default())
}

pub fn one_period_superoperator_with(
    p: &PeriodicLindbladParams,
    opts: &OdeOptions,
) -> Result<TransferMatrix> {
    p.validate()?;
    let rhs = PeriodicRhs::new(p);
    let ident: Vec<f64> = RMat::identity(4, 4).as_slice().to_vec();
    let y = integrate(|s, y, dy| rhs.eval(s, y, dy), 0.0, p.period(), &ident, opts)?;
    let mut m = RMat::from_column_slice(4, 4, &y);
    // Exact trace preservation: the identity component never changes.
    m[(0, 0)] = 1.0;
    for j in 1..4 {
        m[(0, j)] = 0.0;
    }
    Ok(TransferMatrix::new(m))
}

/// `H = (Ω/2)(σx₁ + σx₂) + V n₁n₂`, jumps `√γ σ⁻₁,₂` and `√κ n₁,₂`.
/// `v`, `gamma` and `kappa` are in units of `Ω`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoQubitLindbladParams {
    pub omega: f64,
    pub v: f64,
    pub gamma: f64,
    pub kappa: f64,
}

impl Default for TwoQubitLindbladParams {
    fn default() -> Self {
        Self {
            omega: 1.0,
            v: 0.5,
            gamma: 0.01,
            kappa: 0.05,
        }
    }
}

impl TwoQubitLindbladParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma >= 0.0 && self.kappa >= 0.0) {
            return Err(Error::InvalidParameter("γ and κ must be non-negative".into()));
        }
        if !self.omega.is_finite() || !self.v.is_finite() {
            return Err(Error::InvalidParameter("Ω and V must be finite".into()));
        }
        Ok(())
    }

    /// Generator on two-qubit coherence vectors, in absolute time units.
    pub fn pauli_generator(&self) -> RMat {
        let basis = PauliBasis::new(2);
        let id = CMat::identity(2, 2);
        let x = pauli(1);
        let mut n = CMat::zeros(2, 2);
        n[(1, 1)] = C64::new(1.0, 0.0);
        let mut lower = CMat::zeros(2, 2);
        lower[(0, 1)] = C64::new(1.0, 0.0);
        let om = self.omega;
        let h = (x.kronecker(&id) + id.kronecker(&x)) * C64::new(om / 2.0, 0.0)
            + n.kronecker(&n) * C64::new(self.v * om, 0.0);
        let sg = C64::new((self.gamma * om).sqrt(), 0.0);
        let sk = C64::new((self.kappa * om).sqrt(), 0.0);
        let jumps = [
            lower.kronecker(&id) * sg,
            id.kronecker(&lower) * sg,
            n.kronecker(&id) * sk,
            id.kronecker(&n) * sk,
        ];
        pauli_generator(&h, &jumps, &basis)
    }

    /// Transfer matrix `exp(L/Ω)` for one stroboscopic step.
    pub fn step_transfer(&self) -> TransferMatrix {
        let g = self.pauli_generator() / self.omega;
        let mut m = expm_real(&g);
        m[(0, 0)] = 1.0;
        for j in 1..m.ncols() {
            m[(0, j)] = 0.0;
        }
        TransferMatrix::new(m)
    }
}

/// Stroboscopic states at `t = 1..=steps` in units of `1/Ω`.
pub fn simulate_two_qubit_lindblad(
    p: &TwoQubitLindbladParams,
    rho0: &DensityMatrix,
    steps: u32,
) -> Result<Trajectory> {
    p.validate()?;
    if rho0.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho0.dim(),
        });
    }
    let basis = PauliBasis::new(2);
    let initial = coherence_from_density(rho0, &basis)?;
    Ok(Trajectory::from_transfer(0, &p.step_transfer(), initial, steps))
}
