//! Brickwork circuit of x-rotations and controlled phases on a ring of
//! qubits, observed through a two-qubit window.

use serde::{Deserialize, Serialize};

use crate::channel::{coherence_from_density, DensityMatrix, PauliBasis};
use crate::dataset::{Provenance, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{CMat, C64};

pub const MAX_QUBITS: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub n_qubits: usize,
    /// Angle in `exp(−i σx φ_x)`.
    pub phi_x: f64,
    /// Phase in `exp(i n⊗n φ_nn)`.
    pub phi_nn: f64,
    /// First qubit of the observed pair; its partner is the next qubit on
    /// the ring.
    pub subsystem: usize,
}

impl Default for CircuitParams {
    fn default() -> Self {
        Self {
            n_qubits: 14,
            phi_x: 0.5,
            phi_nn: 1.0,
            subsystem: 6,
        }
    }
}

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_qubits < 3 {
            return Err(Error::InvalidParameter("circuit needs at least 3 qubits".into()));
        }
        if self.n_qubits > MAX_QUBITS {
            return Err(Error::InvalidParameter(format!(
                "{} qubits exceed the supported maximum of {MAX_QUBITS}",
                self.n_qubits
            )));
        }
        if self.subsystem >= self.n_qubits {
            return Err(Error::InvalidParameter("subsystem index out of range".into()));
        }
        Ok(())
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.subsystem, (self.subsystem + 1) % self.n_qubits)
    }
}

/// Pure-state simulator. Qubit `q` is bit `L − 1 − q` of the amplitude index.
#[derive(Debug, Clone)]
pub struct CircuitState {
    n_qubits: usize,
    amps: Vec<C64>,
}

impl CircuitState {
    /// `|pair⟩ ⊗ |0…0⟩` with the given two-qubit amplitudes placed on `pair`.
    pub fn embed(n_qubits: usize, pair: (usize, usize), pair_amps: &[C64; 4]) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); 1 << n_qubits];
        for (k, &a) in pair_amps.iter().enumerate() {
            let (ba, bb) = (k >> 1, k & 1);
            let idx = (ba << (n_qubits - 1 - pair.0)) | (bb << (n_qubits - 1 - pair.1));
            amps[idx] = a;
        }
        Self { n_qubits, amps }
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum()
    }

    fn bit(&self, q: usize) -> usize {
        self.n_qubits - 1 - q
    }

    /// `exp(−i σx φ)` on qubit `q`.
    pub fn rotate_x(&mut self, q: usize, phi: f64) {
        let mask = 1usize << self.bit(q);
        let (cs, sn) = (phi.cos(), phi.sin());
        let mis = C64::new(0.0, -sn);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let j = i | mask;
                let (a0, a1) = (self.amps[i], self.amps[j]);
                self.amps[i] = a0 * cs + a1 * mis;
                self.amps[j] = a0 * mis + a1 * cs;
            }
        }
    }

    /// `exp(i n⊗n φ)` on qubits `q1`, `q2`.
    pub fn controlled_phase(&mut self, q1: usize, q2: usize, phi: f64) {
        let mask = (1usize << self.bit(q1)) | (1usize << self.bit(q2));
        let ph = C64::from_polar(1.0, phi);
        for (i, a) in self.amps.iter_mut().enumerate() {
            if i & mask == mask {
                *a *= ph;
            }
        }
    }

    /// Multiplies every amplitude by a precomputed diagonal.
    pub fn apply_diagonal(&mut self, diag: &[C64]) {
        for (a, d) in self.amps.iter_mut().zip(diag) {
            *a *= d;
        }
    }

    /// Reduced density matrix of qubits `(q1, q2)`, `q1` as the first factor.
    pub fn reduced_pair(&self, q1: usize, q2: usize) -> CMat {
        let (m1, m2) = (1usize << self.bit(q1), 1usize << self.bit(q2));
        let local = |i: usize| (((i & m1 != 0) as usize) << 1) | ((i & m2 != 0) as usize);
        let mut rho = CMat::zeros(4, 4);
        for i in 0..self.amps.len() {
            if i & (m1 | m2) != 0 {
                continue;
            }
            // `i` enumerates the rest of the register with the pair cleared.
            let idx = [i, i | m2, i | m1, i | m1 | m2];
            for &r in &idx {
                for &c in &idx {
                    rho[(local(r), local(c))] += self.amps[r] * self.amps[c].conj();
                }
            }
        }
        rho
    }
}

/// Phase picked up by each basis state from all ring controlled-phase gates.
pub fn ring_phase_diagonal(n_qubits: usize, phi_nn: f64) -> Vec<C64> {
    (0..1usize << n_qubits)
        .map(|i| {
            let bit = |q: usize| (i >> (n_qubits - 1 - q)) & 1;
            let pairs = (0..n_qubits)
                .filter(|&q| bit(q) == 1 && bit((q + 1) % n_qubits) == 1)
                .count();
            C64::from_polar(1.0, phi_nn * pairs as f64)
        })
        .collect()
}

/// Dominant eigenvector of a (pure) two-qubit density matrix.
fn pure_amplitudes(rho: &DensityMatrix) -> Result<[C64; 4]> {
    if rho.dim() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: rho.dim(),
        });
    }
    let purity = rho.purity();
    if (purity - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!(
            "circuit initial state must be pure (purity {purity})"
        )));
    }
    let herm = (rho.matrix() + rho.matrix().adjoint()) * C64::new(0.5, 0.0);
    let eig = herm.clone().symmetric_eigen();
    let (imax, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
    let col = eig.eigenvectors.column(imax);
    Ok([col[0], col[1], col[2], col[3]])
}

/// Evolves the ring for `steps` layers and records the reduced state of the
/// observed pair after each layer.
pub fn simulate_circuit_subsystem(
    p: &CircuitParams,
    sub_init: &DensityMatrix,
    steps: u32,
) -> Result<Trajectory> {
    p.validate()?;
    let basis = PauliBasis::new(2);
    let pair = p.pair();
    let mut state = CircuitState::embed(p.n_qubits, pair, &pure_amplitudes(sub_init)?);
    let initial = coherence_from_density(sub_init, &basis)?;
    let diag = ring_phase_diagonal(p.n_qubits, p.phi_nn);
    let mut states = Vec::with_capacity(steps as usize);
    for _ in 0..steps {
        for q in 0..p.n_qubits {
            state.rotate_x(q, p.phi_x);
        }
        state.apply_diagonal(&diag);
        let rho = DensityMatrix::from_matrix_unchecked(state.reduced_pair(pair.0, pair.1));
        states.push(coherence_from_density(&rho, &basis)?);
    }
    Trajectory::new(0, initial, (1..=steps).collect(), states, Provenance::Exact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::pauli::pauli;
    use crate::channel::haar_random_pure_qubit;
    use crate::linalg::{c, expm, max_abs};

    fn product_init(seed: u64) -> DensityMatrix {
        haar_random_pure_qubit(seed).tensor(&haar_random_pure_qubit(seed + 100))
    }

    /// Dense oracle: builds the full 2^L × 2^L layer unitary from Kronecker
    /// products and propagates the full density matrix.
    fn dense_layer(l: usize, phi_x: f64, phi_nn: f64) -> CMat {
        let id = CMat::identity(2, 2);
        let rx = expm(&(pauli(1) * c(0., -phi_x)));
        let mut rot = CMat::identity(1, 1);
        for _ in 0..l {
            rot = rot.kronecker(&rx);
        }
        let mut n = CMat::zeros(2, 2);
        n[(1, 1)] = c(1., 0.);
        let mut phase = CMat::identity(1 << l, 1 << l);
        for q in 0..l {
            let r = (q + 1) % l;
            let mut op = CMat::identity(1, 1);
            for k in 0..l {
                op = op.kronecker(if k == q || k == r { &n } else { &id });
            }
            phase = expm(&(op * c(0., phi_nn))) * phase;
        }
        phase * rot
    }

    fn dense_reduced(full: &CMat, l: usize, pair: (usize, usize)) -> CMat {
        let m1 = 1 << (l - 1 - pair.0);
        let m2 = 1 << (l - 1 - pair.1);
        let local = |i: usize| (((i & m1 != 0) as usize) << 1) | ((i & m2 != 0) as usize);
        let mut out = CMat::zeros(4, 4);
        for r in 0..full.nrows() {
            for col in 0..full.ncols() {
                if (r & !(m1 | m2)) == (col & !(m1 | m2)) {
                    out[(local(r), local(col))] += full[(r, col)];
                }
            }
        }
        out
    }

    #[test]
    fn dense_oracle_agrees_at_six_qubits() {
        let l = 6;
        for pair_start in [2, 5] {
            let p = CircuitParams {
                n_qubits: l,
                phi_x: 0.5,
                phi_nn: 1.0,
                subsystem: pair_start,
            };
            let init = product_init(3);
            let traj = simulate_circuit_subsystem(&p, &init, 8).unwrap();

            let amps = pure_amplitudes(&init).unwrap();
            let psi = CircuitState::embed(l, p.pair(), &amps);
            let psi = CMat::from_column_slice(1 << l, 1, psi.amplitudes());
            let mut full = &psi * psi.adjoint();
            let layer = dense_layer(l, 0.5, 1.0);
            let basis = PauliBasis::new(2);
            for v in &traj.states {
                full = &layer * full * layer.adjoint();
                let rho = DensityMatrix::from_matrix_unchecked(dense_reduced(&full, l, p.pair()));
                let expect = coherence_from_density(&rho, &basis).unwrap();
                assert!(expect.distance_sqr(v).sqrt() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_circuit_keeps_state() {
        let p = CircuitParams {
            n_qubits: 5,
            phi_x: 0.0,
            phi_nn: 0.0,
            subsystem: 1,
        };
        let traj = simulate_circuit_subsystem(&p, &product_init(8), 5).unwrap();
        for v in &traj.states {
            assert!(v.distance_sqr(&traj.initial) < 1e-28);
        }
    }

    #[test]
    fn controlled_phases_commute() {
        let l = 7;
        let amps = pure_amplitudes(&product_init(12)).unwrap();
        let mut a = CircuitState::embed(l, (3, 4), &amps);
        for q in 0..l {
            a.rotate_x(q, 0.4);
        }
        let mut b = a.clone();
        let mut diag = a.clone();
        for q in 0..l {
            a.controlled_phase(q, (q + 1) % l, 1.3);
        }
        // Odd bonds first, then even bonds, each in reverse.
        for q in (0..l).rev().filter(|q| q % 2 == 1).chain((0..l).rev().filter(|q| q % 2 == 0)) {
            b.controlled_phase(q, (q + 1) % l, 1.3);
        }
        diag.apply_diagonal(&ring_phase_diagonal(l, 1.3));
        let diff = |x: &CircuitState, y: &CircuitState| {
            x.amps.iter().zip(&y.amps).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max)
        };
        assert!(diff(&a, &b) < 1e-14);
        assert!(diff(&a, &diag) < 1e-14);
    }

    #[test]
    fn norm_is_preserved() {
        let p = CircuitParams {
            n_qubits: 10,
            phi_x: 0.37,
            phi_nn: 2.0,
            subsystem: 9,
        };
        let amps = pure_amplitudes(&product_init(1)).unwrap();
        let mut s = CircuitState::embed(p.n_qubits, p.pair(), &amps);
        let diag = ring_phase_diagonal(p.n_qubits, p.phi_nn);
        for _ in 0..20 {
            for q in 0..p.n_qubits {
                s.rotate_x(q, p.phi_x);
            }
            s.apply_diagonal(&diag);
            assert!((s.norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_oversized_and_mixed() {
        let p = CircuitParams {
            n_qubits: 25,
            ..Default::default()
        };
        assert!(simulate_circuit_subsystem(&p, &product_init(0), 1).is_err());
        let mixed = DensityMatrix::maximally_mixed(4);
        assert!(simulate_circuit_subsystem(&CircuitParams::default(), &mixed, 1).is_err());
    }

    #[test]
    fn reduced_state_is_a_valid_density_matrix() {
        let p = CircuitParams {
            n_qubits: 8,
            ..Default::default()
        };
        let traj = simulate_circuit_subsystem(&p, &product_init(2), 20).unwrap();
        let basis = PauliBasis::new(2);
        for v in &traj.states {
            let rho = crate::channel::density_from_coherence(v, &basis).unwrap();
            assert!(rho.min_eigenvalue() > -1e-10);
            assert!(max_abs(&(rho.matrix() - rho.matrix().adjoint())) < 1e-12);
        }
    }
}
