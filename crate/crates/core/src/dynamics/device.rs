//! Two-qubit device emulator: parallel √X gates with a spurious ZZ coupling,
//! read out by projective Pauli measurements with finite shots.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use super::initial::trajectory_rng;
use crate::channel::pauli::pauli;
use crate::channel::{coherence_from_density, CoherenceVector, DensityMatrix, KrausSet, PauliBasis, TransferMatrix};
use crate::dataset::{Provenance, Trajectory};
use crate::error::{Error, Result};
use crate::linalg::{c, expm, kron, CMat};

/// The nine measurement settings, first qubit first.
pub const MEASUREMENT_BASES: [&str; 9] = ["XX", "XY", "XZ", "YX", "YY", "YZ", "ZX", "ZY", "ZZ"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    /// Coupling in `exp(−i V σz⊗σz)` per gate application.
    pub v_zz: f64,
    pub shots_per_basis: u64,
    pub n_subsets: usize,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            v_zz: -0.002,
            shots_per_basis: 20_000,
            n_subsets: 10,
        }
    }
}

impl DeviceParams {
    pub fn validate(&self) -> Result<()> {
        if !self.v_zz.is_finite() {
            return Err(Error::InvalidParameter("v_zz must be finite".into()));
        }
        if self.n_subsets == 0 || self.shots_per_basis < self.n_subsets as u64 {
            return Err(Error::InvalidParameter(format!(
                "need at least one shot per subset ({} shots, {} subsets)",
                self.shots_per_basis, self.n_subsets
            )));
        }
        Ok(())
    }
}

/// `exp(−i[(π/4)(σx⊗𝟙 + 𝟙⊗σx) + V σz⊗σz])`.
pub fn zz_gate(v: f64) -> CMat {
    let id = CMat::identity(2, 2);
    let (x, z) = (pauli(1), pauli(3));
    let h = (kron(&x, &id) + kron(&id, &x)) * c(std::f64::consts::FRAC_PI_4, 0.0) + kron(&z, &z) * c(v, 0.0);
    expm(&(h * c(0.0, -1.0)))
}

pub fn device_transfer(v: f64) -> TransferMatrix {
    KrausSet::new(vec![zz_gate(v)])
        .and_then(|k| k.transfer_matrix(&PauliBasis::new(2)))
        .expect("a unitary is a valid channel")
}

/// Noise-free expectations at each requested time.
pub fn analytic_trajectory(v: f64, sub_init: &DensityMatrix, times: &[u32]) -> Result<Trajectory> {
    let basis = PauliBasis::new(2);
    let initial = coherence_from_density(sub_init, &basis)?;
    let t = device_transfer(v);
    let states = times.iter().map(|&k| t.propagate_steps(&initial, k as usize)).collect();
    Trajectory::new(0, initial, times.to_vec(), states, Provenance::Exact)
}

/// Outcome pair `(s_a, s_b)` with `s = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Outcome(pub i8, pub i8);

pub const OUTCOMES: [Outcome; 4] = [Outcome(1, 1), Outcome(1, -1), Outcome(-1, 1), Outcome(-1, -1)];

/// Shots for one (trajectory, time, basis), run-length encoded in shot order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotRecord {
    pub trajectory: usize,
    pub t: u32,
    /// Index into [`MEASUREMENT_BASES`].
    pub basis: usize,
    pub runs: Vec<(Outcome, u64)>,
}

impl ShotRecord {
    pub fn total_shots(&self) -> u64 {
        self.runs.iter().map(|r| r.1).sum()
    }
}

/// Index of `σa ⊗ σb` (1..=3 each) in the two-qubit Pauli ordering.
fn pair_index(a: usize, b: usize) -> usize {
    4 * a + b
}

fn basis_axes(basis: usize) -> (usize, usize) {
    (basis / 3 + 1, basis % 3 + 1)
}

/// Born probabilities of the four outcomes in `basis`, from the coherence
/// vector. Tiny negative values from rounding are clipped.
fn outcome_probabilities(v: &CoherenceVector, basis: usize) -> [f64; 4] {
    let (a, b) = basis_axes(basis);
    let ea = v.values()[pair_index(a, 0)];
    let eb = v.values()[pair_index(0, b)];
    let eab = v.values()[pair_index(a, b)];
    OUTCOMES.map(|Outcome(sa, sb)| {
        let (sa, sb) = (sa as f64, sb as f64);
        ((1.0 + sa * ea + sb * eb + sa * sb * eab) / 4.0).max(0.0)
    })
}

/// Multinomial counts by sequential binomial draws.
fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64; 4], rng: &mut R) -> [u64; 4] {
    let mut out = [0; 4];
    let mut left = n;
    let mut mass: f64 = probs.iter().sum();
    for i in 0..3 {
        if left == 0 || mass <= 0.0 {
            break;
        }
        let p = (probs[i] / mass).clamp(0.0, 1.0);
        let k = Binomial::new(left, p).expect("probability in [0, 1]").sample(rng);
        out[i] = k;
        left -= k;
        mass -= probs[i];
    }
    out[3] = left;
    out
}

/// Draws shots for every `t` in `t_list` and every basis.
///
/// Shots are generated in `n_subsets` consecutive blocks (the last one also
/// takes the remainder). Within a block the shot order carries no
/// information, so each block is emitted as one run per outcome.
pub fn emulate_device(
    p: &DeviceParams,
    sub_init: &DensityMatrix,
    t_list: &[u32],
    seed: u64,
    trajectory: usize,
) -> Result<Vec<ShotRecord>> {
    p.validate()?;
    let exact = analytic_trajectory(p.v_zz, sub_init, t_list)?;
    let mut rng = trajectory_rng(seed, trajectory as u64);
    let block = p.shots_per_basis / p.n_subsets as u64;
    let mut records = Vec::with_capacity(t_list.len() * MEASUREMENT_BASES.len());
    for (&t, v) in t_list.iter().zip(&exact.states) {
        for basis in 0..MEASUREMENT_BASES.len() {
            let probs = outcome_probabilities(v, basis);
            let mut runs = Vec::new();
            for s in 0..p.n_subsets {
                let n = if s + 1 == p.n_subsets {
                    p.shots_per_basis - block * (p.n_subsets as u64 - 1)
                } else {
                    block
                };
                let counts = multinomial(n, &probs, &mut rng);
                runs.extend(OUTCOMES.iter().zip(counts).filter(|(_, k)| *k > 0).map(|(o, k)| (*o, k)));
            }
            records.push(ShotRecord {
                trajectory,
                t,
                basis,
                runs,
            });
        }
    }
    Ok(records)
}

/// One subset's estimate of the state at `(trajectory, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShotEstimate {
    pub trajectory: usize,
    pub t: u32,
    pub subset: usize,
    pub state: CoherenceVector,
}

/// Per-subset outcome counts of one record: blocks of `total / n_subsets`
/// shots in shot order, remainder dropped.
fn subset_counts(rec: &ShotRecord, n_subsets: usize) -> Result<Vec<[u64; 4]>> {
    let block = rec.total_shots() / n_subsets as u64;
    if block == 0 {
        return Err(Error::MissingData(format!(
            "trajectory {} t={} basis {}: fewer shots than subsets",
            rec.trajectory, rec.t, MEASUREMENT_BASES[rec.basis]
        )));
    }
    let mut out = vec![[0u64; 4]; n_subsets];
    let (mut s, mut filled) = (0usize, 0u64);
    for &(o, mut k) in &rec.runs {
        let slot = OUTCOMES.iter().position(|x| *x == o).expect("outcome is ±1");
        while k > 0 && s < n_subsets {
            let take = k.min(block - filled);
            out[s][slot] += take;
            k -= take;
            filled += take;
            if filled == block {
                s += 1;
                filled = 0;
            }
        }
    }
    Ok(out)
}

/// Estimates two-qubit coherence vectors from shot records, one per subset
/// per (trajectory, t). Correlators come from the matching basis; single-qubit
/// expectations pool the three bases that measure that axis.
pub fn estimate_coherence_from_counts(records: &[ShotRecord], n_subsets: usize) -> Result<Vec<ShotEstimate>> {
    if n_subsets == 0 {
        return Err(Error::InvalidParameter("n_subsets must be positive".into()));
    }
    let mut grouped: BTreeMap<(usize, u32), [Option<&ShotRecord>; 9]> = BTreeMap::new();
    for rec in records {
        if rec.basis >= MEASUREMENT_BASES.len() {
            return Err(Error::InvalidParameter(format!("basis index {} out of range", rec.basis)));
        }
        grouped.entry((rec.trajectory, rec.t)).or_default()[rec.basis] = Some(rec);
    }
    let mut out = Vec::with_capacity(grouped.len() * n_subsets);
    for ((trajectory, t), recs) in grouped {
        let mut counts = Vec::with_capacity(9);
        for (b, rec) in recs.iter().enumerate() {
            let rec = rec.ok_or_else(|| {
                Error::MissingData(format!(
                    "trajectory {trajectory} t={t}: basis {} missing",
                    MEASUREMENT_BASES[b]
                ))
            })?;
            counts.push(subset_counts(rec, n_subsets)?);
        }
        for subset in 0..n_subsets {
            let mut v = vec![0.0; 16];
            v[0] = 1.0;
            let mut single = [[0.0f64; 2]; 4];
            for (basis, per_subset) in counts.iter().enumerate() {
                let n = per_subset[subset];
                let total = n.iter().sum::<u64>() as f64;
                let (a, b) = basis_axes(basis);
                let (mut sa, mut sb, mut sab) = (0.0, 0.0, 0.0);
                for (o, &k) in OUTCOMES.iter().zip(&n) {
                    let k = k as f64;
                    sa += o.0 as f64 * k;
                    sb += o.1 as f64 * k;
                    sab += (o.0 * o.1) as f64 * k;
                }
                v[pair_index(a, b)] = sab / total;
                single[a][0] += sa / total / 3.0;
                single[b][1] += sb / total / 3.0;
            }
            for axis in 1..4 {
                v[pair_index(axis, 0)] = single[axis][0];
                v[pair_index(0, axis)] = single[axis][1];
            }
            out.push(ShotEstimate {
                trajectory,
                t,
                subset,
                state: CoherenceVector::new(v),
            });
        }
    }
    Ok(out)
}

/// Groups estimates into one trajectory per (source, subset), with the known
/// initial state of each source at `t = 0`.
pub fn trajectories_from_estimates(
    estimates: &[ShotEstimate],
    initials: &BTreeMap<usize, CoherenceVector>,
) -> Result<Vec<Trajectory>> {
    let mut by_key: BTreeMap<(usize, usize), Vec<(u32, CoherenceVector)>> = BTreeMap::new();
    for e in estimates {
        by_key.entry((e.trajectory, e.subset)).or_default().push((e.t, e.state.clone()));
    }
    let n_subsets = by_key.keys().map(|k| k.1 + 1).max().unwrap_or(0);
    by_key
        .into_iter()
        .map(|((source, subset), mut rows)| {
            rows.sort_by_key(|r| r.0);
            let initial = initials
                .get(&source)
                .cloned()
                .ok_or_else(|| Error::MissingData(format!("no initial state for trajectory {source}")))?;
            let (times, states) = rows.into_iter().unzip();
            Trajectory::new(
                source * n_subsets + subset,
                initial,
                times,
                states,
                Provenance::ShotEstimated { source, subset },
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::haar_random_pure_qubit;
    use crate::linalg::max_abs;

    fn product(seed: u64) -> DensityMatrix {
        haar_random_pure_qubit(seed).tensor(&haar_random_pure_qubit(seed + 1000))
    }

    fn record(basis: usize, runs: Vec<(Outcome, u64)>) -> ShotRecord {
        ShotRecord {
            trajectory: 0,
            t: 1,
            basis,
            runs,
        }
    }

    #[test]
    fn gate_is_unitary_and_eighth_power_is_a_phase() {
        let g = zz_gate(0.0);
        assert!(max_abs(&(&g * g.adjoint() - CMat::identity(4, 4))) < 1e-14);
        // Four steps rotate each qubit by π, giving −𝟙 ⊗ −𝟙 = 𝟙.
        let g4 = &g * &g * &g * &g;
        assert!(max_abs(&(g4 - CMat::identity(4, 4))) < 1e-13);
        let rho = product(3);
        let traj = analytic_trajectory(0.0, &rho, &[8, 16]).unwrap();
        for v in &traj.states {
            assert!(v.distance_sqr(&traj.initial).sqrt() < 1e-12);
        }
    }

    #[test]
    fn all_plus_outcomes_in_zz() {
        let mut recs: Vec<ShotRecord> = (0..9).map(|b| record(b, vec![(Outcome(1, -1), 10), (Outcome(-1, 1), 10)])).collect();
        recs[8] = record(8, vec![(Outcome(1, 1), 20)]);
        let est = estimate_coherence_from_counts(&recs, 1).unwrap();
        let basis = PauliBasis::new(2);
        let v = est[0].state.values();
        assert_eq!(v[0], 1.0);
        assert_eq!(v[basis.index_of("ZZ").unwrap()], 1.0);
        // ZI pools the ZX, ZY and ZZ settings, which give 0, 0 and 1.
        assert!((v[basis.index_of("ZI").unwrap()] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(v[basis.index_of("XX").unwrap()], -1.0);
    }

    #[test]
    fn subset_mean_equals_full_sample() {
        let p = DeviceParams::default();
        let recs = emulate_device(&p, &product(1), &[11, 12], 7, 0).unwrap();
        let full = estimate_coherence_from_counts(&recs, 1).unwrap();
        let parts = estimate_coherence_from_counts(&recs, 10).unwrap();
        assert_eq!(parts.len(), 20);
        for f in &full {
            let mut mean = [0.0; 16];
            for e in parts.iter().filter(|e| e.t == f.t) {
                for (m, x) in mean.iter_mut().zip(e.state.values()) {
                    *m += x / 10.0;
                }
            }
            for (m, x) in mean.iter().zip(f.state.values()) {
                assert!((m - x).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn missing_basis_is_reported() {
        let recs: Vec<ShotRecord> = (0..8).map(|b| record(b, vec![(Outcome(1, 1), 5)])).collect();
        let err = estimate_coherence_from_counts(&recs, 1).unwrap_err();
        assert!(err.to_string().contains("ZZ"));
    }

    #[test]
    fn empty_subset_is_reported() {
        let recs: Vec<ShotRecord> = (0..9).map(|b| record(b, vec![(Outcome(1, 1), 5)])).collect();
        assert!(estimate_coherence_from_counts(&recs, 10).is_err());
    }

    #[test]
    fn uniform_outcomes_give_binomial_scatter() {
        let p = DeviceParams {
            v_zz: 0.0,
            ..Default::default()
        };
        let idx = PauliBasis::new(2).index_of("XY").unwrap();
        let mut samples = Vec::new();
        for seed in 0..20 {
            let recs = emulate_device(&p, &DensityMatrix::maximally_mixed(4), &[1], seed, 0).unwrap();
            for e in estimate_coherence_from_counts(&recs, 10).unwrap() {
                samples.push(e.state.values()[idx]);
            }
        }
        let n = samples.len() as f64;
        let mean = samples.iter().sum::<f64>() / n;
        let std = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let expect = 1.0 / 2000f64.sqrt();
        assert!((std / expect - 1.0).abs() < 0.15, "std {std} vs {expect}");
    }

    #[test]
    fn uncoupled_qubits_stay_uncorrelated() {
        let p = DeviceParams {
            v_zz: 0.0,
            ..Default::default()
        };
        let basis = PauliBasis::new(2);
        let times: Vec<u32> = (11..=20).collect();
        let recs = emulate_device(&p, &product(5), &times, 3, 0).unwrap();
        let tol = 5.0 / (p.shots_per_basis as f64).sqrt();
        let mut checked = 0;
        for e in estimate_coherence_from_counts(&recs, 1).unwrap() {
            let v = e.state.values();
            for a in ["X", "Y", "Z"] {
                for b in ["X", "Y", "Z"] {
                    let ea = v[basis.index_of(&format!("{a}I")).unwrap()];
                    let eb = v[basis.index_of(&format!("I{b}")).unwrap()];
                    let eab = v[basis.index_of(&format!("{a}{b}")).unwrap()];
                    let den = ((1.0 - ea * ea) * (1.0 - eb * eb)).sqrt();
                    // Near a local eigenstate the coefficient is dominated by
                    // noise in the denominator; those pairs are skipped.
                    if den > 0.8 {
                        let pearson = (eab - ea * eb) / den;
                        assert!(pearson.abs() < tol, "{a}{b} t={}: {pearson}", e.t);
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 0);
    }

    #[test]
    fn coupling_builds_yy_correlation() {
        let basis = PauliBasis::new(2);
        let rho = product(2);
        let times: Vec<u32> = (1..=20).collect();
        let traj = analytic_trajectory(-0.002, &rho, &times).unwrap();
        let yy = basis.index_of("YY").unwrap();
        let (y1, y2) = (basis.index_of("YI").unwrap(), basis.index_of("IY").unwrap());
        let cov: Vec<f64> = traj
            .states
            .iter()
            .map(|v| (v.values()[yy] - v.values()[y1] * v.values()[y2]).abs())
            .collect();
        // Product states have zero covariance; the coupling makes it grow.
        assert!(cov[19] > cov[3]);
        assert!(cov[19] > 1e-5);
        let flat = analytic_trajectory(0.0, &rho, &times).unwrap();
        for v in &flat.states {
            assert!((v.values()[yy] - v.values()[y1] * v.values()[y2]).abs() < 1e-12);
        }
    }

    #[test]
    fn estimation_error_scales_as_inverse_root_shots() {
        let levels = [500u64, 2000, 8000];
        let rho = product(11);
        let exact = analytic_trajectory(-0.002, &rho, &[5]).unwrap().states[0].clone();
        let mut rms = Vec::new();
        for &shots in &levels {
            let p = DeviceParams {
                v_zz: -0.002,
                shots_per_basis: shots,
                n_subsets: 1,
            };
            let mut acc = 0.0;
            let mut n = 0.0;
            for seed in 0..50 {
                let recs = emulate_device(&p, &rho, &[5], seed, 0).unwrap();
                let est = &estimate_coherence_from_counts(&recs, 1).unwrap()[0].state;
                acc += est.distance_sqr(&exact);
                n += 15.0;
            }
            rms.push((acc / n).sqrt());
        }
        // Least-squares slope of log(rms) against log(shots).
        let xs: Vec<f64> = levels.iter().map(|&s| (s as f64).ln()).collect();
        let ys: Vec<f64> = rms.iter().map(|r| r.ln()).collect();
        let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
        let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!((-slope - 0.5).abs() < 0.1, "exponent {}", -slope);
    }

    #[test]
    fn emulation_is_deterministic_per_trajectory() {
        let p = DeviceParams::default();
        let a = emulate_device(&p, &product(1), &[3], 9, 4).unwrap();
        assert_eq!(a, emulate_device(&p, &product(1), &[3], 9, 4).unwrap());
        assert_ne!(a, emulate_device(&p, &product(1), &[3], 9, 5).unwrap());
        assert!(a.iter().all(|r| r.total_shots() == p.shots_per_basis));
    }
}
