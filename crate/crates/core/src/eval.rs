//! Diagnostics: validation error, Pearson cross-correlations, purity, the
//! Floquet-generator existence test and the ZZ-coupling fit.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{choi_of, CoherenceVector, PauliBasis, TransferMatrix};
use crate::dataset::TrajectoryDataset;
use crate::dynamics::device::device_transfer;
use crate::error::{Error, Result};
use crate::linalg::{c, expm_real, hermitian_eigenvalues, logm, max_abs_real, to_complex, CMat, LogmFailure, RMat};

/// Per-trajectory `(1/T) Σ_t Tr[(ρ_ML − ρ)²]/Tr[ρ²]` over `t_min..=t_max`,
/// predictions propagated from each trajectory's initial state.
pub fn trajectory_errors(
    transfer: &TransferMatrix,
    validation: &TrajectoryDataset,
    t_min: u32,
    t_max: u32,
) -> Result<Vec<f64>> {
    validation.require_times(t_min, t_max)?;
    validation
        .trajectories
        .iter()
        .map(|tr| {
            let mut v = tr.initial.clone();
            for _ in 0..t_min - 1 {
                v = transfer.propagate(&v);
            }
            let mut acc = 0.0;
            for t in t_min..=t_max {
                v = transfer.propagate(&v);
                let exact = tr.state_at(t).expect("times checked");
                // The factors of 1/d in numerator and denominator cancel.
                let den = exact.norm_sqr();
                if !(den > 0.0) {
                    return Err(Error::InvalidParameter(format!(
                        "trajectory {} has zero purity at t={t}",
                        tr.id
                    )));
                }
                acc += v.distance_sqr(exact) / den;
            }
            Ok(acc / (t_max - t_min + 1) as f64)
        })
        .collect()
}

/// Validation error ε: mean of [`trajectory_errors`].
pub fn error_measure(transfer: &TransferMatrix, validation: &TrajectoryDataset, t_min: u32, t_max: u32) -> Result<f64> {
    if validation.is_empty() {
        return Err(Error::MissingData("validation set is empty".into()));
    }
    let errs = trajectory_errors(transfer, validation, t_min, t_max)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// `Tr ρ² = |v|²/d`.
pub fn purity(v: &CoherenceVector) -> f64 {
    v.norm_sqr() / v.dim() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Position of the Pauli matrix in the (𝟙, X, Y, Z) ordering.
    pub fn index(self) -> usize {
        self as usize + 1
    }

    pub fn letter(self) -> char {
        ['x', 'y', 'z'][self as usize]
    }

    pub fn parse(s: &str) -> Option<Axis> {
        match s {
            "x" | "X" => Some(Axis::X),
            "y" | "Y" => Some(Axis::Y),
            "z" | "Z" => Some(Axis::Z),
            _ => None,
        }
    }
}

/// All nine ordered axis pairs.
pub fn all_axis_pairs() -> Vec<(Axis, Axis)> {
    Axis::ALL
        .iter()
        .flat_map(|&a| Axis::ALL.iter().map(move |&b| (a, b)))
        .collect()
}

/// Denominators below this leave the coefficient undefined.
pub const PEARSON_MIN_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pearson {
    /// `None` when the state is (nearly) a local eigenstate of either axis.
    pub value: Option<f64>,
    /// A single-qubit expectation exceeded 1 in magnitude and was clamped.
    pub clamped: bool,
}

/// Pearson coefficient of `σ_{a1} ⊗ 𝟙` and `𝟙 ⊗ σ_{a2}` in a two-qubit state.
pub fn pearson(v: &CoherenceVector, a1: Axis, a2: Axis) -> Result<Pearson> {
    if v.len() != 16 {
        return Err(Error::DimensionMismatch {
            expected: 16,
            found: v.len(),
        });
    }
    let x = v.values();
    let limit = 1.0 - 1e-12;
    let mut clamped = false;
    let mut local = |e: f64| {
        if e.abs() > 1.0 {
            clamped = true;
            e.signum() * limit
        } else {
            e
        }
    };
    let e1 = local(x[4 * a1.index()]);
    let e2 = local(x[a2.index()]);
    let e12 = x[4 * a1.index() + a2.index()];
    let den = ((1.0 - e1 * e1) * (1.0 - e2 * e2)).sqrt();
    let value = (den >= PEARSON_MIN_DENOMINATOR).then(|| (e12 - e1 * e2) / den);
    Ok(Pearson { value, clamped })
}

/// Standard deviation of the Pearson coefficient estimated from `shots`
/// shots per measurement setting, to first order in the shot noise.
///
/// The correlator comes from one setting, each single-qubit expectation is
/// pooled over the three settings measuring that axis; the covariances
/// follow from the shots the estimators share.
pub fn pearson_shot_std(v: &CoherenceVector, a1: Axis, a2: Axis, shots: u64) -> Option<f64> {
    let x = v.values();
    let (e1, e2, e12) = (x[4 * a1.index()], x[a2.index()], x[4 * a1.index() + a2.index()]);
    let (q1, q2) = (1.0 - e1 * e1, 1.0 - e2 * e2);
    let den = (q1 * q2).max(0.0).sqrt();
    if den < PEARSON_MIN_DENOMINATOR {
        return None;
    }
    let cval = (e12 - e1 * e2) / den;
    let n = shots as f64;
    // Order: (e12, e1, e2).
    let g = [1.0 / den, -e2 / den + cval * e1 / q1, -e1 / den + cval * e2 / q2];
    let cov = [
        [(1.0 - e12 * e12) / n, (e2 - e1 * e12) / (3.0 * n), (e1 - e2 * e12) / (3.0 * n)],
        [(e2 - e1 * e12) / (3.0 * n), q1 / (3.0 * n), (e12 - e1 * e2) / (9.0 * n)],
        [(e1 - e2 * e12) / (3.0 * n), (e12 - e1 * e2) / (9.0 * n), q2 / (3.0 * n)],
    ];
    let mut var = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            var += g[i] * cov[i][j] * g[j];
        }
    }
    Some(var.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FloquetVerdict {
    Exists,
    Absent,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FloquetResult {
    pub verdict: FloquetVerdict,
    /// Generator in the Pauli basis (rows), scaled to physical time, when it
    /// exists.
    pub generator: Option<Vec<Vec<f64>>>,
    /// Smallest eigenvalue of the projected Choi matrix of the generator.
    pub min_ccp_eigenvalue: Option<f64>,
    pub note: String,
}

impl FloquetResult {
    pub fn exists(&self) -> bool {
        self.verdict == FloquetVerdict::Exists
    }

    pub fn generator_matrix(&self) -> Option<RMat> {
        self.generator
            .as_ref()
            .map(|rows| RMat::from_fn(rows.len(), rows.len(), |i, j| rows[i][j]))
    }

    fn verdict(verdict: FloquetVerdict, note: impl Into<String>) -> Self {
        Self {
            verdict,
            generator: None,
            min_ccp_eigenvalue: None,
            note: note.into(),
        }
    }
}

pub const HERMITICITY_TOL: f64 = 1e-8;
pub const CCP_TOL: f64 = 1e-8;
pub const RECONSTRUCTION_TOL: f64 = 1e-6;

/// Decides whether a Lindblad generator `𝓛_F` with `exp((2π/ω) 𝓛_F) = T`
/// exists on the principal branch of the logarithm.
pub fn floquet_check(transfer: &TransferMatrix, omega: f64) -> Result<FloquetResult> {
    let t = transfer.matrix();
    if t.nrows() != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: t.nrows(),
        });
    }
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter("omega must be positive".into()));
    }
    let tc = to_complex(t);
    let eig: Vec<_> = t.complex_eigenvalues().iter().copied().collect();
    let log = match logm(&tc, &eig) {
        Ok(l) => l,
        Err(LogmFailure::NegativeSpectrum) => {
            return Ok(FloquetResult::verdict(
                FloquetVerdict::Absent,
                format!("spectrum touches the negative real axis: {eig:?}"),
            ))
        }
        Err(LogmFailure::NoConvergence) => {
            return Ok(FloquetResult::verdict(
                FloquetVerdict::Inconclusive,
                "matrix logarithm did not converge",
            ))
        }
    };
    let scale = log.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let imag = log.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if imag > HERMITICITY_TOL * scale {
        return Ok(FloquetResult::verdict(
            FloquetVerdict::Absent,
            format!("principal logarithm is not Hermiticity preserving (imaginary part {imag:e})"),
        ));
    }
    let l = log.map(|z| z.re);
    let back = expm_real(&l);
    let recon = max_abs_real(&(&back - t));
    if recon > RECONSTRUCTION_TOL {
        return Ok(FloquetResult::verdict(
            FloquetVerdict::Inconclusive,
            format!("exp(log T) misses T by {recon:e}"),
        ));
    }

    let basis = PauliBasis::new(1);
    let gen = TransferMatrix::new(l.clone());
    let choi = choi_of(2, |x| gen.apply_matrix(&basis, x));
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let phi = CMat::from_column_slice(4, 1, &[c(h, 0.), c(0., 0.), c(0., 0.), c(h, 0.)]);
    let proj = CMat::identity(4, 4) - &phi * phi.adjoint();
    let min_eig = hermitian_eigenvalues(&(&proj * &choi * &proj))[0];
    let verdict = if min_eig >= -CCP_TOL {
        FloquetVerdict::Exists
    } else {
        FloquetVerdict::Absent
    };
    let note = match verdict {
        FloquetVerdict::Exists => "principal logarithm is conditionally completely positive".to_string(),
        _ => format!("principal logarithm violates conditional complete positivity ({min_eig:e})"),
    };
    Ok(FloquetResult {
        verdict,
        generator: (verdict == FloquetVerdict::Exists).then(|| {
            let g = l * (omega / (2.0 * PI));
            g.row_iter().map(|r| r.iter().copied().collect()).collect()
        }),
        min_ccp_eigenvalue: Some(min_eig),
        note,
    })
}

/// Observed Pearson coefficients along one trajectory of known initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonSeries {
    pub initial: CoherenceVector,
    /// `(t, a1, a2, C)`.
    pub points: Vec<(u32, Axis, Axis, f64)>,
}

/// Pearson series of every trajectory of `data` restricted to times in
/// `[t_min, t_max]` and the given axis pairs; undefined coefficients are
/// dropped.
pub fn pearson_series(
    data: &TrajectoryDataset,
    pairs: &[(Axis, Axis)],
    t_min: u32,
    t_max: u32,
) -> Result<Vec<PearsonSeries>> {
    if data.dim != 4 {
        return Err(Error::DimensionMismatch {
            expected: 4,
            found: data.dim,
        });
    }
    data.trajectories
        .iter()
        .map(|tr| {
            let mut points = Vec::new();
            for (&t, v) in tr.times.iter().zip(&tr.states) {
                if t < t_min || t > t_max {
                    continue;
                }
                for &(a1, a2) in pairs {
                    if let Some(c) = pearson(v, a1, a2)?.value {
                        points.push((t, a1, a2, c));
                    }
                }
            }
            Ok(PearsonSeries {
                initial: tr.initial.clone(),
                points,
            })
        })
        .collect()
}

/// Residual weighting of the ZZ fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ZzWeighting {
    Uniform,
    /// Residuals divided by the model's shot-noise standard deviation at
    /// this many shots per setting (see [`pearson_shot_std`]).
    ShotNoise { shots: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZzFitOptions {
    pub v_min: f64,
    pub v_max: f64,
    pub grid_points: usize,
    pub tol: f64,
    pub weighting: ZzWeighting,
}

impl Default for ZzFitOptions {
    fn default() -> Self {
        Self {
            v_min: -0.05,
            v_max: 0.05,
            grid_points: 201,
            tol: 1e-5,
            weighting: ZzWeighting::Uniform,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZzFit {
    pub v: f64,
    pub sigma: f64,
    /// Sum of squared residuals at the minimizer.
    pub objective: f64,
    pub n_points: usize,
}

/// Sum of squared (optionally weighted) differences between observed
/// coefficients and those generated by the gate with coupling `v`; points
/// undefined in the model are skipped. Returns the sum and the number of
/// points used.
pub fn zz_objective(series: &[PearsonSeries], v: f64, weighting: ZzWeighting) -> (f64, usize) {
    let t = device_transfer(v);
    let mut sum = 0.0;
    let mut n = 0;
    for s in series {
        let max_t = s.points.iter().map(|p| p.0).max().unwrap_or(0);
        let mut states = Vec::with_capacity(max_t as usize + 1);
        states.push(s.initial.clone());
        for k in 1..=max_t as usize {
            let next = t.propagate(&states[k - 1]);
            states.push(next);
        }
        for &(tt, a1, a2, obs) in &s.points {
            let st = &states[tt as usize];
            if let Ok(Pearson { value: Some(model), .. }) = pearson(st, a1, a2) {
                let w = match weighting {
                    ZzWeighting::Uniform => 1.0,
                    ZzWeighting::ShotNoise { shots } => match pearson_shot_std(st, a1, a2, shots) {
                        Some(sd) if sd > 0.0 => 1.0 / (sd * sd),
                        _ => continue,
                    },
                };
                sum += w * (obs - model).powi(2);
                n += 1;
            }
        }
    }
    (sum, n)
}

/// Least-squares estimate of the ZZ coupling from Pearson time series: grid
/// search over the bracket, golden-section refinement, and an uncertainty
/// from the curvature of the objective.
pub fn fit_zz_coupling(series: &[PearsonSeries], opts: &ZzFitOptions) -> Result<ZzFit> {
    let mut times: Vec<u32> = series.iter().flat_map(|s| s.points.iter().map(|p| p.0)).collect();
    times.sort_unstable();
    times.dedup();
    if times.len() < 5 {
        return Err(Error::MissingData(format!(
            "need Pearson series over at least 5 times, got {}",
            times.len()
        )));
    }
    if !(opts.v_min < opts.v_max) || opts.grid_points < 3 {
        return Err(Error::InvalidParameter("invalid V bracket".into()));
    }
    let f = |v: f64| zz_objective(series, v, opts.weighting).0;
    let step = (opts.v_max - opts.v_min) / (opts.grid_points - 1) as f64;
    let grid: Vec<f64> = (0..opts.grid_points)
        .into_par_iter()
        .map(|i| f(opts.v_min + step * i as f64))
        .collect();
    let best = grid
        .iter()
        .enumerate()
        .fold(0, |b, (i, &val)| if val < grid[b] { i } else { b });
    let mut lo = opts.v_min + step * best.saturating_sub(1) as f64;
    let mut hi = opts.v_min + step * (best + 1).min(opts.grid_points - 1) as f64;

    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > opts.tol {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = f(x2);
        }
    }
    let v = 0.5 * (lo + hi);
    let (objective, n_points) = zz_objective(series, v, opts.weighting);

    let h = 1e-4;
    let curvature = (f(v + h) - 2.0 * objective + f(v - h)) / (h * h);
    let spread = grid.iter().cloned().fold(f64::MIN, f64::max) - grid[best];
    if !(curvature > 0.0) || spread <= 1e-14 * grid[best].abs().max(1e-300) {
        return Err(Error::InvalidParameter(
            "objective is flat in V: coupling is unidentifiable from these series".into(),
        ));
    }
    let dof = n_points.saturating_sub(1).max(1) as f64;
    let sigma = (2.0 * objective / dof / curvature).sqrt().max(opts.tol);
    Ok(ZzFit {
        v,
        sigma,
        objective,
        n_points,
    })
}
