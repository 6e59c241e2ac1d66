//! Fitting a [`StinespringModel`] to trajectory data with Adam.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{CoherenceVector, PauliBasis, StinespringModel, TransferMatrix};
use crate::dataset::TrajectoryDataset;
use crate::error::{Error, Result};
use crate::eval::error_measure;
use crate::linalg::{c, CMat, RMat, RVec};

/// Loss above which a run counts as diverged.
pub const DIVERGENCE_LOSS: f64 = 1e6;
/// Epoch interval between physicality checkpoints.
pub const CHECKPOINT_EVERY: usize = 50;

/// State from which predictions are propagated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "t")]
pub enum Anchor {
    /// The known initial state at `t = 0`.
    #[default]
    Initial,
    /// The recorded (possibly estimated) state at the given time.
    Time(u32),
}

impl Anchor {
    pub fn time(&self) -> u32 {
        match self {
            Anchor::Initial => 0,
            Anchor::Time(t) => *t,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub gamma: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub d_e: usize,
    pub t_min: u32,
    pub t_max: u32,
    pub seed: u64,
    #[serde(default = "default_init_scale")]
    pub init_scale: f64,
    #[serde(default)]
    pub anchor: Anchor,
}

fn default_init_scale() -> f64 {
    0.1
}

impl TrainConfig {
    /// The row shared by all exact-data benchmarks: lr 0.002, gamma 0.999,
    /// batch 128, 400 epochs.
    pub fn standard(d_e: usize, t_max: u32, seed: u64) -> Self {
        Self {
            lr: 0.002,
            gamma: 0.999,
            batch_size: 128,
            n_epochs: 400,
            d_e,
            t_min: 1,
            t_max,
            seed,
            init_scale: default_init_scale(),
            anchor: Anchor::Initial,
        }
    }

    /// First phase on shot data: anchored at the estimate at `t = 10`.
    pub fn device_pretrain(d_e: usize, seed: u64) -> Self {
        Self {
            lr: 0.001,
            gamma: 1.0,
            batch_size: 256,
            n_epochs: 300,
            d_e,
            t_min: 11,
            t_max: 20,
            seed,
            init_scale: default_init_scale(),
            anchor: Anchor::Time(10),
        }
    }

    /// Second phase on shot data: anchored at the exact initial state.
    pub fn device_train(d_e: usize, seed: u64) -> Self {
        Self {
            lr: 0.001,
            gamma: 0.98,
            batch_size: 256,
            n_epochs: 300,
            d_e,
            t_min: 11,
            t_max: 20,
            seed,
            init_scale: default_init_scale(),
            anchor: Anchor::Initial,
        }
    }

    pub fn validate(&self, sys_dim: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.batch_size == 0 || self.n_epochs == 0 {
            return bad("batch_size and n_epochs must be positive".into());
        }
        if self.d_e == 0 || self.d_e > sys_dim * sys_dim {
            return bad(format!("d_e must lie in 1..={}, got {}", sys_dim * sys_dim, self.d_e));
        }
        if self.t_min == 0 || self.t_min > self.t_max {
            return bad(format!("invalid time window {}..={}", self.t_min, self.t_max));
        }
        if self.anchor.time() >= self.t_min {
            return bad(format!(
                "anchor time {} must precede the window start {}",
                self.anchor.time(),
                self.t_min
            ));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return bad("init_scale must be non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update of `theta` in place.
    pub fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        assert_eq!(theta.len(), grad.len());
        assert_eq!(theta.len(), self.m.len());
        self.step += 1;
        let b1t = 1.0 - self.beta1.powi(self.step as i32);
        let b2t = 1.0 - self.beta2.powi(self.step as i32);
        for (((th, g), m), v) in theta.iter_mut().zip(grad).zip(&mut self.m).zip(&mut self.v) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let mhat = *m / b1t;
            let vhat = *v / b2t;
            *th -= lr * mhat / (vhat.sqrt() + self.eps);
        }
    }
}

/// One prediction target: trajectory index into the dataset and time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Target {
    pub traj: usize,
    pub t: u32,
}

/// Every (trajectory, t) pair in the window, after checking that the data
/// covers the window and the anchor.
pub fn window_targets(dataset: &TrajectoryDataset, t_min: u32, t_max: u32, anchor: Anchor) -> Result<Vec<Target>> {
    dataset.require_times(t_min, t_max)?;
    if let Anchor::Time(a) = anchor {
        let missing: Vec<usize> = dataset
            .trajectories
            .iter()
            .filter(|tr| tr.state_at(a).is_none())
            .map(|tr| tr.id)
            .collect();
        if !missing.is_empty() {
            return Err(Error::MissingData(format!(
                "anchor time t={a} absent from trajectories {missing:?}"
            )));
        }
    }
    Ok((0..dataset.len())
        .flat_map(|traj| (t_min..=t_max).map(move |t| Target { traj, t }))
        .collect())
}

fn anchor_state<'a>(dataset: &'a TrajectoryDataset, traj: usize, anchor: Anchor) -> &'a CoherenceVector {
    let tr = &dataset.trajectories[traj];
    match anchor {
        Anchor::Initial => &tr.initial,
        Anchor::Time(a) => tr.state_at(a).expect("anchor presence checked by window_targets"),
    }
}

/// Mean squared coherence-vector distance over `targets`.
pub fn loss_on(transfer: &TransferMatrix, dataset: &TrajectoryDataset, targets: &[Target], anchor: Anchor) -> f64 {
    let groups = group_targets(targets);
    let total: f64 = groups
        .iter()
        .map(|(&traj, times)| {
            let a = anchor_state(dataset, traj, anchor);
            let tr = &dataset.trajectories[traj];
            times
                .iter()
                .map(|&t| {
                    let pred = transfer.propagate_steps(a, (t - anchor.time()) as usize);
                    pred.distance_sqr(tr.state_at(t).expect("target times checked"))
                })
                .sum::<f64>()
        })
        .sum();
    total / targets.len() as f64
}

/// Loss of `model` over the whole training window of `config`.
pub fn loss(model: &StinespringModel, dataset: &TrajectoryDataset, config: &TrainConfig) -> Result<f64> {
    let targets = window_targets(dataset, config.t_min, config.t_max, config.anchor)?;
    let basis = PauliBasis::for_dim(dataset.dim)?;
    Ok(loss_on(&model.transfer_matrix(&basis)?, dataset, &targets, config.anchor))
}

fn group_targets(targets: &[Target]) -> BTreeMap<usize, Vec<u32>> {
    let mut groups: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for t in targets {
        groups.entry(t.traj).or_default().push(t.t);
    }
    groups
}

/// Loss contribution and `∂L/∂T` of one trajectory, by forward propagation
/// and a backward sweep over the powers of `T`.
fn trajectory_adjoint(
    t: &RMat,
    anchor_v: &RVec,
    targets: &[(usize, &CoherenceVector)],
    n_total: f64,
) -> (f64, RMat) {
    let max_s = targets.iter().map(|x| x.0).max().unwrap_or(0);
    let mut xs = Vec::with_capacity(max_s + 1);
    xs.push(anchor_v.clone());
    for s in 1..=max_s {
        let next = t * &xs[s - 1];
        xs.push(next);
    }
    let n = t.nrows();
    let mut seed = vec![RVec::zeros(n); max_s + 1];
    let mut loss = 0.0;
    for &(s, v) in targets {
        let r = &xs[s] - RVec::from_column_slice(v.values());
        loss += r.norm_squared() / n_total;
        seed[s] += r * (2.0 / n_total);
    }
    let mut grad = RMat::zeros(n, n);
    let mut lambda = RVec::zeros(n);
    for s in (1..=max_s).rev() {
        lambda += &seed[s];
        grad.ger(1.0, &lambda, &xs[s - 1], 1.0);
        lambda = t.tr_mul(&lambda);
    }
    (loss, grad)
}

/// Batch loss and its exact gradient with respect to the model parameters.
pub fn loss_gradient(
    model: &StinespringModel,
    dataset: &TrajectoryDataset,
    targets: &[Target],
    anchor: Anchor,
) -> Result<(f64, Vec<f64>)> {
    let basis = PauliBasis::for_dim(model.sys_dim())?;
    let kraus = model.kraus();
    let transfer = kraus.transfer_matrix(&basis)?;
    let t = transfer.matrix();
    let n_total = targets.len() as f64;
    let groups: Vec<(usize, Vec<u32>)> = group_targets(targets).into_iter().collect();

    let parts: Vec<(f64, RMat)> = groups
        .par_iter()
        .map(|(traj, times)| {
            let tr = &dataset.trajectories[*traj];
            let a = anchor_state(dataset, *traj, anchor).as_dvector();
            let tg: Vec<(usize, &CoherenceVector)> = times
                .iter()
                .map(|&tt| ((tt - anchor.time()) as usize, tr.state_at(tt).expect("target times checked")))
                .collect();
            trajectory_adjoint(t, &a, &tg, n_total)
        })
        .collect();
    let mut loss = 0.0;
    let mut g = RMat::zeros(t.nrows(), t.ncols());
    for (l, gi) in parts {
        loss += l;
        g += gi;
    }
    if !loss.is_finite() || g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("loss or transfer-matrix gradient".into()));
    }

    // T[i,j] = Tr[F_i Σ_k K_k F_j K_k†]/d, so
    // dL = (2/d) Re Σ_k Tr[dK_k M_k] with M_k = Σ_j F_j K_k† P_j, P_j = Σ_i G_ij F_i.
    let d = basis.dim();
    let strings = basis.strings();
    let p: Vec<CMat> = (0..strings.len())
        .map(|j| {
            let mut acc = CMat::zeros(d, d);
            for (i, f) in strings.iter().enumerate() {
                if g[(i, j)] != 0.0 {
                    acc += f * c(g[(i, j)], 0.0);
                }
            }
            acc
        })
        .collect();
    let scale = c(2.0 / d as f64, 0.0);
    let m: Vec<CMat> = kraus
        .operators()
        .iter()
        .map(|k| {
            let kd = k.adjoint();
            let mut acc = CMat::zeros(d, d);
            for (f, pj) in strings.iter().zip(&p) {
                acc += f * &kd * pj;
            }
            acc * scale
        })
        .collect();
    let w = model.kraus_cotangent_to_unitary(&m);
    let grad = model.pullback(&w);
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("parameter gradient".into()));
    }
    Ok((loss, grad))
}

/// Physicality snapshot taken every [`CHECKPOINT_EVERY`] epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub completeness_error: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseReport {
    pub config: TrainConfig,
    /// Mean batch loss per epoch.
    pub losses: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub phases: Vec<PhaseReport>,
    pub model: StinespringModel,
    pub wall_time_s: f64,
    pub validation_error: Option<f64>,
    /// Set when training stopped early; `model` then holds the last finite
    /// parameters.
    pub diverged: Option<Divergence>,
}

impl TrainReport {
    /// Loss curve across all phases.
    pub fn losses(&self) -> Vec<f64> {
        self.phases.iter().flat_map(|p| p.losses.iter().copied()).collect()
    }

    /// Converts a diverged run into an error.
    pub fn into_result(self) -> Result<Self> {
        match &self.diverged {
            Some(d) => Err(Error::Diverged {
                epoch: d.epoch,
                loss: d.loss,
            }),
            None => Ok(self),
        }
    }
}

/// Called after every epoch with the epoch index and current model.
pub type EpochObserver<'a> = dyn FnMut(usize, &StinespringModel) + 'a;

/// Runs one optimization phase starting from `model`.
fn run_phase(
    model: &mut StinespringModel,
    dataset: &TrajectoryDataset,
    config: &TrainConfig,
    observer: &mut EpochObserver<'_>,
) -> Result<(PhaseReport, Option<Divergence>)> {
    let targets = window_targets(dataset, config.t_min, config.t_max, config.anchor)?;
    let mut order = targets.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(model.params().len());
    let mut theta = model.params().to_vec();
    let mut report = PhaseReport {
        config: config.clone(),
        losses: Vec::with_capacity(config.n_epochs),
        checkpoints: Vec::new(),
    };
    for epoch in 0..config.n_epochs {
        order.shuffle(&mut rng);
        let lr = config.lr * config.gamma.powi(epoch as i32);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (l, grad) = match loss_gradient(model, dataset, batch, config.anchor) {
                Ok(x) => x,
                Err(Error::NonFinite(_)) => (f64::NAN, Vec::new()),
                Err(e) => return Err(e),
            };
            if !l.is_finite() || l > DIVERGENCE_LOSS {
                report.losses.push(l);
                return Ok((report, Some(Divergence { epoch, loss: l })));
            }
            epoch_loss += l * batch.len() as f64;
            adam.step(&mut theta, &grad, lr);
            model.set_params(&theta)?;
        }
        let epoch_loss = epoch_loss / order.len() as f64;
        report.losses.push(epoch_loss);
        if (epoch + 1) % CHECKPOINT_EVERY == 0 || epoch + 1 == config.n_epochs {
            let err = model.kraus().completeness_error();
            assert!(err <= 1e-10, "completeness violated at epoch {epoch}: {err:e}");
            report.checkpoints.push(Checkpoint {
                epoch,
                completeness_error: err,
                loss: epoch_loss,
            });
        }
        observer(epoch, model);
    }
    Ok((report, None))
}

fn initial_model(dim: usize, config: &TrainConfig) -> StinespringModel {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    StinespringModel::random(dim, config.d_e, config.init_scale, &mut rng)
}

fn finish(
    phases: Vec<PhaseReport>,
    model: StinespringModel,
    start: Instant,
    diverged: Option<Divergence>,
    validation: Option<Validation<'_>>,
) -> Result<TrainReport> {
    let validation_error = match (validation, &diverged) {
        (Some(val), None) => {
            let basis = PauliBasis::for_dim(model.sys_dim())?;
            Some(error_measure(&model.transfer_matrix(&basis)?, val.data, val.t_min, val.t_max)?)
        }
        _ => None,
    };
    Ok(TrainReport {
        phases,
        model,
        wall_time_s: start.elapsed().as_secs_f64(),
        validation_error,
        diverged,
    })
}

/// Validation data and the time window of the error measure.
#[derive(Debug, Clone, Copy)]
pub struct Validation<'a> {
    pub data: &'a TrajectoryDataset,
    pub t_min: u32,
    pub t_max: u32,
}

/// Trains a fresh model, reporting the validation error if asked.
pub fn train(
    dataset: &TrajectoryDataset,
    config: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<TrainReport> {
    train_observed(dataset, config, validation, &mut |_, _| {})
}

pub fn train_observed(
    dataset: &TrajectoryDataset,
    config: &TrainConfig,
    validation: Option<Validation<'_>>,
    observer: &mut EpochObserver<'_>,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::MissingData("training dataset is empty".into()));
    }
    config.validate(dataset.dim)?;
    let start = Instant::now();
    let mut model = initial_model(dataset.dim, config);
    let (phase, diverged) = run_phase(&mut model, dataset, config, observer)?;
    finish(vec![phase], model, start, diverged, validation)
}

/// Two-phase schedule for shot data: a short-horizon phase anchored at an
/// intermediate estimate, then the full-horizon phase from the initial state.
pub fn pretrain_then_train(
    dataset: &TrajectoryDataset,
    pretrain: &TrainConfig,
    main: &TrainConfig,
    validation: Option<Validation<'_>>,
) -> Result<TrainReport> {
    if dataset.is_empty() {
        return Err(Error::MissingData("training dataset is empty".into()));
    }
    pretrain.validate(dataset.dim)?;
    main.validate(dataset.dim)?;
    if pretrain.d_e != main.d_e {
        return Err(Error::Config("both phases must use the same d_e".into()));
    }
    let start = Instant::now();
    let mut model = initial_model(dataset.dim, pretrain);
    let (first, diverged) = run_phase(&mut model, dataset, pretrain, &mut |_, _| {})?;
    if diverged.is_some() {
        return finish(vec![first], model, start, diverged, validation);
    }
    let (second, diverged) = run_phase(&mut model, dataset, main, &mut |_, _| {})?;
    finish(vec![first, second], model, start, diverged, validation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{coherence_from_density, haar_random_pure_qubit, DensityMatrix, KrausSet};
    use crate::dataset::Trajectory;

    fn dataset_from(model_t: &TransferMatrix, dim: usize, m: usize, steps: u32, seed: u64) -> TrajectoryDataset {
        let basis = PauliBasis::for_dim(dim).unwrap();
        let trajs = (0..m)
            .map(|i| {
                let mut rho = haar_random_pure_qubit(seed + i as u64);
                while rho.dim() < dim {
                    rho = rho.tensor(&haar_random_pure_qubit(seed + 1000 + i as u64));
                }
                let v0 = coherence_from_density(&rho, &basis).unwrap();
                Trajectory::from_transfer(i, model_t, v0, steps)
            })
            .collect();
        TrajectoryDataset::new(dim, trajs).unwrap()
    }

    fn random_model(d: usize, de: usize, seed: u64, scale: f64) -> StinespringModel {
        StinespringModel::random(d, de, scale, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    fn fd_check(model: &StinespringModel, data: &TrajectoryDataset, targets: &[Target], anchor: Anchor) -> f64 {
        let (_, grad) = loss_gradient(model, data, targets, anchor).unwrap();
        let basis = PauliBasis::for_dim(model.sys_dim()).unwrap();
        let h = 1e-5;
        let mut fd = vec![0.0; grad.len()];
        for i in 0..grad.len() {
            let mut p = model.params().to_vec();
            p[i] += h;
            let lp = loss_on(
                &StinespringModel::new(model.sys_dim(), model.env_dim(), p.clone()).unwrap().transfer_matrix(&basis).unwrap(),
                data,
                targets,
                anchor,
            );
            p[i] -= 2.0 * h;
            let lm = loss_on(
                &StinespringModel::new(model.sys_dim(), model.env_dim(), p).unwrap().transfer_matrix(&basis).unwrap(),
                data,
                targets,
                anchor,
            );
            fd[i] = (lp - lm) / (2.0 * h);
        }
        let num: f64 = grad.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = fd.iter().map(|x| x * x).sum::<f64>().sqrt();
        num / den
    }

    #[test]
    fn adam_with_zero_gradient_keeps_parameters() {
        let mut s = AdamState::new(3);
        let mut th = vec![0.5, -1.0, 2.0];
        s.step(&mut th, &[0.0; 3], 0.1);
        assert_eq!(th, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn adam_first_step_with_unit_gradient() {
        let mut s = AdamState::new(4);
        let mut th = vec![0.0; 4];
        s.step(&mut th, &[1.0; 4], 0.001);
        // m̂ = v̂ = 1, so the step is lr/(1 + eps).
        for x in th {
            assert!((x + 0.001 / (1.0 + 1e-8)).abs() < 1e-15);
        }
    }

    #[test]
    fn self_generated_data_has_zero_loss_and_gradient() {
        let model = random_model(2, 2, 4, 0.3);
        let t = model.transfer_matrix(&PauliBasis::new(1)).unwrap();
        let data = dataset_from(&t, 2, 4, 5, 10);
        let targets = window_targets(&data, 1, 5, Anchor::Initial).unwrap();
        let (l, g) = loss_gradient(&model, &data, &targets, Anchor::Initial).unwrap();
        assert!(l <= 1e-20, "{l}");
        assert!(g.iter().map(|x| x * x).sum::<f64>().sqrt() <= 1e-8);
    }

    #[test]
    fn identity_model_against_reset_data() {
        let zero = c(0., 0.);
        let reset = KrausSet::new(vec![
            CMat::from_row_slice(2, 2, &[c(1., 0.), zero, zero, zero]),
            CMat::from_row_slice(2, 2, &[zero, c(1., 0.), zero, zero]),
        ])
        .unwrap();
        let basis = PauliBasis::new(1);
        let t = reset.transfer_matrix(&basis).unwrap();
        let v0 = coherence_from_density(&DensityMatrix::basis_state(2, 1), &basis).unwrap();
        let traj = Trajectory::from_transfer(0, &t, v0, 1);
        let data = TrajectoryDataset::new(2, vec![traj]).unwrap();
        let cfg = TrainConfig::standard(2, 1, 0);
        let l = loss(&StinespringModel::identity(2, 2), &data, &cfg).unwrap();
        assert!((l - 4.0).abs() < 1e-14);
    }

    #[test]
    fn loss_equals_scaled_trace_distance() {
        let model = random_model(2, 2, 1, 0.5);
        let other = random_model(2, 3, 2, 0.5);
        let basis = PauliBasis::new(1);
        let data = dataset_from(&other.transfer_matrix(&basis).unwrap(), 2, 3, 4, 0);
        let cfg = TrainConfig::standard(2, 4, 0);
        let l = loss(&model, &data, &cfg).unwrap();
        let kraus = model.kraus();
        let mut acc = 0.0;
        for tr in &data.trajectories {
            let mut rho = crate::channel::density_from_coherence(&tr.initial, &basis).unwrap();
            for v in &tr.states {
                rho = kraus.apply(&rho).unwrap();
                let exact = crate::channel::density_from_coherence(v, &basis).unwrap();
                let diff = rho.matrix() - exact.matrix();
                acc += (&diff * &diff).trace().re;
            }
        }
        let expect = 2.0 * acc / 12.0;
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let model = random_model(2, 2, 7, 0.4);
        let truth = random_model(2, 3, 8, 0.6);
        let data = dataset_from(&truth.transfer_matrix(&PauliBasis::new(1)).unwrap(), 2, 3, 3, 20);
        let targets = window_targets(&data, 1, 3, Anchor::Initial).unwrap();
        let rel = fd_check(&model, &data, &targets, Anchor::Initial);
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn gradient_with_intermediate_anchor_and_two_qubits() {
        let model = random_model(4, 2, 3, 0.2);
        let truth = random_model(4, 2, 5, 0.3);
        let data = dataset_from(&truth.transfer_matrix(&PauliBasis::new(2)).unwrap(), 4, 2, 5, 30);
        let targets = window_targets(&data, 3, 5, Anchor::Time(2)).unwrap();
        let rel = fd_check(&model, &data, &targets, Anchor::Time(2));
        assert!(rel < 1e-4, "relative error {rel}");
    }

    #[test]
    fn batch_gradient_is_mean_of_single_gradients() {
        let model = random_model(2, 2, 11, 0.4);
        let truth = random_model(2, 2, 12, 0.6);
        let data = dataset_from(&truth.transfer_matrix(&PauliBasis::new(1)).unwrap(), 2, 3, 4, 0);
        let targets = window_targets(&data, 1, 4, Anchor::Initial).unwrap();
        let (_, full) = loss_gradient(&model, &data, &targets, Anchor::Initial).unwrap();
        let mut mean = vec![0.0; full.len()];
        for tg in &targets {
            let (_, g) = loss_gradient(&model, &data, std::slice::from_ref(tg), Anchor::Initial).unwrap();
            for (m, x) in mean.iter_mut().zip(g) {
                *m += x / targets.len() as f64;
            }
        }
        for (a, b) in full.iter().zip(&mean) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn training_is_deterministic_and_reduces_loss() {
        let truth = random_model(2, 2, 3, 0.5);
        let data = dataset_from(&truth.transfer_matrix(&PauliBasis::new(1)).unwrap(), 2, 6, 5, 40);
        let mut cfg = TrainConfig::standard(2, 5, 1);
        cfg.n_epochs = 60;
        cfg.lr = 0.01;
        cfg.batch_size = 8;
        let a = train(&data, &cfg, None).unwrap();
        let b = train(&data, &cfg, None).unwrap();
        assert_eq!(a.model, b.model);
        assert_eq!(a.losses(), b.losses());
        let losses = a.losses();
        assert!(losses.last().unwrap() < &losses[0]);
        assert_eq!(a.phases[0].checkpoints.len(), 2);
    }

    #[test]
    fn missing_window_times_are_rejected() {
        let truth = random_model(2, 2, 3, 0.5);
        let data = dataset_from(&truth.transfer_matrix(&PauliBasis::new(1)).unwrap(), 2, 2, 3, 0);
        let cfg = TrainConfig::standard(2, 5, 1);
        assert!(matches!(train(&data, &cfg, None), Err(Error::MissingData(_))));
    }

    #[test]
    fn divergence_guard_stops_training() {
        let truth = random_model(2, 2, 3, 0.5);
        let mut data = dataset_from(&truth.transfer_matrix(&PauliBasis::new(1)).unwrap(), 2, 2, 3, 0);
        data.trajectories[0].states[0] = CoherenceVector::new(vec![1.0, 1e4, 0.0, 0.0]);
        let mut cfg = TrainConfig::standard(2, 3, 1);
        cfg.n_epochs = 3;
        let report = train(&data, &cfg, None).unwrap();
        assert!(report.diverged.is_some());
        assert!(matches!(report.into_result(), Err(Error::Diverged { .. })));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base = TrainConfig::standard(2, 5, 0);
        let mut c1 = base.clone();
        c1.gamma = 1.5;
        assert!(c1.validate(2).is_err());
        let mut c2 = base.clone();
        c2.d_e = 5;
        assert!(c2.validate(2).is_err());
        let mut c3 = base;
        c3.anchor = Anchor::Time(3);
        assert!(c3.validate(2).is_err());
    }
}
