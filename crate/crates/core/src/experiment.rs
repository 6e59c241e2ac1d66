//! Experiment configuration and generation of training/validation data for
//! each benchmark scenario.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{coherence_from_density, CoherenceVector, DensityMatrix, PauliBasis};
use crate::dataset::{Trajectory, TrajectoryDataset};
use crate::dynamics::circuit::{simulate_circuit_subsystem, CircuitParams};
use crate::dynamics::device::{
    analytic_trajectory, emulate_device, estimate_coherence_from_counts, trajectories_from_estimates,
    DeviceParams, ShotRecord,
};
use crate::dynamics::initial::{random_product_state, InitRecipe};
use crate::dynamics::lindblad::{
    integrate_periodic_lindblad, simulate_two_qubit_lindblad, PeriodicLindbladParams, TwoQubitLindbladParams,
};
use crate::dynamics::transpose::transpose_trajectory;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", content = "params", rename_all = "snake_case")]
pub enum Scenario {
    PeriodicLindblad(PeriodicLindbladParams),
    CircuitSubsystem(CircuitParams),
    TwoQubitLindblad(TwoQubitLindbladParams),
    TransposeChannel,
    DeviceEmulation(DeviceParams),
}

impl Scenario {
    pub fn name(&self) -> &'static str {
        match self {
            Scenario::PeriodicLindblad(_) => "periodic_lindblad",
            Scenario::CircuitSubsystem(_) => "circuit_subsystem",
            Scenario::TwoQubitLindblad(_) => "two_qubit_lindblad",
            Scenario::TransposeChannel => "transpose_channel",
            Scenario::DeviceEmulation(_) => "device_emulation",
        }
    }

    pub fn n_qubits(&self) -> usize {
        match self {
            Scenario::PeriodicLindblad(_) | Scenario::TransposeChannel => 1,
            _ => 2,
        }
    }

    pub fn dim(&self) -> usize {
        1 << self.n_qubits()
    }

    fn validate(&self) -> Result<()> {
        match self {
            Scenario::PeriodicLindblad(p) => p.validate(),
            Scenario::CircuitSubsystem(p) => p.validate(),
            Scenario::TwoQubitLindblad(p) => p.validate(),
            Scenario::TransposeChannel => Ok(()),
            Scenario::DeviceEmulation(p) => p.validate(),
        }
        .map_err(|e| Error::Config(e.to_string()))
    }
}

/// One benchmark run: data generation, training and evaluation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(flatten)]
    pub scenario: Scenario,
    /// Training initial conditions.
    pub m: usize,
    /// Validation initial conditions.
    pub r: usize,
    /// Final simulated (and validated) time `T`.
    pub t_final: u32,
    /// First validated time.
    #[serde(default = "one")]
    pub eval_t_min: u32,
    /// Seed of the data generation streams.
    pub seed: u64,
    #[serde(default)]
    pub init: InitRecipe,
    pub train: TrainConfig,
    /// Present only for shot data: the short-horizon first phase.
    #[serde(default)]
    pub pretrain: Option<TrainConfig>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn one() -> u32 {
    1
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.m == 0 || self.r == 0 {
            return Err(Error::Config("m and r must be at least 1".into()));
        }
        if self.t_final == 0 || self.eval_t_min == 0 || self.eval_t_min > self.t_final {
            return Err(Error::Config(format!(
                "invalid validation window {}..={}",
                self.eval_t_min, self.t_final
            )));
        }
        self.train.validate(self.scenario.dim())?;
        if self.train.t_max > self.t_final {
            return Err(Error::Config(format!(
                "training window ends at {} beyond t_final {}",
                self.train.t_max, self.t_final
            )));
        }
        if let Some(pre) = &self.pretrain {
            pre.validate(self.scenario.dim())?;
            if pre.t_max > self.t_final {
                return Err(Error::Config("pre-training window ends beyond t_final".into()));
            }
        }
        Ok(())
    }

    /// Pre-training phase used on shot data: the configured one, else the
    /// preset for device scenarios.
    pub fn effective_pretrain(&self) -> Option<TrainConfig> {
        match (&self.pretrain, &self.scenario) {
            (Some(pre), _) => Some(pre.clone()),
            (None, Scenario::DeviceEmulation(_)) => Some(TrainConfig::device_pretrain(self.train.d_e, self.train.seed)),
            (None, _) => None,
        }
    }

    /// Times at which the device is measured: from the earliest anchor or
    /// window start up to `t_final`.
    pub fn device_times(&self) -> Vec<u32> {
        let mut first = self.train.t_min.min(self.eval_t_min);
        if let Some(pre) = &self.effective_pretrain() {
            first = first.min(pre.t_min).min(pre.anchor.time().max(1));
        }
        (first..=self.t_final).collect()
    }
}

/// Generated data of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub train: TrajectoryDataset,
    pub validation: TrajectoryDataset,
    /// Raw shots for device scenarios.
    pub train_shots: Option<Vec<ShotRecord>>,
    pub validation_shots: Option<Vec<ShotRecord>>,
}

/// Initial state of trajectory `index`; validation uses indices after the
/// training ones so the two sets never share a stream.
pub fn initial_state(cfg: &ExperimentConfig, index: usize) -> DensityMatrix {
    random_product_state(cfg.init, cfg.scenario.n_qubits(), cfg.seed, index as u64)
}

fn exact_trajectory(cfg: &ExperimentConfig, rho0: &DensityMatrix) -> Result<Trajectory> {
    let t = cfg.t_final;
    match &cfg.scenario {
        Scenario::PeriodicLindblad(p) => integrate_periodic_lindblad(p, rho0, t),
        Scenario::CircuitSubsystem(p) => simulate_circuit_subsystem(p, rho0, t),
        Scenario::TwoQubitLindblad(p) => simulate_two_qubit_lindblad(p, rho0, t),
        Scenario::TransposeChannel => transpose_trajectory(rho0, t),
        Scenario::DeviceEmulation(p) => analytic_trajectory(p.v_zz, rho0, &(1..=t).collect::<Vec<_>>()),
    }
}

fn exact_dataset(cfg: &ExperimentConfig, indices: std::ops::Range<usize>) -> Result<TrajectoryDataset> {
    let trajs = indices
        .into_par_iter()
        .map(|i| {
            let mut tr = exact_trajectory(cfg, &initial_state(cfg, i))?;
            tr.id = i;
            Ok(tr)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(cfg.scenario.dim(), trajs)
}

fn shot_dataset(
    cfg: &ExperimentConfig,
    p: &DeviceParams,
    indices: std::ops::Range<usize>,
    n_subsets: usize,
) -> Result<(TrajectoryDataset, Vec<ShotRecord>)> {
    let times = cfg.device_times();
    let basis = PauliBasis::new(2);
    let per_traj = indices
        .clone()
        .into_par_iter()
        .map(|i| {
            let rho = initial_state(cfg, i);
            let recs = emulate_device(p, &rho, &times, cfg.seed, i)?;
            Ok((i, coherence_from_density(&rho, &basis)?, recs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut initials = BTreeMap::new();
    let mut records = Vec::new();
    for (i, v0, recs) in per_traj {
        initials.insert(i, v0);
        records.extend(recs);
    }
    let estimates = estimate_coherence_from_counts(&records, n_subsets)?;
    let trajs = trajectories_from_estimates(&estimates, &initials)?;
    Ok((TrajectoryDataset::new(4, trajs)?, records))
}

/// Shot-free counterpart of the device data: exact expectations at the
/// measured times, one trajectory per initial condition.
pub fn noiseless_device_dataset(cfg: &ExperimentConfig, indices: std::ops::Range<usize>) -> Result<TrajectoryDataset> {
    let Scenario::DeviceEmulation(p) = &cfg.scenario else {
        return Err(Error::Config("not a device scenario".into()));
    };
    let times = cfg.device_times();
    let trajs = indices
        .map(|i| {
            let mut tr = analytic_trajectory(p.v_zz, &initial_state(cfg, i), &times)?;
            tr.id = i;
            Ok(tr)
        })
        .collect::<Result<Vec<_>>>()?;
    TrajectoryDataset::new(4, trajs)
}

/// Generates the `m` training and `r` validation trajectories of `cfg`.
///
/// Device scenarios train on per-subset shot estimates and validate on
/// full-sample estimates.
pub fn generate(cfg: &ExperimentConfig) -> Result<GeneratedData> {
    cfg.validate()?;
    let train_idx = 0..cfg.m;
    let val_idx = cfg.m..cfg.m + cfg.r;
    match &cfg.scenario {
        Scenario::DeviceEmulation(p) => {
            let (train, train_shots) = shot_dataset(cfg, p, train_idx, p.n_subsets)?;
            let (validation, validation_shots) = shot_dataset(cfg, p, val_idx, 1)?;
            Ok(GeneratedData {
                train,
                validation,
                train_shots: Some(train_shots),
                validation_shots: Some(validation_shots),
            })
        }
        _ => Ok(GeneratedData {
            train: exact_dataset(cfg, train_idx)?,
            validation: exact_dataset(cfg, val_idx)?,
            train_shots: None,
            validation_shots: None,
        }),
    }
}

/// Coherence vectors of the validation initial conditions.
pub fn validation_initials(cfg: &ExperimentConfig) -> Result<Vec<CoherenceVector>> {
    let basis = PauliBasis::new(cfg.scenario.n_qubits());
    (cfg.m..cfg.m + cfg.r)
        .map(|i| coherence_from_density(&initial_state(cfg, i), &basis))
        .collect()
}
