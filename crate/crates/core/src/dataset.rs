//! Trajectories of coherence vectors and collections of them.

use serde::{Deserialize, Serialize};

use crate::channel::{CoherenceVector, TransferMatrix};
use crate::error::{Error, Result};

/// Where the states of a trajectory come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Exact,
    /// Estimated from the `subset`-th block of shots taken on initial
    /// condition `source`.
    ShotEstimated { source: usize, subset: usize },
}

impl Provenance {
    pub fn is_shot_estimated(&self) -> bool {
        matches!(self, Provenance::ShotEstimated { .. })
    }
}

/// A sampled trajectory. `initial` is the (known) state at `t = 0`; `times`
/// are strictly increasing positive integers with one state each.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub initial: CoherenceVector,
    pub times: Vec<u32>,
    pub states: Vec<CoherenceVector>,
    pub provenance: Provenance,
}

impl Trajectory {
    pub fn new(
        id: usize,
        initial: CoherenceVector,
        times: Vec<u32>,
        states: Vec<CoherenceVector>,
        provenance: Provenance,
    ) -> Result<Self> {
        let traj = Self {
            id,
            initial,
            times,
            states,
            provenance,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.len() != self.states.len() {
            return Err(Error::InvalidParameter(format!(
                "trajectory {}: {} times but {} states",
                self.id,
                self.times.len(),
                self.states.len()
            )));
        }
        if self.times.first() == Some(&0) {
            return Err(Error::InvalidParameter(format!(
                "trajectory {}: t = 0 belongs in the initial state",
                self.id
            )));
        }
        if self.times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "trajectory {}: times are not strictly increasing",
                self.id
            )));
        }
        let len = self.initial.len();
        if let Some(bad) = self.states.iter().find(|v| v.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                found: bad.len(),
            });
        }
        Ok(())
    }

    /// State at time `t`; `t = 0` returns the initial state.
    pub fn state_at(&self, t: u32) -> Option<&CoherenceVector> {
        if t == 0 {
            return Some(&self.initial);
        }
        self.times
            .binary_search(&t)
            .ok()
            .map(|i| &self.states[i])
    }

    /// Generates `steps` states by repeated application of `transfer`.
    pub fn from_transfer(
        id: usize,
        transfer: &TransferMatrix,
        initial: CoherenceVector,
        steps: u32,
    ) -> Self {
        let mut states = Vec::with_capacity(steps as usize);
        let mut v = initial.clone();
        for _ in 0..steps {
            v = transfer.propagate(&v);
            // Keep the normalization exact despite rounding in the first row.
            v.0[0] = 1.0;
            states.push(v.clone());
        }
        Self {
            id,
            initial,
            times: (1..=steps).collect(),
            states,
            provenance: Provenance::Exact,
        }
    }
}

/// Trajectories sharing one system dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    pub dim: usize,
    pub trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    pub fn new(dim: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        for tr in &trajectories {
            tr.validate()?;
            if tr.initial.len() != dim * dim {
                return Err(Error::DimensionMismatch {
                    expected: dim * dim,
                    found: tr.initial.len(),
                });
            }
        }
        Ok(Self { dim, trajectories })
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn is_shot_estimated(&self) -> bool {
        self.trajectories
            .iter()
            .any(|t| t.provenance.is_shot_estimated())
    }

    /// Times in `[t_min, t_max]` missing from any trajectory, as
    /// `(trajectory id, t)`.
    pub fn missing_times(&self, t_min: u32, t_max: u32) -> Vec<(usize, u32)> {
        self.trajectories
            .iter()
            .flat_map(|tr| {
                (t_min..=t_max)
                    .filter(|&t| tr.state_at(t).is_none())
                    .map(move |t| (tr.id, t))
            })
            .collect()
    }

    pub fn require_times(&self, t_min: u32, t_max: u32) -> Result<()> {
        let missing = self.missing_times(t_min, t_max);
        if missing.is_empty() {
            return Ok(());
        }
        let listed: Vec<String> = missing
            .iter()
            .take(20)
            .map(|(id, t)| format!("trajectory {id} t={t}"))
            .collect();
        Err(Error::MissingData(format!(
            "{} absent time point(s): {}{}",
            missing.len(),
            listed.join(", "),
            if missing.len() > 20 { ", ..." } else { "" }
        )))
    }

    /// Merges shot-estimated subset trajectories of the same source into one
    /// trajectory per source by averaging states at shared times. With
    /// equal-size subsets this equals the full-sample estimate. Exact
    /// trajectories pass through unchanged.
    pub fn pool_subsets(&self) -> Result<TrajectoryDataset> {
        use std::collections::BTreeMap;
        let mut groups: BTreeMap<usize, Vec<&Trajectory>> = BTreeMap::new();
        let mut out = Vec::new();
        for tr in &self.trajectories {
            match tr.provenance {
                Provenance::Exact => out.push(tr.clone()),
                Provenance::ShotEstimated { source, .. } => groups.entry(source).or_default().push(tr),
            }
        }
        for (source, members) in groups {
            let first = members[0];
            let times: Vec<u32> = first
                .times
                .iter()
                .copied()
                .filter(|&t| members.iter().all(|m| m.state_at(t).is_some()))
                .collect();
            let n = members.len() as f64;
            let states = times
                .iter()
                .map(|&t| {
                    let mut acc = vec![0.0; first.initial.len()];
                    for m in &members {
                        for (a, x) in acc.iter_mut().zip(m.state_at(t).unwrap().values()) {
                            *a += x / n;
                        }
                    }
                    acc[0] = 1.0;
                    CoherenceVector::new(acc)
                })
                .collect();
            out.push(Trajectory::new(
                source,
                first.initial.clone(),
                times,
                states,
                Provenance::ShotEstimated { source, subset: 0 },
            )?);
        }
        TrajectoryDataset::new(self.dim, out)
    }
}
