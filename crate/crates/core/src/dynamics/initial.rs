//! Random initial conditions and per-trajectory RNG streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{haar_pure_qubit, DensityMatrix};

/// RNG for trajectory `index` of a run seeded with `seed`. Streams are
/// independent of the order in which trajectories are generated.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// How the qubits of an initial product state are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRecipe {
    /// Each qubit Haar-random, independently.
    #[default]
    Independent,
    /// One Haar-random state copied onto every qubit.
    Correlated,
    /// Even trajectory indices use `Correlated`, odd ones `Independent`.
    Alternating,
}

/// Product of `n_qubits` Haar-random pure qubits for trajectory `index`.
pub fn random_product_state(
    recipe: InitRecipe,
    n_qubits: usize,
    seed: u64,
    index: u64,
) -> DensityMatrix {
    let mut rng = trajectory_rng(seed, index);
    let same = match recipe {
        InitRecipe::Independent => false,
        InitRecipe::Correlated => true,
        InitRecipe::Alternating => index % 2 == 0,
    };
    let first = haar_pure_qubit(&mut rng);
    let mut rho = first.clone();
    for _ in 1..n_qubits {
        let next = if same { first.clone() } else { haar_pure_qubit(&mut rng) };
        rho = rho.tensor(&next);
    }
    rho
}
