//! States and channels: Pauli bases, density matrices and coherence vectors,
//! Kraus sets, transfer matrices and the Stinespring parametrization.

pub mod kraus;
pub mod pauli;
pub mod state;
pub mod stinespring;

pub use kraus::{choi_of, KrausSet, TransferMatrix};
pub use pauli::PauliBasis;
pub use state::{
    coherence_from_density, density_from_coherence, haar_pure_qubit, haar_random_pure_qubit,
    CoherenceVector, DensityMatrix,
};
pub use stinespring::{kraus_from_unitary, StinespringModel};
