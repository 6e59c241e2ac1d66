//! Exact generators of training and validation data.

pub mod circuit;
pub mod device;
pub mod initial;
pub mod lindblad;
pub mod ode;
pub mod transpose;
