//! Extended effective resistance and conductance of signed graphs, Laplacian
//! definiteness tests, and their use for power-network stability analysis,
//! transient simulation and stability-constrained optimal power flow.

pub mod definiteness;
pub mod effective;
pub mod error;
pub mod io;
pub mod numerics;
pub mod opf;
pub mod power;
pub mod sgraph;
pub mod simulate;

pub use error::{Error, Result};
