//! Single-snapshot harmonic retrieval by sparse recovery, its unrolled
//! S-LISTA network, and conversion of that network into a Few-Spikes
//! spiking network.

pub mod dataset;
pub mod error;
pub mod fs;
pub mod harness;
pub mod linalg;
pub mod signal;
pub mod slista;
pub mod snn;
pub mod solvers;

pub use error::{Error, Result};
pub use linalg::C64;
