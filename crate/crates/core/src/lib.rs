//! Topological invariants of chiral (class AIII) lattice models in odd
//! dimension: momentum-space and real-space odd Chern numbers, the
//! Fredholm index of the Dirac-Toeplitz compression, and localization
//! diagnostics.

extern crate blas_src;

pub mod clifford;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod flatband;
pub mod invariants;
pub mod lattice;
pub mod linalg;
pub mod localization;
pub mod models;
pub mod profile;

pub use clifford::{CliffordRep, Simplex};
pub use error::{Error, Result};
pub use flatband::FlatBand;
pub use invariants::{DiracPhase, InvariantEstimate, Method};
pub use lattice::Torus;
pub use linalg::{CMatrix, C64};
pub use models::{HoppingModel, LatticeRealization, SampleSeed};
