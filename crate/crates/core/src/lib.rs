//! Matrix Dyson equations for inhomogeneous circular laws.
//!
//! The crate solves the coupled Dyson system attached to a covariance
//! super-operator `𝒮`, evaluates the resulting rotationally symmetric
//! density `σ(|ζ|²)` on the disk of radius `√ρ(𝒮)`, and checks the
//! predictions against sampled non-Hermitian random matrices.
//!
//! * [`covariance`]: the operators `𝒮`, `𝒮*` and their Perron data.
//! * [`dyson`]: solutions `(V₁, V₂, U)` inside and outside the spectrum.
//! * [`stability`]: the linearization and its deflated solves.
//! * [`density`]: `σ`, jump height, edge cubic, log potential, Brown measure.
//! * [`ensemble`]: seeded sampling and finite-n spectral diagnostics.

pub mod covariance;
pub mod density;
pub mod dyson;
pub mod ensemble;
pub mod error;
pub mod io;
pub mod krylov;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod stability;

pub use covariance::{CovarianceForm, CovarianceOperator, PerronData};
pub use density::{DensityEvaluator, DensityProfile, GridSpec, SigmaMethod};
pub use dyson::{BlockSolution, DysonOptions, DysonSolution, DysonSolver};
pub use error::{Error, Result};
pub use stability::{MatrixPair, StabilityBundle};
