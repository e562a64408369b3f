//! Simulation and penalized estimation for spherical autoregressions in the
//! harmonic domain.
//!
//! The pipeline operates entirely on the harmonic coefficients
//! `a_{l,m}(t)`: every multipole `l` carries `2l + 1` scalar AR(p) paths
//! sharing one coefficient row, kernels are finite Legendre expansions of
//! those rows, and estimation is an l1-penalized least squares per
//! multipole. See the module docs for details:
//!
//! - [`legendre`]: polynomial evaluation and Gauss-Legendre quadrature;
//! - [`model`]: generative specification, stability measures, oracle bounds;
//! - [`simulate`]: seeded sample-path generation and sample I/O;
//! - [`lasso`]: per-multipole designs and the coordinate-descent solver;
//! - [`kernel`]: kernel reconstruction and functional error metrics;
//! - [`experiment`]: benchmark studies, diagnostics, and file outputs.
//!
//! Everything numeric is generic over the scalar type through [`Real`];
//! the `*64` aliases below pin the common double-precision instantiations.

pub mod error;
pub mod experiment;
pub mod kernel;
pub mod lasso;
pub mod legendre;
mod linalg;
pub mod model;
mod real;
pub mod simulate;

pub use error::{Result, SpharError};
pub use real::Real;

pub use experiment::{ExperimentConfig, ModelName};
pub use kernel::KernelEstimate;
pub use lasso::{LassoFit, MultipoleRegression, SolverConfig};
pub use model::{SparsitySet, SpharModel, StabilityReport};
pub use simulate::{HarmonicSample, SeedSpec};

/// Double-precision instantiations of the main types.
pub type SpharModel64 = model::SpharModel<f64>;
pub type HarmonicSample64 = simulate::HarmonicSample<f64>;
pub type MultipoleRegression64 = lasso::MultipoleRegression<f64>;
pub type LassoFit64 = lasso::LassoFit<f64>;
pub type KernelEstimate64 = kernel::KernelEstimate<f64>;
pub type StabilityReport64 = model::StabilityReport<f64>;
pub type MseTable64 = experiment::MseTable<f64>;
