//! Transport through a periodically driven chain of two-level sites coupled
//! to a source and a drain, described by a Lindblad master equation.
//!
//! The numerical core is generic over the real scalar ([`Real`], implemented
//! for `f32` and `f64`); the aliases at the crate root fix it to `f64`.
//!
//! ```
//! use ionres_core::{model::SimulationSpec, validate, steady_current};
//!
//! let mut spec = SimulationSpec::desk_scale(0.0);
//! spec.chain = ionres_core::model::ChainSpec::uniform(1, 0.0, 0.0, 0.0, 0.0);
//! spec.baths.gamma_source = 1e8;
//! spec.baths.gamma_drain = 1e8;
//! let result = steady_current::<f64>(&validate(spec).unwrap()).unwrap();
//! assert!((result.current - 5e7).abs() < 5e4);
//! ```

pub mod baseline;
pub mod basis;
pub mod bessel;
pub mod config;
pub mod density;
pub mod estimates;
pub mod generators;
pub mod integrator;
pub mod kernel;
pub mod linalg;
pub mod model;
pub mod observables;
pub mod propagator;
pub mod scalar;
pub mod sweep;

use thiserror::Error;

pub use baseline::{classical_current, classical_rates};
pub use bessel::{bessel_first_zeros, bessel_j};
pub use model::{validate, ValidatedSpec};
pub use observables::{contrast_at, fit_incoherence_vs_current, incoherence, locate_resonances};
pub use propagator::{propagate, sink_population, steady_current, CurrentResult};
pub use scalar::Real;
pub use sweep::{run_sweep, SweepPlan, SweepRow};

pub type DensityMatrix = density::DensityMatrix<f64>;
pub type CMatrix = linalg::CMatrix<f64>;
pub type GeneratorParts = generators::GeneratorParts<f64>;
pub type HermitianOperator = generators::HermitianOperator<f64>;
pub type LiouvilleKernel = kernel::LiouvilleKernel<f64>;
pub type Propagator = propagator::Propagator<f64>;
pub type Trajectory = propagator::Trajectory<f64>;

/// Any failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] model::ValidationError),
    #[error(transparent)]
    Density(#[from] density::DensityError),
    #[error(transparent)]
    Generator(#[from] generators::GeneratorError),
    #[error(transparent)]
    Propagation(#[from] propagator::PropagationError),
    #[error(transparent)]
    Baseline(#[from] baseline::BaselineError),
    #[error(transparent)]
    Observable(#[from] observables::ObservableError),
    #[error(transparent)]
    Estimate(#[from] estimates::EstimateError),
    #[error(transparent)]
    Config(#[from] config::ConfigError),
    #[error(transparent)]
    Sweep(#[from] sweep::SweepError),
}
