//! Simulation of resonant (loop) atom interferometers built from trains of
//! mirror pulses, with tools to design the mirror-pulse laser phases.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! aliases at the crate root fix the scalar to `f64`.

pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod fit;
pub mod multipath;
pub mod optimize;
pub mod response;
mod real;
pub mod rng;
pub mod se_analysis;
pub mod sequence;

pub use error::{Error, Result};
pub use real::Real;

/// Library version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type TimingSpecF64 = sequence::TimingSpec<f64>;
pub type PhaseTupleF64 = sequence::PhaseTuple<f64>;
pub type SequenceSpecF64 = sequence::SequenceSpec<f64>;
pub type PulseParamsF64 = dynamics::PulseParams<f64>;
pub type DensityMatrixF64 = dynamics::DensityMatrix<f64>;
pub type AtomSampleF64 = dynamics::AtomSample<f64>;
pub type EnsembleF64 = ensemble::Ensemble<f64>;
pub type ScanSetupF64 = ensemble::ScanSetup<f64>;
pub type FringeResultF64 = fit::FringeResult<f64>;
pub type CostSpecF64 = multipath::CostSpec<f64>;
pub type PathSetF64 = multipath::PathSet<f64>;
pub type OpenLoopResultF64 = optimize::OpenLoopResult<f64>;
pub type FitnessSampleF64 = optimize::FitnessSample<f64>;
pub type LandscapeF64 = optimize::Landscape<f64>;
pub type BlochTraceF64 = se_analysis::BlochTrace<f64>;
