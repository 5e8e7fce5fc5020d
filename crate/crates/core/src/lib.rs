//! Autoregressive modeling of time series of probability distributions on a
//! compact interval, built on iterated systems of one-dimensional optimal
//! transport maps.
//!
//! The working representation of a distribution is its quantile function,
//! sampled on a uniform grid of the unit interval ([`transport::QuantileCurve`]).
//! Chains of monotone maps are simulated by [`dynamics::simulate_chain`],
//! interpreted as distributional series through [`dynamics::ModelKind`], and
//! fitted with the plug-in least-squares estimators in [`estimation`].

pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod ingest;
pub mod io;
pub mod noise;
pub mod rng;
pub mod scalar;
pub mod transport;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Default grid resolution: maps are sampled at `M + 1` points `k / M`.
pub const DEFAULT_GRID_M: usize = 1000;

/// Concrete double-precision aliases; all CLI and file IO use these.
pub type UnitMap64 = transport::UnitMap<f64>;
pub type Interval64 = transport::Interval<f64>;
pub type QuantileCurve64 = transport::QuantileCurve<f64>;
pub type MapSeries64 = dynamics::MapSeries<f64>;
pub type ModelParams64 = dynamics::ModelParams<f64>;
pub type FitResult64 = estimation::FitResult<f64>;

/// Single-precision aliases for memory-bound experimentation.
pub type UnitMap32 = transport::UnitMap<f32>;
pub type Interval32 = transport::Interval<f32>;
pub type QuantileCurve32 = transport::QuantileCurve<f32>;
