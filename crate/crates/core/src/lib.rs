//! Joint state-input dynamic estimation for branch-current power-network
//! models: ground-truth microgrid simulation, centralized and distributed
//! unknown-input Kalman estimators over noisy phasor measurements, and
//! innovation-based bad-data / false-data-injection detection.
//!
//! The library is generic over the floating-point scalar via [`Scalar`];
//! concrete `f64` aliases for the main types live at the crate root.

pub mod attack;
pub mod config;
pub mod csv_io;
pub mod detection;
pub mod distributed;
pub mod error;
pub mod estimation;
pub mod experiment;
pub mod linalg;
pub mod model;
pub mod observability;
pub mod partition;
pub mod phasor;
pub mod scalar;
pub mod simulation;
pub mod topology;
pub mod units;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Concrete `f64` aliases for the common case.
pub type NetworkTopologyF64 = topology::NetworkTopology<f64>;
pub type ContinuousModelF64 = model::ContinuousModel<f64>;
pub type DiscreteModelF64 = model::DiscreteModel<f64>;
pub type BasesF64 = units::Bases<f64>;
pub type NoiseSpecF64 = units::NoiseSpec<f64>;
pub type MeasurementFrameF64 = estimation::MeasurementFrame<f64>;
pub type JointEstimateF64 = estimation::JointEstimate<f64>;
pub type FilterStateF64 = estimation::FilterState<f64>;
