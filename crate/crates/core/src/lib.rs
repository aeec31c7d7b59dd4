//! Adaptive-rate PMU monitoring and distribution system state estimation.
//!
//! The numerical kernels are generic over [`Real`]; the aliases below fix
//! the scalar for the common cases.

pub mod artifacts;
pub mod codec;
pub mod config;
pub mod dsse;
pub mod grid;
pub mod linalg;
pub mod pipeline;
pub mod pmu;
pub mod report;
mod scalar;
pub mod time;
pub mod vo;

pub use scalar::Real;
pub use time::Timestamp;

pub type NetworkModel = grid::NetworkModel<f64>;
pub type NetworkModelF32 = grid::NetworkModel<f32>;
pub type MeasurementModel = dsse::MeasurementModel<f64>;
pub type MeasurementModelF32 = dsse::MeasurementModel<f32>;
pub type EstimationSnapshot = dsse::EstimationSnapshot<f64>;
pub type EstimationSnapshotF32 = dsse::EstimationSnapshot<f32>;
pub type GroundTruthSeries = grid::GroundTruthSeries<f64>;
pub type Coordinator = dsse::Coordinator<f64>;
