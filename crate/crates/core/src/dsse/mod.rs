//! Branch-current WLS distribution system state estimation with a constant,
//! pre-factored gain matrix, and the multi-rate coordinator feeding it.

mod coordinator;
mod estimate;
pub mod model;
mod pseudo;

use thiserror::Error;

use crate::grid::BusId;

pub use coordinator::{
    Coordinator, CoordinatorOptions, CoordinatorStats, EstimationSnapshot, PseudoReference,
};
pub use estimate::{solve_normal_equations, Estimate, StateVector};
pub use model::{
    build_model, Component, GainSolver, MeasurementModel, ModelSigmas, PseudoNode, RowKind,
    RowMeta,
};
pub use pseudo::{
    power_to_current_pseudo, pseudos_from_network, PseudoMeasurement, DEFAULT_PSEUDO_FRACTION,
    MIN_REFERENCE_VOLTAGE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DsseError {
    #[error("unknown bus {0:?}")]
    UnknownBus(BusId),
    #[error("more than one PMU at bus {0:?}")]
    DuplicatePmu(BusId),
    #[error("pseudo-measurement placed on the slack bus {0:?}")]
    PseudoAtSlack(BusId),
    #[error("sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("network is unobservable; unconstrained state directions: {}", .directions.join(", "))]
    Unobservable { directions: Vec<String> },
    #[error("reference voltage {magnitude:.4} p.u. at {node:?} is too low to linearize")]
    DegenerateVoltage { node: BusId, magnitude: f64 },
    #[error("non-finite {kind} measurement at {node:?} (row {row})")]
    NonFinite { row: usize, kind: RowKind, node: BusId },
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("measurement from unmonitored node {0:?}")]
    UnknownVo(BusId),
}
