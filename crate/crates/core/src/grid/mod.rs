//! Balanced radial feeder model and quasi-static time-series simulation.

mod network;
mod powerflow;
mod scenario;

pub use network::{
    load_network, parse_network, Branch, BranchRecord, BusId, GenRecord, GenSpec, LoadRecord,
    LoadSpec, NetworkError, NetworkFile, NetworkModel, NETWORK_SCHEMA_VERSION,
};
pub use powerflow::{
    solve_power_flow, solve_power_flow_with, sweep, PowerFlowError, PowerFlowSolution,
    SweepOptions,
};
pub use scenario::{
    run_scenario, BreakerEvent, FrequencyProfile, GroundTruthSeries, ProfilePoint, Scenario,
    ScenarioError, DEFAULT_START_SOC,
};
