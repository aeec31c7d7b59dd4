use adsse_core::grid::{BreakerEvent, BusId};
use adsse_core::pipeline::RunMode;
use adsse_core::time::Timestamp;
use serde::{Deserialize, Serialize};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestPmu {
    pub idcode: u16,
    pub node: BusId,
}

/// What produced an output directory; everything `report` needs besides the data files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    pub scenario: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario_name: Option<String>,
    pub seed: u64,
    pub start_soc: u32,
    pub start_frac: u32,
    pub duration: f64,
    pub events: Vec<BreakerEvent>,
    pub pmus: Vec<ManifestPmu>,
    pub plot_nodes: Vec<BusId>,
    pub samples: usize,
    #[serde(default)]
    pub modes: Vec<RunMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pacing: Option<String>,
    /// Run-time warnings carried into every report of this directory.
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl Manifest {
    pub fn start(&self) -> Timestamp {
        Timestamp::new(self.start_soc, self.start_frac)
    }
}
