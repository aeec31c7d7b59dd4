//! Scenario/deployment file (see `schemas/scenario.schema.json`).

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::DEFAULT_PMU_PORT;
use crate::dsse::{CoordinatorOptions, ModelSigmas, PseudoReference, DEFAULT_PSEUDO_FRACTION};
use crate::grid::{
    BreakerEvent, BusId, FrequencyProfile, NetworkError, NetworkFile, NetworkModel, ProfilePoint,
    Scenario, ScenarioError, DEFAULT_START_SOC,
};
use crate::pmu::PmuConfig;
use crate::vo::{Thresholds, VoError};
use crate::Real;

pub const SCENARIO_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("unsupported scenario schema_version {0}")]
    SchemaVersion(u32),
    #[error("network: {0}")]
    Network(#[from] NetworkError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("thresholds for {who}: {source}")]
    Thresholds {
        who: String,
        #[source]
        source: VoError,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Network given by path (relative to the scenario file) or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NetworkSource {
    Path(PathBuf),
    Inline(Box<NetworkFile>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmuEntry {
    pub idcode: u16,
    pub node: BusId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub station_name: Option<String>,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default = "default_sigma_freq")]
    pub sigma_freq: f64,
    #[serde(default = "default_sigma_rocof")]
    pub sigma_rocof: f64,
    /// Per-VO override of the global thresholds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Thresholds>,
}

fn default_snr() -> f64 {
    70.0
}
fn default_sigma_freq() -> f64 {
    0.001
}
fn default_sigma_rocof() -> f64 {
    0.01
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferencePolicy {
    #[default]
    SelfRefined,
    Flat,
    PreviousSnapshot,
}

impl From<ReferencePolicy> for PseudoReference {
    fn from(p: ReferencePolicy) -> Self {
        match p {
            ReferencePolicy::SelfRefined => PseudoReference::SelfRefined,
            ReferencePolicy::Flat => PseudoReference::Flat,
            ReferencePolicy::PreviousSnapshot => PseudoReference::PreviousSnapshot,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSettings {
    pub pmu_sigma: f64,
    pub zero_injection_sigma: f64,
    pub pseudo_fraction: f64,
    pub slack_reference_sigma: Option<f64>,
    pub pseudo_reference: ReferencePolicy,
    pub held_variance_inflation: f64,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            pmu_sigma: 1e-3,
            zero_injection_sigma: 1e-6,
            pseudo_fraction: DEFAULT_PSEUDO_FRACTION,
            slack_reference_sigma: None,
            pseudo_reference: ReferencePolicy::SelfRefined,
            held_variance_inflation: 1.0,
        }
    }
}

impl EstimatorSettings {
    pub fn sigmas<T: Real>(&self) -> ModelSigmas<T> {
        ModelSigmas {
            pmu_voltage: T::lit(self.pmu_sigma),
            zero_injection: T::lit(self.zero_injection_sigma),
            slack_reference: self.slack_reference_sigma.map(T::lit),
        }
    }

    pub fn coordinator_options(&self) -> CoordinatorOptions {
        CoordinatorOptions {
            reference: self.pseudo_reference.into(),
            held_variance_inflation: self.held_variance_inflation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportSettings {
    /// PMU `i` listens on `pmu_base_port + i`; 0 picks free ports.
    /// Defaults to the registered C37.118 port.
    pub pmu_base_port: u16,
    /// Ingress HTTP listen address; port 0 picks a free port.
    pub ingress_addr: String,
    /// Listen address of the `/latest` endpoint of the VOs.
    pub latest_addr: String,
    pub max_retries: u32,
    /// Reconnect attempts of a VO to its PMU.
    pub reconnect_attempts: u32,
}

impl Default for TransportSettings {
    fn default() -> Self {
        Self {
            pmu_base_port: DEFAULT_PMU_PORT,
            ingress_addr: "127.0.0.1:0".into(),
            latest_addr: "127.0.0.1:0".into(),
            max_retries: 3,
            reconnect_attempts: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub network: NetworkSource,
    /// Seconds.
    pub duration: f64,
    #[serde(default = "default_start_soc")]
    pub start_soc: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub events: Vec<BreakerEvent>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub frequency_profile: Vec<ProfilePoint>,
    pub pmus: Vec<PmuEntry>,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    #[serde(default)]
    pub transport: TransportSettings,
    /// Buses written to the plot-ready CSVs; all buses when empty.
    #[serde(default)]
    pub plot_nodes: Vec<BusId>,
}

fn default_start_soc() -> u32 {
    DEFAULT_START_SOC
}

/// Parsed scenario with its network resolved and validated.
#[derive(Clone, Debug)]
pub struct LoadedScenario {
    pub file: ScenarioFile,
    pub network: NetworkModel<f64>,
    /// Directory relative network paths were resolved against.
    pub base_dir: PathBuf,
}

impl LoadedScenario {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base)
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self, ConfigError> {
        let file: ScenarioFile = serde_json::from_str(text)?;
        Self::new(file, base_dir)
    }

    pub fn new(file: ScenarioFile, base_dir: PathBuf) -> Result<Self, ConfigError> {
        if file.schema_version != SCENARIO_SCHEMA_VERSION {
            return Err(ConfigError::SchemaVersion(file.schema_version));
        }
        let network = match &file.network {
            NetworkSource::Path(p) => {
                let full = if p.is_absolute() { p.clone() } else { base_dir.join(p) };
                crate::grid::load_network(full)?
            }
            NetworkSource::Inline(nf) => nf.as_ref().clone().into_model()?,
        };
        let loaded = Self {
            file,
            network,
            base_dir,
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let f = &self.file;
        if f.pmus.is_empty() {
            return Err(ConfigError::Invalid("at least one PMU is required".into()));
        }
        let mut ids = HashSet::new();
        let mut nodes = HashSet::new();
        for p in &f.pmus {
            if !ids.insert(p.idcode) {
                return Err(ConfigError::Invalid(format!("duplicate PMU idcode {}", p.idcode)));
            }
            if !nodes.insert(p.node.clone()) {
                return Err(ConfigError::Invalid(format!("more than one PMU at node {:?}", p.node)));
            }
            if self.network.bus_index(&p.node).is_none() {
                return Err(ConfigError::Invalid(format!("PMU {} at unknown node {:?}", p.idcode, p.node)));
            }
            self.pmu_config(p)
                .validate()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            self.thresholds_for(p)
                .validate()
                .map_err(|source| ConfigError::Thresholds {
                    who: vo_id(&p.node),
                    source,
                })?;
        }
        f.thresholds.validate().map_err(|source| ConfigError::Thresholds {
            who: "all VOs".into(),
            source,
        })?;
        for n in &f.plot_nodes {
            if self.network.bus_index(n).is_none() {
                return Err(ConfigError::Invalid(format!("plot node {n:?} is not a bus")));
            }
        }
        let e = &f.estimator;
        if !(e.pseudo_fraction > 0.0 && e.pseudo_fraction.is_finite()) {
            return Err(ConfigError::Invalid("estimator.pseudo_fraction must be positive".into()));
        }
        if !(e.held_variance_inflation >= 1.0 && e.held_variance_inflation.is_finite()) {
            return Err(ConfigError::Invalid(
                "estimator.held_variance_inflation must be >= 1".into(),
            ));
        }
        self.scenario::<f64>(None)?.validate()?;
        Ok(())
    }

    pub fn pmu_config(&self, p: &PmuEntry) -> PmuConfig {
        let mut c = PmuConfig::new(p.idcode, p.node.clone());
        if let Some(name) = &p.station_name {
            c.station_name = name.clone();
        }
        c.snr_db = p.snr_db;
        c.sigma_freq = p.sigma_freq;
        c.sigma_rocof = p.sigma_rocof;
        c
    }

    pub fn pmu_configs(&self) -> Vec<PmuConfig> {
        self.file.pmus.iter().map(|p| self.pmu_config(p)).collect()
    }

    pub fn thresholds_for(&self, p: &PmuEntry) -> Thresholds {
        p.thresholds.unwrap_or(self.file.thresholds)
    }

    pub fn pmu_nodes(&self) -> Vec<BusId> {
        self.file.pmus.iter().map(|p| p.node.clone()).collect()
    }

    pub fn seed(&self, override_seed: Option<u64>) -> u64 {
        override_seed.unwrap_or(self.file.seed)
    }

    pub fn scenario<T: Real>(&self, seed: Option<u64>) -> Result<Scenario<T>, ConfigError> {
        let mut s = Scenario::new(self.network.cast::<T>(), self.file.duration);
        s.start_soc = self.file.start_soc;
        s.events = self.file.events.clone();
        s.frequency_profile = FrequencyProfile::new(self.file.frequency_profile.clone())?;
        s.noise_seed = self.seed(seed);
        Ok(s)
    }

    pub fn plot_nodes(&self) -> Vec<BusId> {
        if self.file.plot_nodes.is_empty() {
            self.network.buses().to_vec()
        } else {
            self.file.plot_nodes.clone()
        }
    }
}

/// Identifier of the VO attached to the PMU at `node`.
pub fn vo_id(node: &str) -> String {
    format!("vo{node}")
}

#[cfg(test)]
mod tests {
    use super::*;

    const NET: &str = r#"{"schema_version":1,"base_voltage":1000,"base_power":1e6,"slack":"0",
        "buses":["0","1"],"branches":[{"id":"b","from":"0","to":"1","r":0.01,"x":0.02}],
        "loads":[{"node":"1","p":0.5,"q":0.2,"breaker":"B1"}]}"#;

    fn scenario(extra: &str) -> String {
        format!(
            r#"{{"schema_version":1,"network":{NET},"duration":2.0,
               "pmus":[{{"idcode":1,"node":"1"}}]{extra}}}"#
        )
    }

    #[test]
    fn inline_network_with_defaults() {
        let s = LoadedScenario::from_str(&scenario(""), PathBuf::new()).unwrap();
        assert_eq!(s.file.thresholds, Thresholds::default());
        assert_eq!(s.file.estimator, EstimatorSettings::default());
        assert_eq!(s.pmu_configs()[0].snr_db, 70.0);
        assert_eq!(s.scenario::<f64>(None).unwrap().step_count(), 100);
    }

    #[test]
    fn per_vo_threshold_override() {
        let text = r#"{"schema_version":1,"network":NET,"duration":2.0,
            "thresholds":{"alpha_up":0.05},
            "pmus":[{"idcode":1,"node":"1","thresholds":{"hold_frames":10}}]}"#
            .replace("NET", NET);
        let s = LoadedScenario::from_str(&text, PathBuf::new()).unwrap();
        assert_eq!(s.file.thresholds.alpha_up, 0.05);
        let t = s.thresholds_for(&s.file.pmus[0]);
        assert_eq!(t.hold_frames, 10);
        assert_eq!(t.alpha_up, 0.02, "override replaces the whole policy");
    }

    #[test]
    fn rejects_bad_files() {
        let bad_version = scenario("").replace("\"schema_version\":1,\"network\"", "\"schema_version\":7,\"network\"");
        assert!(matches!(
            LoadedScenario::from_str(&bad_version, PathBuf::new()),
            Err(ConfigError::SchemaVersion(7))
        ));
        let unknown_breaker = scenario(r#","events":[{"breaker":"X","open_time":0.5,"close_time":1.0}]"#);
        assert!(LoadedScenario::from_str(&unknown_breaker, PathBuf::new()).is_err());
        let bad_thr = scenario(r#","thresholds":{"beta_down":0.5}"#);
        assert!(matches!(
            LoadedScenario::from_str(&bad_thr, PathBuf::new()),
            Err(ConfigError::Thresholds { .. })
        ));
        assert!(LoadedScenario::from_str(&scenario(r#","bogus":1"#), PathBuf::new()).is_err());
        assert!(matches!(
            LoadedScenario::from_path("/nonexistent/scenario.json"),
            Err(ConfigError::Io { .. })
        ));
    }
}
