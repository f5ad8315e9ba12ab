//! Scenario drivers: configuration, one driver per physical setting, and
//! the equilibrium report.

mod config;
mod drivers;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use config::{Initial, MeshSource, Probe, RegionBox, ScenarioConfig, ScenarioKind, SCHEMA};
pub use drivers::{
    neutral_ballast_density, run, run_anchored, run_compressible_local, run_free_float, run_reservoir, run_ship,
    run_submarine, verify_report, Check, RunOutput,
};

use crate::energy::EnergyBreakdown;
use crate::hydrogeom::CnCheck;
use crate::mesh::FloatClass;
use crate::optimize::SolveStatus;
use crate::verify::ArchimedesResidual;

/// Scenario-specific part of a report. `config` is self-contained (file
/// meshes inlined, ballast density resolved) so that the state can be
/// re-checked from the report alone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSection {
    pub kind: ScenarioKind,
    pub dim: usize,
    pub config: ScenarioConfig,
    pub iterations: usize,
    pub grad_norm: f64,
    pub details: Value,
    pub final_positions: Vec<Vec<f64>>,
}

/// Outcome of a scenario run. A positive Archimedes residual is a net
/// upward force on the body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    /// Run metadata, filled in by the caller.
    pub manifest: Value,
    pub scenario: ScenarioSection,
    pub status: SolveStatus,
    pub float_class: FloatClass,
    pub energy: EnergyBreakdown,
    pub archimedes_residual: ArchimedesResidual,
    pub submerged_volume: f64,
    #[serde(rename = "mean_J")]
    pub mean_j: f64,
    pub cavity_volume: Option<f64>,
    pub water_level: f64,
    pub cn_check: Option<CnCheck>,
    pub verification: Option<Value>,
}

impl EquilibriumReport {
    pub fn details(&self) -> &Value {
        &self.scenario.details
    }

    /// Detail field as a float, for tests and summaries.
    pub fn detail_f64(&self, key: &str) -> Option<f64> {
        self.scenario.details.get(key).and_then(Value::as_f64)
    }

    pub fn detail_bool(&self, key: &str) -> Option<bool> {
        self.scenario.details.get(key).and_then(Value::as_bool)
    }
}
