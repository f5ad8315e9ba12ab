//! Scenario configuration documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::energy::{AnchorKind, AnchorSpec};
use crate::error::{Error, Result};
use crate::hydrogeom::FluidEnvironment;
use crate::linalg::Vector;
use crate::material::{DensityModel, MaterialMode, MaterialParams};
use crate::mesh::{build_primitive, MeshJson, Primitive, ReferenceMesh};
use crate::optimize::SolveOptions;

pub const SCHEMA: &str = "floatelast-config/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    FreeFloat,
    CompressibleLocal,
    Submarine,
    Anchored,
    Reservoir,
    Ship,
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let v = serde_json::to_value(self).map_err(|_| std::fmt::Error)?;
        f.write_str(v.as_str().unwrap_or("?"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeshSource {
    Primitive(Primitive),
    /// Mesh JSON file, relative to the configuration file.
    File(PathBuf),
    Inline(MeshJson),
}

/// Tags elements whose reference centroid lies in `[min, max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionBox {
    pub tag: String,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

/// Initial placement of the reference configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "place", rename_all = "snake_case", deny_unknown_fields)]
pub enum Initial {
    /// Barycenter at the waterline.
    Waterline,
    /// Highest point at the given height.
    Top {
        height: f64,
    },
    Identity,
    Offset {
        offset: Vec<f64>,
    },
    /// Rigid vertical translation, between "top at the waterline" and
    /// "bottom at the waterline", at which buoyancy (hold included)
    /// balances the weight; falls back to `Waterline` if there is none.
    Balanced,
}

fn d_probe_count() -> usize {
    16
}

/// Random perturbation probe around a computed state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Probe {
    #[serde(default = "d_probe_count")]
    pub count: usize,
    /// Sup-norm amplitude; defaults to `1e-3` times the diameter.
    #[serde(default)]
    pub amplitude: Option<f64>,
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            count: d_probe_count(),
            amplitude: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema: String,
    pub scenario: ScenarioKind,
    pub dim: usize,
    pub mesh: MeshSource,
    #[serde(default)]
    pub regions: Vec<RegionBox>,
    pub material: MaterialParams,
    pub density: DensityModel,
    pub fluid: FluidEnvironment,
    #[serde(default)]
    pub anchor: Option<AnchorSpec>,
    /// Mean-Jacobian floor for the compressible local-minimizer run.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Required excess of hold volume over the ship threshold.
    #[serde(default)]
    pub eta_margin: Option<f64>,
    /// Largest perturbation of the hold continuity monitor.
    #[serde(default)]
    pub epsilon0: Option<f64>,
    #[serde(default)]
    pub grid_res: Option<usize>,
    #[serde(default)]
    pub solver: SolveOptions,
    #[serde(default)]
    pub initial: Option<Initial>,
    #[serde(default)]
    pub probe: Probe,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<String>,
    #[serde(default)]
    pub deterministic: bool,
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

const REQUIRED: &[&str] = &[
    "/schema",
    "/scenario",
    "/dim",
    "/mesh",
    "/material",
    "/material/a",
    "/density",
    "/fluid",
    "/fluid/rho_f",
    "/fluid/g",
];

fn pointer_of(path: &serde_path_to_error::Path) -> String {
    use serde_path_to_error::Segment;
    let mut s = String::new();
    for seg in path.iter() {
        match seg {
            Segment::Seq { index } => s.push_str(&format!("/{index}")),
            Segment::Map { key } => s.push_str(&format!("/{}", key.replace('~', "~0").replace('/', "~1"))),
            Segment::Enum { variant } => s.push_str(&format!("/{variant}")),
            Segment::Unknown => s.push_str("/?"),
        }
    }
    s
}

impl ScenarioConfig {
    /// Parses and validates a configuration document. Errors carry the JSON
    /// pointer of the offending field.
    pub fn from_value(value: Value) -> Result<Self> {
        for p in REQUIRED {
            if value.pointer(p).is_none() {
                return Err(Error::config(*p, "missing required field"));
            }
        }
        match value.pointer("/schema").and_then(Value::as_str) {
            Some(SCHEMA) => {}
            other => {
                return Err(Error::config(
                    "/schema",
                    format!("expected \"{SCHEMA}\", found {}", other.unwrap_or("a non-string")),
                ))
            }
        }
        let kind_required: &[&str] = match value.pointer("/scenario").and_then(Value::as_str) {
            Some("compressible_local") => &["/tau"],
            Some("anchored") => &["/anchor"],
            Some("reservoir") => &["/fluid/reservoir"],
            Some("submarine") => &["/regions"],
            _ => &[],
        };
        for p in kind_required {
            if value.pointer(p).is_none_or(Value::is_null) {
                return Err(Error::config(*p, "required by this scenario"));
            }
        }
        let cfg: Self = serde_path_to_error::deserialize(value)
            .map_err(|e| Error::config(pointer_of(e.path()), e.inner().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(text).map_err(|e| Error::config("", e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        let wrap = |ptr: &'static str| move |e: Error| Error::config(ptr, e.to_string());
        if self.dim != 2 && self.dim != 3 {
            return Err(Error::config("/dim", "must be 2 or 3"));
        }
        self.material.validate(self.dim).map_err(wrap("/material"))?;
        self.density.validate().map_err(wrap("/density"))?;
        self.fluid.validate().map_err(wrap("/fluid"))?;
        self.solver.validate().map_err(wrap("/solver"))?;
        if let Some(r) = self.grid_res {
            if r < 8 {
                return Err(Error::config("/grid_res", "must be at least 8"));
            }
        }
        let incompressible = self.material.mode == MaterialMode::Incompressible;
        match self.scenario {
            ScenarioKind::Ship | ScenarioKind::Submarine if !incompressible => {
                return Err(Error::config(
                    "/material/mode",
                    "this scenario needs an incompressible material",
                ));
            }
            ScenarioKind::CompressibleLocal if incompressible => {
                return Err(Error::config(
                    "/material/mode",
                    "compressible_local needs a compressible material",
                ));
            }
            _ => {}
        }
        if self.scenario == ScenarioKind::Submarine && !matches!(self.density, DensityModel::HullBallast { .. }) {
            return Err(Error::config("/density/kind", "submarine needs a hull_ballast density"));
        }
        if self.scenario == ScenarioKind::Anchored && self.anchor.as_ref().is_none_or(|a| a.model == AnchorKind::None) {
            return Err(Error::config(
                "/anchor/model",
                "anchored needs an anchor model other than none",
            ));
        }
        if let Some(t) = self.tau {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::config("/tau", "must lie in (0, 1)"));
            }
        }
        Ok(())
    }

    /// Grid resolution, defaulting to 96 cells in 3D and 512 in 2D.
    pub fn grid_res(&self) -> usize {
        self.grid_res.unwrap_or(if self.dim == 3 { 96 } else { 512 })
    }

    /// Builds the reference mesh with region tags applied.
    pub fn build_mesh<const D: usize>(&self) -> Result<ReferenceMesh<D>> {
        let mut mesh = match &self.mesh {
            MeshSource::Primitive(p) => build_primitive::<D>(p).map_err(|e| Error::config("/mesh", e.to_string()))?,
            MeshSource::Inline(m) => m
                .clone()
                .into_mesh::<D>()
                .map_err(|e| Error::config("/mesh", e.to_string()))?,
            MeshSource::File(path) => {
                let full = match &self.base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path.clone(),
                };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::config("/mesh/file", format!("{}: {e}", full.display())))?;
                let m: MeshJson =
                    serde_json::from_str(&text).map_err(|e| Error::config("/mesh/file", e.to_string()))?;
                m.into_mesh::<D>()
                    .map_err(|e| Error::config("/mesh/file", e.to_string()))?
            }
        };
        for (i, r) in self.regions.iter().enumerate() {
            if r.min.len() != D || r.max.len() != D {
                return Err(Error::config(
                    format!("/regions/{i}"),
                    format!("min and max need {D} entries"),
                ));
            }
            let lo = Vector::<D>::from_fn(|k, _| r.min[k]);
            let hi = Vector::<D>::from_fn(|k, _| r.max[k]);
            mesh.tag_box(&r.tag, &lo, &hi);
        }
        Ok(mesh)
    }

    /// Copy of the configuration with file meshes inlined, so that it is
    /// self-contained.
    pub fn resolved<const D: usize>(&self, mesh: &ReferenceMesh<D>) -> Self {
        let mut c = self.clone();
        if let MeshSource::File(_) = c.mesh {
            let m = MeshJson::from(mesh);
            c.mesh = MeshSource::Inline(m);
        }
        c.base_dir = None;
        c
    }
}
