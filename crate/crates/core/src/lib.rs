//! Variational equilibria of hyperelastic solids immersed in a fluid at rest.
//!
//! The solid is discretized with piecewise-affine simplices in two or three
//! dimensions. The vertical direction is always the last coordinate axis and
//! gravity points along its negative. The total energy combines a polyconvex
//! stored energy, the hydrostatic potential of the displaced fluid and the
//! gravitational potential of the solid; its local minimizers are the
//! equilibria reported by the scenario drivers.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod energy;
pub mod error;
pub mod export;
pub mod hydrogeom;
pub mod linalg;
pub mod material;
pub mod mesh;
pub mod optimize;
pub mod scenarios;
pub mod verify;

pub use energy::{AnchorKind, AnchorSpec, EnergyBreakdown, Problem, Variant};
pub use error::{Error, Result};
pub use hydrogeom::{CavitySet, FluidEnvironment, Reservoir, VoxelGrid};
pub use linalg::{Matrix, Vector};
pub use material::{DensityModel, MaterialMode, MaterialParams};
pub use mesh::{DeformationField, ElementKinematics, FloatClass, ReferenceMesh};
pub use optimize::{SolveOptions, SolveResult, SolveStatus};
pub use scenarios::{EquilibriumReport, ScenarioConfig, ScenarioKind};
