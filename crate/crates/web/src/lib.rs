//! WebAssembly bindings for the browser demo. Every entry point takes plain
//! numbers and returns a JSON string that the page draws on a canvas.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use floatelast::mesh::{self, DeformationField, ReferenceMesh};
use floatelast::scenarios::{self, ScenarioConfig};
use floatelast::{DensityModel, FluidEnvironment, MaterialParams, Problem, Variant};

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn config(doc: Value) -> Result<ScenarioConfig, JsError> {
    ScenarioConfig::from_value(doc).map_err(js)
}

fn shape(mesh: &ReferenceMesh<2>, y: &DeformationField<2>) -> Value {
    json!({
        "nodes": y.positions().iter().map(|p| [p[0], p[1]]).collect::<Vec<_>>(),
        "triangles": mesh.elements().map(|e| e.to_vec()).collect::<Vec<_>>(),
    })
}

fn summarize(cfg: &ScenarioConfig) -> Result<String, JsError> {
    let mesh = cfg.build_mesh::<2>().map_err(js)?;
    let out = scenarios::run(cfg).map_err(js)?;
    let r = &out.report;
    let pos: Vec<_> = r
        .scenario
        .final_positions
        .iter()
        .map(|p| floatelast::Vector::<2>::new(p[0], p[1]))
        .collect();
    let y = DeformationField::new(&mesh, pos).map_err(js)?;
    Ok(json!({
        "status": r.status.to_string(),
        "float_class": r.float_class.to_string(),
        "iterations": r.scenario.iterations,
        "energy": r.energy,
        "submerged_volume": r.submerged_volume,
        "area": mesh.total_volume(),
        "cavity_volume": r.cavity_volume,
        "archimedes": r.archimedes_residual.normalized,
        "details": r.scenario.details,
        "shape": shape(&mesh, &y),
    })
    .to_string())
}

/// Free-floating incompressible square of unit side.
#[wasm_bindgen]
pub fn solve_free_float(density_ratio: f64, stiffness: f64, res: u32) -> Result<String, JsError> {
    let cfg = config(json!({
        "schema": scenarios::SCHEMA,
        "scenario": "free_float",
        "dim": 2,
        "mesh": {"primitive": {"kind": "box", "size": [1.0, 1.0], "res": [res, res]}},
        "material": {"a": stiffness, "c1": 1.0, "b": 1.0, "mode": "incompressible", "kappa": 100.0 * stiffness},
        "density": {"kind": "homogeneous", "rho_s": density_ratio},
        "fluid": {"rho_f": 1.0, "g": 1.0},
        "grid_res": 128,
        "solver": {"grad_tol": 1e-7, "max_iters": 4000}
    }))?;
    summarize(&cfg)
}

/// Half-ring cup denser than the fluid, floating on its hold.
#[wasm_bindgen]
pub fn solve_ship_cup(density_ratio: f64, thickness: f64, grid_res: u32) -> Result<String, JsError> {
    let cfg = config(json!({
        "schema": scenarios::SCHEMA,
        "scenario": "ship",
        "dim": 2,
        "mesh": {"primitive": {"kind": "open_shell", "inner_radius": 0.5, "thickness": thickness, "res": 12, "layers": 2}},
        "material": {"a": 100.0, "c1": 1.0, "b": 1.0, "mode": "incompressible", "kappa": 1e4},
        "density": {"kind": "homogeneous", "rho_s": density_ratio},
        "fluid": {"rho_f": 1.0, "g": 1.0},
        "grid_res": grid_res,
        "solver": {"grad_tol": 1e-5, "max_iters": 10000}
    }))?;
    summarize(&cfg)
}

/// Total energy of the rigid unit square against the depth of its bottom
/// below the waterline.
#[wasm_bindgen]
pub fn energy_depth_curve(density_ratio: f64, samples: u32) -> Result<String, JsError> {
    let mesh = mesh::build_primitive::<2>(&mesh::Primitive::Box {
        size: vec![1.0, 1.0],
        res: vec![4, 4],
        origin: None,
    })
    .map_err(js)?;
    let p = Problem::new(
        &mesh,
        MaterialParams::incompressible(1.0, 1.0, 1.0, 100.0),
        DensityModel::Homogeneous { rho_s: density_ratio },
        FluidEnvironment::new(1.0, 1.0),
        Variant::Standard,
    )
    .map_err(js)?;
    let id = DeformationField::identity(&mesh);
    let n = samples.max(2);
    let points: Vec<[f64; 2]> = (0..n)
        .map(|i| {
            let depth = -0.5 + 2.5 * i as f64 / (n - 1) as f64;
            [depth, p.total_energy(&id.translated_vertically(-depth))]
        })
        .collect();
    Ok(json!({"density_ratio": density_ratio, "points": points}).to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_has_requested_samples_and_slope() {
        let v: Value = serde_json::from_str(&energy_depth_curve(0.5, 11).unwrap()).unwrap();
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 11);
        // Fully immersed, the energy grows linearly with depth at rate
        // g (rho_f - rho_s) |Omega| = 0.5.
        let a = pts[9].as_array().unwrap();
        let b = pts[10].as_array().unwrap();
        let slope =
            (b[1].as_f64().unwrap() - a[1].as_f64().unwrap()) / (b[0].as_f64().unwrap() - a[0].as_f64().unwrap());
        assert!((slope - 0.5).abs() < 1e-10, "{slope}");
    }

    #[test]
    fn free_float_square_floats() {
        let v: Value = serde_json::from_str(&solve_free_float(0.5, 50.0, 4).unwrap()).unwrap();
        assert_eq!(v["status"], "Converged");
        assert_eq!(v["float_class"], "floating");
        let frac = v["submerged_volume"].as_f64().unwrap() / v["area"].as_f64().unwrap();
        assert!((frac - 0.5).abs() < 0.02, "{frac}");
    }

    #[test]
    fn ship_cup_rides_on_its_hold() {
        let v: Value = serde_json::from_str(&solve_ship_cup(1.2, 0.1, 256).unwrap()).unwrap();
        assert_eq!(v["status"], "Converged", "{v}");
        assert_eq!(v["float_class"], "floating");
        assert!(v["cavity_volume"].as_f64().unwrap() > 0.0);
    }
}
