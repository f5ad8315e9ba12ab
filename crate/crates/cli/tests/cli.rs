use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn floatelast(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_floatelast"))
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, doc: &Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(doc).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

fn cube(rho_s: f64, material: Value) -> Value {
    json!({
        "schema": "floatelast-config/1",
        "scenario": "free_float",
        "dim": 3,
        "mesh": {"primitive": {"kind": "box", "size": [1, 1, 1], "res": [3, 3, 3]}},
        "material": material,
        "density": {"kind": "homogeneous", "rho_s": rho_s},
        "fluid": {"rho_f": 1.0, "g": 1.0},
        "solver": {"penalty_schedule": [1e2, 1e4], "grad_tol": 1e-8}
    })
}

fn read(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn floating_cube_exits_zero_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &cube(0.5, json!({"a": 100.0, "mode": "incompressible", "kappa": 1e4})),
    );
    let out = dir.path().join("out");
    let o = floatelast(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.json", "trace.csv", "deformed.vtk"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let report = read(&out.join("report.json"));
    assert_eq!(report["status"], "Converged");
    assert_eq!(report["float_class"], "floating");
    let sha = report["manifest"]["config_sha256"].as_str().unwrap();
    assert_eq!(sha.len(), 64);

    let o = floatelast(&[
        "verify",
        out.join("report.json").to_str().unwrap(),
        "--check",
        "archimedes",
        "--check",
        "el",
        "--check",
        "fd",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(read(&out.join("report.json"))["verification"]["all_pass"], true);
}

#[test]
fn sinking_compressible_cube_exits_ten() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &cube(1.5, json!({"a": 10.0, "c1": 1.0, "b": 1.0})));
    let out = dir.path().join("out");
    let o = floatelast(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(10));
    assert_eq!(read(&out.join("report.json"))["status"], "UnboundedDescent");
}

#[test]
fn missing_fluid_density_names_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let mut doc = cube(0.5, json!({"a": 100.0, "mode": "incompressible"}));
    doc["fluid"].as_object_mut().unwrap().remove("rho_f");
    let cfg = write_config(dir.path(), &doc);
    let o = floatelast(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/fluid/rho_f"));
}

#[test]
fn iteration_cap_exits_eleven() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        &cube(0.5, json!({"a": 100.0, "mode": "incompressible", "kappa": 1e4})),
    );
    let o = floatelast(&[
        "run",
        &cfg,
        "--out",
        dir.path().join("out").to_str().unwrap(),
        "--max-iters",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(11));
}

#[test]
fn ship_run_writes_cavity() {
    let dir = tempfile::tempdir().unwrap();
    let doc = json!({
        "schema": "floatelast-config/1",
        "scenario": "ship",
        "dim": 2,
        "mesh": {"primitive": {"kind": "open_shell", "inner_radius": 0.5, "thickness": 0.1, "res": 12}},
        "material": {"a": 100.0, "mode": "incompressible", "kappa": 1e4},
        "density": {"kind": "homogeneous", "rho_s": 1.2},
        "fluid": {"rho_f": 1.0, "g": 1.0},
        "grid_res": 256,
        "solver": {"grad_tol": 1e-5, "max_iters": 10000}
    });
    let cfg = write_config(dir.path(), &doc);
    let out = dir.path().join("out");
    let o = floatelast(&["run", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(out.join("cavity.vtk").is_file());
    let report = read(&out.join("report.json"));
    assert!(report["cavity_volume"].as_f64().unwrap() >= report["scenario"]["details"]["eta"].as_f64().unwrap());
}

#[test]
fn mesh_command_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ball.json");
    let o = floatelast(&[
        "mesh",
        "ball",
        "--dim",
        "3",
        "--radius",
        "0.5",
        "--res",
        "3",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&path).unwrap();
    let mesh = serde_json::from_str::<floatelast::mesh::MeshJson>(&text)
        .unwrap()
        .into_mesh::<3>()
        .unwrap();
    let exact = 4.0 / 3.0 * std::f64::consts::PI * 0.125;
    assert!((mesh.total_volume() - exact).abs() < 0.1 * exact);
}

#[test]
fn sample_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        floatelast::ScenarioConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        n += 1;
    }
    assert!(n >= 5);
}
