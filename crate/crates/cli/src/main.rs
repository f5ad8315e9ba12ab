use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use floatelast::export::{self, to_json_exact, write_atomic};
use floatelast::mesh::{build_primitive, MeshJson, Primitive};
use floatelast::scenarios::{self, Check, EquilibriumReport, ScenarioConfig};
use floatelast::{Error, SolveStatus};

/// `println!` that ignores a closed stdout.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

const EXIT_CONVERGED: u8 = 0;
const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_UNBOUNDED: u8 = 10;
const EXIT_MAX_ITERS: u8 = 11;

#[derive(Parser)]
#[command(
    name = "floatelast",
    version,
    about = "Equilibria of elastic bodies floating in a resting fluid"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario configuration and write its report and exports.
    Run(RunArgs),
    /// Re-check a saved report and append a verification block to it.
    Verify(VerifyArgs),
    /// Write a primitive mesh as JSON.
    Mesh(MeshArgs),
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    /// Output directory (default: the config's output_dir, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    grid_res: Option<usize>,
    /// Gradient-norm tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Seed for the perturbation probes.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    deterministic: bool,
}

#[derive(Args)]
struct VerifyArgs {
    report: PathBuf,
    /// Checks to run; may be repeated (default: all).
    #[arg(long = "check", value_name = "archimedes|el|fd|ebar")]
    checks: Vec<Check>,
    /// Threshold overriding the per-check default.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct MeshArgs {
    /// box, ball or open_shell
    kind: String,
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Box edge lengths, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0, 1.0])]
    size: Vec<f64>,
    /// Resolution: one value, or one per axis for boxes.
    #[arg(long, value_delimiter = ',', default_values_t = [4])]
    res: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    origin: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.5)]
    radius: f64,
    #[arg(long, default_value_t = 0.1)]
    thickness: f64,
    #[arg(long, default_value_t = 2)]
    layers: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Mesh(a) => cmd_mesh(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config { .. } => EXIT_CONFIG,
                _ => EXIT_FAILURE,
            })
        }
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn cmd_run(a: RunArgs) -> Result<u8, Error> {
    let started = now();
    let clock = Instant::now();
    let text = std::fs::read_to_string(&a.config)
        .map_err(|e| Error::config("", format!("cannot read {}: {e}", a.config.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Error::config("", e.to_string()))?;
    // serde_json objects are ordered maps, so this is a canonical form.
    let canonical = serde_json::to_vec(&value)?;
    let hash = format!("{:x}", Sha256::digest(&canonical));
    let mut cfg = ScenarioConfig::from_value(value)?;
    cfg.base_dir = a.config.parent().map(Path::to_path_buf);
    if let Some(r) = a.grid_res {
        if r < 8 {
            return Err(Error::config("/grid_res", "must be at least 8"));
        }
        cfg.grid_res = Some(r);
    }
    if let Some(t) = a.tol {
        if t.is_nan() || t <= 0.0 {
            return Err(Error::config("/solver/grad_tol", "must be positive"));
        }
        cfg.solver.grad_tol = t;
    }
    if let Some(m) = a.max_iters {
        cfg.solver.max_iters = m;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    cfg.deterministic |= a.deterministic;

    let out_dir = match (&a.out, &cfg.output_dir) {
        (Some(o), _) => o.clone(),
        (None, Some(o)) => cfg.base_dir.clone().unwrap_or_default().join(o),
        (None, None) => PathBuf::from("out"),
    };
    std::fs::create_dir_all(&out_dir)?;

    let output = scenarios::run(&cfg)?;
    let mut report = output.report;
    report.manifest = json!({
        "config_path": a.config.display().to_string(),
        "config_sha256": hash,
        "output_dir": out_dir.display().to_string(),
        "tool_version": env!("CARGO_PKG_VERSION"),
        "deterministic": cfg.deterministic,
        "seed": cfg.seed,
        "timing": {
            "started_at": started,
            "finished_at": now(),
            "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        },
    });
    write_atomic(&out_dir.join("report.json"), &to_json_exact(&report)?)?;
    write_atomic(&out_dir.join("trace.csv"), output.trace_csv.as_bytes())?;
    write_atomic(&out_dir.join("deformed.vtk"), output.deformed_vtk.as_bytes())?;
    if let Some(c) = &output.cavity_vtk {
        write_atomic(&out_dir.join("cavity.vtk"), c.as_bytes())?;
    }
    say!(
        "{}: {} ({}), {} iterations, |grad| = {:.3e}, energy = {:.10e}",
        report.scenario.kind,
        report.status,
        report.float_class,
        report.scenario.iterations,
        report.scenario.grad_norm,
        report.energy.total
    );
    say!("wrote {}", out_dir.display());
    Ok(match report.status {
        SolveStatus::Converged => EXIT_CONVERGED,
        SolveStatus::UnboundedDescent => EXIT_UNBOUNDED,
        SolveStatus::MaxIters => EXIT_MAX_ITERS,
    })
}

fn cmd_verify(a: VerifyArgs) -> Result<u8, Error> {
    let text = std::fs::read_to_string(&a.report)?;
    let mut report: EquilibriumReport = serde_json::from_str(&text)?;
    let checks = if a.checks.is_empty() {
        vec![Check::Archimedes, Check::El, Check::Fd, Check::Ebar]
    } else {
        a.checks
    };
    let pass = scenarios::verify_report(&mut report, &checks, a.tol)?;
    write_atomic(&a.report, &to_json_exact(&report)?)?;
    if let Some(Value::Object(block)) = &report.verification {
        for (name, entry) in block {
            if let Some(p) = entry.get("pass").and_then(Value::as_bool) {
                say!("{name}: {}", if p { "pass" } else { "FAIL" });
            }
        }
    }
    Ok(if pass { EXIT_CONVERGED } else { EXIT_FAILURE })
}

fn cmd_mesh(a: MeshArgs) -> Result<u8, Error> {
    let res0 = *a.res.first().unwrap_or(&4);
    let primitive = match a.kind.as_str() {
        "box" => Primitive::Box {
            size: a.size.clone(),
            res: if a.res.len() == 1 {
                vec![res0; a.dim]
            } else {
                a.res.clone()
            },
            origin: a.origin.clone(),
        },
        "ball" => Primitive::Ball {
            radius: a.radius,
            res: res0,
            center: a.origin.clone(),
        },
        "open_shell" | "shell" => Primitive::OpenShell {
            inner_radius: a.radius,
            thickness: a.thickness,
            res: res0,
            layers: a.layers,
            center: a.origin.clone(),
        },
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown mesh kind {other:?}; expected box, ball or open_shell"
            )))
        }
    };
    let json = match a.dim {
        2 => MeshJson::from(&build_primitive::<2>(&primitive)?),
        3 => MeshJson::from(&build_primitive::<3>(&primitive)?),
        d => return Err(Error::InvalidParameter(format!("dimension {d} is not 2 or 3"))),
    };
    write_atomic(&a.out, &export::to_json_exact(&json)?)?;
    say!("wrote {}", a.out.display());
    Ok(EXIT_CONVERGED)
}
