//! Command-line front end: `run`, `continue`, `density-audit` and
//! `diagnose`, each driven by a configuration file.
//!
//! Exit codes: 0 success, 1 invalid configuration or input, 2 flow stopped
//! by max_steps / t_max, 3 supersonic state or stalled flow, 4 ellipticity
//! audit not satisfied. Every nonzero exit writes one JSON line to stderr.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CampanatoField, Config, ConfigError, InitConfig};
use crate::continuation::Continuation;
use crate::density::DensityModel;
use crate::diagnostics::{self, CampanatoExponent, DiagnosticsReport, LpNorm};
use crate::error::HodgeError;
use crate::flow::{Flow, FlowTrace, StopReason};
use crate::grid::Grid;
use crate::output::{field_csv, read_field_csv};
use crate::presets::{initial_field, scale_map, InitSpec};
use crate::state::{compute_q, MapField, Target};

#[derive(Debug, Parser)]
#[command(name = "nlhodge", version, about = "Nonlinear Hodge maps on uniform grids")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Output directory (overrides output.dir; default ./out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Single thread, no wall-clock times in outputs.
    #[arg(long, global = true)]
    pub deterministic: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flow the configured initial map to a stationary map.
    Run { config: PathBuf },
    /// Sweep the amplitude of the boundary data and bracket t_crit.
    Continue { config: PathBuf },
    /// Check uniform ellipticity of the density on audit.q_range.
    DensityAudit { config: PathBuf },
    /// Growth, integrability, oscillation and Frobenius diagnostics.
    Diagnose { config: PathBuf },
}

/// A failed command: exit code plus the fields of the stderr JSON line.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub body: Value,
}

impl CliError {
    fn new(code: i32, kind: &str, message: impl Into<String>) -> Self {
        Self {
            code,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    fn io(path: &Path, e: std::io::Error) -> Self {
        Self::new(1, "io", format!("{}: {e}", path.display()))
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let mut err = Self::new(1, "config", e.to_string());
        err.body["line"] = json!(e.line);
        err
    }
}

impl From<HodgeError> for CliError {
    fn from(e: HodgeError) -> Self {
        let code = match e {
            HodgeError::SupersonicState { .. } | HodgeError::StalledFlow { .. } => 3,
            _ => 1,
        };
        let mut err = Self::new(code, e.kind(), e.to_string());
        if let HodgeError::SupersonicState { max_q, node, position, .. } = &e {
            err.body["max_q"] = json!(max_q);
            err.body["node"] = json!(node);
            err.body["position"] = json!(position);
        }
        err
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

struct Env {
    out: PathBuf,
    deterministic: bool,
    started: Instant,
}

impl Env {
    fn wall_time(&self) -> Option<f64> {
        (!self.deterministic).then(|| self.started.elapsed().as_secs_f64())
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        fs::create_dir_all(&self.out).map_err(|e| CliError::io(&self.out, e))?;
        let path = self.out.join(name);
        fs::write(&path, contents).map_err(|e| CliError::io(&path, e))
    }

    fn write_json(&self, name: &str, value: &impl Serialize) -> CliResult<()> {
        let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
        s.push('\n');
        self.write(name, &s)
    }
}

/// Parses arguments, runs the command and returns the exit code.
pub fn main_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            let msg = e.render().to_string();
            let line = msg.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            report(&CliError::new(1, "usage", line));
            return 1;
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            report(&e);
            e.code
        }
    }
}

fn report(e: &CliError) {
    eprintln!("{}", serde_json::to_string(&e.body).expect("plain data serializes"));
}

/// Runs a parsed command. `Ok(code)` covers the non-error outcomes
/// (0, 2, 4); errors carry their own code.
pub fn execute(cli: &Cli) -> CliResult<i32> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::new(1, "usage", "--threads must be at least 1"));
        }
        // the global pool can only be set once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let path = match &cli.command {
        Command::Run { config }
        | Command::Continue { config }
        | Command::DensityAudit { config }
        | Command::Diagnose { config } => config,
    };
    let cfg = Config::from_file(path)?;
    let env = Env {
        out: cli
            .out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("out")),
        deterministic: cli.deterministic,
        started: Instant::now(),
    };
    match cli.command {
        Command::Run { .. } => cmd_run(&cfg, &env),
        Command::Continue { .. } => cmd_continue(&cfg, &env),
        Command::DensityAudit { .. } => cmd_density_audit(&cfg),
        Command::Diagnose { .. } => cmd_diagnose(&cfg, &env),
    }
}

fn boundary_data(cfg: &Config, grid: std::sync::Arc<Grid>, model: &DensityModel) -> CliResult<MapField> {
    let b = cfg.boundary()?;
    let data = b.preset.sample(grid, model)?;
    Ok(if b.scale == 1.0 { data } else { scale_map(&data, b.scale)? })
}

fn read_field(path: &Path, grid: &Grid, components: usize) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (m, values) = read_field_csv(&text, grid)?;
    if m != components {
        return Err(HodgeError::DimensionMismatch(format!(
            "{} holds {m} components, the map has {components}",
            path.display()
        ))
        .into());
    }
    Ok(values)
}

fn cmd_run(cfg: &Config, env: &Env) -> CliResult<i32> {
    let model = cfg.density()?;
    let grid = cfg.grid()?.build()?;
    let data = boundary_data(cfg, grid.clone(), &model)?;
    let init = match &cfg.init {
        InitConfig::Zero => InitSpec::Zero,
        InitConfig::BoundaryHarmonicExtension => InitSpec::BoundaryHarmonicExtension,
        InitConfig::Random { seed } => InitSpec::Random { seed: *seed },
        InitConfig::File(p) => InitSpec::File {
            values: read_field(p, &grid, data.components())?,
        },
    };
    let u0 = initial_field(&data, &init, &cfg.stop)?;

    let flow = Flow::new(model, cfg.stop.safety);
    let mut trace = FlowTrace::default();
    let result = flow.run_traced(u0, &cfg.stop, &mut trace);
    env.write("trace.csv", &trace.to_csv())?;
    let (state, reason) = result?;
    env.write("field.csv", &field_csv(&state.u))?;
    env.write_json(
        "summary.json",
        &json!({
            "command": "run",
            "density": model,
            "q_crit": flow.q_crit(),
            "stop_reason": reason,
            "converged": reason == StopReason::Converged,
            "steps": state.step,
            "t": state.t,
            "energy": state.energy,
            "max_q": state.max_q,
            "residual": state.residual,
            "dissipation_violations": trace.dissipation_violations(),
            "wall_time": env.wall_time(),
        }),
    )?;
    Ok(if reason == StopReason::Converged { 0 } else { 2 })
}

fn cmd_continue(cfg: &Config, env: &Env) -> CliResult<i32> {
    let model = cfg.density()?;
    let cc = cfg.continuation()?;
    let grid = cfg.grid()?.build()?;
    let data = boundary_data(cfg, grid, &model)?;
    let cont = Continuation::new(data, model, cfg.stop)?;
    let mut curve = cont.sweep(&cc.t_values)?;
    let estimate = if curve.converged().count() >= 2 {
        Some(cont.estimate_t_crit(&mut curve, cc.bracket_tol)?)
    } else {
        None
    };
    env.write("continuation.csv", &curve.to_csv())?;
    let unconverged = curve.failure.as_ref().is_some_and(|f| f.kind == "unconverged");
    env.write_json(
        "summary.json",
        &json!({
            "command": "continue",
            "density": model,
            "q_crit": model.q_crit(),
            "t_crit_lower": estimate.map(|e| e.lower),
            "t_crit_upper": estimate.and_then(|e| e.upper),
            "bracket_width": estimate.and_then(|e| e.width()),
            "open_bracket": estimate.is_some_and(|e| e.upper.is_none()),
            "bisections": estimate.map(|e| e.bisections),
            "max_q_at_last": curve.last_converged().map(|r| r.max_q),
            "failure": curve.failure,
            "monotonicity_warnings": curve.monotonicity_warnings(),
            "accepted_steps": curve.accepted_steps,
            "dissipation_violations": curve.dissipation_violations,
            "wall_time": env.wall_time(),
        }),
    )?;
    Ok(if unconverged { 2 } else { 0 })
}

fn cmd_density_audit(cfg: &Config) -> CliResult<i32> {
    let model = cfg.density()?;
    let audit = cfg.audit()?;
    let report = model.check_ellipticity(audit.q_range, audit.samples)?;
    println!("{}", serde_json::to_string(&report).expect("plain data serializes"));
    Ok(if report.satisfied { 0 } else { 4 })
}

fn cmd_diagnose(cfg: &Config, env: &Env) -> CliResult<i32> {
    let d = &cfg.diagnose;
    let grid = cfg.grid()?.build()?;
    let dim = grid.dim();
    let field = if let Some(path) = &d.field_file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let (m, values) = read_field_csv(&text, &grid)?;
        Some(MapField::new(grid.clone(), m, values, Target::Flat)?)
    } else if cfg.has_boundary() {
        let model = cfg.density().unwrap_or(DensityModel::Constant);
        Some(boundary_data(cfg, grid.clone(), &model)?)
    } else {
        None
    };
    let center = match &d.center {
        Some(c) => c.clone(),
        None => vec![0.0; dim],
    };

    let mut report = DiagnosticsReport {
        gamma0_hat: None,
        lp_norms: Vec::new(),
        campanato: None,
        campanato_exponent: None,
        frobenius_residual: None,
        rotational_residual: None,
    };
    if let Some(u) = &field {
        let q = compute_q(u);
        if let Some((r0, r1)) = d.annulus {
            report.gamma0_hat = Some(diagnostics::growth_constant(&grid, &q, &center, r0, r1)?);
        }
        for &p in &d.lp_p {
            for &radius in &d.lp_radii {
                let value = diagnostics::lp_norm(&grid, &q, &center, radius, p)?;
                report.lp_norms.push(LpNorm { p, radius, value });
            }
        }
        if !d.campanato_radii.is_empty() {
            let fit = match d.campanato_field {
                CampanatoField::Map => {
                    diagnostics::mean_oscillation(&grid, u.values(), u.components(), &center, &d.campanato_radii)?
                }
                CampanatoField::Differential => {
                    let w = u.differential();
                    let per_node = u.components() * dim;
                    diagnostics::mean_oscillation(&grid, w.values(), per_node, &center, &d.campanato_radii)?
                }
            };
            report.campanato_exponent = Some(CampanatoExponent(fit.exponent));
            report.campanato = Some(fit);
        }
    }
    if let Some(form) = d.form {
        let omega = form.sample(grid.clone())?;
        report.frobenius_residual = Some(diagnostics::frobenius_residual(&omega)?);
        if let Some(rot) = d.rotation {
            let v = rot.sample(grid.clone())?;
            report.rotational_residual = Some(diagnostics::rotational_residual(&omega, &v)?);
        }
    }
    env.write_json("diagnostics.json", &report)?;
    Ok(0)
}
