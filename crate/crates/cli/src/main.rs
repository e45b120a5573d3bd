//! Command-line front end: every library computation as a subcommand, plus
//! deterministic figure-data recipes. Outputs are CSV/JSON artifacts with a
//! manifest (parameter hash, version, timings) per run.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

mod figures;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use latbath::bath::{
    dark_state, disorder_ensemble, evolve, EmitterSpec, ExcitationState, SimulationConfig,
};
use latbath::greens::{gamma, ghost_scan, omega_brute, omega_exact, stationary_phase, tube_approximant};
use latbath::lattice::LatticeSpec;
use latbath::levelset::{caustics, extract, to_csv};
use latbath::semiclassics::{integrate_orbit, orbit_periods, trace_to_csv};

use manifest::Manifest;

#[derive(Debug)]
pub enum CliError {
    /// Bad parameters or malformed input files (exit 2).
    Validation(String),
    /// A downstream computation failed (exit 3).
    Numerical(String),
}

impl From<latbath::Error> for CliError {
    fn from(e: latbath::Error) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Numerical(format!("I/O: {e}"))
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Numerical(format!("CSV: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "latbath", version, about)]
struct Cli {
    /// Cap the worker-thread count (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory for output artifacts and manifests.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Model {
    Square,
    Honeycomb,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Scale {
    Desk,
    Full,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GreensMethod {
    Exact,
    Tube,
    Stationary,
    Brute,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Initial {
    Excited,
    Dark,
}

#[derive(Args, Clone)]
struct ModelArgs {
    #[arg(long, value_enum, default_value = "square")]
    model: Model,
    /// Square: x-coupling Jx. Honeycomb: nearest-neighbour J1.
    #[arg(long, default_value_t = 1.0)]
    jx: f64,
    /// Square: y-coupling Jy. Ignored for honeycomb.
    #[arg(long, default_value_t = 1.0)]
    jy: f64,
    /// Honeycomb next-nearest-neighbour coupling J2 (ratio T = J2/J1 times J1).
    #[arg(long, default_value_t = 0.0)]
    t_nnn: f64,
}

impl ModelArgs {
    fn build(&self) -> CliResult<LatticeSpec> {
        let spec = match self.model {
            Model::Square => latbath::lattice::build_square(self.jx, self.jy, 1.0),
            Model::Honeycomb => latbath::lattice::build_honeycomb(self.jx, self.t_nnn, 1.0),
        };
        spec.map_err(|e| CliError::Validation(e.to_string()))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Extract the resonant level set S(Δ) as a contour CSV.
    Levelset {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, default_value_t = 0)]
        band: usize,
        #[arg(long, default_value_t = 512)]
        grid: usize,
        /// Output CSV path (default: <out-dir>/levelset.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate G(ρ, Δ) = Ω − iΓ/2 by the chosen method; prints JSON.
    Greens {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long, allow_hyphen_values = true)]
        rho_x: f64,
        #[arg(long, allow_hyphen_values = true)]
        rho_y: f64,
        #[arg(long, default_value_t = 0)]
        band: usize,
        #[arg(long, value_enum, default_value = "exact")]
        method: GreensMethod,
    },
    /// Ghost-wave decay scan beyond the caustic: κ(θ) and the power-law fit.
    Scan {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        /// Angular offsets from the caustic, comma-separated (radians).
        #[arg(long, default_value = "0.02,0.035,0.05,0.07,0.1,0.13,0.16,0.2", value_delimiter = ',')]
        offsets: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a semiclassical orbit under flux α; writes the trace CSV.
    Orbit {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, allow_hyphen_values = true)]
        delta: f64,
        #[arg(long)]
        alpha: f64,
        /// Integration horizon (default: 3.5 quadrature periods).
        #[arg(long)]
        t_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evolve emitters coupled to a finite lattice; snapshots as CSV matrices.
    Evolve(EvolveArgs),
    /// Disorder ensemble: averaged log-populations over seeded realizations.
    Ensemble {
        #[command(flatten)]
        ev: EvolveArgs,
        #[arg(long, default_value_t = 20)]
        realizations: usize,
    },
    /// Regenerate the data behind a published figure.
    Reproduce {
        /// One of fig1b fig2b fig2c fig2d fig3a fig3b fig3c fig3d fig3e
        /// fig4a fig4b fig4cf appD.
        figure: String,
        #[arg(long, value_enum, default_value = "desk")]
        scale: Scale,
    },
    /// Execute a recipe file (JSON: {name, operation, parameters, seed}).
    Run {
        recipe: PathBuf,
    },
}

#[derive(Args, Clone)]
struct EvolveArgs {
    #[arg(long, default_value_t = 61)]
    nx: usize,
    #[arg(long, default_value_t = 401)]
    ny: usize,
    #[arg(long, default_value_t = 1.0)]
    jx: f64,
    #[arg(long, default_value_t = 2.0)]
    jy: f64,
    /// Flux per plaquette over 2π.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = -1.0)]
    delta: f64,
    #[arg(long, default_value_t = 0.1)]
    g: f64,
    /// Disorder strength: on-site energies uniform in [−χJ, χJ].
    #[arg(long, default_value_t = 0.0)]
    chi: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Emitter sites as x,y (repeatable).
    #[arg(long = "emitter", value_parser = parse_site, default_values = ["0,0"])]
    emitters: Vec<[i64; 2]>,
    /// Obstructed (decoupled) sites as x,y (repeatable).
    #[arg(long = "obstruct", value_parser = parse_site)]
    obstruction: Vec<[i64; 2]>,
    /// Snapshot times, comma-separated.
    #[arg(long, default_value = "10", value_delimiter = ',')]
    times: Vec<f64>,
    #[arg(long, value_enum, default_value = "excited")]
    initial: Initial,
}

fn parse_site(s: &str) -> Result<[i64; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected x,y but got {s:?}"));
    }
    let x = parts[0].trim().parse().map_err(|e| format!("x: {e}"))?;
    let y = parts[1].trim().parse().map_err(|e| format!("y: {e}"))?;
    Ok([x, y])
}

impl EvolveArgs {
    fn config(&self) -> SimulationConfig {
        SimulationConfig {
            nx: self.nx,
            ny: self.ny,
            jx: self.jx,
            jy: self.jy,
            alpha: self.alpha,
            emitters: self
                .emitters
                .iter()
                .map(|&site| EmitterSpec { site, detuning: self.delta, g: self.g })
                .collect(),
            obstruction: self.obstruction.clone(),
            chi: self.chi,
            seed: self.seed,
        }
    }

    fn initial_state(&self, cfg: &SimulationConfig) -> CliResult<ExcitationState> {
        match self.initial {
            Initial::Excited => Ok(ExcitationState::single_emitter(cfg, 0)?),
            Initial::Dark => Ok(dark_state(cfg)?),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(&cli.out_dir, cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("validation error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}

fn dispatch(out_dir: &Path, cmd: Cmd) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    match cmd {
        Cmd::Levelset { model, delta, band, grid, out } => {
            let mut man = Manifest::start(
                "levelset",
                serde_json::json!({
                    "jx": model.jx, "jy": model.jy, "t_nnn": model.t_nnn,
                    "delta": delta, "band": band, "grid": grid,
                }),
            );
            let spec = model.build()?;
            let set = extract(&spec, band, delta, grid)?;
            let path = out.unwrap_or_else(|| out_dir.join("levelset.csv"));
            let f = std::fs::File::create(&path)?;
            to_csv(&set, f)?;
            man.add_output(&path)?;
            man.finish(out_dir)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Cmd::Greens { model, delta, rho_x, rho_y, band, method } => {
            let spec = model.build()?;
            let rho = [rho_x, rho_y];
            let (omega, gam, extra) = match method {
                GreensMethod::Exact => {
                    let om = omega_exact(&spec, band, rho, delta)?;
                    let ga = gamma(&spec, band, rho, delta)?;
                    (om, ga, serde_json::Value::Null)
                }
                GreensMethod::Tube => {
                    let gv = tube_approximant(&spec, &[band], rho, delta, None, 4096)?;
                    (gv.omega, gv.gamma, serde_json::Value::Null)
                }
                GreensMethod::Stationary => {
                    let gv = stationary_phase(&spec, &[band], rho, delta)?;
                    (gv.omega, gv.gamma, serde_json::Value::Null)
                }
                GreensMethod::Brute => {
                    let b = omega_brute(&spec, &[band], rho, delta, 0, &[4e-2, 2e-2, 1e-2], 4096);
                    (b.omega, b.gamma, serde_json::json!({ "residual": b.residual }))
                }
            };
            println!(
                "{}",
                serde_json::json!({
                    "rho": rho, "delta": delta, "omega": omega, "gamma": gam, "extra": extra,
                })
            );
            Ok(())
        }
        Cmd::Scan { model, delta, offsets, out } => {
            let mut man = Manifest::start(
                "scan",
                serde_json::json!({
                    "jx": model.jx, "jy": model.jy, "delta": delta, "offsets": offsets,
                }),
            );
            let spec = model.build()?;
            let set = extract(&spec, 0, delta, 512)?;
            let cp = caustics(&spec, &set)
                .into_iter()
                .find(|c| c.vhat[0] > 0.0 && c.vhat[1] > 0.0)
                .ok_or_else(|| CliError::Numerical("no first-quadrant caustic".into()))?;
            let theta_c = cp.vhat[1].atan2(cp.vhat[0]);
            let side = ghost_side(&spec, &set, theta_c);
            let thetas: Vec<f64> = offsets.iter().map(|d| theta_c + side * d).collect();
            let fit = ghost_scan(&spec, 0, delta, theta_c, &thetas)?;
            let path = out.unwrap_or_else(|| out_dir.join("ghost_scan.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["theta", "kappa_exact", "kappa_fit", "fit_r2"]).map_err(to_io)?;
            for tf in &fit.per_theta {
                let model_k = fit.amplitude * (tf.theta - theta_c).abs().powf(fit.p);
                w.write_record([
                    format!("{:.9e}", tf.theta),
                    format!("{:.9e}", tf.kappa),
                    format!("{model_k:.9e}"),
                    format!("{:.6}", tf.r2),
                ])
                .map_err(to_io)?;
            }
            w.flush()?;
            println!(
                "{}",
                serde_json::json!({
                    "theta_c": theta_c, "p": fit.p, "amplitude": fit.amplitude, "r2": fit.r2,
                })
            );
            man.add_output(&path)?;
            man.finish(out_dir)?;
            Ok(())
        }
        Cmd::Orbit { model, delta, alpha, t_max, out } => {
            let mut man = Manifest::start(
                "orbit",
                serde_json::json!({
                    "jx": model.jx, "jy": model.jy, "delta": delta, "alpha": alpha,
                }),
            );
            let spec = model.build()?;
            let set = extract(&spec, 0, delta, 512)?;
            let horizon = match t_max {
                Some(t) => t,
                None => 3.5 * orbit_periods(&spec, &set, alpha)?.tau,
            };
            let k0 = set.curves[0].points[0].k;
            let trace = integrate_orbit(&spec, 0, k0, [0.0, 0.0], alpha, horizon)?;
            let path = out.unwrap_or_else(|| out_dir.join("orbit.csv"));
            trace_to_csv(&trace, std::fs::File::create(&path)?)?;
            println!(
                "{}",
                serde_json::json!({
                    "class": format!("{:?}", trace.class), "tau": trace.tau,
                    "l": trace.l, "energy_drift": trace.energy_drift,
                })
            );
            man.add_output(&path)?;
            man.finish(out_dir)?;
            Ok(())
        }
        Cmd::Evolve(args) => {
            let mut man = Manifest::start("evolve", evolve_params(&args));
            let cfg = args.config();
            let init = args.initial_state(&cfg)?;
            let ev = evolve(&cfg, &init, &args.times)?;
            let mut outputs = Vec::new();
            for (i, snap) in ev.snapshots.iter().enumerate() {
                let path = out_dir.join(format!("snapshot_t{:07.2}.csv", ev.times[i]));
                latbath::bath::snapshot_to_csv(&cfg, snap, std::fs::File::create(&path)?)?;
                outputs.push(path);
            }
            let pop_path = out_dir.join("emitter_populations.csv");
            let mut w = csv::Writer::from_path(&pop_path)?;
            let mut header = vec!["t".to_string()];
            header.extend((0..cfg.emitters.len()).map(|e| format!("emitter_{e}")));
            w.write_record(&header).map_err(to_io)?;
            for (i, pops) in ev.emitter_pops.iter().enumerate() {
                let mut rec = vec![format!("{:.9e}", ev.times[i])];
                rec.extend(pops.iter().map(|p| format!("{p:.9e}")));
                w.write_record(&rec).map_err(to_io)?;
            }
            w.flush()?;
            outputs.push(pop_path);
            for p in &outputs {
                man.add_output(p)?;
            }
            man.finish(out_dir)?;
            println!("wrote {} snapshots, norm drift {:.2e}", ev.snapshots.len(), ev.max_norm_drift);
            Ok(())
        }
        Cmd::Ensemble { ev: args, realizations } => {
            let mut man = Manifest::start(
                "ensemble",
                serde_json::json!({ "evolve": evolve_params(&args), "realizations": realizations }),
            );
            let cfg = args.config();
            let init = args.initial_state(&cfg)?;
            let stats = disorder_ensemble(&cfg, &init, realizations, &args.times)?;
            let last = stats.times.len() - 1;
            let path = out_dir.join("ensemble.csv");
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(["x", "y", "mean_log_pop", "std_log_pop"]).map_err(to_io)?;
            let (cx, cy) = ((cfg.nx as i64 - 1) / 2, (cfg.ny as i64 - 1) / 2);
            for iy in 0..cfg.ny as i64 {
                for ix in 0..cfg.nx as i64 {
                    let s = (iy * cfg.nx as i64 + ix) as usize;
                    w.write_record([
                        format!("{}", ix - cx),
                        format!("{}", iy - cy),
                        format!("{:.6}", stats.mean_log[last][s]),
                        format!("{:.6}", stats.std_log[last][s]),
                    ])
                    .map_err(to_io)?;
                }
            }
            w.flush()?;
            man.add_output(&path)?;
            man.finish(out_dir)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Cmd::Reproduce { figure, scale } => figures::reproduce(&figure, scale, out_dir),
        Cmd::Run { recipe } => run_recipe(out_dir, &recipe),
    }
}

/// Sign s such that θ_c + s·δ (δ > 0) walks into the ghost regime: the side
/// of the caustic where the directional cross section vanishes.
fn ghost_side(
    spec: &LatticeSpec,
    set: &latbath::levelset::ResonantSet,
    theta_c: f64,
) -> f64 {
    let probe = theta_c + 0.05;
    let sigma = latbath::levelset::directional_cross_section(
        spec,
        set,
        [probe.cos(), probe.sin()],
    )
    .map(|s| s.abs())
    .unwrap_or(0.0);
    if sigma > 1e-12 {
        -1.0
    } else {
        1.0
    }
}

fn evolve_params(a: &EvolveArgs) -> serde_json::Value {
    serde_json::json!({
        "nx": a.nx, "ny": a.ny, "jx": a.jx, "jy": a.jy, "alpha": a.alpha,
        "delta": a.delta, "g": a.g, "chi": a.chi, "seed": a.seed,
        "emitters": a.emitters, "obstruction": a.obstruction, "times": a.times,
    })
}

fn to_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

#[derive(serde::Deserialize)]
struct Recipe {
    name: String,
    /// Subcommand name, e.g. "levelset" or "reproduce".
    operation: String,
    /// Flag map; keys without the leading "--". Positional arguments go
    /// under the key "args" as a list.
    #[serde(default)]
    parameters: serde_json::Map<String, serde_json::Value>,
    #[serde(default)]
    seed: Option<u64>,
}

/// Rebuild an argv from the recipe and re-enter the normal clap pipeline, so
/// recipes share defaults and validation with direct invocations.
fn run_recipe(out_dir: &Path, path: &Path) -> CliResult<()> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read recipe {}: {e}", path.display())))?;
    let recipe: Recipe = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("malformed recipe: {e}")))?;
    let mut argv: Vec<String> = vec!["latbath".into(), recipe.operation.clone()];
    for (key, value) in &recipe.parameters {
        if key == "args" {
            match value {
                serde_json::Value::Array(items) => {
                    argv.extend(items.iter().map(json_scalar))
                }
                other => argv.push(json_scalar(other)),
            }
            continue;
        }
        match value {
            serde_json::Value::Array(items) => {
                for item in items {
                    argv.push(format!("--{key}"));
                    argv.push(json_scalar(item));
                }
            }
            serde_json::Value::Bool(true) => argv.push(format!("--{key}")),
            serde_json::Value::Bool(false) => {}
            other => {
                argv.push(format!("--{key}"));
                argv.push(json_scalar(other));
            }
        }
    }
    if let Some(seed) = recipe.seed {
        argv.push("--seed".into());
        argv.push(seed.to_string());
    }
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| CliError::Validation(format!("recipe {:?}: {e}", recipe.name)))?;
    dispatch(out_dir, cli.cmd)
}

fn json_scalar(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
