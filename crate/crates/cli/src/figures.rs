//! Deterministic figure-data recipes. Each recipe writes CSV artifacts plus
//! a manifest into the output directory. `desk` scale uses reduced lattice
//! sizes / grids that run on a workstation; `full` matches the published
//! parameters.

use std::path::{Path, PathBuf};

use latbath::bath::{
    dark_state, disorder_ensemble, evolve, snapshot_to_csv, EmitterSpec, ExcitationState,
    SimulationConfig,
};
use latbath::greens::{
    gamma, ghost_scan, omega_brute, omega_exact, omega_exact_multi, stationary_phase,
    tube_approximant,
};
use latbath::lattice::{build_honeycomb, build_square};
use latbath::levelset::{caustics, directional_cross_section, extract};
use latbath::semiclassics::{integrate_orbit, orbit_periods};
use num_complex::Complex;

use crate::manifest::Manifest;
use crate::{CliError, CliResult, Scale};

type C64 = Complex<f64>;

pub fn reproduce(figure: &str, scale: Scale, out_dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out_dir)?;
    let mut man = Manifest::start(
        &format!("reproduce_{figure}"),
        serde_json::json!({
            "figure": figure,
            "scale": if scale == Scale::Desk { "desk" } else { "full" },
        }),
    );
    let outputs = match figure {
        "fig1b" => fig1b(scale, out_dir)?,
        "fig2b" => fig2b(scale, out_dir)?,
        "fig2c" => fig2c(scale, out_dir)?,
        "fig2d" => fig2d(scale, out_dir)?,
        "fig3a" => fig3_snapshot(scale, out_dir, 6.0, 0.1, "fig3a")?,
        "fig3b" => fig3b(scale, out_dir)?,
        "fig3c" => fig3c(scale, out_dir)?,
        "fig3d" => fig3d(scale, out_dir)?,
        "fig3e" => fig3e(scale, out_dir)?,
        "fig4a" => fig4a(scale, out_dir)?,
        "fig4b" => fig4b(scale, out_dir)?,
        "fig4cf" => fig4cf(scale, out_dir)?,
        "appD" | "appd" => app_d(scale, out_dir)?,
        other => {
            return Err(CliError::Validation(format!("unknown figure id {other:?}")));
        }
    };
    for p in &outputs {
        man.add_output(p)?;
    }
    man.finish(out_dir)?;
    println!("{figure}: wrote {} artifact(s) to {}", outputs.len(), out_dir.display());
    Ok(())
}

fn linfit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxy / sxx, my - sxy / sxx * mx)
}

fn csv_writer(path: &Path) -> CliResult<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_path(path).map_err(std::io::Error::other)?)
}

fn wrec<W: std::io::Write, S: AsRef<[u8]>>(
    w: &mut csv::Writer<W>,
    rec: impl IntoIterator<Item = S>,
) -> CliResult<()> {
    w.write_record(rec).map_err(std::io::Error::other)?;
    Ok(())
}

/// Exact Ω vs tube and stationary-phase approximants along the square
/// diagonal, with relative errors.
fn fig1b(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let sq = build_square(1.0, 1.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let ns: Vec<i64> = match scale {
        Scale::Desk => (1..=20).map(|i| 2 * i).collect(),
        Scale::Full => (2..=60).collect(),
    };
    let path = out_dir.join("fig1b.csv");
    let mut w = csv_writer(&path)?;
    wrec(&mut w, ["n", "Omega_exact", "Omega_tube", "Omega_stat", "err_tube", "err_stat"])?;
    for &n in &ns {
        let rho = [n as f64, n as f64];
        let om = omega_exact(&sq, 0, rho, -1.0)?;
        let tube = tube_approximant(&sq, &[0], rho, -1.0, None, 4096)?.omega;
        let stat = stationary_phase(&sq, &[0], rho, -1.0)?.omega;
        wrec(
            &mut w,
            [
                n.to_string(),
                format!("{om:.9e}"),
                format!("{tube:.9e}"),
                format!("{stat:.9e}"),
                format!("{:.6e}", (tube - om).abs() / om.abs()),
                format!("{:.6e}", (stat - om).abs() / om.abs()),
            ],
        )?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Cross-sectional density of states vs propagation angle for the
/// anisotropic square lattice; caustic directions are reported as "inf".
fn fig2b(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let sq = build_square(1.0, 2.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let set = extract(&sq, 0, -1.0, 512)?;
    let n_theta = if scale == Scale::Desk { 181 } else { 721 };
    let path = out_dir.join("fig2b.csv");
    let mut w = csv_writer(&path)?;
    wrec(&mut w, ["theta", "sigma"])?;
    for i in 0..=n_theta {
        let theta = std::f64::consts::FRAC_PI_2 * i as f64 / n_theta as f64;
        let sigma = match directional_cross_section(&sq, &set, [theta.cos(), theta.sin()]) {
            Ok(s) => format!("{s:.9e}"),
            Err(latbath::Error::DivergesAtCaustic) => "inf".to_string(),
            Err(e) => return Err(e.into()),
        };
        wrec(&mut w, [format!("{theta:.6}"), sigma])?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// |G| versus propagation angle at fixed radius (broadened BZ integral,
/// valid on both sides of the caustic), plus the on-axis Ω and Γ inset data.
fn fig2c(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let sq = build_square(1.0, 2.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let (r, step_deg) = match scale {
        Scale::Desk => (12.0, 6.0),
        Scale::Full => (25.0, 2.0),
    };
    let angular = out_dir.join("fig2c_angular.csv");
    let mut w = csv_writer(&angular)?;
    wrec(&mut w, ["theta", "log10_abs_G", "omega", "gamma"])?;
    let mut deg = 0.0f64;
    while deg <= 90.0 + 1e-9 {
        let th = deg.to_radians();
        let rho = [r * th.cos(), r * th.sin()];
        let b = omega_brute(&sq, &[0], rho, -1.0, 0, &[4e-2, 2e-2, 1e-2], 4096);
        let absg = (b.omega * b.omega + 0.25 * b.gamma * b.gamma).sqrt();
        wrec(
            &mut w,
            [
                format!("{th:.6}"),
                format!("{:.6}", absg.log10()),
                format!("{:.9e}", b.omega),
                format!("{:.9e}", b.gamma),
            ],
        )?;
        deg += step_deg;
    }
    w.flush()?;

    let axis = out_dir.join("fig2c_axis.csv");
    let mut w = csv_writer(&axis)?;
    wrec(&mut w, ["n", "omega", "gamma"])?;
    // the PV integral along the deep ghost axis gets expensive at large n
    let n_axis = if scale == Scale::Desk { 18 } else { 30 };
    for n in 1..=n_axis {
        let rho = [n as f64, 0.0];
        wrec(
            &mut w,
            [
                n.to_string(),
                format!("{:.9e}", omega_exact(&sq, 0, rho, -1.0)?),
                format!("{:.9e}", gamma(&sq, 0, rho, -1.0)?),
            ],
        )?;
    }
    w.flush()?;
    Ok(vec![angular, axis])
}

/// Ghost-wave inverse decay length κ(θ): per-angle exact decay fits and the
/// universal power law.
fn fig2d(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let sq = build_square(1.0, 2.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let set = extract(&sq, 0, -1.0, 512)?;
    let cp = caustics(&sq, &set)
        .into_iter()
        .find(|c| c.vhat[0] > 0.0 && c.vhat[1] > 0.0)
        .ok_or_else(|| CliError::Numerical("no first-quadrant caustic".into()))?;
    let theta_c = cp.vhat[1].atan2(cp.vhat[0]);
    let side = crate::ghost_side(&sq, &set, theta_c);
    let offsets: Vec<f64> = match scale {
        Scale::Desk => vec![0.02, 0.035, 0.05, 0.07, 0.1, 0.13, 0.16, 0.2],
        Scale::Full => (0..16).map(|i| 0.02 * 1.17f64.powi(i)).collect(),
    };
    let thetas: Vec<f64> = offsets.iter().map(|d| theta_c + side * d).collect();
    let fit = ghost_scan(&sq, 0, -1.0, theta_c, &thetas)?;
    let path = out_dir.join("fig2d.csv");
    let mut w = csv_writer(&path)?;
    wrec(&mut w, ["theta", "kappa_exact", "kappa_fit"])?;
    for tf in &fit.per_theta {
        let model = fit.amplitude * (tf.theta - theta_c).abs().powf(fit.p);
        wrec(
            &mut w,
            [format!("{:.6}", tf.theta), format!("{:.9e}", tf.kappa), format!("{model:.9e}")],
        )?;
    }
    w.flush()?;
    let meta = out_dir.join("fig2d_fit.json");
    std::fs::write(
        &meta,
        serde_json::json!({
            "theta_c": theta_c, "p": fit.p, "amplitude": fit.amplitude, "r2": fit.r2,
        })
        .to_string(),
    )?;
    Ok(vec![path, meta])
}

fn desk_bath(scale: Scale, alpha: f64, g: f64, ny: usize, sites: Vec<[i64; 2]>) -> SimulationConfig {
    let nx = if scale == Scale::Desk { 61 } else { 111 };
    SimulationConfig {
        nx,
        ny,
        jx: 1.0,
        jy: 2.0,
        alpha,
        emitters: sites
            .into_iter()
            .map(|site| EmitterSpec { site, detuning: -1.0, g })
            .collect(),
        obstruction: vec![],
        chi: 0.0,
        seed: 1,
    }
}

fn open_orbit_tau(alpha: f64) -> CliResult<f64> {
    let sq = build_square(1.0, 2.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let set = extract(&sq, 0, -1.0, 512)?;
    Ok(orbit_periods(&sq, &set, alpha)?.tau)
}

/// Single-emitter bath snapshot at t = n_tau·τ (figures 3a and 3b share
/// this shape).
fn fig3_snapshot(scale: Scale, out_dir: &Path, n_tau: f64, g: f64, stem: &str) -> CliResult<Vec<PathBuf>> {
    let alpha = 0.01;
    let tau = open_orbit_tau(alpha)?;
    let ny = if scale == Scale::Desk { 401 } else { 1201 };
    let cfg = desk_bath(scale, alpha, g, ny, vec![[0, 0]]);
    let init = ExcitationState::single_emitter(&cfg, 0)?;
    let ev = evolve(&cfg, &init, &[n_tau * tau])?;
    let path = out_dir.join(format!("{stem}_snapshot.csv"));
    snapshot_to_csv(&cfg, &ev.snapshots[0], std::fs::File::create(&path)?)?;
    Ok(vec![path])
}

/// Bath population at t = τ together with semiclassical trajectories from
/// wavevectors sampled on the resonant set.
fn fig3b(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let mut outputs = fig3_snapshot(scale, out_dir, 1.0, 0.1, "fig3b")?;
    let sq = build_square(1.0, 2.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let set = extract(&sq, 0, -1.0, 512)?;
    let tau = orbit_periods(&sq, &set, 0.01)?.tau;
    let pts = &set.curves[0].points;
    let path = out_dir.join("fig3b_orbits.csv");
    let mut w = csv_writer(&path)?;
    wrec(&mut w, ["trace_id", "t", "x", "y", "k_x", "k_y"])?;
    for (id, frac) in [0.0, 0.2, 0.4, 0.6, 0.8].iter().enumerate() {
        let k0 = pts[(frac * pts.len() as f64) as usize].k;
        let trace = integrate_orbit(&sq, 0, k0, [0.0, 0.0], 0.01, 1.05 * tau)?;
        for s in &trace.samples {
            wrec(
                &mut w,
                [
                    id.to_string(),
                    format!("{:.6}", s.t),
                    format!("{:.6}", s.r[0]),
                    format!("{:.6}", s.r[1]),
                    format!("{:.6}", s.k[0]),
                    format!("{:.6}", s.k[1]),
                ],
            )?;
        }
    }
    w.flush()?;
    outputs.push(path);
    Ok(outputs)
}

/// Bath population along x at y = 0 and y = l, at t = τ.
fn fig3c(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let alpha = 0.01;
    let tau = open_orbit_tau(alpha)?;
    let ny = if scale == Scale::Desk { 401 } else { 1201 };
    let cfg = desk_bath(scale, alpha, 0.1, ny, vec![[0, 0]]);
    let init = ExcitationState::single_emitter(&cfg, 0)?;
    let ev = evolve(&cfg, &init, &[tau])?;
    let snap = &ev.snapshots[0];
    let (cx, cy) = ((cfg.nx as i64 - 1) / 2, (cfg.ny as i64 - 1) / 2);
    let l = (1.0 / alpha).round() as i64;
    let path = out_dir.join("fig3c.csv");
    let mut w = csv_writer(&path)?;
    wrec(&mut w, ["x", "pop_y0", "pop_yl"])?;
    for ix in 0..cfg.nx as i64 {
        let at = |y: i64| snap[((y + cy) as usize) * cfg.nx + ix as usize];
        wrec(
            &mut w,
            [
                format!("{}", ix - cx),
                format!("{:.9e}", at(0)),
                format!("{:.9e}", at(l)),
            ],
        )?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Total emitter population vs time for one, two and three emitters
/// separated by 3l, prepared in the alternating-sign subradiant states.
fn fig3d(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let alpha = 0.01;
    let tau = open_orbit_tau(alpha)?;
    let times: Vec<f64> = (1..=20).map(|i| 0.5 * i as f64 * tau).collect();
    let sep = 3 * (1.0f64 / alpha).round() as i64; // 3l = 300
    let site_sets: [Vec<[i64; 2]>; 3] = [
        vec![[0, 0]],
        vec![[0, -sep / 2], [0, sep / 2]],
        vec![[0, -sep], [0, 0], [0, sep]],
    ];
    let mut series: Vec<Vec<f64>> = Vec::new();
    for sites in site_sets {
        let cfg = desk_bath(scale, alpha, 0.025, 1201, sites);
        let init = if cfg.emitters.len() == 1 {
            ExcitationState::single_emitter(&cfg, 0)?
        } else {
            dark_state(&cfg)?
        };
        let ev = evolve(&cfg, &init, &times)?;
        series.push(ev.emitter_pops.iter().map(|p| p.iter().sum()).collect());
    }
    let path = out_dir.join("fig3d.csv");
    let mut w = csv_writer(&path)?;
    wrec(&mut w, ["t", "pop_1_emitter", "pop_2_emitters", "pop_3_emitters"])?;
    for (i, &t) in times.iter().enumerate() {
        wrec(
            &mut w,
            [
                format!("{t:.4}"),
                format!("{:.9e}", series[0][i]),
                format!("{:.9e}", series[1][i]),
                format!("{:.9e}", series[2][i]),
            ],
        )?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Bath snapshot at t = 10τ for the two-emitter dark state at separation 3l.
fn fig3e(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let alpha = 0.01;
    let tau = open_orbit_tau(alpha)?;
    let cfg = desk_bath(scale, alpha, 0.025, 1201, vec![[0, -150], [0, 150]]);
    let init = dark_state(&cfg)?;
    let ev = evolve(&cfg, &init, &[10.0 * tau])?;
    let path = out_dir.join("fig3e_snapshot.csv");
    snapshot_to_csv(&cfg, &ev.snapshots[0], std::fs::File::create(&path)?)?;
    Ok(vec![path])
}

/// Transport past an obstruction: a decoupled segment at y = l/2,
/// x ∈ [−10, 10]; snapshot at t = 3τ.
fn fig4a(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let alpha = if scale == Scale::Desk { 0.02 } else { 0.01 };
    let tau = open_orbit_tau(alpha)?;
    let l = (1.0 / alpha).round() as i64;
    let ny = if scale == Scale::Desk { 401 } else { 1201 };
    let mut cfg = desk_bath(scale, alpha, 0.025, ny, vec![[0, 0]]);
    cfg.obstruction = (-10..=10).map(|x| [x, l / 2]).collect();
    let init = ExcitationState::single_emitter(&cfg, 0)?;
    let ev = evolve(&cfg, &init, &[3.0 * tau])?;
    let path = out_dir.join("fig4a_snapshot.csv");
    snapshot_to_csv(&cfg, &ev.snapshots[0], std::fs::File::create(&path)?)?;
    Ok(vec![path])
}

/// Ensemble-averaged log bath population at t = 3τ under strong disorder.
fn fig4b(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let alpha = if scale == Scale::Desk { 0.02 } else { 0.01 };
    let tau = open_orbit_tau(alpha)?;
    let ny = if scale == Scale::Desk { 401 } else { 1201 };
    let mut cfg = desk_bath(scale, alpha, 0.025, ny, vec![[0, 0]]);
    cfg.chi = 0.5;
    let n_real = if scale == Scale::Desk { 20 } else { 100 };
    let init = ExcitationState::single_emitter(&cfg, 0)?;
    let stats = disorder_ensemble(&cfg, &init, n_real, &[3.0 * tau])?;
    let path = out_dir.join("fig4b_mean_log.csv");
    let mut out = std::fs::File::create(&path)?;
    use std::io::Write;
    for iy in 0..cfg.ny {
        let row = &stats.mean_log[0][iy * cfg.nx..(iy + 1) * cfg.nx];
        let line: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(vec![path])
}

/// Disorder cross-sections: mean and standard deviation of the log
/// population along y = 2l at t = 3τ, for increasing χ.
fn fig4cf(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let alpha = if scale == Scale::Desk { 0.02 } else { 0.01 };
    let tau = open_orbit_tau(alpha)?;
    let l = (1.0 / alpha).round() as i64;
    let ny = if scale == Scale::Desk { 401 } else { 1201 };
    let n_real = if scale == Scale::Desk { 30 } else { 100 };
    let chis = [0.0, 0.1, 0.25, 0.5];
    let base = desk_bath(scale, alpha, 0.025, ny, vec![[0, 0]]);
    let init = ExcitationState::single_emitter(&base, 0)?;
    let mut columns: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for &chi in &chis {
        let cfg = SimulationConfig { chi, ..base.clone() };
        let n = if chi == 0.0 { 1 } else { n_real };
        let stats = disorder_ensemble(&cfg, &init, n, &[3.0 * tau])?;
        let iy = (2 * l + (ny as i64 - 1) / 2) as usize;
        let mean = stats.mean_log[0][iy * cfg.nx..(iy + 1) * cfg.nx].to_vec();
        let std = stats.std_log[0][iy * cfg.nx..(iy + 1) * cfg.nx].to_vec();
        columns.push((mean, std));
    }
    let path = out_dir.join("fig4cf.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["x".to_string()];
    for &chi in &chis {
        header.push(format!("mean_log_chi{chi}"));
        header.push(format!("std_log_chi{chi}"));
    }
    wrec(&mut w, &header)?;
    let cx = (base.nx as i64 - 1) / 2;
    for ix in 0..base.nx {
        let mut rec = vec![format!("{}", ix as i64 - cx)];
        for (mean, std) in &columns {
            rec.push(format!("{:.4}", mean[ix]));
            rec.push(format!("{:.4}", std[ix]));
        }
        wrec(&mut w, &rec)?;
    }
    w.flush()?;
    Ok(vec![path])
}

/// Honeycomb appendix data: two-band tube-approximant error decay along a
/// lattice vector at Δ = 2J (Dirac model), and the caustic-direction decay
/// with its power-law fit in the anisotropic model at the singular energy.
fn app_d(scale: Scale, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let hc0 = build_honeycomb(1.0, 0.0, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let a1 = [1.5, 0.5 * 3.0f64.sqrt()];
    let ns: Vec<i64> = match scale {
        Scale::Desk => vec![2, 4, 6, 8, 11, 14, 17, 20],
        Scale::Full => (2..=24).collect(),
    };
    let decay = out_dir.join("appD_dirac_decay.csv");
    let mut w = csv_writer(&decay)?;
    wrec(&mut w, ["n", "abs_G", "rel_err_tube"])?;
    for &n in &ns {
        let rho = [n as f64 * a1[0], n as f64 * a1[1]];
        let gt = tube_approximant(&hc0, &[0, 1], rho, 2.0, None, 4096)?;
        let (om, _) = omega_exact_multi(&hc0, &[0, 1], rho, 2.0, 0, 1e-7)?;
        let ga = gamma(&hc0, 1, rho, 2.0)?;
        let ge = C64::new(om, -0.5 * ga);
        wrec(
            &mut w,
            [
                n.to_string(),
                format!("{:.6e}", ge.norm()),
                format!("{:.6e}", (gt.g() - ge).norm() / ge.norm()),
            ],
        )?;
    }
    w.flush()?;

    let hc = build_honeycomb(1.0, 0.25, 1.0).map_err(|e| CliError::Validation(e.to_string()))?;
    let (c30, s30) = ((0.75f64).sqrt(), 0.5);
    let n_r = if scale == Scale::Desk { 7 } else { 13 };
    let rs: Vec<f64> = (0..n_r).map(|i| 10.0 * 5f64.powf(i as f64 / (n_r - 1) as f64)).collect();
    let caustic = out_dir.join("appD_caustic_decay.csv");
    let mut w = csv_writer(&caustic)?;
    wrec(&mut w, ["r", "abs_G"])?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for &r in &rs {
        let rho = [r * c30, r * s30];
        let b = omega_brute(&hc, &[0, 1], rho, -1.5, 0, &[0.01, 0.00999], 4096);
        let absg = (b.omega * b.omega + 0.25 * b.gamma * b.gamma).sqrt();
        wrec(&mut w, [format!("{r:.4}"), format!("{absg:.6e}")])?;
        xs.push(r.ln());
        ys.push(absg.ln());
    }
    w.flush()?;
    let (slope, intercept) = linfit(&xs, &ys);
    let meta = out_dir.join("appD_caustic_fit.json");
    std::fs::write(
        &meta,
        serde_json::json!({
            "direction": [c30, s30], "eta": 0.01,
            "exponent": slope, "log_amplitude": intercept,
        })
        .to_string(),
    )?;
    Ok(vec![decay, caustic, meta])
}
