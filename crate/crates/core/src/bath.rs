//! Single-excitation time-domain simulator: finite lattice with Peierls
//! phases in the symmetric gauge, coupled emitters, obstructions, and
//! on-site disorder ensembles.
//!
//! The Hilbert space is one excitation shared between N_x·N_y bath sites
//! and the emitters; the Hamiltonian is sparse Hermitian and propagation
//! uses a Lanczos–Krylov exponential with adaptive step.

use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

type C64 = Complex<f64>;

/// One emitter: lattice site it couples to (centered integer coordinates,
/// units of a), bare frequency Δ, and coupling g.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmitterSpec {
    pub site: [i64; 2],
    pub detuning: f64,
    pub g: f64,
}

/// Full description of one simulation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub nx: usize,
    pub ny: usize,
    pub jx: f64,
    pub jy: f64,
    /// Flux per plaquette over 2π; Peierls phases from the symmetric gauge.
    pub alpha: f64,
    pub emitters: Vec<EmitterSpec>,
    /// Sites decoupled from the lattice entirely.
    pub obstruction: Vec<[i64; 2]>,
    /// On-site disorder X·J with X ~ Uniform[−χ, χ] i.i.d. per site.
    pub chi: f64,
    pub seed: u64,
}

impl SimulationConfig {
    pub fn n_sites(&self) -> usize {
        self.nx * self.ny
    }

    /// Total Hilbert-space dimension (bath + emitters).
    pub fn dim(&self) -> usize {
        self.n_sites() + self.emitters.len()
    }

    fn center(&self) -> [i64; 2] {
        [(self.nx as i64 - 1) / 2, (self.ny as i64 - 1) / 2]
    }

    /// Index of the site at centered coordinates (x, y).
    pub fn site_index(&self, site: [i64; 2]) -> Result<usize> {
        let c = self.center();
        let (ix, iy) = (site[0] + c[0], site[1] + c[1]);
        if ix < 0 || iy < 0 || ix >= self.nx as i64 || iy >= self.ny as i64 {
            return Err(Error::EmitterOutOfBounds {
                x: site[0],
                y: site[1],
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok(iy as usize * self.nx + ix as usize)
    }

    /// Centered coordinates of a site index.
    pub fn site_coords(&self, idx: usize) -> [i64; 2] {
        let c = self.center();
        [(idx % self.nx) as i64 - c[0], (idx / self.nx) as i64 - c[1]]
    }

    /// Position in units of a, measured from the exact lattice center
    /// (the gauge origin).
    fn position(&self, idx: usize) -> [f64; 2] {
        [
            (idx % self.nx) as f64 - (self.nx as f64 - 1.0) / 2.0,
            (idx / self.nx) as f64 - (self.ny as f64 - 1.0) / 2.0,
        ]
    }
}

/// Sparse Hermitian single-excitation Hamiltonian (CSR).
#[derive(Debug, Clone)]
pub struct SparseH {
    pub dim: usize,
    pub n_sites: usize,
    row_ptr: Vec<usize>,
    col: Vec<u32>,
    val: Vec<C64>,
}

impl SparseH {
    fn from_entries(dim: usize, n_sites: usize, mut entries: Vec<(u32, u32, C64)>) -> Self {
        entries.sort_by_key(|e| (e.0, e.1));
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col = Vec::with_capacity(entries.len());
        let mut val = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            row_ptr[r as usize + 1] += 1;
            col.push(c);
            val.push(v);
        }
        for i in 0..dim {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseH {
            dim,
            n_sites,
            row_ptr,
            col,
            val,
        }
    }

    pub fn matvec(&self, x: &[C64], y: &mut [C64]) {
        for i in 0..self.dim {
            let mut acc = C64::new(0.0, 0.0);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.val[p] * x[self.col[p] as usize];
            }
            y[i] = acc;
        }
    }

    /// Dense copy for small-system diagnostics.
    pub fn to_dense(&self) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col[p] as usize)] += self.val[p];
            }
        }
        m
    }

    /// max |H − H†| entry.
    pub fn hermiticity_defect(&self) -> f64 {
        let m = self.to_dense();
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..self.dim {
                worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
            }
        }
        worst
    }

    /// Site-local gauge transform H → U H U† with U = diag(e^{iθ}).
    pub fn gauge_transform(&self, theta: &[f64]) -> SparseH {
        let mut out = self.clone();
        for i in 0..self.dim {
            for p in out.row_ptr[i]..out.row_ptr[i + 1] {
                let j = out.col[p] as usize;
                out.val[p] *= C64::from_polar(1.0, theta[i] - theta[j]);
            }
        }
        out
    }
}

/// Peierls phase for a straight bond from r_i to r_j in the symmetric
/// gauge A(r) = Φ (ẑ × r)/(2a²), evaluated by the midpoint rule (exact
/// for linear A): φ = πα (x_m·dy − y_m·dx).
fn bond_phase(alpha: f64, ri: [f64; 2], rj: [f64; 2]) -> f64 {
    let (xm, ym) = (0.5 * (ri[0] + rj[0]), 0.5 * (ri[1] + rj[1]));
    let (dx, dy) = (rj[0] - ri[0], rj[1] - ri[1]);
    std::f64::consts::PI * alpha * (xm * dy - ym * dx)
}

/// Assemble the sparse single-excitation Hamiltonian.
///
/// Bath hoppings J_{x,y} e^{iφ_ij} (so the clean α = 0 dispersion is
/// ω = 2(J_x cos k_x + J_y cos k_y)); emitters carry diagonal Δ and
/// couple with g to their site; obstruction sites lose every incident
/// coupling; disorder adds X·J_x to site diagonals.
pub fn build_hamiltonian(config: &SimulationConfig) -> Result<SparseH> {
    let n = config.n_sites();
    let dim = config.dim();
    let mut blocked = vec![false; n];
    for &s in &config.obstruction {
        blocked[config.site_index(s).map_err(|_| {
            Error::Invalid(format!("obstruction site {s:?} outside the lattice"))
        })?] = true;
    }
    let mut entries: Vec<(u32, u32, C64)> = Vec::with_capacity(4 * n + 2 * config.emitters.len());
    let push_bond = |i: usize, j: usize, amp: f64, e: &mut Vec<(u32, u32, C64)>| {
        if blocked[i] || blocked[j] {
            return;
        }
        let phi = bond_phase(config.alpha, config.position(i), config.position(j));
        let v = C64::from_polar(amp, phi);
        e.push((j as u32, i as u32, v));
        e.push((i as u32, j as u32, v.conj()));
    };
    for iy in 0..config.ny {
        for ix in 0..config.nx {
            let i = iy * config.nx + ix;
            if ix + 1 < config.nx {
                push_bond(i, i + 1, config.jx, &mut entries);
            }
            if iy + 1 < config.ny {
                push_bond(i, i + config.nx, config.jy, &mut entries);
            }
        }
    }
    if config.chi > 0.0 {
        let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
        let u = Uniform::new_inclusive(-config.chi, config.chi);
        for i in 0..n {
            let x = u.sample(&mut rng);
            if x != 0.0 {
                entries.push((i as u32, i as u32, C64::new(x * config.jx, 0.0)));
            }
        }
    }
    for (e, em) in config.emitters.iter().enumerate() {
        let site = config.site_index(em.site)?;
        let idx = n + e;
        entries.push((idx as u32, idx as u32, C64::new(em.detuning, 0.0)));
        if !blocked[site] {
            let g = C64::new(em.g, 0.0);
            entries.push((idx as u32, site as u32, g));
            entries.push((site as u32, idx as u32, g));
        }
    }
    Ok(SparseH::from_entries(dim, n, entries))
}

/// Flux through every plaquette of the assembled gauge, as the phase sum
/// around the counterclockwise loop. Obstructed plaquettes are skipped.
pub fn plaquette_fluxes(config: &SimulationConfig) -> Vec<f64> {
    let mut out = Vec::new();
    let mut blocked = vec![false; config.n_sites()];
    for &s in &config.obstruction {
        if let Ok(i) = config.site_index(s) {
            blocked[i] = true;
        }
    }
    for iy in 0..config.ny - 1 {
        for ix in 0..config.nx - 1 {
            let i00 = iy * config.nx + ix;
            let (i10, i01, i11) = (i00 + 1, i00 + config.nx, i00 + config.nx + 1);
            if blocked[i00] || blocked[i10] || blocked[i01] || blocked[i11] {
                continue;
            }
            let p = |a: usize, b: usize| {
                bond_phase(config.alpha, config.position(a), config.position(b))
            };
            out.push(p(i00, i10) + p(i10, i11) + p(i11, i01) + p(i01, i00));
        }
    }
    out
}

/// One excitation shared between emitters and bath.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExcitationState {
    pub emitters: Vec<C64>,
    pub bath: Vec<C64>,
    pub t: f64,
}

impl ExcitationState {
    pub fn zero(config: &SimulationConfig) -> Self {
        ExcitationState {
            emitters: vec![C64::new(0.0, 0.0); config.emitters.len()],
            bath: vec![C64::new(0.0, 0.0); config.n_sites()],
            t: 0.0,
        }
    }

    /// Emitter `e` excited, bath empty.
    pub fn single_emitter(config: &SimulationConfig, e: usize) -> Result<Self> {
        if e >= config.emitters.len() {
            return Err(Error::Invalid(format!(
                "emitter index {e} out of range ({} defined)",
                config.emitters.len()
            )));
        }
        let mut s = Self::zero(config);
        s.emitters[e] = C64::new(1.0, 0.0);
        Ok(s)
    }

    pub fn norm_sq(&self) -> f64 {
        self.emitters.iter().map(|c| c.norm_sqr()).sum::<f64>()
            + self.bath.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn bath_population(&self) -> Vec<f64> {
        self.bath.iter().map(|c| c.norm_sqr()).collect()
    }

    fn flatten(&self) -> Vec<C64> {
        let mut v = self.bath.clone();
        v.extend_from_slice(&self.emitters);
        v
    }

    fn from_flat(config: &SimulationConfig, v: &[C64], t: f64) -> Self {
        let n = config.n_sites();
        ExcitationState {
            emitters: v[n..].to_vec(),
            bath: v[..n].to_vec(),
            t,
        }
    }
}

/// The quoted 2- or 3-emitter subradiant superposition with bath empty:
/// (1, −1)/√2 or (1, −2, 1)/√6.
pub fn dark_state(config: &SimulationConfig) -> Result<ExcitationState> {
    let n = config.emitters.len();
    let amps: Vec<f64> = match n {
        2 => vec![1.0 / 2f64.sqrt(), -1.0 / 2f64.sqrt()],
        3 => vec![
            1.0 / 6f64.sqrt(),
            -2.0 / 6f64.sqrt(),
            1.0 / 6f64.sqrt(),
        ],
        _ => return Err(Error::UnsupportedDarkState(n)),
    };
    let mut s = ExcitationState::zero(config);
    for (i, a) in amps.iter().enumerate() {
        s.emitters[i] = C64::new(*a, 0.0);
    }
    Ok(s)
}

const KRYLOV_TOL: f64 = 1e-10;
const KRYLOV_M: usize = 30;

/// One Krylov step: v ← exp(−i dt H) v. Returns the a-posteriori error
/// estimate; `scratch` holds the Lanczos basis.
fn krylov_step(h: &SparseH, v: &mut [C64], dt: f64, basis: &mut Vec<Vec<C64>>) -> f64 {
    let dim = h.dim;
    let m = KRYLOV_M.min(dim);
    basis.clear();
    let nrm = (v.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
    let q0: Vec<C64> = v.iter().map(|c| c / nrm).collect();
    basis.push(q0);
    let mut alpha = Vec::with_capacity(m);
    let mut beta = Vec::with_capacity(m);
    let mut w = vec![C64::new(0.0, 0.0); dim];
    let dot = |a: &[C64], b: &[C64]| -> C64 {
        a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
    };
    let mut happy = false;
    for j in 0..m {
        h.matvec(&basis[j], &mut w);
        alpha.push(dot(&basis[j], &w).re);
        // full reorthogonalization (two passes) for norm accuracy
        for _ in 0..2 {
            for q in basis.iter() {
                let proj = dot(q, &w);
                for (wi, qi) in w.iter_mut().zip(q.iter()) {
                    *wi -= proj * qi;
                }
            }
        }
        let b = (w.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
        if b < 1e-14 {
            happy = true;
            break;
        }
        beta.push(b);
        if j + 1 < m {
            basis.push(w.iter().map(|c| c / b).collect());
        }
    }
    // tridiagonal exponential via dense symmetric eigendecomposition
    let mm = alpha.len();
    let mut t = DMatrix::<f64>::zeros(mm, mm);
    for i in 0..mm {
        t[(i, i)] = alpha[i];
        if i + 1 < mm {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let eig = t.symmetric_eigen();
    let mut y = vec![C64::new(0.0, 0.0); mm];
    for k in 0..mm {
        let phase = C64::from_polar(1.0, -eig.eigenvalues[k] * dt);
        let vk1 = eig.eigenvectors[(0, k)];
        for i in 0..mm {
            y[i] += eig.eigenvectors[(i, k)] * vk1 * phase;
        }
    }
    for vi in v.iter_mut() {
        *vi = C64::new(0.0, 0.0);
    }
    for (i, yi) in y.iter().enumerate() {
        for (vi, qi) in v.iter_mut().zip(basis[i].iter()) {
            *vi += nrm * yi * qi;
        }
    }
    // residual of the Krylov approximation: last-component leakage
    if happy {
        0.0
    } else {
        beta.last().copied().unwrap_or(0.0) * y[mm - 1].norm() * dt.abs()
    }
}

/// Observables of one evolution: emitter populations and full bath
/// snapshots at each requested time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evolution {
    pub times: Vec<f64>,
    /// emitter_pops[i][e]: population of emitter e at times[i].
    pub emitter_pops: Vec<Vec<f64>>,
    /// snapshots[i]: |ψ_r|² per site at times[i].
    pub snapshots: Vec<Vec<f64>>,
    pub final_state: ExcitationState,
    pub max_norm_drift: f64,
}

/// Propagate `initial` through the times in `t_grid` (ascending, from
/// initial.t). Aborts with NormDriftExceeded if unitarity degrades past
/// 1e-6.
pub fn evolve(
    config: &SimulationConfig,
    initial: &ExcitationState,
    t_grid: &[f64],
) -> Result<Evolution> {
    let h = build_hamiltonian(config)?;
    evolve_with(config, &h, initial, t_grid)
}

/// Same, with a prebuilt Hamiltonian (reused across ensemble members).
pub fn evolve_with(
    config: &SimulationConfig,
    h: &SparseH,
    initial: &ExcitationState,
    t_grid: &[f64],
) -> Result<Evolution> {
    let mut v = initial.flatten();
    if v.len() != h.dim {
        return Err(Error::Invalid(format!(
            "state dimension {} does not match Hamiltonian dimension {}",
            v.len(),
            h.dim
        )));
    }
    let norm0 = v.iter().map(|c| c.norm_sqr()).sum::<f64>();
    if (norm0 - 1.0).abs() > 1e-9 {
        return Err(Error::Invalid(format!("initial norm² = {norm0}")));
    }
    let n = h.n_sites;
    let mut t = initial.t;
    let mut basis: Vec<Vec<C64>> = Vec::new();
    let mut times = Vec::new();
    let mut emitter_pops = Vec::new();
    let mut snapshots = Vec::new();
    let mut max_drift = 0.0f64;
    let mut dt: f64 = 0.5;
    for &target in t_grid {
        if target < t - 1e-12 {
            return Err(Error::Invalid("t_grid must be ascending".into()));
        }
        while t < target - 1e-12 {
            let step = dt.min(target - t);
            let mut trial = v.clone();
            let err = krylov_step(h, &mut trial, step, &mut basis);
            if err > KRYLOV_TOL && step > 1e-6 {
                dt = (step * 0.5).max(1e-6);
                continue;
            }
            v = trial;
            t += step;
            if err < KRYLOV_TOL / 100.0 {
                dt = (dt * 1.4).min(4.0);
            }
            let drift = (v.iter().map(|c| c.norm_sqr()).sum::<f64>() - norm0).abs();
            max_drift = max_drift.max(drift);
            if drift > 1e-6 {
                return Err(Error::NormDriftExceeded { drift });
            }
        }
        times.push(t);
        emitter_pops.push(v[n..].iter().map(|c| c.norm_sqr()).collect());
        snapshots.push(v[..n].iter().map(|c| c.norm_sqr()).collect());
    }
    Ok(Evolution {
        times,
        emitter_pops,
        snapshots,
        final_state: ExcitationState::from_flat(config, &v, t),
        max_norm_drift: max_drift,
    })
}

/// Per-site mean and standard deviation of log₁₀ population over disorder
/// realizations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    /// mean_log[i][site] at times[i].
    pub mean_log: Vec<Vec<f64>>,
    pub std_log: Vec<Vec<f64>>,
    /// Mean emitter populations, per time per emitter.
    pub mean_emitter: Vec<Vec<f64>>,
}

const LOG_FLOOR: f64 = 1e-30;

/// Run `n_real` disorder realizations with independent RNG streams and
/// aggregate log₁₀ site populations at the snapshot times.
pub fn disorder_ensemble(
    config: &SimulationConfig,
    initial: &ExcitationState,
    n_real: usize,
    t_snapshots: &[f64],
) -> Result<EnsembleStats> {
    let runs: Vec<Evolution> = (0..n_real)
        .into_par_iter()
        .map(|r| {
            let mut cfg = config.clone();
            cfg.seed = config
                .seed
                .wrapping_add((r as u64).wrapping_mul(0x9E3779B97F4A7C15));
            evolve(&cfg, initial, t_snapshots)
        })
        .collect::<Result<Vec<_>>>()?;
    let n_t = t_snapshots.len();
    let n_sites = config.n_sites();
    let mut mean_log = vec![vec![0.0f64; n_sites]; n_t];
    let mut std_log = vec![vec![0.0f64; n_sites]; n_t];
    let mut mean_emitter = vec![vec![0.0f64; config.emitters.len()]; n_t];
    for run in &runs {
        for i in 0..n_t {
            for (s, &p) in run.snapshots[i].iter().enumerate() {
                let lp = p.max(LOG_FLOOR).log10();
                mean_log[i][s] += lp;
                std_log[i][s] += lp * lp;
            }
            for (e, &p) in run.emitter_pops[i].iter().enumerate() {
                mean_emitter[i][e] += p;
            }
        }
    }
    let nf = n_real as f64;
    for i in 0..n_t {
        for s in 0..n_sites {
            mean_log[i][s] /= nf;
            std_log[i][s] = (std_log[i][s] / nf - mean_log[i][s].powi(2)).max(0.0).sqrt();
        }
        for e in 0..config.emitters.len() {
            mean_emitter[i][e] /= nf;
        }
    }
    Ok(EnsembleStats {
        times: t_snapshots.to_vec(),
        mean_log,
        std_log,
        mean_emitter,
    })
}

/// Transverse refocusing quality of one bath snapshot along the row
/// y = slice_y.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RefocusMetric {
    pub peak_site: [i64; 2],
    /// Peak-site population over the slice total.
    pub peak_fraction: f64,
    /// Number of contiguous sites around the peak at ≥ half the peak.
    pub fwhm_sites: usize,
}

pub fn refocusing_metric(
    config: &SimulationConfig,
    snapshot: &[f64],
    slice_y: i64,
) -> Result<RefocusMetric> {
    let c = config.center();
    let iy = slice_y + c[1];
    if iy < 0 || iy >= config.ny as i64 || snapshot.len() != config.n_sites() {
        return Err(Error::EmptySlice);
    }
    let row = &snapshot[iy as usize * config.nx..(iy as usize + 1) * config.nx];
    let total: f64 = row.iter().sum();
    if total <= 0.0 {
        return Err(Error::EmptySlice);
    }
    let (imax, &peak) = row
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap();
    let mut fwhm = 1usize;
    let mut i = imax;
    while i > 0 && row[i - 1] >= 0.5 * peak {
        i -= 1;
        fwhm += 1;
    }
    let mut i = imax;
    while i + 1 < row.len() && row[i + 1] >= 0.5 * peak {
        i += 1;
        fwhm += 1;
    }
    Ok(RefocusMetric {
        peak_site: [imax as i64 - c[0], slice_y],
        peak_fraction: peak / total,
        fwhm_sites: fwhm,
    })
}

/// Write a snapshot as an N_y × N_x CSV matrix (rows are y, increasing).
pub fn snapshot_to_csv<W: std::io::Write>(
    config: &SimulationConfig,
    snapshot: &[f64],
    mut out: W,
) -> std::io::Result<()> {
    for iy in 0..config.ny {
        let row = &snapshot[iy * config.nx..(iy + 1) * config.nx];
        let line: Vec<String> = row.iter().map(|p| format!("{p:.9e}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_config(nx: usize, ny: usize) -> SimulationConfig {
        SimulationConfig {
            nx,
            ny,
            jx: 1.0,
            jy: 1.0,
            alpha: 0.0,
            emitters: vec![],
            obstruction: vec![],
            chi: 0.0,
            seed: 7,
        }
    }

    #[test]
    fn spectrum_within_tight_binding_bound() {
        let cfg = base_config(8, 8);
        let h = build_hamiltonian(&cfg).unwrap();
        assert_eq!(h.hermiticity_defect(), 0.0);
        let eig = h.to_dense().map(|z| z.re).symmetric_eigen();
        for &e in eig.eigenvalues.iter() {
            assert!(e.abs() <= 2.0 * (cfg.jx + cfg.jy) + 1e-12, "eigenvalue {e}");
        }
    }

    #[test]
    fn hermitian_with_field_disorder_and_emitters() {
        let mut cfg = base_config(6, 6);
        cfg.alpha = 0.13;
        cfg.chi = 0.4;
        cfg.emitters = vec![EmitterSpec {
            site: [0, 0],
            detuning: -1.0,
            g: 0.1,
        }];
        cfg.obstruction = vec![[2, 1]];
        let h = build_hamiltonian(&cfg).unwrap();
        assert_eq!(h.hermiticity_defect(), 0.0);
    }

    #[test]
    fn plaquette_flux_is_two_pi_alpha() {
        let mut cfg = base_config(10, 10);
        cfg.alpha = 0.25;
        let fluxes = plaquette_fluxes(&cfg);
        assert_eq!(fluxes.len(), 81);
        for f in fluxes {
            assert!(
                (f - std::f64::consts::FRAC_PI_2).abs() < 1e-12,
                "plaquette flux {f}"
            );
        }
    }

    #[test]
    fn emitter_out_of_bounds_rejected() {
        let mut cfg = base_config(6, 6);
        cfg.emitters = vec![EmitterSpec {
            site: [40, 0],
            detuning: -1.0,
            g: 0.1,
        }];
        assert!(matches!(
            build_hamiltonian(&cfg),
            Err(Error::EmitterOutOfBounds { x: 40, .. })
        ));
    }

    #[test]
    fn decoupled_emitter_is_stationary() {
        let mut cfg = base_config(10, 10);
        cfg.emitters = vec![EmitterSpec {
            site: [0, 0],
            detuning: -1.0,
            g: 0.0,
        }];
        let s0 = ExcitationState::single_emitter(&cfg, 0).unwrap();
        let ev = evolve(&cfg, &s0, &[2.0, 5.0]).unwrap();
        for pops in &ev.emitter_pops {
            assert!((pops[0] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn norm_conserved_under_evolution() {
        let mut cfg = base_config(16, 16);
        cfg.alpha = 0.05;
        cfg.emitters = vec![EmitterSpec {
            site: [0, 0],
            detuning: -1.0,
            g: 0.3,
        }];
        let s0 = ExcitationState::single_emitter(&cfg, 0).unwrap();
        let ev = evolve(&cfg, &s0, &[1.0, 4.0, 8.0]).unwrap();
        assert!(ev.max_norm_drift < 1e-9, "drift {}", ev.max_norm_drift);
        let total: f64 = ev.emitter_pops[2][0] + ev.snapshots[2].iter().sum::<f64>();
        assert!((total - 1.0).abs() < 1e-9);
    }

    #[test]
    fn gauge_transform_leaves_populations_unchanged() {
        let mut cfg = base_config(12, 12);
        cfg.alpha = 0.08;
        cfg.emitters = vec![EmitterSpec {
            site: [1, -2],
            detuning: -1.0,
            g: 0.2,
        }];
        let h = build_hamiltonian(&cfg).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        let u = Uniform::new(0.0, std::f64::consts::TAU);
        let theta: Vec<f64> = (0..h.dim).map(|_| u.sample(&mut rng)).collect();
        let h2 = h.gauge_transform(&theta);
        let s0 = ExcitationState::single_emitter(&cfg, 0).unwrap();
        let e1 = evolve_with(&cfg, &h, &s0, &[3.0]).unwrap();
        // transform the initial state consistently: emitter component picks
        // up e^{iθ} on its own index
        let mut s2 = s0.clone();
        s2.emitters[0] *= C64::from_polar(1.0, theta[h.dim - 1]);
        let e2 = evolve_with(&cfg, &h2, &s2, &[3.0]).unwrap();
        for (a, b) in e1.snapshots[0].iter().zip(e2.snapshots[0].iter()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((e1.emitter_pops[0][0] - e2.emitter_pops[0][0]).abs() < 1e-12);
    }

    #[test]
    fn dark_states_match_quoted_amplitudes() {
        let mut cfg = base_config(6, 6);
        cfg.emitters = vec![
            EmitterSpec {
                site: [0, -1],
                detuning: -1.0,
                g: 0.1,
            },
            EmitterSpec {
                site: [0, 1],
                detuning: -1.0,
                g: 0.1,
            },
        ];
        let s = dark_state(&cfg).unwrap();
        assert!((s.emitters[0].re - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((s.emitters[1].re + 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((s.norm_sq() - 1.0).abs() < 1e-14);

        cfg.emitters.push(EmitterSpec {
            site: [0, 2],
            detuning: -1.0,
            g: 0.1,
        });
        let s3 = dark_state(&cfg).unwrap();
        let want = [1.0, -2.0, 1.0].map(|a| a / 6f64.sqrt());
        for (c, w) in s3.emitters.iter().zip(want) {
            assert!((c.re - w).abs() < 1e-15);
        }
        assert!((s3.norm_sq() - 1.0).abs() < 1e-14);

        cfg.emitters.truncate(1);
        assert!(matches!(dark_state(&cfg), Err(Error::UnsupportedDarkState(1))));
    }

    #[test]
    fn zero_disorder_ensemble_equals_clean_run() {
        let mut cfg = base_config(10, 10);
        cfg.emitters = vec![EmitterSpec {
            site: [0, 0],
            detuning: -1.0,
            g: 0.3,
        }];
        let s0 = ExcitationState::single_emitter(&cfg, 0).unwrap();
        let stats = disorder_ensemble(&cfg, &s0, 4, &[3.0]).unwrap();
        let clean = evolve(&cfg, &s0, &[3.0]).unwrap();
        for (s, (&m, &sd)) in stats.mean_log[0]
            .iter()
            .zip(stats.std_log[0].iter())
            .enumerate()
        {
            assert!(sd < 1e-12, "site {s} std {sd}");
            let want = clean.snapshots[0][s].max(LOG_FLOOR).log10();
            assert!((m - want).abs() < 1e-10);
        }
    }

    #[test]
    fn disordered_realizations_differ() {
        let mut cfg = base_config(10, 10);
        cfg.chi = 0.5;
        cfg.emitters = vec![EmitterSpec {
            site: [0, 0],
            detuning: -1.0,
            g: 0.3,
        }];
        let s0 = ExcitationState::single_emitter(&cfg, 0).unwrap();
        let stats = disorder_ensemble(&cfg, &s0, 6, &[4.0]).unwrap();
        let max_std = stats.std_log[0].iter().cloned().fold(0.0, f64::max);
        assert!(max_std > 1e-4, "disorder produced no spread: {max_std}");
    }

    #[test]
    fn refocusing_metric_on_uniform_slice() {
        let cfg = base_config(9, 9);
        let snap = vec![1.0; cfg.n_sites()];
        let m = refocusing_metric(&cfg, &snap, 2).unwrap();
        assert!((m.peak_fraction - 1.0 / 9.0).abs() < 1e-15);
        assert_eq!(m.fwhm_sites, 9);
        assert!(matches!(
            refocusing_metric(&cfg, &snap, 40),
            Err(Error::EmptySlice)
        ));
        let zeros = vec![0.0; cfg.n_sites()];
        assert!(matches!(
            refocusing_metric(&cfg, &zeros, 0),
            Err(Error::EmptySlice)
        ));
    }

    #[test]
    fn obstruction_decouples_sites() {
        let mut cfg = base_config(6, 6);
        cfg.obstruction = vec![[0, 0]];
        let h = build_hamiltonian(&cfg).unwrap();
        let site = cfg.site_index([0, 0]).unwrap();
        let dense = h.to_dense();
        for j in 0..h.dim {
            if j != site {
                assert_eq!(dense[(site, j)], C64::new(0.0, 0.0));
                assert_eq!(dense[(j, site)], C64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn markovian_decay_matches_golden_rule() {
        use crate::greens::{gamma_from, surface_quadrature};
        use crate::lattice::build_square;
        use crate::levelset::extract;
        let delta = -1.0;
        let g = 0.1;
        let mut cfg = base_config(121, 121);
        cfg.emitters = vec![EmitterSpec {
            site: [0, 0],
            detuning: delta,
            g,
        }];
        let s0 = ExcitationState::single_emitter(&cfg, 0).unwrap();
        let ts: Vec<f64> = (0..=12).map(|i| 5.0 + 25.0 * i as f64 / 12.0).collect();
        let ev = evolve(&cfg, &s0, &ts).unwrap();
        // least-squares slope of log population vs t
        let n = ts.len() as f64;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for (t, p) in ts.iter().zip(&ev.emitter_pops) {
            let y = p[0].ln();
            sx += t;
            sy += y;
            sxx += t * t;
            sxy += t * y;
        }
        let rate = -(n * sxy - sx * sy) / (n * sxx - sx * sx);
        let sq = build_square(1.0, 1.0, 1.0).unwrap();
        let set = extract(&sq, 0, delta, 512).unwrap();
        let sqd = surface_quadrature(&sq, &set, 0, 2048);
        let (gamma0, _) = gamma_from(&sqd, [0.0, 0.0]);
        let want = g * g * gamma0;
        assert!(
            (rate / want - 1.0).abs() < 0.15,
            "fitted rate {rate} vs g²Γ(0) = {want}"
        );
    }
}
