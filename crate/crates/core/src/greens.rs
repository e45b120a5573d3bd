//! Lattice Green's function G(ρ, Δ) = Ω − iΓ/2 of a periodic bath.
//!
//! Γ comes from an arclength quadrature over the resonant set. Ω comes from
//! the principal-value BZ integral, regularized by an in-band bump split:
//! the near-resonant part is integrated by parts so only an integrable
//! log|Δ−ω| factor remains, the rest is a regular integrand. Two far-field
//! approximants — a tube integral over S with a smooth phase function, and
//! the stationary-phase sum — reproduce G at large ρ. Beyond a caustic the
//! propagating channel closes and Γ decays exponentially ("ghost waves");
//! `ghost_scan` measures that rate and its critical exponent.

use crate::lattice::{
    band_range, band_weight_gradient, bloch, critical_energies, derivatives, LatticeSpec,
};
use crate::levelset::{self, QuadPoint, ResonantSet};
use crate::{quad, Error, Result};
use num_complex::Complex;
use rayon::prelude::*;
use std::sync::OnceLock;

type C64 = Complex<f64>;
const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// How a Green's function value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Exact,
    Brute,
    Tube,
    Stationary,
}

/// One evaluation of G(ρ, Δ) = Ω − iΓ/2.
#[derive(Debug, Clone, Copy)]
pub struct GreensValue {
    pub rho: [f64; 2],
    pub delta: f64,
    pub omega: f64,
    pub gamma: f64,
    pub method: Method,
    /// Combined quadrature / extrapolation error estimate.
    pub error: f64,
}

impl GreensValue {
    /// G = Ω − iΓ/2.
    pub fn g(&self) -> C64 {
        C64::new(self.omega, -0.5 * self.gamma)
    }
}

// ---------------------------------------------------------------------------
// Phase function
// ---------------------------------------------------------------------------

fn gl_nodes() -> &'static (Vec<f64>, Vec<f64>) {
    static GL: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GL.get_or_init(|| quad::gauss_legendre(2000))
}

/// Smooth bump φ₁(u) = exp(u²/(u²−1)) on |u|<1, 0 outside.
fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (u * u / (u * u - 1.0)).exp()
    }
}

fn bump_deriv(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        let d = u * u - 1.0;
        (u * u / d).exp() * (-2.0 * u / (d * d))
    }
}

/// The odd phase function Θ_ρε(x): the regularized sign of the phase
/// mismatch, Θ_ρε(x) = F(ρεx) with F(y) = (1/π)∫ φ₁(u) sin(uy)/u du.
/// Π = (1+Θ)/2 interpolates between 0 and the Heaviside step as ρε → ∞.
pub struct PhaseFunctionTable {
    pub rho_eps: f64,
    /// sine-transform weights w_i φ₁(u_i)/(π u_i) over the GL nodes
    weights: Vec<f64>,
}

impl PhaseFunctionTable {
    pub fn new(rho: f64, eps: f64) -> Self {
        let (x, w) = gl_nodes();
        let weights = x
            .iter()
            .zip(w)
            .map(|(&u, &wi)| wi * bump(u) / (std::f64::consts::PI * u))
            .collect();
        PhaseFunctionTable { rho_eps: rho * eps, weights }
    }

    /// F(y); the 2000-node transform resolves |y| up to ~1400, beyond which
    /// F is sign(y) to below the bump transform's stretched-exponential tail.
    pub fn f_raw(&self, y: f64) -> f64 {
        if y.abs() >= 1400.0 {
            return y.signum();
        }
        let (x, _) = gl_nodes();
        let mut s = 0.0;
        for (&u, &w) in x.iter().zip(&self.weights) {
            s += w * (u * y).sin();
        }
        s
    }

    /// Θ_ρε(x).
    pub fn theta(&self, x: f64) -> f64 {
        self.f_raw(self.rho_eps * x)
    }

    /// Π_ρε(x) = (1 + Θ)/2.
    pub fn pi(&self, x: f64) -> f64 {
        0.5 * (1.0 + self.theta(x))
    }
}

// ---------------------------------------------------------------------------
// Γ: resonant-surface quadrature
// ---------------------------------------------------------------------------

/// Surface quadrature nodes with attached sublattice band weights.
pub struct SurfaceQuadrature {
    pub nodes: Vec<QuadPoint>,
    /// |U_{ν, subl}|² per node.
    pub band_weights: Vec<f64>,
    pub area: f64,
}

/// Build the quadrature for one band's resonant set.
pub fn surface_quadrature(
    spec: &LatticeSpec,
    set: &ResonantSet,
    subl: usize,
    n: usize,
) -> SurfaceQuadrature {
    let nodes = levelset::quadrature_nodes(spec, set, n);
    let single_band = spec.sublattice_offsets.len() == 1;
    let band_weights = nodes
        .iter()
        .map(|q| {
            if single_band {
                1.0
            } else {
                crate::lattice::band_weight(spec, set.band, q.k, subl)
            }
        })
        .collect();
    SurfaceQuadrature { nodes, band_weights, area: spec.unit_cell_area }
}

/// Γ(ρ) = 𝒜/(2π) ∮ ds w(k) e^{ik·ρ}/v over the prepared quadrature.
/// Returns (Γ, residual imaginary part).
pub fn gamma_from(sq: &SurfaceQuadrature, rho: [f64; 2]) -> (f64, f64) {
    let mut s = C64::new(0.0, 0.0);
    for (q, &bw) in sq.nodes.iter().zip(&sq.band_weights) {
        let phase = C64::new(0.0, q.k[0] * rho[0] + q.k[1] * rho[1]).exp();
        s += phase * (bw * q.w / q.speed);
    }
    let val = s * (sq.area / TWO_PI);
    (val.re, val.im.abs())
}

/// Decay rate Γ(ρ, Δ) of band `band`, emitter on sublattice 0.
pub fn gamma(spec: &LatticeSpec, band: usize, rho: [f64; 2], delta: f64) -> Result<f64> {
    let set = levelset::extract(spec, band, delta, 512)?;
    let sq = surface_quadrature(spec, &set, 0, 4096);
    Ok(gamma_from(&sq, rho).0)
}

// ---------------------------------------------------------------------------
// Ω: IBP-regularized principal value
// ---------------------------------------------------------------------------

/// Ω for a single band, emitter sublattice 0, default tolerance.
pub fn omega_exact(spec: &LatticeSpec, band: usize, rho: [f64; 2], delta: f64) -> Result<f64> {
    omega_exact_multi(spec, &[band], rho, delta, 0, 1e-9).map(|(v, _)| v)
}

/// Ω summed over `bands`: 𝒜 PV ∫ d²k/(2π)² Σ_ν w_ν(k) e^{ik·ρ}/(Δ−ω_ν).
///
/// In-band contributions are split with an energy bump φ of half-width
/// 0.9·dist(Δ, Van Hove energies): the bump part is integrated by parts,
/// leaving log|Δ−ω| times a regular factor; the remainder has no pole.
/// Inner fibers are pre-split where ω crosses Δ and Δ±w. Returns
/// (Ω, error estimate); refuses if the estimate exceeds both the panel
/// tolerance `tol` and 1e-7 relative.
pub fn omega_exact_multi(
    spec: &LatticeSpec,
    bands: &[usize],
    rho: [f64; 2],
    delta: f64,
    subl: usize,
    tol: f64,
) -> Result<(f64, f64)> {
    let [b1, b2] = spec.reciprocal_vectors();
    let to_k = |t1: f64, t2: f64| [t1 * b1[0] + t2 * b2[0], t1 * b1[1] + t2 * b2[1]];
    let single_band = spec.sublattice_offsets.len() == 1;
    let scale = spec.energy_scale();

    let mut total = C64::new(0.0, 0.0);
    let mut err_total = 0.0;
    for &band in bands {
        let (lo, hi) = band_range(spec, band, 96);
        let margin = 1e-6 * scale;
        let resonant = delta > lo + margin && delta < hi - margin;

        // band energy + sublattice weight at k(t)
        let sample = |k: [f64; 2]| -> (f64, f64) {
            if single_band {
                (crate::lattice::band_energy(spec, band, k), 1.0)
            } else {
                let s = bloch(spec, k);
                (s.bands[band], s.vectors[(subl, band)].norm_sqr())
            }
        };

        if !resonant {
            let f = |t1: f64, t2: f64| -> C64 {
                let k = to_k(t1, t2);
                let (om, w) = sample(k);
                C64::new(0.0, k[0] * rho[0] + k[1] * rho[1]).exp() * (w / (delta - om))
            };
            let outer = |t1: f64| -> C64 {
                quad::integrate_c(|t2| f(t1, t2), 0.0, 1.0, &[], tol * 0.1, tol * 0.1, 200).0
            };
            let (val, err) = quad::integrate_c(outer, 0.0, 1.0, &[], tol, tol, 400);
            total += val;
            err_total += err;
            continue;
        }

        // bump half-width from the distance to the nearest critical energy
        let crit = critical_energies(spec, band, 96);
        let dist = crit
            .iter()
            .map(|&e| (e - delta).abs())
            .fold(f64::INFINITY, f64::min)
            .min((delta - lo).abs())
            .min((hi - delta).abs());
        let w_bump = 0.9 * dist;
        if w_bump <= 0.0 {
            return Err(Error::NearVanHove { delta, dist });
        }

        let regular = |k: [f64; 2]| -> C64 {
            let (om, w) = sample(k);
            let x = delta - om;
            let pb = bump(x / w_bump);
            if pb == 1.0 {
                return C64::new(0.0, 0.0);
            }
            C64::new(0.0, k[0] * rho[0] + k[1] * rho[1]).exp() * (w * (1.0 - pb) / x)
        };
        let ibp = |k: [f64; 2]| -> C64 {
            let (om, _) = sample(k);
            let x = delta - om;
            let pb = bump(x / w_bump);
            if pb == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let d = match derivatives(spec, k, band) {
                Ok(d) => d,
                Err(_) => return C64::new(0.0, 0.0), // measure-zero degeneracy
            };
            let (w, gw) = if single_band {
                (1.0, [0.0, 0.0])
            } else {
                match band_weight_gradient(spec, band, k, subl) {
                    Ok(x) => x,
                    Err(_) => return C64::new(0.0, 0.0),
                }
            };
            let v2 = d.speed * d.speed;
            let tr_h = d.hess[0][0] + d.hess[1][1];
            let vhv = d.v[0] * (d.hess[0][0] * d.v[0] + d.hess[0][1] * d.v[1])
                + d.v[1] * (d.hess[1][0] * d.v[0] + d.hess[1][1] * d.v[1]);
            let divg = tr_h / v2 - 2.0 * vhv / (v2 * v2);
            let rv = rho[0] * d.v[0] + rho[1] * d.v[1];
            let vgw = d.v[0] * gw[0] + d.v[1] * gw[1];
            let val = C64::new(pb * (w * divg + vgw / v2) - bump_deriv(x / w_bump) / w_bump * w,
                               pb * rv * w / v2);
            // the log singularity is integrable; flooring |x| at 1e-16·w
            // keeps refinement nodes that land exactly on the resonance
            // finite while perturbing the integral by a negligible measure
            let log_x = x.abs().max(1e-16 * w_bump).ln();
            C64::new(0.0, k[0] * rho[0] + k[1] * rho[1]).exp() * log_x * val
        };

        // fiber split points: t2 where ω crosses Δ, Δ±w along the fiber
        let fiber_splits = |t1: f64| -> Vec<f64> {
            let mut pts = Vec::new();
            for target in [delta, delta - w_bump, delta + w_bump] {
                let f = |t2: f64| crate::lattice::band_energy(spec, band, to_k(t1, t2)) - target;
                pts.extend(quad::scan_roots(f, 0.0, 1.0, 96, 1e-12));
            }
            pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            pts
        };

        for pass in 0..2 {
            let outer = |t1: f64| -> C64 {
                let splits = fiber_splits(t1);
                let g = |t2: f64| {
                    let k = to_k(t1, t2);
                    if pass == 0 {
                        regular(k)
                    } else {
                        ibp(k)
                    }
                };
                quad::integrate_c(g, 0.0, 1.0, &splits, tol * 0.1, tol * 0.1, 300).0
            };
            let (val, err) = quad::integrate_c(outer, 0.0, 1.0, &[], tol, tol, 500);
            total += val;
            err_total += err;
        }
    }
    let omega = total.re;
    // relative target 1e-7 with an absolute floor for near-zero Ω,
    // never stricter than the caller's panel tolerance
    if err_total > (4.0 * tol).max(1e-7 * omega.abs().max(0.01 / scale)) {
        return Err(Error::QuadratureNotConverged { estimate: err_total });
    }
    Ok((omega, err_total))
}

// ---------------------------------------------------------------------------
// Brute-force oracle: η-regularized grid sum, Richardson-extrapolated
// ---------------------------------------------------------------------------

/// η → 0 extrapolated value of 𝒜 ∫ d²k/(2π)² Σ w e^{ik·ρ}/(Δ−ω+iη).
#[derive(Debug, Clone, Copy)]
pub struct BruteValue {
    pub omega: f64,
    pub gamma: f64,
    /// change of the extrapolant between the last two η pairs
    pub residual: f64,
}

/// Dense-grid evaluation with descending `eta_list`, polynomial
/// extrapolation in η → 0 (G is analytic in η above the band-edge scale).
/// A cross-validation oracle, not a production path. `grid_n` must resolve
/// the smallest η: the trapezoid error scales as exp(−grid_n·η/v), so keep
/// η ≳ 10·v·(2π/grid_n).
pub fn omega_brute(
    spec: &LatticeSpec,
    bands: &[usize],
    rho: [f64; 2],
    delta: f64,
    subl: usize,
    eta_list: &[f64],
    grid_n: usize,
) -> BruteValue {
    assert!(eta_list.len() >= 2, "need at least two η values");
    let [b1, b2] = spec.reciprocal_vectors();
    let single_band = spec.sublattice_offsets.len() == 1;
    let n = grid_n;
    let vals: Vec<C64> = eta_list
        .iter()
        .map(|&eta| {
            let row_sums: Vec<C64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let t1 = i as f64 / n as f64;
                    let mut acc = C64::new(0.0, 0.0);
                    for j in 0..n {
                        let t2 = j as f64 / n as f64;
                        let k = [t1 * b1[0] + t2 * b2[0], t1 * b1[1] + t2 * b2[1]];
                        let s = bloch(spec, k);
                        let phase = C64::new(0.0, k[0] * rho[0] + k[1] * rho[1]).exp();
                        for &band in bands {
                            let w = if single_band {
                                1.0
                            } else {
                                s.vectors[(subl, band)].norm_sqr()
                            };
                            acc += phase * w / C64::new(delta - s.bands[band], eta);
                        }
                    }
                    acc
                })
                .collect();
            row_sums.iter().sum::<C64>() / (n * n) as f64
        })
        .collect();
    // Neville polynomial extrapolation to η = 0
    let neville = |etas: &[f64], ys: &[C64]| -> C64 {
        let mut t = ys.to_vec();
        let n = t.len();
        for lvl in 1..n {
            for i in 0..n - lvl {
                let (xi, xj) = (etas[i], etas[i + lvl]);
                t[i] = (t[i + 1] * xi - t[i] * xj) / (xi - xj);
            }
        }
        t[0]
    };
    let best = neville(eta_list, &vals);
    let residual = if vals.len() >= 3 {
        (best - neville(&eta_list[1..], &vals[1..])).norm()
    } else {
        f64::NAN
    };
    BruteValue { omega: best.re, gamma: -2.0 * best.im, residual }
}

// ---------------------------------------------------------------------------
// Tube approximant
// ---------------------------------------------------------------------------

/// G ≈ −(i𝒜/2) (1/2π) ∮_S (1 + Θ_ρε(ρ̂·n̂)) e^{ik·ρ} w/v ds, the surface
/// integral over a curved tube of half-width ε around S. ε defaults to
/// half the minimal curvature radius; refuses above 0.9/max|K|.
pub fn tube_approximant(
    spec: &LatticeSpec,
    bands: &[usize],
    rho: [f64; 2],
    delta: f64,
    eps: Option<f64>,
    n_nodes: usize,
) -> Result<GreensValue> {
    let rho_norm = (rho[0] * rho[0] + rho[1] * rho[1]).sqrt();
    let rhat = [rho[0] / rho_norm, rho[1] / rho_norm];
    let mut g = C64::new(0.0, 0.0);
    let mut any = false;
    for &band in bands {
        let set = match levelset::extract(spec, band, delta, 512) {
            Ok(s) => s,
            Err(Error::EmptySet { .. }) => continue, // off-resonant band
            Err(e) => return Err(e),
        };
        let sq = surface_quadrature(spec, &set, 0, n_nodes);
        let k_max = sq.nodes.iter().map(|q| q.curvature.abs()).fold(0.0, f64::max);
        let eps_max = 0.9 / k_max;
        let eps = eps.unwrap_or(0.5 / k_max);
        if eps >= eps_max {
            return Err(Error::EpsilonTooLarge { eps, max: eps_max });
        }
        let table = PhaseFunctionTable::new(rho_norm, eps);
        for (q, &bw) in sq.nodes.iter().zip(&sq.band_weights) {
            let x = rhat[0] * q.nhat[0] + rhat[1] * q.nhat[1];
            let th = table.f_raw(table.rho_eps * x);
            let phase = C64::new(0.0, q.k[0] * rho[0] + q.k[1] * rho[1]).exp();
            g += phase * ((1.0 + th) * bw * q.w / q.speed);
        }
        any = true;
    }
    if !any {
        return Err(Error::EmptySet {
            delta,
            band: bands[0],
            lo: f64::NAN,
            hi: f64::NAN,
        });
    }
    let g = g * C64::new(0.0, -0.5 * spec.unit_cell_area / TWO_PI);
    Ok(GreensValue {
        rho,
        delta,
        omega: g.re,
        gamma: -2.0 * g.im,
        method: Method::Tube,
        error: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// Stationary phase
// ---------------------------------------------------------------------------

/// Leading far-field term: sum over k₀ ∈ S with v̂(k₀) ∥ ρ̂ and v·ρ > 0 of
/// −i𝒜 e^{i·Sgn(K)π/4} e^{ik₀·ρ} w/(v√|K|) · (2πρ)^{−1/2}.
pub fn stationary_phase(
    spec: &LatticeSpec,
    bands: &[usize],
    rho: [f64; 2],
    delta: f64,
) -> Result<GreensValue> {
    let rho_norm = (rho[0] * rho[0] + rho[1] * rho[1]).sqrt();
    let rhat = [rho[0] / rho_norm, rho[1] / rho_norm];
    let single_band = spec.sublattice_offsets.len() == 1;
    let mut g = C64::new(0.0, 0.0);
    let mut found = 0usize;
    let mut had_set = false;
    for &band in bands {
        let set = match levelset::extract(spec, band, delta, 512) {
            Ok(s) => s,
            Err(Error::EmptySet { .. }) => continue,
            Err(e) => return Err(e),
        };
        had_set = true;
        for cp in levelset::caustics(spec, &set) {
            let dot = (cp.vhat[0] * rhat[0] + cp.vhat[1] * rhat[1]).clamp(-1.0, 1.0);
            if dot.acos() < 1e-3 {
                return Err(Error::CausticDirection);
            }
        }
        for p in levelset::resonant_points(spec, &set, rhat) {
            let w = if single_band {
                1.0
            } else {
                crate::lattice::band_weight(spec, band, p.k, 0)
            };
            let sgn = p.curvature.signum();
            let phase = C64::new(0.0, p.k[0] * rho[0] + p.k[1] * rho[1]
                + sgn * std::f64::consts::FRAC_PI_4)
                .exp();
            g += phase * (w / (p.speed * p.curvature.abs().sqrt()));
            found += 1;
        }
    }
    if !had_set {
        return Err(Error::EmptySet { delta, band: bands[0], lo: f64::NAN, hi: f64::NAN });
    }
    if found == 0 {
        return Err(Error::NoResonantDirection);
    }
    let g = g * C64::new(0.0, -spec.unit_cell_area) / (TWO_PI * rho_norm).sqrt();
    Ok(GreensValue {
        rho,
        delta,
        omega: g.re,
        gamma: -2.0 * g.im,
        method: Method::Stationary,
        error: f64::NAN,
    })
}

// ---------------------------------------------------------------------------
// Ghost-wave decay scan
// ---------------------------------------------------------------------------

/// Decay fit at one angle.
#[derive(Debug, Clone, Copy)]
pub struct ThetaFit {
    pub theta: f64,
    pub kappa: f64,
    pub r2: f64,
    pub n_points: usize,
}

/// κ(θ) beyond the caustic and the critical exponent of κ ∝ |θ−θ_c|^p.
#[derive(Debug, Clone)]
pub struct GhostFit {
    pub per_theta: Vec<ThetaFit>,
    pub p: f64,
    pub amplitude: f64,
    pub r2: f64,
}

fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let ss_tot: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    (slope, intercept, 1.0 - ss_res / ss_tot)
}

/// 0.35-quantile of a slice (linear interpolation on the sorted values).
fn quantile35(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = 0.35 * (s.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < s.len() {
        s[i] * (1.0 - frac) + s[i + 1] * frac
    } else {
        s[i]
    }
}

/// Fit the exponential envelope of Γ beyond the caustic.
///
/// Per angle: collect lattice sites within ±0.002 rad of θ, radii chosen
/// from the expected rate (r ∈ [max(15, 1/κ_g), min(1000, 6/κ_g)] with
/// κ_g = 2|θ−θ_c|^{3/2}), evaluate Γ there, and fit
/// log(|Γ|√r) = c − κ r on the upper envelope (iterative least squares
/// keeping points above the 0.35-residual quantile, which suppresses the
/// oscillatory dips of the evanescent wave). Then fit log κ against
/// log|θ−θ_c| for the critical exponent p.
pub fn ghost_scan(
    spec: &LatticeSpec,
    band: usize,
    delta: f64,
    theta_c: f64,
    theta_list: &[f64],
) -> Result<GhostFit> {
    let set = levelset::extract(spec, band, delta, 512)?;
    let mut per_theta = Vec::new();
    for &theta in theta_list {
        let dth = (theta - theta_c).abs();
        let kappa_guess = 2.0 * dth.powf(1.5);
        let r_min = (1.0 / kappa_guess).max(15.0);
        // κr ≲ 18 keeps |Γ| ~ e^{-κr} well above the f64 quadrature floor
        // while leaving enough lattice sites in the angular window
        let r_max = (18.0 / kappa_guess).min(1000.0).max(8.0 * r_min.sqrt() + r_min);
        let n_nodes = ((64.0 * r_max) as usize).max(8192);
        let sq = surface_quadrature(spec, &set, 0, n_nodes);
        // lattice sites in the angular window
        let mut sites: Vec<[f64; 2]> = Vec::new();
        let mx_max = (r_max * theta.cos().abs().max(0.05)).ceil() as i64 + 1;
        for mx in 1..=mx_max {
            for my in 0..=(r_max.ceil() as i64) {
                let r = ((mx * mx + my * my) as f64).sqrt();
                if r < r_min || r > r_max {
                    continue;
                }
                let th = (my as f64).atan2(mx as f64);
                if (th - theta).abs() < 0.002 {
                    sites.push([mx as f64, my as f64]);
                }
            }
        }
        if sites.len() < 6 {
            return Err(Error::Invalid(format!(
                "only {} lattice sites in the angular window at θ={theta}",
                sites.len()
            )));
        }
        let data: Vec<(f64, f64)> = sites
            .par_iter()
            .filter_map(|&site| {
                let (gam, _) = gamma_from(&sq, site);
                let g = gam.abs();
                if g < 1e-13 {
                    return None;
                }
                let r = (site[0] * site[0] + site[1] * site[1]).sqrt();
                Some((r, (g * r.sqrt()).ln()))
            })
            .collect();
        let rs: Vec<f64> = data.iter().map(|d| d.0).collect();
        let ys: Vec<f64> = data.iter().map(|d| d.1).collect();
        // iterative upper-envelope fit
        let mut keep: Vec<bool> = vec![true; rs.len()];
        for _ in 0..4 {
            let kx: Vec<f64> = rs.iter().zip(&keep).filter(|(_, &k)| k).map(|(&r, _)| r).collect();
            let ky: Vec<f64> = ys.iter().zip(&keep).filter(|(_, &k)| k).map(|(&y, _)| y).collect();
            if kx.len() < 5 {
                break;
            }
            let (slope, intercept, _) = linear_fit(&kx, &ky);
            let resid: Vec<f64> = rs.iter().zip(&ys).map(|(&r, &y)| y - (intercept + slope * r)).collect();
            let kept_resid: Vec<f64> =
                resid.iter().zip(&keep).filter(|(_, &k)| k).map(|(&r, _)| r).collect();
            let thresh = quantile35(&kept_resid);
            for (ki, &ri) in keep.iter_mut().zip(&resid) {
                *ki = ri >= thresh;
            }
        }
        let kx: Vec<f64> = rs.iter().zip(&keep).filter(|(_, &k)| k).map(|(&r, _)| r).collect();
        let ky: Vec<f64> = ys.iter().zip(&keep).filter(|(_, &k)| k).map(|(&y, _)| y).collect();
        let (slope, _, r2) = linear_fit(&kx, &ky);
        let fit = ThetaFit { theta, kappa: -slope, r2, n_points: kx.len() };
        if fit.r2 < 0.98 {
            return Err(Error::FitUnreliable { r2: fit.r2 });
        }
        per_theta.push(fit);
    }
    // power-law fit κ = C|θ−θ_c|^p
    let lx: Vec<f64> = per_theta.iter().map(|t| (t.theta - theta_c).abs().ln()).collect();
    let ly: Vec<f64> = per_theta.iter().map(|t| t.kappa.ln()).collect();
    let (p, c, r2) = linear_fit(&lx, &ly);
    Ok(GhostFit { per_theta, p, amplitude: c.exp(), r2 })
}

// ---------------------------------------------------------------------------
// Emitter-emitter coupling
// ---------------------------------------------------------------------------

/// Effective exchange H_ij = g² G(ρ_ij, Δ). Warns (stderr) when g exceeds
/// 0.2× the bath energy scale, outside the weak-coupling regime.
pub fn spin_coupling(g: f64, j_scale: f64, greens: &GreensValue) -> C64 {
    if g.abs() > 0.2 * j_scale.abs() {
        eprintln!(
            "warning: coupling g = {g} exceeds 0.2 J = {}; perturbative elimination questionable",
            0.2 * j_scale
        );
    }
    greens.g() * (g * g)
}
