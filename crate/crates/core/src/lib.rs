//! Numerical toolkit for wave propagation in periodic tight-binding baths.
//!
//! The pipeline: build a lattice model ([`lattice`]), extract the resonant
//! level set of the dispersion at an emitter frequency ([`levelset`]),
//! evaluate the lattice Green's function exactly and through asymptotic
//! approximants ([`greens`]), integrate semiclassical magnetic orbits
//! ([`semiclassics`]) and run real-space single-excitation dynamics on
//! finite lattices with gauge fields and disorder ([`bath`]).

pub mod bath;
pub mod greens;
pub mod lattice;
pub mod levelset;
pub mod quad;
pub mod semiclassics;

use thiserror::Error;

/// Errors surfaced by the numerical modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid lattice parameter: {0}")]
    InvalidLattice(String),
    #[error("band {band} is degenerate at k=({kx:.6}, {ky:.6}) (gap {gap:.3e})")]
    DegenerateBand { band: usize, kx: f64, ky: f64, gap: f64 },
    #[error("group velocity {v:.3e} below Van Hove threshold at k=({kx:.6}, {ky:.6})")]
    VanHove { kx: f64, ky: f64, v: f64 },
    #[error("Δ = {delta} lies outside band {band} (range [{lo:.6}, {hi:.6}])")]
    EmptySet { delta: f64, band: usize, lo: f64, hi: f64 },
    #[error("Δ = {delta} is within {dist:.3e} of a Van Hove energy")]
    NearVanHove { delta: f64, dist: f64 },
    #[error("winding residual {residual:.3} too far from an integer")]
    NonIntegerResidual { residual: f64 },
    #[error("σ diverges: direction within tolerance of a caustic")]
    DivergesAtCaustic,
    #[error("direction is within angular tolerance of a caustic")]
    CausticDirection,
    #[error("no resonant direction: ρ̂ beyond the caustic (ghost regime)")]
    NoResonantDirection,
    #[error("tube radius ε = {eps:.4} exceeds 0.9/max|K| = {max:.4}")]
    EpsilonTooLarge { eps: f64, max: f64 },
    #[error("quadrature failed to converge: estimate {estimate:.3e}")]
    QuadratureNotConverged { estimate: f64 },
    #[error("decay fit unreliable: R² = {r2:.4}")]
    FitUnreliable { r2: f64 },
    #[error("orbit is closed (winding {winding}); open orbit required")]
    ClosedOrbit { winding: i64 },
    #[error("energy drift {drift:.3e} exceeded tolerance during orbit integration")]
    EnergyDriftExceeded { drift: f64 },
    #[error("norm drift {drift:.3e} exceeded tolerance during evolution")]
    NormDriftExceeded { drift: f64 },
    #[error("emitter site ({x}, {y}) out of lattice bounds {nx}×{ny}")]
    EmitterOutOfBounds { x: i64, y: i64, nx: usize, ny: usize },
    #[error("slice contains no sites")]
    EmptySlice,
    #[error("unsupported dark-state size {0} (2 or 3)")]
    UnsupportedDarkState(usize),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
