//! Periodic tight-binding lattice models and their Bloch data.
//!
//! A [`LatticeSpec`] is a list of Hermitian-closed couplings between
//! sublattices; everything downstream (dispersion, group velocity, band
//! Hessians) is derived from the Bloch matrix h(k) = Σ J e^{ik·d}.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type C64 = Complex<f64>;

/// One hopping term. `cell` is the displacement of the target unit cell in
/// integer lattice coordinates; the real-space displacement is
/// `cell·a + offset[to] − offset[from]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Coupling {
    pub from: usize,
    pub to: usize,
    pub cell: [i32; 2],
    pub amp: C64,
}

/// Periodic tight-binding model in d = 2.
///
/// The coupling list is stored fully Hermitian-closed: for every entry
/// (i→j, c, J) the reverse entry (j→i, −c, J*) is also present, and h(k)
/// is assembled by summing each entry into its own matrix element only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LatticeSpec {
    pub dimension: usize,
    pub lattice_vectors: [[f64; 2]; 2],
    pub sublattice_offsets: Vec<[f64; 2]>,
    pub couplings: Vec<Coupling>,
    pub unit_cell_area: f64,
}

/// Bloch matrix, bands and eigenvectors at one wavevector.
#[derive(Debug, Clone)]
pub struct BlochSample {
    pub k: [f64; 2],
    pub h: DMatrix<C64>,
    /// Band energies, ascending.
    pub bands: Vec<f64>,
    /// Unitary eigenvector columns, same order as `bands`.
    pub vectors: DMatrix<C64>,
}

/// Group velocity and Hessian of one band.
#[derive(Debug, Clone, Copy)]
pub struct DispersionDerivatives {
    pub v: [f64; 2],
    pub speed: f64,
    /// ∂²ω/∂k_i∂k_j
    pub hess: [[f64; 2]; 2],
}

impl LatticeSpec {
    pub fn n_sublattices(&self) -> usize {
        self.sublattice_offsets.len()
    }

    pub fn n_bands(&self) -> usize {
        self.n_sublattices()
    }

    /// Reciprocal basis vectors b_i with a_i·b_j = 2π δ_ij.
    pub fn reciprocal_vectors(&self) -> [[f64; 2]; 2] {
        let [a1, a2] = self.lattice_vectors;
        let det = a1[0] * a2[1] - a1[1] * a2[0];
        let f = 2.0 * std::f64::consts::PI / det;
        [[f * a2[1], -f * a2[0]], [-f * a1[1], f * a1[0]]]
    }

    /// Real-space displacement carried by a coupling.
    fn displacement(&self, c: &Coupling) -> [f64; 2] {
        let [a1, a2] = self.lattice_vectors;
        let of = self.sublattice_offsets[c.from];
        let ot = self.sublattice_offsets[c.to];
        [
            c.cell[0] as f64 * a1[0] + c.cell[1] as f64 * a2[0] + ot[0] - of[0],
            c.cell[0] as f64 * a1[1] + c.cell[1] as f64 * a2[1] + ot[1] - of[1],
        ]
    }

    /// Largest coupling magnitude; the model's energy scale.
    pub fn energy_scale(&self) -> f64 {
        self.couplings.iter().map(|c| c.amp.norm()).fold(0.0, f64::max)
    }
}

/// Square lattice with nearest-neighbour couplings J_x, J_y:
/// ω(k) = 2(J_x cos k_x a + J_y cos k_y a).
pub fn build_square(jx: f64, jy: f64, a: f64) -> Result<LatticeSpec> {
    if a <= 0.0 {
        return Err(Error::InvalidLattice(format!("lattice constant a = {a} must be positive")));
    }
    let mut couplings = Vec::new();
    for (amp, cells) in [(jx, [[1, 0], [-1, 0]]), (jy, [[0, 1], [0, -1]])] {
        for cell in cells {
            couplings.push(Coupling { from: 0, to: 0, cell, amp: C64::new(amp, 0.0) });
        }
    }
    Ok(LatticeSpec {
        dimension: 2,
        lattice_vectors: [[a, 0.0], [0.0, a]],
        sublattice_offsets: vec![[0.0, 0.0]],
        couplings,
        unit_cell_area: a * a,
    })
}

/// Honeycomb lattice with nearest-neighbour J1 (A↔B) and
/// next-nearest-neighbour J2 (A↔A, B↔B over ±a_1, ±a_2, ±(a_1−a_2)).
///
/// Convention: both coupling amplitudes enter h(k) with a + sign, so the
/// T = 0 bands are ω_± = ±J1|f(k)| and the NNN term shifts both bands by
/// +2 J2 Σ cos(k·b). With this sign and J2 = J1/4 the lower band's level
/// set at Δ = −1.5 J1 is the Van Hove contour whose edges are exactly
/// straight (curvature and its derivative both vanish).
pub fn build_honeycomb(j1: f64, j2: f64, a: f64) -> Result<LatticeSpec> {
    if a <= 0.0 {
        return Err(Error::InvalidLattice(format!("lattice constant a = {a} must be positive")));
    }
    let s3 = 3.0f64.sqrt();
    let a1 = [1.5 * a, 0.5 * s3 * a];
    let a2 = [1.5 * a, -0.5 * s3 * a];
    let mut couplings = Vec::new();
    // A→B displacements δ1, δ2, δ3 live in cells (0,0), (−1,1), (−1,0)
    for cell in [[0, 0], [-1, 1], [-1, 0]] {
        couplings.push(Coupling { from: 0, to: 1, cell, amp: C64::new(j1, 0.0) });
        couplings.push(Coupling { from: 1, to: 0, cell: [-cell[0], -cell[1]], amp: C64::new(j1, 0.0) });
    }
    if j2 != 0.0 {
        for cell in [[1, 0], [-1, 0], [0, 1], [0, -1], [1, -1], [-1, 1]] {
            for sub in [0, 1] {
                couplings.push(Coupling { from: sub, to: sub, cell, amp: C64::new(j2, 0.0) });
            }
        }
    }
    Ok(LatticeSpec {
        dimension: 2,
        lattice_vectors: [a1, a2],
        sublattice_offsets: vec![[0.0, 0.0], [0.5 * a, 0.5 * s3 * a]],
        couplings,
        unit_cell_area: 1.5 * s3 * a * a,
    })
}

/// Assemble and diagonalize the Bloch matrix at `k`.
pub fn bloch(spec: &LatticeSpec, k: [f64; 2]) -> BlochSample {
    let n = spec.n_sublattices();
    let mut h = DMatrix::<C64>::zeros(n, n);
    for c in &spec.couplings {
        let d = spec.displacement(c);
        let phase = C64::new(0.0, k[0] * d[0] + k[1] * d[1]).exp();
        h[(c.from, c.to)] += c.amp * phase;
    }
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let bands: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::<C64>::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    BlochSample { k, h, bands, vectors }
}

/// Band energy ω_ν(k).
pub fn band_energy(spec: &LatticeSpec, band: usize, k: [f64; 2]) -> f64 {
    if spec.n_sublattices() == 1 {
        // h is 1×1 and hermitian-closed: ω = Re Σ J e^{ik·d}
        let mut w = 0.0;
        for c in &spec.couplings {
            let d = spec.displacement(c);
            let ph = k[0] * d[0] + k[1] * d[1];
            w += c.amp.re * ph.cos() - c.amp.im * ph.sin();
        }
        return w;
    }
    bloch(spec, k).bands[band]
}

fn bloch_derivative_matrices(
    spec: &LatticeSpec,
    k: [f64; 2],
) -> ([DMatrix<C64>; 2], [[DMatrix<C64>; 2]; 2]) {
    let n = spec.n_sublattices();
    let mut dh = [DMatrix::<C64>::zeros(n, n), DMatrix::<C64>::zeros(n, n)];
    let mut d2h = [
        [DMatrix::<C64>::zeros(n, n), DMatrix::<C64>::zeros(n, n)],
        [DMatrix::<C64>::zeros(n, n), DMatrix::<C64>::zeros(n, n)],
    ];
    for c in &spec.couplings {
        let d = spec.displacement(c);
        let phase = c.amp * C64::new(0.0, k[0] * d[0] + k[1] * d[1]).exp();
        for i in 0..2 {
            dh[i][(c.from, c.to)] += phase * C64::new(0.0, d[i]);
            for j in 0..2 {
                d2h[i][j][(c.from, c.to)] += phase * C64::new(-d[i] * d[j], 0.0);
            }
        }
    }
    (dh, d2h)
}

/// Group velocity and Hessian of band `band` at `k`, via exact
/// perturbation formulas on the Bloch eigenbasis.
pub fn derivatives(spec: &LatticeSpec, k: [f64; 2], band: usize) -> Result<DispersionDerivatives> {
    if spec.n_sublattices() == 1 {
        let mut v = [0.0; 2];
        let mut hess = [[0.0; 2]; 2];
        for c in &spec.couplings {
            let d = spec.displacement(c);
            let ph = k[0] * d[0] + k[1] * d[1];
            // Re[i J e^{ik·d}] and Re[−d_i d_j J e^{ik·d}]
            let re = c.amp.re * ph.cos() - c.amp.im * ph.sin();
            let im = c.amp.re * ph.sin() + c.amp.im * ph.cos();
            for i in 0..2 {
                v[i] += -d[i] * im;
                for j in 0..2 {
                    hess[i][j] += -d[i] * d[j] * re;
                }
            }
        }
        return Ok(DispersionDerivatives { v, speed: (v[0] * v[0] + v[1] * v[1]).sqrt(), hess });
    }
    let sample = bloch(spec, k);
    let n = spec.n_sublattices();
    let scale = spec.energy_scale();
    for mu in 0..n {
        if mu != band && (sample.bands[mu] - sample.bands[band]).abs() < 1e-8 * scale {
            return Err(Error::DegenerateBand {
                band,
                kx: k[0],
                ky: k[1],
                gap: (sample.bands[mu] - sample.bands[band]).abs(),
            });
        }
    }
    let (dh, d2h) = bloch_derivative_matrices(spec, k);
    let u = &sample.vectors;
    // m[i][μ] = ⟨u_band| ∂_i h |u_μ⟩
    let mut m = [vec![C64::new(0.0, 0.0); n], vec![C64::new(0.0, 0.0); n]];
    let ub: DVector<C64> = u.column(band).into();
    for i in 0..2 {
        let dhu = &dh[i] * u;
        for mu in 0..n {
            m[i][mu] = ub.dotc(&dhu.column(mu));
        }
    }
    let v = [m[0][band].re, m[1][band].re];
    let mut hess = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let d2u: DVector<C64> = &d2h[i][j] * &ub;
            let mut val = ub.dotc(&d2u).re;
            for mu in 0..n {
                if mu != band {
                    val += 2.0 * (m[i][mu] * m[j][mu].conj()).re
                        / (sample.bands[band] - sample.bands[mu]);
                }
            }
            hess[i][j] = val;
        }
    }
    Ok(DispersionDerivatives { v, speed: (v[0] * v[0] + v[1] * v[1]).sqrt(), hess })
}

/// Sublattice weight |U_{ν,i}|² of band `band` at `k` (gauge-invariant).
pub fn band_weight(spec: &LatticeSpec, band: usize, k: [f64; 2], subl: usize) -> f64 {
    bloch(spec, k).vectors[(subl, band)].norm_sqr()
}

/// Sublattice weight and its k-gradient, via first-order eigenvector
/// perturbation theory. Refuses at band degeneracies.
pub fn band_weight_gradient(
    spec: &LatticeSpec,
    band: usize,
    k: [f64; 2],
    subl: usize,
) -> Result<(f64, [f64; 2])> {
    let sample = bloch(spec, k);
    let n = spec.n_sublattices();
    let scale = spec.energy_scale();
    for mu in 0..n {
        if mu != band && (sample.bands[mu] - sample.bands[band]).abs() < 1e-8 * scale {
            return Err(Error::DegenerateBand {
                band,
                kx: k[0],
                ky: k[1],
                gap: (sample.bands[mu] - sample.bands[band]).abs(),
            });
        }
    }
    let (dh, _) = bloch_derivative_matrices(spec, k);
    let u = &sample.vectors;
    let ub: DVector<C64> = u.column(band).into();
    let w = ub[subl].norm_sqr();
    let mut grad = [0.0; 2];
    for i in 0..2 {
        let dhu = &dh[i] * &ub; // (∂_i h)|u_ν⟩
        // ∂_i|u_ν⟩ = Σ_{μ≠ν} |u_μ⟩⟨u_μ|∂_i h|u_ν⟩/(ω_ν − ω_μ)
        let mut du_subl = C64::new(0.0, 0.0);
        for mu in 0..n {
            if mu == band {
                continue;
            }
            let umu: DVector<C64> = u.column(mu).into();
            let amp = umu.dotc(&dhu) / (sample.bands[band] - sample.bands[mu]);
            du_subl += umu[subl] * amp;
        }
        grad[i] = 2.0 * (ub[subl].conj() * du_subl).re;
    }
    Ok((w, grad))
}

/// Band minimum and maximum over a dense reciprocal-cell grid.
pub fn band_range(spec: &LatticeSpec, band: usize, grid_n: usize) -> (f64, f64) {
    let [b1, b2] = spec.reciprocal_vectors();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..grid_n {
        for j in 0..grid_n {
            let t1 = i as f64 / grid_n as f64;
            let t2 = j as f64 / grid_n as f64;
            let k = [t1 * b1[0] + t2 * b2[0], t1 * b1[1] + t2 * b2[1]];
            let w = band_energy(spec, band, k);
            lo = lo.min(w);
            hi = hi.max(w);
        }
    }
    (lo, hi)
}

/// Energies of the band's critical points (v = 0): Van Hove energies plus
/// band extrema. Located by Newton iteration on v(k) = 0 from coarse-grid
/// minima of |v|.
pub fn critical_energies(spec: &LatticeSpec, band: usize, grid_n: usize) -> Vec<f64> {
    let [b1, b2] = spec.reciprocal_vectors();
    let at = |t1: f64, t2: f64| [t1 * b1[0] + t2 * b2[0], t1 * b1[1] + t2 * b2[1]];
    let n = grid_n;
    let mut speeds = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let k = at(i as f64 / n as f64, j as f64 / n as f64);
            speeds[i * n + j] = match derivatives(spec, k, band) {
                Ok(d) => d.speed,
                Err(_) => f64::INFINITY, // degeneracies are not Van Hove points
            };
        }
    }
    let vmax = speeds.iter().cloned().filter(|s| s.is_finite()).fold(0.0, f64::max);
    let mut energies: Vec<f64> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let s = speeds[i * n + j];
            if !s.is_finite() || s > 0.2 * vmax {
                continue;
            }
            // 8-neighbourhood local minimum on the torus
            let mut is_min = true;
            for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let ii = (i as i64 + di).rem_euclid(n as i64) as usize;
                    let jj = (j as i64 + dj).rem_euclid(n as i64) as usize;
                    if speeds[ii * n + jj] < s {
                        is_min = false;
                    }
                }
            }
            if !is_min {
                continue;
            }
            // Newton: solve v(k) = 0 with Jacobian = Hessian of ω
            let mut k = at(i as f64 / n as f64, j as f64 / n as f64);
            let mut ok = false;
            for _ in 0..60 {
                let d = match derivatives(spec, k, band) {
                    Ok(d) => d,
                    Err(_) => break,
                };
                if d.speed < 1e-12 * vmax {
                    ok = true;
                    break;
                }
                let h = d.hess;
                let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
                if det.abs() < 1e-14 {
                    break;
                }
                let dx = (h[1][1] * d.v[0] - h[0][1] * d.v[1]) / det;
                let dy = (-h[1][0] * d.v[0] + h[0][0] * d.v[1]) / det;
                // damp long steps so we stay near the candidate cell
                let damp = 1.0f64.min(0.5 / (dx.hypot(dy) * n as f64 / 6.28));
                k[0] -= dx * damp;
                k[1] -= dy * damp;
            }
            if ok {
                let w = band_energy(spec, band, k);
                if !energies.iter().any(|&e| (e - w).abs() < 1e-6 * spec.energy_scale().max(1.0)) {
                    energies.push(w);
                }
            }
        }
    }
    energies.sort_by(|a, b| a.partial_cmp(b).unwrap());
    energies
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn square_dispersion_formula() {
        let sq = build_square(1.0, 1.0, 1.0).unwrap();
        assert!((band_energy(&sq, 0, [0.0, 0.0]) - 4.0).abs() < 1e-12);
        let half = std::f64::consts::FRAC_PI_2;
        assert!(band_energy(&sq, 0, [half, half]).abs() < 1e-12);
        let sq2 = build_square(1.0, 2.0, 1.0).unwrap();
        assert!((band_energy(&sq2, 0, [std::f64::consts::PI, 0.0]) - 2.0).abs() < 1e-12);
        assert!(
            (band_energy(&sq2, 0, [std::f64::consts::PI, std::f64::consts::PI]) + 6.0).abs()
                < 1e-12
        );
    }

    #[test]
    fn square_derivatives_closed_form() {
        let sq = build_square(1.0, 1.0, 1.0).unwrap();
        let half = std::f64::consts::FRAC_PI_2;
        let d = derivatives(&sq, [half, half], 0).unwrap();
        assert!((d.v[0] + 2.0).abs() < 1e-12 && (d.v[1] + 2.0).abs() < 1e-12);
        let sq2 = build_square(1.0, 2.0, 1.0).unwrap();
        let d = derivatives(&sq2, [half, half], 0).unwrap();
        assert!(d.hess[0][0].abs() < 1e-12 && d.hess[1][1].abs() < 1e-12);
        let d = derivatives(&sq2, [0.0, half], 0).unwrap();
        assert!((d.hess[0][0] + 2.0).abs() < 1e-12 && d.hess[1][1].abs() < 1e-12);
    }

    #[test]
    fn honeycomb_gamma_point_bands() {
        let hc = build_honeycomb(1.0, 0.0, 1.0).unwrap();
        let s = bloch(&hc, [0.0, 0.0]);
        assert!((s.bands[0] + 3.0).abs() < 1e-12);
        assert!((s.bands[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn honeycomb_dirac_degeneracy() {
        // K point of the hexagonal BZ
        let hc = build_honeycomb(1.0, 0.0, 1.0).unwrap();
        let kpt = [2.0 * std::f64::consts::PI / 3.0, 2.0 * std::f64::consts::PI / (3.0 * 3.0f64.sqrt())];
        let s = bloch(&hc, kpt);
        assert!((s.bands[1] - s.bands[0]).abs() < 1e-10);
        // degeneracy persists with NNN coupling: dense grid minimum of the gap
        let hc2 = build_honeycomb(1.0, 0.25, 1.0).unwrap();
        let s2 = bloch(&hc2, kpt);
        assert!((s2.bands[1] - s2.bands[0]).abs() < 1e-10);
        assert!(derivatives(&hc2, kpt, 0).is_err()); // refuse degenerate derivatives
    }

    #[test]
    fn hermiticity_and_periodicity_random_k() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for spec in [build_square(1.0, 2.0, 1.0).unwrap(), build_honeycomb(1.0, 0.25, 1.0).unwrap()]
        {
            let [b1, b2] = spec.reciprocal_vectors();
            for _ in 0..200 {
                let k = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
                let s = bloch(&spec, k);
                let herm = (&s.h - s.h.adjoint()).norm();
                assert!(herm < 1e-12 * spec.energy_scale());
                let kg = [k[0] + b1[0] + b2[0], k[1] + b1[1] + b2[1]];
                let sg = bloch(&spec, kg);
                for b in 0..spec.n_bands() {
                    assert!((s.bands[b] - sg.bands[b]).abs() < 1e-10);
                }
                // time reversal for real couplings
                let sm = bloch(&spec, [-k[0], -k[1]]);
                for b in 0..spec.n_bands() {
                    assert!((s.bands[b] - sm.bands[b]).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let specs = [build_square(1.0, 2.0, 1.0).unwrap(), build_honeycomb(1.0, 0.25, 1.0).unwrap()];
        for spec in &specs {
            for band in 0..spec.n_bands() {
                let mut checked = 0;
                while checked < 20 {
                    let k = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
                    let d = match derivatives(spec, k, band) {
                        Ok(d) => d,
                        Err(_) => continue,
                    };
                    if d.speed < 0.3 {
                        continue; // FD comparisons are ill-conditioned near Van Hove points
                    }
                    let h = 1e-5;
                    for i in 0..2 {
                        let mut kp = k;
                        let mut km = k;
                        kp[i] += h;
                        km[i] -= h;
                        let fd = (band_energy(spec, band, kp) - band_energy(spec, band, km)) / (2.0 * h);
                        assert!(
                            (fd - d.v[i]).abs() < 1e-6 * (1.0 + fd.abs()),
                            "v[{i}] mismatch: {fd} vs {}",
                            d.v[i]
                        );
                        let dp = derivatives(spec, kp, band).unwrap();
                        let dm = derivatives(spec, km, band).unwrap();
                        for j in 0..2 {
                            let fdh = (dp.v[j] - dm.v[j]) / (2.0 * h);
                            assert!(
                                (fdh - d.hess[i][j]).abs() < 1e-5 * (1.0 + fdh.abs()),
                                "H[{i}][{j}] mismatch: {fdh} vs {}",
                                d.hess[i][j]
                            );
                        }
                    }
                    checked += 1;
                }
            }
        }
    }

    #[test]
    fn eigenvector_unitarity() {
        let hc = build_honeycomb(1.0, 0.25, 1.0).unwrap();
        let s = bloch(&hc, [0.83, -0.41]);
        let prod = s.vectors.adjoint() * &s.vectors;
        assert!((prod - DMatrix::<C64>::identity(2, 2)).norm() < 1e-12);
    }

    #[test]
    fn square_critical_energies() {
        // ω = 2(cos kx + 2 cos ky): extrema ±6, saddles at ±2
        let sq = build_square(1.0, 2.0, 1.0).unwrap();
        let crit = critical_energies(&sq, 0, 96);
        for target in [-6.0, -2.0, 2.0, 6.0] {
            assert!(
                crit.iter().any(|&e| (e - target).abs() < 1e-8),
                "missing critical energy {target}: {crit:?}"
            );
        }
    }

    #[test]
    fn json_roundtrip() {
        let hc = build_honeycomb(1.0, 0.25, 1.0).unwrap();
        let text = serde_json::to_string(&hc).unwrap();
        let back: LatticeSpec = serde_json::from_str(&text).unwrap();
        let k = [0.3, 1.1];
        for b in 0..2 {
            assert!((band_energy(&hc, b, k) - band_energy(&back, b, k)).abs() < 1e-15);
        }
    }
}
