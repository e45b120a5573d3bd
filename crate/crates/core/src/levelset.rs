//! Resonant level sets S(Δ) = {k : ω(k) = Δ} and their differential geometry.
//!
//! Extraction runs marching squares in the torus coordinates of the
//! reciprocal cell, Newton-polishes every vertex onto the level set and
//! attaches group velocity, outward normal, signed curvature and transverse
//! mass. Open orbits are recognized by their homotopy winding around the
//! torus and stitched across the zone boundary, so arclength quadratures
//! always run over one full period.

use crate::lattice::{band_energy, critical_energies, derivatives, LatticeSpec};
use crate::{quad, Error, Result};

/// Minimum group velocity treated as non-Van-Hove (units J·a).
pub const V_MIN: f64 = 1e-6;

/// One polished sample of the level set with attached geometry.
/// Geometry fields are NaN at points excluded by the Van Hove cutoff.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub k: [f64; 2],
    /// Arclength coordinate from the start of the curve.
    pub s: f64,
    pub v: [f64; 2],
    pub speed: f64,
    /// Outward unit normal, aligned with +v.
    pub nhat: [f64; 2],
    /// Unit tangent, the −90° rotation of n̂.
    pub that: [f64; 2],
    /// Signed curvature K = −t̂·H·t̂/v.
    pub curvature: f64,
    /// Transverse mass m^T = (t̂·H·t̂)⁻¹; satisfies K·m^T·v = −1.
    pub mt: f64,
}

/// One connected component of S. `k` coordinates are unwrapped
/// (continuous along the chain); for open orbits the last point connects
/// back to the first shifted by `period_shift`.
#[derive(Debug, Clone)]
pub struct Curve {
    pub points: Vec<CurvePoint>,
    pub closed: bool,
    /// Reciprocal-lattice displacement accumulated over one traversal;
    /// [0,0] for closed curves.
    pub period_shift: [f64; 2],
    /// Total arclength of one period.
    pub length: f64,
}

/// The discretized resonant set at one energy.
#[derive(Debug, Clone)]
pub struct ResonantSet {
    pub delta: f64,
    pub band: usize,
    pub curves: Vec<Curve>,
}

/// A direction where the stationary-phase amplitude diverges.
#[derive(Debug, Clone, Copy)]
pub struct CausticPoint {
    pub k: [f64; 2],
    pub vhat: [f64; 2],
    /// 1 = simple zero of K; 2 = K and dK/ds both vanish.
    pub order: usize,
}

/// Point geometry on S: refuses below the Van Hove velocity cutoff.
pub fn geometry_at(spec: &LatticeSpec, band: usize, k: [f64; 2]) -> Result<CurvePoint> {
    let d = derivatives(spec, k, band)?;
    let scale = spec.energy_scale();
    if d.speed <= V_MIN * scale {
        return Err(Error::VanHove { kx: k[0], ky: k[1], v: d.speed });
    }
    let nhat = [d.v[0] / d.speed, d.v[1] / d.speed];
    let that = [nhat[1], -nhat[0]];
    let tht = that[0] * (d.hess[0][0] * that[0] + d.hess[0][1] * that[1])
        + that[1] * (d.hess[1][0] * that[0] + d.hess[1][1] * that[1]);
    Ok(CurvePoint {
        k,
        s: 0.0,
        v: d.v,
        speed: d.speed,
        nhat,
        that,
        curvature: -tht / d.speed,
        mt: 1.0 / tht,
    })
}

fn nan_point(k: [f64; 2]) -> CurvePoint {
    CurvePoint {
        k,
        s: 0.0,
        v: [f64::NAN, f64::NAN],
        speed: f64::NAN,
        nhat: [f64::NAN, f64::NAN],
        that: [f64::NAN, f64::NAN],
        curvature: f64::NAN,
        mt: f64::NAN,
    }
}

/// Newton-project `k` onto ω = Δ along the gradient. Returns false if the
/// projection stalls (vanishing velocity).
fn polish(spec: &LatticeSpec, band: usize, delta: f64, k: &mut [f64; 2], tol: f64) -> bool {
    for _ in 0..30 {
        let w = band_energy(spec, band, *k) - delta;
        if w.abs() < tol {
            return true;
        }
        let d = match derivatives(spec, *k, band) {
            Ok(d) => d,
            Err(_) => return false,
        };
        let v2 = d.speed * d.speed;
        if v2 < 1e-20 {
            return false;
        }
        k[0] -= w * d.v[0] / v2;
        k[1] -= w * d.v[1] / v2;
    }
    false
}

/// Extract S(Δ) with the default Van Hove margin of 1e-3·|J|.
pub fn extract(spec: &LatticeSpec, band: usize, delta: f64, grid_n: usize) -> Result<ResonantSet> {
    extract_with(spec, band, delta, grid_n, 1e-3)
}

/// Extract S(Δ), refusing when Δ is within `vh_margin·|J|` of a Van Hove
/// energy. A zero margin permits extraction of self-intersecting Van Hove
/// contours; the points at the crossings carry NaN geometry.
pub fn extract_with(
    spec: &LatticeSpec,
    band: usize,
    delta: f64,
    grid_n: usize,
    vh_margin: f64,
) -> Result<ResonantSet> {
    let scale = spec.energy_scale();
    let (lo, hi) = crate::lattice::band_range(spec, band, 64);
    if delta < lo - 1e-12 || delta > hi + 1e-12 {
        return Err(Error::EmptySet { delta, band, lo, hi });
    }
    if vh_margin > 0.0 {
        let crit = critical_energies(spec, band, 96);
        if let Some(dist) =
            crit.iter().map(|&e| (e - delta).abs()).min_by(|a, b| a.partial_cmp(b).unwrap())
        {
            if dist < vh_margin * scale {
                return Err(Error::NearVanHove { delta, dist });
            }
        }
    }

    let [b1, b2] = spec.reciprocal_vectors();
    let to_k = |t: [f64; 2]| [t[0] * b1[0] + t[1] * b2[0], t[0] * b1[1] + t[1] * b2[1]];
    let n = grid_n;
    // field on the torus grid, exact zeros nudged off the lattice
    let mut vals = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let w = band_energy(spec, band, to_k([i as f64 / n as f64, j as f64 / n as f64])) - delta;
            vals[i * n + j] = if w == 0.0 { 1e-14 * scale } else { w };
        }
    }
    let at = |i: usize, j: usize| vals[(i % n) * n + (j % n)];

    // Edge id: (i, j, dir) with dir 0 = toward +t1, 1 = toward +t2.
    // Crossing position along the edge by linear interpolation.
    #[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
    struct EdgeId(usize, usize, u8);
    let crossing = |e: EdgeId| -> Option<f64> {
        let (va, vb) = match e.2 {
            0 => (at(e.0, e.1), at(e.0 + 1, e.1)),
            _ => (at(e.0, e.1), at(e.0, e.1 + 1)),
        };
        if va * vb < 0.0 {
            Some(va / (va - vb))
        } else {
            None
        }
    };

    // Pair up crossed edges within each cell. Cells are indexed by their
    // lower-left vertex; each pairing connects two edges of that cell.
    use std::collections::HashMap;
    let mut cell_pairs: HashMap<(usize, usize), Vec<(EdgeId, EdgeId)>> = HashMap::new();
    for ci in 0..n {
        for cj in 0..n {
            let bottom = EdgeId(ci, cj, 0);
            let right = EdgeId((ci + 1) % n, cj, 1);
            let top = EdgeId(ci, (cj + 1) % n, 0);
            let left = EdgeId(ci, cj, 1);
            let cross: Vec<EdgeId> = [bottom, right, top, left]
                .into_iter()
                .filter(|&e| crossing(e).is_some())
                .collect();
            match cross.len() {
                0 => {}
                2 => {
                    cell_pairs.insert((ci, cj), vec![(cross[0], cross[1])]);
                }
                4 => {
                    // saddle cell: disambiguate with the centre value
                    let centre = band_energy(
                        spec,
                        band,
                        to_k([(ci as f64 + 0.5) / n as f64, (cj as f64 + 0.5) / n as f64]),
                    ) - delta;
                    let ll = at(ci, cj);
                    // centre sign matching lower-left joins (bottom,left)(top,right);
                    // otherwise (bottom,right)(top,left)
                    let pairs = if centre * ll >= 0.0 {
                        vec![(bottom, right), (top, left)]
                    } else {
                        vec![(bottom, left), (top, right)]
                    };
                    cell_pairs.insert((ci, cj), pairs);
                }
                _ => {} // grazing contact at a vertex; skip the degenerate cell
            }
        }
    }

    // Each crossed edge joins its two incident cells; walking cell pairings
    // traces disjoint cycles on the torus.
    let cells_of = |e: EdgeId| -> [(usize, usize); 2] {
        match e.2 {
            0 => [(e.0, e.1), (e.0, (e.1 + n - 1) % n)],
            _ => [(e.0, e.1), ((e.0 + n - 1) % n, e.1)],
        }
    };
    let partner_in = |cell: (usize, usize), e: EdgeId, pairs: &HashMap<(usize, usize), Vec<(EdgeId, EdgeId)>>| -> Option<EdgeId> {
        pairs.get(&cell).and_then(|v| {
            v.iter().find_map(|&(a, b)| {
                if a == e {
                    Some(b)
                } else if b == e {
                    Some(a)
                } else {
                    None
                }
            })
        })
    };
    // edge position in t-space (fractional torus coordinates)
    let edge_t = |e: EdgeId| -> [f64; 2] {
        let a = crossing(e).unwrap();
        match e.2 {
            0 => [(e.0 as f64 + a) / n as f64, e.1 as f64 / n as f64],
            _ => [e.0 as f64 / n as f64, (e.1 as f64 + a) / n as f64],
        }
    };

    let mut visited: std::collections::HashSet<EdgeId> = std::collections::HashSet::new();
    let mut curves = Vec::new();
    let all_edges: Vec<EdgeId> = {
        let mut v = Vec::new();
        for i in 0..n {
            for j in 0..n {
                for d in 0..2u8 {
                    let e = EdgeId(i, j, d);
                    if crossing(e).is_some() {
                        v.push(e);
                    }
                }
            }
        }
        v
    };

    for &start in &all_edges {
        if visited.contains(&start) {
            continue;
        }
        // pick a starting cell that actually pairs this edge
        let mut cell = match cells_of(start)
            .into_iter()
            .find(|c| partner_in(*c, start, &cell_pairs).is_some())
        {
            Some(c) => c,
            None => continue,
        };
        let mut chain_t: Vec<[f64; 2]> = Vec::new();
        let mut e = start;
        // unwrapped coordinates: accumulate via nearest-image steps
        let mut t_unwrapped = edge_t(start);
        chain_t.push(t_unwrapped);
        loop {
            visited.insert(e);
            let next = match partner_in(cell, e, &cell_pairs) {
                Some(p) => p,
                None => break,
            };
            let t_next_raw = edge_t(next);
            for d in 0..2 {
                let mut delta_t = t_next_raw[d] - (t_unwrapped[d].rem_euclid(1.0));
                if delta_t > 0.5 {
                    delta_t -= 1.0;
                }
                if delta_t < -0.5 {
                    delta_t += 1.0;
                }
                t_unwrapped[d] += delta_t;
            }
            if next == start {
                break;
            }
            chain_t.push(t_unwrapped);
            let [c1, c2] = cells_of(next);
            cell = if c1 == cell { c2 } else { c1 };
            e = next;
        }
        if chain_t.len() < 4 {
            continue;
        }
        // homotopy winding over one traversal
        let wind = [
            (t_unwrapped[0] - chain_t[0][0]).round(),
            (t_unwrapped[1] - chain_t[0][1]).round(),
        ];
        let closed = wind[0] == 0.0 && wind[1] == 0.0;
        let period_shift = [
            wind[0] * b1[0] + wind[1] * b2[0],
            wind[0] * b1[1] + wind[1] * b2[1],
        ];

        // map to k-space (unwrapped) and polish
        let tol = 1e-10 * scale;
        let mut pts: Vec<CurvePoint> = Vec::with_capacity(chain_t.len());
        for t in &chain_t {
            let mut k = to_k(*t);
            let polished = polish(spec, band, delta, &mut k, tol);
            match geometry_at(spec, band, k) {
                Ok(p) if polished => pts.push(p),
                _ => pts.push(nan_point(k)),
            }
        }
        // orientation: discrete tangent should follow t̂ = (n_y, −n_x)
        let mut score = 0.0;
        for w in pts.windows(2) {
            if w[0].that[0].is_nan() {
                continue;
            }
            score += (w[1].k[0] - w[0].k[0]) * w[0].that[0] + (w[1].k[1] - w[0].k[1]) * w[0].that[1];
        }
        if score < 0.0 {
            pts.reverse();
        }
        // arclength
        let mut s = 0.0;
        for i in 0..pts.len() {
            if i > 0 {
                let dx = pts[i].k[0] - pts[i - 1].k[0];
                let dy = pts[i].k[1] - pts[i - 1].k[1];
                s += (dx * dx + dy * dy).sqrt();
            }
            pts[i].s = s;
        }
        let close_vec = if closed {
            [pts[0].k[0] - pts[pts.len() - 1].k[0], pts[0].k[1] - pts[pts.len() - 1].k[1]]
        } else {
            let shift = if score < 0.0 { [-period_shift[0], -period_shift[1]] } else { period_shift };
            [
                pts[0].k[0] + shift[0] - pts[pts.len() - 1].k[0],
                pts[0].k[1] + shift[1] - pts[pts.len() - 1].k[1],
            ]
        };
        let length = s + (close_vec[0] * close_vec[0] + close_vec[1] * close_vec[1]).sqrt();
        let shift = if !closed && score < 0.0 {
            [-period_shift[0], -period_shift[1]]
        } else {
            period_shift
        };
        curves.push(Curve { points: pts, closed, period_shift: shift, length });
    }
    if curves.is_empty() {
        return Err(Error::EmptySet { delta, band, lo, hi });
    }
    curves.sort_by(|a, b| b.length.partial_cmp(&a.length).unwrap());
    Ok(ResonantSet { delta, band, curves })
}

/// Winding invariant n = (1/2π) ∮ ds/(m^T v) = −(1/2π) ∮ K ds, summed over
/// closed curves and open-orbit periods. Returns (n, residual).
pub fn winding(set: &ResonantSet) -> Result<(i64, f64)> {
    let mut total = 0.0;
    for c in &set.curves {
        let m = c.points.len();
        for i in 0..m {
            let p = &c.points[i];
            if p.curvature.is_nan() {
                continue;
            }
            let s_next = if i + 1 < m { c.points[i + 1].s } else { c.length };
            let s_prev = if i > 0 { c.points[i - 1].s } else { p.s - (c.length - c.points[m - 1].s) };
            let ds = 0.5 * (s_next - s_prev);
            total += -p.curvature * ds;
        }
    }
    let raw = total / (2.0 * std::f64::consts::PI);
    let n = raw.round();
    let residual = (raw - n).abs();
    if residual > 0.05 {
        return Err(Error::NonIntegerResidual { residual: raw - n });
    }
    Ok((n as i64, residual))
}

/// Locate caustic points: simple zeros of K (sign changes, bisected to
/// |K| < 1e-8) and order-2 points where K touches zero without changing
/// sign (including flat stretches, reported at their midpoint).
pub fn caustics(spec: &LatticeSpec, set: &ResonantSet) -> Vec<CausticPoint> {
    let mut found = Vec::new();
    let flat_tol = 1e-8;
    for c in &set.curves {
        let m = c.points.len();
        let valid = |i: usize| !c.points[i % m].curvature.is_nan();
        // simple zeros: bisection on the chain index with Newton projection
        let wrap = c.closed || c.period_shift != [0.0, 0.0];
        let upper = if wrap { m } else { m - 1 };
        let mut flat_run: Option<(usize, usize)> = None;
        let flush_flat = |run: Option<(usize, usize)>, found: &mut Vec<CausticPoint>| {
            if let Some((a, b)) = run {
                if b - a >= 3 {
                    let mid = &c.points[((a + b) / 2) % m];
                    found.push(CausticPoint {
                        k: mid.k,
                        vhat: mid.nhat,
                        order: 2,
                    });
                }
            }
        };
        for i in 0..upper {
            let j = (i + 1) % m;
            if !valid(i) || !valid(j) {
                flush_flat(flat_run.take(), &mut found);
                continue;
            }
            let ki = c.points[i].curvature;
            let kj = c.points[j].curvature;
            // flat-stretch bookkeeping for order-2 detection
            if ki.abs() < flat_tol {
                flat_run = Some(match flat_run {
                    Some((a, _)) => (a, i),
                    None => (i, i),
                });
            } else if flat_run.is_some() {
                flush_flat(flat_run.take(), &mut found);
            }
            if ki * kj < 0.0 && ki.abs() >= flat_tol && kj.abs() >= flat_tol {
                // bisect along the chord, reprojecting onto S
                let mut a = c.points[i].k;
                let mut b = c.points[j].k;
                let mut fa = ki;
                let mut point = None;
                for _ in 0..60 {
                    let mut mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                    if !polish(spec, set.band, set.delta, &mut mid, 1e-12 * spec.energy_scale()) {
                        break;
                    }
                    let g = match geometry_at(spec, set.band, mid) {
                        Ok(g) => g,
                        Err(_) => break,
                    };
                    if g.curvature.abs() < 1e-8 {
                        point = Some(g);
                        break;
                    }
                    if fa * g.curvature < 0.0 {
                        b = mid;
                    } else {
                        a = mid;
                        fa = g.curvature;
                    }
                }
                if let Some(g) = point {
                    found.push(CausticPoint { k: g.k, vhat: g.nhat, order: 1 });
                }
            }
        }
        flush_flat(flat_run.take(), &mut found);
    }
    found
}

/// All k ∈ S whose velocity direction equals `q` (unit vector), found by
/// bisection between chain points where v̂ × q changes sign and v·q > 0.
pub fn resonant_points(
    spec: &LatticeSpec,
    set: &ResonantSet,
    q: [f64; 2],
) -> Vec<CurvePoint> {
    let mut hits = Vec::new();
    for c in &set.curves {
        let m = c.points.len();
        let wrap = c.closed || c.period_shift != [0.0, 0.0];
        let upper = if wrap { m } else { m - 1 };
        for i in 0..upper {
            let j = (i + 1) % m;
            let pi = &c.points[i];
            let pj = &c.points[j];
            if pi.speed.is_nan() || pj.speed.is_nan() {
                continue;
            }
            let cross_i = pi.nhat[0] * q[1] - pi.nhat[1] * q[0];
            let cross_j = pj.nhat[0] * q[1] - pj.nhat[1] * q[0];
            if cross_i * cross_j >= 0.0 || pi.nhat[0] * q[0] + pi.nhat[1] * q[1] <= 0.0 {
                continue;
            }
            // bisect for v̂ = q between the chain points
            let mut a = pi.k;
            let mut b = pj.k;
            let mut fa = cross_i;
            let mut hit = None;
            for _ in 0..60 {
                let mut mid = [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])];
                if !polish(spec, set.band, set.delta, &mut mid, 1e-12 * spec.energy_scale()) {
                    break;
                }
                let g = match geometry_at(spec, set.band, mid) {
                    Ok(g) => g,
                    Err(_) => break,
                };
                let cr = g.nhat[0] * q[1] - g.nhat[1] * q[0];
                if cr.abs() < 1e-12 {
                    hit = Some(g);
                    break;
                }
                if fa * cr < 0.0 {
                    b = mid;
                } else {
                    a = mid;
                    fa = cr;
                }
                hit = Some(g);
            }
            if let Some(g) = hit {
                hits.push(g);
            }
        }
    }
    hits
}

/// Directional density of states σ(v̂, Δ): sums 𝒜/((2π)² v|K|) over all
/// k ∈ S with v̂(k) = v̂_query. Zero when no resonant direction exists
/// (beyond a caustic); refuses within 1e-3 rad of a caustic direction.
pub fn directional_cross_section(
    spec: &LatticeSpec,
    set: &ResonantSet,
    vhat_query: [f64; 2],
) -> Result<f64> {
    let qnorm = (vhat_query[0] * vhat_query[0] + vhat_query[1] * vhat_query[1]).sqrt();
    let q = [vhat_query[0] / qnorm, vhat_query[1] / qnorm];
    for cp in &caustics(spec, set) {
        let dot = (cp.vhat[0] * q[0] + cp.vhat[1] * q[1]).clamp(-1.0, 1.0);
        if dot.acos() < 1e-3 {
            return Err(Error::DivergesAtCaustic);
        }
    }
    let two_pi = 2.0 * std::f64::consts::PI;
    let sigma = resonant_points(spec, set, q)
        .iter()
        .map(|g| spec.unit_cell_area / (two_pi * two_pi * g.speed * g.curvature.abs()))
        .sum();
    Ok(sigma)
}

/// Write the set as CSV with columns (curve_id, s, k_x, k_y, v_x, v_y, K, mT).
pub fn to_csv<W: std::io::Write>(set: &ResonantSet, out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["curve_id", "s", "k_x", "k_y", "v_x", "v_y", "K", "mT"])
        .map_err(std::io::Error::other)?;
    for (id, c) in set.curves.iter().enumerate() {
        for p in &c.points {
            w.write_record(&[
                id.to_string(),
                format!("{:.12e}", p.s),
                format!("{:.12e}", p.k[0]),
                format!("{:.12e}", p.k[1]),
                format!("{:.12e}", p.v[0]),
                format!("{:.12e}", p.v[1]),
                format!("{:.12e}", p.curvature),
                format!("{:.12e}", p.mt),
            ])
            .map_err(std::io::Error::other)?;
        }
    }
    w.flush()
}

// ---------------------------------------------------------------------------
// High-accuracy resampling for surface quadratures.
//
// The marching-squares chain is second-order accurate; the Green's-function
// quadratures need spectral accuracy, which the trapezoid rule delivers on a
// smooth periodic parametrization. Closed star-shaped curves are resampled
// by polar angle about their centroid; open orbits as graphs over their
// spanning axis.
// ---------------------------------------------------------------------------

/// A quadrature node on S: ∮ f ds ≈ Σ f(k_i) w_i.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub k: [f64; 2],
    pub v: [f64; 2],
    pub speed: f64,
    pub nhat: [f64; 2],
    pub curvature: f64,
    pub w: f64,
}

/// Resample a closed curve by polar angle about `center` with `n` nodes.
/// Fails (None) if the curve is not star-shaped about the center.
pub fn sample_closed_polar(
    spec: &LatticeSpec,
    band: usize,
    delta: f64,
    center: [f64; 2],
    r_max: f64,
    n: usize,
) -> Option<Vec<QuadPoint>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut out = Vec::with_capacity(n);
    let mut r_prev: Option<f64> = None;
    for i in 0..n {
        let th = two_pi * i as f64 / n as f64;
        let u = [th.cos(), th.sin()];
        let f = |r: f64| band_energy(spec, band, [center[0] + r * u[0], center[1] + r * u[1]]) - delta;
        // bracket the first crossing, seeded near the previous radius
        let r = match r_prev {
            Some(rp) => {
                let lo = (rp - 0.2 * r_max).max(1e-9);
                let hi = (rp + 0.2 * r_max).min(r_max);
                quad::scan_roots(&f, lo, hi, 64, 1e-13)
                    .into_iter()
                    .min_by(|a, b| ((a - rp).abs()).partial_cmp(&(b - rp).abs()).unwrap())
                    .or_else(|| quad::scan_roots(&f, 1e-9, r_max, 400, 1e-13).into_iter().next())?
            }
            None => quad::scan_roots(&f, 1e-9, r_max, 400, 1e-13).into_iter().next()?,
        };
        r_prev = Some(r);
        let k = [center[0] + r * u[0], center[1] + r * u[1]];
        let g = geometry_at(spec, band, k).ok()?;
        // dk/dθ by implicit differentiation: r' = −r (v·u')/(v·u)
        let up = [-u[1], u[0]];
        let vdotu = g.v[0] * u[0] + g.v[1] * u[1];
        let vdotup = g.v[0] * up[0] + g.v[1] * up[1];
        if vdotu.abs() < 1e-12 {
            return None; // tangential ray: not star-shaped
        }
        let rp = -r * vdotup / vdotu;
        let ds_dth = (rp * rp + r * r).sqrt();
        out.push(QuadPoint {
            k,
            v: g.v,
            speed: g.speed,
            nhat: g.nhat,
            curvature: g.curvature,
            w: ds_dth * two_pi / n as f64,
        });
    }
    Some(out)
}

/// Resample an open orbit spanning axis `axis` (0 = k_x) as graphs: for
/// each of `n` abscissae per period, solve for the transverse coordinate on
/// every branch seeded from the extracted chain.
pub fn sample_open_graph(
    spec: &LatticeSpec,
    band: usize,
    set: &ResonantSet,
    n: usize,
) -> Option<Vec<QuadPoint>> {
    let mut out = Vec::new();
    for c in &set.curves {
        if c.closed {
            continue;
        }
        let axis = if c.period_shift[0].abs() > c.period_shift[1].abs() { 0 } else { 1 };
        let other = 1 - axis;
        let period = c.period_shift[axis].abs();
        if period < 1e-9 {
            return None;
        }
        let x0 = c.points[0].k[axis];
        for i in 0..n {
            let x = x0 + period * i as f64 / n as f64;
            // seed: chain point closest in the spanning coordinate
            let seed = c
                .points
                .iter()
                .min_by(|p, q| {
                    let dp = (p.k[axis] - x).abs();
                    let dq = (q.k[axis] - x).abs();
                    dp.partial_cmp(&dq).unwrap()
                })?
                .k[other];
            let f = |y: f64| {
                let mut k = [0.0; 2];
                k[axis] = x;
                k[other] = y;
                band_energy(spec, band, k) - delta_of(set)
            };
            let mut y = seed;
            // Newton on the transverse coordinate
            let mut ok = false;
            for _ in 0..40 {
                let mut k = [0.0; 2];
                k[axis] = x;
                k[other] = y;
                let w = band_energy(spec, band, k) - set.delta;
                if w.abs() < 1e-12 * spec.energy_scale() {
                    ok = true;
                    break;
                }
                let d = derivatives(spec, k, band).ok()?;
                if d.v[other].abs() < 1e-10 {
                    break;
                }
                y -= w / d.v[other];
            }
            if !ok {
                // fall back to a bracketed solve around the seed
                y = quad::scan_roots(&f, seed - 0.5, seed + 0.5, 200, 1e-13)
                    .into_iter()
                    .min_by(|a, b| (a - seed).abs().partial_cmp(&(b - seed).abs()).unwrap())?;
            }
            let mut k = [0.0; 2];
            k[axis] = x;
            k[other] = y;
            let g = geometry_at(spec, band, k).ok()?;
            // ds per abscissa step: dy/dx = −v_axis/v_other
            let dydx = -g.v[axis] / g.v[other];
            let ds_dx = (1.0 + dydx * dydx).sqrt();
            out.push(QuadPoint {
                k,
                v: g.v,
                speed: g.speed,
                nhat: g.nhat,
                curvature: g.curvature,
                w: ds_dx * period / n as f64,
            });
        }
    }
    if out.is_empty() {
        None
    } else {
        Some(out)
    }
}

fn delta_of(set: &ResonantSet) -> f64 {
    set.delta
}

/// Resample the whole set for quadrature with roughly `n` nodes per curve.
/// Closed curves go through the polar parametrization about their centroid;
/// open orbits through the graph parametrization; curves that fit neither
/// fall back to the trapezoid rule on the extracted chain.
pub fn quadrature_nodes(
    spec: &LatticeSpec,
    set: &ResonantSet,
    n: usize,
) -> Vec<QuadPoint> {
    let mut out = Vec::new();
    for c in &set.curves {
        let nodes = if c.closed {
            let mut cx = 0.0;
            let mut cy = 0.0;
            for p in &c.points {
                cx += p.k[0];
                cy += p.k[1];
            }
            cx /= c.points.len() as f64;
            cy /= c.points.len() as f64;
            let r_max = c
                .points
                .iter()
                .map(|p| ((p.k[0] - cx).powi(2) + (p.k[1] - cy).powi(2)).sqrt())
                .fold(0.0, f64::max)
                * 1.5;
            sample_closed_polar(spec, set.band, set.delta, [cx, cy], r_max, n)
        } else {
            let single = ResonantSet { delta: set.delta, band: set.band, curves: vec![c.clone()] };
            sample_open_graph(spec, set.band, &single, n)
        };
        match nodes {
            Some(v) => out.extend(v),
            None => {
                // trapezoid fallback on the chain
                let m = c.points.len();
                let wrap = c.closed || c.period_shift != [0.0, 0.0];
                for i in 0..m {
                    let p = &c.points[i];
                    if p.speed.is_nan() {
                        continue;
                    }
                    let s_next = if i + 1 < m { c.points[i + 1].s } else { c.length };
                    let s_prev = if i > 0 {
                        c.points[i - 1].s
                    } else if wrap {
                        p.s - (c.length - c.points[m - 1].s)
                    } else {
                        p.s
                    };
                    out.push(QuadPoint {
                        k: p.k,
                        v: p.v,
                        speed: p.speed,
                        nhat: p.nhat,
                        curvature: p.curvature,
                        w: 0.5 * (s_next - s_prev),
                    });
                }
            }
        }
    }
    out
}
