//! Independent oracle for the square lattice: reduce the 2D Green's
//! function to a kx integral over the closed-form 1D chain Green's function.
//! Machine-accurate and entirely separate from the production PV/IBP path.

use latbath::quad;
use num_complex::Complex;

pub type C64 = Complex<f64>;

/// 1D chain Green's function ∫ dq/2π e^{iqn}/(E − 2J cos q + i0).
///
/// In band: −i e^{−iq₀|n|}/(2J sin q₀) with cos q₀ = E/2J.
/// Out of band: −z_in^{|n|}/(J(z_in − z_out)) with z the roots of
/// z² − (E/J)z + 1.
pub fn g1d(n: i64, e: f64, j: f64) -> C64 {
    let x = e / (2.0 * j);
    g1d_x(n, x, 1.0 - x.abs(), j)
}

/// Same, parametrized by x = E/2J and a separately-computed stable value
/// of 1 − |x| (the distance to the band edge, which cancels
/// catastrophically when formed from x directly).
fn g1d_x(n: i64, x: f64, one_minus_absx: f64, j: f64) -> C64 {
    let n = n.unsigned_abs() as i32;
    let s = x.signum();
    if one_minus_absx > 0.0 {
        // sin q0 = √((1−|x|)(1+|x|)), q0 from atan2 for edge stability
        let sinq0 = (one_minus_absx * (1.0 + x.abs())).sqrt();
        let q0 = sinq0.atan2(x);
        C64::new(0.0, -1.0) * C64::new(0.0, -q0 * n as f64).exp() / (2.0 * j * sinq0)
    } else {
        let root = (-one_minus_absx * (1.0 + x.abs())).sqrt();
        let zin = x - s * root;
        C64::new(-zin.powi(n) / (j * (zin - 1.0 / zin)), 0.0)
    }
}

/// Exact G(ρ, Δ) = Ω − iΓ/2 for the square lattice ω = 2(Jx cos kx +
/// Jy cos ky), a = 1, at integer separation (rx, ry).
pub fn square_exact(jx: f64, jy: f64, rx: i64, ry: i64, delta: f64) -> C64 {
    let pi = std::f64::consts::PI;
    // kx where the 1D band edge is hit: x(kx) = ±1 with
    // x = (Δ − 2Jx cos kx)/(2Jy)
    let mut splits: Vec<(f64, f64)> = Vec::new(); // (kx, edge sign)
    for s in [1.0, -1.0] {
        let c = (delta - s * 2.0 * jy) / (2.0 * jx);
        if c.abs() <= 1.0 {
            let k0 = c.acos();
            splits.push((-k0, s));
            splits.push((k0, s));
        }
    }
    splits.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut edges: Vec<(f64, Option<f64>)> = vec![(-pi, None)];
    edges.extend(splits.iter().filter(|p| p.0.abs() < pi - 1e-12).map(|&(k, s)| (k, Some(s))));
    edges.push((pi, None));

    // near a band-edge split at kx = k0 with x(k0) = s:
    // x − s = (Jx/Jy)(cos k0 − cos kx) = (2Jx/Jy) sin((kx+k0)/2) sin((kx−k0)/2).
    // `near` carries (k0, s, kx − k0) with the offset computed analytically in
    // the substitution variable — forming kx − k0 by subtraction underflows
    // near the edge and misclassifies the point as out-of-band.
    let eval = |kx: f64, near: Option<(f64, f64, f64)>| -> C64 {
        let x = (delta - 2.0 * jx * kx.cos()) / (2.0 * jy);
        let one_minus_absx = match near {
            Some((k0, s, dk)) if dk.abs() < 1e-4 => {
                let d = (2.0 * jx / jy) * (k0 + 0.5 * dk).sin() * (0.5 * dk).sin();
                // x = s + d, s = ±1 ⇒ |x| = 1 + s·d (for |d| ≪ 1), so 1 − |x| = −s·d
                -s * d
            }
            _ => 1.0 - x.abs(),
        };
        C64::new(0.0, kx * rx as f64).exp() * g1d_x(ry, x, one_minus_absx, jy)
    };

    // cosine substitution per subinterval: the endpoint 1/√ singularities
    // become analytic in t (kx − a = (b−a)sin²(πt/2), b − kx = (b−a)cos²(πt/2))
    let mut val = C64::new(0.0, 0.0);
    let mut err_total = 0.0;
    for w in edges.windows(2) {
        let (a, sa) = w[0];
        let (b, sb) = w[1];
        if b - a < 1e-14 {
            continue;
        }
        let g = |t: f64| {
            let h = 0.5 * pi * t;
            let (dka, dkb) = ((b - a) * h.sin().powi(2), (b - a) * h.cos().powi(2));
            let kx = if t < 0.5 { a + dka } else { b - dkb };
            let jac = (b - a) * 0.5 * pi * (pi * t).sin();
            let near = if t < 0.5 {
                sa.map(|s| (a, s, dka))
            } else {
                sb.map(|s| (b, s, -dkb))
            };
            let v = eval(kx, near) * jac;
            if v.re.is_finite() && v.im.is_finite() {
                v
            } else {
                C64::new(0.0, 0.0)
            }
        };
        let (v, e) = quad::integrate_c(g, 0.0, 1.0, &[], 1e-14, 1e-13, 2000);
        val += v;
        err_total += e;
    }
    assert!(err_total < 1e-10, "oracle quadrature error {err_total}");
    val / (2.0 * pi)
}
