//! Scalar quadrature and root-finding building blocks.
//!
//! Adaptive Gauss–Kronrod (G7,K15) with user-supplied split points carries
//! the 2D principal-value integrals; Gauss–Legendre nodes back the phase
//! function's sine transform.

/// 15-point Kronrod abscissae on [0,1] half (symmetric).
const XGK: [f64; 8] = [
    0.991455371120813,
    0.949107912342759,
    0.864864423359769,
    0.741531185599394,
    0.586087235467691,
    0.405845151377397,
    0.207784955007898,
    0.000000000000000,
];
/// Kronrod weights matching `XGK`.
const WGK: [f64; 8] = [
    0.022935322010529,
    0.063092092629979,
    0.104790010322250,
    0.140653259715525,
    0.169004726639267,
    0.190350578064785,
    0.204432940075298,
    0.209482141084728,
];
/// Embedded 7-point Gauss weights (odd Kronrod nodes).
const WG: [f64; 4] = [
    0.129484966168870,
    0.279705391489277,
    0.381830050505119,
    0.417959183673469,
];

/// One Gauss–Kronrod panel; returns (integral, error estimate).
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = WGK[7] * fc;
    let mut resg = WG[3] * fc;
    let mut resabs = resk.abs();
    for j in 0..7 {
        let x = h * XGK[j];
        let f1 = f(c - x);
        let f2 = f(c + x);
        resk += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            resg += WG[j / 2] * (f1 + f2);
        }
    }
    let integral = resk * h;
    let err = ((resk - resg) * h).abs();
    // sharpen the estimate the way QUADPACK does
    let resasc = resabs * h.abs();
    let err = if resasc != 0.0 && err != 0.0 {
        resasc.min(err * (200.0 * err / resasc).sqrt())
    } else {
        err
    };
    (integral, err)
}

/// Adaptive 1D integration of `f` over `[a, b]`, pre-split at `splits`
/// (interior points where the integrand is singular or kinked).
/// Bisects the worst panel until the summed error estimate is below
/// `tol_abs + tol_rel·|I|` or `max_panels` is reached.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    splits: &[f64],
    tol_abs: f64,
    tol_rel: f64,
    max_panels: usize,
) -> (f64, f64) {
    let mut edges: Vec<f64> = vec![a];
    for &s in splits {
        if s > a + 1e-14 && s < b - 1e-14 {
            edges.push(s);
        }
    }
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup_by(|x, y| (*x - *y).abs() < 1e-14);

    // (neg error for max-heap behaviour via sort, a, b, integral)
    let mut panels: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in edges.windows(2) {
        let (i, e) = gk15(&f, w[0], w[1]);
        panels.push((e, w[0], w[1], i));
    }
    loop {
        let total: f64 = panels.iter().map(|p| p.3).sum();
        let err: f64 = panels.iter().map(|p| p.0).sum();
        if err <= tol_abs + tol_rel * total.abs() || panels.len() >= max_panels {
            // a non-finite value must not look converged to the caller
            let err = if total.is_finite() && err.is_finite() { err } else { f64::INFINITY };
            return (total, err);
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .map(|(i, _)| i)
            .unwrap();
        let (_, pa, pb, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        let (i1, e1) = gk15(&f, pa, m);
        let (i2, e2) = gk15(&f, m, pb);
        panels.push((e1, pa, m, i1));
        panels.push((e2, m, pb, i2));
    }
}

/// Complex-valued counterpart of [`integrate`]: one adaptive pass drives
/// both real and imaginary parts.
pub fn integrate_c<F: Fn(f64) -> num_complex::Complex<f64>>(
    f: F,
    a: f64,
    b: f64,
    splits: &[f64],
    tol_abs: f64,
    tol_rel: f64,
    max_panels: usize,
) -> (num_complex::Complex<f64>, f64) {
    type C = num_complex::Complex<f64>;
    let gk = |a: f64, b: f64| -> (C, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut resk = fc * WGK[7];
        let mut resg = fc * WG[3];
        for j in 0..7 {
            let x = h * XGK[j];
            let s = f(c - x) + f(c + x);
            resk += s * WGK[j];
            if j % 2 == 1 {
                resg += s * WG[j / 2];
            }
        }
        (resk * h, ((resk - resg) * h).norm())
    };
    let mut edges: Vec<f64> = vec![a];
    for &s in splits {
        if s > a + 1e-14 && s < b - 1e-14 {
            edges.push(s);
        }
    }
    edges.push(b);
    edges.sort_by(|x, y| x.partial_cmp(y).unwrap());
    edges.dedup_by(|x, y| (*x - *y).abs() < 1e-14);
    let mut panels: Vec<(f64, f64, f64, C)> = Vec::new();
    for w in edges.windows(2) {
        let (i, e) = gk(w[0], w[1]);
        panels.push((e, w[0], w[1], i));
    }
    loop {
        let total: C = panels.iter().map(|p| p.3).sum();
        let err: f64 = panels.iter().map(|p| p.0).sum();
        if err <= tol_abs + tol_rel * total.norm() || panels.len() >= max_panels {
            // a non-finite value must not look converged to the caller
            let err = if total.is_finite() && err.is_finite() { err } else { f64::INFINITY };
            return (total, err);
        }
        let worst = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .0.total_cmp(&y.1 .0))
            .map(|(i, _)| i)
            .unwrap();
        let (_, pa, pb, _) = panels.swap_remove(worst);
        let m = 0.5 * (pa + pb);
        let (i1, e1) = gk(pa, m);
        let (i2, e2) = gk(m, pb);
        panels.push((e1, pa, m, i1));
        panels.push((e2, m, pb, i2));
    }
}

/// Gauss–Legendre nodes and weights on [-1, 1] via Newton iteration on
/// the Legendre recurrence.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        // Tricomi initial guess
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        loop {
            let mut p0 = 1.0;
            let mut p1 = 0.0;
            for j in 0..n {
                let p2 = p1;
                p1 = p0;
                p0 = ((2 * j + 1) as f64 * z * p1 - j as f64 * p2) / (j as f64 + 1.0);
            }
            let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
            let dz = p0 / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                let dp = n as f64 * (z * p0 - p1) / (z * z - 1.0);
                x[i] = -z;
                x[n - 1 - i] = z;
                w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
                w[n - 1 - i] = w[i];
                break;
            }
        }
    }
    (x, w)
}

/// Bisection refined by a secant step; `f(a)` and `f(b)` must bracket a root.
pub fn find_root<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> Option<f64> {
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa * fb > 0.0 {
        return None;
    }
    for _ in 0..200 {
        // secant candidate, clamped into the bracket
        let mut m = b - fb * (b - a) / (fb - fa);
        if !(m > a.min(b) && m < a.max(b)) {
            m = 0.5 * (a + b);
        }
        let fm = f(m);
        if fm == 0.0 || (b - a).abs() < tol {
            return Some(m);
        }
        if fa * fm < 0.0 {
            b = m;
            fb = fm;
        } else {
            a = m;
            fa = fm;
        }
        if (b - a).abs() < tol {
            return Some(0.5 * (a + b));
        }
    }
    Some(0.5 * (a + b))
}

/// Scan `[a, b]` on `n` uniform cells and return every sign-change root of `f`.
pub fn scan_roots<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize, tol: f64) -> Vec<f64> {
    let mut roots = Vec::new();
    let h = (b - a) / n as f64;
    let mut x0 = a;
    let mut f0 = f(x0);
    for i in 1..=n {
        let x1 = a + i as f64 * h;
        let f1 = f(x1);
        if f0 == 0.0 {
            roots.push(x0);
        } else if f0 * f1 < 0.0 {
            if let Some(r) = find_root(&f, x0, x1, tol) {
                roots.push(r);
            }
        }
        x0 = x1;
        f0 = f1;
    }
    if f0 == 0.0 {
        roots.push(x0);
    }
    roots
}
