//! Validation of the Green's function evaluators against the independent
//! 1D-reduction oracle for the square lattice.

mod common;

use common::{g1d, square_exact, C64};
use latbath::greens::{
    gamma_from, omega_brute, omega_exact, stationary_phase, surface_quadrature, tube_approximant,
};
use latbath::lattice::build_square;
use latbath::levelset;

#[test]
fn oracle_satisfies_resolvent_identity() {
    // (Δ − H)G = 1 on the chain: Δ·g(n) − J g(n−1) − J g(n+1) = δ_{n0}
    for e in [0.3, -1.7, 2.5, -3.1] {
        for n in [0i64, 1, 3] {
            let lhs = g1d(n, e, 1.0) * e - g1d(n - 1, e, 1.0) - g1d(n + 1, e, 1.0);
            let rhs = if n == 0 { 1.0 } else { 0.0 };
            assert!((lhs - rhs).norm() < 1e-12, "E={e} n={n}: {lhs}");
        }
    }
}

#[test]
fn gamma_matches_oracle() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let set = levelset::extract(&sq, 0, -1.0, 512).unwrap();
    let s = surface_quadrature(&sq, &set, 0, 2048);
    for (rx, ry) in [(3i64, 3i64), (7, 7), (5, 2), (0, 4)] {
        let exact = square_exact(1.0, 1.0, rx, ry, -1.0);
        let (g, _) = gamma_from(&s, [rx as f64, ry as f64]);
        let want = -2.0 * exact.im;
        assert!((g - want).abs() < 1e-9, "({rx},{ry}): Γ={g} vs {want}");
    }
}

#[test]
fn omega_ibp_matches_oracle() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    for (rx, ry) in [(3i64, 3i64), (5, 2)] {
        let exact = square_exact(1.0, 1.0, rx, ry, -1.0);
        let om = omega_exact(&sq, 0, [rx as f64, ry as f64], -1.0).unwrap();
        assert!((om - exact.re).abs() < 1e-8, "({rx},{ry}): Ω={om} vs {}", exact.re);
    }
    // anisotropic model, separation along x
    let sq2 = build_square(1.0, 2.0, 1.0).unwrap();
    let exact = square_exact(1.0, 2.0, 5, 0, -1.0);
    let om = omega_exact(&sq2, 0, [5.0, 0.0], -1.0).unwrap();
    assert!((om - exact.re).abs() < 1e-8, "aniso: Ω={om} vs {}", exact.re);
}

#[test]
fn brute_consistent_with_gamma_and_omega() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let b = omega_brute(&sq, &[0], [3.0, 0.0], -1.0, 0, &[4e-2, 2e-2, 1e-2], 4096);
    let exact = square_exact(1.0, 1.0, 3, 0, -1.0);
    assert!(
        (b.gamma + 2.0 * exact.im).abs() / (2.0 * exact.im).abs() < 1e-4,
        "brute Γ={} vs {}",
        b.gamma,
        -2.0 * exact.im
    );
    assert!(
        (b.omega - exact.re).abs() / exact.re.abs() < 1e-4,
        "brute Ω={} vs {}",
        b.omega,
        exact.re
    );
}

#[test]
fn brute_pv_exists_at_origin() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let b = omega_brute(&sq, &[0], [0.0, 0.0], -1.0, 0, &[4e-2, 2e-2, 1e-2], 4096);
    assert!(b.omega.is_finite() && b.residual < 1e-2 * b.omega.abs().max(0.1));
}

#[test]
fn exact_reciprocity() {
    // G(ρ) = G(−ρ): time reversal of the real-coupling bath
    let g1 = square_exact(1.0, 1.0, 4, 2, -1.0);
    let g2 = square_exact(1.0, 1.0, -4, -2, -1.0);
    assert!((g1 - g2).norm() < 1e-11);
}

#[test]
fn tube_beats_stationary_tenfold_in_envelope() {
    // the tube error oscillates (interference of evanescent corrections),
    // so the 10× margin holds for the envelope: geometric mean over n,
    // with a 3× floor at every single n
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let eps = 0.8 / 1.1547005383792517; // 0.8/max|K| on this contour
    let mut log_ratio = 0.0;
    let ns = [15i64, 20, 25, 30, 40];
    for &n in &ns {
        let rho = [n as f64, n as f64];
        let exact = square_exact(1.0, 1.0, n, n, -1.0);
        let gt = tube_approximant(&sq, &[0], rho, -1.0, Some(eps), 4096).unwrap();
        let gs = stationary_phase(&sq, &[0], rho, -1.0).unwrap();
        let et = (gt.g() - exact).norm();
        let es = (gs.g() - exact).norm();
        assert!(et * 3.0 < es, "n={n}: tube {et} vs stationary {es}");
        log_ratio += (es / et).ln();
    }
    assert!(
        log_ratio / ns.len() as f64 > 10f64.ln(),
        "mean ratio {}",
        (log_ratio / ns.len() as f64).exp()
    );
}

#[test]
fn tube_error_decays_superpolynomially() {
    // log-error concave down vs n on the diagonal: faster than any tested power
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let mut errs = Vec::new();
    for n in [6i64, 12, 24] {
        let rho = [n as f64, n as f64];
        let exact = square_exact(1.0, 1.0, n, n, -1.0);
        let gt = tube_approximant(&sq, &[0], rho, -1.0, None, 4096).unwrap();
        errs.push(((gt.g() - exact).norm() / exact.norm()).ln());
    }
    // ratio of successive log-error drops grows (concavity) and exceeds 2^4
    let d1 = errs[0] - errs[1];
    let d2 = errs[1] - errs[2];
    assert!(d1 > 0.0 && d2 > d1, "errors {errs:?}");
    assert!(d2 > 4.0 * 2f64.ln(), "slower than n^4 between n=12 and 24: {errs:?}");
}

#[test]
fn stationary_error_first_order_and_amplitude_scaling() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let rel = |n: i64| -> f64 {
        let rho = [n as f64, n as f64];
        let exact = square_exact(1.0, 1.0, n, n, -1.0);
        let gs = stationary_phase(&sq, &[0], rho, -1.0).unwrap();
        (gs.g() - exact).norm() / exact.norm()
    };
    let e20 = rel(20);
    let e40 = rel(40);
    // one extra power of 1/ρ beyond the leading term
    let slope = (e40 / e20).ln() / 2f64.ln();
    assert!((-slope - 1.0).abs() < 0.3, "error slope {slope}");
    // |G| itself scales as ρ^{−1/2}
    let g40 = stationary_phase(&sq, &[0], [40.0, 40.0], -1.0).unwrap().g().norm();
    let g80 = stationary_phase(&sq, &[0], [80.0, 80.0], -1.0).unwrap().g().norm();
    assert!((g40 / g80 - 2f64.sqrt()).abs() < 0.02 * 2f64.sqrt(), "{}", g40 / g80);
}

#[test]
fn tube_epsilon_bound_enforced() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let err = tube_approximant(&sq, &[0], [10.0, 10.0], -1.0, Some(5.0), 1024);
    assert!(matches!(err, Err(latbath::Error::EpsilonTooLarge { .. })));
}

#[test]
fn stationary_refuses_ghost_direction() {
    // square(1,2), Δ=−J: x̂ lies beyond the caustic — no resonant v̂
    let sq = build_square(1.0, 2.0, 1.0).unwrap();
    let err = stationary_phase(&sq, &[0], [10.0, 0.0], -1.0);
    assert!(matches!(err, Err(latbath::Error::NoResonantDirection)), "{err:?}");
}

#[test]
fn tube_imag_part_reproduces_gamma_at_large_rho() {
    // Π → Heaviside: −2·imag(tube) → Γ
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let set = levelset::extract(&sq, 0, -1.0, 512).unwrap();
    let s = surface_quadrature(&sq, &set, 0, 4096);
    for n in [20i64, 40] {
        let rho = [n as f64, n as f64];
        let gt = tube_approximant(&sq, &[0], rho, -1.0, None, 4096).unwrap();
        let (gam, _) = gamma_from(&s, rho);
        assert!(
            (gt.gamma - gam).abs() < 1e-10 * gam.abs().max(1.0),
            "n={n}: tube Γ={} vs {gam}",
            gt.gamma
        );
    }
}

#[test]
fn greens_value_split_identity() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let gv = tube_approximant(&sq, &[0], [12.0, 12.0], -1.0, None, 2048).unwrap();
    let g: C64 = gv.g();
    assert_eq!(g.re, gv.omega);
    assert_eq!(g.im, -0.5 * gv.gamma);
}
