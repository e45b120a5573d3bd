use latbath::greens::{gamma, omega_brute, omega_exact};
use latbath::lattice::build_square;

fn main() {
    let sq = build_square(1.0, 1.0, 1.0).unwrap();
    let rho = [8.0, 2.0];
    let delta = -3.286;
    let om = omega_exact(&sq, 0, rho, delta).unwrap();
    let ga = gamma(&sq, 0, rho, delta).unwrap();
    println!("exact  omega {om:.10e}  gamma {ga:.10e}");
    for (etas, grid) in [
        (vec![4e-2, 2e-2, 1e-2], 4096usize),
        (vec![2e-2, 1e-2, 5e-3], 8192),
        (vec![1e-2, 5e-3, 2.5e-3], 16384),
    ] {
        let b = omega_brute(&sq, &[0], rho, delta, 0, &etas, grid);
        println!(
            "brute etas {:?} grid {}: omega {:.10e} gamma {:.10e} res {:.2e}",
            etas, grid, b.omega, b.gamma, b.residual
        );
    }
}
