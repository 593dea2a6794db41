//! Run the analytic verification suites and print every check.
//!
//! Covers gradient sensitivity of the two normalization paths, the mixed
//! scale-collapse grid with its closed form, the Beta sampler against
//! quadrature, primitive and end-to-end gradient checks, and the router
//! op-count accounting.
//!
//! Run with `cargo run --release --example verify_claims`.

use pulse::verify::*;
use pulse::Rng;

fn print_rows(rows: &[CheckRow]) {
    for r in rows {
        println!(
            "  [{}] {:<45} observed {:<12.6} ({})",
            if r.pass { "PASS" } else { "FAIL" },
            r.check,
            r.observed,
            r.criterion
        );
    }
}

fn main() {
    println!("gradient sensitivity under a dominant anchor (sigma_A/sigma_R = 100):");
    let mut rng = Rng::new(2024);
    let report = check_prop31(&mut rng, 32, 100.0, 1.0, 50);
    println!(
        "  median |J| standard path {:.4}, residual-only path {:.4}, ratio {:.1}",
        report.grad_norm_std_path, report.grad_norm_ours_path, report.ratio
    );
    print_rows(&prop31_rows(&report));

    println!("\nmixed-scale stability grid (measured vs closed form):");
    let mut rng = Rng::new(2024);
    let cells = check_thm32(
        &mut rng,
        &[(1.0, 1.0), (2.0, 1.0)],
        &[-1.0, -0.5, 0.0, 0.5, 1.0],
        &[0.25, 0.5, 0.75],
        2048,
        100,
    );
    let mut failed = 0;
    for c in &cells {
        if !c.pass {
            failed += 1;
        }
    }
    println!("  {} cells, {} failures", cells.len(), failed);
    let collapse = run_thm32_cell(&mut rng, 2.0, 1.0, -1.0, 1.0 / 3.0, 2048, 100);
    println!(
        "  exact collapse cell: naive scale {:.2e}, interpolated scale {} (floor min = 1)",
        collapse.min_sigma_naive, collapse.sigma_ours
    );

    println!("\nBeta(0.15, 0.15) sampler vs quadrature:");
    print_rows(&beta_rows(2024));

    println!("\ngradient checks (finite differences, h = 1e-6):");
    print_rows(&gradcheck_rows(2024));
    print_rows(&[revin_cross_check(2024)]);

    println!("\nrouter complexity accounting:");
    print_rows(&complexity_rows(24, 16, &[96, 192, 336, 720], 96, &[4, 8, 12, 24]));
}
