//! Margin bounds across feature dimensions at a fixed number of classes,
//! printed as CSV. Pass `--solve` to add solver distances (slow for large K).
//!
//!     cargo run --release --example bounds_scan -- 100 --solve

use softmax_codes::bounds::{applicability_threshold, scan_dimensions, scan_to_csv};
use softmax_codes::solver::SolverConfig;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let k: usize = args.iter().find_map(|a| a.parse().ok()).unwrap_or(100);
    let solve = args.iter().any(|a| a == "--solve");

    let dims = [4, 8, 16, 32, 64];
    let mut template = SolverConfig::new(2, k);
    template.restarts = 4;
    let rows = scan_dimensions(k, &dims, solve.then_some(&template)).expect("scan");

    print!("{}", scan_to_csv(&rows));
    for r in rows.iter().filter(|r| !r.applicable) {
        eprintln!("d={} needs K >= {:.1} for the bounds to hold", r.d, applicability_threshold(r.d));
    }
}
