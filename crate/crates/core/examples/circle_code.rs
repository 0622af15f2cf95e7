//! Solves for a softmax code on the circle and compares it with the evenly
//! spaced configuration.
//!
//!     cargo run --release --example circle_code -- 7

use softmax_codes::closed_forms::closed_form_optimum;
use softmax_codes::geometry::{detect_rattlers, DEFAULT_RATTLER_TOL};
use softmax_codes::solver::{solve_softmax_code, SolverConfig};

fn main() {
    let k: usize = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(7);
    let report = solve_softmax_code(&SolverConfig::new(2, k)).expect("solve");
    let (_, exact) = closed_form_optimum(2, k).unwrap();

    println!("K = {k}");
    println!("solver rho      {:.12}", report.achieved);
    println!("closed form rho {exact:.12}");

    let mut angles: Vec<f64> = report
        .best_config
        .columns()
        .map(|c| c[1].atan2(c[0]).to_degrees().rem_euclid(360.0))
        .collect();
    angles.sort_by(f64::total_cmp);
    let gaps: Vec<String> = angles
        .iter()
        .zip(angles.iter().cycle().skip(1))
        .map(|(a, b)| format!("{:.3}", (b - a).rem_euclid(360.0)))
        .collect();
    println!("angular gaps    {}", gaps.join(" "));
    println!("rattlers        {:?}", detect_rattlers(&report.best_config, DEFAULT_RATTLER_TOL));
}
