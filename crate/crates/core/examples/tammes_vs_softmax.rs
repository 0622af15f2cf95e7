//! Runs both objectives on the same problem and reports each solution
//! under both distances.
//!
//!     cargo run --release --example tammes_vs_softmax -- 3 8

use softmax_codes::geometry::{rho_one_vs_one, rho_one_vs_rest};
use softmax_codes::solver::{solve_softmax_code, solve_tammes, SolverConfig};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|s| s.parse().ok()).collect();
    let (d, k) = match args[..] {
        [d, k, ..] => (d, k),
        _ => (3, 8),
    };
    let cfg = SolverConfig::new(d, k);
    let softmax = solve_softmax_code(&cfg).expect("softmax code");
    let tammes = solve_tammes(&cfg).expect("tammes");

    println!("d = {d}, K = {k}");
    println!("{:<14}{:>14}{:>14}", "solution", "one-vs-rest", "one-vs-one");
    for (name, r) in [("softmax code", &softmax), ("tammes", &tammes)] {
        println!(
            "{name:<14}{:>14.8}{:>14.8}",
            rho_one_vs_rest(&r.best_config),
            rho_one_vs_one(&r.best_config)
        );
    }
}
