//! With several features per class, the hard-max problem collapses every
//! class onto a single direction.

use softmax_codes::geometry::optimal_feature_direction;
use softmax_codes::solver::{solve_softmax_code, SolverConfig};

fn main() {
    let mut cfg = SolverConfig::new(2, 5);
    cfg.samples_per_class = 3;
    let report = solve_softmax_code(&cfg).unwrap();
    let h = report.best_features.as_ref().unwrap();

    for k in 0..5 {
        let dir = optimal_feature_direction(&report.best_config, k).unwrap();
        let samples: Vec<&[f64]> = (0..h.len())
            .filter(|&i| h.labels[i] == k)
            .map(|i| h.features.column(i))
            .collect();
        let spread = samples
            .iter()
            .map(|s| ((s[0] - dir.as_slice()[0]).powi(2) + (s[1] - dir.as_slice()[1]).powi(2)).sqrt())
            .fold(0.0, f64::max);
        println!("class {k}: direction {:>8.5?}  max distance of its samples {spread:.2e}", dir.as_slice());
    }
}
