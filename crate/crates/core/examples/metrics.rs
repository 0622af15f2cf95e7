//! Collapse metrics on noisy features around a simplex frame, for shrinking noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use softmax_codes::closed_forms::simplex_etf;
use softmax_codes::metrics::{gnc_report, LabeledFeatureSet};

fn main() {
    let (d, k, n) = (4, 5, 50);
    let w = simplex_etf(d, k).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    println!("{:>7} {:>12} {:>10} {:>8}", "sigma", "gnc1", "gnc3", "ncc");
    for sigma in [1.0, 0.3, 0.1, 0.01] {
        let noise = Normal::new(0.0, sigma).unwrap();
        let samples: Vec<(usize, Vec<f64>)> = (0..k)
            .flat_map(|c| std::iter::repeat_n(c, n))
            .map(|c| (c, w.column(c).iter().map(|x| x + noise.sample(&mut rng)).collect()))
            .collect();
        let fs = LabeledFeatureSet::from_vectors(k, &samples).unwrap();
        let r = gnc_report(w.matrix(), &fs, Some(k as f64 / (k as f64 - 1.0))).unwrap();
        println!("{sigma:>7} {:>12.4e} {:>10.4e} {:>8.3}", r.gnc1, r.gnc3, r.ncc_accuracy);
    }
}
