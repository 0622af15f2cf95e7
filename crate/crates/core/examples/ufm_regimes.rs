//! Unconstrained features on the sphere versus with weight decay, at
//! d = 2 and K = 30. Length dispersion only shows up without the sphere.

use softmax_codes::io::write_trace;
use softmax_codes::ufm::{train_ufm, UfmConfig};

fn main() {
    let sphere = train_ufm(&UfmConfig::new(2, 30, 5)).unwrap();
    let wd = train_ufm(&UfmConfig { iters: 20_000, ..UfmConfig::weight_decay(2, 30, 5, 1e-3) }).unwrap();

    for (name, out) in [("sphere", &sphere), ("weight decay", &wd)] {
        let r = &out.report;
        println!(
            "{name:<13} gnc1 {:.2e}  gnc2 {:.3e}  gnc3 {:.2e}  ncc {:.3}  length cv {:.3e}",
            r.gnc1, r.gnc2, r.gnc3, r.ncc_accuracy, r.norm_ratio_cv
        );
    }
    if std::env::args().any(|a| a == "--trace") {
        write_trace(std::io::stdout(), &sphere.trace).unwrap();
    }
}
