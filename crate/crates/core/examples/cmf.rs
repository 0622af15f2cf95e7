//! Classifier as a moving average of class means versus a trained classifier.

use softmax_codes::ufm::{train_ufm, ClassifierRule, UfmConfig};

fn main() {
    for seed in 0..3 {
        let base = UfmConfig { seed, ..UfmConfig::new(10, 20, 10) };
        let trained = train_ufm(&base).unwrap();
        let cmf = train_ufm(&UfmConfig { classifier_rule: ClassifierRule::Cmf, ..base }).unwrap();
        println!(
            "seed {seed}: ncc trainable {:.3} cmf {:.3}   gnc3 trainable {:.2e} cmf {:.2e}",
            trained.report.ncc_accuracy, cmf.report.ncc_accuracy, trained.report.gnc3, cmf.report.gnc3
        );
    }
}
