//! Fixed-temperature cross-entropy solutions approach the hard-max code as
//! the temperature drops.

use softmax_codes::solver::verify_hardmax_convergence;

fn main() {
    let taus = [1.0, 0.5, 0.2, 0.1, 0.05, 0.02];
    let rows = verify_hardmax_convergence(3, 7, &taus, 16, 0).expect("sweep");
    println!("{:>6} {:>12} {:>12} {:>10}", "tau", "ce cos", "hardmax cos", "gap");
    for r in rows {
        println!(
            "{:>6} {:>12.6} {:>12.6} {:>10.6}",
            r.tau, r.ce_max_cosine, r.hardmax_reference, r.gap
        );
    }
}
