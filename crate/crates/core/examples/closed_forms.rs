//! Known optima for small problems, checked against the distance routine.

use softmax_codes::closed_forms::{closed_form_kind, closed_form_optimum};
use softmax_codes::geometry::rho_one_vs_rest;

fn main() {
    let cases = [(2, 5), (2, 12), (3, 4), (5, 6), (9, 10), (3, 5), (3, 6), (4, 8), (3, 12)];
    println!("{:>3} {:>3}  {:<14} {:>14} {:>14}", "d", "K", "family", "rho", "measured");
    for (d, k) in cases {
        match (closed_form_kind(d, k), closed_form_optimum(d, k)) {
            (Some(kind), Some((config, rho))) => println!(
                "{d:>3} {k:>3}  {:<14} {rho:>14.10} {:>14.10}",
                format!("{kind:?}"),
                rho_one_vs_rest(&config)
            ),
            _ => println!("{d:>3} {k:>3}  none"),
        }
    }
}
