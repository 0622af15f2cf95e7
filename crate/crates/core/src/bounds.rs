//! Upper and lower bounds on the best achievable one-vs-rest distance for
//! `K` points on the sphere in `R^d`, evaluated through log-Gamma so that
//! large `d` does not overflow.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::{E, PI};

use crate::error::{Error, Result};
use crate::io::format_real;
use crate::solver::{solve_softmax_code, SolverConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginBounds {
    pub dim: usize,
    pub count: usize,
    pub lower: f64,
    pub upper: f64,
    /// `K ≥ √(2π√e·d)`; outside this regime the numbers are reported but unproven.
    pub applicable: bool,
}

impl MarginBounds {
    pub fn contains(&self, rho: f64, slack: f64) -> bool {
        self.lower - slack <= rho && rho <= self.upper + slack
    }
}

fn check(d: usize, k: usize) -> Result<()> {
    if d < 2 || k < 2 {
        return Err(Error::InvalidShape {
            dim: d,
            count: k,
            reason: "bounds need d >= 2 and K >= 2".into(),
        });
    }
    Ok(())
}

/// Smallest `K` for which the bounds are proven at dimension `d`, as a real number.
pub fn applicability_threshold(d: usize) -> f64 {
    (2.0 * PI * E.sqrt() * d as f64).sqrt()
}

/// `ln[√π/K · Γ((d+1)/2) / Γ(d/2 + 1)]`
fn log_covering_base(d: f64, k: f64) -> f64 {
    0.5 * PI.ln() - k.ln() + ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0 + 1.0)
}

/// `ln[2√π/K · Γ((d+1)/2) / Γ(d/2)]`
fn log_packing_base(d: f64, k: f64) -> f64 {
    2f64.ln() + 0.5 * PI.ln() - k.ln() + ln_gamma((d + 1.0) / 2.0) - ln_gamma(d / 2.0)
}

/// Covering-argument lower bound on the best one-vs-one distance.
pub fn one_vs_one_lower_bound(d: usize, k: usize) -> Result<f64> {
    check(d, k)?;
    let (df, kf) = (d as f64, k as f64);
    Ok((log_covering_base(df, kf) / (df - 1.0)).exp())
}

pub fn margin_bounds(d: usize, k: usize) -> Result<MarginBounds> {
    check(d, k)?;
    let (df, kf) = (d as f64, k as f64);
    let lower = 0.5 * (2.0 * log_covering_base(df, kf) / (df - 1.0)).exp();
    let upper = 2.0 * (log_packing_base(df, kf) / (df - 1.0)).exp();
    Ok(MarginBounds {
        dim: d,
        count: k,
        lower,
        upper,
        applicable: kf >= applicability_threshold(d),
    })
}

/// Gamma-free relaxations of [`margin_bounds`]: `(lower, upper)` with
/// `lower_relaxed ≤ lower` and `upper ≤ upper_relaxed`.
pub fn relaxed_margin_bounds(d: usize, k: usize) -> Result<(f64, f64)> {
    check(d, k)?;
    let (df, kf) = (d as f64, k as f64);
    let lower = 0.5 * (PI.sqrt() / (kf * (df / 2.0 + 1.0).sqrt())).powf(2.0 / (df - 1.0));
    let upper = 2.0 * (2.0 * (PI * (df + 1.0) / 2.0).sqrt() / kf).powf(1.0 / (df - 1.0));
    Ok((lower, upper))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub d: usize,
    pub lower: f64,
    pub upper: f64,
    pub rho: Option<f64>,
    pub applicable: bool,
}

/// One row of bounds per dimension. With `solver` set, each row also carries
/// the best one-vs-rest distance found by the multi-start solver; the
/// template's `dim` and `count` are overridden per row.
pub fn scan_dimensions(
    k: usize,
    dims: &[usize],
    solver: Option<&SolverConfig>,
) -> Result<Vec<ScanRow>> {
    if dims.is_empty() {
        return Err(Error::InvalidConfig("no dimensions to scan".into()));
    }
    dims.par_iter()
        .map(|&d| {
            let b = margin_bounds(d, k)?;
            let rho = match solver {
                Some(template) => {
                    let cfg = SolverConfig {
                        dim: d,
                        count: k,
                        ..template.clone()
                    };
                    Some(solve_softmax_code(&cfg)?.achieved)
                }
                None => None,
            };
            Ok(ScanRow {
                d,
                lower: b.lower,
                upper: b.upper,
                rho,
                applicable: b.applicable,
            })
        })
        .collect()
}

/// CSV rendering with header `d,lower,upper,rho` (empty `rho` when not solved).
pub fn scan_to_csv(rows: &[ScanRow]) -> String {
    let mut out = String::from("d,lower,upper,rho\n");
    for r in rows {
        let rho = r.rho.map(format_real).unwrap_or_default();
        out.push_str(&format!("{},{},{},{rho}\n", r.d, format_real(r.lower), format_real(r.upper)));
    }
    out
}
