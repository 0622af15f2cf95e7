//! Known optimal softmax codes: the uniform circle (`d = 2`), the simplex
//! ETF (`K ≤ d + 1`) and cross-polytope subsets (`d + 1 < K ≤ 2d`).

use nalgebra::DMatrix;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::geometry::SphericalConfiguration;

/// `K` equally spaced points on the unit circle, rotated by `phase` radians.
pub fn uniform_circle(k: usize, phase: f64) -> Result<SphericalConfiguration> {
    if k < 2 {
        return Err(Error::InvalidShape {
            dim: 2,
            count: k,
            reason: "uniform circle needs K >= 2".into(),
        });
    }
    let m = DMatrix::from_fn(2, k, |r, c| {
        let t = 2.0 * PI * c as f64 / k as f64 + phase;
        if r == 0 {
            t.cos()
        } else {
            t.sin()
        }
    });
    SphericalConfiguration::from_matrix(m)
}

/// Simplex equiangular tight frame of `K ≤ d + 1` vectors in `R^d`.
///
/// The centered identity `I − 11ᵀ/K` has rank `K − 1`; its first `K − 1`
/// columns are orthonormalized with Gram–Schmidt and the centered vertices
/// are expressed in that basis, scaled by `√(K/(K−1))` and zero-padded to `d`.
pub fn simplex_etf(d: usize, k: usize) -> Result<SphericalConfiguration> {
    if k < 2 || d == 0 || k > d + 1 {
        return Err(Error::InvalidShape {
            dim: d,
            count: k,
            reason: "simplex ETF needs 2 <= K <= d + 1".into(),
        });
    }
    let kf = k as f64;
    let centered = DMatrix::from_fn(k, k, |r, c| if r == c { 1.0 } else { 0.0 } - 1.0 / kf);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    for c in 0..(k - 1) {
        let mut v: Vec<f64> = centered.column(c).iter().copied().collect();
        for b in &basis {
            let proj: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }

    let scale = (kf / (kf - 1.0)).sqrt();
    let m = DMatrix::from_fn(d, k, |r, c| {
        if r < k - 1 {
            scale
                * basis[r]
                    .iter()
                    .zip(centered.column(c).iter())
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
        } else {
            0.0
        }
    });
    SphericalConfiguration::from_matrix(m)
}

/// `K` signed coordinate vectors: `+e_1, …, +e_d` then `−e_1, −e_2, …`.
pub fn cross_polytope_subset(d: usize, k: usize) -> Result<SphericalConfiguration> {
    if k <= d + 1 || k > 2 * d {
        return Err(Error::InvalidShape {
            dim: d,
            count: k,
            reason: "cross-polytope subset needs d + 1 < K <= 2d".into(),
        });
    }
    let m = DMatrix::from_fn(d, k, |r, c| {
        if c < d {
            if r == c {
                1.0
            } else {
                0.0
            }
        } else if r == c - d {
            -1.0
        } else {
            0.0
        }
    });
    SphericalConfiguration::from_matrix(m)
}

/// Which closed-form family applies to `(d, K)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormKind {
    Circle,
    SimplexEtf,
    CrossPolytope,
}

/// Optimal configuration and its one-vs-rest distance, when one is known.
pub fn closed_form_optimum(d: usize, k: usize) -> Option<(SphericalConfiguration, f64)> {
    let kind = closed_form_kind(d, k)?;
    let kf = k as f64;
    let built = match kind {
        ClosedFormKind::Circle => {
            uniform_circle(k, 0.0).map(|c| (c, 1.0 - (2.0 * PI / kf).cos()))
        }
        ClosedFormKind::SimplexEtf => simplex_etf(d, k).map(|c| (c, kf / (kf - 1.0))),
        ClosedFormKind::CrossPolytope => cross_polytope_subset(d, k).map(|c| (c, 1.0)),
    };
    built.ok()
}

pub fn closed_form_kind(d: usize, k: usize) -> Option<ClosedFormKind> {
    if d == 0 || k < 2 {
        None
    } else if d == 2 {
        Some(ClosedFormKind::Circle)
    } else if k <= d + 1 {
        Some(ClosedFormKind::SimplexEtf)
    } else if k <= 2 * d {
        Some(ClosedFormKind::CrossPolytope)
    } else {
        None
    }
}
