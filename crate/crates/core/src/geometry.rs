//! Point configurations on the unit sphere and the distances that define
//! softmax codes and Tammes configurations.
//!
//! A [`SphericalConfiguration`] stores `K` unit vectors of `R^d` as the columns
//! of a `d × K` matrix, i.e. a point of the oblique manifold `OB(d, K)`.
//!
//! The one-vs-rest distance of column `k` is the Euclidean distance from
//! `w_k` to the convex hull of the remaining columns. It is computed with an
//! active-set minimum-norm-point method ([`min_norm_projection`]) that
//! terminates with explicit simplex weights and an optimality certificate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tolerance on `| ‖v‖ − 1 |` accepted by [`SphericalConfiguration::is_normalized`].
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Residual length below which a vector is considered inside the hull of the others.
pub const DEGENERATE_RESIDUAL: f64 = 1e-8;

/// Default relative tolerance used by [`detect_rattlers`].
pub const DEFAULT_RATTLER_TOL: f64 = 1e-4;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A direction in `R^d`, stored with unit Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector(Vec<f64>);

impl UnitVector {
    /// Normalizes `coords`. Fails on empty, non-finite or zero input.
    pub fn new(mut coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::InvalidShape {
                dim: 0,
                count: 1,
                reason: "a unit vector needs d >= 1".into(),
            });
        }
        let n = norm(&coords);
        if !n.is_finite() || n == 0.0 {
            return Err(Error::InvalidConfig(format!(
                "cannot normalize a vector of norm {n}"
            )));
        }
        coords.iter_mut().for_each(|c| *c /= n);
        Ok(Self(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for UnitVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `K ≥ 2` unit vectors in `R^d`, stored as the columns of a `d × K` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalConfiguration {
    matrix: DMatrix<f64>,
}

impl SphericalConfiguration {
    /// Builds a configuration from a `d × K` matrix, normalizing every column.
    pub fn from_matrix(mut matrix: DMatrix<f64>) -> Result<Self> {
        let (dim, count) = matrix.shape();
        if dim == 0 || count < 2 {
            return Err(Error::InvalidShape {
                dim,
                count,
                reason: "need d >= 1 and K >= 2".into(),
            });
        }
        for (k, mut col) in matrix.column_iter_mut().enumerate() {
            let n = col.norm();
            if !n.is_finite() || n == 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "column {k} has norm {n} and cannot be normalized"
                )));
            }
            col /= n;
        }
        Ok(Self { matrix })
    }

    /// Builds a configuration from a list of vectors (one per column).
    pub fn from_vectors<V: AsRef<[f64]>>(vectors: &[V]) -> Result<Self> {
        let dim = vectors.first().map_or(0, |v| v.as_ref().len());
        for v in vectors {
            if v.as_ref().len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: v.as_ref().len(),
                });
            }
        }
        let data: Vec<f64> = vectors.iter().flat_map(|v| v.as_ref().to_vec()).collect();
        Self::from_matrix(DMatrix::from_vec(dim, vectors.len(), data))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn count(&self) -> usize {
        self.matrix.ncols()
    }

    /// Column `k` as a contiguous slice.
    pub fn column(&self, k: usize) -> &[f64] {
        let d = self.dim();
        &self.matrix.as_slice()[k * d..(k + 1) * d]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.matrix.as_slice().chunks_exact(self.dim())
    }

    pub fn vector(&self, k: usize) -> UnitVector {
        UnitVector(self.column(k).to_vec())
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.matrix
    }

    /// `K × K` matrix of pairwise inner products.
    pub fn gram(&self) -> DMatrix<f64> {
        self.matrix.transpose() * &self.matrix
    }

    /// Largest off-diagonal inner product.
    pub fn max_pairwise_cosine(&self) -> f64 {
        let k = self.count();
        let mut best = f64::NEG_INFINITY;
        for i in 0..k {
            for j in (i + 1)..k {
                best = best.max(dot(self.column(i), self.column(j)));
            }
        }
        best
    }

    pub fn is_normalized(&self) -> bool {
        self.columns()
            .all(|c| (norm(c) - 1.0).abs() <= UNIT_NORM_TOL)
    }

    /// Applies `q` (a `d × d` matrix) to every column.
    pub fn transform(&self, q: &DMatrix<f64>) -> Result<Self> {
        if q.shape() != (self.dim(), self.dim()) {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.nrows(),
            });
        }
        Self::from_matrix(q * &self.matrix)
    }

    /// Reorders columns so that new column `i` is old column `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.count() {
            return Err(Error::ShapeMismatch(format!(
                "permutation of length {} for {} columns",
                perm.len(),
                self.count()
            )));
        }
        let cols: Vec<&[f64]> = perm.iter().map(|&p| self.column(p)).collect();
        Self::from_vectors(&cols)
    }
}

/// Euclidean projection of a query point onto a convex hull.
#[derive(Debug, Clone, PartialEq)]
pub struct MinNormResult {
    pub projection: Vec<f64>,
    /// Convex-combination weights, one per hull generator.
    pub weights: Vec<f64>,
    pub distance: f64,
}

impl MinNormResult {
    /// Largest value of `⟨q − x, p − x⟩` over the generators `p`; non-positive at the optimum.
    pub fn certificate<P: AsRef<[f64]>>(&self, query: &[f64], hull: &[P]) -> f64 {
        let r: Vec<f64> = query
            .iter()
            .zip(&self.projection)
            .map(|(q, x)| q - x)
            .collect();
        hull.iter()
            .map(|p| {
                p.as_ref()
                    .iter()
                    .zip(&self.projection)
                    .zip(&r)
                    .map(|((p, x), r)| r * (p - x))
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Minimizer of `‖Σ α_i p_i‖` subject to `Σ α_i = 1` over the given points.
/// Returns `None` when the points are affinely dependent.
fn affine_min_norm(points: &[&[f64]]) -> Option<Vec<f64>> {
    let s = points.len();
    if s == 1 {
        return Some(vec![1.0]);
    }
    let d = points[0].len();
    let base = points[0];
    // y = p_0 + D β with D = [p_i − p_0]; least squares on D β = −p_0
    let diffs = DMatrix::from_fn(d, s - 1, |r, c| points[c + 1][r] - base[r]);
    let rhs = DVector::from_iterator(d, base.iter().map(|v| -v));
    let svd = diffs.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if s - 1 > d || smin <= 1e-11 * smax.max(f64::MIN_POSITIVE) {
        return None;
    }
    let beta = svd.solve(&rhs, 0.0).ok()?;
    let mut alpha = Vec::with_capacity(s);
    alpha.push(1.0 - beta.sum());
    alpha.extend(beta.iter().copied());
    Some(alpha)
}

/// Projects `query` onto the convex hull of `hull_points`.
///
/// Wolfe-style active-set minimum-norm-point iteration on the translated
/// generators `p_j − query`. The returned weights are nonnegative, sum to one,
/// and reproduce `projection`. On return no generator violates the
/// first-order optimality condition by more than `1e-12 · max ‖p_j − q‖²`.
pub fn min_norm_projection<P: AsRef<[f64]>>(
    query: &[f64],
    hull_points: &[P],
) -> Result<MinNormResult> {
    if hull_points.is_empty() {
        return Err(Error::EmptyHull);
    }
    let d = query.len();
    for p in hull_points {
        if p.as_ref().len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: p.as_ref().len(),
            });
        }
    }
    let m = hull_points.len();
    let shifted: Vec<Vec<f64>> = hull_points
        .iter()
        .map(|p| p.as_ref().iter().zip(query).map(|(a, b)| a - b).collect())
        .collect();
    let sq_norms: Vec<f64> = shifted.iter().map(|p| dot(p, p)).collect();
    let scale = sq_norms.iter().cloned().fold(0.0, f64::max);

    let start = argmin(&sq_norms);
    let mut active = vec![start];
    let mut lambda = vec![1.0];
    let mut x = shifted[start].clone();

    if scale > 0.0 {
        let major_tol = 1e-12 * scale;
        let zero_tol = 1e-14;
        let max_major = 20 * m + 50;
        'major: for _ in 0..max_major {
            let xx = dot(&x, &x);
            let inner: Vec<f64> = shifted.iter().map(|p| dot(&x, p)).collect();
            let j = argmin(&inner);
            if inner[j] >= xx - major_tol || active.contains(&j) {
                break;
            }
            active.push(j);
            lambda.push(0.0);
            loop {
                let pts: Vec<&[f64]> = active.iter().map(|&i| shifted[i].as_slice()).collect();
                let Some(alpha) = affine_min_norm(&pts) else {
                    active.pop();
                    lambda.pop();
                    break 'major;
                };
                if alpha.iter().all(|&a| a > zero_tol) {
                    lambda = alpha;
                    x = combine(&shifted, &active, &lambda, d);
                    break;
                }
                // step from lambda toward alpha until the first weight hits zero
                let mut theta = 1.0;
                for (l, a) in lambda.iter().zip(&alpha) {
                    if *a <= zero_tol {
                        let t = l / (l - a);
                        if t < theta {
                            theta = t;
                        }
                    }
                }
                for (l, a) in lambda.iter_mut().zip(&alpha) {
                    *l = (1.0 - theta) * *l + theta * a;
                }
                let mut i = 0;
                while i < active.len() {
                    if lambda[i] <= zero_tol {
                        active.remove(i);
                        lambda.remove(i);
                    } else {
                        i += 1;
                    }
                }
                if active.is_empty() {
                    // cannot happen with exact arithmetic; restart from the best vertex
                    active.push(j);
                    lambda.push(1.0);
                }
                let total: f64 = lambda.iter().sum();
                lambda.iter_mut().for_each(|l| *l /= total);
                x = combine(&shifted, &active, &lambda, d);
            }
        }
    }

    let mut weights = vec![0.0; m];
    for (&i, &l) in active.iter().zip(&lambda) {
        weights[i] = l;
    }
    let projection: Vec<f64> = x.iter().zip(query).map(|(a, q)| a + q).collect();
    Ok(MinNormResult {
        distance: norm(&x),
        projection,
        weights,
    })
}

fn combine(points: &[Vec<f64>], active: &[usize], lambda: &[f64], d: usize) -> Vec<f64> {
    let mut x = vec![0.0; d];
    for (&i, &l) in active.iter().zip(lambda) {
        for (xr, pr) in x.iter_mut().zip(&points[i]) {
            *xr += l * pr;
        }
    }
    x
}

/// Index of the smallest entry; ties go to the lowest index.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = i;
        }
    }
    best
}

fn check_index(config: &SphericalConfiguration, k: usize) -> Result<()> {
    if k >= config.count() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: config.count(),
        });
    }
    Ok(())
}

/// Projection of column `k` onto the hull of all other columns.
pub fn project_onto_rest(config: &SphericalConfiguration, k: usize) -> Result<MinNormResult> {
    check_index(config, k)?;
    let others: Vec<&[f64]> = (0..config.count())
        .filter(|&j| j != k)
        .map(|j| config.column(j))
        .collect();
    min_norm_projection(config.column(k), &others)
}

/// Distance from column `k` to the convex hull of the other columns.
pub fn one_vs_rest_distance(config: &SphericalConfiguration, k: usize) -> Result<f64> {
    Ok(project_onto_rest(config, k)?.distance)
}

/// One-vs-rest distance of every column, in column order.
pub fn one_vs_rest_distances(config: &SphericalConfiguration) -> Vec<f64> {
    (0..config.count())
        .map(|k| project_onto_rest(config, k).map_or(0.0, |r| r.distance))
        .collect()
}

/// Smallest one-vs-rest distance of the configuration.
pub fn rho_one_vs_rest(config: &SphericalConfiguration) -> f64 {
    one_vs_rest_distances(config)
        .into_iter()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest pairwise Euclidean distance of the configuration.
pub fn rho_one_vs_one(config: &SphericalConfiguration) -> f64 {
    let k = config.count();
    let mut best = f64::INFINITY;
    for i in 0..k {
        for j in (i + 1)..k {
            let dist: f64 = config
                .column(i)
                .iter()
                .zip(config.column(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            best = best.min(dist);
        }
    }
    best
}

/// Indices whose one-vs-rest distance exceeds `(1 + rel_tol) · ρ_one-vs-rest`.
pub fn detect_rattlers(config: &SphericalConfiguration, rel_tol: f64) -> Vec<usize> {
    let dists = one_vs_rest_distances(config);
    let rho = dists.iter().cloned().fold(f64::INFINITY, f64::min);
    let threshold = (1.0 + rel_tol) * rho;
    dists
        .iter()
        .enumerate()
        .filter(|(_, &d)| d > threshold)
        .map(|(k, _)| k)
        .collect()
}

/// Unit direction `h` minimizing `max_{j≠k} ⟨w_j − w_k, h⟩`.
///
/// This is the normalized residual between `w_k` and its projection onto
/// the hull of the other columns; the minimum value equals minus the
/// one-vs-rest distance of `k`.
pub fn optimal_feature_direction(config: &SphericalConfiguration, k: usize) -> Result<UnitVector> {
    let proj = project_onto_rest(config, k)?;
    if proj.distance <= DEGENERATE_RESIDUAL {
        return Err(Error::DegenerateResidual {
            index: k,
            distance: proj.distance,
        });
    }
    let residual: Vec<f64> = config
        .column(k)
        .iter()
        .zip(&proj.projection)
        .map(|(w, p)| w - p)
        .collect();
    UnitVector::new(residual)
}

/// `max_{j≠k} ⟨w_j − w_k, h⟩` for a candidate feature direction `h`.
pub fn worst_margin(config: &SphericalConfiguration, k: usize, h: &[f64]) -> f64 {
    let wk_h = dot(config.column(k), h);
    (0..config.count())
        .filter(|&j| j != k)
        .map(|j| dot(config.column(j), h) - wk_h)
        .fold(f64::NEG_INFINITY, f64::max)
}
