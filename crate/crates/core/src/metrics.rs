//! Collapse metrics over labeled features and a classifier.
//!
//! * `gnc1`: within-class variability against between-class spread,
//!   `trace(Σ_W Σ_B†) / K`.
//! * `gnc2`: one-vs-rest distance of the (normalized) classifier, with an
//!   optional gap to a reference optimum.
//! * `gnc3`: mean misalignment `(1/K) Σ (1 − w_kᵀ h̄_k)` with normalized class means.
//! * NCC accuracy and the length statistics used to compare the sphere and
//!   weight-decay regimes.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dot, rho_one_vs_rest, SphericalConfiguration};
use crate::solver::LabeledFeatures;

/// Pseudo-inverse cutoff relative to the largest singular value.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Unconstrained feature vectors with class labels in `[0, K)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatureSet {
    num_classes: usize,
    /// `d × N`, one sample per column.
    features: DMatrix<f64>,
    labels: Vec<usize>,
    counts: Vec<usize>,
}

impl LabeledFeatureSet {
    /// Every class in `[0, num_classes)` must have at least one sample.
    pub fn new(num_classes: usize, features: DMatrix<f64>, labels: Vec<usize>) -> Result<Self> {
        if num_classes < 2 {
            return Err(Error::InvalidConfig("need at least two classes".into()));
        }
        if features.nrows() == 0 {
            return Err(Error::InvalidConfig("features must have dimension at least 1".into()));
        }
        if labels.len() != features.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} features",
                labels.len(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("features contain NaN or infinite values".into()));
        }
        let mut counts = vec![0; num_classes];
        for &l in &labels {
            if l >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: l,
                    classes: num_classes,
                });
            }
            counts[l] += 1;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::InvalidConfig(format!("class {k} has no samples")));
        }
        Ok(Self {
            num_classes,
            features,
            labels,
            counts,
        })
    }

    pub fn from_vectors<V: AsRef<[f64]>>(
        num_classes: usize,
        samples: &[(usize, V)],
    ) -> Result<Self> {
        let d = samples.first().map(|(_, v)| v.as_ref().len()).unwrap_or(0);
        if let Some((_, v)) = samples.iter().find(|(_, v)| v.as_ref().len() != d) {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: v.as_ref().len(),
            });
        }
        let flat: Vec<f64> = samples.iter().flat_map(|(_, v)| v.as_ref().to_vec()).collect();
        let labels = samples.iter().map(|(l, _)| *l).collect();
        Self::new(num_classes, DMatrix::from_vec(d, samples.len(), flat), labels)
    }

    pub fn from_labeled(h: &LabeledFeatures, num_classes: usize) -> Result<Self> {
        Self::new(num_classes, h.features.matrix().clone(), h.labels.clone())
    }

    pub fn dim(&self) -> usize {
        self.features.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features.as_slice()[i * d..(i + 1) * d]
    }

    /// `d × K` matrix of class means.
    pub fn class_means(&self) -> DMatrix<f64> {
        let mut means = DMatrix::zeros(self.dim(), self.num_classes);
        for (i, &l) in self.labels.iter().enumerate() {
            let mut col = means.column_mut(l);
            col += self.features.column(i);
        }
        for (k, &c) in self.counts.iter().enumerate() {
            means.column_mut(k).unscale_mut(c as f64);
        }
        means
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gnc1 {
    pub value: f64,
    /// `Σ_B` has rank zero, so the value is meaningless (reported as 0).
    pub degenerate_between_class: bool,
}

fn pseudo_inverse(m: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let svd = m.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = PINV_RELATIVE_CUTOFF * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff && s > 0.0).count();
    if rank == 0 {
        return (DMatrix::zeros(m.ncols(), m.nrows()), 0);
    }
    let u = svd.u.as_ref().unwrap();
    let vt = svd.v_t.as_ref().unwrap();
    let mut pinv = DMatrix::zeros(m.ncols(), m.nrows());
    for (j, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            pinv += (vt.row(j).transpose() * u.column(j).transpose()) / s;
        }
    }
    (pinv, rank)
}

/// `(1/K) trace(Σ_W Σ_B†)` with `Σ_B = (1/K) Σ_k h̄_k h̄_kᵀ`.
pub fn gnc1(features: &LabeledFeatureSet) -> f64 {
    gnc1_with(features, false).value
}

/// As [`gnc1`]; with `center` the global mean is subtracted from the class
/// means in `Σ_B`.
pub fn gnc1_with(features: &LabeledFeatureSet, center: bool) -> Gnc1 {
    let d = features.dim();
    let k = features.num_classes();
    let means = features.class_means();

    let mut sigma_w = DMatrix::zeros(d, d);
    for (i, &l) in features.labels().iter().enumerate() {
        let diff = features.features().column(i) - means.column(l);
        sigma_w += &diff * diff.transpose();
    }
    sigma_w /= features.len() as f64;

    let global: DVector<f64> = if center {
        features.features().column_mean()
    } else {
        DVector::zeros(d)
    };
    let mut sigma_b = DMatrix::zeros(d, d);
    for c in 0..k {
        let diff = means.column(c) - &global;
        sigma_b += &diff * diff.transpose();
    }
    sigma_b /= k as f64;

    let (pinv, rank) = pseudo_inverse(&sigma_b);
    let value = ((sigma_w * pinv).trace() / k as f64).max(0.0);
    Gnc1 {
        value,
        degenerate_between_class: rank == 0,
    }
}

/// One-vs-rest distance of `w` and, given a reference, `reference − ρ`.
pub fn gnc2(w: &SphericalConfiguration, reference: Option<f64>) -> (f64, Option<f64>) {
    let rho = rho_one_vs_rest(w);
    (rho, reference.map(|r| r - rho))
}

fn check_classifier(w_dim: usize, w_count: usize, features: &LabeledFeatureSet) -> Result<()> {
    if w_dim != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: w_dim,
            found: features.dim(),
        });
    }
    if w_count != features.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{w_count} classifier vectors for {} classes",
            features.num_classes()
        )));
    }
    Ok(())
}

/// Raw inner products `w_kᵀ h̄_k` (no normalization of the means).
pub fn class_mean_alignment(
    w: &SphericalConfiguration,
    features: &LabeledFeatureSet,
) -> Result<Vec<f64>> {
    check_classifier(w.dim(), w.count(), features)?;
    let means = features.class_means();
    Ok((0..w.count())
        .map(|k| dot(w.column(k), means.column(k).as_slice()))
        .collect())
}

/// `(1/K) Σ_k (1 − w_kᵀ h̄_k/‖h̄_k‖)`, in `[0, 2]`.
pub fn gnc3(w: &SphericalConfiguration, features: &LabeledFeatureSet) -> Result<f64> {
    check_classifier(w.dim(), w.count(), features)?;
    let means = features.class_means();
    let mut total = 0.0;
    for k in 0..w.count() {
        let m = means.column(k);
        let n = m.norm();
        if n < 1e-12 {
            return Err(Error::ZeroNormClass(k));
        }
        total += (1.0 - dot(w.column(k), m.as_slice()) / n).clamp(0.0, 2.0);
    }
    Ok(total / w.count() as f64)
}

/// Which class centers the nearest-center rule compares against.
#[derive(Debug, Clone, Copy)]
pub enum NccCenters<'a> {
    /// Per-class means of the features themselves.
    ClassMeans,
    /// Columns of a `d × K` classifier matrix.
    Classifier(&'a DMatrix<f64>),
}

/// Fraction of samples whose nearest center (Euclidean, ties to the lowest
/// index) carries the sample's label.
pub fn ncc_accuracy(features: &LabeledFeatureSet, centers: NccCenters<'_>) -> Result<f64> {
    let means;
    let c = match centers {
        NccCenters::ClassMeans => {
            means = features.class_means();
            &means
        }
        NccCenters::Classifier(w) => {
            check_classifier(w.nrows(), w.ncols(), features)?;
            w
        }
    };
    let mut correct = 0usize;
    for (i, &l) in features.labels().iter().enumerate() {
        let h = features.sample(i);
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for k in 0..c.ncols() {
            let dist: f64 = c.column(k).iter().zip(h).map(|(a, b)| (a - b) * (a - b)).sum();
            if dist < best_d {
                best_d = dist;
                best = k;
            }
        }
        if best == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / features.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDiagnostics {
    pub class_mean_norms: Vec<f64>,
    pub classifier_norms: Vec<f64>,
    /// `‖h̄_k‖ / ‖w_k‖`
    pub ratios: Vec<f64>,
    /// Population standard deviation of the ratios over their mean.
    pub coefficient_of_variation: f64,
}

/// Per-class lengths of classifier columns and class means (both `d × K`).
pub fn length_diagnostics(w: &DMatrix<f64>, class_means: &DMatrix<f64>) -> Result<LengthDiagnostics> {
    if w.shape() != class_means.shape() {
        return Err(Error::ShapeMismatch(format!(
            "classifier {:?} vs class means {:?}",
            w.shape(),
            class_means.shape()
        )));
    }
    let classifier_norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    if let Some(k) = classifier_norms.iter().position(|&n| n < 1e-12) {
        return Err(Error::ZeroNormClass(k));
    }
    let class_mean_norms: Vec<f64> = class_means.column_iter().map(|c| c.norm()).collect();
    let ratios: Vec<f64> = class_mean_norms
        .iter()
        .zip(&classifier_norms)
        .map(|(h, w)| h / w)
        .collect();
    let n = ratios.len() as f64;
    let mean = ratios.iter().sum::<f64>() / n;
    let var = ratios.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let coefficient_of_variation = if mean > 0.0 { var.sqrt() / mean } else { 0.0 };
    Ok(LengthDiagnostics {
        class_mean_norms,
        classifier_norms,
        ratios,
        coefficient_of_variation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GncReport {
    pub gnc1: f64,
    pub gnc2: f64,
    pub gnc2_reference: Option<f64>,
    pub gnc3: f64,
    pub ncc_accuracy: f64,
    pub class_mean_norms: Vec<f64>,
    pub classifier_norms: Vec<f64>,
    pub norm_ratio_cv: f64,
}

/// All metrics for a raw `d × K` classifier and its features. `gnc2` and
/// `gnc3` use the normalized classifier, the length statistics the raw one.
pub fn gnc_report(
    w: &DMatrix<f64>,
    features: &LabeledFeatureSet,
    reference: Option<f64>,
) -> Result<GncReport> {
    check_classifier(w.nrows(), w.ncols(), features)?;
    let unit = SphericalConfiguration::from_matrix(w.clone())?;
    let means = features.class_means();
    let lengths = length_diagnostics(w, &means)?;
    let (gnc2, _) = gnc2(&unit, reference);
    Ok(GncReport {
        gnc1: gnc1(features),
        gnc2,
        gnc2_reference: reference,
        gnc3: gnc3(&unit, features)?,
        ncc_accuracy: ncc_accuracy(features, NccCenters::ClassMeans)?,
        class_mean_norms: lengths.class_mean_norms,
        classifier_norms: lengths.classifier_norms,
        norm_ratio_cv: lengths.coefficient_of_variation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{simplex_etf, uniform_circle};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn collapsed(w: &SphericalConfiguration, n: usize) -> LabeledFeatureSet {
        let samples: Vec<(usize, Vec<f64>)> = (0..w.count())
            .flat_map(|k| (0..n).map(move |_| k))
            .map(|k| (k, w.column(k).to_vec()))
            .collect();
        LabeledFeatureSet::from_vectors(w.count(), &samples).unwrap()
    }

    /// Gaussian clusters around fixed random centers that span `R^3`.
    fn clusters(seed: u64, sigma: f64) -> LabeledFeatureSet {
        let mut centers_rng = ChaCha8Rng::seed_from_u64(99);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let centers: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| unit.sample(&mut centers_rng)).collect()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma).unwrap();
        let mut samples = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..20 {
                let v: Vec<f64> = c.iter().map(|x| x + noise.sample(&mut rng)).collect();
                samples.push((k, v));
            }
        }
        LabeledFeatureSet::from_vectors(5, &samples).unwrap()
    }

    #[test]
    fn feature_set_validation() {
        let m = DMatrix::from_vec(1, 2, vec![1.0, f64::NAN]);
        assert!(LabeledFeatureSet::new(2, m, vec![0, 1]).is_err());
        let m = DMatrix::from_vec(1, 2, vec![1.0, 2.0]);
        assert!(matches!(
            LabeledFeatureSet::new(2, m.clone(), vec![0, 2]),
            Err(Error::LabelOutOfRange { label: 2, classes: 2 })
        ));
        assert!(LabeledFeatureSet::new(3, m, vec![0, 1]).is_err());
    }

    #[test]
    fn gnc1_examples() {
        let etf = simplex_etf(3, 4).unwrap();
        let g = gnc1_with(&collapsed(&etf, 3), false);
        assert_abs_diff_eq!(g.value, 0.0, epsilon = 1e-14);
        assert!(!g.degenerate_between_class);

        // two classes on a line: means ±1, within-class offsets ±s
        let s = 0.7;
        let fs = LabeledFeatureSet::from_vectors(
            2,
            &[(0, [-1.0 - s]), (0, [-1.0 + s]), (1, [1.0 - s]), (1, [1.0 + s])],
        )
        .unwrap();
        // Σ_W = s², Σ_B = 1, so trace/K = s²/2
        assert_abs_diff_eq!(gnc1(&fs), s * s / 2.0, epsilon = 1e-14);
        assert_abs_diff_eq!(gnc1_with(&fs, true).value, s * s / 2.0, epsilon = 1e-14);

        let zero = LabeledFeatureSet::from_vectors(2, &[(0, [1.0]), (0, [-1.0]), (1, [2.0]), (1, [-2.0])]).unwrap();
        assert!(gnc1_with(&zero, false).degenerate_between_class);
    }

    #[test]
    fn gnc1_shrinks_with_noise() {
        for seed in 0..3 {
            let values: Vec<f64> = [0.3, 0.1, 0.03, 0.01, 0.003]
                .iter()
                .map(|&s| gnc1(&clusters(seed, s)))
                .collect();
            for w in values.windows(2) {
                assert!(w[1] < w[0], "{values:?}");
            }
            assert!(values[4] < 1e-3);
        }
    }

    #[test]
    fn gnc1_rotation_invariant() {
        let fs = clusters(7, 0.2);
        let (q, _) = nalgebra::linalg::QR::new(DMatrix::from_fn(3, 3, |i, j| ((i * 7 + j * 3) as f64).sin())).unpack();
        let rotated = LabeledFeatureSet::new(5, &q * fs.features(), fs.labels().to_vec()).unwrap();
        assert_abs_diff_eq!(gnc1(&fs), gnc1(&rotated), epsilon = 1e-8);
        assert_abs_diff_eq!(gnc1_with(&fs, true).value, gnc1_with(&rotated, true).value, epsilon = 1e-8);
    }

    #[test]
    fn gnc2_examples() {
        let circ = uniform_circle(7, 0.0).unwrap();
        let reference = 1.0 - (2.0 * std::f64::consts::PI / 7.0).cos();
        let (rho, gap) = gnc2(&circ, Some(reference));
        assert_abs_diff_eq!(rho, reference, epsilon = 1e-10);
        assert_abs_diff_eq!(gap.unwrap(), 0.0, epsilon = 1e-10);

        let mut m = circ.matrix().clone();
        let t = 5f64.to_radians();
        m[(0, 0)] = t.cos();
        m[(1, 0)] = t.sin();
        let (rho, _) = gnc2(&SphericalConfiguration::from_matrix(m).unwrap(), None);
        assert!(rho < reference - 1e-6);

        let dup = SphericalConfiguration::from_vectors(&[[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert_abs_diff_eq!(gnc2(&dup, None).0, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn gnc3_examples() {
        let etf = simplex_etf(3, 4).unwrap();
        assert_abs_diff_eq!(gnc3(&etf, &collapsed(&etf, 2)).unwrap(), 0.0, epsilon = 1e-14);
        let flipped = SphericalConfiguration::from_matrix(-etf.matrix().clone()).unwrap();
        assert_abs_diff_eq!(gnc3(&etf, &collapsed(&flipped, 2)).unwrap(), 2.0, epsilon = 1e-14);

        let sq = uniform_circle(4, 0.0).unwrap();
        let mut m = sq.matrix().clone();
        let t = 60f64.to_radians();
        m[(0, 0)] = t.cos();
        m[(1, 0)] = t.sin();
        let rotated = SphericalConfiguration::from_matrix(m).unwrap();
        assert_abs_diff_eq!(gnc3(&sq, &collapsed(&rotated, 3)).unwrap(), 0.125, epsilon = 1e-12);

        // means are normalized before the inner product
        let scaled = LabeledFeatureSet::new(4, collapsed(&sq, 2).features() * 3.0, collapsed(&sq, 2).labels().to_vec()).unwrap();
        assert_abs_diff_eq!(gnc3(&sq, &scaled).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(class_mean_alignment(&sq, &scaled).unwrap()[0], 3.0, epsilon = 1e-14);
    }

    #[test]
    fn gnc3_permutation_invariant() {
        let fs = clusters(3, 0.3);
        let w = uniform_circle(5, 0.0).unwrap();
        let w = SphericalConfiguration::from_matrix(w.matrix().clone().insert_row(2, 0.5)).unwrap();
        let mut order: Vec<usize> = (0..fs.len()).collect();
        order.reverse();
        let m = DMatrix::from_fn(3, fs.len(), |r, c| fs.features()[(r, order[c])]);
        let labels = order.iter().map(|&i| fs.labels()[i]).collect();
        let permuted = LabeledFeatureSet::new(5, m, labels).unwrap();
        assert_abs_diff_eq!(gnc3(&w, &fs).unwrap(), gnc3(&w, &permuted).unwrap(), epsilon = 1e-12);
    }

    #[test]
    fn ncc_examples() {
        let circ = uniform_circle(5, 0.1).unwrap();
        let fs = collapsed(&circ, 3);
        assert_eq!(ncc_accuracy(&fs, NccCenters::ClassMeans).unwrap(), 1.0);
        assert_eq!(ncc_accuracy(&fs, NccCenters::Classifier(circ.matrix())).unwrap(), 1.0);

        // centers permuted against the labels; brute-force count
        let perm = circ.permute(&[1, 0, 2, 3, 4]).unwrap();
        let acc = ncc_accuracy(&fs, NccCenters::Classifier(perm.matrix())).unwrap();
        let mut correct = 0;
        for i in 0..fs.len() {
            let h = fs.sample(i);
            let dists: Vec<f64> = (0..5)
                .map(|k| perm.column(k).iter().zip(h).map(|(a, b)| (a - b).powi(2)).sum())
                .collect();
            let best = (0..5).fold(0, |b, k| if dists[k] < dists[b] { k } else { b });
            if best == fs.labels()[i] {
                correct += 1;
            }
        }
        assert_eq!(acc, correct as f64 / fs.len() as f64);
        assert!(acc < 1.0);

        // a sample equidistant from centers 0 and 1 goes to 0
        let centers = DMatrix::from_vec(1, 2, vec![-1.0, 1.0]);
        let fs = LabeledFeatureSet::from_vectors(2, &[(1, [0.0]), (0, [-2.0]), (1, [2.0])]).unwrap();
        let acc = ncc_accuracy(&fs, NccCenters::Classifier(&centers)).unwrap();
        assert_abs_diff_eq!(acc, 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn ncc_scale_invariant() {
        let fs = clusters(11, 0.8);
        let scaled = LabeledFeatureSet::new(5, fs.features() * 2.0, fs.labels().to_vec()).unwrap();
        assert_eq!(
            ncc_accuracy(&fs, NccCenters::ClassMeans).unwrap(),
            ncc_accuracy(&scaled, NccCenters::ClassMeans).unwrap()
        );
    }

    #[test]
    fn length_examples() {
        let etf = simplex_etf(3, 4).unwrap();
        let l = length_diagnostics(etf.matrix(), etf.matrix()).unwrap();
        assert!(l.ratios.iter().all(|r| (r - 1.0).abs() < 1e-14));
        assert_abs_diff_eq!(l.coefficient_of_variation, 0.0, epsilon = 1e-14);

        let w = DMatrix::from_vec(1, 2, vec![1.0, 1.0]);
        let means = DMatrix::from_vec(1, 2, vec![1.0, -2.0]);
        let l = length_diagnostics(&w, &means).unwrap();
        assert_abs_diff_eq!(l.coefficient_of_variation, 1.0 / 3.0, epsilon = 1e-15);

        let w = DMatrix::from_vec(1, 2, vec![1.0, 0.0]);
        assert!(matches!(length_diagnostics(&w, &means), Err(Error::ZeroNormClass(1))));
    }

    #[test]
    fn report_on_collapsed_data() {
        let etf = simplex_etf(4, 5).unwrap();
        let r = gnc_report(etf.matrix(), &collapsed(&etf, 2), Some(1.25)).unwrap();
        assert_abs_diff_eq!(r.gnc1, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.gnc2, 1.25, epsilon = 1e-10);
        assert_abs_diff_eq!(r.gnc3, 0.0, epsilon = 1e-12);
        assert_eq!(r.ncc_accuracy, 1.0);
        assert_eq!(r.class_mean_norms.len(), 5);
        assert_eq!(r.classifier_norms.len(), 5);
        let json = serde_json::to_value(&r).unwrap();
        let keys: Vec<&str> = json.as_object().unwrap().keys().map(|k| k.as_str()).collect();
        assert_eq!(keys.len(), 8);
    }
}
