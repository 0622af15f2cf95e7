//! Unconstrained feature model trainer.
//!
//! Classifier `W` (`d × K`) and features `H` (`d × nK`, class-major) are free
//! variables. In the sphere regime every column stays on the unit sphere
//! and the loss is the cross-entropy at temperature `τ`. In the weight-decay
//! regime the columns are unconstrained, `τ = 1`, and `λ/2 (‖W‖² + ‖H‖²)` is
//! added. Either way the classifier can be trained jointly with the features
//! or replaced by an exponential moving average of the class means.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{gnc1, gnc3, gnc_report, GncReport, LabeledFeatureSet};
use crate::geometry::SphericalConfiguration;
use crate::solver::{
    ce_kernel, random_columns, restart_rng, riemannian_descent, CeMode, DescentOptions,
    ObliqueObjective,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Sphere,
    WeightDecay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassifierRule {
    Trainable,
    /// Classifier is an exponential moving average of the class-mean features.
    Cmf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UfmConfig {
    pub dim: usize,
    pub classes: usize,
    pub samples_per_class: usize,
    pub regime: Regime,
    /// Temperature of the sphere regime (the weight-decay regime uses 1).
    pub tau: f64,
    pub lambda: f64,
    pub classifier_rule: ClassifierRule,
    pub cmf_beta: f64,
    pub iters: usize,
    pub step_size: f64,
    pub seed: u64,
    /// Trace row every this many iterations.
    pub log_every: usize,
}

impl UfmConfig {
    /// Sphere regime with `τ = 0.05`, trainable classifier, 2000 iterations.
    pub fn new(dim: usize, classes: usize, samples_per_class: usize) -> Self {
        Self {
            dim,
            classes,
            samples_per_class,
            regime: Regime::Sphere,
            tau: 0.05,
            lambda: 1e-3,
            classifier_rule: ClassifierRule::Trainable,
            cmf_beta: 0.9,
            iters: 2000,
            step_size: 1.0,
            seed: 0,
            log_every: 10,
        }
    }

    pub fn weight_decay(dim: usize, classes: usize, samples_per_class: usize, lambda: f64) -> Self {
        Self {
            regime: Regime::WeightDecay,
            lambda,
            ..Self::new(dim, classes, samples_per_class)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim == 0 || self.classes < 2 || self.samples_per_class == 0 {
            return bad("need d >= 1, K >= 2 and n >= 1");
        }
        if self.regime == Regime::Sphere && !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("sphere regime needs a positive temperature");
        }
        if self.regime == Regime::WeightDecay && !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("weight decay must be nonnegative");
        }
        if !(0.0..1.0).contains(&self.cmf_beta) {
            return bad("cmf beta must lie in [0, 1)");
        }
        if !(self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        if self.log_every == 0 {
            return bad("log interval must be positive");
        }
        Ok(())
    }

    fn effective_tau(&self) -> f64 {
        match self.regime {
            Regime::Sphere => self.tau,
            Regime::WeightDecay => 1.0,
        }
    }

    fn effective_lambda(&self) -> f64 {
        match self.regime {
            Regime::Sphere => 0.0,
            Regime::WeightDecay => self.lambda,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UfmTraceRow {
    pub iter: usize,
    pub loss: f64,
    pub gnc1: f64,
    pub gnc3: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UfmOutcome {
    /// `d × K`
    pub w: DMatrix<f64>,
    /// `d × nK`, class-major
    pub h: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub report: GncReport,
    pub trace: Vec<UfmTraceRow>,
}

impl UfmOutcome {
    pub fn features(&self) -> Result<LabeledFeatureSet> {
        LabeledFeatureSet::new(self.w.ncols(), self.h.clone(), self.labels.clone())
    }
}

/// `W ← βW + (1−β)M` on the columns of classes present in the batch, then
/// optionally renormalized; absent classes keep their column.
pub fn cmf_update(
    w: &DMatrix<f64>,
    batch_class_means: &DMatrix<f64>,
    present: &[bool],
    beta: f64,
    renormalize: bool,
) -> Result<DMatrix<f64>> {
    if w.shape() != batch_class_means.shape() || present.len() != w.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "classifier {:?}, batch means {:?}, {} presence flags",
            w.shape(),
            batch_class_means.shape(),
            present.len()
        )));
    }
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::InvalidConfig(format!("cmf beta must lie in [0, 1), got {beta}")));
    }
    let mut out = w.clone();
    for (k, &p) in present.iter().enumerate() {
        if !p {
            continue;
        }
        let mut col = out.column_mut(k);
        col *= beta;
        col += batch_class_means.column(k) * (1.0 - beta);
        if renormalize {
            let n = col.norm();
            if n > 0.0 {
                col /= n;
            }
        }
    }
    Ok(out)
}

/// Loss over `[W | H]` or, with `fixed_w`, over `H` alone.
struct UfmObjective<'a> {
    d: usize,
    k: usize,
    labels: &'a [usize],
    tau: f64,
    lambda: f64,
    sphere: bool,
    mode: CeMode,
    fixed_w: Option<&'a [f64]>,
}

impl ObliqueObjective for UfmObjective<'_> {
    fn dim(&self) -> usize {
        self.d
    }

    fn constrained(&self) -> bool {
        self.sphere
    }

    fn eval(&self, x: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let reg = 0.5 * self.lambda * x.iter().map(|v| v * v).sum::<f64>();
        let value = match (self.fixed_w, grad.as_deref_mut()) {
            (Some(w), Some(g)) => {
                let mut gw = vec![0.0; w.len()];
                ce_kernel(w, x, self.labels, self.d, self.tau, self.mode, Some((&mut gw, g)))
            }
            (Some(w), None) => ce_kernel(w, x, self.labels, self.d, self.tau, self.mode, None),
            (None, Some(g)) => {
                let (w, h) = x.split_at(self.d * self.k);
                let (gw, gh) = g.split_at_mut(self.d * self.k);
                ce_kernel(w, h, self.labels, self.d, self.tau, self.mode, Some((gw, gh)))
            }
            (None, None) => {
                let (w, h) = x.split_at(self.d * self.k);
                ce_kernel(w, h, self.labels, self.d, self.tau, self.mode, None)
            }
        };
        if let Some(g) = grad {
            if self.lambda > 0.0 {
                g.iter_mut().zip(x).for_each(|(gv, xv)| *gv += self.lambda * xv);
            }
        }
        value + reg
    }
}

fn class_means(h: &[f64], d: usize, k: usize, n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, k, |r, c| {
        (0..n).map(|i| h[(c * n + i) * d + r]).sum::<f64>() / n as f64
    })
}

/// Trains the model from a seeded random start and reports the final metrics.
pub fn train_ufm(cfg: &UfmConfig) -> Result<UfmOutcome> {
    cfg.validate()?;
    let (d, k, n) = (cfg.dim, cfg.classes, cfg.samples_per_class);
    let labels: Vec<usize> = (0..k * n).map(|i| i / n).collect();
    let sphere = cfg.regime == Regime::Sphere;
    let tau = cfg.effective_tau();
    let lambda = cfg.effective_lambda();
    // On the sphere the loss becomes exponentially small long before the
    // iterates settle; τ·log(loss) has the same minimizers and usable gradients.
    let descent_mode = if sphere { CeMode::LogScaled } else { CeMode::Mean };

    let mut rng = restart_rng(cfg.seed, 0);
    let mut w = random_columns(&mut rng, d, k);
    let mut h = random_columns(&mut rng, d, k * n);

    let snapshot = |w: &[f64], h: &[f64], iter: usize| -> Result<UfmTraceRow> {
        let obj = UfmObjective {
            d,
            k,
            labels: &labels,
            tau,
            lambda,
            sphere,
            mode: CeMode::Mean,
            fixed_w: None,
        };
        let mut x = w.to_vec();
        x.extend_from_slice(h);
        let loss = obj.eval(&x, None);
        let fs = LabeledFeatureSet::new(k, DMatrix::from_column_slice(d, k * n, h), labels.clone())?;
        let unit = SphericalConfiguration::from_matrix(DMatrix::from_column_slice(d, k, w))?;
        Ok(UfmTraceRow {
            iter,
            loss,
            gnc1: gnc1(&fs),
            gnc3: gnc3(&unit, &fs)?,
        })
    };

    let mut trace = vec![snapshot(&w, &h, 0)?];
    let mut step = cfg.step_size;
    let mut done = 0;
    let offset_error = |e: Error, done: usize| match e {
        Error::NonFiniteLoss { iteration } => Error::NonFiniteLoss {
            iteration: done + iteration,
        },
        other => other,
    };

    match cfg.classifier_rule {
        ClassifierRule::Trainable => {
            let mut x = w.clone();
            x.extend_from_slice(&h);
            let obj = UfmObjective {
                d,
                k,
                labels: &labels,
                tau,
                lambda,
                sphere,
                mode: descent_mode,
                fixed_w: None,
            };
            while done < cfg.iters {
                let chunk = cfg.log_every.min(cfg.iters - done);
                let opts = DescentOptions {
                    max_iters: chunk,
                    step_size: step,
                    grad_tol: 1e-12,
                };
                let out = riemannian_descent(&obj, &mut x, &opts).map_err(|e| offset_error(e, done))?;
                step = out.next_step;
                done += out.iterations;
                let (wx, hx) = x.split_at(d * k);
                trace.push(snapshot(wx, hx, done)?);
                if out.iterations < chunk {
                    break;
                }
            }
            w = x[..d * k].to_vec();
            h = x[d * k..].to_vec();
        }
        ClassifierRule::Cmf => {
            let present = vec![true; k];
            while done < cfg.iters {
                let obj = UfmObjective {
                    d,
                    k,
                    labels: &labels,
                    tau,
                    lambda,
                    sphere,
                    mode: descent_mode,
                    fixed_w: Some(&w),
                };
                let opts = DescentOptions {
                    max_iters: 1,
                    step_size: step,
                    grad_tol: 1e-12,
                };
                let out = riemannian_descent(&obj, &mut h, &opts).map_err(|e| offset_error(e, done))?;
                step = out.next_step;
                done += 1;
                let means = class_means(&h, d, k, n);
                let current = DMatrix::from_column_slice(d, k, &w);
                w = cmf_update(&current, &means, &present, cfg.cmf_beta, sphere)?
                    .as_slice()
                    .to_vec();
                if done % cfg.log_every == 0 || done == cfg.iters {
                    trace.push(snapshot(&w, &h, done)?);
                }
            }
        }
    }

    if let Some(last) = trace.last() {
        if !last.loss.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: last.iter });
        }
    }
    let w = DMatrix::from_column_slice(d, k, &w);
    let h = DMatrix::from_column_slice(d, k * n, &h);
    let fs = LabeledFeatureSet::new(k, h.clone(), labels.clone())?;
    let report = gnc_report(&w, &fs, None)?;
    Ok(UfmOutcome {
        w,
        h,
        labels,
        report,
        trace,
    })
}
