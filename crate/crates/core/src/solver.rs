//! Multi-start Riemannian gradient descent on the oblique manifold.
//!
//! Every optimization variable here is a list of unit vectors in `R^d`
//! (classifier columns `W`, feature columns `H`, or both concatenated). A
//! step projects the Euclidean gradient onto the tangent space of each
//! column, `(I − x xᵀ) g`, moves against it and renormalizes the columns.
//!
//! The smoothed objectives get sharper as the temperature `τ` shrinks, so
//! the solvers walk a decreasing temperature schedule and warm-start each
//! stage from the previous one. Within a stage the quantity actually
//! descended is `τ · log(objective)`, which has the same minimizers as the
//! objective itself but keeps gradients of order one when the loss is
//! exponentially small. Restarts are ranked by the exact combinatorial
//! distance (one-vs-rest or one-vs-one), never by the surrogate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    dot, optimal_feature_direction, rho_one_vs_one, rho_one_vs_rest, SphericalConfiguration,
};

const ARMIJO: f64 = 1e-4;

/// Feature vectors on the sphere together with their class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledFeatures {
    pub features: SphericalConfiguration,
    pub labels: Vec<usize>,
}

impl LabeledFeatures {
    pub fn new(features: SphericalConfiguration, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != features.count() {
            return Err(Error::ShapeMismatch(format!(
                "{} labels for {} features",
                labels.len(),
                features.count()
            )));
        }
        Ok(Self { features, labels })
    }

    /// Features ordered class by class, `n` per class.
    pub fn class_major(features: SphericalConfiguration, n: usize) -> Result<Self> {
        if n == 0 || features.count() % n != 0 {
            return Err(Error::ShapeMismatch(format!(
                "{} features do not split into groups of {n}",
                features.count()
            )));
        }
        let labels = (0..features.count()).map(|i| i / n).collect();
        Self::new(features, labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn check_pair(w: &SphericalConfiguration, h: &LabeledFeatures) -> Result<()> {
    if w.dim() != h.features.dim() {
        return Err(Error::DimensionMismatch {
            expected: w.dim(),
            found: h.features.dim(),
        });
    }
    if let Some(&label) = h.labels.iter().find(|&&l| l >= w.count()) {
        return Err(Error::LabelOutOfRange {
            label,
            classes: w.count(),
        });
    }
    Ok(())
}

fn check_tau(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("temperature must be positive, got {tau}")));
    }
    Ok(())
}

pub(crate) fn softplus(a: f64) -> f64 {
    a.max(0.0) + (-a.abs()).exp().ln_1p()
}

fn ln_softplus(a: f64) -> f64 {
    if a < -30.0 {
        a - 0.5 * a.exp()
    } else {
        softplus(a).ln()
    }
}

/// `σ(a) / softplus(a)`
fn sigmoid_over_softplus(a: f64) -> f64 {
    if a < -30.0 {
        1.0 - 0.5 * a.exp()
    } else {
        let s = 1.0 / (1.0 + (-a).exp());
        s / softplus(a)
    }
}

pub(crate) fn sigmoid(a: f64) -> f64 {
    if a >= 0.0 {
        1.0 / (1.0 + (-a).exp())
    } else {
        let e = a.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let mx = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + values.iter().map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Which function of the per-sample cross-entropy terms a kernel evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum CeMode {
    /// `(1/N) Σ_i log(1 + Σ_{j≠y_i} exp(⟨w_j − w_{y_i}, h_i⟩/τ))`
    Mean,
    /// `τ · log` of the mean.
    LogScaled,
}

/// Cross-entropy kernel over column-major `w` (`d × K`) and `h` (`d × N`).
///
/// When gradients are requested they are written (not accumulated) into
/// `grad_w` and `grad_h`, which must match `w` and `h` in length.
pub(crate) fn ce_kernel(
    w: &[f64],
    h: &[f64],
    labels: &[usize],
    d: usize,
    tau: f64,
    mode: CeMode,
    grads: Option<(&mut [f64], &mut [f64])>,
) -> f64 {
    let k = w.len() / d;
    let n = labels.len();
    let mut probs = vec![0.0; n * k];
    let mut lse = vec![0.0; n];
    let mut scratch = vec![0.0; k];
    for (i, &y) in labels.iter().enumerate() {
        let hi = &h[i * d..(i + 1) * d];
        for (j, z) in scratch.iter_mut().enumerate() {
            *z = dot(&w[j * d..(j + 1) * d], hi);
        }
        let zy = scratch[y];
        let mut mx = f64::NEG_INFINITY;
        for (j, z) in scratch.iter_mut().enumerate() {
            *z = if j == y { f64::NEG_INFINITY } else { (*z - zy) / tau };
            mx = mx.max(*z);
        }
        let p = &mut probs[i * k..(i + 1) * k];
        let mut sum = 0.0;
        for (pj, z) in p.iter_mut().zip(&scratch) {
            *pj = (z - mx).exp();
            sum += *pj;
        }
        p.iter_mut().for_each(|v| *v /= sum);
        lse[i] = mx + sum.ln();
    }

    let nf = n as f64;
    let (value, coeffs): (f64, Vec<f64>) = match mode {
        CeMode::Mean => {
            let value = lse.iter().map(|&a| softplus(a)).sum::<f64>() / nf;
            let c = lse.iter().map(|&a| sigmoid(a) / (nf * tau)).collect();
            (value, c)
        }
        CeMode::LogScaled => {
            let s: Vec<f64> = lse.iter().map(|&a| ln_softplus(a)).collect();
            let total = log_sum_exp(&s);
            let value = tau * (total - nf.ln());
            let c = s
                .iter()
                .zip(&lse)
                .map(|(&si, &a)| (si - total).exp() * sigmoid_over_softplus(a))
                .collect();
            (value, c)
        }
    };

    if let Some((gw, gh)) = grads {
        gw.iter_mut().for_each(|v| *v = 0.0);
        gh.iter_mut().for_each(|v| *v = 0.0);
        for (i, &y) in labels.iter().enumerate() {
            let c = coeffs[i];
            if c == 0.0 {
                continue;
            }
            let hi = &h[i * d..(i + 1) * d];
            let p = &probs[i * k..(i + 1) * k];
            let ghi = &mut gh[i * d..(i + 1) * d];
            for (j, &pj) in p.iter().enumerate() {
                if j == y || pj == 0.0 {
                    continue;
                }
                let cp = c * pj;
                for r in 0..d {
                    gw[j * d + r] += cp * hi[r];
                    ghi[r] += cp * w[j * d + r];
                }
            }
            for r in 0..d {
                gw[y * d + r] -= c * hi[r];
                ghi[r] -= c * w[y * d + r];
            }
        }
    }
    value
}

/// `τ · log Σ_{i<j} exp(⟨w_i, w_j⟩/τ)` over column-major `w`.
pub(crate) fn pairwise_lse_kernel(w: &[f64], d: usize, tau: f64, grad: Option<&mut [f64]>) -> f64 {
    let k = w.len() / d;
    let mut cos = Vec::with_capacity(k * (k - 1) / 2);
    for i in 0..k {
        for j in (i + 1)..k {
            cos.push(dot(&w[i * d..(i + 1) * d], &w[j * d..(j + 1) * d]) / tau);
        }
    }
    let total = log_sum_exp(&cos);
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v = 0.0);
        let mut idx = 0;
        for i in 0..k {
            for j in (i + 1)..k {
                let q = (cos[idx] - total).exp();
                idx += 1;
                for r in 0..d {
                    g[i * d + r] += q * w[j * d + r];
                    g[j * d + r] += q * w[i * d + r];
                }
            }
        }
    }
    tau * total
}

/// Cross-entropy of the unconstrained-feature model with temperature `tau`.
pub fn smoothed_ce_objective(
    w: &SphericalConfiguration,
    h: &LabeledFeatures,
    tau: f64,
) -> Result<f64> {
    check_pair(w, h)?;
    check_tau(tau)?;
    Ok(ce_kernel(
        w.matrix().as_slice(),
        h.features.matrix().as_slice(),
        &h.labels,
        w.dim(),
        tau,
        CeMode::Mean,
        None,
    ))
}

/// Value and Euclidean gradients (`d × K` and `d × N`, column-major) of
/// [`smoothed_ce_objective`].
pub fn smoothed_ce_gradient(
    w: &SphericalConfiguration,
    h: &LabeledFeatures,
    tau: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    check_pair(w, h)?;
    check_tau(tau)?;
    let mut gw = vec![0.0; w.matrix().len()];
    let mut gh = vec![0.0; h.features.matrix().len()];
    let v = ce_kernel(
        w.matrix().as_slice(),
        h.features.matrix().as_slice(),
        &h.labels,
        w.dim(),
        tau,
        CeMode::Mean,
        Some((&mut gw, &mut gh)),
    );
    Ok((v, gw, gh))
}

/// Largest cross-class margin `max_{i, j≠y_i} ⟨w_j − w_{y_i}, h_i⟩`.
pub fn hardmax_objective(w: &SphericalConfiguration, h: &LabeledFeatures) -> Result<f64> {
    check_pair(w, h)?;
    let mut best = f64::NEG_INFINITY;
    for (i, &y) in h.labels.iter().enumerate() {
        let hi = h.features.column(i);
        let zy = dot(w.column(y), hi);
        for j in (0..w.count()).filter(|&j| j != y) {
            best = best.max(dot(w.column(j), hi) - zy);
        }
    }
    Ok(best)
}

/// `τ · log Σ exp(margin/τ)` over every cross-class margin; lies between the
/// hard maximum and the hard maximum plus `τ · log(N (K − 1))`.
pub fn smoothed_max_margin(
    w: &SphericalConfiguration,
    h: &LabeledFeatures,
    tau: f64,
) -> Result<f64> {
    check_pair(w, h)?;
    check_tau(tau)?;
    let mut margins = Vec::with_capacity(h.len() * (w.count() - 1));
    for (i, &y) in h.labels.iter().enumerate() {
        let hi = h.features.column(i);
        let zy = dot(w.column(y), hi);
        for j in (0..w.count()).filter(|&j| j != y) {
            margins.push((dot(w.column(j), hi) - zy) / tau);
        }
    }
    Ok(tau * log_sum_exp(&margins))
}

/// Projects a Euclidean gradient onto the tangent space of each unit column.
pub(crate) fn project_tangent(x: &[f64], g: &mut [f64], d: usize) {
    for (xc, gc) in x.chunks_exact(d).zip(g.chunks_exact_mut(d)) {
        let a = dot(xc, gc);
        gc.iter_mut().zip(xc).for_each(|(gv, xv)| *gv -= a * xv);
    }
}

pub(crate) fn normalize_columns(x: &mut [f64], d: usize) {
    for c in x.chunks_exact_mut(d) {
        let n = dot(c, c).sqrt();
        c.iter_mut().for_each(|v| *v /= n);
    }
}

/// Riemannian gradient of [`smoothed_ce_objective`] for `W` and `H`.
pub fn riemannian_ce_gradient(
    w: &SphericalConfiguration,
    h: &LabeledFeatures,
    tau: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (_, mut gw, mut gh) = smoothed_ce_gradient(w, h, tau)?;
    project_tangent(w.matrix().as_slice(), &mut gw, w.dim());
    project_tangent(h.features.matrix().as_slice(), &mut gh, w.dim());
    Ok((gw, gh))
}

/// Objective over a product of unit spheres; `eval` writes the Euclidean gradient.
pub(crate) trait ObliqueObjective {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64;
    /// `false` turns the descent into plain Euclidean gradient descent.
    fn constrained(&self) -> bool {
        true
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentOptions {
    pub max_iters: usize,
    pub step_size: f64,
    pub grad_tol: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct DescentOutcome {
    pub value: f64,
    pub iterations: usize,
    /// Trial step the next iteration would have started from.
    pub next_step: f64,
}

/// Riemannian gradient descent with Armijo backtracking (halving).
///
/// The first trial step of each iteration is a Barzilai–Borwein estimate
/// from the last accepted step, clamped to a sane range.
pub(crate) fn riemannian_descent<O: ObliqueObjective>(
    obj: &O,
    x: &mut [f64],
    opts: &DescentOptions,
) -> Result<DescentOutcome> {
    let d = obj.dim();
    let sphere = obj.constrained();
    let mut grad = vec![0.0; x.len()];
    let mut value = obj.eval(x, Some(&mut grad));
    if !value.is_finite() {
        return Err(Error::NonFiniteLoss { iteration: 0 });
    }
    if sphere {
        project_tangent(x, &mut grad, d);
    }

    let mut trial_x = vec![0.0; x.len()];
    let mut trial_grad = vec![0.0; x.len()];
    let mut step = opts.step_size;
    let mut iterations = 0;
    let mut gnorm2 = dot(&grad, &grad);

    while iterations < opts.max_iters {
        if gnorm2.sqrt() < opts.grad_tol {
            break;
        }
        iterations += 1;
        let mut alpha = step;
        let accepted = loop {
            for ((t, xv), gv) in trial_x.iter_mut().zip(x.iter()).zip(&grad) {
                *t = xv - alpha * gv;
            }
            if sphere {
                normalize_columns(&mut trial_x, d);
            }
            let v = obj.eval(&trial_x, Some(&mut trial_grad));
            if v.is_finite() && v <= value - ARMIJO * alpha * gnorm2 {
                break Some(v);
            }
            alpha *= 0.5;
            if alpha < 1e-18 * opts.step_size.max(1.0) {
                break None;
            }
        };
        let Some(new_value) = accepted else {
            break;
        };
        if sphere {
            project_tangent(&trial_x, &mut trial_grad, d);
        }

        // Barzilai–Borwein step from the displacement and gradient change
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..x.len() {
            let s = trial_x[i] - x[i];
            let y = trial_grad[i] - grad[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 {
            (ss / sy).clamp(1e-12, 1e6)
        } else {
            (2.0 * alpha).min(1e6)
        };

        x.copy_from_slice(&trial_x);
        grad.copy_from_slice(&trial_grad);
        gnorm2 = dot(&grad, &grad);
        if new_value >= value && gnorm2.sqrt() >= opts.grad_tol {
            value = new_value;
            break;
        }
        value = new_value;
    }
    Ok(DescentOutcome {
        value,
        iterations,
        next_step: step,
    })
}

/// `τ · log CE` over the concatenation `[W | H]`.
struct JointCe<'a> {
    d: usize,
    k: usize,
    labels: &'a [usize],
    tau: f64,
}

impl ObliqueObjective for JointCe<'_> {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        let (w, h) = x.split_at(self.d * self.k);
        match grad {
            Some(g) => {
                let (gw, gh) = g.split_at_mut(self.d * self.k);
                ce_kernel(w, h, self.labels, self.d, self.tau, CeMode::LogScaled, Some((gw, gh)))
            }
            None => ce_kernel(w, h, self.labels, self.d, self.tau, CeMode::LogScaled, None),
        }
    }
}

struct PairwiseLse {
    d: usize,
    tau: f64,
}

impl ObliqueObjective for PairwiseLse {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &[f64], grad: Option<&mut [f64]>) -> f64 {
        pairwise_lse_kernel(x, self.d, self.tau, grad)
    }
}

/// `n` columns in `R^d` drawn from the standard normal and normalized.
pub(crate) fn random_columns(rng: &mut ChaCha8Rng, d: usize, n: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..d * n).map(|_| StandardNormal.sample(rng)).collect();
    for c in x.chunks_exact_mut(d) {
        while dot(c, c) < 1e-24 {
            c.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
        }
    }
    normalize_columns(&mut x, d);
    x
}

/// Independent random stream for restart `restart` under a base `seed`.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

/// `τ_0, τ_0/2, …` with `stages` entries.
pub fn geometric_schedule(tau_start: f64, stages: usize) -> Vec<f64> {
    (0..stages).map(|s| tau_start * 0.5f64.powi(s as i32)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dim: usize,
    pub count: usize,
    pub samples_per_class: usize,
    pub tau_schedule: Vec<f64>,
    pub restarts: usize,
    pub max_iters: usize,
    pub step_size: f64,
    pub grad_tol: f64,
    pub seed: u64,
}

impl SolverConfig {
    /// Defaults: one sample per class, `τ ∈ {1, 1/2, …, 2⁻⁷}`, 5000
    /// iterations per stage, gradient tolerance `1e-7`, and 16 restarts for
    /// `d ≤ 4` (8 otherwise).
    pub fn new(dim: usize, count: usize) -> Self {
        Self {
            dim,
            count,
            samples_per_class: 1,
            tau_schedule: geometric_schedule(1.0, 8),
            restarts: default_restarts(dim),
            max_iters: 5000,
            step_size: 0.1,
            grad_tol: 1e-7,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim == 0 {
            return bad("dimension must be at least 1");
        }
        if self.count < 2 {
            return bad("need at least two classes");
        }
        if self.samples_per_class == 0 {
            return bad("need at least one sample per class");
        }
        if self.tau_schedule.is_empty() {
            return bad("temperature schedule is empty");
        }
        if self.tau_schedule.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
            return bad("temperatures must be positive");
        }
        if self.tau_schedule.windows(2).any(|w| w[1] >= w[0]) {
            return bad("temperature schedule must be strictly decreasing");
        }
        if self.restarts == 0 {
            return bad("need at least one restart");
        }
        if !(self.step_size > 0.0) {
            return bad("step size must be positive");
        }
        if !(self.grad_tol > 0.0) {
            return bad("gradient tolerance must be positive");
        }
        Ok(())
    }

    fn descent(&self) -> DescentOptions {
        DescentOptions {
            max_iters: self.max_iters,
            step_size: self.step_size,
            grad_tol: self.grad_tol,
        }
    }
}

pub fn default_restarts(dim: usize) -> usize {
    if dim <= 4 {
        16
    } else {
        8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    SmoothedCe,
    Hardmax,
    OneVsRest,
    OneVsOne,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartOutcome {
    pub seed: u64,
    pub stream: u64,
    pub achieved: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub tau: f64,
    /// Final value of the stage surrogate (`τ · log` of the smoothed objective).
    pub objective: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub best_config: SphericalConfiguration,
    pub best_features: Option<LabeledFeatures>,
    pub objective_kind: ObjectiveKind,
    pub achieved: f64,
    pub per_restart: Vec<RestartOutcome>,
    /// Stage trace of the selected restart.
    pub trace: Vec<TraceEntry>,
    pub seed: u64,
}

/// Serializable summary of a [`SolveReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReportDocument {
    pub objective_kind: ObjectiveKind,
    pub achieved: f64,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
    pub per_restart: Vec<RestartOutcome>,
    pub trace: Vec<TraceEntry>,
}

impl SolveReport {
    pub fn document(&self) -> SolveReportDocument {
        SolveReportDocument {
            objective_kind: self.objective_kind,
            achieved: self.achieved,
            dim: self.best_config.dim(),
            count: self.best_config.count(),
            seed: self.seed,
            per_restart: self.per_restart.clone(),
            trace: self.trace.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.document())?)
    }

    /// The exact objective of `best_config` for this report's kind.
    pub fn recompute(&self) -> Result<f64> {
        match self.objective_kind {
            ObjectiveKind::OneVsRest => Ok(rho_one_vs_rest(&self.best_config)),
            ObjectiveKind::OneVsOne => Ok(rho_one_vs_one(&self.best_config)),
            ObjectiveKind::Hardmax => match &self.best_features {
                Some(h) => hardmax_objective(&self.best_config, h),
                None => Err(Error::InvalidConfig("hardmax report without features".into())),
            },
            ObjectiveKind::SmoothedCe => Err(Error::InvalidConfig(
                "smoothed objective depends on the temperature".into(),
            )),
        }
    }
}

struct RestartRun {
    x: Vec<f64>,
    achieved: f64,
    iterations: usize,
    trace: Vec<TraceEntry>,
}

fn run_schedule<O, F>(x: &mut [f64], schedule: &[f64], cfg: &SolverConfig, make: F) -> Result<(usize, Vec<TraceEntry>)>
where
    O: ObliqueObjective,
    F: Fn(f64) -> O,
{
    let opts = cfg.descent();
    let mut total = 0;
    let mut trace = Vec::with_capacity(schedule.len());
    for &tau in schedule {
        let obj = make(tau);
        let out = riemannian_descent(&obj, x, &opts).map_err(|e| match e {
            Error::NonFiniteLoss { iteration } => Error::NonFiniteLoss {
                iteration: total + iteration,
            },
            other => other,
        })?;
        total += out.iterations;
        trace.push(TraceEntry {
            tau,
            objective: out.value,
            iterations: out.iterations,
        });
    }
    Ok((total, trace))
}

/// Picks the restart with the largest `achieved`; ties go to the lowest index.
fn select_best(runs: &[RestartRun]) -> usize {
    let mut best = 0;
    for (i, r) in runs.iter().enumerate().skip(1) {
        if r.achieved > runs[best].achieved {
            best = i;
        }
    }
    best
}

fn outcomes(runs: &[RestartRun], seed: u64) -> Vec<RestartOutcome> {
    runs.iter()
        .enumerate()
        .map(|(i, r)| RestartOutcome {
            seed,
            stream: i as u64,
            achieved: r.achieved,
            iterations: r.iterations,
        })
        .collect()
}

fn joint_restart(cfg: &SolverConfig, restart: usize) -> Result<RestartRun> {
    let (d, k, n) = (cfg.dim, cfg.count, cfg.samples_per_class);
    let labels: Vec<usize> = (0..k * n).map(|i| i / n).collect();
    let mut rng = restart_rng(cfg.seed, restart);
    let mut x = random_columns(&mut rng, d, k);
    x.extend(random_columns(&mut rng, d, k * n));
    let (iterations, trace) = run_schedule(&mut x, &cfg.tau_schedule, cfg, |tau| JointCe {
        d,
        k,
        labels: &labels,
        tau,
    })?;
    let w = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_column_slice(d, k, &x[..d * k]))?;
    Ok(RestartRun {
        achieved: rho_one_vs_rest(&w),
        x,
        iterations,
        trace,
    })
}

fn split_joint(cfg: &SolverConfig, x: &[f64]) -> Result<(SphericalConfiguration, LabeledFeatures)> {
    let (d, k, n) = (cfg.dim, cfg.count, cfg.samples_per_class);
    let w = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_column_slice(d, k, &x[..d * k]))?;
    let h = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_column_slice(
        d,
        k * n,
        &x[d * k..],
    ))?;
    Ok((w, LabeledFeatures::class_major(h, n)?))
}

/// Best softmax code found by jointly descending the smoothed cross-entropy
/// over `(W, H)` through the temperature schedule, across independent restarts.
/// `achieved` is the exact one-vs-rest distance of the returned `W`.
pub fn solve_softmax_code(cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let runs: Vec<RestartRun> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| joint_restart(cfg, r))
        .collect::<Result<_>>()?;
    let best = select_best(&runs);
    let (w, h) = split_joint(cfg, &runs[best].x)?;
    Ok(SolveReport {
        achieved: rho_one_vs_rest(&w),
        best_config: w,
        best_features: Some(h),
        objective_kind: ObjectiveKind::OneVsRest,
        per_restart: outcomes(&runs, cfg.seed),
        trace: runs[best].trace.clone(),
        seed: cfg.seed,
    })
}

fn tammes_restart(cfg: &SolverConfig, restart: usize) -> Result<RestartRun> {
    let (d, k) = (cfg.dim, cfg.count);
    let mut rng = restart_rng(cfg.seed, restart);
    let mut x = random_columns(&mut rng, d, k);
    let (iterations, trace) =
        run_schedule(&mut x, &cfg.tau_schedule, cfg, |tau| PairwiseLse { d, tau })?;
    let w = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_column_slice(d, k, &x))?;
    Ok(RestartRun {
        achieved: rho_one_vs_one(&w),
        x,
        iterations,
        trace,
    })
}

/// Best Tammes configuration found by descending the smoothed maximum
/// pairwise inner product through the temperature schedule.
/// `achieved` is the exact minimum pairwise distance.
pub fn solve_tammes(cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let runs: Vec<RestartRun> = (0..cfg.restarts)
        .into_par_iter()
        .map(|r| tammes_restart(cfg, r))
        .collect::<Result<_>>()?;
    let best = select_best(&runs);
    let w = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_column_slice(
        cfg.dim,
        cfg.count,
        &runs[best].x,
    ))?;
    Ok(SolveReport {
        achieved: rho_one_vs_one(&w),
        best_config: w,
        best_features: None,
        objective_kind: ObjectiveKind::OneVsOne,
        per_restart: outcomes(&runs, cfg.seed),
        trace: runs[best].trace.clone(),
        seed: cfg.seed,
    })
}

/// Features `h_{k,i}` set to the optimal direction of class `k`, `n` per class.
pub fn solve_optimal_features(w: &SphericalConfiguration, n: usize) -> Result<LabeledFeatures> {
    if n == 0 {
        return Err(Error::InvalidConfig("need at least one sample per class".into()));
    }
    let mut cols = Vec::with_capacity(w.count() * n);
    for k in 0..w.count() {
        let h = optimal_feature_direction(w, k)?;
        for _ in 0..n {
            cols.push(h.as_slice().to_vec());
        }
    }
    LabeledFeatures::class_major(SphericalConfiguration::from_vectors(&cols)?, n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardmaxRow {
    pub tau: f64,
    /// Largest pairwise cosine of the classifier solving the fixed-temperature problem.
    pub ce_max_cosine: f64,
    /// Largest pairwise cosine of the continuation-solved softmax code.
    pub hardmax_reference: f64,
    pub gap: f64,
}

/// For each temperature, solves the smoothed problem directly (no
/// continuation) and compares its largest pairwise cosine with that of a
/// softmax code obtained by continuation down to the smallest temperature.
pub fn verify_hardmax_convergence(
    d: usize,
    k: usize,
    tau_list: &[f64],
    restarts: usize,
    seed: u64,
) -> Result<Vec<HardmaxRow>> {
    let mut reference_cfg = SolverConfig::new(d, k);
    reference_cfg.restarts = restarts;
    reference_cfg.seed = seed;
    reference_cfg.validate()?;
    if tau_list.is_empty() || tau_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidConfig(
            "temperature list must be non-empty and strictly decreasing".into(),
        ));
    }
    let smallest = *tau_list.last().unwrap();
    if let Some(&last) = reference_cfg.tau_schedule.last() {
        if smallest < last {
            reference_cfg.tau_schedule = geometric_schedule(1.0, 1)
                .into_iter()
                .chain((1..).map(|s| 0.5f64.powi(s)).take_while(|t| *t >= smallest * 0.5))
                .collect();
        }
    }
    let reference = solve_softmax_code(&reference_cfg)?.best_config.max_pairwise_cosine();

    tau_list
        .iter()
        .map(|&tau| {
            let cfg = SolverConfig {
                tau_schedule: vec![tau],
                ..reference_cfg.clone()
            };
            cfg.validate()?;
            let labels: Vec<usize> = (0..k).collect();
            let runs: Vec<(f64, Vec<f64>)> = (0..cfg.restarts)
                .into_par_iter()
                .map(|r| {
                    let mut rng = restart_rng(cfg.seed, r);
                    let mut x = random_columns(&mut rng, d, k);
                    x.extend(random_columns(&mut rng, d, k));
                    let out = riemannian_descent(
                        &JointCe { d, k, labels: &labels, tau },
                        &mut x,
                        &cfg.descent(),
                    )?;
                    Ok((out.value, x))
                })
                .collect::<Result<_>>()?;
            let mut best = 0;
            for (i, r) in runs.iter().enumerate().skip(1) {
                if r.0 < runs[best].0 {
                    best = i;
                }
            }
            let w = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_column_slice(
                d,
                k,
                &runs[best].1[..d * k],
            ))?;
            let ce_max_cosine = w.max_pairwise_cosine();
            Ok(HardmaxRow {
                tau,
                ce_max_cosine,
                hardmax_reference: reference,
                gap: (ce_max_cosine - reference).abs(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::closed_forms::{simplex_etf, uniform_circle};
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn random_instance(seed: u64, d: usize, k: usize, n: usize) -> (SphericalConfiguration, LabeledFeatures) {
        let mut rng = restart_rng(seed, 0);
        let w = random_columns(&mut rng, d, k);
        let h = random_columns(&mut rng, d, k * n);
        let w = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_vec(d, k, w)).unwrap();
        let h = SphericalConfiguration::from_matrix(nalgebra::DMatrix::from_vec(d, k * n, h)).unwrap();
        (w, LabeledFeatures::class_major(h, n).unwrap())
    }

    /// Straightforward double loop, independent of the kernel.
    fn ce_oracle(w: &SphericalConfiguration, h: &LabeledFeatures, tau: f64) -> f64 {
        let mut total = 0.0;
        for (i, &y) in h.labels.iter().enumerate() {
            let hi = h.features.column(i);
            let logits: Vec<f64> = (0..w.count()).map(|j| dot(w.column(j), hi) / tau).collect();
            let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = mx + logits.iter().map(|z| (z - mx).exp()).sum::<f64>().ln();
            total += lse - logits[y];
        }
        total / h.len() as f64
    }

    #[test]
    fn ce_examples() {
        let w = SphericalConfiguration::from_vectors(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
        let h = LabeledFeatures::class_major(w.clone(), 1).unwrap();
        let v = smoothed_ce_objective(&w, &h, 1.0).unwrap();
        assert_abs_diff_eq!(v, (1.0 + (-2.0f64).exp()).ln(), epsilon = 1e-14);

        let etf = simplex_etf(4, 5).unwrap();
        let h = LabeledFeatures::class_major(etf.clone(), 1).unwrap();
        let big = smoothed_ce_objective(&etf, &h, 1e6).unwrap();
        assert_abs_diff_eq!(big, 5f64.ln(), epsilon = 1e-5);

        for seed in 0..10 {
            let (w, h) = random_instance(seed, 4, 6, 3);
            let v = smoothed_ce_objective(&w, &h, 0.1).unwrap();
            assert_abs_diff_eq!(v, ce_oracle(&w, &h, 0.1), epsilon = 1e-10);
            assert!(v > 0.0);
        }
    }

    #[test]
    fn ce_errors() {
        let (w, h) = random_instance(1, 3, 4, 1);
        assert!(matches!(smoothed_ce_objective(&w, &h, 0.0), Err(Error::InvalidConfig(_))));
        let bad = LabeledFeatures::new(h.features.clone(), vec![0, 1, 2, 9]).unwrap();
        assert!(matches!(
            smoothed_ce_objective(&w, &bad, 1.0),
            Err(Error::LabelOutOfRange { label: 9, classes: 4 })
        ));
        let (w2, _) = random_instance(1, 2, 4, 1);
        assert!(matches!(
            hardmax_objective(&w2, &h),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn hardmax_examples() {
        let w = SphericalConfiguration::from_vectors(&[[0.6, 0.8], [-0.6, -0.8]]).unwrap();
        let h = LabeledFeatures::class_major(w.clone(), 1).unwrap();
        assert_abs_diff_eq!(hardmax_objective(&w, &h).unwrap(), -2.0, epsilon = 1e-15);

        for (d, k) in [(3, 4), (5, 6), (9, 10), (2, 3)] {
            let etf = simplex_etf(d, k).unwrap();
            let h = LabeledFeatures::class_major(etf.clone(), 1).unwrap();
            let kf = k as f64;
            assert_abs_diff_eq!(hardmax_objective(&etf, &h).unwrap(), -kf / (kf - 1.0), epsilon = 1e-12);
        }

        for seed in 0..10 {
            let (w, h) = random_instance(seed, 3, 5, 2);
            let mut best = f64::NEG_INFINITY;
            for k in 0..5 {
                for i in 0..2 {
                    for kp in 0..5 {
                        if kp != k {
                            let hi = h.features.column(k * 2 + i);
                            let v: f64 = (0..3).map(|r| (w.column(kp)[r] - w.column(k)[r]) * hi[r]).sum();
                            best = best.max(v);
                        }
                    }
                }
            }
            let v = hardmax_objective(&w, &h).unwrap();
            assert_abs_diff_eq!(v, best, epsilon = 1e-12);
            assert!((-2.0..=2.0).contains(&v));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for seed in 0..6 {
            let (w, h) = random_instance(seed, 3, 5, 2);
            for tau in [1.0, 0.3] {
                let (gw, gh) = riemannian_ce_gradient(&w, &h, tau).unwrap();
                let mut rng = restart_rng(seed + 100, 1);
                // directional derivative along a random tangent direction through the retraction
                for _ in 0..4 {
                    let mut dw: Vec<f64> = (0..gw.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    let mut dh: Vec<f64> = (0..gh.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
                    project_tangent(w.matrix().as_slice(), &mut dw, 3);
                    project_tangent(h.features.matrix().as_slice(), &mut dh, 3);
                    let eps = 1e-6;
                    let shifted = |sign: f64| {
                        let mut wx: Vec<f64> = w.matrix().as_slice().iter().zip(&dw).map(|(a, b)| a + sign * eps * b).collect();
                        let mut hx: Vec<f64> = h.features.matrix().as_slice().iter().zip(&dh).map(|(a, b)| a + sign * eps * b).collect();
                        normalize_columns(&mut wx, 3);
                        normalize_columns(&mut hx, 3);
                        ce_kernel(&wx, &hx, &h.labels, 3, tau, CeMode::Mean, None)
                    };
                    let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * eps);
                    let analytic = dot(&gw, &dw) + dot(&gh, &dh);
                    let rel = (fd - analytic).abs() / analytic.abs().max(1e-8);
                    assert!(rel < 1e-5, "fd {fd} analytic {analytic}");
                }
            }
        }
    }

    #[test]
    fn log_scaled_gradient_matches_finite_differences() {
        let (w, h) = random_instance(3, 3, 4, 2);
        let mut x = w.matrix().as_slice().to_vec();
        x.extend_from_slice(h.features.matrix().as_slice());
        for tau in [0.5, 0.05, 0.005] {
            let obj = JointCe { d: 3, k: 4, labels: &h.labels, tau };
            let mut g = vec![0.0; x.len()];
            obj.eval(&x, Some(&mut g));
            for idx in [0, 5, 13, 20] {
                let eps = 1e-7;
                let mut xp = x.clone();
                xp[idx] += eps;
                let mut xm = x.clone();
                xm[idx] -= eps;
                let fd = (obj.eval(&xp, None) - obj.eval(&xm, None)) / (2.0 * eps);
                assert!((fd - g[idx]).abs() < 1e-5 * g[idx].abs().max(1.0), "{tau} {fd} {}", g[idx]);
            }
        }
        let obj = PairwiseLse { d: 3, tau: 0.05 };
        let wx = w.matrix().as_slice().to_vec();
        let mut g = vec![0.0; wx.len()];
        obj.eval(&wx, Some(&mut g));
        for idx in 0..wx.len() {
            let eps = 1e-7;
            let mut xp = wx.clone();
            xp[idx] += eps;
            let mut xm = wx.clone();
            xm[idx] -= eps;
            let fd = (obj.eval(&xp, None) - obj.eval(&xm, None)) / (2.0 * eps);
            assert!((fd - g[idx]).abs() < 1e-5);
        }
    }

    #[test]
    fn smoothing_sandwich() {
        for seed in 0..20 {
            let (w, h) = random_instance(seed, 4, 7, 3);
            let hard = hardmax_objective(&w, &h).unwrap();
            for tau in [1.0, 0.1, 0.01, 0.001] {
                let s = smoothed_max_margin(&w, &h, tau).unwrap();
                let terms = (h.len() * (w.count() - 1)) as f64;
                assert!(hard <= s + 1e-12);
                assert!(s <= hard + tau * terms.ln() + 1e-12);
            }
        }
    }

    #[test]
    fn descent_keeps_unit_norms_and_decreases() {
        let (w, h) = random_instance(5, 3, 6, 1);
        let mut x = w.matrix().as_slice().to_vec();
        x.extend_from_slice(h.features.matrix().as_slice());
        let mut last = f64::INFINITY;
        for tau in geometric_schedule(1.0, 5) {
            let obj = JointCe { d: 3, k: 6, labels: &h.labels, tau };
            let before = obj.eval(&x, None);
            let out = riemannian_descent(
                &obj,
                &mut x,
                &DescentOptions { max_iters: 50, step_size: 0.1, grad_tol: 1e-9 },
            )
            .unwrap();
            assert!(out.value <= before);
            for c in x.chunks_exact(3) {
                assert!((dot(c, c).sqrt() - 1.0).abs() < 1e-12);
            }
            last = out.value;
        }
        assert!(last.is_finite());
    }

    #[test]
    fn config_validation() {
        let mut c = SolverConfig::new(2, 4);
        assert!(c.validate().is_ok());
        c.tau_schedule = vec![];
        assert!(solve_softmax_code(&c).is_err());
        c.tau_schedule = vec![0.5, 1.0];
        assert!(c.validate().is_err());
        let c = SolverConfig::new(2, 1);
        assert!(matches!(solve_tammes(&c), Err(Error::InvalidConfig(_))));
        assert_eq!(default_restarts(4), 16);
        assert_eq!(default_restarts(5), 8);
    }

    #[test]
    fn circle_softmax_code() {
        let mut cfg = SolverConfig::new(2, 8);
        cfg.restarts = 8;
        let report = solve_softmax_code(&cfg).unwrap();
        assert_abs_diff_eq!(report.achieved, 1.0 - (std::f64::consts::PI / 4.0).cos(), epsilon = 1e-4);
        assert_eq!(report.per_restart.len(), 8);
        assert_abs_diff_eq!(report.recompute().unwrap(), report.achieved, epsilon = 1e-8);
        assert!(report.best_config.is_normalized());
    }

    #[test]
    fn tetrahedron_and_octahedron() {
        let mut cfg = SolverConfig::new(3, 4);
        cfg.restarts = 4;
        let r = solve_softmax_code(&cfg).unwrap();
        let g = r.best_config.gram();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_abs_diff_eq!(g[(i, j)], -1.0 / 3.0, epsilon = 1e-3);
                }
            }
        }
        let t = solve_tammes(&cfg).unwrap();
        assert_abs_diff_eq!(t.achieved, (8.0f64 / 3.0).sqrt(), epsilon = 1e-3);

        let mut cfg = SolverConfig::new(3, 6);
        cfg.restarts = 4;
        assert_abs_diff_eq!(solve_softmax_code(&cfg).unwrap().achieved, 1.0, epsilon = 1e-3);
        assert_abs_diff_eq!(solve_tammes(&cfg).unwrap().achieved, 2f64.sqrt(), epsilon = 1e-3);
    }

    #[test]
    fn tammes_circle() {
        let mut cfg = SolverConfig::new(2, 7);
        cfg.restarts = 4;
        let r = solve_tammes(&cfg).unwrap();
        let oracle = crate::geometry::rho_one_vs_one(&uniform_circle(7, 0.0).unwrap());
        assert_abs_diff_eq!(r.achieved, oracle, epsilon = 1e-4);
        assert_abs_diff_eq!(r.recompute().unwrap(), r.achieved, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_reports() {
        let mut cfg = SolverConfig::new(3, 5);
        cfg.restarts = 3;
        cfg.seed = 42;
        let a = solve_softmax_code(&cfg).unwrap();
        let b = solve_softmax_code(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn optimal_features_examples() {
        let etf = simplex_etf(3, 4).unwrap();
        let h = solve_optimal_features(&etf, 2).unwrap();
        for k in 0..4 {
            for i in 0..2 {
                for r in 0..3 {
                    assert_abs_diff_eq!(h.features.column(2 * k + i)[r], etf.column(k)[r], epsilon = 1e-10);
                }
            }
        }
        let circ = uniform_circle(7, 0.2).unwrap();
        let h = solve_optimal_features(&circ, 1).unwrap();
        for k in 0..7 {
            for r in 0..2 {
                assert_abs_diff_eq!(h.features.column(k)[r], circ.column(k)[r], epsilon = 1e-10);
            }
        }
        assert_abs_diff_eq!(
            hardmax_objective(&circ, &h).unwrap(),
            -rho_one_vs_rest(&circ),
            epsilon = 1e-10
        );

        // a configuration with rattlers: value is still minus the smallest distance
        let c = SphericalConfiguration::from_vectors(&[
            [1.0, 0.0],
            [0.0, 1.0],
            [-1.0, 0.0],
            [(269f64).to_radians().cos(), (269f64).to_radians().sin()],
        ])
        .unwrap();
        let h = solve_optimal_features(&c, 1).unwrap();
        assert_abs_diff_eq!(hardmax_objective(&c, &h).unwrap(), -rho_one_vs_rest(&c), epsilon = 1e-10);
    }

    #[test]
    fn hardmax_verification_small_cases() {
        let rows = verify_hardmax_convergence(3, 2, &[1.0, 0.1], 2, 0).unwrap();
        for r in &rows {
            assert_abs_diff_eq!(r.ce_max_cosine, -1.0, epsilon = 1e-6);
            assert_abs_diff_eq!(r.hardmax_reference, -1.0, epsilon = 1e-6);
        }
        let rows = verify_hardmax_convergence(2, 4, &[0.1, 0.02], 4, 0).unwrap();
        assert_abs_diff_eq!(rows.last().unwrap().ce_max_cosine, 0.0, epsilon = 1e-4);
        assert!(verify_hardmax_convergence(3, 7, &[0.1, 0.5], 2, 0).is_err());
    }
}
