//! Linear softmax classifiers and their training loops.
//!
//! The unified classifier is trained either on fused soft labels
//! ([`train_soft`], optionally class-balanced) or directly through a fusion
//! loss with the model output standing in for the fused variable
//! ([`train_bp`]).

use std::fs::File;
use std::hash::Hasher;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use fnv::FnvHasher;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, UhcError};
use crate::label_model::{softmax_in_place, ClassSubset, HCPrediction, PredictionProfile};

/// Multinomial logistic regression: `softmax(W x + b)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    classes: usize,
    dim: usize,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self { classes, dim, weights: vec![0.0; classes * dim], bias: vec![0.0; classes] }
    }

    /// Weights drawn from `N(0, scale²)`, zero bias.
    pub fn random(classes: usize, dim: usize, scale: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, scale).expect("finite scale");
        let weights = (0..classes * dim).map(|_| normal.sample(&mut rng)).collect();
        Self { classes, dim, weights, bias: vec![0.0; classes] }
    }

    pub fn from_parts(classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if weights.len() != classes * dim || bias.len() != classes {
            return Err(UhcError::invalid("weight or bias length does not match model shape"));
        }
        if weights.iter().chain(&bias).any(|x| !x.is_finite()) {
            return Err(UhcError::invalid("model parameters must be finite"));
        }
        Ok(Self { classes, dim, weights, bias })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// All parameters, weights first then bias.
    pub fn params(&self) -> Vec<f64> {
        let mut p = self.weights.clone();
        p.extend_from_slice(&self.bias);
        p
    }

    pub fn set_params(&mut self, params: &[f64]) {
        let (w, b) = params.split_at(self.weights.len());
        self.weights.copy_from_slice(w);
        self.bias.copy_from_slice(b);
    }

    pub fn num_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let row = &self.weights[k * self.dim..(k + 1) * self.dim];
            *o = self.bias[k] + row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>();
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.classes];
        self.logits_into(x, &mut out);
        out
    }

    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.logits(x);
        softmax_in_place(&mut out);
        out
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Fraction of samples whose argmax equals the label.
    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        if features.is_empty() {
            return 0.0;
        }
        let hits = features.iter().zip(labels).filter(|(x, &y)| self.predict(x) == y).count();
        hits as f64 / features.len() as f64
    }

    /// Stable content hash of shape and parameters.
    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write_usize(self.classes);
        h.write_usize(self.dim);
        for x in self.weights.iter().chain(&self.bias) {
            h.write_u64(x.to_bits());
        }
        h.finish()
    }
}

pub(crate) fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in x.iter().enumerate() {
        if *v > x[best] {
            best = i;
        }
    }
    best
}

/// Mini-batch SGD with momentum; the step size drops from `lr_initial` to
/// `lr_final` halfway through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_initial: f64,
    pub lr_final: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 20, lr_initial: 0.1, lr_final: 0.01, momentum: 0.9, batch_size: 64, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || !(self.lr_initial > 0.0) || !(self.lr_final > 0.0) {
            return Err(UhcError::invalid("epochs, batch size and step sizes must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(UhcError::invalid("momentum must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if epoch < self.epochs / 2 {
            self.lr_initial
        } else {
            self.lr_final
        }
    }

    /// Sample order for every epoch, derived from the seed alone.
    pub fn batch_order(&self, samples: usize) -> Vec<Vec<usize>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut idx: Vec<usize> = (0..samples).collect();
        (0..self.epochs)
            .map(|_| {
                idx.shuffle(&mut rng);
                idx.clone()
            })
            .collect()
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = FnvHasher::default();
        h.write_usize(self.epochs);
        h.write_u64(self.lr_initial.to_bits());
        h.write_u64(self.lr_final.to_bits());
        h.write_u64(self.momentum.to_bits());
        h.write_usize(self.batch_size);
        h.write_u64(self.seed);
        h.finish()
    }
}

/// Per-class loss weights, the inverse mean fused probability of each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
}

const BALANCE_FLOOR: f64 = 1e-6;

pub fn compute_balance_weights<T: AsRef<[f64]>>(labels: &[T]) -> Result<ClassWeights> {
    let first = labels.first().ok_or_else(|| UhcError::invalid("no labels to balance"))?;
    let classes = first.as_ref().len();
    let mut mean = vec![0.0; classes];
    for q in labels {
        let q = q.as_ref();
        if q.len() != classes {
            return Err(UhcError::invalid("labels have inconsistent lengths"));
        }
        for (m, x) in mean.iter_mut().zip(q) {
            *m += x;
        }
    }
    let n = labels.len() as f64;
    let weights = mean.iter().map(|m| 1.0 / (m / n).max(BALANCE_FLOOR)).collect();
    Ok(ClassWeights { weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: SoftmaxModel,
    /// Mean per-sample loss of each epoch, accumulated over its batches.
    pub loss_curve: Vec<f64>,
}

struct Momentum {
    velocity: Vec<f64>,
}

impl Momentum {
    fn step(&mut self, model: &mut SoftmaxModel, grad: &[f64], lr: f64, mu: f64) {
        let nw = model.weights.len();
        for (k, (v, g)) in self.velocity.iter_mut().zip(grad).enumerate() {
            *v = mu * *v + g;
            if k < nw {
                model.weights[k] -= lr * *v;
            } else {
                model.bias[k - nw] -= lr * *v;
            }
        }
    }
}

fn check_features(model: &SoftmaxModel, features: &[Vec<f64>], targets: usize) -> Result<()> {
    if features.len() != targets {
        return Err(UhcError::invalid(format!("{} feature rows but {} targets", features.len(), targets)));
    }
    if features.is_empty() {
        return Err(UhcError::invalid("no training samples"));
    }
    if let Some(row) = features.iter().find(|x| x.len() != model.dim) {
        return Err(UhcError::invalid(format!("feature dimension {} does not match model dimension {}", row.len(), model.dim)));
    }
    Ok(())
}

/// Accumulate `g_logits ⊗ x` into the parameter gradient.
#[inline]
fn accumulate(grad: &mut [f64], g_logits: &[f64], x: &[f64], dim: usize) {
    let nw = g_logits.len() * dim;
    for (k, &gk) in g_logits.iter().enumerate() {
        if gk == 0.0 {
            continue;
        }
        let row = &mut grad[k * dim..(k + 1) * dim];
        for (r, xi) in row.iter_mut().zip(x) {
            *r += gk * xi;
        }
        grad[nw + k] += gk;
    }
}

fn run_sgd<F>(model: &SoftmaxModel, samples: usize, config: &TrainConfig, lr_scale: f64, mut batch_loss: F) -> Result<TrainOutcome>
where
    F: FnMut(&SoftmaxModel, &[usize], &mut [f64]) -> f64,
{
    config.validate()?;
    let mut model = model.clone();
    let mut grad = vec![0.0; model.num_params()];
    let mut opt = Momentum { velocity: vec![0.0; model.num_params()] };
    let mut loss_curve = Vec::with_capacity(config.epochs);
    for (epoch, order) in config.batch_order(samples).into_iter().enumerate() {
        let lr = config.learning_rate(epoch) * lr_scale;
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = batch_loss(&model, batch, &mut grad);
            total += loss * batch.len() as f64;
            opt.step(&mut model, &grad, lr, config.momentum);
        }
        loss_curve.push(total / samples as f64);
        if model.weights.iter().any(|w| !w.is_finite()) {
            return Err(UhcError::invalid(format!("training diverged in epoch {epoch}")));
        }
    }
    Ok(TrainOutcome { model, loss_curve })
}

/// Mean (optionally class-weighted) soft-label cross-entropy over a batch and
/// its gradient, accumulated into `grad`.
pub fn soft_batch_loss<T: AsRef<[f64]>>(
    model: &SoftmaxModel,
    features: &[Vec<f64>],
    targets: &[T],
    weights: &[f64],
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    let inv = 1.0 / batch.len() as f64;
    let mut probs = vec![0.0; model.classes];
    let mut g = vec![0.0; model.classes];
    let mut loss = 0.0;
    for &s in batch {
        let x = &features[s];
        let q = targets[s].as_ref();
        model.logits_into(x, &mut probs);
        let max = probs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + probs.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        let mut mass = 0.0;
        for k in 0..model.classes {
            let a = weights[k] * q[k];
            loss -= a * (probs[k] - lse);
            mass += a;
        }
        for k in 0..model.classes {
            let s_k = (probs[k] - lse).exp();
            g[k] = (mass * s_k - weights[k] * q[k]) * inv;
        }
        accumulate(grad, &g, x, model.dim);
    }
    loss * inv
}

/// Fit `model` to soft targets by minimising (class-weighted) cross-entropy.
pub fn train_soft<T: AsRef<[f64]>>(
    model: &SoftmaxModel,
    features: &[Vec<f64>],
    targets: &[T],
    config: &TrainConfig,
    weights: Option<&ClassWeights>,
) -> Result<TrainOutcome> {
    check_features(model, features, targets.len())?;
    if let Some(t) = targets.iter().find(|t| t.as_ref().len() != model.classes) {
        return Err(UhcError::invalid(format!("target length {} does not match {} classes", t.as_ref().len(), model.classes)));
    }
    let ones;
    let w: &[f64] = match weights {
        Some(cw) => {
            if cw.weights.len() != model.classes {
                return Err(UhcError::invalid("class weight length does not match model"));
            }
            &cw.weights
        }
        None => {
            ones = vec![1.0; model.classes];
            &ones
        }
    };
    run_sgd(model, features.len(), config, 1.0, |m, batch, grad| soft_batch_loss(m, features, targets, w, batch, grad))
}

/// Fusion losses the model can be trained through directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BpMethod {
    /// Model logits play the role of `u` in the cross-entropy objective.
    Ce,
    /// Model probabilities are `u`; `v` is solved in closed form.
    MfProb,
    /// Model logits are `u`; `v ≥ 0` and `c` are solved in closed form.
    MfLogitFree { lambda: f64 },
    /// Model logits are `u` with `v = 1`; `c` is solved in closed form.
    MfLogitFixed,
}

/// Step-size multiplier for probability-space backpropagation, whose loss is
/// much smaller in scale than the others.
pub const MF_PROB_LR_SCALE: f64 = 150.0;

/// Step-size multiplier for fixed-scale logit backpropagation. Its loss is
/// an unbounded quadratic in the logits with curvature growing with the HC
/// count, and at the shared rate momentum SGD diverges.
pub const MF_LOGIT_FIXED_LR_SCALE: f64 = 0.1;

impl BpMethod {
    pub fn lr_scale(&self) -> f64 {
        match self {
            BpMethod::MfProb => MF_PROB_LR_SCALE,
            BpMethod::MfLogitFixed => MF_LOGIT_FIXED_LR_SCALE,
            _ => 1.0,
        }
    }
}

/// Per-sample fusion loss at model logits `z`, writing `∂loss/∂z` into `g`.
/// Auxiliary variables are solved with `u` held fixed and treated as
/// constants when differentiating.
pub fn bp_sample_loss(method: BpMethod, logits: &[f64], profile: &PredictionProfile, g: &mut [f64]) -> f64 {
    g.iter_mut().for_each(|x| *x = 0.0);
    let n = profile.num_classifiers();
    match method {
        BpMethod::Ce => {
            let mut loss = 0.0;
            for i in 0..n {
                let members = profile.members(i);
                let col = profile.p().column(i);
                let max = members.iter().map(|&l| logits[l]).fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                let mut mass = 0.0;
                for &l in members {
                    sum += (logits[l] - max).exp();
                    mass += col[l];
                }
                let lse = max + sum.ln();
                for &l in members {
                    g[l] += mass * (logits[l] - lse).exp() - col[l];
                    loss -= col[l] * (logits[l] - lse);
                }
            }
            loss
        }
        BpMethod::MfProb => {
            let mut u = logits.to_vec();
            softmax_in_place(&mut u);
            let mut d_u = vec![0.0; u.len()];
            let mut loss = 0.0;
            for i in 0..n {
                let members = profile.members(i);
                let col = profile.p().column(i);
                let (mut num, mut den) = (0.0, 0.0);
                for &l in members {
                    num += col[l] * u[l];
                    den += u[l] * u[l];
                }
                let v = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                for &l in members {
                    let r = col[l] - u[l] * v;
                    loss += r * r;
                    d_u[l] -= 2.0 * r * v;
                }
            }
            let dot: f64 = u.iter().zip(&d_u).map(|(a, b)| a * b).sum();
            for ((gk, uk), dk) in g.iter_mut().zip(&u).zip(&d_u) {
                *gk = uk * (dk - dot);
            }
            loss
        }
        BpMethod::MfLogitFree { lambda } => {
            let u = logits;
            let z = profile.z();
            let mut loss = 0.0;
            let mut v_sq = 0.0;
            for i in 0..n {
                let members = profile.members(i);
                let zc = z.column(i);
                let k = members.len() as f64;
                let u_mean = members.iter().map(|&l| u[l]).sum::<f64>() / k;
                let z_mean = members.iter().map(|&l| zc[l]).sum::<f64>() / k;
                let (mut num, mut den) = (0.0, lambda);
                for &l in members {
                    let du = u[l] - u_mean;
                    num += du * (zc[l] - z_mean);
                    den += du * du;
                }
                let v = if den > 0.0 { (num / den).max(0.0) } else { 0.0 };
                let c = z_mean - u_mean * v;
                v_sq += v * v;
                for &l in members {
                    let r = zc[l] - u[l] * v - c;
                    loss += r * r;
                    g[l] -= 2.0 * r * v;
                }
            }
            let u_sq: f64 = u.iter().map(|x| x * x).sum();
            for (gk, uk) in g.iter_mut().zip(u) {
                *gk += 2.0 * lambda * uk;
            }
            loss + lambda * (u_sq + v_sq)
        }
        BpMethod::MfLogitFixed => {
            let u = logits;
            let z = profile.z();
            let mut loss = 0.0;
            for i in 0..n {
                let members = profile.members(i);
                let zc = z.column(i);
                let c = members.iter().map(|&l| zc[l] - u[l]).sum::<f64>() / members.len() as f64;
                for &l in members {
                    let r = zc[l] - u[l] - c;
                    loss += r * r;
                    g[l] -= 2.0 * r;
                }
            }
            loss
        }
    }
}

/// Mean fusion loss over a batch with its parameter gradient accumulated
/// into `grad`.
pub fn bp_batch_loss(
    model: &SoftmaxModel,
    features: &[Vec<f64>],
    profiles: &[PredictionProfile],
    method: BpMethod,
    batch: &[usize],
    grad: &mut [f64],
) -> f64 {
    let inv = 1.0 / batch.len() as f64;
    let mut logits = vec![0.0; model.classes];
    let mut g = vec![0.0; model.classes];
    let mut loss = 0.0;
    for &s in batch {
        model.logits_into(&features[s], &mut logits);
        loss += bp_sample_loss(method, &logits, &profiles[s], &mut g);
        g.iter_mut().for_each(|x| *x *= inv);
        accumulate(grad, &g, &features[s], model.dim);
    }
    loss * inv
}

/// Train through a fusion loss without estimating labels first.
pub fn train_bp(
    model: &SoftmaxModel,
    features: &[Vec<f64>],
    profiles: &[PredictionProfile],
    method: BpMethod,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    check_features(model, features, profiles.len())?;
    if let Some(p) = profiles.iter().find(|p| p.num_classes() != model.classes) {
        return Err(UhcError::invalid(format!("profile has {} classes, model has {}", p.num_classes(), model.classes)));
    }
    run_sgd(model, features.len(), config, method.lr_scale(), |m, batch, grad| {
        bp_batch_loss(m, features, profiles, method, batch, grad)
    })
}

/// A classifier trained on a subset of the universe; its model outputs are
/// indexed by position within `subset`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceClassifier {
    pub subset: ClassSubset,
    pub model: SoftmaxModel,
}

impl SourceClassifier {
    pub fn new(subset: ClassSubset, model: SoftmaxModel) -> Result<Self> {
        if subset.len() != model.classes() {
            return Err(UhcError::invalid("model output size does not match subset size"));
        }
        Ok(Self { subset, model })
    }

    pub fn predict(&self, x: &[f64]) -> HCPrediction {
        let logits = self.model.logits(x);
        HCPrediction::from_logits(self.subset.clone(), logits).expect("finite logits on a valid subset")
    }

    /// Accuracy on samples whose label lies in the subset, labels given in
    /// universe indices.
    pub fn accuracy(&self, features: &[Vec<f64>], labels: &[usize]) -> f64 {
        let mut hits = 0;
        let mut total = 0;
        for (x, &y) in features.iter().zip(labels) {
            if let Some(pos) = self.subset.position(y) {
                total += 1;
                if self.model.predict(x) == pos {
                    hits += 1;
                }
            }
        }
        if total == 0 {
            0.0
        } else {
            hits as f64 / total as f64
        }
    }
}

/// On-disk model record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub seed: u64,
    pub config_hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_labels: Option<Vec<String>>,
}

pub const CHECKPOINT_VERSION: u32 = 1;

impl Checkpoint {
    pub fn new(model: &SoftmaxModel, config: &TrainConfig) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            classes: model.classes,
            dim: model.dim,
            weights: model.weights.clone(),
            bias: model.bias.clone(),
            seed: config.seed,
            config_hash: format!("{:016x}", config.fingerprint()),
            class_labels: None,
        }
    }

    pub fn model(&self) -> Result<SoftmaxModel> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(UhcError::invalid(format!("unsupported checkpoint version {}", self.format_version)));
        }
        SoftmaxModel::from_parts(self.classes, self.dim, self.weights.clone(), self.bias.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r = BufReader::new(File::open(path)?);
        Ok(serde_json::from_reader(r)?)
    }
}
