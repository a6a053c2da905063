//! Quality regression head, score aggregation and head training.
//!
//! The head maps one feature vector to one score through two fully connected
//! stages with a rectifier between them. A model's quality is the mean of its
//! per-projection scores, and training minimizes the squared error of that
//! mean against the label.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::projection::ViewpointId;
use crate::sampling::SeededRng;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_HIDDEN: usize = 128;

/// Trained head parameters, stored in single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights {
    pub extractor_id: String,
    pub hidden: usize,
    pub dim: usize,
    /// `hidden` x `dim`, row-major.
    pub w1: Vec<f32>,
    pub b1: Vec<f32>,
    pub w2: Vec<f32>,
    pub b2: f32,
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct WeightsFile {
    schema_version: u32,
    extractor_id: String,
    hidden: usize,
    dim: usize,
    W1: Vec<Vec<f32>>,
    b1: Vec<f32>,
    W2: Vec<Vec<f32>>,
    b2: f32,
}

impl HeadWeights {
    pub fn zeros(extractor_id: impl Into<String>, dim: usize, hidden: usize) -> Self {
        HeadWeights {
            extractor_id: extractor_id.into(),
            hidden,
            dim,
            w1: vec![0.0; hidden * dim],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }

    /// Glorot-uniform weights and zero biases.
    pub fn random(extractor_id: impl Into<String>, dim: usize, hidden: usize, seed: u64) -> Self {
        HeadParams::init(dim, hidden, &mut SeededRng::new(seed)).to_weights(extractor_id.into(), None)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::DimensionMismatch("head dim and hidden must be >= 1".into()));
        }
        if self.w1.len() != self.hidden * self.dim || self.b1.len() != self.hidden || self.w2.len() != self.hidden {
            return Err(Error::DimensionMismatch(format!(
                "head shapes inconsistent with hidden={} dim={}",
                self.hidden, self.dim
            )));
        }
        let all = self.w1.iter().chain(&self.b1).chain(&self.w2).chain(std::iter::once(&self.b2));
        if all.into_iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("head weights contain a non-finite value".into()));
        }
        Ok(())
    }

    /// Checks that features from `extractor_id` with `dim` values fit this head.
    pub fn check_compatible(&self, dim: usize, extractor_id: &str) -> Result<()> {
        if dim != self.dim {
            return Err(Error::DimensionMismatch(format!(
                "features have dim {dim} but head expects {}",
                self.dim
            )));
        }
        if extractor_id != self.extractor_id {
            return Err(Error::DimensionMismatch(format!(
                "features come from `{extractor_id}` but head was trained for `{}`",
                self.extractor_id
            )));
        }
        Ok(())
    }

    /// Multiply-adds for one forward pass.
    pub fn multiply_adds(&self) -> usize {
        self.hidden * self.dim + self.hidden
    }

    pub fn parameter_count(&self) -> usize {
        self.hidden * self.dim + 2 * self.hidden + 1
    }

    fn to_file(&self) -> WeightsFile {
        WeightsFile {
            schema_version: SCHEMA_VERSION,
            extractor_id: self.extractor_id.clone(),
            hidden: self.hidden,
            dim: self.dim,
            W1: self.w1.chunks(self.dim).map(<[f32]>::to_vec).collect(),
            b1: self.b1.clone(),
            W2: vec![self.w2.clone()],
            b2: self.b2,
        }
    }

    fn from_file(f: WeightsFile) -> Result<Self> {
        if f.schema_version != SCHEMA_VERSION {
            return Err(Error::DimensionMismatch(format!(
                "unsupported weights schema_version {} (expected {SCHEMA_VERSION})",
                f.schema_version
            )));
        }
        if f.W1.len() != f.hidden || f.W1.iter().any(|r| r.len() != f.dim) {
            return Err(Error::DimensionMismatch(format!("W1 is not {}x{}", f.hidden, f.dim)));
        }
        if f.W2.len() != 1 {
            return Err(Error::DimensionMismatch("W2 must have exactly one row".into()));
        }
        let w = HeadWeights {
            extractor_id: f.extractor_id,
            hidden: f.hidden,
            dim: f.dim,
            w1: f.W1.concat(),
            b1: f.b1,
            w2: f.W2.into_iter().next().unwrap(),
            b2: f.b2,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        HeadWeights::from_file(serde_json::from_str(text)?)
    }
}

pub fn save_weights(w: &HeadWeights, path: &Path) -> Result<()> {
    w.validate()?;
    fs::write(path, w.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<HeadWeights> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::WeightsNotFound(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    HeadWeights::from_json(&text)
}

/// `W2 · relu(W1 · f + b1) + b2`.
pub fn regress_quality(f: &FeatureVector, w: &HeadWeights) -> Result<f64> {
    w.check_compatible(f.dim(), &f.extractor_id)?;
    let mut out = w.b2 as f64;
    for h in 0..w.hidden {
        let row = &w.w1[h * w.dim..(h + 1) * w.dim];
        let z = row.iter().zip(&f.values).map(|(&a, &b)| a as f64 * b).sum::<f64>() + w.b1[h] as f64;
        if z > 0.0 {
            out += w.w2[h] as f64 * z;
        }
    }
    Ok(out)
}

/// Arithmetic mean of per-projection scores.
pub fn aggregate_scores(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("cannot aggregate an empty score list"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityResult {
    pub per_projection: Vec<f64>,
    pub aggregate: f64,
    pub seed: u64,
    pub viewpoints: Vec<ViewpointId>,
}

pub fn score_features(features: &[FeatureVector], w: &HeadWeights, seed: u64, viewpoints: Vec<ViewpointId>) -> Result<QualityResult> {
    let per_projection = features.iter().map(|f| regress_quality(f, w)).collect::<Result<Vec<_>>>()?;
    let aggregate = aggregate_scores(&per_projection)?;
    Ok(QualityResult {
        per_projection,
        aggregate,
        seed,
        viewpoints,
    })
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

/// One labeled model: the features of each of its sampled projections.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainItem {
    pub features: Vec<FeatureVector>,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    /// Adaptive-moment mini-batch descent.
    #[default]
    Adam,
    /// Full-batch gradient descent that halves its step (and retries) whenever
    /// a step would increase the loss.
    GuardedDescent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossTarget {
    /// Loss on each model's averaged score.
    #[default]
    Aggregate,
    /// Loss on every projection score against its model's label.
    PerProjection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub decay_ratio: f64,
    pub decay_every: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub loss_target: LossTarget,
    /// Train on z-scored features; the scaling is folded into the saved W1/b1.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: DEFAULT_HIDDEN,
            learning_rate: 1e-4,
            decay_ratio: 0.9,
            decay_every: 5,
            batch_size: 32,
            epochs: 50,
            seed: 0,
            optimizer: Optimizer::Adam,
            loss_target: LossTarget::Aggregate,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.batch_size == 0 || self.epochs == 0 || self.decay_every == 0 {
            return Err(Error::invalid("hidden, batch_size, epochs and decay_every must be >= 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.decay_ratio > 0.0 && self.decay_ratio <= 1.0) {
            return Err(Error::invalid("decay ratio must lie in (0, 1]"));
        }
        Ok(())
    }

    /// Step size in effect during `epoch` (0-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.decay_ratio.powi((epoch / self.decay_every) as i32)
    }
}

/// Double-precision head parameters used while training.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams {
    pub dim: usize,
    pub hidden: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl HeadParams {
    pub fn init(dim: usize, hidden: usize, rng: &mut SeededRng) -> Self {
        let l1 = (6.0 / (dim + hidden) as f64).sqrt();
        let l2 = (6.0 / (hidden + 1) as f64).sqrt();
        HeadParams {
            dim,
            hidden,
            w1: (0..hidden * dim).map(|_| rng.random_range(-l1..=l1)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden).map(|_| rng.random_range(-l2..=l2)).collect(),
            b2: 0.0,
        }
    }

    pub fn zeros_like(&self) -> Self {
        HeadParams {
            dim: self.dim,
            hidden: self.hidden,
            w1: vec![0.0; self.w1.len()],
            b1: vec![0.0; self.hidden],
            w2: vec![0.0; self.hidden],
            b2: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Parameter `i` in the flat order W1, b1, W2, b2.
    pub fn get(&self, i: usize) -> f64 {
        self.flat_ref(i).map(|v| *v).unwrap_or(self.b2)
    }

    pub fn set(&mut self, i: usize, v: f64) {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        match i {
            i if i < a => self.w1[i] = v,
            i if i < a + b => self.b1[i - a] = v,
            i if i < a + b + c => self.w2[i - a - b] = v,
            _ => self.b2 = v,
        }
    }

    fn flat_ref(&self, i: usize) -> Option<&f64> {
        let (a, b, c) = (self.w1.len(), self.b1.len(), self.w2.len());
        match i {
            i if i < a => Some(&self.w1[i]),
            i if i < a + b => Some(&self.b1[i - a]),
            i if i < a + b + c => Some(&self.w2[i - a - b]),
            _ => None,
        }
    }

    fn for_each_mut(&mut self, other: &HeadParams, mut f: impl FnMut(&mut f64, f64)) {
        for (p, g) in self.w1.iter_mut().zip(&other.w1) {
            f(p, *g);
        }
        for (p, g) in self.b1.iter_mut().zip(&other.b1) {
            f(p, *g);
        }
        for (p, g) in self.w2.iter_mut().zip(&other.w2) {
            f(p, *g);
        }
        f(&mut self.b2, other.b2);
    }

    /// Forward pass; also returns the pre-activations.
    fn forward(&self, x: &[f64], z: &mut [f64]) -> f64 {
        let mut out = self.b2;
        for h in 0..self.hidden {
            let row = &self.w1[h * self.dim..(h + 1) * self.dim];
            z[h] = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.b1[h];
            if z[h] > 0.0 {
                out += self.w2[h] * z[h];
            }
        }
        out
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut z = vec![0.0; self.hidden];
        self.forward(x, &mut z)
    }

    fn backward(&self, x: &[f64], z: &[f64], dq: f64, grad: &mut HeadParams) {
        grad.b2 += dq;
        for h in 0..self.hidden {
            if z[h] > 0.0 {
                grad.w2[h] += dq * z[h];
                let dz = dq * self.w2[h];
                grad.b1[h] += dz;
                let row = &mut grad.w1[h * self.dim..(h + 1) * self.dim];
                for (g, xi) in row.iter_mut().zip(x) {
                    *g += dz * xi;
                }
            }
        }
    }

    /// Converts to stored weights, folding a feature standardization
    /// `(x - mean) / scale` into the first stage when given.
    pub fn to_weights(&self, extractor_id: String, scaling: Option<&Standardizer>) -> HeadWeights {
        let mut w1 = self.w1.clone();
        let mut b1 = self.b1.clone();
        if let Some(s) = scaling {
            for h in 0..self.hidden {
                let row = &mut w1[h * self.dim..(h + 1) * self.dim];
                let mut shift = 0.0;
                for d in 0..self.dim {
                    row[d] /= s.scale[d];
                    shift += row[d] * s.mean[d];
                }
                b1[h] -= shift;
            }
        }
        HeadWeights {
            extractor_id,
            hidden: self.hidden,
            dim: self.dim,
            w1: w1.iter().map(|&v| v as f32).collect(),
            b1: b1.iter().map(|&v| v as f32).collect(),
            w2: self.w2.iter().map(|&v| v as f32).collect(),
            b2: self.b2 as f32,
        }
    }
}

/// A batch in training form: per item, its projection inputs and label.
pub struct Batch<'a> {
    pub inputs: Vec<&'a [Vec<f64>]>,
    pub labels: Vec<f64>,
}

/// Mean squared error of a batch and its gradient with respect to every
/// head parameter.
pub fn loss_and_gradient(params: &HeadParams, batch: &Batch<'_>, target: LossTarget) -> (f64, HeadParams) {
    let mut grad = params.zeros_like();
    let mut z = vec![0.0; params.hidden];
    let mut zs: Vec<Vec<f64>> = Vec::new();
    let mut loss = 0.0;
    match target {
        LossTarget::Aggregate => {
            let n = batch.labels.len() as f64;
            for (proj, &y) in batch.inputs.iter().zip(&batch.labels) {
                zs.clear();
                let mut q = 0.0;
                for x in proj.iter() {
                    q += params.forward(x, &mut z);
                    zs.push(z.clone());
                }
                let m = proj.len() as f64;
                let err = q / m - y;
                loss += err * err / n;
                let dq = 2.0 * err / n / m;
                for (x, zx) in proj.iter().zip(&zs) {
                    params.backward(x, zx, dq, &mut grad);
                }
            }
        }
        LossTarget::PerProjection => {
            let total: usize = batch.inputs.iter().map(|p| p.len()).sum();
            let n = total as f64;
            for (proj, &y) in batch.inputs.iter().zip(&batch.labels) {
                for x in proj.iter() {
                    let err = params.forward(x, &mut z) - y;
                    loss += err * err / n;
                    params.backward(x, &z, 2.0 * err / n, &mut grad);
                }
            }
        }
    }
    (loss, grad)
}

/// Per-dimension z-scoring fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: impl Iterator<Item = Vec<f64>> + Clone, dim: usize) -> Self {
        let mut mean = vec![0.0; dim];
        let mut n = 0.0;
        for r in rows.clone() {
            for (m, v) in mean.iter_mut().zip(&r) {
                *m += v;
            }
            n += 1.0;
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for d in 0..dim {
                var[d] += (r[d] - mean[d]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub validation_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub weights: HeadWeights,
    pub history: Vec<EpochStats>,
    /// Epoch whose weights were kept.
    pub best_epoch: usize,
}

struct Prepared {
    inputs: Vec<Vec<Vec<f64>>>,
    labels: Vec<f64>,
}

fn prepare(items: &[TrainItem], scaling: Option<&Standardizer>) -> Prepared {
    Prepared {
        inputs: items
            .iter()
            .map(|it| {
                it.features
                    .iter()
                    .map(|f| match scaling {
                        Some(s) => s.apply(&f.values),
                        None => f.values.clone(),
                    })
                    .collect()
            })
            .collect(),
        labels: items.iter().map(|it| it.label).collect(),
    }
}

impl Prepared {
    fn batch(&self, idx: &[usize]) -> Batch<'_> {
        Batch {
            inputs: idx.iter().map(|&i| self.inputs[i].as_slice()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn all(&self) -> Batch<'_> {
        self.batch(&(0..self.labels.len()).collect::<Vec<_>>())
    }
}

fn check_items(items: &[TrainItem], min: usize) -> Result<(usize, String)> {
    if items.len() < min {
        return Err(Error::invalid(format!("need at least {min} training items, got {}", items.len())));
    }
    let first = items
        .iter()
        .flat_map(|it| it.features.first())
        .next()
        .ok_or_else(|| Error::invalid("training items carry no features"))?;
    let (dim, id) = (first.dim(), first.extractor_id.clone());
    for (i, it) in items.iter().enumerate() {
        if it.features.is_empty() {
            return Err(Error::invalid(format!("training item {i} has no projections")));
        }
        if !it.label.is_finite() {
            return Err(Error::NonFinite(format!("label of training item {i}")));
        }
        if let Some(f) = it.features.iter().find(|f| f.dim() != dim || f.extractor_id != id) {
            return Err(Error::DimensionMismatch(format!(
                "training item {i} has {}-dim `{}` features, expected {dim}-dim `{id}`",
                f.dim(),
                f.extractor_id
            )));
        }
    }
    Ok((dim, id))
}

/// Fits the head. With a validation set, the weights from the epoch with the
/// lowest validation loss are returned; otherwise the lowest training loss
/// decides.
pub fn train_head(train: &[TrainItem], validation: Option<&[TrainItem]>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let (dim, extractor_id) = check_items(train, 2)?;
    if let Some(v) = validation {
        let (vd, vid) = check_items(v, 1)?;
        if vd != dim || vid != extractor_id {
            return Err(Error::DimensionMismatch("validation features differ from training features".into()));
        }
    }

    let scaling = cfg.standardize.then(|| {
        let rows = train.iter().flat_map(|it| it.features.iter().map(|f| f.values.clone()));
        Standardizer::fit(rows, dim)
    });
    let data = prepare(train, scaling.as_ref());
    let val = validation.map(|v| prepare(v, scaling.as_ref()));

    let mut rng = SeededRng::new(cfg.seed);
    let mut params = HeadParams::init(dim, cfg.hidden, &mut rng);
    let mut m = params.zeros_like();
    let mut v = params.zeros_like();
    let (beta1, beta2, eps) = (0.9f64, 0.999f64, 1e-8);
    let mut step = 0i32;
    let mut guarded_lr = cfg.learning_rate;

    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, params.clone());

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        match cfg.optimizer {
            Optimizer::Adam => {
                order.shuffle(&mut rng);
                for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
                    let (loss, grad) = loss_and_gradient(&params, &data.batch(chunk), cfg.loss_target);
                    if !loss.is_finite() {
                        return Err(Error::NonFinite(format!(
                            "training loss diverged at epoch {epoch}, batch {bi} (lr {lr:e})"
                        )));
                    }
                    step += 1;
                    let c1 = 1.0 - beta1.powi(step);
                    let c2 = 1.0 - beta2.powi(step);
                    m.for_each_mut(&grad, |mi, g| *mi = beta1 * *mi + (1.0 - beta1) * g);
                    v.for_each_mut(&grad, |vi, g| *vi = beta2 * *vi + (1.0 - beta2) * g * g);
                    let mut upd = m.clone();
                    upd.for_each_mut(&v, |mi, vi| *mi = lr * (*mi / c1) / ((vi / c2).sqrt() + eps));
                    params.for_each_mut(&upd, |p, u| *p -= u);
                }
            }
            Optimizer::GuardedDescent => {
                let all = data.all();
                let (loss, grad) = loss_and_gradient(&params, &all, cfg.loss_target);
                if !loss.is_finite() {
                    return Err(Error::NonFinite(format!("training loss diverged at epoch {epoch}")));
                }
                for _ in 0..60 {
                    let mut trial = params.clone();
                    trial.for_each_mut(&grad, |p, g| *p -= guarded_lr * g);
                    let (trial_loss, _) = loss_and_gradient(&trial, &all, cfg.loss_target);
                    if trial_loss <= loss {
                        params = trial;
                        break;
                    }
                    guarded_lr *= 0.5;
                }
            }
        }

        let (train_loss, _) = loss_and_gradient(&params, &data.all(), cfg.loss_target);
        if !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss diverged after epoch {epoch}")));
        }
        let validation_loss = val
            .as_ref()
            .map(|vd| loss_and_gradient(&params, &vd.all(), LossTarget::Aggregate).0);
        let criterion = validation_loss.unwrap_or(train_loss);
        if criterion < best.0 {
            best = (criterion, epoch, params.clone());
        }
        history.push(EpochStats {
            epoch,
            learning_rate: if cfg.optimizer == Optimizer::GuardedDescent { guarded_lr } else { lr },
            train_loss,
            validation_loss,
        });
    }

    Ok(TrainOutcome {
        weights: best.2.to_weights(extractor_id, scaling.as_ref()),
        history,
        best_epoch: best.1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(values: Vec<f64>) -> FeatureVector {
        FeatureVector::new(values, "t").unwrap()
    }

    #[test]
    fn zero_head_gives_zero() {
        let w = HeadWeights::zeros("t", 4, 8);
        assert_eq!(regress_quality(&fv(vec![1.0, -2.0, 3.0, 9.0]), &w).unwrap(), 0.0);
    }

    #[test]
    fn identity_head_sums_features() {
        let dim = 5;
        let mut w = HeadWeights::zeros("t", dim, dim);
        for i in 0..dim {
            w.w1[i * dim + i] = 1.0;
        }
        w.w2 = vec![1.0; dim];
        let f = fv(vec![0.5, 1.5, 0.0, 2.0, 4.0]);
        assert_eq!(regress_quality(&f, &w).unwrap(), 8.0);
    }

    #[test]
    fn mismatches_rejected() {
        let w = HeadWeights::zeros("t", 4, 8);
        assert!(regress_quality(&fv(vec![1.0; 3]), &w).is_err());
        let other = FeatureVector::new(vec![1.0; 4], "other").unwrap();
        assert!(regress_quality(&other, &w).is_err());
    }

    #[test]
    fn aggregation() {
        assert_eq!(aggregate_scores(&[3.0]).unwrap(), 3.0);
        assert_eq!(aggregate_scores(&[1.0, 2.0, 3.0, 4.0, 5.0]).unwrap(), 3.0);
        assert_eq!(aggregate_scores(&[5.0, 1.0, 4.0, 2.0, 3.0]).unwrap(), 3.0);
        assert!(aggregate_scores(&[]).is_err());
    }

    #[test]
    fn weights_roundtrip_and_errors() {
        let w = HeadWeights::random("baseline-v1", 12, 128, 4);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.json");
        save_weights(&w, &p).unwrap();
        assert_eq!(load_weights(&p).unwrap(), w);

        let missing = load_weights(&dir.path().join("nope.json")).unwrap_err();
        assert!(missing.to_string().starts_with("weights not found"));

        std::fs::write(&p, "{\"schema_version\": 1, \"W1\": [[").unwrap();
        assert!(matches!(load_weights(&p).unwrap_err(), Error::Json(_)));

        let wide = HeadWeights::random("bridge", 768, 128, 4);
        save_weights(&wide, &p).unwrap();
        let loaded = load_weights(&p).unwrap();
        let f = FeatureVector::new(vec![0.1; 12], "baseline-v1").unwrap();
        assert!(matches!(regress_quality(&f, &loaded).unwrap_err(), Error::DimensionMismatch(_)));
    }

    #[test]
    fn shape_mismatch_on_load() {
        let w = HeadWeights::random("t", 3, 4, 1);
        let mut json: serde_json::Value = serde_json::from_str(&w.to_json().unwrap()).unwrap();
        json["hidden"] = serde_json::json!(5);
        assert!(HeadWeights::from_json(&json.to_string()).is_err());
    }

    #[test]
    fn standardization_folds_exactly() {
        let mut rng = SeededRng::new(3);
        let params = HeadParams::init(4, 6, &mut rng);
        let s = Standardizer {
            mean: vec![1.0, -2.0, 0.5, 10.0],
            scale: vec![2.0, 0.5, 1.0, 4.0],
        };
        let w = params.to_weights("t".into(), Some(&s));
        for x in [[0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 3.0, 4.0], [-3.0, 0.2, 9.0, 12.0]] {
            let direct = params.predict(&s.apply(&x));
            let folded = regress_quality(&fv(x.to_vec()), &w).unwrap();
            assert!((direct - folded).abs() < 1e-4 * (1.0 + direct.abs()), "{direct} vs {folded}");
        }
    }

    #[test]
    fn schedule() {
        let c = TrainConfig::default();
        assert_eq!(c.learning_rate_at(0), 1e-4);
        assert_eq!(c.learning_rate_at(4), 1e-4);
        assert!((c.learning_rate_at(5) - 0.9e-4).abs() < 1e-18);
        assert!((c.learning_rate_at(49) - 1e-4 * 0.9f64.powi(9)).abs() < 1e-18);
        assert_eq!((c.batch_size, c.epochs), (32, 50));
    }

    #[test]
    fn training_needs_two_items() {
        let it = TrainItem {
            features: vec![fv(vec![1.0])],
            label: 1.0,
        };
        assert!(train_head(&[it], None, &TrainConfig::default()).is_err());
    }
}
