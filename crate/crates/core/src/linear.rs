//! Softmax linear classifier on frozen features, trained with mini-batch SGD
//! plus momentum, weight decay, a learning-rate schedule, optional
//! inverse-frequency class weights and validation early stopping.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::FeatureMatrix;
use crate::rng::stream;

/// `C x d` weights and `C` biases. Logits are `z_c = W_c . x + b_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearHead {
    num_classes: usize,
    dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    // d x C copy so a row's logits accumulate across classes in one sweep
    weights_t: Vec<f64>,
}

impl LinearHead {
    pub fn new(num_classes: usize, dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if num_classes == 0 || dim == 0 {
            return Err(Error::Shape("a head needs at least one class and one feature".into()));
        }
        if weights.len() != num_classes * dim || bias.len() != num_classes {
            return Err(Error::Shape(format!(
                "head of {num_classes} classes x {dim} features got {} weights and {} biases",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Shape("head parameters must be finite".into()));
        }
        let mut weights_t = vec![0.0; weights.len()];
        for c in 0..num_classes {
            for k in 0..dim {
                weights_t[k * num_classes + c] = weights[c * dim + k];
            }
        }
        Ok(Self {
            num_classes,
            dim,
            weights,
            bias,
            weights_t,
        })
    }

    pub fn zeros(num_classes: usize, dim: usize) -> Result<Self> {
        Self::new(num_classes, dim, vec![0.0; num_classes * dim], vec![0.0; num_classes])
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight_row(&self, c: usize) -> &[f64] {
        &self.weights[c * self.dim..(c + 1) * self.dim]
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Multiplies every weight and bias by `t`.
    pub fn scaled(&self, t: f64) -> Result<Self> {
        Self::new(
            self.num_classes,
            self.dim,
            self.weights.iter().map(|w| w * t).collect(),
            self.bias.iter().map(|b| b * t).collect(),
        )
    }

    pub fn logits(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.check_dim(x.len())?;
        let mut z = vec![0.0; self.num_classes];
        self.logits_into(x, &mut z);
        Ok(z)
    }

    /// Unchecked variant of [`logits`](Self::logits); `out.len()` must be `C`.
    #[inline]
    pub fn logits_into(&self, x: &[f32], out: &mut [f64]) {
        let c = self.num_classes;
        out.fill(0.0);
        for (k, &xk) in x.iter().enumerate() {
            let xk = f64::from(xk);
            let col = &self.weights_t[k * c..(k + 1) * c];
            for (o, &w) in out.iter_mut().zip(col) {
                *o += w * xk;
            }
        }
        for (o, &b) in out.iter_mut().zip(&self.bias) {
            *o += b;
        }
    }

    pub fn predict(&self, features: &FeatureMatrix) -> Result<Vec<u32>> {
        self.check_dim(features.dim())?;
        let mut z = vec![0.0; self.num_classes];
        Ok((0..features.rows())
            .map(|i| {
                self.logits_into(features.row(i), &mut z);
                argmax(&z) as u32
            })
            .collect())
    }

    pub fn predict_row(&self, x: &[f32]) -> Result<u32> {
        Ok(argmax(&self.logits(x)?) as u32)
    }

    /// Fraction of `rows` whose label is among the `k` highest logits,
    /// ties ranked by class index.
    pub fn top_k_accuracy(&self, features: &FeatureMatrix, rows: &[usize], labels: &[u32], k: usize) -> Result<f64> {
        self.check_dim(features.dim())?;
        if rows.len() != labels.len() {
            return Err(Error::Shape(format!("{} rows but {} labels", rows.len(), labels.len())));
        }
        if rows.is_empty() {
            return Err(Error::UndefinedMetric("accuracy over an empty set".into()));
        }
        let mut z = vec![0.0; self.num_classes];
        let hits = rows
            .iter()
            .zip(labels)
            .filter(|(&i, &y)| {
                self.logits_into(features.row(i), &mut z);
                let y = y as usize;
                let ahead = z
                    .iter()
                    .enumerate()
                    .filter(|&(c, &v)| v > z[y] || (v == z[y] && c < y))
                    .count();
                ahead < k
            })
            .count();
        Ok(hits as f64 / rows.len() as f64)
    }

    pub fn accuracy(&self, features: &FeatureMatrix, rows: &[usize], labels: &[u32]) -> Result<f64> {
        self.top_k_accuracy(features, rows, labels, 1)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.dim {
            return Err(Error::Shape(format!("feature dimension {d} does not match head dimension {}", self.dim)));
        }
        Ok(())
    }
}

/// Index of the largest value; the first one on ties.
#[inline]
pub fn argmax(z: &[f64]) -> usize {
    let mut best = 0;
    for (c, &v) in z.iter().enumerate().skip(1) {
        if v > z[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    /// `lr_e = base * (1 + cos(pi * e / t_max)) / 2`
    Cosine { t_max: usize },
    /// `lr_e = base * factor^(e / every)`
    Step { factor: f64, every: usize },
}

impl Schedule {
    pub fn learning_rate(&self, base: f64, epoch: usize) -> f64 {
        match *self {
            Schedule::Cosine { t_max } => {
                base * (1.0 + (std::f64::consts::PI * epoch as f64 / t_max as f64).cos()) / 2.0
            }
            Schedule::Step { factor, every } => base * factor.powi((epoch / every) as i32),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeighting {
    #[default]
    None,
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub early_stop_patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub momentum: f64,
    pub schedule: Schedule,
    #[serde(default)]
    pub class_weighting: ClassWeighting,
    #[serde(default)]
    pub seed: u64,
}

impl TrainConfig {
    /// Linear evaluation on ImageNet features.
    pub fn imagenet_linear() -> Self {
        Self {
            epochs: 60,
            early_stop_patience: 30,
            batch_size: 128,
            learning_rate: 15.0,
            weight_decay: 1e-4,
            momentum: 0.9,
            schedule: Schedule::Step { factor: 0.1, every: 20 },
            class_weighting: ClassWeighting::None,
            seed: 0,
        }
    }

    pub fn cifar10() -> Self {
        Self {
            epochs: 200,
            early_stop_patience: 50,
            batch_size: 128,
            learning_rate: 1e-3,
            weight_decay: 5e-4,
            momentum: 0.9,
            schedule: Schedule::Cosine { t_max: 200 },
            class_weighting: ClassWeighting::None,
            seed: 0,
        }
    }

    pub fn imbalanced_cifar10() -> Self {
        Self {
            learning_rate: 2e-3,
            weight_decay: 0.0,
            class_weighting: ClassWeighting::InverseFrequency,
            ..Self::cifar10()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |why: String| Err(Error::Config(format!("train: {why}")));
        if self.epochs == 0 || self.batch_size == 0 || self.early_stop_patience == 0 {
            return bad("epochs, batch_size and early_stop_patience must be positive".into());
        }
        if self.early_stop_patience > self.epochs {
            return bad(format!(
                "early_stop_patience {} exceeds epochs {}",
                self.early_stop_patience, self.epochs
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive".into());
        }
        if !(self.weight_decay >= 0.0 && (0.0..1.0).contains(&self.momentum)) {
            return bad("weight_decay must be >= 0 and momentum in [0, 1)".into());
        }
        match self.schedule {
            Schedule::Cosine { t_max: 0 } | Schedule::Step { every: 0, .. } => {
                bad("schedule period must be positive".into())
            }
            Schedule::Step { factor, .. } if !(factor > 0.0) => bad("step factor must be positive".into()),
            _ => Ok(()),
        }
    }
}

/// `w_c = n / (C * n_c)`.
pub fn class_weights(labels: &[u32], num_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; num_classes];
    for &l in labels {
        let c = l as usize;
        if c >= num_classes {
            return Err(Error::Weighting(format!("label {l} outside [0, {num_classes})")));
        }
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Weighting(format!("class {c} has no labeled samples")));
    }
    let n = labels.len() as f64;
    Ok(counts.iter().map(|&nc| n / (num_classes as f64 * nc as f64)).collect())
}

/// Mean class-weighted softmax cross-entropy over `rows` plus
/// `(weight_decay / 2) * ||W||^2`, and its gradient w.r.t. `W` and bias.
pub struct Objective<'a> {
    pub features: &'a FeatureMatrix,
    pub labels: &'a [u32],
    pub class_weights: Option<&'a [f64]>,
    pub weight_decay: f64,
    pub num_classes: usize,
}

impl Objective<'_> {
    /// Returns the loss; the gradient is written to `grad_w` / `grad_b`.
    pub fn loss_and_grad(
        &self,
        weights: &[f64],
        bias: &[f64],
        rows: &[usize],
        grad_w: &mut [f64],
        grad_b: &mut [f64],
    ) -> f64 {
        let c_n = self.num_classes;
        let d = self.features.dim();
        grad_w.fill(0.0);
        grad_b.fill(0.0);
        let scale = 1.0 / rows.len() as f64;
        let mut z = vec![0.0; c_n];
        let mut loss = 0.0;
        for &i in rows {
            let x = self.features.row(i);
            let y = self.labels[i] as usize;
            for c in 0..c_n {
                z[c] = dot(&weights[c * d..(c + 1) * d], x) + bias[c];
            }
            let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let shifted_y = z[y] - max;
            let mut sum = 0.0;
            for v in z.iter_mut() {
                *v = (*v - max).exp();
                sum += *v;
            }
            let w = self.class_weights.map_or(1.0, |cw| cw[y]) * scale;
            // -log softmax_y
            loss += w * (sum.ln() - shifted_y);
            for c in 0..c_n {
                let p = z[c] / sum;
                let g = w * (p - if c == y { 1.0 } else { 0.0 });
                grad_b[c] += g;
                let row = &mut grad_w[c * d..(c + 1) * d];
                for (gw, &xk) in row.iter_mut().zip(x) {
                    *gw += g * f64::from(xk);
                }
            }
        }
        if self.weight_decay > 0.0 {
            let mut sq = 0.0;
            for (gw, &wv) in grad_w.iter_mut().zip(weights) {
                *gw += self.weight_decay * wv;
                sq += wv * wv;
            }
            loss += 0.5 * self.weight_decay * sq;
        }
        loss
    }
}

#[inline]
fn dot(w: &[f64], x: &[f32]) -> f64 {
    let mut s = 0.0;
    for (&a, &b) in w.iter().zip(x) {
        s += a * f64::from(b);
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub mean_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    /// Parameters from the epoch with the best validation accuracy.
    pub head: LinearHead,
    pub best_val_accuracy: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Trains a fresh head on `train_rows` of `features`, early-stopping on the
/// validation rows. `labels` is indexed by feature row.
pub fn train(
    features: &FeatureMatrix,
    labels: &[u32],
    train_rows: &[usize],
    val_rows: &[usize],
    num_classes: usize,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_rows.is_empty() {
        return Err(Error::Initialization("training needs at least one labeled sample".into()));
    }
    if val_rows.is_empty() {
        return Err(Error::Initialization("early stopping needs a validation set".into()));
    }
    if labels.len() != features.rows() {
        return Err(Error::Shape(format!("{} labels for {} feature rows", labels.len(), features.rows())));
    }
    if let Some(&i) = train_rows.iter().chain(val_rows).find(|&&i| labels[i] as usize >= num_classes) {
        return Err(Error::Shape(format!("label {} of row {i} outside [0, {num_classes})", labels[i])));
    }
    let d = features.dim();
    let weights_for_classes = match cfg.class_weighting {
        ClassWeighting::None => None,
        ClassWeighting::InverseFrequency => {
            let train_labels: Vec<u32> = train_rows.iter().map(|&i| labels[i]).collect();
            Some(class_weights(&train_labels, num_classes)?)
        }
    };
    let objective = Objective {
        features,
        labels,
        class_weights: weights_for_classes.as_deref(),
        weight_decay: cfg.weight_decay,
        num_classes,
    };
    let val_labels: Vec<u32> = val_rows.iter().map(|&i| labels[i]).collect();

    let mut rng = stream(cfg.seed, "train");
    let bound = 1.0 / (d as f64).sqrt();
    let mut weights: Vec<f64> = (0..num_classes * d).map(|_| rng.random_range(-bound..bound)).collect();
    let mut bias = vec![0.0; num_classes];
    let mut vel_w = vec![0.0; weights.len()];
    let mut vel_b = vec![0.0; num_classes];
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = vec![0.0; num_classes];

    let mut order = train_rows.to_vec();
    let mut best: Option<(f64, usize, LinearHead)> = None;
    let mut history = Vec::new();
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.learning_rate(cfg.learning_rate, epoch);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = objective.loss_and_grad(&weights, &bias, batch, &mut grad_w, &mut grad_b);
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, lr });
            }
            loss_sum += loss * batch.len() as f64;
            for ((w, v), g) in weights.iter_mut().zip(&mut vel_w).zip(&grad_w) {
                *v = cfg.momentum * *v + g;
                *w -= lr * *v;
            }
            for ((b, v), g) in bias.iter_mut().zip(&mut vel_b).zip(&grad_b) {
                *v = cfg.momentum * *v + g;
                *b -= lr * *v;
            }
        }
        let head = LinearHead::new(num_classes, d, weights.clone(), bias.clone())
            .map_err(|_| Error::Divergence { epoch, lr })?;
        let val_accuracy = head.accuracy(features, val_rows, &val_labels)?;
        history.push(EpochRecord {
            epoch,
            learning_rate: lr,
            mean_loss: loss_sum / order.len() as f64,
            val_accuracy,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| val_accuracy > *acc) {
            best = Some((val_accuracy, epoch, head));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.early_stop_patience {
                break;
            }
        }
    }
    let (best_val_accuracy, best_epoch, head) = best.expect("at least one epoch ran");
    Ok(TrainReport {
        head,
        best_val_accuracy,
        best_epoch,
        history,
    })
}
