//! Fine-tuning loop: seeded shuffling, Adam with the configured weight
//! decay, per-epoch validation and best-checkpoint tracking.

use std::io::Write;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::Label;
use crate::classifier::checkpoint::OptimizerState;
use crate::classifier::{softmax, ModelHandle};
use crate::data::LoadedSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    CrossEntropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f32,
    pub weight_decay: f32,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub optimizer: OptimizerKind,
    pub val_every: usize,
    /// Freeze the backbone and train only the classification head.
    pub head_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-4,
            weight_decay: 5e-3,
            batch_size: 32,
            epochs: 80,
            seed: 0,
            loss: LossKind::CrossEntropy,
            optimizer: OptimizerKind::Adam,
            val_every: 1,
            head_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub wall_time_s: f64,
}

#[derive(Debug, Error)]
pub enum TrainerError {
    #[error("leakage detected: video ids shared across partitions: {0:?}")]
    LeakageDetected(Vec<String>),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("empty {0} partition")]
    EmptyPartition(&'static str),
    #[error("invalid train config: {0}")]
    InvalidConfig(String),
    #[error("failed to append history row: {0}")]
    HistoryWrite(String),
}

/// Deterministic batch order for one epoch: a (seed, epoch)-keyed
/// permutation of all sample indices, chunked; the final short batch kept.
pub fn make_batches(n_samples: usize, batch_size: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    assert!(n_samples > 0, "index must be non-empty");
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..n_samples).collect();
    let mix = seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut rng = ChaCha8Rng::seed_from_u64(mix);
    order.shuffle(&mut rng);
    order.chunks(batch_size).map(|c| c.to_vec()).collect()
}

/// Mean cross-entropy over the batch plus the logit gradient.
pub fn cross_entropy(logits: &Array2<f32>, labels: &[Label]) -> (f64, Array2<f32>) {
    let n = labels.len();
    assert_eq!(logits.dim().0, n);
    let probs = softmax(logits);
    let mut loss = 0.0f64;
    let mut grad = probs.clone();
    for (i, label) in labels.iter().enumerate() {
        let y = label.index();
        loss -= (probs[(i, y)].max(1e-12) as f64).ln();
        grad[(i, y)] -= 1.0;
    }
    grad.mapv_inplace(|v| v / n as f32);
    (loss / n as f64, grad)
}

/// Adam with L2 decay folded into the gradient, as in the classic
/// formulation (`g += wd * p` before the moment updates).
pub struct Adam {
    lr: f32,
    weight_decay: f32,
    beta1: f32,
    beta2: f32,
    eps: f32,
    step: u64,
    moments: Vec<(String, Vec<f32>, Vec<f32>)>,
}

impl Adam {
    pub fn new(lr: f32, weight_decay: f32) -> Adam {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            moments: Vec::new(),
        }
    }

    fn moment_entry(&mut self, name: &str, len: usize) -> usize {
        if let Some(i) = self.moments.iter().position(|(n, _, _)| n == name) {
            return i;
        }
        self.moments.push((name.to_string(), vec![0.0; len], vec![0.0; len]));
        self.moments.len() - 1
    }

    pub fn step(&mut self, model: &mut ModelHandle, head_only: bool) {
        self.step += 1;
        let t = self.step as f32;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (lr, wd, b1, b2, eps) = (self.lr, self.weight_decay, self.beta1, self.beta2, self.eps);

        // make sure moment buffers exist before the update pass
        let mut names: Vec<(String, usize)> = Vec::new();
        model.visit_params(head_only, &mut |name, params, _| {
            names.push((name.to_string(), params.len()));
        });
        let indices: Vec<usize> = names
            .iter()
            .map(|(name, len)| self.moment_entry(name, *len))
            .collect();

        let moments = &mut self.moments;
        let mut k = 0usize;
        model.visit_params(head_only, &mut |_, params, grads| {
            let (_, m, v) = &mut moments[indices[k]];
            k += 1;
            for i in 0..params.len() {
                let g = grads[i] + wd * params[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        });
    }

    pub fn state(&self) -> OptimizerState {
        OptimizerState {
            step: self.step,
            moments: self.moments.clone(),
        }
    }
}

/// Result of a training run: the full history plus the best-validation
/// parameter snapshot (already restored into the model by [`train`]).
#[derive(Debug)]
pub struct TrainResult {
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub optimizer: OptimizerState,
}

fn forward_eval(model: &ModelHandle, set: &LoadedSet, batch_size: usize) -> (f64, f64) {
    let n = set.len();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    let mut i = 0;
    while i < n {
        let end = (i + batch_size).min(n);
        let indices: Vec<usize> = (i..end).collect();
        let (x, labels) = set.batch(&indices);
        let logits = model.forward(&x).expect("validation batch shape");
        let (loss, _) = cross_entropy(&logits, &labels);
        loss_sum += loss * labels.len() as f64;
        let probs = softmax(&logits);
        for (k, label) in labels.iter().enumerate() {
            let pred = if probs[(k, 1)] >= 0.5 { Label::Fake } else { Label::Real };
            if pred == *label {
                correct += 1;
            }
        }
        i = end;
    }
    (loss_sum / n as f64, correct as f64 / n as f64)
}

/// Runs the full fine-tuning loop.
///
/// Asserts video-level disjointness of train and val up front, shuffles per
/// epoch with [`make_batches`], validates after every epoch and leaves the
/// model holding the parameters of the best-validation epoch (ties go to
/// the earlier epoch). `history_sink`, when given, receives one CSV row per
/// epoch as it completes.
pub fn train(
    model: &mut ModelHandle,
    train_set: &LoadedSet,
    val_set: &LoadedSet,
    config: &TrainConfig,
    mut history_sink: Option<&mut dyn Write>,
) -> Result<TrainResult, TrainerError> {
    if config.learning_rate <= 0.0 {
        return Err(TrainerError::InvalidConfig("learning_rate must be > 0".into()));
    }
    if config.batch_size < 1 || config.epochs < 1 {
        return Err(TrainerError::InvalidConfig("batch_size and epochs must be >= 1".into()));
    }
    if train_set.is_empty() {
        return Err(TrainerError::EmptyPartition("train"));
    }
    if val_set.is_empty() {
        return Err(TrainerError::EmptyPartition("val"));
    }
    let shared: Vec<String> = train_set
        .video_id_set()
        .intersection(&val_set.video_id_set())
        .cloned()
        .collect();
    if !shared.is_empty() {
        return Err(TrainerError::LeakageDetected(shared));
    }

    if let Some(sink) = history_sink.as_deref_mut() {
        writeln!(sink, "epoch,train_loss,val_loss,val_accuracy,wall_time_s")
            .map_err(|e| TrainerError::HistoryWrite(e.to_string()))?;
    }

    let mut optimizer = Adam::new(config.learning_rate, config.weight_decay);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(usize, f64, Vec<(String, Vec<usize>, Vec<f32>)>)> = None;

    for epoch in 1..=config.epochs {
        let started = Instant::now();
        let batches = make_batches(train_set.len(), config.batch_size, config.seed, epoch);
        let mut loss_sum = 0.0;
        for (batch_id, indices) in batches.iter().enumerate() {
            let (x, labels) = train_set.batch(indices);
            let logits = model.forward_train(&x).expect("train batch shape");
            let (loss, grad) = cross_entropy(&logits, &labels);
            if !loss.is_finite() {
                return Err(TrainerError::NonFiniteLoss { epoch, batch: batch_id });
            }
            loss_sum += loss * labels.len() as f64;
            model.zero_grad();
            model.backward(&grad, config.head_only);
            optimizer.step(model, config.head_only);
        }
        let train_loss = loss_sum / train_set.len() as f64;
        let (val_loss, val_accuracy) = forward_eval(model, val_set, config.batch_size);

        let stats = EpochStats {
            epoch,
            train_loss,
            val_loss,
            val_accuracy,
            wall_time_s: started.elapsed().as_secs_f64(),
        };
        if let Some(sink) = history_sink.as_deref_mut() {
            writeln!(
                sink,
                "{},{},{},{},{:.3}",
                stats.epoch, stats.train_loss, stats.val_loss, stats.val_accuracy, stats.wall_time_s
            )
            .and_then(|_| sink.flush())
            .map_err(|e| TrainerError::HistoryWrite(e.to_string()))?;
        }
        if best.as_ref().map_or(true, |(_, acc, _)| val_accuracy > *acc) {
            best = Some((epoch, val_accuracy, model.snapshot()));
        }
        history.push(stats);
    }

    let (best_epoch, best_val_accuracy, snapshot) = best.expect("epochs >= 1");
    model.restore(&snapshot);
    Ok(TrainResult {
        history,
        best_epoch,
        best_val_accuracy,
        optimizer: optimizer.state(),
    })
}
