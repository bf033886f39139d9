//! Mini-batch SGD over length buckets.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{DropoutMasks, Example, Seq2SeqModel, SoftmaxMode};
use super::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Recurrent dropout keep-probability; 1.0 disables dropout.
    pub keep_prob: f64,
    /// Negatives per step for sampled softmax; full softmax when absent.
    pub sampled_softmax: Option<usize>,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    /// Multiplier applied to the learning rate after every epoch.
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.5,
            batch_size: 16,
            epochs: 10,
            keep_prob: 0.9,
            sampled_softmax: None,
            clip_norm: 5.0,
            lr_decay: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(TrainError::Config("keep_prob must be in (0, 1]"));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TrainError::Config("clip_norm must be positive"));
        }
        if !(self.learning_rate > 0.0) || self.batch_size == 0 {
            return Err(TrainError::Config("learning_rate and batch_size must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(&'static str),
    #[error("loss became non-finite at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("no pair fits any bucket")]
    NoUsablePairs,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-token cross-entropy of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Pairs that fit no bucket and were skipped.
    pub dropped: usize,
    pub steps: usize,
}

/// Trains `model` in place. `on_epoch` sees the epoch number and its mean
/// loss.
pub fn train(
    model: &mut Seq2SeqModel,
    pairs: &[Example],
    config: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport, TrainError> {
    config.validate()?;
    let buckets = model.config().buckets.clone();
    let mut by_bucket: Vec<Vec<usize>> = alloc::vec![Vec::new(); buckets.buckets().len()];
    let mut report = TrainReport::default();
    for (i, ex) in pairs.iter().enumerate() {
        match (ex.context.is_empty(), buckets.bucket_assign(ex.context.len(), ex.target.len() + 1)) {
            (false, Some(b)) => by_bucket[b].push(i),
            _ => report.dropped += 1,
        }
    }
    if report.dropped > 0 {
        log::warn!("{} pairs exceed every bucket and were dropped", report.dropped);
    }
    if config.epochs > 0 && by_bucket.iter().all(Vec::is_empty) {
        return Err(TrainError::NoUsablePairs);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut grads = model.zero_grads();
    let mode = match config.sampled_softmax {
        Some(k) => SoftmaxMode::Sampled(k),
        None => SoftmaxMode::Full,
    };
    let mut lr = config.learning_rate;
    for epoch in 0..config.epochs {
        let mut batches: Vec<Vec<usize>> = Vec::new();
        for bucket in &mut by_bucket {
            bucket.shuffle(&mut rng);
            batches.extend(bucket.chunks(config.batch_size).map(<[usize]>::to_vec));
        }
        batches.shuffle(&mut rng);

        let (mut epoch_loss, mut epoch_tokens) = (0.0, 0usize);
        for (bi, batch) in batches.iter().enumerate() {
            grads.iter_mut().for_each(|g| g.fill(0.0));
            let (mut loss, mut tokens) = (0.0, 0usize);
            for &i in batch {
                let masks = (config.keep_prob < 1.0).then(|| DropoutMasks::sample(model.config(), config.keep_prob, &mut rng));
                let (l, n) = match model.forward_backward(&pairs[i], masks.as_ref(), mode, Some(&mut rng), Some(&mut grads)) {
                    Ok(v) => v,
                    Err(ModelError::NonFinite) => return Err(TrainError::Diverged { epoch, batch: bi }),
                    Err(e) => return Err(e.into()),
                };
                loss += l;
                tokens += n;
            }
            let scale = 1.0 / tokens as f64;
            let norm = libm::sqrt(grads.iter().map(|g| g.sum_sq()).sum::<f64>()) * scale;
            if !norm.is_finite() || !loss.is_finite() {
                return Err(TrainError::Diverged { epoch, batch: bi });
            }
            let clip = if norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };
            let step = lr * scale * clip;
            for (p, g) in model.params_mut().iter_mut().zip(&grads) {
                for (w, d) in p.data.iter_mut().zip(&g.data) {
                    *w -= step * d;
                }
            }
            epoch_loss += loss;
            epoch_tokens += tokens;
            report.steps += 1;
        }
        let mean = epoch_loss / epoch_tokens.max(1) as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
        lr *= config.lr_decay;
    }
    Ok(report)
}
