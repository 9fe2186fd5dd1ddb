use std::io::Write;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{batch_loss_and_grads, mean_loss, PolicyDims, PolicyParams};
use super::PolicyError;
use crate::corpus::AnchorExample;
use crate::numerics::{clip_global_norm, OptimizerKind, OptimizerState};
use crate::scalar::Scalar;
use crate::span::Span;

/// Policy training hyperparameters. Defaults are desk-scale; see
/// [`TrainConfig::large_scale`] for the large-data setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub max_input_len: usize,
    pub max_span_len: usize,
    pub seed: u64,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub num_layers: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub embedding_init: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            learning_rate: 1e-3,
            batch_size: 32,
            optimizer: OptimizerKind::Adam,
            max_input_len: 128,
            max_span_len: 10,
            seed: 0,
            embedding_dim: 128,
            hidden_dim: 128,
            num_layers: 2,
            clip_norm: Some(1.0),
            embedding_init: 0.1,
        }
    }
}

impl TrainConfig {
    /// Learning rate 1e-5 and batch size 512 over 30 epochs.
    pub fn large_scale() -> Self {
        Self {
            learning_rate: 1e-5,
            batch_size: 512,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("max_input_len", self.max_input_len),
            ("max_span_len", self.max_span_len),
            ("embedding_dim", self.embedding_dim),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(PolicyError::InvalidConfig(format!("{name} must be positive")));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(PolicyError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.clip_norm.is_some_and(|c| c <= 0.0 || !c.is_finite()) {
            return Err(PolicyError::InvalidConfig("clip_norm must be positive".into()));
        }
        if !(self.embedding_init >= 0.0 && self.embedding_init.is_finite()) {
            return Err(PolicyError::InvalidConfig("embedding_init must be non-negative".into()));
        }
        if self.max_span_len > self.max_input_len {
            return Err(PolicyError::InvalidConfig(
                "max_span_len must not exceed max_input_len".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self, vocab_size: usize) -> PolicyDims {
        PolicyDims {
            vocab_size,
            embedding_dim: self.embedding_dim,
            hidden_dim: self.hidden_dim,
            num_layers: self.num_layers,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
}

/// Per-epoch losses and the epoch whose parameters were kept (1-based).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub chosen_epoch: usize,
}

#[derive(Serialize)]
struct LogLine {
    epoch: usize,
    train_loss: f64,
    valid_loss: f64,
    chosen: bool,
}

impl TrainingLog {
    /// One `{epoch, train_loss, valid_loss, chosen}` object per line.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for r in &self.epochs {
            let line = LogLine {
                epoch: r.epoch,
                train_loss: r.train_loss,
                valid_loss: r.valid_loss,
                chosen: r.epoch == self.chosen_epoch,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// 1-based epoch with the lowest validation loss; earliest on ties.
pub fn best_epoch(valid_losses: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &l) in valid_losses.iter().enumerate() {
        if best.is_none_or(|(_, b)| l < b) {
            best = Some((i, l));
        }
    }
    best.map(|(i, _)| i + 1)
}

fn prepare(examples: &[AnchorExample], max_len: usize) -> Result<Vec<(Vec<u32>, Span)>, PolicyError> {
    examples
        .iter()
        .map(|ex| {
            let t = ex.truncate_around_answer(max_len)?;
            Ok((t.context_tokens.ids().to_vec(), t.answer_span))
        })
        .collect()
}

/// Supervised training on anchor examples; keeps the parameters of the epoch
/// with the lowest mean validation loss.
pub fn train_policy<T: Scalar>(
    train: &[AnchorExample],
    valid: &[AnchorExample],
    vocab_size: usize,
    cfg: &TrainConfig,
) -> Result<(PolicyParams<T>, TrainingLog), PolicyError> {
    cfg.validate()?;
    if train.is_empty() || valid.is_empty() {
        return Err(PolicyError::EmptyDataset);
    }
    let train_set = prepare(train, cfg.max_input_len)?;
    let valid_set = prepare(valid, cfg.max_input_len)?;
    let valid_refs: Vec<(&[u32], Span)> = valid_set.iter().map(|(ids, s)| (ids.as_slice(), *s)).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = PolicyParams::<T>::random(cfg.dims(vocab_size), cfg.embedding_init, &mut rng);
    let mut opt = OptimizerState::new(cfg.optimizer, T::of(cfg.learning_rate));
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, PolicyParams<T>)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch_idx) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<(&[u32], Span)> = batch_idx
                .iter()
                .map(|&i| (train_set[i].0.as_slice(), train_set[i].1))
                .collect();
            let (loss, mut grads) = batch_loss_and_grads(&params, &batch, cfg.max_input_len)
                .map_err(|e| e.with_context(epoch, b + 1))?;
            let loss = loss.to_f64_lossy();
            if !loss.is_finite() {
                return Err(PolicyError::NonFiniteLoss { epoch, batch: b + 1 });
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, T::of(c));
            }
            opt.step(&mut params.tensors_mut(), &grads)?;
            epoch_loss += loss * batch.len() as f64;
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let valid_loss = mean_loss(&params, &valid_refs, cfg.max_input_len)?.to_f64_lossy();
        if !valid_loss.is_finite() {
            return Err(PolicyError::NonFiniteLoss { epoch, batch: 0 });
        }
        info!("epoch {epoch}: train loss {train_loss:.5}, valid loss {valid_loss:.5}");
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            valid_loss,
        });
        if best.as_ref().is_none_or(|(b, _)| valid_loss < *b) {
            debug!("new best checkpoint at epoch {epoch}");
            best = Some((valid_loss, params.clone()));
        }
    }
    let losses: Vec<f64> = log.epochs.iter().map(|r| r.valid_loss).collect();
    log.chosen_epoch = best_epoch(&losses).unwrap_or(0);
    let (_, chosen) = best.ok_or(PolicyError::EmptyDataset)?;
    Ok((chosen, log))
}
