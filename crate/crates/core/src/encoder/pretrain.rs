//! Masked-language-model loss and the pre-training loop.

use std::path::{Path, PathBuf};

use log::info;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint;
use super::masking::{apply_masking, MaskedBatch, MaskingPolicy};
use super::model::EncoderModel;
use super::optim::{clip_grad_norm, warmup_lr, Adam};
use super::params::Params;
use crate::error::{Error, Result};
use crate::tokenize::{encode, TokenSeq, Vocabulary};

/// Loss and logits of one MLM evaluation.
#[derive(Debug, Clone)]
pub struct MlmOutput {
    /// Mean cross-entropy over labeled positions.
    pub loss: f64,
    /// `attended_len x vocab_size` logits for every sequence.
    pub logits: Vec<Array2<f64>>,
}

pub fn forward_mlm(model: &EncoderModel, batch: &MaskedBatch) -> Result<MlmOutput> {
    let labeled: usize = batch.iter().map(|s| s.n_labeled()).sum();
    if labeled == 0 {
        return Err(Error::InvalidArgument("batch has no labeled positions".into()));
    }
    let mut total = 0.0;
    let mut logits = Vec::with_capacity(batch.len());
    for seq in batch {
        let hidden = model.hidden_states(&seq.ids);
        let lg = model.mlm_logits(&hidden.view());
        for (pos, label) in seq.targets() {
            let row = lg.row(pos);
            let m = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            total += lse - row[label as usize];
        }
        logits.push(lg);
    }
    Ok(MlmOutput {
        loss: total / labeled as f64,
        logits,
    })
}

/// Mean MLM loss over labeled positions and its gradient. Dropout is
/// applied only when `dropout_rng` is given.
pub fn mlm_loss_and_grad<R: Rng>(
    model: &EncoderModel,
    batch: &MaskedBatch,
    mut dropout_rng: Option<&mut R>,
) -> Result<(f64, Params)> {
    let labeled: usize = batch.iter().map(|s| s.n_labeled()).sum();
    if labeled == 0 {
        return Err(Error::InvalidArgument("batch has no labeled positions".into()));
    }
    let weight = 1.0 / labeled as f64;
    let mut grads = Params::zeros(&model.config);
    let mut total = 0.0;
    for seq in batch {
        let targets = seq.targets();
        if targets.is_empty() {
            continue;
        }
        let cache = model.forward(&seq.ids, dropout_rng.as_deref_mut());
        total += model.mlm_targets_loss(&cache, &targets, weight, Some(&mut grads));
    }
    Ok((total * weight, grads))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Global gradient-norm bound; 0 disables clipping.
    pub grad_clip: f64,
    pub warmup_fraction: f64,
    pub policy: MaskingPolicy,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 32,
            learning_rate: 2e-3,
            grad_clip: 1.0,
            warmup_fraction: 0.05,
            policy: MaskingPolicy::default(),
            seed: 23,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainReport {
    pub epoch_losses: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
    pub steps: u64,
}

pub fn checkpoint_name(epoch: usize) -> String {
    format!("epoch-{epoch:03}.ckpt")
}

/// Trains `model` in place. When `checkpoint_dir` is given one checkpoint
/// is written per epoch.
pub fn pretrain<S: AsRef<str>>(
    model: &mut EncoderModel,
    corpus: &[S],
    vocab: &Vocabulary,
    cfg: &PretrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<PretrainReport> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty pre-training corpus".into()));
    }
    if vocab.len() != model.config.vocab_size {
        return Err(Error::InvalidArgument(format!(
            "vocabulary has {} tokens but the model expects {}",
            vocab.len(),
            model.config.vocab_size
        )));
    }
    cfg.policy.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut report = PretrainReport {
        epoch_losses: Vec::new(),
        checkpoints: Vec::new(),
        steps: 0,
    };
    if cfg.epochs == 0 {
        return Ok(report);
    }
    if let Some(dir) = checkpoint_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let vocab_hash = vocab.sha256();
    let seqs: Vec<TokenSeq> = corpus
        .iter()
        .map(|t| encode(t.as_ref(), vocab, model.config.max_len))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let static_masks =
        (!cfg.policy.dynamic).then(|| apply_masking(&seqs, &cfg.policy, model.config.vocab_size, &mut rng));

    let batches_per_epoch = seqs.len().div_ceil(cfg.batch_size);
    let total_steps = (batches_per_epoch * cfg.epochs) as u64;
    let warmup = (cfg.warmup_fraction * total_steps as f64).ceil() as u64;
    let mut adam = Adam::new(&model.config);
    let mut order: Vec<usize> = (0..seqs.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut labeled_sum) = (0.0, 0usize);
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let masked: MaskedBatch = match &static_masks {
                Some(all) => chunk.iter().map(|&i| all[i].clone()).collect(),
                None => {
                    let batch: Vec<TokenSeq> = chunk.iter().map(|&i| seqs[i].clone()).collect();
                    apply_masking(&batch, &cfg.policy, model.config.vocab_size, &mut rng)
                }
            };
            let labeled: usize = masked.iter().map(|s| s.n_labeled()).sum();
            if labeled == 0 {
                continue;
            }
            let (loss, mut grads) = mlm_loss_and_grad(model, &masked, Some(&mut rng))?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi + 1,
                    loss,
                });
            }
            clip_grad_norm(&mut grads, cfg.grad_clip);
            let lr = warmup_lr(cfg.learning_rate, adam.steps(), warmup);
            adam.step(&mut model.params, &grads, lr);
            if !model.params.all_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi + 1,
                    loss: f64::NAN,
                });
            }
            loss_sum += loss * labeled as f64;
            labeled_sum += labeled;
        }
        let epoch_loss = loss_sum / labeled_sum.max(1) as f64;
        info!("pretrain epoch {epoch}: loss {epoch_loss:.4}");
        report.epoch_losses.push(epoch_loss);
        if let Some(dir) = checkpoint_dir {
            let path = dir.join(checkpoint_name(epoch));
            checkpoint::save(&path, model, &vocab_hash, None, Some(epoch))?;
            report.checkpoints.push(path);
        }
    }
    report.steps = adam.steps();
    Ok(report)
}
