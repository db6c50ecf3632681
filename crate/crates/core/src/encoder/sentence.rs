//! Mean-pooled sentence embeddings and triplet fine-tuning.

use std::path::Path;

use log::info;
use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::checkpoint::{self, PoolingSpec};
use super::model::{mean_rows, EncoderModel, ForwardCache};
use super::optim::{clip_grad_norm, warmup_lr, Adam};
use super::params::Params;
use crate::error::{Error, Result};
use crate::tokenize::{encode, Vocabulary};

pub type DenseVector = Array1<f64>;

/// An encoder plus mean pooling over attended positions.
#[derive(Debug, Clone, PartialEq)]
pub struct SentenceEncoder {
    pub model: EncoderModel,
    pub vocab: Vocabulary,
    /// Whether `[CLS]`/`[SEP]` states take part in the mean.
    pub include_special: bool,
}

impl SentenceEncoder {
    pub fn new(model: EncoderModel, vocab: Vocabulary) -> Result<Self> {
        if vocab.len() != model.config.vocab_size {
            return Err(Error::InvalidArgument(format!(
                "vocabulary has {} tokens but the model expects {}",
                vocab.len(),
                model.config.vocab_size
            )));
        }
        Ok(Self {
            model,
            vocab,
            include_special: true,
        })
    }

    pub fn dim(&self) -> usize {
        self.model.config.hidden
    }

    pub(crate) fn token_ids(&self, text: &str) -> Vec<u32> {
        encode(text, &self.vocab, self.model.config.max_len)
            .attended_ids()
            .to_vec()
    }

    pub(crate) fn pool_range(&self, n: usize) -> std::ops::Range<usize> {
        if self.include_special || n <= 2 {
            0..n
        } else {
            1..n - 1
        }
    }

    /// Embedding of already-encoded attended ids.
    pub fn embed_ids(&self, ids: &[u32]) -> DenseVector {
        let hidden = self.model.hidden_states(ids);
        mean_rows(&hidden, self.pool_range(ids.len()))
    }

    pub fn embed(&self, text: &str) -> DenseVector {
        self.embed_ids(&self.token_ids(text))
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine_dense(&self.embed(a), &self.embed(b)).expect("same dimension")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        checkpoint::save(
            path,
            &self.model,
            &self.vocab.sha256(),
            Some(PoolingSpec {
                include_special: self.include_special,
            }),
            None,
        )
    }

    /// Loads a checkpoint and checks it against `vocab`.
    pub fn load(path: &Path, vocab: Vocabulary) -> Result<Self> {
        let (model, header) = checkpoint::load(path)?;
        if header.vocab_sha256 != vocab.sha256() {
            return Err(Error::Format(format!(
                "{} was trained with a different vocabulary",
                path.display()
            )));
        }
        let mut enc = Self::new(model, vocab)?;
        if let Some(p) = header.pooling {
            enc.include_special = p.include_special;
        }
        Ok(enc)
    }
}

/// Standard cosine similarity; 0 when either norm is 0.
pub fn cosine_dense(a: &DenseVector, b: &DenseVector) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension mismatch: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let (na, nb) = (a.dot(a).sqrt(), b.dot(b).sqrt());
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok((a.dot(b) / (na * nb)).clamp(-1.0, 1.0))
}

/// Gradient of `cos(u, v)` with respect to `u`.
fn cosine_grad(u: &DenseVector, v: &DenseVector) -> DenseVector {
    let (nu, nv) = (u.dot(u).sqrt(), v.dot(v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return Array1::zeros(u.len());
    }
    let cos = u.dot(v) / (nu * nv);
    v / (nu * nv) - u * (cos / (nu * nu))
}

/// `max(0, (1 - cos(a,p)) - (1 - cos(a,n)) + margin)`
pub fn triplet_loss(a: &DenseVector, p: &DenseVector, n: &DenseVector, margin: f64) -> f64 {
    let ap = cosine_dense(a, p).expect("same dimension");
    let an = cosine_dense(a, n).expect("same dimension");
    ((1.0 - ap) - (1.0 - an) + margin).max(0.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Triplet {
    pub anchor: String,
    pub positive: String,
    pub negative: String,
}

impl Triplet {
    pub fn new(anchor: impl Into<String>, positive: impl Into<String>, negative: impl Into<String>) -> Self {
        Self {
            anchor: anchor.into(),
            positive: positive.into(),
            negative: negative.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub margin: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub grad_clip: f64,
    pub warmup_fraction: f64,
    pub include_special: bool,
    pub seed: u64,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            margin: 0.25,
            epochs: 3,
            batch_size: 16,
            learning_rate: 3e-4,
            grad_clip: 1.0,
            warmup_fraction: 0.05,
            include_special: true,
            seed: 29,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinetuneReport {
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
    pub skipped_batches: u64,
}

struct Pass {
    cache: ForwardCache,
    range: std::ops::Range<usize>,
    pooled: DenseVector,
}

impl SentenceEncoder {
    fn train_pass(&self, text: &str, rng: &mut ChaCha8Rng) -> Pass {
        let ids = self.token_ids(text);
        let cache = self.model.forward(&ids, Some(rng));
        let range = self.pool_range(ids.len());
        let pooled = mean_rows(&cache.hidden, range.clone());
        Pass { cache, range, pooled }
    }

    fn backward_pooled(&self, pass: &Pass, d_pooled: &DenseVector, grads: &mut Params) {
        let mut d_hidden = Array2::zeros(pass.cache.hidden.raw_dim());
        let share = d_pooled / pass.range.len() as f64;
        for i in pass.range.clone() {
            d_hidden.row_mut(i).assign(&share);
        }
        self.model.backward(&pass.cache, d_hidden, grads);
    }

    /// Mean triplet loss of a batch and its gradient; `None` gradient when
    /// every triplet already satisfies the margin.
    fn triplet_batch(&self, batch: &[&Triplet], margin: f64, rng: &mut ChaCha8Rng) -> (f64, Option<Params>) {
        let mut grads: Option<Params> = None;
        let mut total = 0.0;
        let w = 1.0 / batch.len() as f64;
        for t in batch {
            let a = self.train_pass(&t.anchor, rng);
            let p = self.train_pass(&t.positive, rng);
            let n = self.train_pass(&t.negative, rng);
            let ap = cosine_dense(&a.pooled, &p.pooled).expect("dim");
            let an = cosine_dense(&a.pooled, &n.pooled).expect("dim");
            let loss = an - ap + margin;
            if loss <= 0.0 {
                continue;
            }
            total += loss;
            let g = grads.get_or_insert_with(|| Params::zeros(&self.model.config));
            // d loss = d cos(a,n) - d cos(a,p)
            let d_a = (cosine_grad(&a.pooled, &n.pooled) - cosine_grad(&a.pooled, &p.pooled)) * w;
            let d_p = cosine_grad(&p.pooled, &a.pooled) * -w;
            let d_n = cosine_grad(&n.pooled, &a.pooled) * w;
            self.backward_pooled(&a, &d_a, g);
            self.backward_pooled(&p, &d_p, g);
            self.backward_pooled(&n, &d_n, g);
        }
        (total * w, grads)
    }
}

/// Fine-tunes every encoder parameter on cosine-distance triplet margin
/// loss. Batches in which every triplet already clears the margin leave
/// the parameters and optimizer state untouched.
pub fn finetune_triplet(
    model: EncoderModel,
    vocab: Vocabulary,
    triplets: &[Triplet],
    cfg: &FinetuneConfig,
) -> Result<(SentenceEncoder, FinetuneReport)> {
    if triplets.is_empty() {
        return Err(Error::InvalidArgument("no triplets to fine-tune on".into()));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut enc = SentenceEncoder::new(model, vocab)?;
    enc.include_special = cfg.include_special;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&enc.model.config);
    let total_steps = (triplets.len().div_ceil(cfg.batch_size) * cfg.epochs) as u64;
    let warmup = (cfg.warmup_fraction * total_steps as f64).ceil() as u64;
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    let mut report = FinetuneReport {
        epoch_losses: Vec::new(),
        steps: 0,
        skipped_batches: 0,
    };
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Triplet> = chunk.iter().map(|&i| &triplets[i]).collect();
            let (loss, grads) = enc.triplet_batch(&batch, cfg.margin, &mut rng);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch: bi + 1,
                    loss,
                });
            }
            sum += loss;
            batches += 1;
            let lr = warmup_lr(cfg.learning_rate, step, warmup);
            step += 1;
            match grads {
                Some(mut g) => {
                    clip_grad_norm(&mut g, cfg.grad_clip);
                    adam.step(&mut enc.model.params, &g, lr);
                }
                None => report.skipped_batches += 1,
            }
        }
        let mean = sum / batches.max(1) as f64;
        info!("finetune epoch {epoch}: triplet loss {mean:.4}");
        report.epoch_losses.push(mean);
    }
    report.steps = adam.steps();
    Ok((enc, report))
}

/// Fraction of triplets with `cos(a,p) > cos(a,n)`.
pub fn triplet_satisfaction(enc: &SentenceEncoder, triplets: &[Triplet]) -> f64 {
    if triplets.is_empty() {
        return 0.0;
    }
    let ok = triplets
        .iter()
        .filter(|t| {
            let a = enc.embed(&t.anchor);
            let p = enc.embed(&t.positive);
            let n = enc.embed(&t.negative);
            cosine_dense(&a, &p).unwrap() > cosine_dense(&a, &n).unwrap()
        })
        .count();
    ok as f64 / triplets.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn cosine_cases() {
        let v = array![1.0, 2.0, -0.5];
        assert!((cosine_dense(&v, &v).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_dense(&v, &(-&v)).unwrap() + 1.0).abs() < 1e-15);
        let c = cosine_dense(&array![1.0, 0.0], &array![1.0, 1.0]).unwrap();
        assert!((c - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        assert!(cosine_dense(&array![1.0], &array![1.0, 2.0]).is_err());
        assert_eq!(cosine_dense(&array![0.0, 0.0], &array![1.0, 2.0]).unwrap(), 0.0);
    }

    #[test]
    fn cosine_gradient_matches_difference() {
        let u = array![0.3, -1.2, 0.7];
        let v = array![1.0, 0.4, -0.2];
        let g = cosine_grad(&u, &v);
        for i in 0..3 {
            let h = 1e-6;
            let mut up = u.clone();
            up[i] += h;
            let mut dn = u.clone();
            dn[i] -= h;
            let fd = (cosine_dense(&up, &v).unwrap() - cosine_dense(&dn, &v).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn triplet_loss_with_identical_anchor_and_positive() {
        let a = array![1.0, 0.0];
        let n = array![0.6, 0.8];
        let expected = (0.0 - (1.0 - 0.6) + 0.25f64).max(0.0);
        assert!((triplet_loss(&a, &a, &n, 0.25) - expected).abs() < 1e-12);
        assert_eq!(triplet_loss(&a, &a, &n, 0.0), 0.0);
    }
}
