//! Same-author pair classification over similarity features, plus the
//! evaluation metrics and a Bernoulli random baseline.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::LabeledPair;
use crate::encoder::{cosine_dense, SentenceEncoder};
use crate::error::{Error, Result};
use crate::sparse::{cosine_sparse, TfidfModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairFeatures {
    pub sparse_cos: Option<f64>,
    pub dense_cos: Option<f64>,
}

impl PairFeatures {
    pub const BIAS: f64 = 1.0;
}

pub fn featurize_pair(
    pair: &LabeledPair,
    sparse: Option<&TfidfModel>,
    dense: Option<&SentenceEncoder>,
) -> Result<PairFeatures> {
    if sparse.is_none() && dense.is_none() {
        return Err(Error::InvalidArgument(
            "featurize_pair needs a sparse or dense model".into(),
        ));
    }
    let sparse_cos = sparse.map(|m| cosine_sparse(&m.transform(&pair.text_a), &m.transform(&pair.text_b)));
    let dense_cos = match dense {
        Some(enc) => Some(cosine_dense(&enc.embed(&pair.text_a), &enc.embed(&pair.text_b))?),
        None => None,
    };
    Ok(PairFeatures { sparse_cos, dense_cos })
}

/// Which of the optional features a classifier consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMask {
    pub sparse: bool,
    pub dense: bool,
}

impl FeatureMask {
    pub fn of(f: &PairFeatures) -> Self {
        Self {
            sparse: f.sparse_cos.is_some(),
            dense: f.dense_cos.is_some(),
        }
    }

    /// Number of weights, bias included.
    pub fn width(&self) -> usize {
        1 + self.sparse as usize + self.dense as usize
    }

    fn row(&self, f: &PairFeatures) -> Result<Vec<f64>> {
        let mut x = Vec::with_capacity(self.width());
        if self.sparse {
            x.push(
                f.sparse_cos
                    .ok_or_else(|| Error::InvalidArgument("missing sparse_cos feature".into()))?,
            );
        }
        if self.dense {
            x.push(
                f.dense_cos
                    .ok_or_else(|| Error::InvalidArgument("missing dense_cos feature".into()))?,
            );
        }
        x.push(PairFeatures::BIAS);
        Ok(x)
    }
}

/// Logistic regression; `weights` follow the order sparse, dense, bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairClassifier {
    pub feature_mask: FeatureMask,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClassifierConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// Unused: weights start at zero and training is full-batch.
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            learning_rate: 1.0,
            seed: 0,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(w: &[f64], x: &[f64]) -> f64 {
    w.iter().zip(x).map(|(a, b)| a * b).sum()
}

fn design(mask: FeatureMask, features: &[PairFeatures]) -> Result<Vec<Vec<f64>>> {
    features.iter().map(|f| mask.row(f)).collect()
}

/// Mean log-loss of `weights` on the given rows.
pub fn log_loss(clf: &PairClassifier, features: &[PairFeatures], labels: &[u8]) -> Result<f64> {
    let xs = design(clf.feature_mask, features)?;
    let total: f64 = xs
        .iter()
        .zip(labels)
        .map(|(x, &y)| {
            let z = dot(&clf.weights, x);
            // log(1 + e^z) - y z, computed stably
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - y as f64 * z
        })
        .sum();
    Ok(total / xs.len() as f64)
}

/// Full-batch gradient descent on mean log-loss from zero weights.
pub fn train_classifier(features: &[PairFeatures], labels: &[u8], cfg: &ClassifierConfig) -> Result<PairClassifier> {
    if features.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::InvalidArgument("labels must be 0 or 1".into()));
    }
    let pos = labels.iter().filter(|&&y| y == 1).count();
    if features.len() < 2 || pos == 0 || pos == labels.len() {
        return Err(Error::InvalidArgument("training needs both classes present".into()));
    }
    let mask = FeatureMask::of(&features[0]);
    if !mask.sparse && !mask.dense {
        return Err(Error::InvalidArgument(
            "features carry neither sparse nor dense score".into(),
        ));
    }
    let xs = design(mask, features)?;
    let n = xs.len() as f64;
    let mut w = vec![0.0; mask.width()];
    let mut grad = vec![0.0; w.len()];
    for _ in 0..cfg.epochs {
        grad.iter_mut().for_each(|g| *g = 0.0);
        for (x, &y) in xs.iter().zip(labels) {
            let r = sigmoid(dot(&w, x)) - y as f64;
            for (g, xi) in grad.iter_mut().zip(x) {
                *g += r * xi;
            }
        }
        for (wi, g) in w.iter_mut().zip(&grad) {
            *wi -= cfg.learning_rate * g / n;
        }
    }
    if w.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("classifier weights diverged".into()));
    }
    Ok(PairClassifier {
        feature_mask: mask,
        weights: w,
    })
}

pub fn predict(clf: &PairClassifier, f: &PairFeatures) -> Result<f64> {
    Ok(sigmoid(dot(&clf.weights, &clf.feature_mask.row(f)?)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub recall: f64,
    pub f1: f64,
    /// `None` only from [`evaluate_permissive`] on single-class labels.
    pub roc_auc: Option<f64>,
}

impl Metrics {
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "accuracy": self.accuracy,
            "recall": self.recall,
            "f1": self.f1,
            "roc_auc": self.roc_auc,
        })
    }
}

/// Mann-Whitney AUC from average ranks; tied scores earn half credit.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument("scores and labels differ in length".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::InvalidArgument(
            "ROC AUC is undefined with a single class".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut pos_rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        pos_rank_sum += avg_rank * order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as f64;
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

fn threshold_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> Result<(f64, f64, f64)> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::InvalidArgument(
            "scores and labels must be non-empty and equal in length".into(),
        ));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (s >= threshold, y == 1) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    let accuracy = (tp + tn) as f64 / scores.len() as f64;
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok((accuracy, recall, f1))
}

/// Accuracy, recall and F1 at `threshold` (score >= threshold predicts 1)
/// plus ROC AUC. Errors when only one class is present.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Metrics> {
    let (accuracy, recall, f1) = threshold_metrics(scores, labels, threshold)?;
    Ok(Metrics {
        accuracy,
        recall,
        f1,
        roc_auc: Some(roc_auc(scores, labels)?),
    })
}

/// As [`evaluate`] but leaves `roc_auc` empty instead of failing on
/// single-class labels.
pub fn evaluate_permissive(scores: &[f64], labels: &[u8], threshold: f64) -> Result<Metrics> {
    let (accuracy, recall, f1) = threshold_metrics(scores, labels, threshold)?;
    Ok(Metrics {
        accuracy,
        recall,
        f1,
        roc_auc: roc_auc(scores, labels).ok(),
    })
}

/// Independent Bernoulli(`positive_rate`) predictions.
pub fn random_baseline(n: usize, positive_rate: f64, seed: u64) -> Result<Vec<u8>> {
    if !(0.0..=1.0).contains(&positive_rate) {
        return Err(Error::InvalidArgument(format!(
            "positive_rate must lie in [0, 1], got {positive_rate}"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("random_baseline needs n >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n).map(|_| rng.random_bool(positive_rate) as u8).collect())
}

/// Metric grid with dense models as rows and sparse models as columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricGrid {
    pub rows: Vec<String>,
    pub columns: Vec<String>,
    /// `cells[r][c]`; `None` where neither model is present.
    pub cells: Vec<Vec<Option<Metrics>>>,
}

impl MetricGrid {
    pub fn to_csv(&self, metric: &str) -> Result<String> {
        let pick = |m: &Metrics| -> Result<Option<f64>> {
            Ok(match metric {
                "accuracy" => Some(m.accuracy),
                "recall" => Some(m.recall),
                "f1" => Some(m.f1),
                "roc_auc" => m.roc_auc,
                other => return Err(Error::InvalidArgument(format!("unknown metric {other:?}"))),
            })
        };
        let mut s = format!("dense\\sparse,{}\n", self.columns.join(","));
        for (name, row) in self.rows.iter().zip(&self.cells) {
            s.push_str(name);
            for cell in row {
                s.push(',');
                if let Some(v) = cell.as_ref().map(pick).transpose()?.flatten() {
                    let _ = write!(s, "{v}");
                }
            }
            s.push('\n');
        }
        Ok(s)
    }
}
