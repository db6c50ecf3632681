//! Dynamic token masking for (whole-word) masked language modelling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::vocab::{MASK_ID, NUM_SPECIAL};
use crate::tokenize::TokenSeq;

/// Label value at positions that do not contribute to the loss.
pub const IGNORE_LABEL: i32 = -100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskingMode {
    /// Independent per-piece selection.
    Mlm,
    /// Whole words (all of their pieces) are selected together.
    Wwmlm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MaskingPolicy {
    pub mode: MaskingMode,
    pub mask_ratio: f64,
    /// Probabilities of replacing a selected position with `[MASK]`, a
    /// random token, or leaving it unchanged.
    pub action_split: [f64; 3],
    pub dynamic: bool,
}

impl Default for MaskingPolicy {
    fn default() -> Self {
        Self {
            mode: MaskingMode::Mlm,
            mask_ratio: 0.15,
            action_split: [0.8, 0.1, 0.1],
            dynamic: true,
        }
    }
}

impl MaskingPolicy {
    pub fn whole_word() -> Self {
        Self {
            mode: MaskingMode::Wwmlm,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.mask_ratio) {
            return Err(Error::Config(format!(
                "mask_ratio must be in [0,1), got {}",
                self.mask_ratio
            )));
        }
        let sum: f64 = self.action_split.iter().sum();
        if self.action_split.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "action_split must be a distribution, got {:?}",
                self.action_split
            )));
        }
        Ok(())
    }
}

/// What happened to a selected position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskAction {
    Mask,
    Random,
    Keep,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaskedSeq {
    /// Attended ids only (no padding), with masking applied.
    pub ids: Vec<u32>,
    /// Original id at selected positions, `IGNORE_LABEL` elsewhere.
    pub labels: Vec<i32>,
    pub actions: Vec<Option<MaskAction>>,
}

impl MaskedSeq {
    /// `(position, original id)` for every selected position.
    pub fn targets(&self) -> Vec<(usize, u32)> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l != IGNORE_LABEL)
            .map(|(i, &l)| (i, l as u32))
            .collect()
    }

    pub fn n_labeled(&self) -> usize {
        self.labels.iter().filter(|&&l| l != IGNORE_LABEL).count()
    }
}

pub type MaskedBatch = Vec<MaskedSeq>;

/// Selects positions per `policy` and applies the mask/random/keep action.
/// Every call draws fresh randomness from `rng`.
pub fn apply_masking<R: Rng>(
    batch: &[TokenSeq],
    policy: &MaskingPolicy,
    vocab_size: usize,
    rng: &mut R,
) -> MaskedBatch {
    batch
        .iter()
        .map(|seq| {
            let n = seq.attended_len();
            let mut ids = seq.ids[..n].to_vec();
            let mut labels = vec![IGNORE_LABEL; n];
            let mut actions = vec![None; n];
            let mut selected = vec![false; n];
            match policy.mode {
                MaskingMode::Mlm => {
                    for g in &seq.word_groups {
                        for i in g.clone() {
                            selected[i] = rng.random_bool(policy.mask_ratio);
                        }
                    }
                }
                MaskingMode::Wwmlm => {
                    for g in &seq.word_groups {
                        if rng.random_bool(policy.mask_ratio) {
                            selected[g.clone()].fill(true);
                        }
                    }
                }
            }
            for i in 0..n {
                if !selected[i] {
                    continue;
                }
                labels[i] = ids[i] as i32;
                let u: f64 = rng.random();
                let action = if u < policy.action_split[0] {
                    ids[i] = MASK_ID;
                    MaskAction::Mask
                } else if u < policy.action_split[0] + policy.action_split[1] {
                    ids[i] = rng.random_range(NUM_SPECIAL as u32..vocab_size as u32);
                    MaskAction::Random
                } else {
                    MaskAction::Keep
                };
                actions[i] = Some(action);
            }
            MaskedSeq { ids, labels, actions }
        })
        .collect()
}
