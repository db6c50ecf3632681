//! WordPiece vocabulary training.
//!
//! Training starts from the observed character alphabet (word-initial
//! characters bare, word-internal characters with the `##` prefix) and then
//! repeatedly merges the adjacent pair with the highest score
//! `freq(pair) / (freq(left) * freq(right))` until the target size is
//! reached or no pair occurs at least `min_frequency` times. Ties go to the
//! lexicographically smallest `(left, right)`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::debug;

use super::emoji::tokenize_with_emojis;
use super::vocab::{Vocabulary, CONTINUATION_PREFIX, NUM_SPECIAL};
use crate::error::{Error, Result};

pub const DEFAULT_MIN_FREQUENCY: u64 = 2;

/// Vocabulary sizes the reference experiments use.
pub const STANDARD_VOCAB_SIZES: [usize; 3] = [15_261, 30_522, 45_783];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WordPieceTrainer {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

impl Default for WordPieceTrainer {
    fn default() -> Self {
        Self {
            vocab_size: 30_522,
            min_frequency: DEFAULT_MIN_FREQUENCY,
        }
    }
}

fn initial_split(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                c.to_string()
            } else {
                format!("{CONTINUATION_PREFIX}{c}")
            }
        })
        .collect()
}

fn merged(left: &str, right: &str) -> String {
    let tail = right.strip_prefix(CONTINUATION_PREFIX).unwrap_or(right);
    format!("{left}{tail}")
}

impl WordPieceTrainer {
    pub fn new(vocab_size: usize, min_frequency: u64) -> Self {
        Self {
            vocab_size,
            min_frequency,
        }
    }

    pub fn train<S: AsRef<str>>(&self, corpus: &[S]) -> Result<Vocabulary> {
        if corpus.is_empty() {
            return Err(Error::InvalidArgument("empty training corpus".into()));
        }
        let mut word_counts: BTreeMap<String, u64> = BTreeMap::new();
        for text in corpus {
            for w in tokenize_with_emojis(text.as_ref()) {
                *word_counts.entry(w).or_default() += 1;
            }
        }

        let mut words: Vec<(Vec<String>, u64)> = word_counts.iter().map(|(w, &c)| (initial_split(w), c)).collect();
        let alphabet: BTreeSet<String> = words.iter().flat_map(|(s, _)| s.iter().cloned()).collect();
        if self.vocab_size < NUM_SPECIAL + alphabet.len() {
            return Err(Error::InvalidArgument(format!(
                "vocab_size {} is smaller than {} specials + {} alphabet units",
                self.vocab_size,
                NUM_SPECIAL,
                alphabet.len()
            )));
        }

        let mut learned: Vec<String> = alphabet.iter().cloned().collect();
        let mut known: BTreeSet<String> = alphabet;

        while NUM_SPECIAL + learned.len() < self.vocab_size {
            let Some((left, right)) = self.best_pair(&words) else {
                break;
            };
            let new_token = merged(&left, &right);
            for (split, _) in words.iter_mut() {
                if split.len() < 2 {
                    continue;
                }
                let mut out = Vec::with_capacity(split.len());
                let mut i = 0;
                while i < split.len() {
                    if i + 1 < split.len() && split[i] == left && split[i + 1] == right {
                        out.push(new_token.clone());
                        i += 2;
                    } else {
                        out.push(std::mem::take(&mut split[i]));
                        i += 1;
                    }
                }
                *split = out;
            }
            if known.insert(new_token.clone()) {
                learned.push(new_token);
            }
        }
        debug!("wordpiece: {} tokens learned", learned.len());
        Vocabulary::with_specials(learned)
    }

    fn best_pair(&self, words: &[(Vec<String>, u64)]) -> Option<(String, String)> {
        let mut unit_freq: HashMap<&str, u64> = HashMap::new();
        let mut pair_freq: HashMap<(&str, &str), u64> = HashMap::new();
        for (split, count) in words {
            for (i, unit) in split.iter().enumerate() {
                *unit_freq.entry(unit).or_default() += count;
                if let Some(next) = split.get(i + 1) {
                    *pair_freq.entry((unit, next)).or_default() += count;
                }
            }
        }
        let mut best: Option<((&str, &str), u64, u128)> = None;
        for (&pair, &freq) in &pair_freq {
            if freq < self.min_frequency {
                continue;
            }
            let denom = unit_freq[pair.0] as u128 * unit_freq[pair.1] as u128;
            let better = match best {
                None => true,
                Some((bp, bf, bd)) => {
                    // freq/denom vs bf/bd, compared exactly
                    let lhs = freq as u128 * bd;
                    let rhs = bf as u128 * denom;
                    lhs > rhs || (lhs == rhs && pair < bp)
                }
            };
            if better {
                best = Some((pair, freq, denom));
            }
        }
        best.map(|((l, r), _, _)| (l.to_owned(), r.to_owned()))
    }
}

pub fn train_wordpiece<S: AsRef<str>>(corpus: &[S], vocab_size: usize, min_frequency: u64) -> Result<Vocabulary> {
    WordPieceTrainer::new(vocab_size, min_frequency).train(corpus)
}
