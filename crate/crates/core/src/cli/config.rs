//! The run configuration file and `--set` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::SyntheticCorpusConfig;
use crate::encoder::{EncoderConfig, FinetuneConfig, PretrainConfig};
use crate::error::{Error, Result};
use crate::sparse::IdfVariant;
use crate::verify::ClassifierConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TokenizerSection {
    pub vocab_size: usize,
    pub min_frequency: u64,
}

impl Default for TokenizerSection {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            min_frequency: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TfidfSection {
    pub variant: IdfVariant,
}

impl Default for TfidfSection {
    fn default() -> Self {
        Self {
            variant: IdfVariant::Smoothed,
        }
    }
}

/// How labelled posts are divided between training and evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    /// Hold out a share of every component's posts.
    Posts,
    /// Hold out whole components.
    Components,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetsSection {
    pub split: SplitMode,
    /// Share of posts (or components) reserved for evaluation. Held-out
    /// triplets and test pairs are drawn only from this share.
    pub heldout_fraction: f64,
    pub triplets: usize,
    pub heldout_triplets: usize,
    pub triplet_threshold: f64,
    pub max_attempts: usize,
    pub train_pairs: usize,
    pub test_pairs: usize,
    pub positive_fraction: f64,
    pub seed: u64,
}

impl Default for DatasetsSection {
    fn default() -> Self {
        Self {
            split: SplitMode::Posts,
            heldout_fraction: 0.25,
            triplets: 5000,
            heldout_triplets: 500,
            triplet_threshold: 0.2,
            max_attempts: 50,
            train_pairs: 1000,
            test_pairs: 1000,
            positive_fraction: 0.2,
            seed: 31,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifierSection {
    pub classifier: ClassifierConfig,
    pub decision_threshold: f64,
    pub baseline_positive_rate: f64,
    pub baseline_seed: u64,
}

impl Default for VerifierSection {
    fn default() -> Self {
        Self {
            classifier: ClassifierConfig::default(),
            decision_threshold: 0.5,
            baseline_positive_rate: 0.2,
            baseline_seed: 37,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecomposeSection {
    pub grid: Vec<f64>,
    pub include_phones: bool,
}

impl Default for DecomposeSection {
    fn default() -> Self {
        Self {
            grid: crate::graph::default_grid(),
            include_phones: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LexiconSection {
    pub k: usize,
    /// Empty means every single-emoji token in the vocabulary.
    pub queries: Vec<String>,
    /// Restrict neighbour search to emoji tokens.
    pub emoji_only: bool,
    pub include_special: bool,
}

impl Default for LexiconSection {
    fn default() -> Self {
        Self {
            k: 5,
            queries: Vec::new(),
            emoji_only: false,
            include_special: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Ads file read by `ingest` when no path is given on the command line.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ads: Option<PathBuf>,
    pub synthetic: SyntheticCorpusConfig,
    pub tokenizer: TokenizerSection,
    pub tfidf: TfidfSection,
    /// `vocab_size` is replaced by the trained vocabulary's size.
    pub encoder: EncoderConfig,
    pub pretrain: PretrainConfig,
    pub finetune: FinetuneConfig,
    pub datasets: DatasetsSection,
    pub verifier: VerifierSection,
    pub decompose: DecomposeSection,
    pub lexicon: LexiconSection,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Applies `key.path=value` overrides. Values are read as TOML literals
    /// and fall back to plain strings.
    pub fn with_overrides<S: AsRef<str>>(&self, overrides: &[S]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut root: toml::Table = toml::from_str(&self.to_toml()?).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let item = item.as_ref();
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_value(raw.trim());
            let path: Vec<&str> = key.trim().split('.').collect();
            let mut table = &mut root;
            for part in &path[..path.len() - 1] {
                table = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("{key}: {part} is not a section")))?;
            }
            table.insert(path[path.len() - 1].to_string(), value);
        }
        let text = toml::to_string(&root).map_err(|e| Error::Config(e.to_string()))?;
        Self::from_toml(&text)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_owned()))
}
