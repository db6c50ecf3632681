//! Run directories: fixed output layout, resolved config and manifest.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::corpus::{load_ads, post_texts, AdRecord};
use crate::encoder::checkpoint;
use crate::encoder::{EncoderModel, SentenceEncoder};
use crate::error::{Error, Result};
use crate::sparse::TfidfModel;
use crate::tokenize::Vocabulary;

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";
pub const MANIFEST: &str = "manifest.json";

pub const ADS: &str = "ads.jsonl";
pub const AUTHORS: &str = "authors.json";
pub const VOCAB: &str = "vocab.txt";
pub const TFIDF_EMOJI: &str = "tfidf-emoji.json";
pub const TFIDF_WORDPIECE: &str = "tfidf-wordpiece.json";
pub const PRETRAIN_DIR: &str = "pretrain";
pub const PRETRAINED: &str = "pretrain/final.ckpt";
pub const FINETUNED: &str = "finetune/encoder.ckpt";
pub const TRIPLETS: &str = "datasets/triplets.jsonl";
pub const HELDOUT_TRIPLETS: &str = "datasets/triplets-heldout.jsonl";
pub const TRAIN_PAIRS: &str = "datasets/pairs-train.jsonl";
pub const TEST_PAIRS: &str = "datasets/pairs-test.jsonl";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Relative path to SHA-256 of every file the step wrote.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub config: String,
    pub config_sha256: String,
    pub steps: BTreeMap<String, StepRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct RunDir {
    root: PathBuf,
    pub config: RunConfig,
}

impl RunDir {
    /// Creates the directory and writes the resolved config.
    pub fn open(root: &Path, config: RunConfig) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let run = Self {
            root: root.to_owned(),
            config,
        };
        run.write(RESOLVED_CONFIG, run.config.to_toml()?.as_bytes())?;
        Ok(run)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Output path with its parent directory created.
    pub fn out(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        Ok(p)
    }

    pub fn exists(&self, rel: &str) -> bool {
        self.path(rel).exists()
    }

    pub fn ensure_dir(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }

    pub fn write(&self, rel: &str, bytes: &[u8]) -> Result<()> {
        let p = self.path(rel);
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    }

    pub fn write_json(&self, rel: &str, value: &impl Serialize) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        text.push('\n');
        self.write(rel, text.as_bytes())
    }

    pub fn read_json<T: serde::de::DeserializeOwned>(&self, rel: &str) -> Result<T> {
        let p = self.require(rel)?;
        let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", p.display())))
    }

    /// Path of an input produced by an earlier step.
    pub fn require(&self, rel: &str) -> Result<PathBuf> {
        let p = self.path(rel);
        if p.exists() {
            Ok(p)
        } else {
            Err(Error::InvalidArgument(format!(
                "{} is missing; run the step that produces it first",
                p.display()
            )))
        }
    }

    pub fn manifest(&self) -> Result<Option<Manifest>> {
        let p = self.path(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        self.read_json(MANIFEST).map(Some)
    }

    /// Hashes `outputs` and stores them under `step`. Records from other
    /// steps survive only while the resolved config is unchanged.
    pub fn record(&self, step: &str, outputs: &[String]) -> Result<()> {
        let config_sha256 = sha256_hex(self.config.to_toml()?.as_bytes());
        let mut manifest = match self.manifest()? {
            Some(m) if m.config_sha256 == config_sha256 => m,
            _ => Manifest {
                format: "adlink-manifest".into(),
                version: 1,
                config: RESOLVED_CONFIG.into(),
                config_sha256,
                steps: BTreeMap::new(),
            },
        };
        let mut rec = StepRecord::default();
        for rel in outputs {
            let p = self.require(rel)?;
            let bytes = std::fs::read(&p).map_err(|e| Error::io(&p, e))?;
            rec.outputs.insert(rel.clone(), sha256_hex(&bytes));
        }
        manifest.steps.insert(step.to_owned(), rec);
        self.write_json(MANIFEST, &manifest)
    }

    pub fn ads(&self) -> Result<Vec<AdRecord>> {
        load_ads(&self.require(ADS)?)
    }

    pub fn texts(&self) -> Result<BTreeMap<i64, String>> {
        Ok(post_texts(&self.ads()?))
    }

    pub fn vocab(&self) -> Result<Vocabulary> {
        Vocabulary::load(&self.require(VOCAB)?)
    }

    pub fn tfidf(&self, rel: &str) -> Result<TfidfModel> {
        TfidfModel::load(&self.require(rel)?)
    }

    pub fn model(&self, rel: &str) -> Result<EncoderModel> {
        Ok(checkpoint::load(&self.require(rel)?)?.0)
    }

    pub fn encoder(&self, rel: &str, vocab: &Vocabulary) -> Result<SentenceEncoder> {
        let mut enc = SentenceEncoder::load(&self.require(rel)?, vocab.clone())?;
        if rel == PRETRAINED {
            enc.include_special = self.config.finetune.include_special;
        }
        Ok(enc)
    }
}
