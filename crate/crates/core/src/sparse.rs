//! TF-IDF document vectors and sparse cosine similarity.
//!
//! Two IDF variants are available:
//!
//! * `Classic`: `idf(t) = ln(N / n_t)`, weights are raw `TF * IDF`.
//! * `Smoothed`: `idf(t) = ln((1 + N) / (1 + n_t)) + 1`, vectors are
//!   L2-normalized (the common library default).
//!
//! In both, `TF(t, d)` is the count of `t` in `d` divided by the number of
//! in-vocabulary terms in `d`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tokenize::{self, tokenize_with_emojis, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IdfVariant {
    /// Unsmoothed `ln(N / n_t)`, no normalization.
    Classic,
    Smoothed,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenizerKind {
    EmojiWord,
    WordPiece(Vocabulary),
}

impl TokenizerKind {
    pub fn terms(&self, text: &str) -> Vec<String> {
        match self {
            TokenizerKind::EmojiWord => tokenize_with_emojis(text),
            TokenizerKind::WordPiece(vocab) => tokenize::encode::word_pieces(text, vocab)
                .into_iter()
                .flatten()
                .map(|id| vocab.token(id).expect("piece id from vocab").to_owned())
                .collect(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TokenizerKind::EmojiWord => "emoji-word",
            TokenizerKind::WordPiece(_) => "wordpiece",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
    norm: f64,
}

impl SparseVector {
    /// Builds a vector from `(column, weight)` pairs; zero weights are
    /// dropped and columns sorted. Duplicate columns are an error.
    pub fn new(mut entries: Vec<(u32, f64)>) -> Result<Self> {
        entries.retain(|&(_, w)| w != 0.0);
        entries.sort_by_key(|&(c, _)| c);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate column in sparse vector".into()));
        }
        let norm = entries.iter().map(|&(_, w)| w * w).sum::<f64>().sqrt();
        Ok(Self { entries, norm })
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, column: u32) -> Option<f64> {
        self.entries
            .binary_search_by_key(&column, |&(c, _)| c)
            .ok()
            .map(|i| self.entries[i].1)
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        Self::new(self.entries.iter().map(|&(c, w)| (c, w * alpha)).collect()).expect("columns unique")
    }
}

/// `a.b / (|a| |b|)`, or 0 when either norm is 0.
pub fn cosine_sparse(a: &SparseVector, b: &SparseVector) -> f64 {
    if a.norm == 0.0 || b.norm == 0.0 {
        return 0.0;
    }
    let (mut i, mut j, mut dot) = (0, 0, 0.0);
    while i < a.entries.len() && j < b.entries.len() {
        let (ca, wa) = a.entries[i];
        let (cb, wb) = b.entries[j];
        match ca.cmp(&cb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                dot += wa * wb;
                i += 1;
                j += 1;
            }
        }
    }
    (dot / (a.norm * b.norm)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfModel {
    variant: IdfVariant,
    tokenizer: TokenizerKind,
    n_docs: usize,
    /// Terms in lexicographic order; the position is the column.
    terms: Vec<String>,
    term_index: BTreeMap<String, u32>,
    df: Vec<usize>,
    idf: Vec<f64>,
}

fn idf_value(variant: IdfVariant, n: usize, df: usize) -> f64 {
    match variant {
        IdfVariant::Classic => (n as f64 / df as f64).ln(),
        IdfVariant::Smoothed => ((1.0 + n as f64) / (1.0 + df as f64)).ln() + 1.0,
    }
}

pub fn fit_tfidf<S: AsRef<str>>(corpus: &[S], tokenizer: TokenizerKind, variant: IdfVariant) -> Result<TfidfModel> {
    if corpus.is_empty() {
        return Err(Error::InvalidArgument("empty TF-IDF corpus".into()));
    }
    let mut df: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus {
        let mut terms = tokenizer.terms(doc.as_ref());
        terms.sort_unstable();
        terms.dedup();
        for t in terms {
            *df.entry(t).or_default() += 1;
        }
    }
    if df.is_empty() {
        return Err(Error::InvalidArgument(
            "TF-IDF corpus contains only empty documents".into(),
        ));
    }
    let n = corpus.len();
    let terms: Vec<String> = df.keys().cloned().collect();
    let dfs: Vec<usize> = df.values().copied().collect();
    let idf = dfs.iter().map(|&d| idf_value(variant, n, d)).collect();
    let term_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
    Ok(TfidfModel {
        variant,
        tokenizer,
        n_docs: n,
        terms,
        term_index,
        df: dfs,
        idf,
    })
}

impl TfidfModel {
    pub fn variant(&self) -> IdfVariant {
        self.variant
    }

    pub fn tokenizer(&self) -> &TokenizerKind {
        &self.tokenizer
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn column(&self, term: &str) -> Option<u32> {
        self.term_index.get(term).copied()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.column(term).map(|c| self.idf[c as usize])
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.column(term).map(|c| self.df[c as usize])
    }

    pub fn transform(&self, text: &str) -> SparseVector {
        let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
        for t in self.tokenizer.terms(text) {
            if let Some(c) = self.column(&t) {
                *counts.entry(c).or_default() += 1;
            }
        }
        let total: usize = counts.values().sum();
        if total == 0 {
            return SparseVector::default();
        }
        let raw: Vec<(u32, f64)> = counts
            .into_iter()
            .map(|(c, k)| (c, k as f64 / total as f64 * self.idf[c as usize]))
            .collect();
        let v = SparseVector::new(raw).expect("columns unique");
        match self.variant {
            IdfVariant::Classic => v,
            IdfVariant::Smoothed if v.norm > 0.0 => v.scaled(1.0 / v.norm),
            IdfVariant::Smoothed => v,
        }
    }

    pub fn similarity(&self, a: &str, b: &str) -> f64 {
        cosine_sparse(&self.transform(a), &self.transform(b))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = TfidfFile {
            format: TFIDF_FORMAT.into(),
            version: TFIDF_VERSION,
            variant: self.variant,
            tokenizer: self.tokenizer.name().into(),
            vocabulary: match &self.tokenizer {
                TokenizerKind::EmojiWord => None,
                TokenizerKind::WordPiece(v) => Some(v.tokens().to_vec()),
            },
            n_docs: self.n_docs,
            terms: self
                .terms
                .iter()
                .zip(&self.df)
                .zip(&self.idf)
                .map(|((t, &df), &idf)| TermEntry {
                    term: t.clone(),
                    df,
                    idf,
                })
                .collect(),
        };
        let json = serde_json::to_string_pretty(&file).map_err(|e| Error::Format(e.to_string()))?;
        std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: TfidfFile =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if file.format != TFIDF_FORMAT || file.version != TFIDF_VERSION {
            return Err(Error::Format(format!(
                "unsupported TF-IDF file {} v{}",
                file.format, file.version
            )));
        }
        let tokenizer = match (file.tokenizer.as_str(), file.vocabulary) {
            ("emoji-word", None) => TokenizerKind::EmojiWord,
            ("wordpiece", Some(tokens)) => TokenizerKind::WordPiece(Vocabulary::from_tokens(tokens)?),
            (other, _) => return Err(Error::Format(format!("bad tokenizer section {other:?}"))),
        };
        let mut terms = Vec::with_capacity(file.terms.len());
        let mut df = Vec::with_capacity(file.terms.len());
        let mut idf = Vec::with_capacity(file.terms.len());
        for e in file.terms {
            if e.df == 0 || e.df > file.n_docs {
                return Err(Error::Format(format!("df out of range for {:?}", e.term)));
            }
            terms.push(e.term);
            df.push(e.df);
            idf.push(e.idf);
        }
        if terms.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Format("terms must be unique and sorted".into()));
        }
        let term_index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Ok(Self {
            variant: file.variant,
            tokenizer,
            n_docs: file.n_docs,
            terms,
            term_index,
            df,
            idf,
        })
    }
}

const TFIDF_FORMAT: &str = "adlink-tfidf";
const TFIDF_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TfidfFile {
    format: String,
    version: u32,
    variant: IdfVariant,
    tokenizer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    vocabulary: Option<Vec<String>>,
    n_docs: usize,
    terms: Vec<TermEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TermEntry {
    term: String,
    df: usize,
    idf: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_idf_by_hand() {
        let m = fit_tfidf(&["a b", "a c"], TokenizerKind::EmojiWord, IdfVariant::Classic).unwrap();
        assert_eq!(m.idf("a"), Some(0.0));
        assert!((m.idf("b").unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(m.idf("c"), m.idf("b"));
    }

    #[test]
    fn smoothed_idf_by_hand() {
        let m = fit_tfidf(&["a b", "a c"], TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
        assert!((m.idf("a").unwrap() - 1.0).abs() < 1e-12);
        assert!((m.idf("b").unwrap() - (1.5f64.ln() + 1.0)).abs() < 1e-12);
        assert!((m.idf("b").unwrap() - 1.405_465_108).abs() < 1e-9);
    }

    #[test]
    fn single_document_classic_is_zero() {
        let m = fit_tfidf(&["a a"], TokenizerKind::EmojiWord, IdfVariant::Classic).unwrap();
        assert_eq!(m.idf("a"), Some(0.0));
        assert!(m.transform("a a").is_empty());
    }

    #[test]
    fn smoothed_transform_is_unit_norm() {
        let m = fit_tfidf(&["a b", "a c"], TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
        let v = m.transform("a b");
        assert_eq!(v.entries().len(), 2);
        assert!((v.norm() - 1.0).abs() < 1e-12);
        // weights proportional to idf: 1 and ln(1.5)+1
        let (wa, wb) = (v.entries()[0].1, v.entries()[1].1);
        let d = (1.0 + (1.5f64.ln() + 1.0).powi(2)).sqrt();
        assert!((wa - 1.0 / d).abs() < 1e-12);
        assert!((wb - (1.5f64.ln() + 1.0) / d).abs() < 1e-12);
    }

    #[test]
    fn unknown_and_empty_documents() {
        let m = fit_tfidf(&["a b", "a c"], TokenizerKind::EmojiWord, IdfVariant::Smoothed).unwrap();
        assert!(m.transform("zzz").is_empty());
        assert_eq!(m.transform("").norm(), 0.0);
    }

    #[test]
    fn only_empty_documents_rejected() {
        assert!(fit_tfidf(&["", "!!"], TokenizerKind::EmojiWord, IdfVariant::Smoothed).is_err());
        assert!(fit_tfidf::<&str>(&[], TokenizerKind::EmojiWord, IdfVariant::Smoothed).is_err());
    }

    #[test]
    fn cosine_cases() {
        let a = SparseVector::new(vec![(0, 1.0), (1, 1.0)]).unwrap();
        let b = SparseVector::new(vec![(1, 1.0), (2, 1.0)]).unwrap();
        assert!((cosine_sparse(&a, &b) - 0.5).abs() < 1e-15);
        assert!((cosine_sparse(&a, &a) - 1.0).abs() < 1e-15);
        let c = SparseVector::new(vec![(5, 2.0)]).unwrap();
        assert_eq!(cosine_sparse(&a, &c), 0.0);
        assert_eq!(cosine_sparse(&a, &SparseVector::default()), 0.0);
    }

    #[test]
    fn wordpiece_terms() {
        let vocab = Vocabulary::with_specials(["hel", "##lo", "🌹"]).unwrap();
        let m = fit_tfidf(
            &["hello 🌹", "hello"],
            TokenizerKind::WordPiece(vocab),
            IdfVariant::Smoothed,
        )
        .unwrap();
        assert_eq!(m.n_terms(), 3);
        assert_eq!(m.df("##lo"), Some(2));
        assert_eq!(m.df("🌹"), Some(1));
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let vocab = Vocabulary::with_specials(["hel", "##lo", "🌹"]).unwrap();
        for tok in [TokenizerKind::EmojiWord, TokenizerKind::WordPiece(vocab)] {
            let m = fit_tfidf(&["hello 🌹 x", "hello y"], tok, IdfVariant::Classic).unwrap();
            let p = dir.path().join("m.json");
            m.save(&p).unwrap();
            assert_eq!(TfidfModel::load(&p).unwrap(), m);
        }
    }
}
