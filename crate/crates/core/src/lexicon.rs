//! Token-embedding tables: nearest neighbours in the full embedding space
//! and emoji-focused filtering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::encoder::{DenseVector, EncoderModel};
use crate::error::{Error, Result};
use crate::tokenize::emoji::is_emoji_char;
use crate::tokenize::vocab::CONTINUATION_PREFIX;
use crate::tokenize::Vocabulary;

#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingTable {
    pub dimension: usize,
    pub entries: BTreeMap<String, DenseVector>,
}

impl TokenEmbeddingTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&DenseVector> {
        self.entries.get(token)
    }

    /// Uniformly scales every vector.
    pub fn scaled(&self, alpha: f64) -> Self {
        Self {
            dimension: self.dimension,
            entries: self.entries.iter().map(|(k, v)| (k.clone(), v * alpha)).collect(),
        }
    }
}

/// Rows of the token-embedding matrix keyed by token string.
pub fn extract_table(model: &EncoderModel, vocab: &Vocabulary, include_special: bool) -> Result<TokenEmbeddingTable> {
    let emb = &model.params.tok_emb;
    if emb.nrows() != vocab.len() {
        return Err(Error::InvalidArgument(format!(
            "model has {} token embeddings but the vocabulary has {} tokens",
            emb.nrows(),
            vocab.len()
        )));
    }
    let entries = vocab
        .tokens()
        .iter()
        .enumerate()
        .filter(|(i, _)| include_special || !Vocabulary::is_special(*i as u32))
        .map(|(i, t)| (t.clone(), emb.row(i).to_owned()))
        .collect();
    Ok(TokenEmbeddingTable {
        dimension: emb.ncols(),
        entries,
    })
}

fn cosine(a: &DenseVector, b: &DenseVector) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        a.dot(b) / (na * nb)
    }
}

/// The `k` tokens most cosine-similar to `query`, excluding the query;
/// equal cosines rank lexicographically.
pub fn nearest_tokens(table: &TokenEmbeddingTable, query: &str, k: usize) -> Result<Vec<(String, f64)>> {
    let q = match table.get(query) {
        Some(q) => q,
        None => {
            let mut close: Vec<(usize, &String)> = table
                .entries
                .keys()
                .map(|t| (strsim::levenshtein(query, t), t))
                .collect();
            close.sort();
            let names: Vec<&str> = close.iter().take(5).map(|(_, t)| t.as_str()).collect();
            return Err(Error::InvalidArgument(format!(
                "token {query:?} is not in the table; closest matches: {}",
                names.join(", ")
            )));
        }
    };
    let mut scored: Vec<(String, f64)> = table
        .entries
        .iter()
        .filter(|(t, _)| t.as_str() != query)
        .map(|(t, v)| (t.clone(), cosine(q, v)))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    Ok(scored)
}

/// Result of [`filter_tokens`].
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredTable {
    pub table: TokenEmbeddingTable,
    /// Listed tokens that were not in the source table.
    pub missing: usize,
}

/// Keeps the listed tokens. With `exclude_prefixed`, continuation pieces
/// that contain a listed emoji are dropped even when listed themselves.
pub fn filter_tokens<S: AsRef<str>>(
    table: &TokenEmbeddingTable,
    tokens: &[S],
    exclude_prefixed: bool,
) -> FilteredTable {
    let listed: BTreeSet<&str> = tokens.iter().map(|t| t.as_ref()).collect();
    let emojis: BTreeSet<char> = listed
        .iter()
        .flat_map(|t| t.chars())
        .filter(|&c| is_emoji_char(c))
        .collect();
    let mut entries = BTreeMap::new();
    let mut missing = 0;
    for &t in &listed {
        if exclude_prefixed && t.starts_with(CONTINUATION_PREFIX) && t.chars().any(|c| emojis.contains(&c)) {
            continue;
        }
        match table.entries.get(t) {
            Some(v) => {
                entries.insert(t.to_owned(), v.clone());
            }
            None => missing += 1,
        }
    }
    FilteredTable {
        table: TokenEmbeddingTable {
            dimension: table.dimension,
            entries,
        },
        missing,
    }
}

/// Every token that is one emoji, optionally as a continuation piece.
pub fn emoji_tokens(table: &TokenEmbeddingTable) -> Vec<String> {
    table
        .entries
        .keys()
        .filter(|t| {
            let mut cs = t.trim_start_matches(CONTINUATION_PREFIX).chars();
            matches!((cs.next(), cs.next()), (Some(c), None) if is_emoji_char(c))
        })
        .cloned()
        .collect()
}

pub fn neighbours_csv(rows: &[(String, f64)]) -> String {
    let mut s = String::from("rank,token,cosine\n");
    for (i, (t, c)) in rows.iter().enumerate() {
        let _ = writeln!(s, "{},{},{}", i + 1, t, c);
    }
    s
}

/// One row of the shipped emoji lexicon.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LexiconEntry {
    pub emoji: String,
    pub name: String,
    pub suggested_meaning: String,
    pub category: String,
}

pub const EMOJI_LEXICON_CSV: &str = include_str!("../data/emoji_lexicon.csv");

/// Parses the `emoji,name,suggested_meaning,category` file format.
pub fn parse_emoji_lexicon(text: &str) -> Result<Vec<LexiconEntry>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "emoji,name,suggested_meaning,category")) => {}
        _ => {
            return Err(Error::Schema {
                line: 1,
                message: "expected header emoji,name,suggested_meaning,category".into(),
            })
        }
    }
    lines
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != 4 {
                return Err(Error::Schema {
                    line: i + 1,
                    message: format!("expected 4 fields, found {}", f.len()),
                });
            }
            Ok(LexiconEntry {
                emoji: f[0].to_owned(),
                name: f[1].to_owned(),
                suggested_meaning: f[2].to_owned(),
                category: f[3].to_owned(),
            })
        })
        .collect()
}

pub fn default_emoji_lexicon() -> Vec<LexiconEntry> {
    parse_emoji_lexicon(EMOJI_LEXICON_CSV).expect("bundled lexicon parses")
}
