use std::ops::Range;

use super::emoji::tokenize_with_emojis;
use super::vocab::{Vocabulary, CLS_ID, CONTINUATION_PREFIX, PAD_ID, SEP_ID, UNK_ID};
use crate::error::{Error, Result};

/// A fixed-length encoded sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<u32>,
    pub attention: Vec<u8>,
    /// Position ranges of each source word's pieces, in order.
    pub word_groups: Vec<Range<usize>>,
}

impl TokenSeq {
    pub fn max_len(&self) -> usize {
        self.ids.len()
    }

    /// Number of attended positions, including `[CLS]` and `[SEP]`.
    pub fn attended_len(&self) -> usize {
        self.attention.iter().take_while(|&&a| a == 1).count()
    }

    pub fn attended_ids(&self) -> &[u32] {
        &self.ids[..self.attended_len()]
    }
}

/// Greedy longest-match-first split of one word. `None` when some suffix
/// cannot be matched.
pub fn split_word(word: &str, vocab: &Vocabulary) -> Option<Vec<u32>> {
    let bounds: Vec<usize> = word
        .char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(word.len()))
        .collect();
    let mut pieces = Vec::new();
    let mut start = 0;
    let mut candidate = String::new();
    while start + 1 < bounds.len() {
        let mut found = None;
        for end in (start + 1..bounds.len()).rev() {
            candidate.clear();
            if start > 0 {
                candidate.push_str(CONTINUATION_PREFIX);
            }
            candidate.push_str(&word[bounds[start]..bounds[end]]);
            if let Some(id) = vocab.id(&candidate) {
                found = Some((id, end));
                break;
            }
        }
        let (id, end) = found?;
        pieces.push(id);
        start = end;
    }
    Some(pieces)
}

/// Piece ids for every word of `text`, one inner vector per word.
pub fn word_pieces(text: &str, vocab: &Vocabulary) -> Vec<Vec<u32>> {
    tokenize_with_emojis(text)
        .iter()
        .map(|w| split_word(w, vocab).unwrap_or_else(|| vec![UNK_ID]))
        .collect()
}

/// Untruncated encoded length including `[CLS]` and `[SEP]`.
pub fn encoded_len(text: &str, vocab: &Vocabulary) -> usize {
    word_pieces(text, vocab).iter().map(Vec::len).sum::<usize>() + 2
}

/// Encodes `text` as `[CLS] pieces [SEP] [PAD]...` of exactly `max_len`
/// ids. Trailing words that do not fit are dropped whole.
pub fn encode(text: &str, vocab: &Vocabulary, max_len: usize) -> TokenSeq {
    assert!(max_len >= 3, "max_len must be at least 3");
    let mut ids = Vec::with_capacity(max_len);
    let mut word_groups = Vec::new();
    ids.push(CLS_ID);
    for pieces in word_pieces(text, vocab) {
        if ids.len() + pieces.len() + 1 > max_len {
            break;
        }
        let start = ids.len();
        ids.extend_from_slice(&pieces);
        word_groups.push(start..ids.len());
    }
    ids.push(SEP_ID);
    let attended = ids.len();
    ids.resize(max_len, PAD_ID);
    let mut attention = vec![0u8; max_len];
    attention[..attended].fill(1);
    TokenSeq {
        ids,
        attention,
        word_groups,
    }
}

/// Maps ids back to piece strings, dropping `[PAD]`, `[CLS]` and `[SEP]`.
pub fn decode(ids: &[u32], vocab: &Vocabulary) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for &id in ids {
        let tok = vocab.token(id).ok_or_else(|| {
            Error::InvalidArgument(format!("token id {id} out of range for vocabulary of {}", vocab.len()))
        })?;
        if matches!(id, PAD_ID | CLS_ID | SEP_ID) {
            continue;
        }
        out.push(tok.to_owned());
    }
    Ok(out)
}
