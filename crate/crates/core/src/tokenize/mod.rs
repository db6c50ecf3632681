//! Word tokenization, WordPiece vocabularies and fixed-length encoding.

pub mod emoji;
pub mod encode;
pub mod vocab;
pub mod wordpiece;

pub use emoji::{is_emoji_char, tokenize_with_emojis};
pub use encode::{decode, encode, encoded_len, split_word, TokenSeq};
pub use vocab::Vocabulary;
pub use wordpiece::{train_wordpiece, WordPieceTrainer};
