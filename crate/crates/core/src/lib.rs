//! Authorship linking for short, obfuscated, emoji-heavy advertisement texts.
//!
//! The crate covers the whole pipeline: ingesting or synthesizing ad
//! records, emoji-aware word tokenization and WordPiece vocabularies,
//! TF-IDF vectors, a small transformer encoder trained with (whole-word)
//! masked language modelling and triplet fine-tuning, dataset construction
//! from graph components, pair verification, giant-component decomposition
//! and token-embedding neighbourhoods.

pub mod cli;
pub mod corpus;
pub mod datasets;
pub mod encoder;
pub mod error;
pub mod graph;
pub mod lexicon;
pub mod sparse;
pub mod tokenize;
pub mod verify;

pub use error::{Error, Result};
