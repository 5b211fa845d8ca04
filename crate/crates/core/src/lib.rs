//! Blackbird Language Matrices for verbal voice: treebank ingestion, voice
//! queries, dataset generation, subword profiling, embeddings, a
//! feed-forward solver and evaluation statistics.

pub mod blm;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod hash;
pub mod pattern;
pub mod solver;
pub mod tokenizer;
pub mod treebank;

pub use blm::{BlmInstance, Dataset, Slot, Split, Variant};
pub use embedding::EmbeddingStore;
pub use error::{Error, Result};
pub use eval::{ConfusionMatrix, EvalReport};
pub use pattern::{Pattern, SentenceRecord, VoiceLabel, VoicePools, VoiceSpec};
pub use solver::{SolverModel, TrainConfig};
pub use tokenizer::{TokenizationProfile, Vocabulary};
pub use treebank::{Sentence, Treebank, Word};
