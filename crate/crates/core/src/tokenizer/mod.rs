//! WordPiece segmentation and per-voice fragmentation diagnostics.

mod profile;
mod wordpiece;

pub use profile::{
    distinct_records, profile_dataset, profile_dataset_top, token_counts, top_tokens,
    ProfileAccumulator, Scope, TokenizationProfile, VoiceProfile, DEFAULT_TOP_K,
};
pub use wordpiece::{
    is_split_punctuation, pre_split, tokenize_text, tokenize_word, Vocabulary, CONTINUATION,
    DEFAULT_UNK, MAX_INPUT_CHARS_PER_WORD,
};
