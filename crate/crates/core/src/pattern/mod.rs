//! Voice queries over treebanks and the voice-labelled sentence pools they
//! produce.

mod pool;
mod query;

pub use pool::{
    build_voice_pool, build_voice_pools, collect_voice_records, RecordKey, SentenceRecord,
    VoiceLabel, VoicePools, VoiceSpec,
};
pub use query::{attribute, match_sentence, parse_pattern, parse_patterns, Constraints, Pattern};
