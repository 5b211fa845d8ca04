//! Blackbird Language Matrix instances for the four-voice paradigm.
//!
//! An instance shows three complete context pairs and one incomplete pair;
//! the solver picks the missing sentence out of four answers, one per voice.

mod audit;
mod build;
mod io;

pub use audit::{audit, audit_with, AuditOptions, AuditReport, Violation};
pub use build::{build_dataset, context_layout, derive_verbonly, BuildConfig, PERMUTATIONS};
pub use io::{read_dataset, read_dataset_from, write_dataset, write_dataset_to};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::pattern::{SentenceRecord, VoiceLabel};

pub const CONTEXT_LEN: usize = 7;
pub const ANSWER_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Variant {
    FullSentence,
    VerbOnly,
}

impl Variant {
    /// Short tag used in embedding keys.
    pub fn tag(self) -> &'static str {
        match self {
            Variant::FullSentence => "full",
            Variant::VerbOnly => "verb",
        }
    }
}

/// One sentence occurrence inside an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub sent_id: String,
    pub verb_index: usize,
    pub text: String,
    pub voice: VoiceLabel,
    pub verb_surface: String,
}

impl Slot {
    pub fn from_record(record: &SentenceRecord) -> Self {
        Slot {
            sent_id: record.sent_id.clone(),
            verb_index: record.verb_index,
            text: record.text.clone(),
            voice: record.voice,
            verb_surface: record.verb_surface.clone(),
        }
    }

    /// Embedding-store key of this slot under `variant`.
    pub fn embedding_key(&self, variant: Variant) -> String {
        format!("{}#{}@{}", self.sent_id, self.verb_index, variant.tag())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlmInstance {
    pub instance_id: String,
    pub split: Split,
    pub target_voice: VoiceLabel,
    /// Which of the six orders of the non-target voices fills P1..P3.
    pub permutation_id: u8,
    pub context: Vec<Slot>,
    pub answers: Vec<Slot>,
    pub correct_index: usize,
}

impl BlmInstance {
    /// Voice of each context pair (P1..P4), read from the pair's first slot.
    pub fn context_voices(&self) -> [VoiceLabel; 4] {
        [0, 2, 4, 6].map(|i| self.context[i].voice)
    }

    pub fn correct_answer(&self) -> &Slot {
        &self.answers[self.correct_index]
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.context.iter().chain(self.answers.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub variant: Variant,
    pub instances: Vec<BlmInstance>,
}

impl Dataset {
    pub fn split_map(&self) -> IndexMap<&str, Split> {
        self.instances
            .iter()
            .map(|i| (i.instance_id.as_str(), i.split))
            .collect()
    }

    pub fn in_split(&self, split: Split) -> impl Iterator<Item = &BlmInstance> {
        self.instances.iter().filter(move |i| i.split == split)
    }
}
