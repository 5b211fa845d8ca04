use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::{BufRead, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::query::{parse_pattern, Pattern};
use crate::error::{Error, Result};
use crate::treebank::Treebank;

/// The four voices of the paradigm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VoiceLabel {
    Act,
    Pass,
    Caus,
    CausPass,
}

impl VoiceLabel {
    pub const ALL: [VoiceLabel; 4] = [
        VoiceLabel::Act,
        VoiceLabel::Pass,
        VoiceLabel::Caus,
        VoiceLabel::CausPass,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VoiceLabel::Act => "Act",
            VoiceLabel::Pass => "Pass",
            VoiceLabel::Caus => "Caus",
            VoiceLabel::CausPass => "CausPass",
        }
    }
}

impl fmt::Display for VoiceLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VoiceLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VoiceLabel::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::Argument(format!("unknown voice {s:?}")))
    }
}

/// A sentence selected for one voice through one matched verb.
///
/// A sentence with several matching verbs yields several records, told
/// apart by `verb_index`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub voice: VoiceLabel,
    pub sent_id: String,
    pub source: String,
    pub verb_index: usize,
    pub verb_surface: String,
    pub text: String,
}

impl SentenceRecord {
    pub fn key(&self) -> RecordKey<'_> {
        RecordKey {
            sent_id: &self.sent_id,
            verb_index: self.verb_index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey<'a> {
    pub sent_id: &'a str,
    pub verb_index: usize,
}

/// One query per voice.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VoiceSpec {
    pub name: String,
    patterns: [Pattern; 4],
}

const TURKISH: [&str; 4] = [
    r#"pattern X [upos="VERB"]; X [VerbForm="Fin"] without X [Voice="CauPass"|"Cau"|"Pass"|"Rcp"|"Rfl"]"#,
    r#"pattern X [upos="VERB"]; X [Voice="Pass"]; X [VerbForm="Fin"]"#,
    r#"pattern X [upos="VERB"]; X [Voice="Cau"]; X [VerbForm="Fin"]"#,
    // UD Turkish spells the causative-passive value `CauPass`.
    r#"pattern X [upos="VERB"]; X [Voice="CauPass"]; X [VerbForm="Fin"]"#,
];

const HEBREW: [&str; 4] = [
    r#"pattern X [HebBinyan="PAAL"]"#,
    r#"pattern X [HebBinyan="NIFAL"]"#,
    r#"pattern X [HebBinyan="HIFIL"]"#,
    r#"pattern X [HebBinyan="HUFAL"]"#,
];

impl VoiceSpec {
    pub fn new(name: impl Into<String>, patterns: [Pattern; 4]) -> Self {
        VoiceSpec {
            name: name.into(),
            patterns,
        }
    }

    fn from_sources(name: &str, sources: [&str; 4]) -> Self {
        let patterns = sources.map(|s| parse_pattern(s).expect("built-in pattern parses"));
        VoiceSpec::new(name, patterns)
    }

    pub fn turkish() -> Self {
        Self::from_sources("turkish", TURKISH)
    }

    pub fn hebrew() -> Self {
        Self::from_sources("hebrew", HEBREW)
    }

    pub fn builtin(name: &str) -> Option<Self> {
        match name {
            "turkish" => Some(Self::turkish()),
            "hebrew" => Some(Self::hebrew()),
            _ => None,
        }
    }

    /// Parse a JSON object keyed `Act`, `Pass`, `Caus`, `CausPass`, each
    /// holding one pattern string.
    pub fn from_json(name: impl Into<String>, json: &str) -> Result<Self> {
        let raw: BTreeMap<String, String> = serde_json::from_str(json)?;
        let mut slots: [Option<Pattern>; 4] = Default::default();
        for (key, text) in raw {
            let voice: VoiceLabel = key
                .parse()
                .map_err(|_| Error::Config(format!("unknown voice key {key:?} in voice spec")))?;
            slots[voice.index()] = Some(parse_pattern(&text)?);
        }
        let mut patterns = Vec::with_capacity(4);
        for (voice, slot) in VoiceLabel::ALL.into_iter().zip(slots) {
            patterns.push(slot.ok_or_else(|| {
                Error::Config(format!("voice spec has no pattern for {voice}"))
            })?);
        }
        let patterns: [Pattern; 4] = patterns.try_into().expect("four voices");
        Ok(VoiceSpec::new(name, patterns))
    }

    pub fn to_json(&self) -> String {
        let map: BTreeMap<&str, String> = VoiceLabel::ALL
            .iter()
            .map(|v| (v.as_str(), self.pattern(*v).to_string()))
            .collect();
        serde_json::to_string_pretty(&map).expect("string map serializes")
    }

    pub fn pattern(&self, voice: VoiceLabel) -> &Pattern {
        &self.patterns[voice.index()]
    }
}

/// Sentence records grouped by voice, in treebank, sentence, word order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct VoicePools {
    pools: [Vec<SentenceRecord>; 4],
}

impl VoicePools {
    pub fn get(&self, voice: VoiceLabel) -> &[SentenceRecord] {
        &self.pools[voice.index()]
    }

    pub fn push(&mut self, record: SentenceRecord) {
        self.pools[record.voice.index()].push(record);
    }

    pub fn sizes(&self) -> [usize; 4] {
        [0, 1, 2, 3].map(|i| self.pools[i].len())
    }

    pub fn iter(&self) -> impl Iterator<Item = &SentenceRecord> {
        self.pools.iter().flatten()
    }

    /// Append `other` after `self`, keeping per-voice order.
    pub fn extend(&mut self, other: VoicePools) {
        for (mine, theirs) in self.pools.iter_mut().zip(other.pools) {
            mine.extend(theirs);
        }
    }

    pub fn ensure_non_empty(&self) -> Result<()> {
        for voice in VoiceLabel::ALL {
            if self.get(voice).is_empty() {
                return Err(Error::EmptyPool {
                    voice: voice.to_string(),
                });
            }
        }
        Ok(())
    }

    /// Look up a record by sentence id and verb index.
    pub fn index(&self) -> HashMap<(String, usize), &SentenceRecord> {
        self.iter()
            .map(|r| ((r.sent_id.clone(), r.verb_index), r))
            .collect()
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for record in self.iter() {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self> {
        let mut pools = VoicePools::default();
        for (i, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::Format {
                record: i + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SentenceRecord =
                serde_json::from_str(&line).map_err(|e| Error::Format {
                    record: i + 1,
                    message: e.to_string(),
                })?;
            pools.push(record);
        }
        Ok(pools)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_jsonl(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_jsonl(std::io::BufReader::new(file))
    }
}

/// Records for every (sentence, matching word) pair in `treebank`, without
/// the non-empty check.
pub fn collect_voice_records(treebank: &Treebank, spec: &VoiceSpec) -> Result<VoicePools> {
    let mut pools = VoicePools::default();
    for voice in VoiceLabel::ALL {
        let pattern = spec.pattern(voice);
        for sentence in &treebank.sentences {
            for verb_index in pattern.match_sentence(sentence) {
                pools.push(SentenceRecord {
                    voice,
                    sent_id: sentence.sent_id.clone(),
                    source: sentence.source.clone(),
                    verb_index,
                    verb_surface: sentence.surface_form(verb_index)?.to_string(),
                    text: sentence.text.clone(),
                });
            }
        }
    }
    Ok(pools)
}

pub fn build_voice_pool(treebank: &Treebank, spec: &VoiceSpec) -> Result<VoicePools> {
    let pools = collect_voice_records(treebank, spec)?;
    pools.ensure_non_empty()?;
    Ok(pools)
}

/// Pools over several treebanks, merged in the given order.
///
/// Sentence ids must be unique across the inputs since records are keyed by
/// them downstream.
pub fn build_voice_pools(treebanks: &[Treebank], spec: &VoiceSpec) -> Result<VoicePools> {
    let mut owner: HashMap<&str, &str> = HashMap::new();
    for tb in treebanks {
        for s in &tb.sentences {
            if let Some(prev) = owner.insert(&s.sent_id, &tb.name) {
                return Err(Error::Config(format!(
                    "sent_id {} occurs in both {prev} and {}",
                    s.sent_id, tb.name
                )));
            }
        }
    }
    let mut pools = VoicePools::default();
    for tb in treebanks {
        pools.extend(collect_voice_records(tb, spec)?);
    }
    pools.ensure_non_empty()?;
    Ok(pools)
}
