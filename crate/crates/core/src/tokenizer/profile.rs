//! Fragmentation statistics of verb forms and sentences, per voice.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::wordpiece::{tokenize_text, Vocabulary};
use crate::blm::{Dataset, Slot};
use crate::pattern::VoiceLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    Sentences,
    Verbs,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Sentences => "sentences",
            Scope::Verbs => "verbs",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = crate::error::Error;

    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s {
            "sentences" => Ok(Scope::Sentences),
            "verbs" => Ok(Scope::Verbs),
            _ => Err(crate::error::Error::Argument(format!("unknown scope {s:?}"))),
        }
    }
}

/// Counts for one voice. `tokens_per_instance` is the mean of per-form
/// token counts; `chars_per_token` the ratio of the totals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VoiceProfile {
    pub voice: VoiceLabel,
    pub instances: usize,
    pub chars: usize,
    pub tokens: usize,
    pub tokens_per_instance: f64,
    pub chars_per_token: f64,
    pub one_token_forms: usize,
    pub top_tokens: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TokenizationProfile {
    pub scope: Scope,
    pub vocab: String,
    pub voices: Vec<VoiceProfile>,
}

impl TokenizationProfile {
    pub fn voice(&self, voice: VoiceLabel) -> &VoiceProfile {
        &self.voices[voice.index()]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "voice",
            "scope",
            "instances",
            "chars",
            "tokens",
            "tok_per_inst",
            "ch_per_tok",
            "one_token_forms",
        ])?;
        for p in &self.voices {
            w.write_record([
                p.voice.to_string(),
                self.scope.as_str().to_string(),
                p.instances.to_string(),
                p.chars.to_string(),
                p.tokens.to_string(),
                format!("{:.3}", p.tokens_per_instance),
                format!("{:.3}", p.chars_per_token),
                p.one_token_forms.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Top verb pieces per voice. Root pieces are counted alongside `##`
    /// continuations.
    pub fn write_top_tokens_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["voice", "rank", "token", "count"])?;
        for p in &self.voices {
            for (rank, (tok, count)) in p.top_tokens.iter().enumerate() {
                w.write_record([
                    p.voice.to_string(),
                    (rank + 1).to_string(),
                    tok.clone(),
                    count.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Running per-voice totals. Merging two accumulators equals accumulating
/// their inputs in sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProfileAccumulator {
    cells: [Cell; 4],
}

#[derive(Debug, Clone, Default, PartialEq)]
struct Cell {
    instances: usize,
    chars: usize,
    tokens: usize,
    one_token_forms: usize,
    verb_pieces: HashMap<String, usize>,
}

impl ProfileAccumulator {
    /// Record one form (a sentence or a verb) and, separately, the pieces of
    /// the verb it carries.
    pub fn add(&mut self, voice: VoiceLabel, form: &str, pieces: usize, verb_pieces: &[String]) {
        let cell = &mut self.cells[voice.index()];
        cell.instances += 1;
        cell.chars += form.chars().count();
        cell.tokens += pieces;
        if pieces == 1 {
            cell.one_token_forms += 1;
        }
        for p in verb_pieces {
            *cell.verb_pieces.entry(p.clone()).or_default() += 1;
        }
    }

    pub fn merge(&mut self, other: &ProfileAccumulator) {
        for (a, b) in self.cells.iter_mut().zip(&other.cells) {
            a.instances += b.instances;
            a.chars += b.chars;
            a.tokens += b.tokens;
            a.one_token_forms += b.one_token_forms;
            for (k, v) in &b.verb_pieces {
                *a.verb_pieces.entry(k.clone()).or_default() += v;
            }
        }
    }

    pub fn finish(&self, scope: Scope, vocab: &str, top_k: usize) -> TokenizationProfile {
        let voices = VoiceLabel::ALL
            .iter()
            .map(|&voice| {
                let c = &self.cells[voice.index()];
                VoiceProfile {
                    voice,
                    instances: c.instances,
                    chars: c.chars,
                    tokens: c.tokens,
                    tokens_per_instance: ratio(c.tokens, c.instances),
                    chars_per_token: ratio(c.chars, c.tokens),
                    one_token_forms: c.one_token_forms,
                    top_tokens: rank(&c.verb_pieces, top_k),
                }
            })
            .collect();
        TokenizationProfile {
            scope,
            vocab: vocab.to_string(),
            voices,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Sorted by count descending, ties in lexicographic order.
fn rank(counts: &HashMap<String, usize>, k: usize) -> Vec<(String, usize)> {
    let mut v: Vec<(String, usize)> = counts.iter().map(|(t, c)| (t.clone(), *c)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.truncate(k);
    v
}

/// Distinct records (by sentence id and verb index) across all context and
/// answer slots, in first-seen order. Each sentence counts once no matter
/// how many instances reuse it.
pub fn distinct_records(dataset: &Dataset) -> Vec<&Slot> {
    let mut seen = HashSet::new();
    dataset
        .instances
        .iter()
        .flat_map(|i| i.slots())
        .filter(|s| seen.insert((s.sent_id.as_str(), s.verb_index)))
        .collect()
}

pub const DEFAULT_TOP_K: usize = 3;

pub fn profile_dataset(dataset: &Dataset, vocab: &Vocabulary, scope: Scope) -> TokenizationProfile {
    profile_dataset_top(dataset, vocab, scope, DEFAULT_TOP_K)
}

pub fn profile_dataset_top(
    dataset: &Dataset,
    vocab: &Vocabulary,
    scope: Scope,
    top_k: usize,
) -> TokenizationProfile {
    let mut acc = ProfileAccumulator::default();
    for slot in distinct_records(dataset) {
        let verb_pieces = tokenize_text(vocab, &slot.verb_surface);
        let (form, pieces) = match scope {
            Scope::Verbs => (&slot.verb_surface, verb_pieces.len()),
            Scope::Sentences => (&slot.text, tokenize_text(vocab, &slot.text).len()),
        };
        acc.add(slot.voice, form, pieces, &verb_pieces);
    }
    acc.finish(scope, &vocab.name, top_k)
}

/// The `k` most frequent pieces among the verb forms of `voice`.
pub fn top_tokens(
    dataset: &Dataset,
    vocab: &Vocabulary,
    voice: VoiceLabel,
    k: usize,
) -> Vec<(String, usize)> {
    let mut counts: HashMap<String, usize> = HashMap::new();
    for slot in distinct_records(dataset).into_iter().filter(|s| s.voice == voice) {
        for p in tokenize_text(vocab, &slot.verb_surface) {
            *counts.entry(p).or_default() += 1;
        }
    }
    rank(&counts, k.max(1))
}

/// Per-form token counts, in case a caller wants the raw distribution.
pub fn token_counts(dataset: &Dataset, vocab: &Vocabulary, scope: Scope) -> BTreeMap<VoiceLabel, Vec<usize>> {
    let mut out: BTreeMap<VoiceLabel, Vec<usize>> = BTreeMap::new();
    for slot in distinct_records(dataset) {
        let text = match scope {
            Scope::Verbs => &slot.verb_surface,
            Scope::Sentences => &slot.text,
        };
        out.entry(slot.voice).or_default().push(tokenize_text(vocab, text).len());
    }
    out
}
