use std::collections::{HashMap, HashSet};

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BlmInstance, Dataset, Slot, Split, Variant};
use crate::error::{Error, Result};
use crate::hash::{fnv1a64, splitmix64_mix};
use crate::pattern::{SentenceRecord, VoiceLabel, VoicePools};

/// The six orders of three items, indexed by `permutation_id`.
pub const PERMUTATIONS: [[usize; 3]; 6] = [
    [0, 1, 2],
    [0, 2, 1],
    [1, 0, 2],
    [1, 2, 0],
    [2, 0, 1],
    [2, 1, 0],
];

/// Per-voice records drawn by one instance: P4 and the correct answer come
/// from the target pool; two pair sentences and one distractor from each
/// other pool.
const MIN_DISTINCT_PER_POOL: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BuildConfig {
    pub name: String,
    pub n_instances: usize,
    pub seed: u64,
    /// Train share as `numerator / denominator`, applied per target voice.
    pub split_ratio: (u32, u32),
    /// Also keep test answer sentences out of every train answer set.
    pub strict: bool,
}

impl Default for BuildConfig {
    fn default() -> Self {
        BuildConfig {
            name: "blm".into(),
            n_instances: 8000,
            seed: 0,
            split_ratio: (9, 10),
            strict: false,
        }
    }
}

impl BuildConfig {
    fn validate(&self) -> Result<()> {
        if self.n_instances == 0 || !self.n_instances.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "n_instances must be a positive multiple of 4, got {}",
                self.n_instances
            )));
        }
        let (num, den) = self.split_ratio;
        if den == 0 || num > den {
            return Err(Error::Config(format!("invalid split ratio {num}:{den}")));
        }
        Ok(())
    }

    pub fn train_per_voice(&self) -> usize {
        let per_voice = self.n_instances / 4;
        per_voice * self.split_ratio.0 as usize / self.split_ratio.1 as usize
    }
}

/// The voice of each of the seven context slots: pairs P1..P3 carry the
/// non-target voices in the order picked by `permutation_id`, P4 holds a
/// single target-voice sentence.
pub fn context_layout(target: VoiceLabel, permutation_id: u8) -> [VoiceLabel; 7] {
    let others = other_voices(target);
    let order = PERMUTATIONS[permutation_id as usize % 6];
    let [a, b, c] = order.map(|i| others[i]);
    [a, a, b, b, c, c, target]
}

fn other_voices(target: VoiceLabel) -> [VoiceLabel; 3] {
    let mut out = [target; 3];
    let mut k = 0;
    for v in VoiceLabel::ALL {
        if v != target {
            out[k] = v;
            k += 1;
        }
    }
    out
}

/// Candidate record indices of one pool, optionally divided into an answer
/// partition for train and one for test (strict mode).
struct PoolView<'p> {
    records: &'p [SentenceRecord],
    all: Vec<usize>,
    train_answers: Vec<usize>,
    test_answers: Vec<usize>,
    draws: usize,
}

impl<'p> PoolView<'p> {
    fn new(records: &'p [SentenceRecord], strict: bool, seed: u64, test_share: (usize, usize)) -> Self {
        let all: Vec<usize> = (0..records.len()).collect();
        let (train_answers, test_answers) = if strict {
            // Decided per sentence id, so a sentence with verbs in two pools
            // lands on the same side in both.
            all.iter()
                .partition(|&&i| !is_test_sentence(&records[i].sent_id, seed, test_share))
        } else {
            (Vec::new(), Vec::new())
        };
        PoolView {
            records,
            all,
            train_answers,
            test_answers,
            draws: 0,
        }
    }

    fn answer_candidates(&self, strict: bool, split: Split) -> &[usize] {
        match (strict, split) {
            (false, _) => &self.all,
            (true, Split::Train) => &self.train_answers,
            (true, Split::Test) => &self.test_answers,
        }
    }

    fn distinct_sentences(&self) -> usize {
        self.records
            .iter()
            .map(|r| r.sent_id.as_str())
            .collect::<HashSet<_>>()
            .len()
    }
}

fn is_test_sentence(sent_id: &str, seed: u64, (num, den): (usize, usize)) -> bool {
    let h = splitmix64_mix(fnv1a64(sent_id.as_bytes()) ^ seed);
    (h % den as u64) < num as u64
}

#[derive(Clone, Copy)]
enum Candidates {
    All,
    Answers(Split),
}

impl<'p> PoolView<'p> {
    /// Uniform draw avoiding sentences already in the instance.
    fn draw(
        &mut self,
        which: Candidates,
        strict: bool,
        used: &mut HashSet<&'p str>,
        rng: &mut ChaCha8Rng,
        voice: VoiceLabel,
    ) -> Result<&'p SentenceRecord> {
        let records = self.records;
        let candidates = match which {
            Candidates::All => &self.all,
            Candidates::Answers(split) => self.answer_candidates(strict, split),
        };
        let mut pick = None;
        if !candidates.is_empty() {
            for _ in 0..32 {
                let i = candidates[rng.random_range(0..candidates.len())];
                if !used.contains(records[i].sent_id.as_str()) {
                    pick = Some(i);
                    break;
                }
            }
            if pick.is_none() {
                let start = rng.random_range(0..candidates.len());
                pick = (0..candidates.len())
                    .map(|k| candidates[(start + k) % candidates.len()])
                    .find(|&i| !used.contains(records[i].sent_id.as_str()));
            }
        }
        let i = pick.ok_or_else(|| Error::Capacity {
            voice: voice.to_string(),
            required: used.len() + 1,
            available: candidates.len(),
        })?;
        self.draws += 1;
        used.insert(records[i].sent_id.as_str());
        Ok(&records[i])
    }
}

/// Assemble `cfg.n_instances` instances, a quarter per target voice.
///
/// Instances cycle through the target voices, and within a voice through
/// the six context orders. The test instances of each voice are a seeded
/// sample of `per_voice - train_per_voice` positions.
pub fn build_dataset(pools: &VoicePools, cfg: &BuildConfig) -> Result<Dataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut split_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SPLIT_STREAM);

    let per_voice = cfg.n_instances / 4;
    let n_train = cfg.train_per_voice();
    let test_share = (
        (cfg.split_ratio.1 - cfg.split_ratio.0) as usize,
        cfg.split_ratio.1 as usize,
    );

    let mut views: Vec<PoolView<'_>> = VoiceLabel::ALL
        .iter()
        .map(|&v| PoolView::new(pools.get(v), cfg.strict, cfg.seed, test_share))
        .collect();
    for (voice, view) in VoiceLabel::ALL.iter().zip(&views) {
        let available = view.distinct_sentences();
        if available < MIN_DISTINCT_PER_POOL {
            return Err(Error::Capacity {
                voice: voice.to_string(),
                required: MIN_DISTINCT_PER_POOL,
                available,
            });
        }
        if cfg.strict && (view.train_answers.is_empty() || view.test_answers.is_empty()) {
            return Err(Error::Capacity {
                voice: voice.to_string(),
                required: MIN_DISTINCT_PER_POOL + 1,
                available,
            });
        }
    }

    let test_positions: Vec<HashSet<usize>> = VoiceLabel::ALL
        .iter()
        .map(|_| {
            index::sample(&mut split_rng, per_voice, per_voice - n_train)
                .into_iter()
                .collect()
        })
        .collect();

    let mut instances = Vec::with_capacity(cfg.n_instances);
    for i in 0..cfg.n_instances {
        let target = VoiceLabel::ALL[i % 4];
        let k = i / 4;
        let permutation_id = (k % 6) as u8;
        let split = if test_positions[target.index()].contains(&k) {
            Split::Test
        } else {
            Split::Train
        };
        let instance_id = format!("{}-{:05}", cfg.name, i);
        instances.push(sample_instance(
            &mut views,
            &mut rng,
            cfg.strict,
            instance_id,
            target,
            permutation_id,
            split,
        )?);
    }

    for (voice, view) in VoiceLabel::ALL.iter().zip(&views) {
        let reuse = view.draws as f64 / view.records.len() as f64;
        if reuse > 1.0 {
            log::info!(
                "{voice}: {} draws from {} records (reuse factor {reuse:.2})",
                view.draws,
                view.records.len()
            );
        }
    }

    Ok(Dataset {
        name: cfg.name.clone(),
        variant: Variant::FullSentence,
        instances,
    })
}

const SPLIT_STREAM: u64 = 0x5eed_5917_0000_0001;

fn sample_instance(
    views: &mut [PoolView<'_>],
    rng: &mut ChaCha8Rng,
    strict: bool,
    instance_id: String,
    target: VoiceLabel,
    permutation_id: u8,
    split: Split,
) -> Result<BlmInstance> {
    let mut used = HashSet::new();
    let layout = context_layout(target, permutation_id);

    // Answers first so that strict partitions are honoured before the
    // unrestricted context draws take sentences away.
    let mut answers = Vec::with_capacity(4);
    for voice in VoiceLabel::ALL {
        let record = views[voice.index()].draw(
            Candidates::Answers(split),
            strict,
            &mut used,
            rng,
            voice,
        )?;
        answers.push(Slot::from_record(record));
    }

    let mut context = Vec::with_capacity(7);
    for voice in layout {
        let record = views[voice.index()].draw(Candidates::All, strict, &mut used, rng, voice)?;
        context.push(Slot::from_record(record));
    }

    answers.shuffle(rng);
    let correct_index = answers
        .iter()
        .position(|a| a.voice == target)
        .expect("one answer per voice");

    Ok(BlmInstance {
        instance_id,
        split,
        target_voice: target,
        permutation_id,
        context,
        answers,
        correct_index,
    })
}

/// Replace every slot's text by its verb's surface form.
///
/// Slots are linked back to their pool records through `(sent_id,
/// verb_index)`; an unlinkable slot is an error.
pub fn derive_verbonly(dataset: &Dataset, pools: &VoicePools) -> Result<Dataset> {
    if dataset.variant != Variant::FullSentence {
        return Err(Error::Derivation {
            instance: dataset.name.clone(),
            message: "dataset is already a VerbOnly variant".into(),
        });
    }
    let index: HashMap<(String, usize), &SentenceRecord> = pools.index();
    let mut out = dataset.clone();
    out.variant = Variant::VerbOnly;
    for inst in &mut out.instances {
        let id = inst.instance_id.clone();
        for slot in inst.context.iter_mut().chain(inst.answers.iter_mut()) {
            let record = index
                .get(&(slot.sent_id.clone(), slot.verb_index))
                .ok_or_else(|| Error::Derivation {
                    instance: id.clone(),
                    message: format!(
                        "no pool record for sentence {} verb {}",
                        slot.sent_id, slot.verb_index
                    ),
                })?;
            if record.voice != slot.voice {
                return Err(Error::Derivation {
                    instance: id.clone(),
                    message: format!(
                        "sentence {} is {} in the pools but {} in the dataset",
                        slot.sent_id, record.voice, slot.voice
                    ),
                });
            }
            slot.verb_surface = record.verb_surface.clone();
            slot.text = record.verb_surface.clone();
        }
    }
    Ok(out)
}
