#![allow(dead_code)]

use std::path::{Path, PathBuf};

use blm_core::pattern::{build_voice_pools, VoicePools, VoiceSpec};
use blm_core::treebank::{read_treebank, Treebank};
use blm_core::Vocabulary;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn turkish() -> Treebank {
    read_treebank(&fixture("turkish_mini.conllu")).unwrap()
}

pub fn hebrew() -> Treebank {
    read_treebank(&fixture("hebrew_mini.conllu")).unwrap()
}

pub fn vocab() -> Vocabulary {
    Vocabulary::read(&fixture("mini_vocab.txt")).unwrap()
}

pub fn turkish_pools() -> VoicePools {
    build_voice_pools(&[turkish()], &VoiceSpec::turkish()).unwrap()
}

pub fn hebrew_pools() -> VoicePools {
    build_voice_pools(&[hebrew()], &VoiceSpec::hebrew()).unwrap()
}

/// Both fixture languages pooled per voice.
pub fn pooled() -> VoicePools {
    let mut pools = turkish_pools();
    pools.extend(hebrew_pools());
    pools
}

/// Reference WordPiece segmenter over a plain string set, written without
/// looking at the library: tries every suffix length from the longest.
pub fn reference_segment(
    vocab: &std::collections::HashSet<String>,
    unk: &str,
    word: &str,
) -> Vec<String> {
    let chars: Vec<char> = word.chars().collect();
    if chars.len() > 100 {
        return vec![unk.to_string()];
    }
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < chars.len() {
        let mut matched = None;
        let mut len = chars.len() - pos;
        while len > 0 {
            let piece: String = chars[pos..pos + len].iter().collect();
            let key = if pos == 0 { piece } else { format!("##{piece}") };
            if vocab.contains(&key) {
                matched = Some((key, len));
                break;
            }
            len -= 1;
        }
        match matched {
            Some((key, len)) => {
                out.push(key);
                pos += len;
            }
            None => return vec![unk.to_string()],
        }
    }
    out
}

/// Per-class F1 computed from raw counts with explicit loops.
pub fn oracle_f1(m: &[[u64; 4]; 4]) -> ([f64; 4], f64) {
    let mut f = [0.0; 4];
    for c in 0..4 {
        let tp = m[c][c] as f64;
        let predicted: f64 = m.iter().map(|row| row[c] as f64).sum();
        let actual: f64 = m[c].iter().map(|&x| x as f64).sum();
        let p = if predicted > 0.0 { tp / predicted } else { 0.0 };
        let r = if actual > 0.0 { tp / actual } else { 0.0 };
        f[c] = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let macro_f1 = (f[0] + f[1] + f[2] + f[3]) / 4.0;
    (f, macro_f1)
}

/// A dataset over synthetic pools plus a store where every record is its
/// voice's basis direction plus N(0, sigma^2) noise per coordinate, on top
/// of a random sentence vector with N(0, base^2 / dim) coordinates. With
/// `shuffled`, each record gets a uniformly random direction instead, so
/// vectors carry no voice information.
#[allow(clippy::too_many_arguments)]
pub fn synthetic(
    per_voice: usize,
    n_instances: usize,
    split_ratio: (u32, u32),
    dim: usize,
    sigma: f64,
    base: f64,
    shuffled: bool,
    seed: u64,
) -> (blm_core::Dataset, blm_core::EmbeddingStore) {
    use blm_core::blm::{build_dataset, BuildConfig};
    use blm_core::embedding::Provenance;
    use blm_core::pattern::{SentenceRecord, VoiceLabel};
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    let mut pools = VoicePools::default();
    for v in VoiceLabel::ALL {
        for i in 0..per_voice {
            pools.push(SentenceRecord {
                voice: v,
                sent_id: format!("{v}-{i}"),
                source: "synthetic".into(),
                verb_index: 1,
                verb_surface: format!("{v}{i}"),
                text: format!("{v} {i}"),
            });
        }
    }
    let cfg = BuildConfig {
        name: "syn".into(),
        n_instances,
        seed,
        split_ratio,
        strict: false,
    };
    let dataset = build_dataset(&pools, &cfg).unwrap();

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed ^ 0x5151);
    let noise = Normal::new(0.0, sigma).unwrap();
    let background = Normal::new(0.0, base / (dim as f64).sqrt()).unwrap();
    let mut store = blm_core::EmbeddingStore::new(dim, Provenance::File("synthetic".into())).unwrap();
    for r in pools.iter() {
        let direction = if shuffled {
            rng.random_range(0..4)
        } else {
            r.voice.index()
        };
        let v: Vec<f32> = (0..dim)
            .map(|j| {
                let signal = f64::from(u8::from(j == direction));
                (signal + background.sample(&mut rng) + noise.sample(&mut rng)) as f32
            })
            .collect();
        let key = blm_core::Slot::from_record(r).embedding_key(blm_core::Variant::FullSentence);
        store.insert(key, v).unwrap();
    }
    (dataset, store)
}
