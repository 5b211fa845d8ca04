//! Sentence embedding stores and the `BLMEMB` binary format.
//!
//! ```text
//! BLMEMB 1 <dim> <count>\n
//! repeated <count> times:
//!   u16 LE key length | UTF-8 key | <dim> × f32 LE
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use crate::blm::Dataset;
use crate::error::{Error, Result};
use crate::hash::{fnv1a64, splitmix64_mix, GOLDEN_GAMMA};
use crate::tokenizer::{tokenize_text, Vocabulary};

pub const MAGIC: &str = "BLMEMB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Provenance {
    File(PathBuf),
    Baseline { seed: u64, vocab: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    vectors: IndexMap<String, Vec<f32>>,
    pub provenance: Provenance,
}

impl EmbeddingStore {
    pub fn new(dim: usize, provenance: Provenance) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Argument("embedding dim must be positive".into()));
        }
        Ok(EmbeddingStore {
            dim,
            vectors: IndexMap::new(),
            provenance,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn get(&self, key: &str) -> Option<&[f32]> {
        self.vectors.get(key).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    /// Add a vector; keys are unique, lengths must equal `dim`, and every
    /// component must be finite.
    pub fn insert(&mut self, key: impl Into<String>, vector: Vec<f32>) -> Result<()> {
        let key = key.into();
        if key.len() > u16::MAX as usize {
            return Err(Error::Argument(format!("key longer than {} bytes", u16::MAX)));
        }
        if vector.len() != self.dim {
            return Err(Error::Argument(format!(
                "vector for {key} has length {}, expected {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("vector for {key} is not finite")));
        }
        if self.vectors.contains_key(&key) {
            return Err(Error::Argument(format!("duplicate embedding key {key}")));
        }
        self.vectors.insert(key, vector);
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{MAGIC} {VERSION} {} {}", self.dim, self.vectors.len())?;
        for (key, vector) in &self.vectors {
            out.write_all(&(key.len() as u16).to_le_bytes())?;
            out.write_all(key.as_bytes())?;
            for x in vector {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut input: R, provenance: Provenance) -> Result<Self> {
        let mut header = String::new();
        input
            .read_line(&mut header)
            .map_err(|e| format_err(0, e.to_string()))?;
        let fields: Vec<&str> = header.trim_end_matches('\n').split(' ').collect();
        let (dim, count) = match fields.as_slice() {
            [magic, version, dim, count] if *magic == MAGIC => {
                if version.parse::<u32>().ok() != Some(VERSION) {
                    return Err(format_err(0, format!("unsupported version {version}")));
                }
                let dim: usize = dim
                    .parse()
                    .map_err(|_| format_err(0, format!("invalid dim {dim:?}")))?;
                let count: usize = count
                    .parse()
                    .map_err(|_| format_err(0, format!("invalid count {count:?}")))?;
                (dim, count)
            }
            _ => return Err(format_err(0, format!("bad header {:?}", header.trim_end()))),
        };
        if dim == 0 {
            return Err(format_err(0, "dim must be positive"));
        }
        let mut store = EmbeddingStore::new(dim, provenance)?;
        let mut payload = vec![0u8; dim * 4];
        for record in 1..=count {
            let mut len = [0u8; 2];
            input
                .read_exact(&mut len)
                .map_err(|_| format_err(record, "truncated key length"))?;
            let mut key = vec![0u8; u16::from_le_bytes(len) as usize];
            input
                .read_exact(&mut key)
                .map_err(|_| format_err(record, "truncated key"))?;
            let key = String::from_utf8(key).map_err(|_| format_err(record, "key is not UTF-8"))?;
            input.read_exact(&mut payload).map_err(|_| {
                format_err(record, format!("vector for {key} shorter than dim {dim}"))
            })?;
            let vector: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if store.vectors.contains_key(&key) {
                return Err(format_err(record, format!("duplicate key {key}")));
            }
            if vector.iter().any(|x| !x.is_finite()) {
                return Err(format_err(record, format!("vector for {key} is not finite")));
            }
            store.vectors.insert(key, vector);
        }
        let mut rest = [0u8; 1];
        match input.read(&mut rest) {
            Ok(0) => Ok(store),
            Ok(_) => Err(format_err(
                count,
                format!("trailing bytes after {count} records; payload does not match dim {dim}"),
            )),
            Err(e) => Err(format_err(count, e.to_string())),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w).map_err(|e| Error::io(path, e))?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(file), Provenance::File(path.to_path_buf()))
    }
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::read(path)
}

pub fn write_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    store.write(path)
}

fn format_err(record: usize, message: impl Into<String>) -> Error {
    Error::Format {
        record,
        message: message.into(),
    }
}

/// Deterministic pseudo-random unit vector for one token.
///
/// Component `i` is the splitmix64 finalizer applied to
/// `key + (i + 1)·γ`, where `key = mix(seed) ^ fnv1a64(token)`, mapped to
/// `[-1, 1)` through its top 53 bits; the result is L2-normalized.
pub fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let key = splitmix64_mix(seed) ^ fnv1a64(token.as_bytes());
    let mut v: Vec<f64> = (0..dim as u64)
        .map(|i| {
            let z = splitmix64_mix(key.wrapping_add((i + 1).wrapping_mul(GOLDEN_GAMMA)));
            (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
        })
        .collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    } else {
        v[0] = 1.0;
    }
    v
}

/// Mean of the token vectors of `tokens`.
pub fn baseline_embed<S: AsRef<str>>(tokens: &[S], dim: usize, seed: u64) -> Result<Vec<f32>> {
    if dim == 0 {
        return Err(Error::Argument("embedding dim must be positive".into()));
    }
    if tokens.is_empty() {
        return Err(Error::Argument("cannot embed an empty token list".into()));
    }
    // Summing in sorted order makes the result independent of token order
    // down to the last bit.
    let mut sorted: Vec<&str> = tokens.iter().map(AsRef::as_ref).collect();
    sorted.sort_unstable();
    let mut sum = vec![0.0f64; dim];
    for t in sorted {
        for (s, x) in sum.iter_mut().zip(token_vector(t, dim, seed)) {
            *s += x;
        }
    }
    let n = tokens.len() as f64;
    Ok(sum.into_iter().map(|s| (s / n) as f32).collect())
}

/// Baseline vectors for every distinct slot of `dataset`, keyed for its
/// variant. Slot texts are segmented with `vocab` before averaging.
pub fn embed_dataset_baseline(
    dataset: &Dataset,
    vocab: &Vocabulary,
    dim: usize,
    seed: u64,
) -> Result<EmbeddingStore> {
    let mut store = EmbeddingStore::new(
        dim,
        Provenance::Baseline {
            seed,
            vocab: vocab.name.clone(),
        },
    )?;
    for inst in &dataset.instances {
        for slot in inst.slots() {
            let key = slot.embedding_key(dataset.variant);
            if store.get(&key).is_some() {
                continue;
            }
            let tokens = tokenize_text(vocab, &slot.text);
            if tokens.is_empty() {
                return Err(Error::Argument(format!(
                    "sentence {} has no tokens to embed",
                    slot.sent_id
                )));
            }
            store.insert(key, baseline_embed(&tokens, dim, seed)?)?;
        }
    }
    Ok(store)
}
