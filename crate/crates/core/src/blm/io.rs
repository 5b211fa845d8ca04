//! JSON Lines dataset files, one instance per line.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BlmInstance, Dataset, Slot, Split, Variant, ANSWER_COUNT, CONTEXT_LEN};
use crate::error::{Error, Result};
use crate::pattern::VoiceLabel;

#[derive(Serialize)]
struct LineOut<'a> {
    instance_id: &'a str,
    variant: Variant,
    split: Split,
    target_voice: VoiceLabel,
    permutation_id: u8,
    context: &'a [Slot],
    answers: &'a [Slot],
    correct_index: usize,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LineIn {
    instance_id: String,
    variant: Variant,
    split: Split,
    target_voice: VoiceLabel,
    permutation_id: u8,
    context: Vec<Slot>,
    answers: Vec<Slot>,
    correct_index: usize,
}

pub fn write_dataset_to<W: Write>(dataset: &Dataset, mut out: W) -> std::io::Result<()> {
    for inst in &dataset.instances {
        let line = LineOut {
            instance_id: &inst.instance_id,
            variant: dataset.variant,
            split: inst.split,
            target_voice: inst.target_voice,
            permutation_id: inst.permutation_id,
            context: &inst.context,
            answers: &inst.answers,
            correct_index: inst.correct_index,
        };
        serde_json::to_writer(&mut out, &line)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_dataset_to(dataset, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a dataset, rejecting any record whose shape breaks the instance
/// contract. Records are numbered from 1.
pub fn read_dataset_from<R: BufRead>(name: impl Into<String>, input: R) -> Result<Dataset> {
    let mut instances = Vec::new();
    let mut variant = None;
    for (i, line) in input.lines().enumerate() {
        let record = i + 1;
        let fail = |message: String| Error::Format { record, message };
        let line = line.map_err(|e| fail(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let l: LineIn = serde_json::from_str(&line).map_err(|e| fail(e.to_string()))?;
        if l.context.len() != CONTEXT_LEN {
            return Err(fail(format!(
                "expected {CONTEXT_LEN} context sentences, found {}",
                l.context.len()
            )));
        }
        if l.answers.len() != ANSWER_COUNT {
            return Err(fail(format!(
                "expected {ANSWER_COUNT} answers, found {}",
                l.answers.len()
            )));
        }
        if l.correct_index >= ANSWER_COUNT {
            return Err(fail(format!("correct_index {} out of range", l.correct_index)));
        }
        if l.permutation_id >= 6 {
            return Err(fail(format!("permutation_id {} out of range", l.permutation_id)));
        }
        match variant {
            None => variant = Some(l.variant),
            Some(v) if v != l.variant => {
                return Err(fail(format!(
                    "variant {:?} differs from earlier records ({v:?})",
                    l.variant
                )))
            }
            Some(_) => {}
        }
        instances.push(BlmInstance {
            instance_id: l.instance_id,
            split: l.split,
            target_voice: l.target_voice,
            permutation_id: l.permutation_id,
            context: l.context,
            answers: l.answers,
            correct_index: l.correct_index,
        });
    }
    Ok(Dataset {
        name: name.into(),
        variant: variant.unwrap_or(Variant::FullSentence),
        instances,
    })
}

/// The dataset is named after the file stem.
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_dataset_from(name, BufReader::new(file))
}
