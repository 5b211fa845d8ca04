use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::{context_layout, Dataset, Split, ANSWER_COUNT, CONTEXT_LEN};
use crate::pattern::VoiceLabel;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    /// Offending instance ids; empty for dataset-level findings.
    pub instances: Vec<String>,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.instances.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "[{}] {}", self.instances.join(", "), self.message)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct AuditReport {
    pub instances: usize,
    /// Instance counts per target voice.
    pub per_voice: BTreeMap<VoiceLabel, usize>,
    pub train: BTreeMap<VoiceLabel, usize>,
    pub test: BTreeMap<VoiceLabel, usize>,
    /// Permutation histogram per target voice.
    pub permutations: BTreeMap<VoiceLabel, [usize; 6]>,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        s.push_str("| voice | instances | train | test | permutations |\n");
        s.push_str("|---|---|---|---|---|\n");
        for v in VoiceLabel::ALL {
            let perms = self.permutations.get(&v).copied().unwrap_or_default();
            s.push_str(&format!(
                "| {v} | {} | {} | {} | {:?} |\n",
                self.per_voice.get(&v).unwrap_or(&0),
                self.train.get(&v).unwrap_or(&0),
                self.test.get(&v).unwrap_or(&0),
                perms
            ));
        }
        s.push_str(&format!("\n{} violations\n", self.violations.len()));
        for v in &self.violations {
            s.push_str(&format!("- {v}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AuditOptions {
    /// Additionally require that no test answer sentence is a train answer.
    pub strict: bool,
}

pub fn audit(dataset: &Dataset) -> AuditReport {
    audit_with(dataset, AuditOptions::default())
}

pub fn audit_with(dataset: &Dataset, opts: AuditOptions) -> AuditReport {
    let mut report = AuditReport {
        instances: dataset.instances.len(),
        ..Default::default()
    };
    for v in VoiceLabel::ALL {
        report.per_voice.insert(v, 0);
        report.train.insert(v, 0);
        report.test.insert(v, 0);
        report.permutations.insert(v, [0; 6]);
    }
    let mut violation = |ids: Vec<String>, message: String| {
        report.violations.push(Violation {
            instances: ids,
            message,
        })
    };

    let mut splits_by_id: HashMap<&str, HashSet<Split>> = HashMap::new();
    let mut counts: Vec<(VoiceLabel, Split, u8)> = Vec::new();

    for inst in &dataset.instances {
        let id = || vec![inst.instance_id.clone()];
        splits_by_id
            .entry(&inst.instance_id)
            .or_default()
            .insert(inst.split);
        counts.push((inst.target_voice, inst.split, inst.permutation_id));

        if inst.context.len() != CONTEXT_LEN || inst.answers.len() != ANSWER_COUNT {
            violation(
                id(),
                format!(
                    "shape {} context / {} answers",
                    inst.context.len(),
                    inst.answers.len()
                ),
            );
            continue;
        }

        let mut answer_voices: Vec<VoiceLabel> = inst.answers.iter().map(|a| a.voice).collect();
        answer_voices.sort();
        if answer_voices != VoiceLabel::ALL {
            violation(id(), format!("answer voices {answer_voices:?} are not one per voice"));
        }
        if inst.correct_index >= ANSWER_COUNT {
            violation(id(), format!("correct_index {} out of range", inst.correct_index));
        } else if inst.correct_answer().voice != inst.target_voice {
            violation(
                id(),
                format!(
                    "correct answer voice {} differs from target {}",
                    inst.correct_answer().voice,
                    inst.target_voice
                ),
            );
        }
        if inst.permutation_id >= 6 {
            violation(id(), format!("permutation_id {} out of range", inst.permutation_id));
        } else {
            let layout = context_layout(inst.target_voice, inst.permutation_id);
            let actual: Vec<VoiceLabel> = inst.context.iter().map(|s| s.voice).collect();
            if actual != layout {
                violation(
                    id(),
                    format!("context voices {actual:?} do not follow layout {layout:?}"),
                );
            }
        }
        let distinct: HashSet<&str> = inst.slots().map(|s| s.sent_id.as_str()).collect();
        if distinct.len() != CONTEXT_LEN + ANSWER_COUNT {
            violation(
                id(),
                format!(
                    "{} distinct sentences, expected {}",
                    distinct.len(),
                    CONTEXT_LEN + ANSWER_COUNT
                ),
            );
        }
    }

    let mut overlap: Vec<String> = splits_by_id
        .iter()
        .filter(|(_, s)| s.len() > 1)
        .map(|(id, _)| id.to_string())
        .collect();
    overlap.sort();
    if !overlap.is_empty() {
        violation(overlap, "instances present in both train and test".into());
    }
    let duplicates = dataset.instances.len() - splits_by_id.len();
    if duplicates > 0 {
        violation(Vec::new(), format!("{duplicates} duplicated instance ids"));
    }

    if opts.strict {
        let train_answers: HashSet<&str> = dataset
            .in_split(Split::Train)
            .flat_map(|i| i.answers.iter().map(|a| a.sent_id.as_str()))
            .collect();
        let mut leaked: Vec<String> = dataset
            .in_split(Split::Test)
            .filter(|i| i.answers.iter().any(|a| train_answers.contains(a.sent_id.as_str())))
            .map(|i| i.instance_id.clone())
            .collect();
        leaked.sort();
        if !leaked.is_empty() {
            violation(leaked, "test answers reuse train answer sentences".into());
        }
    }

    for (voice, split, perm) in counts {
        *report.per_voice.get_mut(&voice).unwrap() += 1;
        let cell = match split {
            Split::Train => report.train.get_mut(&voice).unwrap(),
            Split::Test => report.test.get_mut(&voice).unwrap(),
        };
        *cell += 1;
        if let Some(slot) = report.permutations.get_mut(&voice).unwrap().get_mut(perm as usize) {
            *slot += 1;
        }
    }
    for (what, map) in [
        ("instances", &report.per_voice),
        ("train instances", &report.train),
        ("test instances", &report.test),
    ] {
        let values: HashSet<usize> = map.values().copied().collect();
        if values.len() > 1 {
            report.violations.push(Violation {
                instances: Vec::new(),
                message: format!("unbalanced {what} per target voice: {map:?}"),
            });
        }
    }
    report
}
