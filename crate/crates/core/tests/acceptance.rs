//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any
//! failure.

mod common;

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use blm_core::blm::{audit, build_dataset, derive_verbonly, BuildConfig};
use blm_core::embedding::embed_dataset_baseline;
use blm_core::eval::{evaluate, f1_scores, mann_whitney_u, ConfusionMatrix, RunMetadata};
use blm_core::pattern::{build_voice_pools, VoiceLabel, VoiceSpec};
use blm_core::solver::{loss, param_grad, train, LossAgg, SolverModel, TrainConfig};
use blm_core::tokenizer::{profile_dataset, tokenize_word, Scope};
use blm_core::treebank::read_treebank;
use blm_core::{Split, Variant, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Name, optional time budget and check.
type Criterion = (&'static str, Option<Duration>, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn mwu_golden() -> Outcome {
    let r = mann_whitney_u(&[5.0, 6.0, 7.0, 8.0], &[1.0, 2.0, 3.0, 4.0]).map_err(|e| e.to_string())?;
    check(r.u == 16.0, || format!("U = {}", r.u))?;
    check((r.p_two_sided - 0.0286).abs() <= 0.0005, || format!("p = {}", r.p_two_sided))?;
    check(r.r == 1.0, || format!("r = {}", r.r))?;
    Ok(format!("U = {}, p = {:.4}, r = {}", r.u, r.p_two_sided, r.r))
}

fn full_dataset() -> Result<blm_core::Dataset, String> {
    let cfg = BuildConfig {
        n_instances: 8000,
        split_ratio: (9, 10),
        ..Default::default()
    };
    build_dataset(&common::pooled(), &cfg).map_err(|e| e.to_string())
}

fn dataset_shape() -> Outcome {
    let d = full_dataset()?;
    let report = audit(&d);
    for v in VoiceLabel::ALL {
        let (all, tr, te) = (report.per_voice[&v], report.train[&v], report.test[&v]);
        check((all, tr, te) == (2000, 1800, 200), || format!("{v}: {all} = {tr} + {te}"))?;
    }
    check(report.is_clean(), || format!("{} violations", report.violations.len()))?;
    let train: HashSet<&str> = d.in_split(Split::Train).map(|i| i.instance_id.as_str()).collect();
    let test: HashSet<&str> = d.in_split(Split::Test).map(|i| i.instance_id.as_str()).collect();
    check(train.is_disjoint(&test), || "train and test share ids".into())?;
    check(train.len() + test.len() == 8000, || "instance ids are not unique".into())?;
    Ok("2000 per voice, 1800/200, 0 violations".into())
}

fn tokenizer_oracle() -> Outcome {
    let alphabet: Vec<char> = "abcçdeğıioöşuüלמנה".chars().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mut agree = 0;
    let total = 10_000;
    for _ in 0..100 {
        let mut entries = vec!["[UNK]".to_string()];
        for _ in 0..rng.random_range(1..40) {
            let len = rng.random_range(1..=4);
            let piece: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            let entry = if rng.random_bool(0.5) { format!("##{piece}") } else { piece };
            if !entries.contains(&entry) {
                entries.push(entry);
            }
        }
        let vocab = Vocabulary::new("r", entries.iter().cloned(), "[UNK]").map_err(|e| e.to_string())?;
        let set: HashSet<String> = entries.into_iter().collect();
        for _ in 0..100 {
            let len = if rng.random_bool(0.01) { 101 } else { rng.random_range(1..16) };
            let word: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            let got = tokenize_word(&vocab, &word).map_err(|e| e.to_string())?;
            if got == common::reference_segment(&set, "[UNK]", &word) {
                agree += 1;
            }
        }
    }
    check(agree == total, || format!("{agree}/{total} agree"))?;
    Ok(format!("{agree}/{total} agree"))
}

fn character_vocabulary() -> Outcome {
    let pools = common::pooled();
    let alphabet: String = pools.iter().map(|r| r.verb_surface.as_str()).collect();
    let vocab = Vocabulary::characters("chars", &alphabet);
    for r in pools.iter() {
        let n = tokenize_word(&vocab, &r.verb_surface).map_err(|e| e.to_string())?.len();
        let chars = r.verb_surface.chars().count();
        check(n == chars, || format!("{}: {n} tokens for {chars} chars", r.verb_surface))?;
    }
    let cfg = BuildConfig {
        n_instances: 400,
        ..Default::default()
    };
    let full = build_dataset(&pools, &cfg).map_err(|e| e.to_string())?;
    let verbs = derive_verbonly(&full, &pools).map_err(|e| e.to_string())?;
    let profile = profile_dataset(&verbs, &vocab, Scope::Verbs);
    for vp in &profile.voices {
        check(vp.chars_per_token == 1.0, || format!("{}: {}", vp.voice, vp.chars_per_token))?;
    }
    Ok("1.0 characters per token in every voice".into())
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let hidden: [&[usize]; 3] = [&[], &[8], &[6, 4]];
    let dim = 5;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for point in 0..20 {
        let mut model = SolverModel::zeros(dim, hidden[point % 3]).map_err(|e| e.to_string())?;
        let params: Vec<f64> = (0..model.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.set_params(&params).map_err(|e| e.to_string())?;
        let input: Vec<f64> = (0..7 * dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let answers: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let correct = rng.random_range(0..4);
        // Every hinge stays active with this margin, away from its kink.
        let margin = 3.0;
        let (_, grad) =
            param_grad(&model, &input, &answers, correct, margin, LossAgg::Sum).map_err(|e| e.to_string())?;
        for k in 0..params.len() {
            let mut p = params.clone();
            let mut at = |x: f64| -> Result<f64, String> {
                p[k] = x;
                model.set_params(&p).map_err(|e| e.to_string())?;
                loss(&model.forward_stacked(&input), &answers, correct, margin, LossAgg::Sum)
                    .map_err(|e| e.to_string())
            };
            let numeric = (at(params[k] + h)? - at(params[k] - h)?) / (2.0 * h);
            let rel = (numeric - grad[k]).abs() / numeric.abs().max(grad[k].abs()).max(1e-6);
            worst = worst.max(rel);
            check(rel < 1e-4, || {
                format!("point {point} param {k}: analytic {} numeric {numeric}", grad[k])
            })?;
        }
    }
    Ok(format!("20 points, worst relative error {worst:.2e}"))
}

fn synthetic_accuracy(shuffled: bool) -> Result<f64, String> {
    let dim = 32;
    let (d, store) = common::synthetic(300, 8000, (9, 10), dim, 0.05, 1.0, shuffled, 32);
    let model = SolverModel::new(dim, &[2 * dim], 1).map_err(|e| e.to_string())?;
    let cfg = TrainConfig {
        epochs: 50,
        ..Default::default()
    };
    let (model, _) = train(model, &d, &store, &cfg).map_err(|e| e.to_string())?;
    let report = evaluate(&model, &d, &store, RunMetadata::default()).map_err(|e| e.to_string())?;
    Ok(report.accuracy)
}

fn solvability() -> Outcome {
    let acc = synthetic_accuracy(false)?;
    let chance = synthetic_accuracy(true)?;
    check(acc >= 0.95, || format!("accuracy {acc:.4} < 0.95"))?;
    check((chance - 0.25).abs() <= 0.05, || format!("shuffled accuracy {chance:.4}"))?;
    Ok(format!("accuracy {acc:.4}, shuffled {chance:.4}"))
}

fn verbonly_fields() -> Outcome {
    let pools = common::pooled();
    let full = full_dataset()?;
    let verbs = derive_verbonly(&full, &pools).map_err(|e| e.to_string())?;
    check(verbs.variant == Variant::VerbOnly, || "variant not VerbOnly".into())?;
    check(verbs.instances.len() == full.instances.len(), || "instance count differs".into())?;
    for (f, v) in full.instances.iter().zip(&verbs.instances) {
        let same = f.instance_id == v.instance_id
            && f.split == v.split
            && f.target_voice == v.target_voice
            && f.correct_index == v.correct_index
            && f.permutation_id == v.permutation_id
            && f.slots().zip(v.slots()).all(|(a, b)| {
                a.sent_id == b.sent_id && a.verb_index == b.verb_index && a.voice == b.voice && b.text == a.verb_surface
            });
        check(same, || format!("{} differs", f.instance_id))?;
    }
    let report = audit(&verbs);
    check(report.is_clean(), || format!("{} violations", report.violations.len()))?;
    Ok(format!("{} instances field-equal", verbs.instances.len()))
}

fn f1_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2525);
    for n in 0..25 {
        let mut m = [[0u64; 4]; 4];
        for c in m.iter_mut().flatten() {
            *c = if rng.random_bool(0.15) { 0 } else { rng.random_range(0..1000) };
        }
        let got = f1_scores(&ConfusionMatrix(m));
        let (want, want_macro) = common::oracle_f1(&m);
        for v in VoiceLabel::ALL {
            let diff = (got.f1(v) - want[v.index()]).abs();
            check(diff <= 1e-12, || format!("matrix {n} {v}: off by {diff:e}"))?;
        }
        check((got.macro_f1 - want_macro).abs() <= 1e-12, || format!("matrix {n} macro"))?;
    }
    Ok("25 matrices within 1e-12".into())
}

fn end_to_end() -> Outcome {
    let fail = |e: blm_core::Error| e.to_string();
    let tr = read_treebank(&common::fixture("turkish_mini.conllu")).map_err(fail)?;
    let he = read_treebank(&common::fixture("hebrew_mini.conllu")).map_err(fail)?;
    let mut pools = build_voice_pools(&[tr], &VoiceSpec::turkish()).map_err(fail)?;
    pools.extend(build_voice_pools(&[he], &VoiceSpec::hebrew()).map_err(fail)?);
    let cfg = BuildConfig {
        n_instances: 40,
        ..Default::default()
    };
    let d = build_dataset(&pools, &cfg).map_err(fail)?;
    let a = audit(&d);
    check(a.is_clean(), || format!("{} violations", a.violations.len()))?;
    let dim = 16;
    let store = embed_dataset_baseline(&d, &common::vocab(), dim, 7).map_err(fail)?;
    let tc = TrainConfig {
        epochs: 5,
        ..Default::default()
    };
    let (model, history) = train(SolverModel::new(dim, &[2 * dim], 7).map_err(fail)?, &d, &store, &tc).map_err(fail)?;
    check(history.len() == 5, || format!("{} epochs", history.len()))?;
    let report = evaluate(&model, &d, &store, RunMetadata::default()).map_err(fail)?;
    let n_test = d.in_split(Split::Test).count() as u64;
    check(report.confusion.total() == n_test, || "confusion total".into())?;
    check(report.f1.per_voice.iter().all(|c| c.f1.is_finite()), || "non-finite F1".into())?;
    let md = report.to_markdown();
    check(VoiceLabel::ALL.iter().all(|v| md.contains(v.as_str())), || "markdown misses a voice".into())?;
    check(report.f1_csv().lines().count() == 6, || "F1 table rows".into())?;
    check(report.stats_csv().starts_with("statistic,"), || "stats table".into())?;
    Ok(format!("{n_test} test instances, accuracy {:.3}", report.accuracy))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("statistics golden value", Some(Duration::from_secs(1)), mwu_golden),
        ("dataset shape", Some(Duration::from_secs(30)), dataset_shape),
        ("tokenizer oracle equivalence", Some(Duration::from_secs(10)), tokenizer_oracle),
        ("character vocabulary", None, character_vocabulary),
        ("gradient check", Some(Duration::from_secs(10)), gradient_check),
        ("solvability oracle", Some(Duration::from_secs(120)), solvability),
        ("verb-only derivation", Some(Duration::from_secs(10)), verbonly_fields),
        ("F1 and confusion correctness", None, f1_oracle),
        ("end-to-end smoke", Some(Duration::from_secs(60)), end_to_end),
    ];
    let mut failed = 0;
    for (name, budget, run) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match (outcome, budget) {
            (Ok(_), Some(b)) if elapsed > b => Err(format!("took {elapsed:.2?}, budget {b:?}")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
