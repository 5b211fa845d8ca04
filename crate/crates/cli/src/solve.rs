use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use anyhow::{anyhow, bail, Context as _};
use blm_core::blm::read_dataset;
use blm_core::embedding::read_embeddings;
use blm_core::eval::{confusion, EvalReport, RunMetadata};
use blm_core::solver::{history_csv, predict, train, LossAgg, TrainScope};
use blm_core::{Dataset, EmbeddingStore, SolverModel, Split, TrainConfig, VoiceLabel};
use clap::Args;
use serde::{Deserialize, Serialize};

use crate::config::{EmbeddingSource, ScopeChoice};
use crate::pipeline::ensure_parent;
use crate::sidecar::Job;
use crate::Context;

pub const MANIFEST: &str = "models.json";

/// Runs `f` over `0..n` on up to `workers` threads; results keep input order.
fn parallel_map<T: Send>(n: usize, workers: usize, f: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, n.max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let r = f(i);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect()
}

fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_hidden(s: &str) -> Result<Vec<usize>, String> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p}: {e}")))
        .collect()
}

fn embedding_paths(ctx: &Context, given: Vec<PathBuf>) -> Vec<PathBuf> {
    if !given.is_empty() {
        return given;
    }
    match &ctx.cfg.embedding {
        Some(EmbeddingSource::File { path }) => vec![path.clone()],
        _ => vec![ctx.cfg.output_dir().join("embeddings.blmemb")],
    }
}

/// All given embedding files as one store; the first file wins on shared keys.
fn load_store(paths: &[PathBuf]) -> anyhow::Result<EmbeddingStore> {
    let mut iter = paths.iter();
    let first = iter.next().ok_or_else(|| anyhow!("no embedding files"))?;
    let mut store = read_embeddings(first)?;
    for p in iter {
        let other = read_embeddings(p)?;
        if other.dim() != store.dim() {
            bail!("{} has dim {}, expected {}", p.display(), other.dim(), store.dim());
        }
        for (k, v) in other.iter() {
            if store.get(k).is_none() {
                store.insert(k, v.to_vec())?;
            }
        }
    }
    Ok(store)
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset; repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    /// Embedding file; repeatable.
    #[arg(long = "embeddings")]
    pub embeddings: Vec<PathBuf>,
    /// Comma-separated hidden sizes, or `none` for a linear map.
    #[arg(long, value_parser = parse_hidden)]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_parser = ["sum", "max"])]
    pub loss: Option<String>,
    /// One model per target voice, each scored on that voice's test items.
    #[arg(long)]
    pub per_target_voice: bool,
    /// Instances each per-voice model trains on.
    #[arg(long, value_enum)]
    pub train_scope: Option<ScopeChoice>,
    /// Worker threads.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory for checkpoints, histories and the manifest.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ModelEntry {
    pub name: String,
    pub dataset: String,
    /// Target voice whose test instances this model answers; `None` for all.
    pub voice: Option<VoiceLabel>,
    pub train_scope: String,
    pub checkpoint: String,
    pub history: String,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub final_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub models: Vec<ModelEntry>,
}

struct Cell {
    dataset: usize,
    name: String,
    voice: Option<VoiceLabel>,
    cfg: TrainConfig,
}

#[derive(Serialize)]
struct TrainParams<'a> {
    hidden: &'a Option<Vec<usize>>,
    train: &'a TrainConfig,
    per_target_voice: bool,
    train_scope: ScopeChoice,
}

pub fn train_cmd(ctx: &Context, args: TrainArgs) -> anyhow::Result<()> {
    let s = &ctx.cfg.solver;
    let datasets = if args.datasets.is_empty() {
        vec![ctx.cfg.output_dir().join("dataset.jsonl")]
    } else {
        args.datasets
    };
    let emb_paths = embedding_paths(ctx, args.embeddings);
    let out = args.out.unwrap_or_else(|| ctx.cfg.output_dir().join("models"));
    let hidden = args.hidden.or_else(|| s.hidden.clone());
    let base = TrainConfig {
        epochs: args.epochs.unwrap_or(s.epochs),
        margin: args.margin.unwrap_or(s.margin),
        learning_rate: args.lr.unwrap_or(s.learning_rate),
        batch_size: args.batch_size.unwrap_or(s.batch_size),
        seed: args.seed.unwrap_or(s.seed),
        loss_agg: match args.loss.as_deref() {
            Some("max") => LossAgg::Max,
            Some(_) => LossAgg::Sum,
            None => s.loss,
        },
        ..TrainConfig::default()
    };
    base.validate()?;
    let scope_choice = args.train_scope.unwrap_or(s.train_scope);

    let names: Vec<String> = datasets
        .iter()
        .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
        .collect();
    let mut cells = Vec::new();
    for (d, stem) in names.iter().enumerate() {
        if args.per_target_voice {
            for v in VoiceLabel::ALL {
                let scope = match scope_choice {
                    ScopeChoice::TargetVoice => TrainScope::TargetVoice(v),
                    ScopeChoice::All => TrainScope::All,
                };
                cells.push(Cell {
                    dataset: d,
                    name: format!("{stem}.{v}"),
                    voice: Some(v),
                    cfg: TrainConfig {
                        seed: base.seed + v.index() as u64,
                        scope,
                        ..base.clone()
                    },
                });
            }
        } else {
            cells.push(Cell {
                dataset: d,
                name: format!("{stem}.all"),
                voice: None,
                cfg: base.clone(),
            });
        }
    }

    let mut outputs = Vec::new();
    for c in &cells {
        outputs.push(out.join(format!("{}.blmffn", c.name)));
        outputs.push(out.join(format!("{}.history.csv", c.name)));
    }
    outputs.push(out.join(MANIFEST));
    let params = TrainParams {
        hidden: &hidden,
        train: &base,
        per_target_voice: args.per_target_voice,
        train_scope: scope_choice,
    };
    let seeds = cells.iter().map(|c| c.cfg.seed).collect();
    let mut inputs = datasets.clone();
    inputs.extend(emb_paths.iter().cloned());
    let job = Job::new("train", params, seeds, inputs);

    ctx.run(&job, &outputs, || {
        let loaded: Vec<Dataset> = datasets.iter().map(|p| read_dataset(p)).collect::<blm_core::Result<_>>()?;
        let store = load_store(&emb_paths)?;
        let dim = store.dim();
        let hidden = hidden.clone().unwrap_or_else(|| vec![2 * dim]);
        let workers = args.jobs.unwrap_or_else(default_jobs);
        log::info!("training {} models on {workers} threads", cells.len());
        let results = parallel_map(cells.len(), workers, |i| {
            let c = &cells[i];
            let model = SolverModel::new(dim, &hidden, c.cfg.seed)?;
            train(model, &loaded[c.dataset], &store, &c.cfg)
        });
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let mut manifest = Manifest { models: Vec::new() };
        for (c, r) in cells.iter().zip(results) {
            let (model, history) = r.with_context(|| format!("training {}", c.name))?;
            let ckpt = format!("{}.blmffn", c.name);
            let hist = format!("{}.history.csv", c.name);
            model.save(&out.join(&ckpt))?;
            fs::write(out.join(&hist), history_csv(&history))?;
            let final_loss = history.last().copied().unwrap_or(f64::NAN);
            println!("{}: final mean loss {final_loss:.6}", c.name);
            manifest.models.push(ModelEntry {
                name: c.name.clone(),
                dataset: names[c.dataset].clone(),
                voice: c.voice,
                train_scope: match c.cfg.scope {
                    TrainScope::All => "all".into(),
                    TrainScope::TargetVoice(v) => v.to_string(),
                },
                checkpoint: ckpt,
                history: hist,
                seed: c.cfg.seed,
                hidden: hidden.clone(),
                epochs: c.cfg.epochs,
                final_loss,
            });
        }
        fs::write(out.join(MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Embedding file; repeatable.
    #[arg(long = "embeddings")]
    pub embeddings: Vec<PathBuf>,
    /// A checkpoint, or a models.json manifest written by `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Output directory for the report files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const EVAL_FILES: [&str; 5] = ["confusion.csv", "f1.csv", "stats.csv", "report.md", "report.json"];

/// Checkpoint and target-voice filter of every model to apply.
fn eval_plan(model_path: &Path, dataset: &str) -> anyhow::Result<Vec<(PathBuf, Option<VoiceLabel>)>> {
    if model_path.extension().is_some_and(|e| e == "json") {
        let text = fs::read_to_string(model_path).with_context(|| format!("reading {}", model_path.display()))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        let dir = model_path.parent().unwrap_or(Path::new(""));
        let plan: Vec<_> = manifest
            .models
            .iter()
            .filter(|m| m.dataset == dataset)
            .map(|m| (dir.join(&m.checkpoint), m.voice))
            .collect();
        if plan.is_empty() {
            bail!("{} has no model for dataset {dataset}", model_path.display());
        }
        Ok(plan)
    } else {
        Ok(vec![(model_path.to_path_buf(), None)])
    }
}

pub fn eval_cmd(ctx: &Context, args: EvalArgs) -> anyhow::Result<()> {
    let dataset_path = args.dataset.unwrap_or_else(|| ctx.cfg.output_dir().join("dataset.jsonl"));
    let stem = dataset_path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
    let emb_paths = embedding_paths(ctx, args.embeddings);
    let model_path = args
        .model
        .unwrap_or_else(|| ctx.cfg.output_dir().join("models").join(MANIFEST));
    let out = args.out.unwrap_or_else(|| ctx.cfg.output_dir().join("eval").join(&stem));
    let plan = eval_plan(&model_path, &stem)?;

    let mut inputs = vec![dataset_path.clone(), model_path.clone()];
    inputs.extend(plan.iter().map(|(p, _)| p.clone()));
    inputs.extend(emb_paths.iter().cloned());
    let outputs: Vec<PathBuf> = EVAL_FILES.iter().map(|f| out.join(f)).collect();
    let job = Job::new("eval", serde_json::json!({ "dataset": stem }), vec![], inputs);

    ctx.run(&job, &outputs, || {
        let dataset = read_dataset(&dataset_path)?;
        let store = load_store(&emb_paths)?;
        let models = plan
            .iter()
            .map(|(p, _)| SolverModel::load(p))
            .collect::<blm_core::Result<Vec<_>>>()?;
        let test: Vec<_> = dataset.in_split(Split::Test).collect();
        let mut owner = vec![None; test.len()];
        for (m, (path, voice)) in plan.iter().enumerate() {
            for (i, inst) in test.iter().enumerate() {
                if voice.is_none_or(|v| v == inst.target_voice) {
                    if owner[i].is_some() {
                        bail!("{} is covered by two models", inst.instance_id);
                    }
                    owner[i] = Some(m);
                }
            }
            log::debug!("{}: {:?}", path.display(), voice);
        }
        let workers = args.jobs.unwrap_or_else(default_jobs);
        let preds = parallel_map(test.len(), workers, |i| -> anyhow::Result<VoiceLabel> {
            let inst = test[i];
            let m = owner[i].ok_or_else(|| anyhow!("no model covers {}", inst.instance_id))?;
            let k = predict(&models[m], inst, dataset.variant, &store)?;
            Ok(inst.answers[k].voice)
        })
        .into_iter()
        .collect::<anyhow::Result<Vec<_>>>()?;
        let golds: Vec<VoiceLabel> = test.iter().map(|i| i.target_voice).collect();
        let metadata = RunMetadata {
            dataset: dataset.name.clone(),
            model: model_path.file_name().unwrap_or_default().to_string_lossy().into_owned(),
            seeds: models.iter().map(|m| m.seed).collect(),
        };
        let report = EvalReport::from_confusion(confusion(&golds, &preds)?, metadata);
        write_report(&out, &report)?;
        println!(
            "{}: {} test instances, accuracy {:.4}, macro F1 {:.4}",
            dataset.name,
            test.len(),
            report.accuracy,
            report.f1.macro_f1
        );
        Ok(())
    })
}

fn write_report(out: &Path, report: &EvalReport) -> anyhow::Result<()> {
    ensure_parent(&out.join("x"))?;
    let contents = [
        report.confusion.to_csv(),
        report.f1_csv(),
        report.stats_csv(),
        report.to_markdown(),
        serde_json::to_string_pretty(report)? + "\n",
    ];
    for (name, text) in EVAL_FILES.iter().zip(contents) {
        fs::write(out.join(name), text)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hidden_flag_parses() {
        assert_eq!(parse_hidden("64"), Ok(vec![64]));
        assert_eq!(parse_hidden("32, 16"), Ok(vec![32, 16]));
        assert_eq!(parse_hidden("none"), Ok(vec![]));
        assert!(parse_hidden("x").is_err());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let out = parallel_map(50, 4, |i| i * i);
        assert_eq!(out, (0..50).map(|i| i * i).collect::<Vec<_>>());
        assert!(parallel_map(0, 4, |i| i).is_empty());
    }
}
