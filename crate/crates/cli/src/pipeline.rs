use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _};
use blm_core::blm::{audit, build_dataset, derive_verbonly, read_dataset, write_dataset, BuildConfig};
use blm_core::embedding::{embed_dataset_baseline, Provenance};
use blm_core::pattern::build_voice_pools;
use blm_core::tokenizer::{profile_dataset_top, Scope, DEFAULT_TOP_K};
use blm_core::treebank::{fetch_treebank, read_treebank};
use blm_core::{EmbeddingStore, VoicePools, Vocabulary};
use clap::Args;
use serde::Serialize;

use crate::config::{is_url, EmbeddingSource};
use crate::sidecar::Job;
use crate::{Context, UsageError};

pub(crate) fn ensure_parent(path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(())
}

fn file_stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    path.with_file_name(format!("{}{suffix}", file_stem(path)))
}

fn parse_split(s: &str) -> Result<(u32, u32), String> {
    let (a, b) = s.split_once(':').ok_or("expected NUM:DEN, e.g. 9:10")?;
    let num = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let den = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    Ok((num, den))
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    /// Treebank URL; repeatable. Defaults to the configured treebanks.
    #[arg(long = "url")]
    pub urls: Vec<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

/// Local paths of every treebank, fetching URLs into the cache.
fn resolve_treebanks(ctx: &Context, given: &[String], cache_flag: Option<&Path>) -> anyhow::Result<Vec<PathBuf>> {
    let list = if given.is_empty() { &ctx.cfg.treebanks } else { given };
    if list.is_empty() {
        return Err(UsageError("no treebanks: pass --treebank or set treebanks in the config".into()).into());
    }
    let cache = ctx.cfg.cache_dir(cache_flag);
    list.iter()
        .map(|t| {
            if is_url(t) {
                Ok(fetch_treebank(t, &cache)?)
            } else if Path::new(t).exists() {
                Ok(PathBuf::from(t))
            } else {
                Err(UsageError(format!("treebank {t} does not exist")).into())
            }
        })
        .collect()
}

pub fn fetch(ctx: &Context, args: FetchArgs) -> anyhow::Result<()> {
    let list = if args.urls.is_empty() { ctx.cfg.treebanks.clone() } else { args.urls };
    let paths = resolve_treebanks(ctx, &list, args.cache_dir.as_deref())?;
    for (src, path) in list.iter().zip(&paths) {
        println!("{src} -> {}", path.display());
    }
    Ok(())
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// CoNLL-U path or URL; repeatable.
    #[arg(long = "treebank")]
    pub treebanks: Vec<String>,
    /// Built-in name (turkish, hebrew) or JSON voice-spec path.
    #[arg(long)]
    pub voice_spec: Option<String>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn extract(ctx: &Context, args: ExtractArgs) -> anyhow::Result<()> {
    let spec = ctx.cfg.voice_spec(args.voice_spec.as_deref())?;
    let paths = resolve_treebanks(ctx, &args.treebanks, args.cache_dir.as_deref())?;
    let out = args.out.unwrap_or_else(|| ctx.cfg.output_dir().join("pools.jsonl"));
    let job = Job::new("extract", serde_json::json!({ "voice_spec": spec.to_json() }), vec![], paths.clone());
    ctx.run(&job, std::slice::from_ref(&out), || {
        let treebanks = paths.iter().map(|p| read_treebank(p)).collect::<blm_core::Result<Vec<_>>>()?;
        for tb in &treebanks {
            if tb.skipped_empty_nodes > 0 {
                log::info!("{}: skipped {} empty nodes", tb.name, tb.skipped_empty_nodes);
            }
        }
        let pools = build_voice_pools(&treebanks, &spec)?;
        ensure_parent(&out)?;
        pools.write_file(&out)?;
        let [a, p, c, cp] = pools.sizes();
        println!("{}: Act {a}, Pass {p}, Caus {c}, CausPass {cp}", out.display());
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    #[arg(long)]
    pub pools: Option<PathBuf>,
    /// Total instances, a multiple of 4.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train share per target voice as NUM:DEN.
    #[arg(long, value_parser = parse_split)]
    pub split: Option<(u32, u32)>,
    /// Keep test answer sentences out of every train answer set.
    #[arg(long)]
    pub strict: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct BuildParams {
    name: String,
    n_instances: usize,
    seed: u64,
    split: (u32, u32),
    strict: bool,
}

pub fn build(ctx: &Context, args: BuildArgs) -> anyhow::Result<()> {
    let d = &ctx.cfg.dataset;
    let pools_path = args.pools.unwrap_or_else(|| ctx.cfg.output_dir().join("pools.jsonl"));
    let out = args.out.unwrap_or_else(|| ctx.cfg.output_dir().join("dataset.jsonl"));
    let cfg = BuildConfig {
        name: file_stem(&out),
        n_instances: args.n.unwrap_or(d.n_instances),
        seed: args.seed.unwrap_or(d.seed),
        split_ratio: args.split.unwrap_or((d.split[0], d.split[1])),
        strict: args.strict || d.strict,
    };
    let params = BuildParams {
        name: cfg.name.clone(),
        n_instances: cfg.n_instances,
        seed: cfg.seed,
        split: cfg.split_ratio,
        strict: cfg.strict,
    };
    let audit_path = sibling(&out, ".audit.md");
    let job = Job::new("build", params, vec![cfg.seed], vec![pools_path.clone()]);
    ctx.run(&job, &[out.clone(), audit_path.clone()], || {
        let pools = VoicePools::read_file(&pools_path)?;
        let dataset = build_dataset(&pools, &cfg)?;
        let report = audit(&dataset);
        ensure_parent(&out)?;
        write_dataset(&dataset, &out)?;
        fs::write(&audit_path, report.to_markdown())?;
        if !report.is_clean() {
            bail!("audit found {} violations, see {}", report.violations.len(), audit_path.display());
        }
        println!("{}: {} instances, audit clean", out.display(), dataset.instances.len());
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct VerbOnlyArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub pools: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn verbonly(ctx: &Context, args: VerbOnlyArgs) -> anyhow::Result<()> {
    let dataset_path = args.dataset.unwrap_or_else(|| ctx.cfg.output_dir().join("dataset.jsonl"));
    let pools_path = args.pools.unwrap_or_else(|| ctx.cfg.output_dir().join("pools.jsonl"));
    let out = args.out.unwrap_or_else(|| sibling(&dataset_path, ".verb.jsonl"));
    let job = Job::new("verbonly", serde_json::json!({}), vec![], vec![dataset_path.clone(), pools_path.clone()]);
    ctx.run(&job, std::slice::from_ref(&out), || {
        let full = read_dataset(&dataset_path)?;
        let pools = VoicePools::read_file(&pools_path)?;
        let verbs = derive_verbonly(&full, &pools)?;
        let report = audit(&verbs);
        if !report.is_clean() {
            bail!("derived dataset fails its audit:\n{}", report.to_markdown());
        }
        ensure_parent(&out)?;
        write_dataset(&verbs, &out)?;
        println!("{}: {} instances", out.display(), verbs.instances.len());
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct TokstatsArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long, default_value = "verbs")]
    pub scope: Scope,
    /// Most frequent verb pieces listed per voice.
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub top_k: usize,
    /// Compose input to NFC before matching.
    #[arg(long)]
    pub nfc: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub(crate) fn vocab_path(ctx: &Context, flag: Option<PathBuf>) -> anyhow::Result<PathBuf> {
    flag.or_else(|| ctx.cfg.vocab.clone())
        .ok_or_else(|| UsageError("no vocabulary: pass --vocab or set vocab in the config".into()).into())
}

pub fn tokstats(ctx: &Context, args: TokstatsArgs) -> anyhow::Result<()> {
    let dataset_path = args.dataset.unwrap_or_else(|| ctx.cfg.output_dir().join("dataset.jsonl"));
    let vocab_file = vocab_path(ctx, args.vocab)?;
    let out = args.out.unwrap_or_else(|| {
        ctx.cfg
            .output_dir()
            .join(format!("tokstats.{}.{}.csv", file_stem(&dataset_path), args.scope.as_str()))
    });
    let top_path = sibling(&out, ".top.csv");
    let params = serde_json::json!({ "scope": args.scope.as_str(), "top_k": args.top_k, "nfc": args.nfc });
    let job = Job::new("tokstats", params, vec![], vec![dataset_path.clone(), vocab_file.clone()]);
    ctx.run(&job, &[out.clone(), top_path.clone()], || {
        let dataset = read_dataset(&dataset_path)?;
        let vocab = Vocabulary::read(&vocab_file)?.with_nfc(args.nfc);
        let profile = profile_dataset_top(&dataset, &vocab, args.scope, args.top_k);
        ensure_parent(&out)?;
        profile.write_csv(BufWriter::new(File::create(&out)?))?;
        profile.write_top_tokens_csv(BufWriter::new(File::create(&top_path)?))?;
        for vp in &profile.voices {
            println!(
                "{:<9} forms {:>6}  tokens/form {:.3}  chars/token {:.3}",
                vp.voice.as_str(),
                vp.instances,
                vp.tokens_per_instance,
                vp.chars_per_token
            );
        }
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct EmbedArgs {
    /// Dataset whose slots get vectors; repeatable.
    #[arg(long = "dataset")]
    pub datasets: Vec<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn embed_baseline(ctx: &Context, args: EmbedArgs) -> anyhow::Result<()> {
    let datasets = if args.datasets.is_empty() {
        vec![ctx.cfg.output_dir().join("dataset.jsonl")]
    } else {
        args.datasets
    };
    let vocab_file = vocab_path(ctx, args.vocab)?;
    let (cfg_dim, cfg_seed) = match ctx.cfg.embedding {
        Some(EmbeddingSource::Baseline { dim, seed }) => (dim, seed),
        _ => (64, 0),
    };
    let dim = args.dim.unwrap_or(cfg_dim);
    let seed = args.seed.unwrap_or(cfg_seed);
    let out = args.out.unwrap_or_else(|| ctx.cfg.output_dir().join("embeddings.blmemb"));
    let mut inputs = datasets.clone();
    inputs.push(vocab_file.clone());
    let job = Job::new("embed-baseline", serde_json::json!({ "dim": dim, "seed": seed }), vec![seed], inputs);
    ctx.run(&job, std::slice::from_ref(&out), || {
        let vocab = Vocabulary::read(&vocab_file)?;
        let mut store = EmbeddingStore::new(dim, Provenance::Baseline { seed, vocab: vocab.name.clone() })?;
        for path in &datasets {
            let part = embed_dataset_baseline(&read_dataset(path)?, &vocab, dim, seed)?;
            for (k, v) in part.iter() {
                if store.get(k).is_none() {
                    store.insert(k, v.to_vec())?;
                }
            }
        }
        ensure_parent(&out)?;
        store.write(&out)?;
        println!("{}: {} vectors of dim {dim}", out.display(), store.len());
        Ok(())
    })
}

#[derive(Args, Debug)]
pub struct AuditArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Also write the report as Markdown here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn audit_cmd(ctx: &Context, args: AuditArgs) -> anyhow::Result<()> {
    let dataset_path = args.dataset.unwrap_or_else(|| ctx.cfg.output_dir().join("dataset.jsonl"));
    let dataset = read_dataset(&dataset_path)?;
    let report = audit(&dataset);
    let md = report.to_markdown();
    print!("{md}");
    if let Some(out) = args.out {
        ensure_parent(&out)?;
        fs::write(&out, &md)?;
    }
    if !report.is_clean() {
        bail!("{} violations in {}", report.violations.len(), dataset_path.display());
    }
    Ok(())
}
