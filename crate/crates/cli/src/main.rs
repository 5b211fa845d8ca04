mod config;
mod pipeline;
mod report;
mod sidecar;
mod solve;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, Parser, Subcommand};

use config::RunConfig;
use sidecar::Job;

/// Bad invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Parser, Debug)]
#[command(name = "blm", version, about = "Build, solve and score verbal-voice Blackbird Language Matrices")]
struct Cli {
    /// JSON run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Rerun even when every output is up to date.
    #[arg(long, global = true)]
    force: bool,
    /// More log output; repeat for more.
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Download treebanks into the local cache.
    Fetch(pipeline::FetchArgs),
    /// Collect per-voice sentence pools from treebanks.
    Extract(pipeline::ExtractArgs),
    /// Generate a BLM dataset from pools and audit it.
    Build(pipeline::BuildArgs),
    /// Reduce every sentence of a dataset to its verb form.
    Verbonly(pipeline::VerbOnlyArgs),
    /// Per-voice tokenization profile of a dataset.
    Tokstats(pipeline::TokstatsArgs),
    /// Deterministic bag-of-pieces sentence vectors.
    EmbedBaseline(pipeline::EmbedArgs),
    /// Train solver models.
    Train(solve::TrainArgs),
    /// Score trained models on a test split.
    Eval(solve::EvalArgs),
    /// Tables and statistics across evaluations.
    Report(report::ReportArgs),
    /// Check a dataset's structural invariants.
    Audit(pipeline::AuditArgs),
}

pub struct Context {
    pub cfg: RunConfig,
    pub force: bool,
}

impl Context {
    /// Runs `body` unless every output is recorded as produced from the
    /// current inputs, then writes the outputs' sidecars.
    pub fn run(&self, job: &Job, outputs: &[PathBuf], body: impl FnOnce() -> anyhow::Result<()>) -> anyhow::Result<()> {
        if !self.force && job.up_to_date(outputs)? {
            for o in outputs {
                println!("{}: up to date", o.display());
            }
            return Ok(());
        }
        body()?;
        job.record(outputs)
    }
}

fn dispatch(ctx: &Context, command: Command) -> anyhow::Result<()> {
    match command {
        Command::Fetch(a) => pipeline::fetch(ctx, a),
        Command::Extract(a) => pipeline::extract(ctx, a),
        Command::Build(a) => pipeline::build(ctx, a),
        Command::Verbonly(a) => pipeline::verbonly(ctx, a),
        Command::Tokstats(a) => pipeline::tokstats(ctx, a),
        Command::EmbedBaseline(a) => pipeline::embed_baseline(ctx, a),
        Command::Train(a) => solve::train_cmd(ctx, a),
        Command::Eval(a) => solve::eval_cmd(ctx, a),
        Command::Report(a) => report::report_cmd(ctx, a),
        Command::Audit(a) => pipeline::audit_cmd(ctx, a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let cfg = match cli.config.as_deref().map(RunConfig::load).transpose() {
        Ok(cfg) => cfg.unwrap_or_default(),
        Err(e) => return fail(&e),
    };
    let ctx = Context { cfg, force: cli.force };
    match dispatch(&ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}

fn fail(e: &anyhow::Error) -> ExitCode {
    if e.downcast_ref::<UsageError>().is_some() {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    match e.chain().find_map(|c| c.downcast_ref::<blm_core::Error>()) {
        Some(core) => eprintln!("error[{}]: {e:#}", core.code()),
        None => eprintln!("error: {e:#}"),
    }
    ExitCode::from(1)
}
