use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use anyhow::{bail, Context as _};
use blm_core::eval::{mann_whitney_u, EvalReport, MannWhitney};
use blm_core::VoiceLabel;
use clap::Args;

use crate::sidecar::Job;
use crate::Context;

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Evaluation to include, as LABEL=PATH or PATH; PATH is an eval
    /// directory or its report.json. Repeatable.
    #[arg(long = "eval", required = true)]
    pub evals: Vec<String>,
    /// Tokenization profile CSV written by `tokstats`, as LABEL=PATH or PATH.
    #[arg(long = "profile")]
    pub profiles: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub const REPORT_FILES: [&str; 6] = [
    "f1.csv",
    "confusion.csv",
    "comparison.csv",
    "error_cells.csv",
    "tokenization.csv",
    "report.md",
];

fn labelled(spec: &str) -> (Option<String>, PathBuf) {
    match spec.split_once('=') {
        Some((label, path)) if !label.is_empty() => (Some(label.to_string()), PathBuf::from(path)),
        _ => (None, PathBuf::from(spec)),
    }
}

fn eval_source(spec: &str) -> (String, PathBuf) {
    let (label, path) = labelled(spec);
    let file = if path.is_dir() { path.join("report.json") } else { path };
    let label = label.unwrap_or_else(|| {
        file.parent()
            .and_then(|d| d.file_name())
            .map_or_else(|| file.display().to_string(), |n| n.to_string_lossy().into_owned())
    });
    (label, file)
}

fn profile_source(spec: &str) -> (String, PathBuf) {
    let (label, path) = labelled(spec);
    let label = label.unwrap_or_else(|| path.file_stem().unwrap_or_default().to_string_lossy().into_owned());
    (label, path)
}

struct Tables {
    f1: csv::Writer<Vec<u8>>,
    confusion: csv::Writer<Vec<u8>>,
    comparison: csv::Writer<Vec<u8>>,
    errors: csv::Writer<Vec<u8>>,
    tokenization: csv::Writer<Vec<u8>>,
}

fn finish(w: csv::Writer<Vec<u8>>) -> anyhow::Result<String> {
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

fn per_voice_f1(r: &EvalReport) -> Vec<f64> {
    VoiceLabel::ALL.iter().map(|&v| r.f1.f1(v)).collect()
}

pub fn report_cmd(ctx: &Context, args: ReportArgs) -> anyhow::Result<()> {
    let evals: Vec<(String, PathBuf)> = args.evals.iter().map(|s| eval_source(s)).collect();
    let profiles: Vec<(String, PathBuf)> = args.profiles.iter().map(|s| profile_source(s)).collect();
    let out = args.out.unwrap_or_else(|| ctx.cfg.output_dir().join("report"));
    let outputs: Vec<PathBuf> = REPORT_FILES.iter().map(|f| out.join(f)).collect();
    let labels: Vec<&String> = evals.iter().chain(&profiles).map(|(l, _)| l).collect();
    let inputs = evals.iter().chain(&profiles).map(|(_, p)| p.clone()).collect();
    let job = Job::new("report", serde_json::json!({ "labels": labels }), vec![], inputs);

    ctx.run(&job, &outputs, || {
        let mut runs = Vec::new();
        for (label, path) in &evals {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let r: EvalReport =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            runs.push((label.clone(), r));
        }
        let comparisons = compare(&runs)?;
        let mut t = Tables {
            f1: csv::Writer::from_writer(Vec::new()),
            confusion: csv::Writer::from_writer(Vec::new()),
            comparison: csv::Writer::from_writer(Vec::new()),
            errors: csv::Writer::from_writer(Vec::new()),
            tokenization: csv::Writer::from_writer(Vec::new()),
        };
        t.f1.write_record(["run", "voice", "precision", "recall", "f1"])?;
        t.confusion.write_record(["run", "gold", "Act", "Pass", "Caus", "CausPass"])?;
        t.comparison.write_record(["run_a", "run_b", "n1", "n2", "u", "p_two_sided", "r", "method"])?;
        t.errors.write_record([
            "run", "gold", "predicted", "count", "n_errors", "share", "z", "p_two_sided", "method",
        ])?;
        for (label, r) in &runs {
            for (v, c) in VoiceLabel::ALL.iter().zip(&r.f1.per_voice) {
                t.f1.write_record([label, v.as_str(), &c.precision.to_string(), &c.recall.to_string(), &c.f1.to_string()])?;
            }
            t.f1.write_record([label, "macro", "", "", &r.f1.macro_f1.to_string()])?;
            for g in VoiceLabel::ALL {
                let mut row = vec![label.clone(), g.to_string()];
                row.extend(VoiceLabel::ALL.iter().map(|&p| r.confusion[(g, p)].to_string()));
                t.confusion.write_record(&row)?;
            }
            for e in &r.error_cells {
                t.errors.write_record([
                    label.clone(),
                    e.gold.to_string(),
                    e.predicted.to_string(),
                    e.count.to_string(),
                    e.n_errors.to_string(),
                    e.share.to_string(),
                    e.z.to_string(),
                    e.p_two_sided.to_string(),
                    "reconstruction".into(),
                ])?;
            }
        }
        for (a, b, m) in &comparisons {
            t.comparison.write_record([
                a.clone(),
                b.clone(),
                m.n1.to_string(),
                m.n2.to_string(),
                m.u.to_string(),
                m.p_two_sided.to_string(),
                m.r.to_string(),
                "exact".into(),
            ])?;
        }
        let token_rows = merge_profiles(&profiles, &mut t.tokenization)?;

        let md = markdown(&runs, &comparisons, &token_rows);
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        let contents = [
            finish(t.f1)?,
            finish(t.confusion)?,
            finish(t.comparison)?,
            finish(t.errors)?,
            finish(t.tokenization)?,
            md,
        ];
        for (name, text) in REPORT_FILES.iter().zip(contents) {
            fs::write(out.join(name), text)?;
        }
        println!("{}: {} runs, {} comparisons", out.display(), runs.len(), comparisons.len());
        Ok(())
    })
}

/// Exact rank-sum test over the per-voice F1 of every pair of runs.
fn compare(runs: &[(String, EvalReport)]) -> anyhow::Result<Vec<(String, String, MannWhitney)>> {
    let mut out = Vec::new();
    for (i, (a, ra)) in runs.iter().enumerate() {
        for (b, rb) in &runs[i + 1..] {
            let m = mann_whitney_u(&per_voice_f1(ra), &per_voice_f1(rb))?;
            out.push((a.clone(), b.clone(), m));
        }
    }
    if runs.len() < 2 {
        log::warn!("a single run leaves nothing to compare");
    }
    Ok(out)
}

/// Copies every profile row under a leading `source` column; returns the
/// rows for the Markdown table, header first.
fn merge_profiles(profiles: &[(String, PathBuf)], w: &mut csv::Writer<Vec<u8>>) -> anyhow::Result<Vec<Vec<String>>> {
    let mut rows = Vec::new();
    let mut header: Option<csv::StringRecord> = None;
    for (label, path) in profiles {
        let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
        let h = r.headers()?.clone();
        match &header {
            None => {
                let mut full = vec!["source".to_string()];
                full.extend(h.iter().map(str::to_string));
                w.write_record(&full)?;
                rows.push(full);
                header = Some(h);
            }
            Some(first) if *first != h => bail!("{} has different columns than the first profile", path.display()),
            Some(_) => {}
        }
        for rec in r.records() {
            let mut row = vec![label.clone()];
            row.extend(rec?.iter().map(str::to_string));
            w.write_record(&row)?;
            rows.push(row);
        }
    }
    if header.is_none() {
        w.write_record(["source"])?;
    }
    Ok(rows)
}

fn table(out: &mut String, rows: &[Vec<String>]) {
    let Some((head, body)) = rows.split_first() else { return };
    let _ = writeln!(out, "| {} |", head.join(" | "));
    let _ = writeln!(out, "|{}", "---|".repeat(head.len()));
    for r in body {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out.push('\n');
}

fn markdown(runs: &[(String, EvalReport)], cmp: &[(String, String, MannWhitney)], tokens: &[Vec<String>]) -> String {
    let mut md = String::from("# Voice BLM report\n\n## F1 per target voice\n\n");
    let mut rows = vec![vec!["run".to_string()]];
    rows[0].extend(VoiceLabel::ALL.iter().map(|v| v.to_string()));
    rows[0].extend(["macro".to_string(), "accuracy".to_string()]);
    for (label, r) in runs {
        let mut row = vec![label.clone()];
        row.extend(r.f1.per_voice.iter().map(|c| format!("{:.3}", c.f1)));
        row.push(format!("{:.3}", r.f1.macro_f1));
        row.push(format!("{:.3}", r.accuracy));
        rows.push(row);
    }
    table(&mut md, &rows);
    if let Some((_, r)) = runs.first() {
        let _ = writeln!(md, "Chance level: {}.\n", r.chance_level);
    }

    md.push_str("## Run comparisons (exact Mann-Whitney U over per-voice F1)\n\n");
    let mut rows = vec![["run A", "run B", "U", "p", "r"].map(String::from).to_vec()];
    for (a, b, m) in cmp {
        rows.push(vec![a.clone(), b.clone(), format!("{}", m.u), format!("{:.4}", m.p_two_sided), format!("{:.3}", m.r)]);
    }
    table(&mut md, &rows);

    md.push_str("## Error cells\n\n");
    let mut rows = vec![["run", "gold", "predicted", "count", "share", "z", "p"].map(String::from).to_vec()];
    for (label, r) in runs {
        for e in &r.error_cells {
            rows.push(vec![
                label.clone(),
                e.gold.to_string(),
                e.predicted.to_string(),
                e.count.to_string(),
                format!("{:.3}", e.share),
                format!("{:.3}", e.z),
                format!("{:.4}", e.p_two_sided),
            ]);
        }
    }
    table(&mut md, &rows);

    if tokens.len() > 1 {
        md.push_str("## Tokenization\n\n");
        table(&mut md, tokens);
    }
    md
}
