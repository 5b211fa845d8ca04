//! Declarative run configuration.
//!
//! Every field is optional in the JSON file; command-line flags take
//! precedence, then `BLM_CACHE` for the cache directory, then the file, then
//! the defaults below. Relative paths in the file resolve against the file's
//! own directory.
//!
//! ```json
//! {
//!   "language": "turkish",
//!   "treebanks": ["https://.../tr_imst-ud-train.conllu"],
//!   "voice_spec": "turkish",
//!   "cache_dir": "cache",
//!   "dataset": { "n_instances": 8000, "seed": 0, "split": [9, 10], "strict": false },
//!   "vocab": "vocab.txt",
//!   "embedding": { "baseline": { "dim": 64, "seed": 0 } },
//!   "solver": { "epochs": 50, "learning_rate": 0.001, "train_scope": "target-voice" },
//!   "output_dir": "out"
//! }
//! ```

use std::path::{Path, PathBuf};

use blm_core::solver::LossAgg;
use serde::{Deserialize, Serialize};

use crate::UsageError;

pub const CACHE_ENV: &str = "BLM_CACHE";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    Turkish,
    Hebrew,
}

impl Language {
    pub fn as_str(self) -> &'static str {
        match self {
            Language::Turkish => "turkish",
            Language::Hebrew => "hebrew",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetConfig {
    pub n_instances: usize,
    pub seed: u64,
    pub split: [u32; 2],
    pub strict: bool,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            n_instances: 8000,
            seed: 0,
            split: [9, 10],
            strict: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum EmbeddingSource {
    File { path: PathBuf },
    Baseline { dim: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScopeChoice {
    #[default]
    TargetVoice,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Hidden layer sizes; unset means one layer of twice the embedding size.
    pub hidden: Option<Vec<usize>>,
    pub epochs: usize,
    pub margin: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossAgg,
    pub train_scope: ScopeChoice,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let t = blm_core::TrainConfig::default();
        SolverConfig {
            hidden: None,
            epochs: t.epochs,
            margin: t.margin,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            seed: t.seed,
            loss: t.loss_agg,
            train_scope: ScopeChoice::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub language: Option<Language>,
    /// Local CoNLL-U paths or URLs.
    pub treebanks: Vec<String>,
    /// A built-in spec name or a path to a JSON voice spec.
    pub voice_spec: Option<String>,
    pub cache_dir: Option<PathBuf>,
    pub dataset: DatasetConfig,
    pub vocab: Option<PathBuf>,
    pub embedding: Option<EmbeddingSource>,
    pub solver: SolverConfig,
    pub output_dir: Option<PathBuf>,
}

pub fn is_url(s: &str) -> bool {
    s.starts_with("http://") || s.starts_with("https://") || s.starts_with("file://")
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_relative(base);
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for t in &mut self.treebanks {
            if !is_url(t) && Path::new(t).is_relative() {
                *t = base.join(&*t).to_string_lossy().into_owned();
            }
        }
        if let Some(spec) = &mut self.voice_spec {
            if blm_core::VoiceSpec::builtin(spec).is_none() && Path::new(spec).is_relative() {
                *spec = base.join(&*spec).to_string_lossy().into_owned();
            }
        }
        for p in [&mut self.cache_dir, &mut self.vocab, &mut self.output_dir].into_iter().flatten() {
            fix(p);
        }
        if let Some(EmbeddingSource::File { path }) = &mut self.embedding {
            fix(path);
        }
    }

    /// Referenced input paths must exist; seeds are always explicit values.
    pub fn validate(&self) -> anyhow::Result<()> {
        let mut missing = Vec::new();
        for t in self.treebanks.iter().filter(|t| !is_url(t)) {
            if !Path::new(t).exists() {
                missing.push(t.clone());
            }
        }
        if let Some(spec) = &self.voice_spec {
            if blm_core::VoiceSpec::builtin(spec).is_none() && !Path::new(spec).exists() {
                missing.push(spec.clone());
            }
        }
        if let Some(v) = &self.vocab {
            if !v.exists() {
                missing.push(v.display().to_string());
            }
        }
        if let Some(EmbeddingSource::File { path }) = &self.embedding {
            if !path.exists() {
                missing.push(path.display().to_string());
            }
        }
        if !missing.is_empty() {
            return Err(UsageError(format!("config references missing paths: {}", missing.join(", "))).into());
        }
        let [num, den] = self.dataset.split;
        if den == 0 || num > den {
            return Err(UsageError(format!("invalid split {num}:{den}")).into());
        }
        Ok(())
    }

    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }

    pub fn cache_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(p) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(p);
        }
        self.cache_dir.clone().unwrap_or_else(|| PathBuf::from("cache"))
    }

    pub fn voice_spec(&self, flag: Option<&str>) -> anyhow::Result<blm_core::VoiceSpec> {
        let name = flag
            .map(str::to_string)
            .or_else(|| self.voice_spec.clone())
            .or_else(|| self.language.map(|l| l.as_str().to_string()))
            .ok_or_else(|| UsageError("no voice spec: set --voice-spec, voice_spec or language".into()))?;
        if let Some(spec) = blm_core::VoiceSpec::builtin(&name) {
            return Ok(spec);
        }
        let path = Path::new(&name);
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("cannot read voice spec {name}: {e}")))?;
        let stem = path.file_stem().map_or(name.clone(), |s| s.to_string_lossy().into_owned());
        Ok(blm_core::VoiceSpec::from_json(stem, &text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg.dataset.n_instances, 8000);
        assert_eq!(cfg.dataset.split, [9, 10]);
        assert_eq!(cfg.solver.epochs, 50);
        assert_eq!(cfg.solver.train_scope, ScopeChoice::TargetVoice);
        assert!(cfg.embedding.is_none());
    }

    #[test]
    fn embedding_sources_parse() {
        let a: EmbeddingSource = serde_json::from_str(r#"{"baseline":{"dim":8,"seed":3}}"#).unwrap();
        assert_eq!(a, EmbeddingSource::Baseline { dim: 8, seed: 3 });
        let b: EmbeddingSource = serde_json::from_str(r#"{"file":{"path":"e.blmemb"}}"#).unwrap();
        assert_eq!(b, EmbeddingSource::File { path: "e.blmemb".into() });
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"langauge":"turkish"}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"solver":{"epoch":3}}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let mut cfg: RunConfig =
            serde_json::from_str(r#"{"treebanks":["a.conllu","https://x/y.conllu"],"vocab":"v.txt"}"#).unwrap();
        cfg.resolve_relative(Path::new("/cfg"));
        assert_eq!(cfg.treebanks, ["/cfg/a.conllu", "https://x/y.conllu"]);
        assert_eq!(cfg.vocab.unwrap(), Path::new("/cfg/v.txt"));
    }

    #[test]
    fn missing_paths_fail_validation() {
        let cfg = RunConfig {
            vocab: Some("/definitely/not/here.txt".into()),
            ..Default::default()
        };
        let err = cfg.validate().unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn builtin_spec_from_language() {
        let cfg = RunConfig {
            language: Some(Language::Hebrew),
            ..Default::default()
        };
        assert_eq!(cfg.voice_spec(None).unwrap().name, "hebrew");
        assert!(RunConfig::default().voice_spec(None).is_err());
    }
}
