use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use clinsent::embedding::HashingEmbedderConfig;
use clinsent::neuralnet::Hyperparams;
use clinsent::semisup::MixRatio;
use clinsent::suite::DEFAULT_ALPHA;

use crate::error::CliError;

pub const CONFIG_ENV: &str = "CLIN_SENT_CONFIG";

/// Where sentence vectors come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingSource {
    /// Precomputed TSV store keyed by example id.
    Store(PathBuf),
    Hashing(HashingEmbedderConfig),
}

impl Default for EmbeddingSource {
    fn default() -> Self {
        EmbeddingSource::Hashing(HashingEmbedderConfig::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LexiconSettings {
    /// Tab-separated `term<TAB>polarity`; the bundled stand-in when absent.
    pub path: Option<PathBuf>,
    pub tau: f64,
}

impl Default for LexiconSettings {
    fn default() -> Self {
        LexiconSettings { path: None, tau: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    SelfTrain,
    Knn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SemisupSettings {
    pub method: MethodName,
    pub k: usize,
    /// Minimum self-training confidence; off by default.
    pub floor: Option<f64>,
    pub ratio: MixRatio,
}

impl Default for SemisupSettings {
    fn default() -> Self {
        SemisupSettings { method: MethodName::SelfTrain, k: 5, floor: None, ratio: MixRatio::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub embeddings: EmbeddingSource,
    pub hyperparams: Hyperparams,
    pub alpha: f64,
    pub lexicon: LexiconSettings,
    pub semisup: SemisupSettings,
    pub seed: u64,
    pub folds: usize,
    pub out: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            embeddings: EmbeddingSource::default(),
            hyperparams: Hyperparams::default(),
            alpha: DEFAULT_ALPHA,
            lexicon: LexiconSettings::default(),
            semisup: SemisupSettings::default(),
            seed: 0,
            folds: 5,
            out: PathBuf::from("clinsent-out"),
        }
    }
}

/// Flag values that override the config file when given.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub embeddings: Option<PathBuf>,
    pub hash_dim: Option<usize>,
    pub lexicon: Option<PathBuf>,
    pub tau: Option<f64>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub method: Option<MethodName>,
    pub k: Option<usize>,
    pub floor: Option<f64>,
    pub ratio: Option<MixRatio>,
    pub folds: Option<usize>,
    pub out: Option<PathBuf>,
}

impl PipelineConfig {
    /// Reads `explicit`, else the file named by the environment variable,
    /// else the defaults.
    pub fn load(explicit: Option<&Path>) -> Result<(PipelineConfig, Option<PathBuf>), CliError> {
        let path = match explicit {
            Some(p) => Some(p.to_path_buf()),
            None => std::env::var_os(CONFIG_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        };
        let Some(path) = path else {
            return Ok((PipelineConfig::default(), None));
        };
        let text = std::fs::read_to_string(&path)
            .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
        Ok((cfg, Some(path)))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.embeddings {
            self.embeddings = EmbeddingSource::Store(p.clone());
        }
        if let Some(dim) = o.hash_dim {
            let seed = match &self.embeddings {
                EmbeddingSource::Hashing(h) => h.seed,
                EmbeddingSource::Store(_) => 0,
            };
            self.embeddings = EmbeddingSource::Hashing(HashingEmbedderConfig { dim, seed });
        }
        if let Some(p) = &o.lexicon {
            self.lexicon.path = Some(p.clone());
        }
        macro_rules! set {
            ($($src:ident => $($dst:ident).+),* $(,)?) => {
                $(if let Some(v) = o.$src.clone() { self.$($dst).+ = v; })*
            };
        }
        set!(
            tau => lexicon.tau,
            alpha => alpha,
            seed => seed,
            method => semisup.method,
            k => semisup.k,
            ratio => semisup.ratio,
            folds => folds,
            out => out,
        );
        if o.floor.is_some() {
            self.semisup.floor = o.floor;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Validation(m));
        self.hyperparams.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be finite and >= 0, got {}", self.alpha));
        }
        if !(0.0..1.0).contains(&self.lexicon.tau) {
            return bad(format!("tau must lie in [0, 1), got {}", self.lexicon.tau));
        }
        if self.semisup.k == 0 {
            return bad("k must be >= 1".into());
        }
        if let Some(f) = self.semisup.floor {
            if !(0.0..=1.0).contains(&f) {
                return bad(format!("confidence floor must lie in [0, 1], got {f}"));
            }
        }
        if self.folds < 2 {
            return bad(format!("folds must be >= 2, got {}", self.folds));
        }
        match &self.embeddings {
            EmbeddingSource::Store(p) if !p.is_file() => bad(format!("embedding store {} not found", p.display())),
            EmbeddingSource::Hashing(h) if h.dim < 8 => bad(format!("hash dimension must be >= 8, got {}", h.dim)),
            _ => Ok(()),
        }?;
        if let Some(p) = &self.lexicon.path {
            if !p.is_file() {
                return bad(format!("lexicon {} not found", p.display()));
            }
        }
        Ok(())
    }
}
