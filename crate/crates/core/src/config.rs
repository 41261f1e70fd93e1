//! Run configuration (TOML). Every field has a default, so a config file
//! only needs the suite directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::{Demonstration, RemoteGeneratorConfig};
use crate::engine::{Ablations, DecodeModes, EngineSettings};
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::types::Hyperparams;

/// The base generator used for the datapool and for drafts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum GeneratorConfig {
    /// Corrupted references; `rho` overrides the suite's edit rate.
    Scripted {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rho: Option<f64>,
    },
    /// A completions endpoint.
    Remote(RemoteGeneratorConfig),
    /// A previously trained run's model, decoding from an empty hypothesis.
    Toy { run: PathBuf },
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Scripted { rho: None }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeedbackMode {
    #[default]
    None,
    /// The suite's own feedback (missing constraints, attribute names).
    TaskFeedback,
    /// Free-form feedback from a completions endpoint.
    BackendFeedback,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Suite directory, relative to the config file when not absolute.
    pub suite: PathBuf,
    pub generator: GeneratorConfig,
    pub feedback: FeedbackMode,
    /// Endpoint for `backend-feedback`.
    pub feedback_backend: Option<RemoteGeneratorConfig>,
    /// Worked examples shown to the feedback endpoint.
    pub feedback_demonstrations: Vec<Demonstration>,
    /// Extra `(input, output)` records merged into the initial datapool;
    /// they are re-scored on load.
    pub external_pool: Option<PathBuf>,
    pub explore_hypotheses: usize,
    pub workers: usize,
    pub hyper: Hyperparams,
    pub model: ModelConfig,
    pub ablations: Ablations,
    pub decode: DecodeModes,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = EngineSettings::default();
        RunConfig {
            suite: PathBuf::from("suite"),
            generator: GeneratorConfig::default(),
            feedback: FeedbackMode::None,
            feedback_backend: None,
            feedback_demonstrations: Vec::new(),
            external_pool: None,
            explore_hypotheses: e.explore_hypotheses,
            workers: e.workers,
            hyper: e.hyper,
            model: e.model,
            ablations: e.ablations,
            decode: e.decode,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Loads a config and makes relative paths relative to its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.suite = base.join(&cfg.suite);
        if let Some(p) = &cfg.external_pool {
            cfg.external_pool = Some(base.join(p));
        }
        if let GeneratorConfig::Toy { run } = &cfg.generator {
            cfg.generator = GeneratorConfig::Toy { run: base.join(run) };
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is plain data")
    }

    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.model.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be positive".into()));
        }
        if self.feedback == FeedbackMode::BackendFeedback {
            if self.feedback_backend.is_none() {
                return Err(Error::Config("backend-feedback needs a [feedback_backend] endpoint".into()));
            }
            if self.feedback_demonstrations.is_empty() {
                return Err(Error::Config("backend-feedback needs at least one [[feedback_demonstrations]] entry".into()));
            }
        }
        if let GeneratorConfig::Scripted { rho: Some(r) } = self.generator {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("generator rho must lie in [0, 1], got {r}")));
            }
        }
        Ok(())
    }

    pub fn engine_settings(&self) -> EngineSettings {
        EngineSettings {
            hyper: self.hyper.clone(),
            model: self.model.clone(),
            ablations: self.ablations.clone(),
            decode: self.decode.clone(),
            explore_hypotheses: self.explore_hypotheses,
            workers: self.workers,
        }
    }
}
