//! Shared domain records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seq::TokenSeq;

/// Where a datapool candidate came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    BaseGenerator,
    CorrectorExploration,
    External,
}

/// One scored generation `(x, y, v(y), f(y))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub input_id: String,
    pub output: TokenSeq,
    pub value: f64,
    pub feedback: Option<String>,
    pub origin: Origin,
    #[serde(default)]
    pub iteration: u32,
}

/// Ground truth consumed by a value function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskPayload {
    GoldAnswer(f64),
    Constraints(Vec<String>),
    None,
}

/// A prompt and what is needed to score outputs for it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub input_id: String,
    pub prompt: TokenSeq,
    pub payload: TaskPayload,
    /// A known-good output (gold program, reference sentence). The scripted
    /// generator and the feedback model read it; value functions never do.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<TokenSeq>,
    /// What the scripted generator believes the answer is before random
    /// corruption. Absent means the reference itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_draft: Option<TokenSeq>,
}

impl TaskInstance {
    pub fn gold_answer(&self) -> Option<f64> {
        match self.payload {
            TaskPayload::GoldAnswer(g) => Some(g),
            _ => None,
        }
    }

    pub fn constraints(&self) -> Option<&[String]> {
        match &self.payload {
            TaskPayload::Constraints(c) => Some(c),
            _ => None,
        }
    }
}

/// Learning and inference hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparams {
    /// Weight on value improvement in pair sampling.
    pub alpha: f64,
    /// Weight on hypothesis/correction similarity in pair sampling.
    pub beta: f64,
    /// Samples per prompt at initialization and per hypothesis at exploration.
    pub n_samples: usize,
    pub iterations: usize,
    /// Learning steps per outer iteration.
    pub learn_steps: usize,
    pub batch_size: usize,
    /// Corrections applied at inference (T).
    pub max_corrections: usize,
    /// Early-stop threshold for trajectories.
    pub target_value: Option<f64>,
    pub seed: u64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            alpha: 10.0,
            beta: 1.0,
            n_samples: 8,
            iterations: 5,
            learn_steps: 500,
            batch_size: 16,
            max_corrections: 3,
            target_value: Some(1.0),
            seed: 0,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be a finite value >= 0");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be a finite value >= 0");
        }
        if self.n_samples == 0 {
            return bad("n_samples must be positive");
        }
        if self.n_samples > 256 {
            return bad("n_samples must be at most 256");
        }
        if self.iterations == 0 {
            return bad("iterations must be positive");
        }
        if self.learn_steps == 0 {
            return bad("learn_steps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if let Some(t) = self.target_value {
            if !(0.0..=1.0).contains(&t) {
                return bad("target_value must lie in [0, 1]");
            }
        }
        Ok(())
    }
}
