//! Value functions `v(y) ∈ [0, 1]` (higher is better) and feedback strings.

mod coverage;
mod scorer;

pub use coverage::{constraint_feedback, constraint_matches, coverage_value, missing_constraints};
pub use scorer::{
    attribute_feedback, AttributeScorer, AttributeScores, MockLexiconScorer, RemoteScorer,
    RemoteScorerConfig,
};

use thiserror::Error;

use crate::interp::{self, check_answer, execute, DEFAULT_STEP_LIMIT};
use crate::seq::TokenSeq;
use crate::types::{Candidate, TaskInstance};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValueError {
    #[error("scorer unavailable: {0}")]
    ScorerUnavailable(String),
    #[error("feedback model unavailable: {0}")]
    FeedbackUnavailable(String),
    #[error("task instance {input_id} lacks {what}")]
    MissingPayload { input_id: String, what: &'static str },
}

/// Scores an output for a task instance.
pub trait ValueFn: Send + Sync {
    fn evaluate(&self, instance: &TaskInstance, output: &TokenSeq) -> Result<f64, ValueError>;
}

/// Produces the feedback string `f(y)` that conditions the corrector.
pub trait FeedbackFn: Send + Sync {
    /// Feedback for a single output, as used at insertion and inference time.
    fn feedback(&self, instance: &TaskInstance, output: &TokenSeq) -> Result<Option<String>, ValueError>;

    /// Feedback attached to a training pair. Defaults to the feedback
    /// stored with the hypothesis.
    fn pair_feedback(
        &self,
        _instance: &TaskInstance,
        hypothesis: &Candidate,
        _correction: &Candidate,
    ) -> Result<Option<String>, ValueError> {
        Ok(hypothesis.feedback.clone())
    }
}

fn clamp_unit(v: f64) -> f64 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// 1 when the program parses, runs and prints the gold answer first; 0 on
/// any parse error, runtime error or wrong answer.
#[derive(Clone, Debug)]
pub struct ExecutionValue {
    pub step_limit: usize,
}

impl Default for ExecutionValue {
    fn default() -> Self {
        ExecutionValue {
            step_limit: DEFAULT_STEP_LIMIT,
        }
    }
}

impl ExecutionValue {
    pub fn score_program(&self, program: &TokenSeq, gold: f64) -> f64 {
        let Ok(parsed) = interp::parse(&interp::program_text(program)) else {
            return 0.0;
        };
        match execute(&parsed, self.step_limit) {
            Ok(r) if check_answer(&r, gold) => 1.0,
            _ => 0.0,
        }
    }
}

impl ValueFn for ExecutionValue {
    fn evaluate(&self, instance: &TaskInstance, output: &TokenSeq) -> Result<f64, ValueError> {
        let gold = instance.gold_answer().ok_or_else(|| ValueError::MissingPayload {
            input_id: instance.input_id.clone(),
            what: "a gold answer",
        })?;
        Ok(self.score_program(output, gold))
    }
}

/// Fraction of constraints present in the output.
#[derive(Clone, Debug, Default)]
pub struct CoverageValue;

impl ValueFn for CoverageValue {
    fn evaluate(&self, instance: &TaskInstance, output: &TokenSeq) -> Result<f64, ValueError> {
        let constraints = instance.constraints().ok_or_else(|| ValueError::MissingPayload {
            input_id: instance.input_id.clone(),
            what: "constraints",
        })?;
        Ok(coverage_value(constraints, output))
    }
}

/// `1 − overall attribute score`, so that less toxic is better.
pub struct ScalarValue<S> {
    pub scorer: S,
}

impl<S: AttributeScorer> ScalarValue<S> {
    pub fn new(scorer: S) -> Self {
        ScalarValue { scorer }
    }
}

pub fn scalar_value(scorer: &dyn AttributeScorer, text: &TokenSeq) -> Result<f64, ValueError> {
    Ok(clamp_unit(1.0 - scorer.score(text)?.overall))
}

impl<S: AttributeScorer> ValueFn for ScalarValue<S> {
    fn evaluate(&self, _instance: &TaskInstance, output: &TokenSeq) -> Result<f64, ValueError> {
        scalar_value(&self.scorer, output)
    }
}

/// Lists constraints missing from the output.
#[derive(Clone, Debug, Default)]
pub struct ConstraintFeedback;

impl FeedbackFn for ConstraintFeedback {
    fn feedback(&self, instance: &TaskInstance, output: &TokenSeq) -> Result<Option<String>, ValueError> {
        let constraints = instance.constraints().ok_or_else(|| ValueError::MissingPayload {
            input_id: instance.input_id.clone(),
            what: "constraints",
        })?;
        Ok(constraint_feedback(constraints, output))
    }
}

/// Names the attribute to reduce: the highest-scoring one for a lone
/// output, the one that dropped most between a hypothesis and its
/// correction for a training pair.
pub struct AttributeFeedback<S> {
    pub scorer: S,
}

impl<S: AttributeScorer> FeedbackFn for AttributeFeedback<S> {
    fn feedback(&self, _instance: &TaskInstance, output: &TokenSeq) -> Result<Option<String>, ValueError> {
        attribute_feedback(&self.scorer, output, None)
    }

    fn pair_feedback(
        &self,
        _instance: &TaskInstance,
        hypothesis: &Candidate,
        correction: &Candidate,
    ) -> Result<Option<String>, ValueError> {
        attribute_feedback(&self.scorer, &hypothesis.output, Some(&correction.output))
    }
}
