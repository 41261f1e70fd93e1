//! Backend-neutral generation: one request/result contract shared by the
//! base generator, the corrector and the feedback model.

pub mod http;
pub mod mock;
mod remote;
mod scripted;
mod toy;

use thiserror::Error;

pub use crate::model::DecodeMode;
pub use remote::{OutputFormat, RemoteGenerator, RemoteGeneratorConfig};
pub use scripted::{corrupt, corrupt_counted, CorruptionSpec, EditOp, ScriptedGenerator};
pub use toy::{ToyBackend, ToyRole};

use crate::seq::{tokenize, TokenSeq};
use crate::types::{Candidate, TaskInstance};
use crate::valuefn::{FeedbackFn, ValueError};

pub const MAX_SAMPLES: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    Unavailable(String),
    #[error("malformed backend response: {0}")]
    MalformedResponse(String),
    #[error("backend configuration error: {0}")]
    Config(String),
}

impl From<http::HttpError> for BackendError {
    fn from(e: http::HttpError) -> Self {
        match e {
            http::HttpError::Malformed(m) => BackendError::MalformedResponse(m),
            other => BackendError::Unavailable(other.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationRequest {
    pub prompt: TokenSeq,
    /// Verbatim prompt for text backends; defaults to the detokenized
    /// `prompt`.
    pub prompt_text: Option<String>,
    pub n: usize,
    pub mode: DecodeMode,
    pub max_len: usize,
    pub stop: Option<String>,
    pub seed: u64,
    /// Sample `i` draws from stream `stream_offset + i`, so two requests
    /// with offsets `0` and `a` reproduce one request of `a + b` samples.
    pub stream_offset: u64,
}

impl GenerationRequest {
    pub fn new(prompt: TokenSeq, n: usize, mode: DecodeMode, max_len: usize, seed: u64) -> Self {
        GenerationRequest {
            prompt,
            prompt_text: None,
            n,
            mode,
            max_len,
            stop: None,
            seed,
            stream_offset: 0,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.n == 0 || self.n > MAX_SAMPLES {
            return Err(BackendError::Config(format!(
                "n must be in 1..={MAX_SAMPLES}, got {}",
                self.n
            )));
        }
        if self.max_len == 0 {
            return Err(BackendError::Config("max_len must be positive".into()));
        }
        Ok(())
    }

    pub fn text(&self) -> String {
        self.prompt_text.clone().unwrap_or_else(|| self.prompt.detokenize())
    }

    pub(crate) fn sample_stream(&self, i: usize) -> crate::rng::Rng {
        crate::rng::stream(self.seed, &[self.stream_offset + i as u64])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenerationResult {
    pub sequences: Vec<TokenSeq>,
    /// Raw texts when the backend produces text (remote backends).
    pub texts: Option<Vec<String>>,
    pub backend_tag: String,
}

/// Anything that can sample sequences for a prompt.
pub trait Generator: Send + Sync {
    fn tag(&self) -> String;
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn tag(&self) -> String {
        (**self).tag()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn tag(&self) -> String {
        (**self).tag()
    }
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        (**self).generate(request)
    }
}

/// Truncates at the first occurrence of the stop token.
pub(crate) fn apply_stop(seq: TokenSeq, stop: Option<&str>) -> TokenSeq {
    match stop {
        Some(s) => match seq.iter().position(|t| t == s) {
            Some(i) => TokenSeq::from_tokens(seq.into_inner().into_iter().take(i)),
            None => seq,
        },
        None => seq,
    }
}

/// One worked example for the feedback model.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Demonstration {
    pub problem: String,
    pub hypothesis: String,
    pub gold_solution: String,
    pub feedback: String,
}

fn feedback_block(out: &mut String, problem: &str, hypothesis: &str, gold: &str) {
    out.push_str("Problem: ");
    out.push_str(problem);
    out.push_str("\nInitial guess: ");
    out.push_str(hypothesis);
    out.push_str("\nGold solution: ");
    out.push_str(gold);
    out.push_str("\nFeedback:");
}

/// The few-shot prompt: each demonstration, then the query with an empty
/// feedback slot.
pub fn feedback_prompt(problem: &str, hypothesis: &str, gold_solution: &str, demonstrations: &[Demonstration]) -> String {
    let mut s = String::new();
    for d in demonstrations {
        feedback_block(&mut s, &d.problem, &d.hypothesis, &d.gold_solution);
        s.push(' ');
        s.push_str(&d.feedback);
        s.push_str("\n\n");
    }
    feedback_block(&mut s, problem, hypothesis, gold_solution);
    s
}

/// Asks a backend for a feedback sentence about `hypothesis`. The first
/// line of the reply is the feedback; an empty reply means none.
pub fn feedback_via_backend(
    backend: &dyn Generator,
    problem: &str,
    hypothesis: &str,
    gold_solution: &str,
    demonstrations: &[Demonstration],
) -> Result<Option<String>, BackendError> {
    if demonstrations.is_empty() {
        return Err(BackendError::Config("feedback model needs at least one demonstration".into()));
    }
    let text = feedback_prompt(problem, hypothesis, gold_solution, demonstrations);
    let mut req = GenerationRequest::new(tokenize(&text), 1, DecodeMode::Greedy, 64, 0);
    req.prompt_text = Some(text);
    req.stop = Some("\n".into());
    let res = backend.generate(&req)?;
    let reply = match (&res.texts, res.sequences.first()) {
        (Some(texts), _) if !texts.is_empty() => texts[0].clone(),
        (_, Some(seq)) => seq.detokenize(),
        _ => String::new(),
    };
    let line = reply.lines().map(str::trim).find(|l| !l.is_empty()).unwrap_or("");
    Ok((!line.is_empty()).then(|| line.to_owned()))
}

/// Feedback from a prompted model that also sees the gold solution.
pub struct BackendFeedback<G> {
    pub backend: G,
    pub demonstrations: Vec<Demonstration>,
}

impl<G: Generator> FeedbackFn for BackendFeedback<G> {
    fn feedback(&self, instance: &TaskInstance, output: &TokenSeq) -> Result<Option<String>, ValueError> {
        let gold = instance.reference.as_ref().ok_or_else(|| ValueError::MissingPayload {
            input_id: instance.input_id.clone(),
            what: "a reference solution",
        })?;
        feedback_via_backend(
            &self.backend,
            &instance.prompt.detokenize(),
            &output.detokenize(),
            &gold.detokenize(),
            &self.demonstrations,
        )
        .map_err(|e| ValueError::FeedbackUnavailable(e.to_string()))
    }

    fn pair_feedback(
        &self,
        _instance: &TaskInstance,
        hypothesis: &Candidate,
        _correction: &Candidate,
    ) -> Result<Option<String>, ValueError> {
        Ok(hypothesis.feedback.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Fixed(&'static str);

    impl Generator for Fixed {
        fn tag(&self) -> String {
            "fixed".into()
        }
        fn generate(&self, r: &GenerationRequest) -> Result<GenerationResult, BackendError> {
            Ok(GenerationResult {
                sequences: vec![tokenize(self.0); r.n],
                texts: Some(vec![self.0.to_owned(); r.n]),
                backend_tag: self.tag(),
            })
        }
    }

    fn demos() -> Vec<Demonstration> {
        vec![Demonstration {
            problem: "Tom has 5 apples and eats 3 . How many are left ?".into(),
            hypothesis: "answer = 5 + 3".into(),
            gold_solution: "answer = 5 - 3".into(),
            feedback: "In the initial guess, 3 should be subtracted.".into(),
        }]
    }

    #[test]
    fn feedback_examples() {
        let fb = |reply| feedback_via_backend(&Fixed(reply), "p", "h", "g", &demos()).unwrap();
        assert_eq!(
            fb("In the initial guess, 39 is not included.").as_deref(),
            Some("In the initial guess, 39 is not included.")
        );
        assert_eq!(fb("Correct.").as_deref(), Some("Correct."));
        assert_eq!(fb(""), None);
        assert_eq!(fb("  \nsecond line").as_deref(), Some("second line"));
        assert_eq!(fb("first\nsecond").as_deref(), Some("first"));
        assert!(feedback_via_backend(&Fixed("x"), "p", "h", "g", &[]).is_err());
    }

    #[test]
    fn prompt_lists_demonstrations_then_query() {
        let p = feedback_prompt("P", "H", "G", &demos());
        assert!(p.starts_with("Problem: Tom has 5 apples"));
        assert!(p.contains("Feedback: In the initial guess, 3 should be subtracted.\n\n"));
        assert!(p.ends_with("Problem: P\nInitial guess: H\nGold solution: G\nFeedback:"));
    }

    #[test]
    fn stop_truncates() {
        assert_eq!(apply_stop(tokenize("a b ; c"), Some(";")), tokenize("a b"));
        assert_eq!(apply_stop(tokenize("a b"), Some(";")), tokenize("a b"));
        assert_eq!(apply_stop(tokenize("a b"), None), tokenize("a b"));
    }

    #[test]
    fn request_limits() {
        let mut r = GenerationRequest::new(tokenize("p"), 3, DecodeMode::Greedy, 5, 0);
        r.validate().unwrap();
        r.n = 0;
        assert!(r.validate().is_err());
        r.n = MAX_SAMPLES + 1;
        assert!(r.validate().is_err());
    }
}
