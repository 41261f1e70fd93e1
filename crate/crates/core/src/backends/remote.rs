use serde::{Deserialize, Serialize};

use super::http::{HttpConfig, JsonClient};
use super::{apply_stop, BackendError, GenerationRequest, GenerationResult, Generator};
use crate::interp::program_tokens;
use crate::model::DecodeMode;
use crate::seq::{tokenize, TokenSeq};

/// How completion texts become token sequences.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Text,
    /// Program text; line breaks become `;` statement separators.
    Program,
}

impl OutputFormat {
    pub fn tokens(self, text: &str) -> TokenSeq {
        match self {
            OutputFormat::Text => tokenize(text),
            OutputFormat::Program => program_tokens(text),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteGeneratorConfig {
    pub endpoint: HttpConfig,
    pub output: OutputFormat,
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
    n: usize,
    temperature: f64,
    max_tokens: usize,
    stop: Vec<&'a str>,
}

#[derive(Deserialize)]
struct Choice {
    text: String,
}

#[derive(Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

/// Completions-style HTTP generator.
pub struct RemoteGenerator {
    client: JsonClient,
    output: OutputFormat,
}

impl RemoteGenerator {
    pub fn new(cfg: RemoteGeneratorConfig) -> Result<Self, BackendError> {
        if cfg.endpoint.url.is_empty() {
            return Err(BackendError::Config("remote generator needs an endpoint url".into()));
        }
        Ok(RemoteGenerator {
            client: JsonClient::new(cfg.endpoint)?,
            output: cfg.output,
        })
    }
}

impl Generator for RemoteGenerator {
    fn tag(&self) -> String {
        format!("remote({})", self.client.config().url)
    }

    /// Replies with fewer choices than requested are cycled to fill `n`.
    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let prompt = request.text();
        let temperature = match request.mode {
            DecodeMode::Temperature(t) => t,
            DecodeMode::Greedy | DecodeMode::Beam(_) => 0.0,
        };
        let body = CompletionRequest {
            prompt: &prompt,
            n: request.n,
            temperature,
            max_tokens: request.max_len,
            stop: request.stop.as_deref().into_iter().collect(),
        };
        let resp: CompletionResponse = self.client.post(&body)?;
        if resp.choices.is_empty() {
            return Err(BackendError::MalformedResponse("no choices in completion response".into()));
        }
        let texts: Vec<String> = (0..request.n)
            .map(|i| resp.choices[i % resp.choices.len()].text.clone())
            .collect();
        let sequences = texts
            .iter()
            .map(|t| apply_stop(self.output.tokens(t), request.stop.as_deref()))
            .collect();
        Ok(GenerationResult {
            sequences,
            texts: Some(texts),
            backend_tag: self.tag(),
        })
    }
}
