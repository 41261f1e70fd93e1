use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ValueError;
use crate::backends::http::{HttpConfig, JsonClient};
use crate::error::{Error, Result};
use crate::seq::TokenSeq;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AttributeScores {
    pub overall: f64,
    #[serde(rename = "attributes")]
    pub by_attribute: BTreeMap<String, f64>,
}

/// Source of toxicity-style attribute scores in `[0, 1]`.
pub trait AttributeScorer: Send + Sync {
    fn score(&self, text: &TokenSeq) -> Result<AttributeScores, ValueError>;
}

impl<S: AttributeScorer + ?Sized> AttributeScorer for &S {
    fn score(&self, text: &TokenSeq) -> Result<AttributeScores, ValueError> {
        (**self).score(text)
    }
}

impl<S: AttributeScorer + ?Sized> AttributeScorer for std::sync::Arc<S> {
    fn score(&self, text: &TokenSeq) -> Result<AttributeScores, ValueError> {
        (**self).score(text)
    }
}

/// Per attribute, the largest lexicon weight among words present in the
/// lowercased text; overall is the maximum over attributes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MockLexiconScorer {
    lexicons: BTreeMap<String, BTreeMap<String, f64>>,
}

impl MockLexiconScorer {
    pub fn new(lexicons: BTreeMap<String, BTreeMap<String, f64>>) -> Self {
        let lexicons = lexicons
            .into_iter()
            .map(|(attr, words)| {
                let words = words
                    .into_iter()
                    .map(|(w, weight)| (w.to_lowercase(), weight.clamp(0.0, 1.0)))
                    .collect();
                (attr, words)
            })
            .collect();
        MockLexiconScorer { lexicons }
    }

    /// Loads `[attribute] word = weight` tables from TOML.
    pub fn from_toml_str(text: &str) -> std::result::Result<Self, String> {
        let lexicons: BTreeMap<String, BTreeMap<String, f64>> =
            toml::from_str(text).map_err(|e| e.to_string())?;
        for (attr, words) in &lexicons {
            if let Some((w, x)) = words.iter().find(|(_, x)| !(0.0..=1.0).contains(*x)) {
                return Err(format!("weight {x} for '{w}' in [{attr}] is outside [0, 1]"));
            }
        }
        Ok(MockLexiconScorer::new(lexicons))
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|reason| Error::Format {
            path: path.to_owned(),
            line: 0,
            reason,
        })
    }

    pub fn lexicons(&self) -> &BTreeMap<String, BTreeMap<String, f64>> {
        &self.lexicons
    }

    pub fn score_text(&self, text: &TokenSeq) -> AttributeScores {
        let present: BTreeSet<String> = text.iter().map(|t| t.to_lowercase()).collect();
        let by_attribute: BTreeMap<String, f64> = self
            .lexicons
            .iter()
            .map(|(attr, words)| {
                let s = words
                    .iter()
                    .filter(|(w, _)| present.contains(*w))
                    .map(|(_, &x)| x)
                    .fold(0.0, f64::max);
                (attr.clone(), s)
            })
            .collect();
        let overall = by_attribute.values().copied().fold(0.0, f64::max);
        AttributeScores {
            overall,
            by_attribute,
        }
    }
}

impl AttributeScorer for MockLexiconScorer {
    fn score(&self, text: &TokenSeq) -> Result<AttributeScores, ValueError> {
        Ok(self.score_text(text))
    }
}

pub type RemoteScorerConfig = HttpConfig;

#[derive(Serialize)]
struct ScoreRequest<'a> {
    text: &'a str,
}

/// Scores text through `POST {"text": ...}` →
/// `{"overall": x, "attributes": {name: x}}`.
pub struct RemoteScorer {
    client: JsonClient,
}

impl RemoteScorer {
    pub fn new(cfg: RemoteScorerConfig) -> Result<Self, ValueError> {
        let client = JsonClient::new(cfg).map_err(|e| ValueError::ScorerUnavailable(e.to_string()))?;
        Ok(RemoteScorer { client })
    }
}

impl AttributeScorer for RemoteScorer {
    fn score(&self, text: &TokenSeq) -> Result<AttributeScores, ValueError> {
        let body = ScoreRequest {
            text: &text.detokenize(),
        };
        let mut scores: AttributeScores = self
            .client
            .post(&body)
            .map_err(|e| ValueError::ScorerUnavailable(e.to_string()))?;
        scores.overall = scores.overall.clamp(0.0, 1.0);
        for v in scores.by_attribute.values_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(scores)
    }
}

/// Picks the attribute to name in `"decrease toxicity in A"`.
///
/// With a reference (training), `A` maximizes `score(y) − score(y_ref)`;
/// without one (inference), `A` maximizes `score(y)`. Ties go to the
/// lexicographically first name. No attributes means no feedback.
pub fn attribute_feedback(
    scorer: &dyn AttributeScorer,
    y: &TokenSeq,
    y_ref: Option<&TokenSeq>,
) -> Result<Option<String>, ValueError> {
    let scores = scorer.score(y)?;
    let reference = y_ref.map(|r| scorer.score(r)).transpose()?;
    let mut best: Option<(&str, f64)> = None;
    // BTreeMap iteration is name-ordered, so a strict comparison keeps the
    // first name on ties.
    for (name, &s) in &scores.by_attribute {
        let key = match &reference {
            Some(r) => s - r.by_attribute.get(name).copied().unwrap_or(0.0),
            None => s,
        };
        if best.is_none_or(|(_, b)| key > b) {
            best = Some((name, key));
        }
    }
    Ok(best.map(|(name, _)| format!("decrease toxicity in {name}")))
}
