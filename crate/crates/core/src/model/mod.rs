//! Log-linear autoregressive corrector.
//!
//! `logit(t) = Σ_f w[f, t]` over the active features of the context and the
//! prefix generated so far; the next-token distribution is the softmax of
//! those logits.

mod decode;
mod features;
mod train;

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use decode::{decode, sequence_score, DecodeMode};
pub use features::{context_features, feature_id, features, prefix_features, FeatureKind};
pub use train::{loss_and_grad, train_batch, Grad, TrainingExample};

use crate::error::{Error, Result};
use crate::seq::{TokenSeq, MARKERS, MARK_END};

pub const UNK: &str = "<unk>";

/// Output vocabulary: reserved markers, `<unk>`, then the remaining tokens
/// in sorted order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

pub const MAX_VOCAB: usize = 4096;

impl Vocab {
    pub fn new<I, S>(tokens: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let rest: BTreeSet<String> = tokens
            .into_iter()
            .map(Into::into)
            .filter(|t| !MARKERS.contains(&t.as_str()) && t != UNK)
            .collect();
        let all = MARKERS
            .iter()
            .map(|m| m.to_string())
            .chain(std::iter::once(UNK.to_owned()))
            .chain(rest);
        Self::from_ordered(all.collect())
    }

    fn from_ordered(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() > MAX_VOCAB {
            return Err(Error::Config(format!(
                "vocabulary has {} tokens, more than {MAX_VOCAB}",
                tokens.len()
            )));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Config(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        for m in MARKERS.iter().chain([&UNK]) {
            if !index.contains_key(*m) {
                return Err(Error::Config(format!("vocabulary lacks reserved token {m}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, i: u32) -> &str {
        &self.tokens[i as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    /// Index of `token`, or of `<unk>`.
    pub fn index_or_unk(&self, token: &str) -> u32 {
        self.get(token).unwrap_or_else(|| self.index[UNK])
    }

    pub fn end(&self) -> u32 {
        self.index[MARK_END]
    }

    /// Tokens a decoder may emit: everything except `<unk>` and the
    /// markers, with `[END]` as the terminator.
    pub fn emittable(&self) -> Vec<bool> {
        self.tokens
            .iter()
            .map(|t| t == MARK_END || !(MARKERS.contains(&t.as_str()) || t == UNK))
            .collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.tokens {
            let _ = writeln!(s, "{t}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        Self::from_ordered(text.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// L2 penalty applied to the rows touched by an example.
    pub l2: f64,
    pub lr: f64,
    pub max_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            l2: 1e-4,
            lr: 0.5,
            max_len: 40,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::Config("model.l2 must be a finite value >= 0".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config("model.lr must be a finite value > 0".into()));
        }
        if self.max_len == 0 {
            return Err(Error::Config("model.max_len must be positive".into()));
        }
        Ok(())
    }
}

/// Sparse weight table, stored as one dense row over the vocabulary per
/// feature that has ever been active.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ToyModelParams {
    rows: HashMap<u64, Vec<f64>>,
    width: usize,
    pub l2: f64,
    pub lr: f64,
}

impl ToyModelParams {
    pub fn zeros(width: usize, l2: f64, lr: f64) -> Self {
        ToyModelParams {
            rows: HashMap::new(),
            width,
            l2,
            lr,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn get(&self, feature: u64, token: u32) -> f64 {
        self.rows.get(&feature).map_or(0.0, |r| r[token as usize])
    }

    pub fn set(&mut self, feature: u64, token: u32, w: f64) {
        let width = self.width;
        self.rows.entry(feature).or_insert_with(|| vec![0.0; width])[token as usize] = w;
    }

    pub fn row(&self, feature: u64) -> Option<&[f64]> {
        self.rows.get(&feature).map(Vec::as_slice)
    }

    pub(crate) fn row_mut(&mut self, feature: u64) -> &mut Vec<f64> {
        let width = self.width;
        self.rows.entry(feature).or_insert_with(|| vec![0.0; width])
    }

    /// Non-zero entries sorted by `(feature, token)`.
    pub fn entries(&self) -> Vec<(u64, u32, f64)> {
        let mut keys: Vec<u64> = self.rows.keys().copied().collect();
        keys.sort_unstable();
        let mut out = Vec::new();
        for f in keys {
            for (t, &w) in self.rows[&f].iter().enumerate() {
                if w != 0.0 {
                    out.push((f, t as u32, w));
                }
            }
        }
        out
    }

    pub fn nonzero_count(&self) -> usize {
        self.rows.values().flatten().filter(|w| **w != 0.0).count()
    }

    pub fn all_finite(&self) -> bool {
        self.rows.values().flatten().all(|w| w.is_finite())
    }

    /// Adds `Σ_f w[f, ·]` over `feats` into `out`.
    pub fn accumulate(&self, feats: &[u64], out: &mut [f64]) {
        for f in feats {
            if let Some(r) = self.rows.get(f) {
                for (o, w) in out.iter_mut().zip(r) {
                    *o += w;
                }
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ParamRecord {
    feature: u64,
    token: u32,
    weight: f64,
}

/// A vocabulary together with its weights.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyModel {
    pub vocab: Vocab,
    pub params: ToyModelParams,
}

impl ToyModel {
    pub fn new(vocab: Vocab, cfg: &ModelConfig) -> Self {
        let params = ToyModelParams::zeros(vocab.len(), cfg.l2, cfg.lr);
        ToyModel { vocab, params }
    }

    /// Softmax over the vocabulary for the token after `prefix`.
    pub fn next_token_dist(&self, context: &TokenSeq, prefix: &TokenSeq) -> Vec<f64> {
        let ctx = context_features(context);
        let pre = prefix_features(prefix.tokens());
        let mut logits = vec![0.0; self.vocab.len()];
        self.params.accumulate(&ctx, &mut logits);
        self.params.accumulate(&pre, &mut logits);
        softmax_in_place(&mut logits);
        logits
    }

    /// JSONL, one `{feature, token, weight}` record per non-zero weight in
    /// `(feature, token)` order.
    pub fn params_jsonl(&self) -> String {
        let mut s = String::new();
        for (feature, token, weight) in self.params.entries() {
            let rec = ParamRecord { feature, token, weight };
            s.push_str(&serde_json::to_string(&rec).expect("plain record"));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, params_path: &Path, vocab_path: &Path) -> Result<()> {
        std::fs::write(vocab_path, self.vocab.to_text()).map_err(|e| Error::io(vocab_path, e))?;
        std::fs::write(params_path, self.params_jsonl()).map_err(|e| Error::io(params_path, e))
    }

    pub fn load(params_path: &Path, vocab_path: &Path, cfg: &ModelConfig) -> Result<Self> {
        let text = std::fs::read_to_string(vocab_path).map_err(|e| Error::io(vocab_path, e))?;
        let vocab = Vocab::from_text(&text)?;
        let mut model = ToyModel::new(vocab, cfg);
        let file = std::fs::File::open(params_path).map_err(|e| Error::io(params_path, e))?;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(params_path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Format {
                path: params_path.to_owned(),
                line: i + 1,
                reason,
            };
            let rec: ParamRecord = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
            if rec.token as usize >= model.vocab.len() {
                return Err(bad(format!("token index {} outside vocabulary", rec.token)));
            }
            if !rec.weight.is_finite() {
                return Err(bad("non-finite weight".into()));
            }
            model.params.set(rec.feature, rec.token, rec.weight);
        }
        Ok(model)
    }
}

pub(crate) fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        z += *x;
    }
    for x in v.iter_mut() {
        *x /= z;
    }
}
