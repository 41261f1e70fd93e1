use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{apply_stop, BackendError, GenerationRequest, GenerationResult, Generator};
use crate::rng::Rng;
use crate::seq::TokenSeq;
use crate::types::TaskInstance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EditOp {
    Substitute,
    Delete,
    Insert,
}

/// Per-token random edits applied to a known-good sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionSpec {
    /// Probability that a position is edited.
    pub rho: f64,
    pub ops: Vec<EditOp>,
    /// Replacement candidates for substitution; tokens without an entry
    /// are left alone when substitution is drawn.
    pub confusion: BTreeMap<String, Vec<String>>,
}

impl Default for CorruptionSpec {
    fn default() -> Self {
        CorruptionSpec {
            rho: 0.0,
            ops: vec![EditOp::Substitute],
            confusion: BTreeMap::new(),
        }
    }
}

impl CorruptionSpec {
    pub fn validate(&self) -> Result<(), BackendError> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(BackendError::Config(format!("rho must lie in [0, 1], got {}", self.rho)));
        }
        if self.ops.is_empty() && self.rho > 0.0 {
            return Err(BackendError::Config("corruption needs at least one edit op".into()));
        }
        if let Some((k, _)) = self.confusion.iter().find(|(_, v)| v.is_empty()) {
            return Err(BackendError::Config(format!("empty confusion list for {k:?}")));
        }
        Ok(())
    }

    /// Tokens that insertion draws from: every confusion value.
    fn insert_pool(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.confusion.values().flatten().map(String::as_str).collect();
        set.into_iter().collect()
    }
}

/// Corrupts `gold` and also reports how many positions were edited.
///
/// Each position is edited with probability `rho` by an op drawn uniformly
/// from the enabled ones. Insertion puts a random confusion token before
/// the position (or repeats the token when there are no confusion values).
pub fn corrupt_counted(gold: &TokenSeq, spec: &CorruptionSpec, rng: &mut Rng) -> (TokenSeq, usize) {
    let pool = spec.insert_pool();
    let mut out = Vec::with_capacity(gold.len() + 4);
    let mut edited = 0;
    for tok in gold.iter() {
        let hit = rng.gen::<f64>() < spec.rho;
        if !hit || spec.ops.is_empty() {
            out.push(tok.clone());
            continue;
        }
        edited += 1;
        match spec.ops[rng.gen_range(0..spec.ops.len())] {
            EditOp::Substitute => match spec.confusion.get(tok) {
                Some(alts) => out.push(alts[rng.gen_range(0..alts.len())].clone()),
                None => out.push(tok.clone()),
            },
            EditOp::Delete => {}
            EditOp::Insert => {
                let extra = if pool.is_empty() {
                    tok.as_str()
                } else {
                    pool[rng.gen_range(0..pool.len())]
                };
                out.push(extra.to_owned());
                out.push(tok.clone());
            }
        }
    }
    (TokenSeq::from_tokens(out), edited)
}

pub fn corrupt(gold: &TokenSeq, spec: &CorruptionSpec, rng: &mut Rng) -> TokenSeq {
    corrupt_counted(gold, spec, rng).0
}

/// Stand-in base generator: looks up the prompt's draft (or reference) and
/// returns independently corrupted copies. The decode mode is ignored.
pub struct ScriptedGenerator {
    scripts: HashMap<TokenSeq, TokenSeq>,
    spec: CorruptionSpec,
}

impl ScriptedGenerator {
    pub fn new(instances: &[TaskInstance], spec: CorruptionSpec) -> Result<Self, BackendError> {
        spec.validate()?;
        let scripts = instances
            .iter()
            .filter_map(|i| {
                let base = i.generator_draft.as_ref().or(i.reference.as_ref())?;
                Some((i.prompt.clone(), base.clone()))
            })
            .collect();
        Ok(ScriptedGenerator { scripts, spec })
    }

    pub fn spec(&self) -> &CorruptionSpec {
        &self.spec
    }
}

impl Generator for ScriptedGenerator {
    fn tag(&self) -> String {
        format!("scripted(rho={})", self.spec.rho)
    }

    fn generate(&self, request: &GenerationRequest) -> Result<GenerationResult, BackendError> {
        request.validate()?;
        let base = self.scripts.get(&request.prompt).ok_or_else(|| {
            BackendError::Config(format!("no script for prompt {:?}", request.prompt.detokenize()))
        })?;
        let sequences = (0..request.n)
            .map(|i| {
                let mut rng = request.sample_stream(i);
                let mut s = corrupt(base, &self.spec, &mut rng);
                if s.len() > request.max_len {
                    s = TokenSeq::from_tokens(s.into_inner().into_iter().take(request.max_len));
                }
                apply_stop(s, request.stop.as_deref())
            })
            .collect();
        Ok(GenerationResult {
            sequences,
            texts: None,
            backend_tag: self.tag(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::DecodeMode;
    use crate::rng::stream;
    use crate::seq::tokenize;
    use crate::types::TaskPayload;
    use proptest::prelude::*;

    fn confusion_all(tokens: &[&str]) -> BTreeMap<String, Vec<String>> {
        tokens
            .iter()
            .map(|t| (t.to_string(), vec![format!("{t}x")]))
            .collect()
    }

    #[test]
    fn rho_zero_and_rho_one_delete() {
        let gold = tokenize("a = 1 + 2");
        let mut rng = stream(1, &[]);
        let none = CorruptionSpec {
            rho: 0.0,
            ops: vec![EditOp::Substitute, EditOp::Delete, EditOp::Insert],
            confusion: confusion_all(&["a", "1"]),
        };
        assert_eq!(corrupt(&gold, &none, &mut rng), gold);
        let wipe = CorruptionSpec {
            rho: 1.0,
            ops: vec![EditOp::Delete],
            confusion: BTreeMap::new(),
        };
        assert!(corrupt(&gold, &wipe, &mut rng).is_empty());
    }

    #[test]
    fn edit_rate_matches_rho() {
        let gold = TokenSeq::from_tokens((0..100).map(|i| format!("t{i}")));
        let names: Vec<String> = gold.iter().cloned().collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let spec = CorruptionSpec {
            rho: 0.2,
            ops: vec![EditOp::Substitute, EditOp::Delete, EditOp::Insert],
            confusion: confusion_all(&refs),
        };
        let trials = 10_000;
        let mut total = 0;
        for i in 0..trials {
            total += corrupt_counted(&gold, &spec, &mut stream(3, &[i])).1;
        }
        let mean = total as f64 / trials as f64;
        assert!((mean - 20.0).abs() <= 1.5, "mean edits {mean}");
    }

    #[test]
    fn substitution_skips_unknown_tokens() {
        let spec = CorruptionSpec {
            rho: 1.0,
            ops: vec![EditOp::Substitute],
            confusion: BTreeMap::from([("+".to_string(), vec!["-".to_string()])]),
        };
        let out = corrupt(&tokenize("a = 1 + 2"), &spec, &mut stream(0, &[]));
        assert_eq!(out, tokenize("a = 1 - 2"));
    }

    fn inst(prompt: &str, reference: &str) -> TaskInstance {
        TaskInstance {
            input_id: prompt.into(),
            prompt: tokenize(prompt),
            payload: TaskPayload::None,
            reference: Some(tokenize(reference)),
            generator_draft: None,
        }
    }

    #[test]
    fn generator_copies_reference_at_rho_zero() {
        let g = ScriptedGenerator::new(&[inst("p", "gold text")], CorruptionSpec::default()).unwrap();
        let r = g
            .generate(&GenerationRequest::new(tokenize("p"), 4, DecodeMode::Greedy, 10, 1))
            .unwrap();
        assert_eq!(r.sequences, vec![tokenize("gold text"); 4]);
        assert!(g
            .generate(&GenerationRequest::new(tokenize("q"), 1, DecodeMode::Greedy, 10, 1))
            .is_err());
    }

    #[test]
    fn draft_takes_precedence() {
        let mut i = inst("p", "gold");
        i.generator_draft = Some(tokenize("draft"));
        let g = ScriptedGenerator::new(&[i], CorruptionSpec::default()).unwrap();
        let r = g
            .generate(&GenerationRequest::new(tokenize("p"), 1, DecodeMode::Greedy, 10, 1))
            .unwrap();
        assert_eq!(r.sequences[0], tokenize("draft"));
    }

    proptest! {
        #[test]
        fn split_requests_match_one_request(a in 1usize..6, b in 1usize..6, seed in 0u64..1000) {
            let spec = CorruptionSpec {
                rho: 0.4,
                ops: vec![EditOp::Substitute, EditOp::Delete, EditOp::Insert],
                confusion: confusion_all(&["x", "y", "z"]),
            };
            let g = ScriptedGenerator::new(&[inst("p", "x y z x y z")], spec).unwrap();
            let mut whole = GenerationRequest::new(tokenize("p"), a + b, DecodeMode::Greedy, 50, seed);
            let all = g.generate(&whole).unwrap().sequences;
            whole.n = a;
            let first = g.generate(&whole).unwrap().sequences;
            whole.n = b;
            whole.stream_offset = a as u64;
            let second = g.generate(&whole).unwrap().sequences;
            prop_assert_eq!(all, [first, second].concat());
        }
    }
}
