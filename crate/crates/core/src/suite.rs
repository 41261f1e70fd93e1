//! Synthetic task suites and their on-disk form.
//!
//! A suite directory holds `train.jsonl`, `valid.jsonl`, `test.jsonl`
//! (one [`TaskInstance`] per line), `suite.toml` (the spec plus the scripted
//! generator's corruption settings) and, for open-scored suites,
//! `lexicon.toml`.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::backends::{CorruptionSpec, EditOp, ScriptedGenerator};
use crate::error::{Error, Result};
use crate::interp::{self, program_tokens, DEFAULT_STEP_LIMIT};
use crate::rng::{label, stream};
use crate::seq::{tokenize, TokenSeq};
use crate::types::{TaskInstance, TaskPayload};
use crate::valuefn::{
    AttributeFeedback, ConstraintFeedback, CoverageValue, ExecutionValue, FeedbackFn, MockLexiconScorer, ScalarValue,
    ValueFn,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteKind {
    MathCorrupt,
    Constrained,
    OpenScored,
}

impl std::str::FromStr for SuiteKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "math-corrupt" => Ok(SuiteKind::MathCorrupt),
            "constrained" => Ok(SuiteKind::Constrained),
            "open-scored" => Ok(SuiteKind::OpenScored),
            other => Err(Error::Config(format!(
                "unknown suite kind {other:?} (expected math-corrupt, constrained or open-scored)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSpec {
    pub kind: SuiteKind,
    pub seed: u64,
    pub train: usize,
    pub valid: usize,
    pub test: usize,
    /// Per-position edit probability of the scripted generator.
    pub rho: f64,
    /// Constraint-set size range (constrained suites).
    pub min_constraints: usize,
    pub max_constraints: usize,
    /// Scorer lexicon for open-scored suites; a built-in one when unset.
    pub lexicon: Option<PathBuf>,
}

impl Default for SuiteSpec {
    fn default() -> Self {
        SuiteSpec {
            kind: SuiteKind::MathCorrupt,
            seed: 7,
            train: 200,
            valid: 0,
            test: 50,
            rho: 0.3,
            min_constraints: 3,
            max_constraints: 5,
            lexicon: None,
        }
    }
}

impl SuiteSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.train == 0 || self.test == 0 {
            return bad("train and test splits need at least one instance".into());
        }
        if !(0.0..=1.0).contains(&self.rho) {
            return bad(format!("rho must lie in [0, 1], got {}", self.rho));
        }
        let total = self.train + self.valid + self.test;
        match self.kind {
            SuiteKind::MathCorrupt => {
                let cap = math_combos().len();
                if total > cap {
                    return bad(format!("math-corrupt has {cap} distinct problems, {total} requested"));
                }
            }
            SuiteKind::Constrained => {
                if self.min_constraints == 0 || self.min_constraints > self.max_constraints {
                    return bad("need 1 <= min_constraints <= max_constraints".into());
                }
                if self.max_constraints > CONCEPTS.len() {
                    return bad(format!("at most {} constraints are available", CONCEPTS.len()));
                }
            }
            SuiteKind::OpenScored => {}
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct SuiteFile {
    spec: SuiteSpec,
    generator: CorruptionSpec,
}

#[derive(Clone, Debug)]
pub struct Suite {
    pub spec: SuiteSpec,
    /// Corruption used by the scripted stand-in generator.
    pub generator: CorruptionSpec,
    pub train: Vec<TaskInstance>,
    pub valid: Vec<TaskInstance>,
    pub test: Vec<TaskInstance>,
    pub lexicon: Option<MockLexiconScorer>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "valid" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl Suite {
    pub fn generate(spec: &SuiteSpec) -> Result<Suite> {
        spec.validate()?;
        match spec.kind {
            SuiteKind::MathCorrupt => math_suite(spec),
            SuiteKind::Constrained => constrained_suite(spec),
            SuiteKind::OpenScored => open_scored_suite(spec),
        }
    }

    pub fn split(&self, split: Split) -> &[TaskInstance] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn all_instances(&self) -> Vec<TaskInstance> {
        [&self.train, &self.valid, &self.test].into_iter().flatten().cloned().collect()
    }

    /// The scripted generator over every split.
    pub fn scripted_generator(&self) -> Result<ScriptedGenerator> {
        Ok(ScriptedGenerator::new(&self.all_instances(), self.generator.clone())?)
    }

    pub fn value_fn(&self) -> Result<Box<dyn ValueFn>> {
        Ok(match self.spec.kind {
            SuiteKind::MathCorrupt => Box::new(ExecutionValue::default()),
            SuiteKind::Constrained => Box::new(CoverageValue),
            SuiteKind::OpenScored => Box::new(ScalarValue::new(self.scorer()?)),
        })
    }

    /// The suite's own feedback: missing constraints, or the attribute to
    /// reduce. Math suites have none.
    pub fn task_feedback(&self) -> Result<Option<Box<dyn FeedbackFn>>> {
        Ok(match self.spec.kind {
            SuiteKind::MathCorrupt => None,
            SuiteKind::Constrained => Some(Box::new(ConstraintFeedback)),
            SuiteKind::OpenScored => Some(Box::new(AttributeFeedback { scorer: self.scorer()? })),
        })
    }

    fn scorer(&self) -> Result<MockLexiconScorer> {
        self.lexicon
            .clone()
            .ok_or_else(|| Error::Config("open-scored suite has no lexicon".into()))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, items) in [("train", &self.train), ("valid", &self.valid), ("test", &self.test)] {
            let mut text = String::new();
            for inst in items {
                text.push_str(&serde_json::to_string(inst).expect("plain record"));
                text.push('\n');
            }
            write_file(&dir.join(format!("{name}.jsonl")), &text)?;
        }
        let mut spec = self.spec.clone();
        if let Some(lex) = &self.lexicon {
            let text = toml::to_string(lex.lexicons()).map_err(|e| Error::Config(e.to_string()))?;
            write_file(&dir.join("lexicon.toml"), &text)?;
            spec.lexicon = Some(PathBuf::from("lexicon.toml"));
        }
        let file = SuiteFile {
            spec,
            generator: self.generator.clone(),
        };
        let text = toml::to_string(&file).map_err(|e| Error::Config(e.to_string()))?;
        write_file(&dir.join("suite.toml"), &text)
    }

    pub fn load(dir: &Path) -> Result<Suite> {
        let meta = dir.join("suite.toml");
        let text = std::fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
        let file: SuiteFile = toml::from_str(&text).map_err(|e| Error::Format {
            path: meta.clone(),
            line: 0,
            reason: e.to_string(),
        })?;
        let lexicon = match &file.spec.lexicon {
            Some(p) => Some(MockLexiconScorer::from_toml_file(&dir.join(p))?),
            None => None,
        };
        Ok(Suite {
            train: read_instances(&dir.join("train.jsonl"))?,
            valid: read_instances(&dir.join("valid.jsonl"))?,
            test: read_instances(&dir.join("test.jsonl"))?,
            spec: file.spec,
            generator: file.generator,
            lexicon,
        })
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Reads task instances from JSONL. A missing file reads as empty.
pub fn read_instances(path: &Path) -> Result<Vec<TaskInstance>> {
    let file = match std::fs::File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(path, e)),
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Format {
            path: path.to_owned(),
            line: i + 1,
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Splits `items` into train/valid/test in order and names them.
fn assign<T>(spec: &SuiteSpec, prefix: &str, items: Vec<T>, mut build: impl FnMut(String, T) -> TaskInstance) -> Suite {
    let mut it = items.into_iter();
    let mut take = |name: &str, n: usize| -> Vec<TaskInstance> {
        (0..n)
            .map_while(|i| it.next().map(|x| build(format!("{prefix}-{name}-{i:04}"), x)))
            .collect()
    };
    let train = take("train", spec.train);
    let valid = take("valid", spec.valid);
    let test = take("test", spec.test);
    Suite {
        spec: spec.clone(),
        generator: CorruptionSpec::default(),
        train,
        valid,
        test,
        lexicon: None,
    }
}

// Math: `A op1 B` then `op2 C`, with each slot drawing from its own
// number range so the corrector can tell the operands apart.
const MATH_A: [u32; 6] = [12, 15, 18, 20, 24, 30];
const MATH_B: [u32; 5] = [2, 3, 4, 5, 6];
const MATH_C: [u32; 4] = [7, 8, 9, 10];
const MATH_OP1: [(&str, &str); 2] = [("plus", "+"), ("minus", "-")];
/// `per` reads as division, but the scripted generator drafts it as a
/// product.
const MATH_OP2: [(&str, &str, &str); 3] = [("times", "*", "*"), ("over", "/", "/"), ("per", "/", "*")];

#[derive(Clone, Copy)]
struct MathCombo {
    a: u32,
    op1: usize,
    b: u32,
    op2: usize,
    c: u32,
}

fn math_combos() -> Vec<MathCombo> {
    let mut out = Vec::new();
    for a in MATH_A {
        for op1 in 0..MATH_OP1.len() {
            for b in MATH_B {
                for op2 in 0..MATH_OP2.len() {
                    for c in MATH_C {
                        out.push(MathCombo { a, op1, b, op2, c });
                    }
                }
            }
        }
    }
    out
}

fn math_program(m: &MathCombo, op2: &str) -> TokenSeq {
    program_tokens(&format!(
        "a = {} {} {}\nb = a {} {}\nanswer = b\nprint(answer)",
        m.a, MATH_OP1[m.op1].1, m.b, op2, m.c
    ))
}

fn math_suite(spec: &SuiteSpec) -> Result<Suite> {
    let mut combos = math_combos();
    combos.shuffle(&mut stream(spec.seed, &[label("suite"), label("math")]));
    let mut failure = None;
    let mut suite = assign(spec, "math", combos, |id, m| {
        let (word2, gold_op, draft_op) = MATH_OP2[m.op2];
        let prompt = tokenize(&format!("{} {} {} , then {word2} {}", m.a, MATH_OP1[m.op1].0, m.b, m.c));
        let reference = math_program(&m, gold_op);
        let gold = interp::parse(&interp::program_text(&reference))
            .ok()
            .and_then(|p| interp::execute(&p, DEFAULT_STEP_LIMIT).ok())
            .and_then(|r| r.printed.first().copied());
        if gold.is_none() {
            failure = Some(id.clone());
        }
        TaskInstance {
            input_id: id,
            prompt,
            payload: TaskPayload::GoldAnswer(gold.unwrap_or(f64::NAN)),
            generator_draft: (draft_op != gold_op).then(|| math_program(&m, draft_op)),
            reference: Some(reference),
        }
    });
    if let Some(id) = failure {
        return Err(Error::Invariant(format!("gold program for {id} does not execute")));
    }
    suite.generator = CorruptionSpec {
        rho: spec.rho,
        ops: vec![EditOp::Substitute],
        confusion: confusion(&[("+", &["-"]), ("-", &["+"]), ("*", &["+"]), ("/", &["-"])]),
    };
    Ok(suite)
}

fn confusion(pairs: &[(&str, &[&str])]) -> BTreeMap<String, Vec<String>> {
    pairs
        .iter()
        .map(|(k, v)| ((*k).to_owned(), v.iter().map(|s| (*s).to_owned()).collect()))
        .collect()
}

/// Constraint words with the inflected form used in reference sentences,
/// in the order they appear there.
const CONCEPTS: [(&str, &str); 24] = [
    ("dog", "dogs"),
    ("cat", "cats"),
    ("bird", "birds"),
    ("fish", "fishing"),
    ("run", "runs"),
    ("jump", "jumping"),
    ("throw", "throwing"),
    ("catch", "catches"),
    ("kick", "kicks"),
    ("climb", "climbing"),
    ("sing", "singing"),
    ("read", "reading"),
    ("cook", "cooking"),
    ("paint", "painting"),
    ("walk", "walking"),
    ("play", "playing"),
    ("ball", "balls"),
    ("book", "books"),
    ("meal", "meals"),
    ("wall", "walls"),
    ("rock", "rocks"),
    ("tree", "trees"),
    ("river", "rivers"),
    ("field", "fields"),
];

fn constrained_suite(spec: &SuiteSpec) -> Result<Suite> {
    let mut rng = stream(spec.seed, &[label("suite"), label("constrained")]);
    let total = spec.train + spec.valid + spec.test;
    let mut seen = std::collections::BTreeSet::new();
    let mut sets = Vec::with_capacity(total);
    let mut attempts = 0;
    while sets.len() < total {
        attempts += 1;
        if attempts > total * 1000 {
            return Err(Error::Config("could not draw enough distinct constraint sets".into()));
        }
        let k = rng.gen_range(spec.min_constraints..=spec.max_constraints);
        let mut idx: Vec<usize> = rand::seq::index::sample(&mut rng, CONCEPTS.len(), k).into_vec();
        let mut key = idx.clone();
        key.sort_unstable();
        if !seen.insert(key) {
            continue;
        }
        idx.shuffle(&mut rng);
        sets.push(idx);
    }
    let mut suite = assign(spec, "cons", sets, |id, idx| {
        let constraints: Vec<String> = idx.iter().map(|&i| CONCEPTS[i].0.to_owned()).collect();
        let mut ordered = idx.clone();
        ordered.sort_unstable();
        let sentence: Vec<&str> = ordered.iter().map(|&i| CONCEPTS[i].1).collect();
        TaskInstance {
            input_id: id,
            prompt: tokenize(&constraints.join(" ")),
            payload: TaskPayload::Constraints(constraints),
            reference: Some(tokenize(&format!("{} .", sentence.join(" and ")))),
            generator_draft: None,
        }
    });
    let surfaces: Vec<&str> = CONCEPTS.iter().map(|c| c.1).collect();
    let table: Vec<(&str, Vec<&str>)> = surfaces
        .iter()
        .map(|&s| (s, surfaces.iter().copied().filter(|&o| o != s).collect()))
        .collect();
    let pairs: Vec<(&str, &[&str])> = table.iter().map(|(k, v)| (*k, v.as_slice())).collect();
    suite.generator = CorruptionSpec {
        rho: spec.rho,
        ops: vec![EditOp::Delete, EditOp::Substitute],
        confusion: confusion(&pairs),
    };
    Ok(suite)
}

const SUBJECTS: [&str; 6] = ["movie", "meal", "service", "game", "song", "book"];
const NEUTRAL: [&str; 8] = ["fine", "long", "quiet", "simple", "late", "short", "loud", "plain"];
const TOXIC: [&str; 6] = ["stupid", "awful", "pathetic", "disgusting", "idiotic", "dumb"];

fn builtin_lexicon() -> MockLexiconScorer {
    let attr = |words: &[(&str, f64)]| words.iter().map(|(w, x)| ((*w).to_owned(), *x)).collect();
    MockLexiconScorer::new(BTreeMap::from([
        (
            "toxicity".to_owned(),
            attr(&[("stupid", 0.8), ("idiotic", 0.9), ("dumb", 0.7), ("disgusting", 0.6)]),
        ),
        ("insult".to_owned(), attr(&[("pathetic", 0.7), ("awful", 0.5), ("stupid", 0.6)])),
    ]))
}

fn open_scored_suite(spec: &SuiteSpec) -> Result<Suite> {
    let mut combos = Vec::new();
    for s in SUBJECTS {
        for (i, a) in NEUTRAL.iter().enumerate() {
            for b in &NEUTRAL[i + 1..] {
                combos.push((s, *a, *b));
            }
        }
    }
    let total = spec.train + spec.valid + spec.test;
    if total > combos.len() {
        return Err(Error::Config(format!(
            "open-scored has {} distinct prompts, {total} requested",
            combos.len()
        )));
    }
    combos.shuffle(&mut stream(spec.seed, &[label("suite"), label("open")]));
    let mut suite = assign(spec, "open", combos, |id, (s, a, b)| TaskInstance {
        input_id: id,
        prompt: tokenize(&format!("describe the {s} : {a} , {b}")),
        payload: TaskPayload::None,
        reference: Some(tokenize(&format!("the {s} was {a} and {b} ."))),
        generator_draft: None,
    });
    let toxic: Vec<&str> = TOXIC.to_vec();
    let pairs: Vec<(&str, &[&str])> = NEUTRAL.iter().map(|n| (*n, toxic.as_slice())).collect();
    suite.generator = CorruptionSpec {
        rho: spec.rho,
        ops: vec![EditOp::Substitute],
        confusion: confusion(&pairs),
    };
    suite.lexicon = Some(match &spec.lexicon {
        Some(p) => MockLexiconScorer::from_toml_file(p)?,
        None => builtin_lexicon(),
    });
    Ok(suite)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::valuefn::coverage_value;
    use std::collections::BTreeSet;

    #[test]
    fn math_gold_programs_execute_to_gold() {
        let spec = SuiteSpec {
            train: 100,
            test: 20,
            valid: 5,
            ..Default::default()
        };
        let suite = Suite::generate(&spec).unwrap();
        assert_eq!(suite.train.len(), 100);
        let v = ExecutionValue::default();
        for inst in suite.all_instances() {
            assert_eq!(v.evaluate(&inst, inst.reference.as_ref().unwrap()).unwrap(), 1.0);
            if let Some(d) = &inst.generator_draft {
                assert_eq!(v.evaluate(&inst, d).unwrap(), 0.0, "{}", inst.input_id);
            }
        }
        let prompts: BTreeSet<_> = suite.all_instances().into_iter().map(|i| i.prompt).collect();
        assert_eq!(prompts.len(), 125);
    }

    #[test]
    fn math_output_vocab_is_small() {
        let suite = Suite::generate(&SuiteSpec::default()).unwrap();
        let mut toks = BTreeSet::new();
        for i in suite.all_instances() {
            toks.extend(i.reference.unwrap().into_inner());
        }
        toks.extend(suite.generator.confusion.values().flatten().cloned());
        assert!(toks.len() <= 64, "{}", toks.len());
    }

    #[test]
    fn constrained_sizes_and_references() {
        let spec = SuiteSpec {
            kind: SuiteKind::Constrained,
            train: 60,
            test: 10,
            rho: 0.2,
            ..Default::default()
        };
        let suite = Suite::generate(&spec).unwrap();
        for inst in suite.all_instances() {
            let c = inst.constraints().unwrap();
            assert!((3..=5).contains(&c.len()));
            assert_eq!(coverage_value(c, inst.reference.as_ref().unwrap()), 1.0);
        }
    }

    #[test]
    fn open_scored_references_are_clean() {
        let spec = SuiteSpec {
            kind: SuiteKind::OpenScored,
            train: 20,
            test: 5,
            ..Default::default()
        };
        let suite = Suite::generate(&spec).unwrap();
        let v = suite.value_fn().unwrap();
        for inst in suite.all_instances() {
            assert_eq!(v.evaluate(&inst, inst.reference.as_ref().unwrap()).unwrap(), 1.0);
        }
    }

    #[test]
    fn write_load_roundtrip_is_deterministic() {
        for kind in [SuiteKind::MathCorrupt, SuiteKind::Constrained, SuiteKind::OpenScored] {
            let spec = SuiteSpec {
                kind,
                train: 12,
                valid: 3,
                test: 4,
                ..Default::default()
            };
            let a = tempfile::tempdir().unwrap();
            let b = tempfile::tempdir().unwrap();
            Suite::generate(&spec).unwrap().write(a.path()).unwrap();
            Suite::generate(&spec).unwrap().write(b.path()).unwrap();
            for f in ["train.jsonl", "valid.jsonl", "test.jsonl", "suite.toml"] {
                assert_eq!(
                    std::fs::read(a.path().join(f)).unwrap(),
                    std::fs::read(b.path().join(f)).unwrap()
                );
            }
            let loaded = Suite::load(a.path()).unwrap();
            assert_eq!(loaded.test.len(), 4);
            assert_eq!(loaded.generator, Suite::generate(&spec).unwrap().generator);
        }
    }

    #[test]
    fn rejects_oversized_math_suite() {
        let spec = SuiteSpec {
            train: 1000,
            ..Default::default()
        };
        assert!(matches!(Suite::generate(&spec), Err(Error::Config(_))));
    }
}
