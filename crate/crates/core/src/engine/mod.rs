//! The self-corrective learning loop: seed a datapool from the base
//! generator, then alternate exploration with the corrector, pair
//! formation and gradient steps on sampled pairs.

mod infer;
mod pool;

use std::collections::HashMap;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

pub use infer::{correct_from, draft, evaluate, infer_trajectory, EvalReport, InferenceSettings, ModeReport, StopReason, Step, Trajectory};
pub use pool::Datapool;

use crate::backends::{GenerationRequest, Generator, ToyBackend};
use crate::error::{Error, Result};
use crate::model::{train_batch, DecodeMode, ModelConfig, ToyModel, TrainingExample, Vocab};
use crate::pairing::{PairIndex, PairRule};
use crate::rng::{derive, label, stream};
use crate::seq::{format_corrector_input, TokenSeq};
use crate::types::{Candidate, Hyperparams, Origin, TaskInstance};
use crate::valuefn::{FeedbackFn, ValueFn};

/// Switches that remove one ingredient of the method.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Ablations {
    /// Draw training pairs uniformly instead of by improvement/proximity.
    pub no_proportional: bool,
    /// Pair any two distinct outputs, ignoring value.
    pub no_value_pairing: bool,
    /// Never add corrector outputs to the datapool.
    pub no_exploration: bool,
}

impl Ablations {
    pub fn names(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        if self.no_proportional {
            v.push("no-proportional");
        }
        if self.no_value_pairing {
            v.push("no-value-pairing");
        }
        if self.no_exploration {
            v.push("no-exploration");
        }
        v
    }

    pub fn enable(&mut self, name: &str) -> Result<()> {
        match name {
            "no-proportional" => self.no_proportional = true,
            "no-value-pairing" => self.no_value_pairing = true,
            "no-exploration" => self.no_exploration = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation {other:?} (expected no-proportional, no-value-pairing or no-exploration)"
                )))
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeModes {
    /// Base generator sampling, at initialization and for evaluation drafts.
    pub init: DecodeMode,
    /// Corrector sampling during exploration.
    pub explore: DecodeMode,
    /// Corrector decoding at inference.
    pub infer: DecodeMode,
}

impl Default for DecodeModes {
    fn default() -> Self {
        DecodeModes {
            init: DecodeMode::Temperature(1.0),
            explore: DecodeMode::Temperature(1.0),
            infer: DecodeMode::Greedy,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EngineSettings {
    pub hyper: Hyperparams,
    pub model: ModelConfig,
    pub ablations: Ablations,
    pub decode: DecodeModes,
    /// Hypotheses drawn per input at each exploration round.
    pub explore_hypotheses: usize,
    pub workers: usize,
}

impl Default for EngineSettings {
    fn default() -> Self {
        EngineSettings {
            hyper: Hyperparams::default(),
            model: ModelConfig::default(),
            ablations: Ablations::default(),
            decode: DecodeModes::default(),
            explore_hypotheses: 2,
            workers: 1,
        }
    }
}

impl EngineSettings {
    pub fn inference(&self) -> InferenceSettings {
        InferenceSettings {
            max_corrections: self.hyper.max_corrections,
            target_value: self.hyper.target_value,
            generator_mode: self.decode.init,
            corrector_mode: self.decode.infer,
            max_len: self.model.max_len,
            seed: self.hyper.seed,
            workers: self.workers,
        }
    }
}

/// Inputs together with how their outputs are scored.
#[derive(Clone, Copy)]
pub struct Task<'a> {
    pub instances: &'a [TaskInstance],
    pub value: &'a dyn ValueFn,
    pub feedback: Option<&'a dyn FeedbackFn>,
}

impl<'a> Task<'a> {
    pub fn score(&self, inst: &TaskInstance, output: TokenSeq, origin: Origin, iteration: u32) -> Result<Candidate> {
        let value = self.value.evaluate(inst, &output)?;
        let feedback = match self.feedback {
            Some(f) => f.feedback(inst, &output)?,
            None => None,
        };
        Ok(Candidate {
            input_id: inst.input_id.clone(),
            output,
            value,
            feedback,
            origin,
            iteration,
        })
    }
}

/// Maps `f` over `items` on up to `workers` threads, keeping input order.
pub(crate) fn par_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = workers.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(ci, part)| {
                let f = &f;
                s.spawn(move || {
                    part.iter()
                        .enumerate()
                        .map(|(j, t)| f(ci * chunk + j, t))
                        .collect::<Vec<R>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn collect_results<T>(parts: Vec<Result<Vec<T>>>) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Samples `N` outputs per input from the base generator and scores them.
/// External records are re-scored with the task's value function before
/// they are merged.
pub fn init_datapool(
    settings: &EngineSettings,
    task: &Task<'_>,
    generator: &dyn Generator,
    external: &[Candidate],
) -> Result<Datapool> {
    if settings.hyper.n_samples == 0 {
        return Err(Error::Config("n_samples must be positive".into()));
    }
    if task.instances.is_empty() {
        return Err(Error::Config("task suite is empty".into()));
    }
    let seed = settings.hyper.seed;
    let parts = par_map(task.instances, settings.workers, |_, inst| {
        let mut req = GenerationRequest::new(
            inst.prompt.clone(),
            settings.hyper.n_samples,
            settings.decode.init,
            settings.model.max_len,
            derive(seed, &[label("init"), label(&inst.input_id)]),
        );
        req.stop = None;
        let res = generator.generate(&req)?;
        res.sequences
            .into_iter()
            .map(|y| task.score(inst, y, Origin::BaseGenerator, 0))
            .collect::<Result<Vec<_>>>()
    });
    let mut pool = Datapool::new();
    pool.merge(collect_results(parts)?);

    let by_id: HashMap<&str, &TaskInstance> = task.instances.iter().map(|i| (i.input_id.as_str(), i)).collect();
    let mut extra = Vec::new();
    for c in external {
        let inst = by_id
            .get(c.input_id.as_str())
            .ok_or_else(|| Error::Config(format!("external record for unknown input {:?}", c.input_id)))?;
        extra.push(task.score(inst, c.output.clone(), Origin::External, 0)?);
    }
    pool.merge(extra);
    Ok(pool)
}

/// Corrects hypotheses drawn uniformly from each bucket and returns the
/// scored corrections. The pool itself is left untouched.
pub fn explore(
    settings: &EngineSettings,
    task: &Task<'_>,
    pool: &Datapool,
    corrector: &dyn Generator,
    iteration: u32,
) -> Result<Vec<Candidate>> {
    if settings.ablations.no_exploration {
        return Ok(Vec::new());
    }
    let seed = settings.hyper.seed;
    let parts = par_map(task.instances, settings.workers, |_, inst| {
        let bucket = pool.bucket(&inst.input_id);
        if bucket.is_empty() {
            return Ok(Vec::new());
        }
        let path = [label("explore"), u64::from(iteration), label(&inst.input_id)];
        let mut rng = stream(seed, &path);
        let mut out = Vec::new();
        for j in 0..settings.explore_hypotheses {
            let h = &bucket[rng.gen_range(0..bucket.len())];
            let ctx = format_corrector_input(&inst.prompt, &h.output, h.feedback.as_deref());
            let mut sub = path.to_vec();
            sub.push(j as u64);
            let req = GenerationRequest::new(
                ctx,
                settings.hyper.n_samples,
                settings.decode.explore,
                settings.model.max_len,
                derive(seed, &sub),
            );
            for y in corrector.generate(&req)?.sequences {
                out.push(task.score(inst, y, Origin::CorrectorExploration, iteration)?);
            }
        }
        Ok(out)
    });
    collect_results(parts)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationMetrics {
    pub iteration: u32,
    pub pool_size: usize,
    pub pair_count: usize,
    pub mean_pool_value: f64,
    pub eval_value: Option<f64>,
    pub eval_correct_frac: Option<f64>,
}

impl IterationMetrics {
    pub const CSV_HEADER: &'static str = "iteration,pool_size,pair_count,mean_pool_value,eval_value,eval_correct_frac";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.iteration,
            self.pool_size,
            self.pair_count,
            self.mean_pool_value,
            opt(self.eval_value),
            opt(self.eval_correct_frac)
        )
    }
}

pub struct TrainOutput {
    pub model: ToyModel,
    pub pool: Datapool,
    pub metrics: Vec<IterationMetrics>,
}

/// The corrector vocabulary: every token of references, drafts and pooled
/// outputs.
pub fn build_vocab(instances: &[TaskInstance], pool: &Datapool) -> Result<Vocab> {
    let mut toks: Vec<String> = Vec::new();
    for i in instances {
        for s in [&i.reference, &i.generator_draft].into_iter().flatten() {
            toks.extend(s.iter().cloned());
        }
    }
    for c in pool.iter() {
        toks.extend(c.output.iter().cloned());
    }
    Vocab::new(toks)
}

struct PairTable {
    /// `(instance index, pairs)` for inputs with at least one pair.
    entries: Vec<(usize, PairIndex)>,
    cumulative: Vec<usize>,
}

impl PairTable {
    fn build(task: &Task<'_>, pool: &Datapool, rule: PairRule, workers: usize) -> Self {
        let indexes = par_map(task.instances, workers, |_, inst| PairIndex::build(pool.bucket(&inst.input_id), rule));
        let entries: Vec<(usize, PairIndex)> = indexes.into_iter().enumerate().filter(|(_, p)| !p.is_empty()).collect();
        let mut cumulative = Vec::with_capacity(entries.len());
        let mut total = 0;
        for (_, p) in &entries {
            total += p.pair_count();
            cumulative.push(total);
        }
        PairTable { entries, cumulative }
    }

    fn pair_count(&self) -> usize {
        self.cumulative.last().copied().unwrap_or(0)
    }

    /// `(entry, hypothesis, correction)`.
    fn draw(&self, settings: &EngineSettings, rng: &mut crate::rng::Rng) -> Result<(usize, usize, usize)> {
        if self.entries.is_empty() {
            return Err(Error::EmptyPairSet);
        }
        if settings.ablations.no_proportional {
            let k = rng.gen_range(0..self.pair_count());
            let e = self.cumulative.partition_point(|&c| c <= k);
            let before = if e == 0 { 0 } else { self.cumulative[e - 1] };
            let (h, c) = self.entries[e].1.nth(k - before).ok_or(Error::EmptyPairSet)?;
            Ok((e, h, c))
        } else {
            let e = rng.gen_range(0..self.entries.len());
            let (h, c) = self.entries[e]
                .1
                .sample(settings.hyper.alpha, settings.hyper.beta, rng)?;
            Ok((e, h, c))
        }
    }
}

fn pair_rule(settings: &EngineSettings) -> PairRule {
    if settings.ablations.no_value_pairing {
        PairRule::AnyDistinct
    } else {
        PairRule::ValueImproving
    }
}

/// Runs the full loop. `on_iteration` sees each iteration's metrics as
/// soon as they are known.
pub fn train(
    settings: &EngineSettings,
    task: &Task<'_>,
    generator: &dyn Generator,
    external: &[Candidate],
    eval: Option<&Task<'_>>,
    on_iteration: &mut dyn FnMut(&IterationMetrics) -> Result<()>,
) -> Result<TrainOutput> {
    let mut checked = settings.hyper.clone();
    checked.iterations = checked.iterations.max(1);
    checked.validate()?;
    settings.model.validate()?;

    let mut pool = init_datapool(settings, task, generator, external)?;
    let vocab = build_vocab(task.instances, &pool)?;
    let mut model = ToyModel::new(vocab, &settings.model);
    let mut metrics = Vec::new();
    if settings.hyper.iterations == 0 {
        return Ok(TrainOutput { model, pool, metrics });
    }
    let rule = pair_rule(settings);
    if PairTable::build(task, &pool, rule, settings.workers).pair_count() == 0 {
        return Err(Error::NoPairsAvailable);
    }
    for it in 1..=settings.hyper.iterations as u32 {
        let delta = explore(settings, task, &pool, &ToyBackend::corrector(&model), it)?;
        pool.merge(delta);
        pool.iteration = it;

        let table = PairTable::build(task, &pool, rule, settings.workers);
        let mut fb_cache: HashMap<(usize, usize, usize), Option<String>> = HashMap::new();
        let mut rng = stream(settings.hyper.seed, &[label("learn"), u64::from(it)]);
        for _ in 0..settings.hyper.learn_steps {
            if table.entries.is_empty() {
                break;
            }
            let mut batch = Vec::with_capacity(settings.hyper.batch_size);
            for _ in 0..settings.hyper.batch_size {
                let (e, h, c) = table.draw(settings, &mut rng)?;
                let inst = &task.instances[table.entries[e].0];
                let bucket = pool.bucket(&inst.input_id);
                let (hyp, corr) = (&bucket[h], &bucket[c]);
                let fb = match task.feedback {
                    Some(f) => match fb_cache.get(&(e, h, c)) {
                        Some(v) => v.clone(),
                        None => {
                            let v = f.pair_feedback(inst, hyp, corr)?;
                            fb_cache.insert((e, h, c), v.clone());
                            v
                        }
                    },
                    None => None,
                };
                let ctx = format_corrector_input(&inst.prompt, &hyp.output, fb.as_deref());
                batch.push(TrainingExample::new(ctx, &corr.output));
            }
            train_batch(&mut model, &batch, settings.model.lr);
        }
        if !model.params.all_finite() {
            return Err(Error::Invariant(format!("non-finite weights after iteration {it}")));
        }

        let (eval_value, eval_correct_frac) = match eval {
            Some(ev) if !ev.instances.is_empty() => {
                let report = evaluate(&settings.inference(), ev, generator, &ToyBackend::corrector(&model))?;
                (Some(report.always.mean_value), Some(report.always.correct_frac))
            }
            _ => (None, None),
        };
        let m = IterationMetrics {
            iteration: it,
            pool_size: pool.len(),
            pair_count: table.pair_count(),
            mean_pool_value: pool.mean_value(),
            eval_value,
            eval_correct_frac,
        };
        on_iteration(&m)?;
        metrics.push(m);
    }
    Ok(TrainOutput { model, pool, metrics })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backends::{BackendError, GenerationResult};
    use crate::seq::tokenize;
    use crate::types::TaskPayload;
    use crate::valuefn::ValueError;

    /// Sample `i` is `v{k}` with `k` uniform in `0..levels`, or `v{i}` when
    /// `cycle` is set.
    struct Pick {
        levels: usize,
        cycle: bool,
    }

    impl Generator for Pick {
        fn tag(&self) -> String {
            "pick".into()
        }
        fn generate(&self, r: &GenerationRequest) -> std::result::Result<GenerationResult, BackendError> {
            let sequences = (0..r.n)
                .map(|i| {
                    let k = if self.cycle { i % self.levels } else { r.sample_stream(i).gen_range(0..self.levels) };
                    tokenize(&format!("v{k}"))
                })
                .collect();
            Ok(GenerationResult {
                sequences,
                texts: None,
                backend_tag: self.tag(),
            })
        }
    }

    /// `v{k}` scores `k / 4`, clamped to 1.
    struct Level;

    impl ValueFn for Level {
        fn evaluate(&self, _: &TaskInstance, output: &TokenSeq) -> std::result::Result<f64, ValueError> {
            let k: f64 = output.tokens().first().and_then(|t| t[1..].parse().ok()).unwrap_or(0.0);
            Ok((k / 4.0).min(1.0))
        }
    }

    fn instances(n: usize) -> Vec<TaskInstance> {
        (0..n)
            .map(|i| TaskInstance {
                input_id: format!("x{i:02}"),
                prompt: tokenize(&format!("prompt {i}")),
                payload: TaskPayload::None,
                reference: None,
                generator_draft: None,
            })
            .collect()
    }

    fn settings(n: usize) -> EngineSettings {
        let mut s = EngineSettings::default();
        s.hyper.n_samples = n;
        s.hyper.iterations = 2;
        s.hyper.learn_steps = 5;
        s.hyper.batch_size = 4;
        s
    }

    fn no_callback() -> impl FnMut(&IterationMetrics) -> Result<()> {
        |_| Ok(())
    }

    #[test]
    fn init_pool_holds_every_distinct_sample() {
        let xs = instances(10);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let pool = init_datapool(&settings(5), &task, &Pick { levels: 5, cycle: true }, &[]).unwrap();
        assert_eq!(pool.len(), 50);
        assert!(pool.iter().all(|c| c.origin == Origin::BaseGenerator && c.iteration == 0));
    }

    #[test]
    fn equal_values_leave_nothing_to_learn() {
        let xs = instances(4);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let gen = Pick { levels: 1, cycle: true };
        let pool = init_datapool(&settings(3), &task, &gen, &[]).unwrap();
        assert!(pool.iter().all(|c| c.value == 0.0));
        let err = train(&settings(3), &task, &gen, &[], None, &mut no_callback());
        assert!(matches!(err, Err(Error::NoPairsAvailable)));
    }

    #[test]
    fn zero_samples_is_a_config_error() {
        let xs = instances(2);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let err = train(&settings(0), &task, &Pick { levels: 3, cycle: true }, &[], None, &mut no_callback());
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn external_records_need_known_inputs() {
        let xs = instances(2);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let ext = |id: &str| Candidate {
            input_id: id.into(),
            output: tokenize("v4"),
            value: 0.0,
            feedback: None,
            origin: Origin::External,
            iteration: 0,
        };
        let pool = init_datapool(&settings(1), &task, &Pick { levels: 1, cycle: true }, &[ext("x01")]).unwrap();
        let c = pool.bucket("x01").iter().find(|c| c.origin == Origin::External).unwrap();
        assert_eq!(c.value, 1.0);
        assert!(init_datapool(&settings(1), &task, &Pick { levels: 1, cycle: true }, &[ext("nope")]).is_err());
    }

    #[test]
    fn no_exploration_keeps_the_initial_pool() {
        let xs = instances(3);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let mut s = settings(4);
        s.ablations.no_exploration = true;
        let gen = Pick { levels: 5, cycle: false };
        let init = init_datapool(&s, &task, &gen, &[]).unwrap();
        assert!(explore(&s, &task, &init, &gen, 1).unwrap().is_empty());
        let out = train(&s, &task, &gen, &[], None, &mut no_callback()).unwrap();
        assert_eq!(out.pool.len(), init.len());
        assert!(out.metrics.iter().all(|m| m.pool_size == init.len()));
    }

    #[test]
    fn zero_iterations_returns_untrained_model() {
        let xs = instances(3);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let mut s = settings(3);
        s.hyper.iterations = 0;
        let mut calls = 0;
        let out = train(&s, &task, &Pick { levels: 5, cycle: true }, &[], None, &mut |_| {
            calls += 1;
            Ok(())
        })
        .unwrap();
        assert!(out.metrics.is_empty());
        assert_eq!(calls, 0);
        assert!(out.model.params.all_finite());
    }

    #[test]
    fn pool_grows_monotonically_and_metrics_stream() {
        let xs = instances(4);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let mut s = settings(3);
        s.hyper.iterations = 3;
        let mut seen = Vec::new();
        let out = train(&s, &task, &Pick { levels: 5, cycle: false }, &[], Some(&task), &mut |m| {
            seen.push(m.clone());
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, out.metrics);
        assert_eq!(seen.len(), 3);
        assert!(seen.windows(2).all(|w| w[0].pool_size <= w[1].pool_size));
        assert!(seen.iter().all(|m| m.eval_value.is_some()));
        assert!(out.pool.iter().all(|c| c.iteration <= 3));
    }

    fn inference(max_corrections: usize, target_value: Option<f64>, seed: u64) -> InferenceSettings {
        InferenceSettings {
            max_corrections,
            target_value,
            generator_mode: DecodeMode::Temperature(1.0),
            corrector_mode: DecodeMode::Temperature(1.0),
            max_len: 8,
            seed,
            workers: 1,
        }
    }

    #[test]
    fn trajectory_lengths() {
        let xs = instances(1);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let c = Pick { levels: 5, cycle: false };
        let run = |t, target, y0: &str| correct_from(&inference(t, target, 0), &task, &xs[0], tokenize(y0), &c).unwrap();

        let tr = run(3, Some(1.0), "v4");
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.stop_reason, StopReason::TargetValueReached);

        let tr = run(3, None, "v0");
        assert_eq!(tr.steps.len(), 4);
        assert_eq!(tr.stop_reason, StopReason::FixedT);

        let tr = run(0, None, "v0");
        assert_eq!(tr.steps.len(), 1);
        assert_eq!(tr.steps[0].output, tokenize("v0"));
    }

    #[test]
    fn oracle_never_ends_below_always() {
        let xs = instances(20);
        let task = Task { instances: &xs, value: &Level, feedback: None };
        let c = Pick { levels: 5, cycle: false };
        for seed in 0..5 {
            let r = evaluate(&inference(4, None, seed), &task, &c, &c).unwrap();
            assert!(r.oracle.mean_value >= r.always.mean_value - 1e-12);
            assert_eq!(r.always.curve.len(), 5);
            assert_eq!(r.always.curve[0], r.baseline.mean_value);
            assert_eq!(r.oracle.curve[0], r.baseline.mean_value);
            assert!(r.oracle.correct_frac >= r.always.correct_frac);
        }
    }

    #[test]
    fn par_map_keeps_order() {
        let items: Vec<usize> = (0..103).collect();
        for w in [1, 2, 7, 200] {
            assert_eq!(par_map(&items, w, |i, &x| (i, x * 2)), items.iter().map(|&x| (x, x * 2)).collect::<Vec<_>>());
        }
        assert!(par_map(&[] as &[u8], 4, |_, &x| x).is_empty());
    }

    #[test]
    fn ablation_names_roundtrip() {
        let mut a = Ablations::default();
        for n in ["no-proportional", "no-value-pairing", "no-exploration"] {
            a.enable(n).unwrap();
        }
        assert_eq!(a.names(), ["no-proportional", "no-value-pairing", "no-exploration"]);
        assert!(a.enable("no-pairs").is_err());
    }
}
