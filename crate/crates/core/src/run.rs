//! Run directories: training, evaluation and inference entry points plus
//! the artifacts they read and write.
//!
//! A run directory holds `config.toml` (the resolved config), `metrics.csv`
//! (one row per iteration, flushed as it is produced), `datapool.jsonl`,
//! `params.jsonl`, `vocab.txt` and `run-meta.json`. Only `run-meta.json`
//! carries wall-clock data.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::backends::{
    BackendError, BackendFeedback, GenerationRequest, GenerationResult, Generator, RemoteGenerator, ToyBackend,
};
use crate::config::{FeedbackMode, GeneratorConfig, RunConfig};
use crate::engine::{self, Datapool, EvalReport, IterationMetrics, Task, Trajectory};
use crate::error::{Error, Result};
use crate::model::ToyModel;
use crate::suite::{Split, Suite};
use crate::types::Candidate;
use crate::valuefn::{FeedbackFn, ValueFn};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const DATAPOOL_FILE: &str = "datapool.jsonl";
pub const PARAMS_FILE: &str = "params.jsonl";
pub const VOCAB_FILE: &str = "vocab.txt";
pub const META_FILE: &str = "run-meta.json";

/// A trained toy model served as a base generator.
pub struct OwnedToyGenerator(pub ToyModel);

impl Generator for OwnedToyGenerator {
    fn tag(&self) -> String {
        ToyBackend::generator(&self.0).tag()
    }

    fn generate(&self, request: &GenerationRequest) -> std::result::Result<GenerationResult, BackendError> {
        ToyBackend::generator(&self.0).generate(request)
    }
}

pub fn build_generator(cfg: &GeneratorConfig, suite: &Suite) -> Result<Box<dyn Generator>> {
    Ok(match cfg {
        GeneratorConfig::Scripted { rho } => {
            let mut s = suite.clone();
            if let Some(r) = rho {
                s.generator.rho = *r;
            }
            Box::new(s.scripted_generator()?)
        }
        GeneratorConfig::Remote(rc) => Box::new(RemoteGenerator::new(rc.clone())?),
        GeneratorConfig::Toy { run } => Box::new(OwnedToyGenerator(load_model(run)?.1)),
    })
}

/// Value and feedback functions for a suite under a config.
pub struct Scoring {
    pub value: Box<dyn ValueFn>,
    pub feedback: Option<Box<dyn FeedbackFn>>,
}

impl Scoring {
    pub fn new(cfg: &RunConfig, suite: &Suite) -> Result<Self> {
        let feedback: Option<Box<dyn FeedbackFn>> = match cfg.feedback {
            FeedbackMode::None => None,
            FeedbackMode::TaskFeedback => suite.task_feedback()?,
            FeedbackMode::BackendFeedback => {
                let rc = cfg
                    .feedback_backend
                    .clone()
                    .ok_or_else(|| Error::Config("backend-feedback needs a [feedback_backend] endpoint".into()))?;
                Some(Box::new(BackendFeedback {
                    backend: RemoteGenerator::new(rc)?,
                    demonstrations: cfg.feedback_demonstrations.clone(),
                }))
            }
        };
        Ok(Scoring {
            value: suite.value_fn()?,
            feedback,
        })
    }

    pub fn task<'a>(&'a self, instances: &'a [crate::types::TaskInstance]) -> Task<'a> {
        Task {
            instances,
            value: self.value.as_ref(),
            feedback: self.feedback.as_deref(),
        }
    }
}

#[derive(Serialize)]
struct RunMeta {
    started_unix: u64,
    finished_unix: u64,
    generator: String,
    version: &'static str,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn absolute(p: &Path) -> PathBuf {
    std::fs::canonicalize(p).unwrap_or_else(|_| p.to_owned())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub run_dir: PathBuf,
    pub metrics: Vec<MetricsRow>,
    pub pool_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub iteration: u32,
    pub pool_size: usize,
    pub pair_count: usize,
    pub mean_pool_value: f64,
    pub eval_value: Option<f64>,
    pub eval_correct_frac: Option<f64>,
}

impl From<&IterationMetrics> for MetricsRow {
    fn from(m: &IterationMetrics) -> Self {
        MetricsRow {
            iteration: m.iteration,
            pool_size: m.pool_size,
            pair_count: m.pair_count,
            mean_pool_value: m.mean_pool_value,
            eval_value: m.eval_value,
            eval_correct_frac: m.eval_correct_frac,
        }
    }
}

/// Trains a corrector and writes every artifact into `run_dir`.
pub fn cmd_train(cfg: &RunConfig, run_dir: &Path) -> Result<TrainSummary> {
    cfg.validate()?;
    let started = now();
    let mut cfg = cfg.clone();
    cfg.suite = absolute(&cfg.suite);
    if let Some(p) = &cfg.external_pool {
        cfg.external_pool = Some(absolute(p));
    }
    if let GeneratorConfig::Toy { run } = &cfg.generator {
        cfg.generator = GeneratorConfig::Toy { run: absolute(run) };
    }
    let suite = Suite::load(&cfg.suite)?;
    let generator = build_generator(&cfg.generator, &suite)?;
    let scoring = Scoring::new(&cfg, &suite)?;
    let external: Vec<Candidate> = match &cfg.external_pool {
        Some(p) => Datapool::read_candidates(p)?,
        None => Vec::new(),
    };

    std::fs::create_dir_all(run_dir).map_err(|e| Error::io(run_dir, e))?;
    let write = |name: &str, text: &str| -> Result<()> {
        let p = run_dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(CONFIG_FILE, &cfg.to_toml())?;

    let metrics_path = run_dir.join(METRICS_FILE);
    let mut metrics_file = std::fs::File::create(&metrics_path).map_err(|e| Error::io(&metrics_path, e))?;
    writeln!(metrics_file, "{}", IterationMetrics::CSV_HEADER).map_err(|e| Error::io(&metrics_path, e))?;

    let settings = cfg.engine_settings();
    let train_task = scoring.task(&suite.train);
    let valid_task = scoring.task(&suite.valid);
    let eval = (!suite.valid.is_empty()).then_some(&valid_task);
    let out = engine::train(&settings, &train_task, generator.as_ref(), &external, eval, &mut |m| {
        writeln!(metrics_file, "{}", m.csv_row())
            .and_then(|_| metrics_file.flush())
            .map_err(|e| Error::io(&metrics_path, e))
    })?;

    out.pool.write(&run_dir.join(DATAPOOL_FILE))?;
    out.model.save(&run_dir.join(PARAMS_FILE), &run_dir.join(VOCAB_FILE))?;
    let meta = RunMeta {
        started_unix: started,
        finished_unix: now(),
        generator: generator.tag(),
        version: env!("CARGO_PKG_VERSION"),
    };
    write(META_FILE, &serde_json::to_string_pretty(&meta).expect("plain record"))?;
    Ok(TrainSummary {
        run_dir: run_dir.to_owned(),
        metrics: out.metrics.iter().map(MetricsRow::from).collect(),
        pool_size: out.pool.len(),
    })
}

/// The config snapshot and trained model of a run.
pub fn load_model(run_dir: &Path) -> Result<(RunConfig, ToyModel)> {
    let cfg_path = run_dir.join(CONFIG_FILE);
    if !cfg_path.exists() {
        return Err(Error::Config(format!("{} is not a run directory (no {CONFIG_FILE})", run_dir.display())));
    }
    let cfg = RunConfig::load(&cfg_path)?;
    for f in [PARAMS_FILE, VOCAB_FILE] {
        if !run_dir.join(f).exists() {
            return Err(Error::Config(format!("run {} has no {f}", run_dir.display())));
        }
    }
    let model = ToyModel::load(&run_dir.join(PARAMS_FILE), &run_dir.join(VOCAB_FILE), &cfg.model)?;
    Ok((cfg, model))
}

/// What to evaluate a trained run against.
#[derive(Clone, Debug, Default)]
pub struct EvalOptions {
    /// Suite directory; the run's own suite when unset.
    pub suite: Option<PathBuf>,
    pub split: Option<Split>,
    /// Replaces the run's generator.
    pub generator: Option<GeneratorConfig>,
    pub max_corrections: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

fn resolve(run_dir: &Path, opts: &EvalOptions) -> Result<(RunConfig, ToyModel, Suite)> {
    let (mut cfg, model) = load_model(run_dir)?;
    if let Some(s) = &opts.suite {
        cfg.suite = s.clone();
    }
    if let Some(g) = &opts.generator {
        cfg.generator = g.clone();
    }
    if let Some(t) = opts.max_corrections {
        cfg.hyper.max_corrections = t;
    }
    if let Some(s) = opts.seed {
        cfg.hyper.seed = s;
    }
    if let Some(w) = opts.workers {
        cfg.workers = w.max(1);
    }
    let suite = Suite::load(&cfg.suite)?;
    Ok((cfg, model, suite))
}

/// Always-correct and oracle-correct metrics on a held-out split
/// (test by default).
pub fn cmd_eval(run_dir: &Path, opts: &EvalOptions) -> Result<EvalReport> {
    let (cfg, model, suite) = resolve(run_dir, opts)?;
    let generator = build_generator(&cfg.generator, &suite)?;
    let scoring = Scoring::new(&cfg, &suite)?;
    let instances = suite.split(opts.split.unwrap_or(Split::Test));
    engine::evaluate(
        &cfg.engine_settings().inference(),
        &scoring.task(instances),
        generator.as_ref(),
        &ToyBackend::corrector(&model),
    )
}

/// Trajectories for the named inputs (ids from any split, or prompt
/// text); every test input when `inputs` is empty.
pub fn cmd_infer(run_dir: &Path, inputs: &[String], opts: &EvalOptions) -> Result<Vec<Trajectory>> {
    let (cfg, model, suite) = resolve(run_dir, opts)?;
    let generator = build_generator(&cfg.generator, &suite)?;
    let scoring = Scoring::new(&cfg, &suite)?;
    let all = suite.all_instances();
    let chosen: Vec<_> = if inputs.is_empty() {
        suite.split(opts.split.unwrap_or(Split::Test)).to_vec()
    } else {
        inputs
            .iter()
            .map(|q| {
                let prompt = crate::seq::tokenize(q);
                all.iter()
                    .find(|i| &i.input_id == q || i.prompt == prompt)
                    .cloned()
                    .ok_or_else(|| Error::Config(format!("no suite input matches {q:?}")))
            })
            .collect::<Result<_>>()?
    };
    let settings = cfg.engine_settings().inference();
    let task = scoring.task(&chosen);
    let corrector = ToyBackend::corrector(&model);
    chosen
        .iter()
        .map(|inst| engine::infer_trajectory(&settings, &task, inst, generator.as_ref(), &corrector))
        .collect()
}
