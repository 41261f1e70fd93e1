use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use selfcorr::backends::{http::HttpConfig, OutputFormat, RemoteGeneratorConfig};
use selfcorr::config::{GeneratorConfig, RunConfig};
use selfcorr::engine::EvalReport;
use selfcorr::run::{self, EvalOptions};
use selfcorr::suite::{Split, Suite, SuiteKind, SuiteSpec};
use selfcorr::{Error, Result};

#[derive(Parser)]
#[command(name = "selfcorr", version, about = "Train and apply self-correctors for sequence generation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic task suite.
    GenSuite(GenSuiteArgs),
    /// Train a corrector; writes a run directory.
    Train(TrainArgs),
    /// Evaluate a trained corrector in always- and oracle-correct modes.
    Eval(EvalArgs),
    /// Print correction trajectories.
    Infer(InferArgs),
}

#[derive(Args)]
struct GenSuiteArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: SuiteKind,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    valid: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    min_constraints: Option<usize>,
    #[arg(long)]
    max_constraints: Option<usize>,
    /// Scorer lexicon (TOML) for open-scored suites.
    #[arg(long)]
    lexicon: Option<PathBuf>,
}

fn parse_kind(s: &str) -> std::result::Result<SuiteKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Run directory to create.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// no-proportional, no-value-pairing or no-exploration; repeatable.
    #[arg(long)]
    ablate: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    n_samples: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    learn_steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_corrections: Option<usize>,
    #[arg(long, conflicts_with = "no_target")]
    target_value: Option<f64>,
    /// Never stop trajectories early.
    #[arg(long)]
    no_target: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum GeneratorKind {
    Toy,
    Scripted,
    Remote,
}

#[derive(Args)]
struct GeneratorArgs {
    /// Replace the run's base generator.
    #[arg(long, value_enum)]
    generator: Option<GeneratorKind>,
    /// Run whose model serves as the toy generator; defaults to the run itself.
    #[arg(long)]
    generator_run: Option<PathBuf>,
    /// Completions endpoint for the remote generator.
    #[arg(long)]
    endpoint: Option<String>,
    /// Edit rate for the scripted generator.
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    /// Suite directory; defaults to the run's suite.
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    #[command(flatten)]
    gen: GeneratorArgs,
    #[arg(long)]
    max_corrections: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Also write the per-step value curve as CSV.
    #[arg(long)]
    curve_out: Option<PathBuf>,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    run: PathBuf,
    /// Input id or prompt text; repeatable. Defaults to the whole split.
    #[arg(long)]
    input: Vec<String>,
    #[arg(long)]
    suite: Option<PathBuf>,
    #[arg(long, value_parser = parse_split, default_value = "test")]
    split: Split,
    #[command(flatten)]
    gen: GeneratorArgs,
    #[arg(long)]
    max_corrections: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSuite(a) => gen_suite(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
        Command::Infer(a) => infer(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen_suite(a: GenSuiteArgs) -> Result<()> {
    let mut spec = SuiteSpec {
        kind: a.kind,
        ..Default::default()
    };
    if a.kind != SuiteKind::MathCorrupt {
        spec.rho = 0.2;
    }
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { spec.$f = v; } )* };
    }
    set!(seed, train, valid, test, rho, min_constraints, max_constraints);
    spec.lexicon = a.lexicon;
    let suite = Suite::generate(&spec)?;
    suite.write(&a.out)?;
    println!(
        "wrote {} suite to {} ({} train, {} valid, {} test)",
        serde_json::to_value(spec.kind).expect("enum").as_str().unwrap_or_default(),
        a.out.display(),
        suite.train.len(),
        suite.valid.len(),
        suite.test.len()
    );
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    let h = &mut cfg.hyper;
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { h.$f = v; } )* };
    }
    set!(seed, alpha, beta, n_samples, iterations, learn_steps, batch_size, max_corrections);
    if a.no_target {
        h.target_value = None;
    } else if let Some(t) = a.target_value {
        h.target_value = Some(t);
    }
    for name in &a.ablate {
        cfg.ablations.enable(name)?;
    }
    if let Some(w) = a.workers {
        cfg.workers = w;
    }
    let summary = run::cmd_train(&cfg, &a.out)?;
    if a.json {
        println!("{}", serde_json::to_string(&summary).expect("plain record"));
    } else {
        for m in &summary.metrics {
            let opt = |v: Option<f64>| v.map_or("-".to_owned(), |x| format!("{x:.4}"));
            println!(
                "iteration {}: pool {} pairs {} mean value {:.4} eval {} correct {}",
                m.iteration,
                m.pool_size,
                m.pair_count,
                m.mean_pool_value,
                opt(m.eval_value),
                opt(m.eval_correct_frac)
            );
        }
        println!("run written to {}", summary.run_dir.display());
    }
    Ok(())
}

fn generator_override(run_dir: &std::path::Path, g: &GeneratorArgs) -> Result<Option<GeneratorConfig>> {
    if g.generator.is_none() && (g.endpoint.is_some() || g.generator_run.is_some() || g.rho.is_some()) {
        return Err(Error::Config("--endpoint, --generator-run and --rho need --generator".into()));
    }
    Ok(match g.generator {
        None => None,
        Some(GeneratorKind::Scripted) => Some(GeneratorConfig::Scripted { rho: g.rho }),
        Some(GeneratorKind::Toy) => Some(GeneratorConfig::Toy {
            run: g.generator_run.clone().unwrap_or_else(|| run_dir.to_owned()),
        }),
        Some(GeneratorKind::Remote) => {
            let url = g
                .endpoint
                .clone()
                .ok_or_else(|| Error::Config("--generator remote needs --endpoint".into()))?;
            let (cfg, _) = run::load_model(run_dir)?;
            let suite = Suite::load(&cfg.suite)?;
            Some(GeneratorConfig::Remote(RemoteGeneratorConfig {
                endpoint: HttpConfig {
                    url,
                    ..Default::default()
                },
                output: match suite.spec.kind {
                    SuiteKind::MathCorrupt => OutputFormat::Program,
                    _ => OutputFormat::Text,
                },
            }))
        }
    })
}

fn print_report(r: &EvalReport) {
    println!("{:<9} {:>10} {:>12}", "mode", "mean_value", "correct_frac");
    for (name, m) in [("baseline", &r.baseline), ("always", &r.always), ("oracle", &r.oracle)] {
        println!("{name:<9} {:>10.4} {:>12.4}", m.mean_value, m.correct_frac);
    }
    print!("{}", r.curve_csv());
}

fn eval(a: EvalArgs) -> Result<()> {
    let opts = EvalOptions {
        suite: a.suite.clone(),
        split: Some(a.split),
        generator: generator_override(&a.run, &a.gen)?,
        max_corrections: a.max_corrections,
        seed: a.seed,
        workers: a.workers,
    };
    let report = run::cmd_eval(&a.run, &opts)?;
    if let Some(p) = &a.curve_out {
        std::fs::write(p, report.curve_csv()).map_err(|e| Error::io(p, e))?;
    }
    if a.json {
        println!("{}", serde_json::to_string(&report).expect("plain record"));
    } else {
        print_report(&report);
    }
    Ok(())
}

fn infer(a: InferArgs) -> Result<()> {
    let opts = EvalOptions {
        suite: a.suite.clone(),
        split: Some(a.split),
        generator: generator_override(&a.run, &a.gen)?,
        max_corrections: a.max_corrections,
        seed: a.seed,
        workers: None,
    };
    for t in run::cmd_infer(&a.run, &a.input, &opts)? {
        if a.json {
            println!("{}", serde_json::to_string(&t).expect("plain record"));
            continue;
        }
        for (i, s) in t.steps.iter().enumerate() {
            println!(
                "{}\t{i}\t{:.4}\t{}\t{}",
                t.input_id,
                s.value,
                s.feedback.as_deref().unwrap_or("-"),
                s.output
            );
        }
    }
    Ok(())
}
