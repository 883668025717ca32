//! `pmcjump` command-line tool.
//!
//! Exit status: 0 on success, 1 when a model fails validation or a check
//! fails, 2 on usage and I/O errors.

mod data;
mod verify;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pmcjump::experiment::{settings, ScenarioSpec};
use pmcjump::filters::{run_imm, run_rbpf, JumpFilter, Resampling};
use pmcjump::model::ModelDocument;
use pmcjump::simulate::{rng_from_seed, simulate};
use pmcjump::{
    run_experiment, validate_model, ConditionalPmcModel, EstimatorKind, ScenarioConfig, ScenarioName,
};

#[derive(Parser)]
#[command(name = "pmcjump", version, about = "Exact filtering for pairwise Markov models with regime jumps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check that a model is admissible and exactly filterable.
    Validate(ModelArgs),
    /// Draw one trajectory and write it as CSV.
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 100)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one estimator over an observation file.
    Filter {
        #[command(flatten)]
        model: ModelArgs,
        /// CSV whose `y1..yp` columns hold the observations (a trajectory
        /// file from `simulate` works as is).
        #[arg(long)]
        observations: PathBuf,
        /// jump, imm, rbpf or kalman (needs an `r` column unless K = 1).
        #[arg(long, default_value = "jump")]
        estimator: String,
        #[arg(long, default_value_t = 100)]
        particles: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo experiment; writes mse_curve.csv, summary.csv and, for
    /// the sweep, kld_curve.csv.
    Experiment(ExperimentArgs),
    /// Compare the jump filter and the pairwise Kalman filter with the
    /// enumeration and batch oracles.
    Verify {
        /// Largest number of regime sequences to enumerate.
        #[arg(long, default_value_t = pmcjump::oracle::DEFAULT_BUDGET)]
        budget: u128,
        #[arg(long, default_value_t = 8)]
        horizon: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Model JSON file.
    #[arg(long, conflicts_with = "scenario", required_unless_present = "scenario")]
    model: Option<PathBuf>,
    /// Built-in scenario: scalar-jump, tracking-jmss or tracking-pmc.
    #[arg(long)]
    scenario: Option<String>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON config; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, conflicts_with = "model")]
    scenario: Option<String>,
    /// Model JSON used both to generate data and to filter.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated estimator names.
    #[arg(long, value_delimiter = ',')]
    estimators: Option<Vec<String>>,
    #[arg(long)]
    particles: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, env = "PMCJUMP_WORKERS")]
    workers: Option<usize>,
}

/// Failure with the exit status it maps to.
enum Failure {
    Check(String),
    Usage(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Check(m) | Failure::Usage(m) => f.write_str(m),
        }
    }
}

impl From<pmcjump::Error> for Failure {
    fn from(e: pmcjump::Error) -> Self {
        use pmcjump::Error::*;
        match e {
            Io(_) | Json(_) | InvalidConfig(_) | DimensionMismatch { .. } => Failure::Usage(e.to_string()),
            _ => Failure::Check(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn read_to_string(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn load_document(path: &Path) -> Result<ModelDocument, Failure> {
    ModelDocument::from_json(&read_to_string(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_scenario(name: &str) -> Result<ScenarioName, Failure> {
    name.parse().map_err(|e: pmcjump::Error| usage(e.to_string()))
}

/// `(data model, filter model)` for the model flags.
fn resolve_models(args: &ModelArgs) -> Result<(ConditionalPmcModel, ConditionalPmcModel), Failure> {
    match (&args.model, &args.scenario) {
        (Some(path), _) => {
            let model = load_document(path)?.into_model()?;
            Ok((model.clone(), model))
        }
        (None, Some(name)) => {
            let name = parse_scenario(name)?;
            if name == ScenarioName::ScalarHmcSweep {
                return Err(usage("the sweep has one model per Q; use it with `experiment`"));
            }
            let mut s = settings(&ScenarioConfig::named(name))?;
            let s = s.remove(0);
            Ok((s.data_model, s.filter_model))
        }
        (None, None) => Err(usage("one of --model or --scenario is required")),
    }
}

fn cmd_validate(args: &ModelArgs) -> Outcome {
    let (data, filter) = resolve_models(args)?;
    let models = if args.model.is_some() {
        vec![("model", filter)]
    } else {
        vec![("data model", data), ("filter model", filter)]
    };
    let mut ok = true;
    for (label, model) in models {
        let report = validate_model(&model);
        println!(
            "{label}: K = {}, m = {}, p = {}; {}, {}",
            model.k(),
            model.state_dim(),
            model.obs_dim(),
            if report.passed() { "valid" } else { "INVALID" },
            if report.exactly_filterable() { "exactly filterable" } else { "not exactly filterable" }
        );
        for pair in &report.pairs {
            println!(
                "  pair ({}, {}): pd margin {:.3e}{}, invariance residual {:.1e}{}, constraint residual {:.1e}{}",
                pair.from + 1,
                pair.to + 1,
                pair.pd_margin,
                if pair.pd_ok { "" } else { " FAIL" },
                pair.invariance_residual,
                if pair.invariance_ok { "" } else { " FAIL" },
                pair.constraint_residual,
                match (pair.constraint_required, pair.constraint_ok) {
                    (false, _) => " (not required)",
                    (true, true) => "",
                    (true, false) => " FAIL",
                },
            );
        }
        for w in &report.warnings {
            println!("  warning: {w}");
        }
        ok &= report.passed();
    }
    if ok {
        Ok(())
    } else {
        Err(Failure::Check("validation failed".into()))
    }
}

fn cmd_simulate(args: &ModelArgs, horizon: usize, seed: u64, out: &Path) -> Outcome {
    let (data, _) = resolve_models(args)?;
    let traj = simulate(&data, horizon, seed)?;
    let mut file = std::fs::File::create(out).map_err(|e| usage(format!("{}: {e}", out.display())))?;
    traj.write_csv(&mut file)?;
    Ok(())
}

fn cmd_filter(
    args: &ModelArgs,
    obs_path: &Path,
    estimator: &str,
    particles: usize,
    seed: u64,
    out: &Path,
) -> Outcome {
    let estimator: EstimatorKind = estimator.parse().map_err(|e: pmcjump::Error| usage(e.to_string()))?;
    let (_, model) = resolve_models(args)?;
    let obs = data::read_observations(obs_path, model.obs_dim())?;
    let estimates = match estimator {
        EstimatorKind::Jump => JumpFilter::new(&model)?.run(&obs.ys, |_| {})?,
        EstimatorKind::Imm => run_imm(&model, &obs.ys)?,
        EstimatorKind::Rbpf => {
            let mut rng = rng_from_seed(seed);
            run_rbpf(&model, &obs.ys, particles, Resampling::Multinomial, &mut rng)?
        }
        EstimatorKind::Kalman | EstimatorKind::PmcKalman => {
            let regimes = match (&obs.regimes, model.k()) {
                (Some(r), _) => r.clone(),
                (None, 1) => vec![0; obs.ys.len()],
                (None, _) => return Err(usage("the kalman estimator needs an `r` column when K > 1")),
            };
            if let Some(&bad) = regimes.iter().find(|&&r| r >= model.k()) {
                return Err(usage(format!("regime {} in `r` column exceeds K = {}", bad + 1, model.k())));
            }
            data::kalman_estimates(&model, &regimes, &obs.ys)?
        }
    };
    data::write_estimates(out, &estimates)
}

fn build_config(args: &ExperimentArgs) -> Result<ScenarioConfig, Failure> {
    let mut config = match &args.config {
        Some(path) => ScenarioConfig::from_json(&read_to_string(path)?)
            .map_err(|e| usage(format!("{}: {e}", path.display())))?,
        None => {
            if args.scenario.is_none() && args.model.is_none() {
                return Err(usage("give --config, --scenario or --model"));
            }
            ScenarioConfig::named(ScenarioName::ScalarJump)
        }
    };
    if let Some(name) = &args.scenario {
        config.scenario = ScenarioSpec::Named(parse_scenario(name)?);
    }
    if let Some(path) = &args.model {
        config.scenario = ScenarioSpec::Inline {
            model: Box::new(load_document(path)?),
            filter_model: None,
        };
    }
    if let Some(p) = args.runs {
        config.runs = p;
    }
    if let Some(t) = args.horizon {
        config.horizon = t;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(names) = &args.estimators {
        let parsed = names
            .iter()
            .map(|n| n.trim().parse::<EstimatorKind>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| usage(e.to_string()))?;
        config.estimators = Some(parsed);
    }
    if let Some(n) = args.particles {
        config.particles = n;
    }
    if let Some(out) = &args.out {
        config.output_dir = Some(out.clone());
    }
    config.validate()?;
    Ok(config)
}

fn cmd_experiment(args: &ExperimentArgs) -> Outcome {
    let config = build_config(args)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.workers {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| usage(e.to_string()))?;
    let result = pool.install(|| run_experiment(&config))?;
    let dir = config.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
    for path in result.write_outputs(&dir)? {
        println!("wrote {}", path.display());
    }
    println!("{:<14} {:<11} {:>12} {:>9} {:>10} {:>11}", "setting", "estimator", "J", "relRMSE", "norm. MSE", "time/run s");
    for s in &result.settings {
        for r in &s.summary {
            println!(
                "{:<14} {:<11} {:>12.5e} {:>9.4} {:>10.4} {:>11.3e}",
                s.label,
                r.estimator.to_string(),
                r.j, r.rel_rmse, r.normalized_mse, r.avg_time_s
            );
        }
    }
    for p in &result.kld_curve {
        println!("Q = {:>5}: relative RMSE {:.4}, mean KLD {:.4}", p.q, p.rmse, p.kld);
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match &cli.command {
        Command::Validate(args) => cmd_validate(args),
        Command::Simulate { model, horizon, seed, out } => cmd_simulate(model, *horizon, *seed, out),
        Command::Filter {
            model,
            observations,
            estimator,
            particles,
            seed,
            out,
        } => cmd_filter(model, observations, estimator, *particles, *seed, out),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Verify { budget, horizon, seed } => verify::run(*budget, *horizon, *seed),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
