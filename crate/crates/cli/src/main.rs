//! `gpsens` command-line interface.
//!
//! Results go to stdout as JSON (or CSV for `heat-demo`). Failures print a
//! JSON object `{"error": ..., "kind": ...}` on stderr and exit nonzero.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gpsens::budget::{BudgetOptions, BudgetPlan, KernelRegime};
use gpsens::config::Config;
use gpsens::harness::{run_convergence_check, run_coverage_experiment, CoverageEvaluator};
use gpsens::heat::{simulate_code, simulate_design, HeatConfig};
use gpsens::hyperfit::fit_hyperparameters;
use gpsens::io::{read_design, read_points, write_replicated_design, FittedModel};
use gpsens::sobol::{
    confidence_interval, pick_freeze_sample, try_estimate_sobol, EvaluatorKind, FrozenSet,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "gpsens", version, about = "Sobol indices of stochastic simulators through Gaussian-process surrogates")]
struct Cli {
    /// TOML configuration file with optional sections kernel, search, heat, coverage, convergence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Random seed; overrides any seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit kernel hyperparameters by marginal likelihood and save the model.
    Fit(FitArgs),
    /// Predict mean and MSE of a saved model.
    Predict(PredictArgs),
    /// Estimate a first-order Sobol index of the heat problem.
    Sobol(SobolArgs),
    /// Plan the simulator budget for a Monte-Carlo sample size.
    Plan(PlanArgs),
    /// Emit a replicated training design from the heat simulator as CSV.
    HeatDemo(HeatDemoArgs),
    /// Run the interval-coverage experiment.
    Coverage(CoverageArgs),
    /// Compare finite-data and spectral MSE across design sizes.
    Converge(ConvergeArgs),
}

#[derive(Args)]
struct FitArgs {
    /// Design CSV with x1..xd and rep1..repr (or z) columns.
    #[arg(long)]
    data: PathBuf,
    /// Where to write the fitted model (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Replications behind each averaged `z` value.
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long)]
    n_random: Option<usize>,
    #[arg(long)]
    n_local_starts: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    /// Fitted model written by `fit`.
    #[arg(long)]
    model: PathBuf,
    /// CSV of query points with columns x1..xd.
    #[arg(long, conflicts_with = "x")]
    points: Option<PathBuf>,
    /// A single query point, comma separated; may be repeated.
    #[arg(long, value_delimiter = ',', num_args = 1.., action = clap::ArgAction::Append)]
    x: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SobolEvaluator {
    /// Closed-form solution.
    Exact,
    /// Mean of a fitted model (`--model`).
    Surrogate,
    /// Noisy simulator runs.
    Code,
}

#[derive(Args)]
struct SobolArgs {
    /// Frozen coordinates, numbered from 1 (comma separated).
    #[arg(long, value_delimiter = ',', required = true)]
    frozen: Vec<usize>,
    #[arg(long, default_value_t = 10_000)]
    m: usize,
    #[arg(long, default_value_t = 0.9)]
    level: f64,
    #[arg(long, value_enum, default_value_t = SobolEvaluator::Exact)]
    evaluator: SobolEvaluator,
    /// Fitted model for the surrogate evaluator.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Code replications averaged per evaluation for the code evaluator.
    #[arg(long, default_value_t = 1)]
    replications: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanRegime {
    /// Gaussian kernel, Lebesgue-type bound (`--d`).
    Gaussian,
    /// Gaussian kernel under a Gaussian design measure (`--xi`).
    GaussianMeasure,
    /// Tensorised Matérn (`--nu`, `--d`).
    Matern,
    /// Pilot-fit extrapolation (`--pilot-imse`, `--pilot-t`).
    Pilot,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, value_enum)]
    regime: Option<PlanRegime>,
    #[arg(long)]
    m: f64,
    #[arg(long = "sigma-eps2")]
    sigma_eps2: f64,
    #[arg(long, default_value_t = 1)]
    d: usize,
    #[arg(long, default_value_t = 1.5)]
    nu: f64,
    #[arg(long)]
    xi: Option<f64>,
    #[arg(long)]
    pilot_imse: Option<f64>,
    #[arg(long = "pilot-T", alias = "pilot-t")]
    pilot_t: Option<f64>,
    /// Drop the second noise-variance factor of the Matérn formula.
    #[arg(long)]
    single_noise_factor: bool,
}

#[derive(Args)]
struct HeatDemoArgs {
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 1)]
    r: usize,
    /// Write to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum CoverageEvaluatorArg {
    Spectral,
    Blup,
    Exact,
}

#[derive(Args)]
struct CoverageArgs {
    #[arg(long, value_enum)]
    evaluator: Option<CoverageEvaluatorArg>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    /// Also write the per-index table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ConvergeArgs {
    #[arg(long)]
    budget: Option<f64>,
    #[arg(long = "sigma-eps2")]
    sigma_eps2: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    levels: Option<Vec<usize>>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_config(path: Option<&Path>) -> anyhow::Result<Config> {
    match path {
        Some(p) => Config::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(Config::default()),
    }
}

fn print_json<T: Serialize>(value: &T) -> anyhow::Result<()> {
    let stdout = io::stdout();
    let mut out = stdout.lock();
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let config = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Fit(args) => fit(args, config, cli.seed),
        Command::Predict(args) => predict(args),
        Command::Sobol(args) => sobol(args, config, cli.seed.unwrap_or(0)),
        Command::Plan(args) => plan(args),
        Command::HeatDemo(args) => heat_demo(args, config.heat, cli.seed.unwrap_or(0)),
        Command::Coverage(args) => coverage(args, config, cli.seed),
        Command::Converge(args) => converge(args, config, cli.seed),
    }
}

fn fit(args: FitArgs, config: Config, seed: Option<u64>) -> anyhow::Result<()> {
    let file = File::open(&args.data).with_context(|| format!("opening {}", args.data.display()))?;
    let design = read_design(BufReader::new(file))?;
    // Placeholder noise variance; the fit estimates it.
    let initial_noise = design.pooled_noise_variance().filter(|v| *v > 0.0).unwrap_or(1.0);
    let data = design.into_training_set(args.replications, initial_noise)?;
    let mut search = config.search;
    if let Some(s) = seed {
        search.seed = s;
    }
    if let Some(n) = args.n_random {
        search.n_random = n;
    }
    if let Some(n) = args.n_local_starts {
        search.n_local_starts = n;
    }
    let report = fit_hyperparameters(&data, &search)?;
    let data = data.with_noise_variance(report.params.noise_variance)?;
    let model = FittedModel::new(&data, report.params.kernel()?, Some(report.log_likelihood));
    let out = File::create(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(out), &model)?;
    print_json(&report)
}

fn load_model(path: &Path) -> anyhow::Result<FittedModel> {
    let file = File::open(path).with_context(|| format!("opening model {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing model {}", path.display()))
}

fn predict(args: PredictArgs) -> anyhow::Result<()> {
    let fitted = load_model(&args.model)?;
    let model = fitted.to_gp_model()?;
    let d = model.dim();
    let points = match &args.points {
        Some(p) => {
            let file = File::open(p).with_context(|| format!("opening {}", p.display()))?;
            read_points(BufReader::new(file))?
        }
        None => {
            if args.x.is_empty() || !args.x.len().is_multiple_of(d) {
                bail!(gpsens::Error::DimensionMismatch {
                    expected: d,
                    got: args.x.len(),
                });
            }
            args.x.chunks(d).map(<[f64]>::to_vec).collect()
        }
    };
    let rows = points
        .iter()
        .map(|x| {
            let p = model.predict(x)?;
            Ok(json!({ "x": x, "mean": p.mean, "mse": p.mse }))
        })
        .collect::<gpsens::Result<Vec<_>>>()?;
    print_json(&rows)
}

fn sobol(args: SobolArgs, config: Config, seed: u64) -> anyhow::Result<()> {
    let heat = config.heat;
    let d = heat.dim();
    let frozen = FrozenSet::from_one_based(d, &args.frozen)?;
    let measure = heat.measure()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sample = pick_freeze_sample(&measure, &frozen, args.m, &mut rng)?;
    let est = match args.evaluator {
        SobolEvaluator::Exact => try_estimate_sobol(
            |x| Ok(heat.solution_unchecked(x)),
            &sample,
            EvaluatorKind::Exact,
        )?,
        SobolEvaluator::Surrogate => {
            let path = args
                .model
                .as_ref()
                .ok_or_else(|| anyhow!("the surrogate evaluator needs --model"))?;
            let model = load_model(path)?.to_gp_model()?;
            if model.dim() != d {
                bail!(gpsens::Error::DimensionMismatch {
                    expected: d,
                    got: model.dim(),
                });
            }
            try_estimate_sobol(|x| model.predict_mean(x), &sample, EvaluatorKind::Surrogate)?
        }
        SobolEvaluator::Code => {
            let mut code_rng = ChaCha8Rng::seed_from_u64(seed);
            code_rng.set_stream(1);
            let r = args.replications;
            try_estimate_sobol(
                |x| {
                    let out = simulate_code(&heat, x, r, &mut code_rng)?;
                    Ok(out.iter().sum::<f64>() / r as f64)
                },
                &sample,
                EvaluatorKind::Code,
            )?
        }
    };
    let (lo, hi) = confidence_interval(&est, args.level)?;
    print_json(&json!({
        "index": est.index,
        "variance": est.variance,
        "ci_lo": lo,
        "ci_hi": hi,
        "m": est.m,
        "level": args.level,
        "frozen": args.frozen,
        "evaluator": est.evaluator,
    }))
}

fn plan(args: PlanArgs) -> anyhow::Result<()> {
    let regime = match (args.regime, args.pilot_imse.is_some() || args.pilot_t.is_some()) {
        (Some(r), _) => r,
        (None, true) => PlanRegime::Pilot,
        (None, false) => bail!("--regime is required unless pilot values are given"),
    };
    let options = BudgetOptions {
        matern_single_noise_factor: args.single_noise_factor,
    };
    let plan = match regime {
        PlanRegime::Gaussian => BudgetPlan::critical(
            KernelRegime::GaussianLebesgue { d: args.d },
            args.m,
            args.sigma_eps2,
            options,
        )?,
        PlanRegime::GaussianMeasure => {
            let xi = args
                .xi
                .ok_or_else(|| anyhow!("--regime gaussian-measure needs --xi"))?;
            BudgetPlan::critical(KernelRegime::GaussianMeasure { xi }, args.m, args.sigma_eps2, options)?
        }
        PlanRegime::Matern => BudgetPlan::critical(
            KernelRegime::MaternTensor {
                nu: args.nu,
                d: args.d,
            },
            args.m,
            args.sigma_eps2,
            options,
        )?,
        PlanRegime::Pilot => {
            let (Some(imse), Some(t0)) = (args.pilot_imse, args.pilot_t) else {
                bail!("--regime pilot needs --pilot-imse and --pilot-T");
            };
            BudgetPlan::from_pilot(imse, t0, args.sigma_eps2, args.m)?
        }
    };
    print_json(&plan)
}

fn heat_demo(args: HeatDemoArgs, heat: HeatConfig, seed: u64) -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (points, raw) = simulate_design(&heat, args.n, args.r, &mut rng)?;
    match &args.out {
        Some(p) => {
            let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
            write_replicated_design(BufWriter::new(file), &points, &raw)?;
        }
        None => write_replicated_design(io::stdout().lock(), &points, &raw)?,
    }
    Ok(())
}

fn coverage(args: CoverageArgs, config: Config, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = config.coverage;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(e) = args.evaluator {
        cfg.evaluator = match e {
            CoverageEvaluatorArg::Spectral => CoverageEvaluator::Spectral,
            CoverageEvaluatorArg::Blup => CoverageEvaluator::Blup,
            CoverageEvaluatorArg::Exact => CoverageEvaluator::Exact,
        };
    }
    if let Some(r) = args.replicates {
        cfg.replicates = r;
    }
    if let Some(l) = args.level {
        cfg.level = l;
    }
    let report = run_coverage_experiment(&cfg)?;
    if let Some(p) = &args.csv {
        let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        report.write_csv(BufWriter::new(file))?;
    }
    print_json(&report)
}

fn converge(args: ConvergeArgs, config: Config, seed: Option<u64>) -> anyhow::Result<()> {
    let mut cfg = config.convergence;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(t) = args.budget {
        cfg.budget = t;
    }
    if let Some(v) = args.sigma_eps2 {
        cfg.noise_variance = v;
    }
    if let Some(l) = args.levels {
        cfg.levels = l;
    }
    let report = run_convergence_check(&cfg)?;
    if let Some(p) = &args.csv {
        let file = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        report.write_csv(BufWriter::new(file))?;
    }
    print_json(&report)
}

fn error_kind(err: &anyhow::Error) -> &'static str {
    if let Some(e) = err.downcast_ref::<gpsens::Error>() {
        e.kind()
    } else if err.downcast_ref::<serde_json::Error>().is_some() {
        "json"
    } else if err.downcast_ref::<io::Error>().is_some() {
        "io"
    } else {
        "usage"
    }
}

fn report_error(kind: &str, message: String) {
    let body = json!({ "error": message, "kind": kind });
    eprintln!("{body}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            report_error("usage", e.to_string().trim_end().to_owned());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report_error(error_kind(&e), format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}
