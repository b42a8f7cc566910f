//! `dpgmm`: fit, plan, release, evaluate, sample and audit differentially
//! private Gaussian mixture models from the command line.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use dpgmm_core::adjacency::{self, AdjacencyKind, AdjacencyMode};
use dpgmm_core::audit::{self, AuditOptions};
use dpgmm_core::divergence;
use dpgmm_core::experiments::{self, SweepSpec, SweepVariable};
use dpgmm_core::mechanisms::{self, ReleasedGmm};
use dpgmm_core::model::{self, GmmParams, LabeledDataset};
use dpgmm_core::planner::{self, NoisePlan, PlanOptions, PrivacySpec};

#[derive(Debug, Parser)]
#[command(name = "dpgmm", version, about = "Differentially private Gaussian mixture model release")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a GMM from class histograms and sample statistics.
    Fit(FitArgs),
    /// Calibrate the noise for a fitted model under an (ε, δ) budget.
    Plan(PlanArgs),
    /// Draw one private release of the model according to a plan.
    Release(ReleaseArgs),
    /// Report the expected KL divergence of a plan.
    Evaluate(EvaluateArgs),
    /// Draw synthetic rows from a released model.
    Sample(SampleArgs),
    /// Re-check the privacy conditions of a plan and test its weight sampler.
    Audit(AuditArgs),
    /// Run a synthetic sweep and write raw and summary CSV tables.
    Experiment(ExperimentArgs),
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_f64(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be positive and finite, got {v}"))
    }
}

fn open_unit(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e: std::num::ParseFloatError| e.to_string())?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie strictly between 0 and 1, got {v}"))
    }
}

#[derive(Debug, Args)]
struct FitArgs {
    /// Dataset CSV (`f0,...,f{d-1}[,label]`).
    #[arg(long)]
    input: PathBuf,
    /// Number of mixture components.
    #[arg(long, value_parser = positive_usize)]
    k: usize,
    /// Assign labels with k-means instead of reading the label column.
    #[arg(long)]
    kmeans: bool,
    /// Clip every record to this Euclidean norm before fitting.
    #[arg(long, value_parser = positive_f64)]
    clip: Option<f64>,
    /// Seed for k-means initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the (clipped, labeled) dataset the model was fitted on.
    #[arg(long)]
    write_labeled: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct PlanArgs {
    /// Fitted model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Labeled dataset the model was fitted on.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_parser = positive_f64)]
    epsilon: f64,
    #[arg(long, value_parser = open_unit)]
    delta: f64,
    /// Weight of the uniform smoothing branch.
    #[arg(long, value_parser = open_unit, default_value_t = 1e-3)]
    lambda: f64,
    /// label, remove, add or feature.
    #[arg(long, default_value = "label")]
    adjacency: AdjacencyKind,
    /// Record norm bound B (clips the dataset before enumerating neighbors).
    #[arg(long, value_parser = positive_f64)]
    clip: Option<f64>,
    /// Use the data-independent mean-shift radius instead of the enumerated
    /// neighbors.
    #[arg(long, requires = "clip")]
    uniform_bound: bool,
    /// Initial share of ε for the weights and for each ε_k.
    #[arg(long, default_value_t = 1.0 / 3.0)]
    eps0_frac: f64,
    #[arg(long, value_parser = positive_usize, default_value_t = 50)]
    max_iter: usize,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ReleaseArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Also estimate the expectation from this many simulated releases.
    #[arg(long, value_parser = positive_usize)]
    mc: Option<usize>,
    /// Uniform lattice draws for the smoothing-branch correction (0 skips it).
    #[arg(long, default_value_t = divergence::LAMBDA_DRAWS)]
    lambda_draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Released model JSON.
    #[arg(long)]
    released: PathBuf,
    /// Number of rows.
    #[arg(short = 'n', long = "n", value_parser = positive_usize)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Labeled dataset the model was fitted on.
    #[arg(long)]
    input: PathBuf,
    /// Draws for the weight-sampler frequency test.
    #[arg(long, value_parser = positive_usize, default_value_t = 100_000)]
    draws: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also fail when the smoothed weight mechanism exceeds the declared ε₀.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// epsilon, n, k or d.
    #[arg(long)]
    variable: SweepVariable,
    /// Comma-separated grid values.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    #[arg(long, value_parser = positive_usize, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = positive_usize, default_value_t = 5)]
    k: usize,
    #[arg(long, value_parser = positive_usize, default_value_t = 3)]
    d: usize,
    #[arg(long, value_parser = positive_usize, default_value_t = 1000)]
    n: usize,
    #[arg(long, value_parser = positive_f64, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, value_parser = open_unit, default_value_t = 1e-5)]
    delta: f64,
    #[arg(long, value_parser = open_unit, default_value_t = 1e-3)]
    lambda: f64,
    /// Directory for raw.csv and summary.csv.
    #[arg(long)]
    output_dir: PathBuf,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn load_model(path: &Path) -> Result<GmmParams> {
    GmmParams::from_json(&read(path)?).with_context(|| format!("loading model {}", path.display()))
}

fn load_plan(path: &Path) -> Result<NoisePlan> {
    NoisePlan::from_json(&read(path)?).with_context(|| format!("loading plan {}", path.display()))
}

/// Loads the labeled dataset behind `fit`, clipped like the fit was, and
/// checks that the two agree.
fn load_matching_dataset(path: &Path, fit: &GmmParams, clip: Option<f64>) -> Result<LabeledDataset> {
    let data = model::load_dataset(path, fit.k()).with_context(|| format!("loading dataset {}", path.display()))?;
    let data = match clip {
        Some(b) => adjacency::clip_dataset(&data, b)?,
        None => data,
    };
    if data.d() != fit.d() {
        bail!("dataset has {} features but the model has {}", data.d(), fit.d());
    }
    if data.class_sizes() != fit.counts.counts() {
        bail!(
            "dataset class sizes {:?} do not match the model counts {:?}",
            data.class_sizes(),
            fit.counts.counts()
        );
    }
    Ok(data)
}

fn cmd_fit(args: FitArgs) -> Result<()> {
    let table = model::read_table(&args.input).with_context(|| format!("loading dataset {}", args.input.display()))?;
    let data = if args.kmeans {
        let points = match args.clip {
            Some(b) => adjacency::clip_points(&table.points, b)?,
            None => table.points,
        };
        let labels = model::kmeans_label(&points, args.k, args.seed, 300)?;
        LabeledDataset::new(points, labels, args.k)?
    } else {
        let data = model::dataset_from_table(table, args.k)?;
        match args.clip {
            Some(b) => adjacency::clip_dataset(&data, b)?,
            None => data,
        }
    };
    let fit = model::fit_gmm(&data)?;
    if let Some(path) = &args.write_labeled {
        data.write_csv(path).with_context(|| format!("writing {}", path.display()))?;
    }
    write(&args.output, &fit.to_json()?)
}

fn cmd_plan(args: PlanArgs) -> Result<()> {
    let fit = load_model(&args.model)?;
    let mode = AdjacencyMode::new(args.adjacency, args.clip)?;
    let data = load_matching_dataset(&args.input, &fit, args.clip)?;
    let spec = PrivacySpec::new(args.epsilon, args.delta, args.lambda, mode)?;
    let adj = adjacency::enumerate(&data, &fit, mode)?;
    let options = PlanOptions {
        max_iter: args.max_iter,
        eps0_frac: args.eps0_frac,
        uniform_bound: args.uniform_bound,
        ..PlanOptions::default()
    };
    let plan = planner::plan(&fit, &adj, &spec, &options)?;
    write(&args.output, &plan.to_json()?)
}

fn cmd_release(args: ReleaseArgs) -> Result<()> {
    let fit = load_model(&args.model)?;
    let plan = load_plan(&args.plan)?;
    let released = mechanisms::release(&fit, &plan, args.seed)?;
    write(&args.output, &released.to_json()?)
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let fit = load_model(&args.model)?;
    let plan = load_plan(&args.plan)?;
    let mut report = divergence::expected_kl(&fit, &plan, args.lambda_draws, args.seed)?;
    if let Some(trials) = args.mc {
        let (mean, stderr) = divergence::monte_carlo_expected_kl(&fit, &plan, trials, args.seed)?;
        report.mc_estimate = Some(mean);
        report.mc_stderr = Some(stderr);
    }
    write(&args.output, &serde_json::to_string_pretty(&report)?)
}

fn cmd_sample(args: SampleArgs) -> Result<()> {
    let released = ReleasedGmm::from_json(&read(&args.released)?)
        .with_context(|| format!("loading released model {}", args.released.display()))?;
    let data = mechanisms::sample_dataset(&released.as_gmm(), args.n, args.seed)?;
    data.write_csv(&args.output)
        .with_context(|| format!("writing {}", args.output.display()))?;
    Ok(())
}

fn cmd_audit(args: AuditArgs) -> Result<bool> {
    let fit = load_model(&args.model)?;
    let plan = load_plan(&args.plan)?;
    let spec = plan.spec()?;
    let data = load_matching_dataset(&args.input, &fit, spec.mode.clip_bound)?;
    let adj = adjacency::enumerate(&data, &fit, spec.mode)?;
    let options = AuditOptions {
        draws: args.draws,
        seed: args.seed,
        strict: args.strict,
    };
    let report = audit::audit(&plan, &adj, &spec, &options)?;
    write(&args.output, &serde_json::to_string_pretty(&report)?)?;
    for failure in &report.hard_failures {
        eprintln!("audit failure: {failure}");
    }
    Ok(report.passed)
}

fn cmd_experiment(args: ExperimentArgs) -> Result<()> {
    let mut spec = SweepSpec::new(args.variable, args.grid, args.trials)?;
    spec.seed = args.seed;
    spec.base.k = args.k;
    spec.base.d = args.d;
    spec.base.n = args.n;
    spec.base.epsilon = args.epsilon;
    spec.base.delta = args.delta;
    spec.base.lambda = args.lambda;
    let result = experiments::run_sweep(&spec);
    fs::create_dir_all(&args.output_dir).with_context(|| format!("creating {}", args.output_dir.display()))?;
    experiments::write_sweep(&result, &args.output_dir)?;
    for failure in &result.failures {
        eprintln!("warning: {} = {} trial {} failed: {}", spec.variable, failure.value, failure.trial, failure.error);
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    if let Ok(value) = std::env::var("DPGMM_THREADS") {
        let threads = positive_usize(value.trim()).map_err(|e| anyhow::anyhow!("DPGMM_THREADS {e}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(threads).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    configure_threads()?;
    match cli.command {
        Command::Fit(a) => cmd_fit(a)?,
        Command::Plan(a) => cmd_plan(a)?,
        Command::Release(a) => cmd_release(a)?,
        Command::Evaluate(a) => cmd_evaluate(a)?,
        Command::Sample(a) => cmd_sample(a)?,
        Command::Audit(a) => return cmd_audit(a),
        Command::Experiment(a) => cmd_experiment(a)?,
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
