//! Command-line driver for the spherical-autoregression toolkit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use sphar_core::experiment::{
    builtin_model, deviation_diagnostic, emit_outputs, re_diagnostic, run_model_study,
    ExperimentConfig, KernelCurveSet, ModelName, MseColumn, MseTable, RunMeta, RunResults,
};
use sphar_core::kernel::KernelEstimate;
use sphar_core::lasso::{fit, SolverConfig};
use sphar_core::model::{oracle_bounds, StabilityReport};
use sphar_core::simulate::{simulate_field, HarmonicSample, SeedSpec};
use sphar_core::SpharModel64;

#[derive(Parser)]
#[command(
    name = "sphar",
    version,
    about = "Simulate, fit, and diagnose spherical autoregressions in the harmonic domain"
)]
struct Cli {
    /// Worker threads (affects speed only, never results).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate harmonic coefficients and write them to disk.
    Simulate(SimulateArgs),
    /// Fit the penalized estimator to a stored sample.
    Fit(FitArgs),
    /// Run the replicated MSE study and emit its tables.
    Experiment(ExperimentArgs),
    /// Stability report and oracle bounds for a model.
    Bounds(BoundsArgs),
    /// Monte Carlo check of the deviation-condition scaling.
    Deviation(DeviationArgs),
    /// Monte Carlo check of the restricted-eigenvalue floor.
    #[command(name = "re-check")]
    ReCheck(ReCheckArgs),
}

#[derive(Args, Clone)]
struct ModelArgs {
    /// Builtin name (T1..T4) or path to a model JSON file.
    #[arg(long, default_value = "T1")]
    model: String,

    /// Truncation level L for builtin models.
    #[arg(long, default_value_t = 50)]
    truncation: usize,

    /// Noise-spectrum decay exponent for builtin models.
    #[arg(long, default_value_t = 2.5)]
    noise_alpha: f64,
}

impl ModelArgs {
    fn resolve(&self) -> Result<(SpharModel64, String)> {
        match self.model.parse::<ModelName>() {
            Ok(ModelName::Custom) => bail!("pass a file path instead of `custom`"),
            Ok(name) => {
                let model = builtin_model(name, self.truncation, self.noise_alpha)?;
                Ok((model, name.label().to_string()))
            }
            Err(_) => {
                let path = Path::new(&self.model);
                let model = SpharModel64::load(path)
                    .with_context(|| format!("loading model file {}", self.model))?;
                let label = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "custom".into());
                Ok((model, label))
            }
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum SampleFormat {
    Csv,
    Bin,
    Both,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Effective sample size N; n = N + p time points are generated.
    #[arg(long, default_value_t = 300)]
    n_obs: usize,

    #[arg(long, default_value_t = 1000)]
    burn_in: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    /// Replication index of the stream to draw.
    #[arg(long, default_value_t = 0)]
    replication: usize,

    #[arg(long, value_enum, default_value_t = SampleFormat::Csv)]
    format: SampleFormat,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct FitArgs {
    /// Sample file: `.bin` for the binary layout, anything else is CSV.
    #[arg(long)]
    sample: PathBuf,

    /// Autoregressive order for CSV samples (binary headers carry it).
    #[arg(long, default_value_t = 2)]
    order: usize,

    /// Penalty level(s); one output file per value.
    #[arg(long = "lambda", default_values_t = vec![0.1])]
    lambdas: Vec<f64>,

    #[arg(long, default_value_t = 1e-10)]
    tol: f64,

    #[arg(long, default_value_t = 100_000)]
    max_sweeps: usize,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration JSON; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,

    /// Builtin model name(s); repeat for a multi-column table.
    #[arg(long = "model")]
    models: Vec<String>,

    #[arg(long)]
    n_obs: Option<usize>,

    #[arg(long)]
    truncation: Option<usize>,

    /// Penalty grid (zero is always evaluated as the baseline).
    #[arg(long = "lambda")]
    lambdas: Vec<f64>,

    #[arg(long)]
    replications: Option<usize>,

    #[arg(long)]
    grid_size: Option<usize>,

    #[arg(long)]
    noise_alpha: Option<f64>,

    #[arg(long)]
    burn_in: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Effective sample size used for the tolerance entries.
    #[arg(long, default_value_t = 300)]
    n_obs: usize,

    /// Penalty level(s) for the oracle-bound rows.
    #[arg(long = "lambda", default_values_t = vec![0.1])]
    lambdas: Vec<f64>,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DeviationArgs {
    #[command(flatten)]
    model: ModelArgs,

    /// Effective sample size(s); repeat to trace the trend.
    #[arg(long = "n-obs", default_values_t = vec![200, 400, 800, 1600])]
    n_obs: Vec<usize>,

    #[arg(long, default_value_t = 50)]
    replications: usize,

    #[arg(long, default_value_t = 1000)]
    burn_in: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct ReCheckArgs {
    #[command(flatten)]
    model: ModelArgs,

    #[arg(long, default_value_t = 300)]
    n_obs: usize,

    #[arg(long, default_value_t = 50)]
    replications: usize,

    #[arg(long, default_value_t = 1000)]
    burn_in: usize,

    #[arg(long, default_value_t = 1)]
    seed: u64,

    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::Fit(args) => run_fit(args),
        Command::Experiment(args) => experiment(args),
        Command::Bounds(args) => bounds(args),
        Command::Deviation(args) => deviation(args),
        Command::ReCheck(args) => re_check(args),
    }
}

fn simulate(args: SimulateArgs) -> Result<()> {
    let (model, label) = args.model.resolve()?;
    let n = args.n_obs + model.order();
    let seeds = SeedSpec::new(args.seed);
    let sample = simulate_field(&model, n, args.burn_in, &seeds, args.replication)?;
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    if matches!(args.format, SampleFormat::Csv | SampleFormat::Both) {
        let path = args.out_dir.join(format!("sample_{label}.csv"));
        sample.write_csv(&path)?;
        println!("wrote {}", path.display());
    }
    if matches!(args.format, SampleFormat::Bin | SampleFormat::Both) {
        let path = args.out_dir.join(format!("sample_{label}.bin"));
        sample.write_binary(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn run_fit(args: FitArgs) -> Result<()> {
    let is_binary = args
        .sample
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("bin"));
    let sample: HarmonicSample<f64> = if is_binary {
        HarmonicSample::read_binary(&args.sample)?
    } else {
        HarmonicSample::read_csv(&args.sample, args.order)?
    };
    let config = SolverConfig {
        tol: args.tol,
        max_sweeps: args.max_sweeps,
    };
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    for &lambda in &args.lambdas {
        let fitted = fit(&sample, sample.order(), lambda, &config)?;
        let path = if args.lambdas.len() == 1 {
            args.out_dir.join("lasso_fit.json")
        } else {
            args.out_dir.join(format!("lasso_fit_lambda_{lambda}.json"))
        };
        fitted.save(&path)?;
        let active = fitted.phi_hat.iter().filter(|&&c| c != 0.0).count();
        println!(
            "wrote {} (lambda = {lambda}, {active} active coefficients)",
            path.display()
        );
    }
    Ok(())
}

fn experiment(args: ExperimentArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => ExperimentConfig::load(path)
            .with_context(|| format!("loading config {}", path.display()))?,
        None => ExperimentConfig::builtin(ModelName::T1, 300, 50),
    };
    if let Some(v) = args.n_obs {
        config.n_obs = v;
    }
    if let Some(v) = args.truncation {
        config.truncation = v;
    }
    if !args.lambdas.is_empty() {
        config.lambdas = args.lambdas.clone();
    }
    if let Some(v) = args.replications {
        config.replications = v;
    }
    if let Some(v) = args.grid_size {
        config.grid_size = v;
    }
    if let Some(v) = args.noise_alpha {
        config.noise_alpha = v;
    }
    if let Some(v) = args.burn_in {
        config.burn_in = v;
    }
    if let Some(v) = args.seed {
        config.master_seed = v;
    }

    let model_names: Vec<ModelName> = if args.models.is_empty() {
        vec![config.model_name]
    } else {
        args.models
            .iter()
            .map(|m| m.parse::<ModelName>().map_err(anyhow::Error::from))
            .collect::<Result<_>>()?
    };

    let mut columns = Vec::new();
    let mut configs = Vec::new();
    let mut lambdas = None;
    let mut curves = Vec::new();
    let mut wall_clock_ms = 0u128;
    for name in model_names {
        let mut model_config = config.clone();
        model_config.model_name = name;
        let study = run_model_study::<f64>(&model_config)?;
        println!("{} MSE by penalty:", study.label);
        for (lambda, mse) in study.lambdas.iter().zip(&study.mse) {
            println!("  lambda = {lambda}: {mse:.6}");
        }
        let truth = KernelEstimate::from_model(&study.truth);
        for (i, lambda) in study.lambdas.iter().enumerate() {
            curves.push(KernelCurveSet {
                model: study.label.clone(),
                lambda: *lambda,
                truth: truth.clone(),
                estimate: study.mean_estimates[i].clone(),
                grid_size: model_config.grid_size,
            });
        }
        lambdas.get_or_insert_with(|| study.lambdas.clone());
        columns.push(MseColumn {
            model: study.label.clone(),
            values: study.mse.clone(),
        });
        wall_clock_ms += study.wall_clock_ms;
        configs.push(model_config);
    }

    let table = MseTable {
        lambdas: lambdas.unwrap_or_default(),
        columns,
        meta: RunMeta {
            configs: configs.clone(),
            master_seed: config.master_seed,
            wall_clock_ms,
        },
    };
    let mut results = RunResults::new(serde_json::to_value(&configs)?, config.master_seed);
    results.mse = Some(table);
    results.kernel_curves = curves;
    let written = emit_outputs(&results, &args.out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn bounds(args: BoundsArgs) -> Result<()> {
    let (model, label) = args.model.resolve()?;
    let report = StabilityReport::new(&model, args.n_obs)?;
    let oracle: Vec<serde_json::Value> = args
        .lambdas
        .iter()
        .map(|&lambda| -> Result<serde_json::Value> {
            let (l2, linf) = oracle_bounds(&model, &model, args.n_obs, lambda)?;
            Ok(json!({"lambda": lambda, "l2_bound": l2, "linf_bound": linf}))
        })
        .collect::<Result<_>>()?;
    let doc = json!({
        "model": label,
        "n_obs": args.n_obs,
        "report": report,
        "oracle_bounds": oracle,
    });
    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let path = args.out_dir.join("stability_report.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)?)?;
    println!(
        "wrote {} (deviation scale max {:.4}, omega {:.4})",
        path.display(),
        report.deviation_scale_max,
        report.omega
    );
    Ok(())
}

fn deviation(args: DeviationArgs) -> Result<()> {
    let (model, label) = args.model.resolve()?;
    let seeds = SeedSpec::new(args.seed);
    let table = deviation_diagnostic(&model, &args.n_obs, args.replications, args.burn_in, &seeds)?;
    for row in &table.rows {
        println!(
            "N = {}: median {:.4}, p95 {:.4}, fraction within scale {:.3}",
            row.n_obs, row.median, row.p95, row.fraction_within
        );
    }
    let echo = json!({
        "command": "deviation",
        "model": label,
        "n_obs": args.n_obs,
        "replications": args.replications,
        "burn_in": args.burn_in,
    });
    let mut results = RunResults::<f64>::new(echo, args.seed);
    results.deviation.push((label, table));
    let written = emit_outputs(&results, &args.out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn re_check(args: ReCheckArgs) -> Result<()> {
    let (model, label) = args.model.resolve()?;
    let seeds = SeedSpec::new(args.seed);
    let table = re_diagnostic(&model, args.n_obs, args.replications, args.burn_in, &seeds)?;
    println!(
        "fraction of replications above curvature at every multipole: {:.3}",
        table.fraction_all_above
    );
    let floors = table.rows.iter().filter(|r| r.floor_ok).count();
    println!(
        "exact covariance clears the 2*alpha floor at {}/{} multipoles",
        floors,
        table.rows.len()
    );
    let echo = json!({
        "command": "re-check",
        "model": label,
        "n_obs": args.n_obs,
        "replications": args.replications,
        "burn_in": args.burn_in,
    });
    let mut results = RunResults::<f64>::new(echo, args.seed);
    results.re_checks.push((label, table));
    let written = emit_outputs(&results, &args.out_dir)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(())
}
