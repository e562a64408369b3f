//! Simulation studies and Monte Carlo diagnostics.
//!
//! The MSE experiment simulates `B` independent samples of a model, fits
//! every penalty level on each, and reports the grid mean squared error per
//! penalty, mirroring the benchmark table layout. Deviation and
//! restricted-eigenvalue diagnostics probe the concentration statements at
//! desk scale. All runs are deterministic given the master seed:
//! replications are keyed by index, and reductions happen in index order.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use ndarray::Array2;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpharError};
use crate::kernel::{KernelEstimate, MseAccumulator};
use crate::lasso::{
    build_design, empirical_process_norm, lasso_solve, MultipoleRegression, SolverConfig,
};
use crate::linalg;
use crate::model::{default_noise_spectrum, deviation_scale, re_curvature, SpharModel};
use crate::real::{cast, Real};
use crate::simulate::{simulate_field, simulate_multipole, theoretical_autocovariance, SeedSpec};

/// Offset between replication streams of different sample sizes in the
/// deviation diagnostic, so no two (N, replication) pairs share a stream.
const N_STREAM_STRIDE: usize = 1_000_000;

/// Benchmark model identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelName {
    T1,
    T2,
    T3,
    T4,
    #[serde(rename = "custom")]
    Custom,
}

impl ModelName {
    pub fn label(&self) -> &'static str {
        match self {
            ModelName::T1 => "T1",
            ModelName::T2 => "T2",
            ModelName::T3 => "T3",
            ModelName::T4 => "T4",
            ModelName::Custom => "custom",
        }
    }
}

impl FromStr for ModelName {
    type Err = SpharError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T1" | "t1" => Ok(ModelName::T1),
            "T2" | "t2" => Ok(ModelName::T2),
            "T3" | "t3" => Ok(ModelName::T3),
            "T4" | "t4" => Ok(ModelName::T4),
            "custom" => Ok(ModelName::Custom),
            other => Err(SpharError::UnknownModel(other.to_string())),
        }
    }
}

fn default_replications() -> usize {
    100
}

fn default_grid_size() -> usize {
    2000
}

/// The benchmark penalty grid `10^{i-6}, i = 1..=6`.
pub fn default_lambdas() -> Vec<f64> {
    (1..=6).map(|i| 10f64.powi(i - 6)).collect()
}

fn default_noise_alpha() -> f64 {
    2.5
}

fn default_burn_in() -> usize {
    1000
}

fn default_master_seed() -> u64 {
    1
}

/// Configuration of one simulation study.
///
/// `n_obs` is the effective sample size `N`; each replication simulates
/// `N + p` time points so that exactly `N` regression rows survive per
/// azimuth. Single-letter aliases (`N`, `L`, `B`, `G`) are accepted when
/// reading JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model_name: ModelName,
    /// Model file, required when `model_name` is `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_path: Option<PathBuf>,
    #[serde(alias = "N")]
    pub n_obs: usize,
    #[serde(alias = "L")]
    pub truncation: usize,
    #[serde(alias = "B", default = "default_replications")]
    pub replications: usize,
    #[serde(alias = "G", default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_lambdas")]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_noise_alpha")]
    pub noise_alpha: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_master_seed")]
    pub master_seed: u64,
}

impl ExperimentConfig {
    /// Study defaults for a built-in model.
    pub fn builtin(model_name: ModelName, n_obs: usize, truncation: usize) -> Self {
        Self {
            model_name,
            model_path: None,
            n_obs,
            truncation,
            replications: default_replications(),
            grid_size: default_grid_size(),
            lambdas: default_lambdas(),
            noise_alpha: default_noise_alpha(),
            burn_in: default_burn_in(),
            master_seed: default_master_seed(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(SpharError::io(path))?;
        Self::from_json_str(&text)
    }

    fn validate(&self, p: usize) -> Result<()> {
        if self.n_obs < p + 1 {
            return Err(SpharError::Domain(format!(
                "need N >= p + 1 = {}, got {}",
                p + 1,
                self.n_obs
            )));
        }
        if self.replications == 0 {
            return Err(SpharError::Domain("need at least one replication".into()));
        }
        if self.grid_size < 2 {
            return Err(SpharError::Domain("grid needs at least two points".into()));
        }
        if self.lambdas.iter().any(|&l| l < 0.0 || !l.is_finite()) {
            return Err(SpharError::Domain(
                "penalty values must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Penalty levels actually evaluated: zero prepended to the configured
    /// grid, ascending and deduplicated.
    pub fn lambda_grid(&self) -> Vec<f64> {
        let mut grid = self.lambdas.clone();
        grid.push(0.0);
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
        grid.dedup();
        grid
    }
}

/// Construct one of the benchmark models.
///
/// T1 is strongly sparse (two active coefficients), T2 moderately sparse
/// (six), T3 decays like `l^{-2}` past multipole 20 with moderate values
/// below, and T4 keeps every multipole active. Every returned model is
/// verified stationary with root-modulus margin 0.01.
pub fn builtin_model<F: Real>(
    name: ModelName,
    truncation: usize,
    noise_alpha: f64,
) -> Result<SpharModel<F>> {
    if truncation == 0 {
        return Err(SpharError::Domain("truncation must be positive".into()));
    }
    let p = 2usize;
    let mut phi = Array2::zeros((truncation, p));
    match name {
        ModelName::T1 => {
            if truncation < 4 {
                return Err(SpharError::Domain(format!(
                    "T1 places coefficients at multipoles 2 and 3; truncation {truncation} is too small"
                )));
            }
            phi[[2, 0]] = cast(-0.7);
            phi[[3, 1]] = cast(0.5);
        }
        ModelName::T2 => {
            if truncation < 33 {
                return Err(SpharError::Domain(format!(
                    "T2 places coefficients up to multipole 32; truncation {truncation} is too small"
                )));
            }
            phi[[30, 0]] = cast(-0.72);
            phi[[31, 0]] = cast(0.31);
            phi[[32, 0]] = cast(0.85);
            phi[[2, 1]] = cast(0.25);
            phi[[3, 1]] = cast(-0.87);
            phi[[5, 1]] = cast(-0.98);
        }
        ModelName::T3 => {
            for l in 0..truncation {
                if l < 20 {
                    phi[[l, 0]] = cast(0.4);
                    phi[[l, 1]] = cast(0.2);
                } else {
                    let decayed = 0.5 * (l as f64).powi(-2);
                    phi[[l, 0]] = cast(decayed);
                    phi[[l, 1]] = cast(decayed);
                }
            }
        }
        ModelName::T4 => {
            for l in 0..truncation {
                phi[[l, 0]] = cast(0.4);
                phi[[l, 1]] = cast(0.25);
            }
        }
        ModelName::Custom => {
            return Err(SpharError::InvalidModel(
                "custom models are loaded from a file, not built in".into(),
            ))
        }
    }
    let model = SpharModel::new(phi, default_noise_spectrum(truncation, noise_alpha))?;
    if !model.is_stationary_with_margin(cast(0.01)) {
        return Err(SpharError::InvalidModel(format!(
            "builtin {} violates the 0.01 stationarity margin",
            name.label()
        )));
    }
    Ok(model)
}

/// Resolve the model a config refers to, building or loading as needed.
pub fn resolve_model<F>(config: &ExperimentConfig) -> Result<SpharModel<F>>
where
    F: Real + serde::de::DeserializeOwned,
{
    match config.model_name {
        ModelName::Custom => {
            let path = config.model_path.as_ref().ok_or_else(|| {
                SpharError::InvalidModel("custom model requires `model_path`".into())
            })?;
            SpharModel::load(path)
        }
        name => builtin_model(name, config.truncation, config.noise_alpha),
    }
}

/// Study metadata echoed into tables and manifests.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunMeta {
    pub configs: Vec<ExperimentConfig>,
    pub master_seed: u64,
    pub wall_clock_ms: u128,
}

/// One model column of the MSE table.
#[derive(Debug, Clone)]
pub struct MseColumn<F> {
    pub model: String,
    pub values: Vec<F>,
}

/// Per-penalty MSE values for one or more models, penalty levels ascending
/// with zero first.
#[derive(Debug, Clone)]
pub struct MseTable<F> {
    pub lambdas: Vec<F>,
    pub columns: Vec<MseColumn<F>>,
    pub meta: RunMeta,
}

impl<F: Real> MseTable<F> {
    /// Join single-model tables into one multi-column table; the penalty
    /// grids must coincide.
    pub fn merge(tables: Vec<MseTable<F>>) -> Result<MseTable<F>> {
        let mut iter = tables.into_iter();
        let mut merged = iter.next().ok_or_else(|| {
            SpharError::Dimension("cannot merge an empty collection of tables".into())
        })?;
        for table in iter {
            if table.lambdas != merged.lambdas {
                return Err(SpharError::Dimension(
                    "penalty grids differ between merged tables".into(),
                ));
            }
            merged.columns.extend(table.columns);
            merged.meta.configs.extend(table.meta.configs);
            merged.meta.wall_clock_ms += table.meta.wall_clock_ms;
        }
        Ok(merged)
    }

    /// Write the `lambda,<model>,...` CSV layout.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(SpharError::io(path))?;
        let mut out = BufWriter::new(file);
        let mut header = String::from("lambda");
        for column in &self.columns {
            header.push(',');
            header.push_str(&column.model);
        }
        header.push('\n');
        out.write_all(header.as_bytes())
            .map_err(SpharError::io(path))?;
        for (i, lambda) in self.lambdas.iter().enumerate() {
            let mut line = format!("{lambda}");
            for column in &self.columns {
                line.push_str(&format!(",{}", column.values[i]));
            }
            line.push('\n');
            out.write_all(line.as_bytes())
                .map_err(SpharError::io(path))?;
        }
        out.flush().map_err(SpharError::io(path))
    }

    /// MSE of a model column at one penalty value.
    pub fn value(&self, model: &str, lambda: f64) -> Option<F> {
        let column = self.columns.iter().find(|c| c.model == model)?;
        let idx = self
            .lambdas
            .iter()
            .position(|l| (l.to_f64().unwrap_or(f64::NAN) - lambda).abs() <= 1e-15)?;
        column.values.get(idx).copied()
    }
}

/// Full outcome of a single-model study: the MSE column plus the mean
/// fitted kernels per penalty level (plot-ready).
#[derive(Debug, Clone)]
pub struct ModelStudy<F> {
    pub label: String,
    pub lambdas: Vec<F>,
    pub mse: Vec<F>,
    pub per_kernel_mse: Vec<Vec<F>>,
    pub truth: SpharModel<F>,
    pub mean_estimates: Vec<KernelEstimate<F>>,
    pub wall_clock_ms: u128,
}

struct Replication<F> {
    sums: Vec<Vec<F>>,
    phi: Vec<Array2<F>>,
}

fn mse_replication<F>(
    model: &SpharModel<F>,
    config: &ExperimentConfig,
    lambdas: &[F],
    engine: &MseAccumulator<F>,
    replication: usize,
) -> Result<Replication<F>>
where
    F: Real,
    StandardNormal: Distribution<F>,
{
    let p = model.order();
    let seeds = SeedSpec::new(config.master_seed);
    let sample = simulate_field(model, config.n_obs + p, config.burn_in, &seeds, replication)?;
    let solver = SolverConfig::default();
    let truncation = model.truncation();
    let mut phi: Vec<Array2<F>> = vec![Array2::zeros((truncation, p)); lambdas.len()];
    for ell in 0..truncation {
        let reg = build_design(&sample, ell, p)?;
        for (i, &lambda) in lambdas.iter().enumerate() {
            let solution = lasso_solve(&reg, lambda, &solver)?;
            for j in 0..p {
                phi[i][[ell, j]] = solution.coefficients[j];
            }
        }
    }
    let mut sums = Vec::with_capacity(lambdas.len());
    for matrix in &phi {
        sums.push(engine.squared_error_sums(&KernelEstimate::new(matrix.clone()))?);
    }
    Ok(Replication { sums, phi })
}

/// Run the full study for one model.
pub fn run_model_study<F>(config: &ExperimentConfig) -> Result<ModelStudy<F>>
where
    F: Real + serde::de::DeserializeOwned,
    StandardNormal: Distribution<F>,
{
    let start = Instant::now();
    let model = resolve_model::<F>(config)?;
    config.validate(model.order())?;
    let lambdas_f64 = config.lambda_grid();
    let lambdas: Vec<F> = lambdas_f64.iter().map(|&l| cast(l)).collect();
    let truth_kernels = KernelEstimate::from_model(&model);
    let engine = MseAccumulator::new(&truth_kernels, config.grid_size)?;

    let replications: Vec<Replication<F>> = (0..config.replications)
        .into_par_iter()
        .map(|rep| mse_replication(&model, config, &lambdas, &engine, rep))
        .collect::<Result<_>>()?;

    let p = model.order();
    let truncation = model.truncation();
    let b = config.replications;
    let mut totals = vec![vec![F::zero(); p]; lambdas.len()];
    let mut mean_phi: Vec<Array2<F>> = vec![Array2::zeros((truncation, p)); lambdas.len()];
    for rep in &replications {
        for (i, sums) in rep.sums.iter().enumerate() {
            for j in 0..p {
                totals[i][j] += sums[j];
            }
            mean_phi[i] += &rep.phi[i];
        }
    }
    let scale = F::one() / cast::<F>(b as f64);
    let denom = cast::<F>((b * config.grid_size) as f64);
    let per_kernel_mse: Vec<Vec<F>> = totals
        .iter()
        .map(|sums| sums.iter().map(|&s| s / denom).collect())
        .collect();
    let mse: Vec<F> = per_kernel_mse
        .iter()
        .map(|v| v.iter().copied().sum())
        .collect();
    let mean_estimates = mean_phi
        .into_iter()
        .map(|mut m| {
            m.mapv_inplace(|v| v * scale);
            KernelEstimate::new(m)
        })
        .collect();
    Ok(ModelStudy {
        label: config.model_name.label().to_string(),
        lambdas,
        mse,
        per_kernel_mse,
        truth: model,
        mean_estimates,
        wall_clock_ms: start.elapsed().as_millis(),
    })
}

/// Run the study and return just the MSE table (one column).
pub fn run_mse_experiment<F>(config: &ExperimentConfig) -> Result<MseTable<F>>
where
    F: Real + serde::de::DeserializeOwned,
    StandardNormal: Distribution<F>,
{
    let study = run_model_study::<F>(config)?;
    Ok(MseTable {
        lambdas: study.lambdas.clone(),
        columns: vec![MseColumn {
            model: study.label.clone(),
            values: study.mse.clone(),
        }],
        meta: RunMeta {
            configs: vec![config.clone()],
            master_seed: config.master_seed,
            wall_clock_ms: study.wall_clock_ms,
        },
    })
}

/// Distribution summary of the scaled empirical-process statistic at one
/// sample size.
#[derive(Debug, Clone, Serialize)]
pub struct DeviationRow<F> {
    pub n_obs: usize,
    /// Median over replications of
    /// `max_l ||gamma_vec - gamma_mat phi_l||_inf * sqrt(N / log(p L))`.
    pub median: F,
    /// 95th percentile (nearest rank) of the same statistic.
    pub p95: F,
    /// The model's deviation scale; the fraction below compares against it.
    pub deviation_scale_max: F,
    /// Fraction of replications whose statistic stays below the scale.
    pub fraction_within: F,
}

#[derive(Debug, Clone, Serialize)]
pub struct DeviationTable<F> {
    pub replications: usize,
    pub rows: Vec<DeviationRow<F>>,
}

fn percentile<F: Real>(sorted: &[F], q: f64) -> F {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn median<F: Real>(sorted: &[F]) -> F {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / cast::<F>(2.0)
    }
}

/// Monte Carlo distribution of the scaled empirical-process sup norm across
/// sample sizes.
///
/// Each `(sample size, replication)` pair draws from its own streams, so
/// rows are independent across `N`.
pub fn deviation_diagnostic<F>(
    model: &SpharModel<F>,
    n_list: &[usize],
    replications: usize,
    burn_in: usize,
    seeds: &SeedSpec,
) -> Result<DeviationTable<F>>
where
    F: Real,
    StandardNormal: Distribution<F>,
{
    if replications == 0 || replications >= N_STREAM_STRIDE {
        return Err(SpharError::Domain(format!(
            "replications must be in 1..{N_STREAM_STRIDE}"
        )));
    }
    let p = model.order();
    let truncation = model.truncation();
    let scale_max = (0..truncation)
        .map(|l| deviation_scale(model.phi_row(l), model.noise(l)))
        .fold(F::zero(), F::max);
    let log_dim = cast::<F>((p as f64 * truncation as f64).ln());
    let mut rows = Vec::with_capacity(n_list.len());
    for (n_idx, &n_eff) in n_list.iter().enumerate() {
        if n_eff < p + 1 {
            return Err(SpharError::Domain(format!(
                "need N >= p + 1 = {}, got {n_eff}",
                p + 1
            )));
        }
        let n = n_eff + p;
        let mut stats: Vec<F> = (0..replications)
            .into_par_iter()
            .map(|rep| -> Result<F> {
                let stream_rep = n_idx * N_STREAM_STRIDE + rep;
                let mut worst = F::zero();
                for ell in 0..truncation {
                    let block = simulate_multipole(
                        model.phi_row(ell),
                        model.noise(ell),
                        2 * ell + 1,
                        n,
                        burn_in,
                        seeds,
                        ell,
                        stream_rep,
                    )?;
                    let reg = MultipoleRegression::from_series(ell, p, &block, n)?;
                    worst = worst.max(empirical_process_norm(&reg, model.phi_row(ell)));
                }
                Ok(worst * (cast::<F>(n_eff as f64) / log_dim).sqrt())
            })
            .collect::<Result<_>>()?;
        stats.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let within = stats.iter().filter(|&&s| s <= scale_max).count();
        rows.push(DeviationRow {
            n_obs: n_eff,
            median: median(&stats),
            p95: percentile(&stats, 0.95),
            deviation_scale_max: scale_max,
            fraction_within: cast::<F>(within as f64 / replications as f64),
        });
    }
    Ok(DeviationTable { replications, rows })
}

/// Smallest-eigenvalue summary of one multipole's sample Gram matrices.
#[derive(Debug, Clone, Serialize)]
pub struct ReRow<F> {
    pub ell: usize,
    pub min_eig_min: F,
    pub min_eig_median: F,
    /// Restricted-eigenvalue curvature `alpha = C_Z / (2 mu_max)`.
    pub curvature: F,
    /// Smallest eigenvalue of the exact Toeplitz autocovariance matrix.
    pub exact_min_eig: F,
    /// Whether the exact matrix clears the theoretical floor `2 alpha`.
    pub floor_ok: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReTable<F> {
    pub n_obs: usize,
    pub replications: usize,
    pub rows: Vec<ReRow<F>>,
    /// Fraction of replications where every multipole's sample Gram matrix
    /// has its smallest eigenvalue above the curvature.
    pub fraction_all_above: F,
}

/// Compare sample Gram spectra against the restricted-eigenvalue curvature.
pub fn re_diagnostic<F>(
    model: &SpharModel<F>,
    n_eff: usize,
    replications: usize,
    burn_in: usize,
    seeds: &SeedSpec,
) -> Result<ReTable<F>>
where
    F: Real,
    StandardNormal: Distribution<F>,
{
    if replications == 0 {
        return Err(SpharError::Domain("need at least one replication".into()));
    }
    let p = model.order();
    if n_eff < p + 1 {
        return Err(SpharError::Domain(format!(
            "need N >= p + 1 = {}, got {n_eff}",
            p + 1
        )));
    }
    let truncation = model.truncation();
    let n = n_eff + p;
    let per_rep: Vec<Vec<F>> = (0..replications)
        .into_par_iter()
        .map(|rep| -> Result<Vec<F>> {
            let mut eigs = Vec::with_capacity(truncation);
            for ell in 0..truncation {
                let block = simulate_multipole(
                    model.phi_row(ell),
                    model.noise(ell),
                    2 * ell + 1,
                    n,
                    burn_in,
                    seeds,
                    ell,
                    rep,
                )?;
                let reg = MultipoleRegression::from_series(ell, p, &block, n)?;
                eigs.push(linalg::min_symmetric_eigenvalue(reg.gamma_mat()));
            }
            Ok(eigs)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(truncation);
    let mut all_above = 0usize;
    let curvatures: Vec<F> = (0..truncation)
        .map(|l| re_curvature(model.phi_row(l), model.noise(l)))
        .collect();
    for eigs in &per_rep {
        if eigs.iter().zip(&curvatures).all(|(&e, &a)| e > a) {
            all_above += 1;
        }
    }
    for ell in 0..truncation {
        let mut values: Vec<F> = per_rep.iter().map(|eigs| eigs[ell]).collect();
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let cov = theoretical_autocovariance(model.phi_row(ell), model.noise(ell), p - 1)?;
        let toeplitz = Array2::from_shape_fn((p, p), |(i, j)| cov[i.abs_diff(j)]);
        let exact_min_eig = linalg::min_symmetric_eigenvalue(toeplitz.view());
        let floor = cast::<F>(2.0) * curvatures[ell];
        rows.push(ReRow {
            ell,
            min_eig_min: values[0],
            min_eig_median: median(&values),
            curvature: curvatures[ell],
            exact_min_eig,
            floor_ok: exact_min_eig >= floor * (F::one() - cast(1e-12)),
        });
    }
    Ok(ReTable {
        n_obs: n_eff,
        replications,
        rows,
        fraction_all_above: cast::<F>(all_above as f64 / replications as f64),
    })
}

/// Plot-ready kernel curves for one `(model, penalty)` pair.
#[derive(Debug, Clone)]
pub struct KernelCurveSet<F> {
    pub model: String,
    pub lambda: F,
    pub truth: KernelEstimate<F>,
    pub estimate: KernelEstimate<F>,
    pub grid_size: usize,
}

/// Everything one run wants written to disk.
#[derive(Debug, Clone)]
pub struct RunResults<F> {
    /// Echo of whatever configuration drove the run.
    pub config_echo: serde_json::Value,
    pub master_seed: u64,
    pub mse: Option<MseTable<F>>,
    pub kernel_curves: Vec<KernelCurveSet<F>>,
    pub deviation: Vec<(String, DeviationTable<F>)>,
    pub re_checks: Vec<(String, ReTable<F>)>,
}

impl<F> RunResults<F> {
    pub fn new(config_echo: serde_json::Value, master_seed: u64) -> Self {
        Self {
            config_echo,
            master_seed,
            mse: None,
            kernel_curves: Vec::new(),
            deviation: Vec::new(),
            re_checks: Vec::new(),
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    package: &'static str,
    version: &'static str,
    created_unix_ms: u128,
    master_seed: u64,
    config: &'a serde_json::Value,
    wall_clock_ms: Option<u128>,
    outputs: Vec<String>,
}

/// Write the run's tables, curves, diagnostics, and manifest into a
/// directory; returns the paths written. Empty results still produce the
/// manifest. Reruns with the same seed produce byte-identical CSVs; only
/// manifest timestamps vary.
pub fn emit_outputs<F: Real>(results: &RunResults<F>, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(SpharError::io(out_dir))?;
    let mut written = Vec::new();

    if let Some(table) = &results.mse {
        let path = out_dir.join("mse_table.csv");
        table.write_csv(&path)?;
        written.push(path);
    }

    for set in &results.kernel_curves {
        let path = out_dir.join(format!(
            "kernel_curves_{}_lambda_{}.csv",
            set.model, set.lambda
        ));
        crate::kernel::write_kernel_curves(&path, &set.truth, &set.estimate, set.grid_size)?;
        written.push(path);
    }

    if !results.deviation.is_empty() || !results.re_checks.is_empty() {
        let path = out_dir.join("diagnostics.csv");
        let file = fs::File::create(&path).map_err(SpharError::io(&path))?;
        let mut out = BufWriter::new(file);
        let mut push = |line: String| {
            out.write_all(line.as_bytes())
                .map_err(SpharError::io(&path))
        };
        push("diagnostic,model,n_obs,ell,metric,value\n".into())?;
        for (model, table) in &results.deviation {
            for row in &table.rows {
                let n = row.n_obs;
                push(format!("deviation,{model},{n},,median,{}\n", row.median))?;
                push(format!("deviation,{model},{n},,p95,{}\n", row.p95))?;
                push(format!(
                    "deviation,{model},{n},,deviation_scale_max,{}\n",
                    row.deviation_scale_max
                ))?;
                push(format!(
                    "deviation,{model},{n},,fraction_within,{}\n",
                    row.fraction_within
                ))?;
            }
        }
        for (model, table) in &results.re_checks {
            let n = table.n_obs;
            for row in &table.rows {
                let ell = row.ell;
                push(format!(
                    "re_floor,{model},{n},{ell},min_eig_min,{}\n",
                    row.min_eig_min
                ))?;
                push(format!(
                    "re_floor,{model},{n},{ell},min_eig_median,{}\n",
                    row.min_eig_median
                ))?;
                push(format!(
                    "re_floor,{model},{n},{ell},curvature,{}\n",
                    row.curvature
                ))?;
                push(format!(
                    "re_floor,{model},{n},{ell},exact_min_eig,{}\n",
                    row.exact_min_eig
                ))?;
                push(format!(
                    "re_floor,{model},{n},{ell},floor_ok,{}\n",
                    u8::from(row.floor_ok)
                ))?;
            }
            push(format!(
                "re_floor,{model},{n},,fraction_all_above,{}\n",
                table.fraction_all_above
            ))?;
        }
        out.flush().map_err(SpharError::io(&path))?;
        written.push(path);
    }

    let manifest = Manifest {
        package: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        created_unix_ms: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis())
            .unwrap_or(0),
        master_seed: results.master_seed,
        config: &results.config_echo,
        wall_clock_ms: results.mse.as_ref().map(|t| t.meta.wall_clock_ms),
        outputs: written
            .iter()
            .map(|p| {
                p.file_name()
                    .unwrap_or_default()
                    .to_string_lossy()
                    .into_owned()
            })
            .collect(),
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(SpharError::io(&path))?;
    written.push(path);
    Ok(written)
}
