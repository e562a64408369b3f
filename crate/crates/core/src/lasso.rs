//! Per-multipole regression objects and the l1-penalized solver.
//!
//! For each multipole the `2l + 1` azimuth paths are stacked into one
//! regression: `Y` holds the contemporaneous values, column `h` of `X` the
//! `h`-lagged ones, rows grouped by azimuth and time-descending within each
//! group. The solver minimizes
//!
//! ```text
//! (1 / (N (2l+1))) ||Y - X phi||^2  +  (lambda / N) ||phi||_1
//! ```
//!
//! by cyclic coordinate descent with exact soft-threshold updates, which is
//! all the problem needs: it is p-dimensional with small p, dense, and
//! strongly convex whenever the Gram matrix is positive definite.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpharError};
use crate::linalg;
use crate::real::{cast, Real};
use crate::simulate::HarmonicSample;

/// Stacked design of one multipole plus its second-moment summaries.
#[derive(Debug, Clone)]
pub struct MultipoleRegression<F> {
    ell: usize,
    n_eff: usize,
    design: Array2<F>,
    response: Array1<F>,
    gamma_mat: Array2<F>,
    gamma_vec: Array1<F>,
    response_mean_sq: F,
}

impl<F: Real> MultipoleRegression<F> {
    /// Wrap an explicit design; `design` must have `n_eff * (2 ell + 1)`
    /// rows. The normalized Gram matrix and cross-moment vector are computed
    /// here once.
    pub fn new(ell: usize, n_eff: usize, design: Array2<F>, response: Array1<F>) -> Result<Self> {
        let rows = n_eff * (2 * ell + 1);
        if design.nrows() != rows || response.len() != rows {
            return Err(SpharError::Dimension(format!(
                "expected {rows} stacked rows for ell = {ell}, N = {n_eff}; got design {} and response {}",
                design.nrows(),
                response.len()
            )));
        }
        if design.ncols() == 0 {
            return Err(SpharError::Dimension(
                "design needs at least one lag".into(),
            ));
        }
        let p = design.ncols();
        let scale = F::one() / cast::<F>(rows as f64);
        let mut gamma_mat = Array2::zeros((p, p));
        let mut gamma_vec = Array1::zeros(p);
        for i in 0..p {
            for j in i..p {
                let dot: F = (0..rows).map(|r| design[[r, i]] * design[[r, j]]).sum();
                gamma_mat[[i, j]] = dot * scale;
                gamma_mat[[j, i]] = dot * scale;
            }
            let dot: F = (0..rows).map(|r| design[[r, i]] * response[r]).sum();
            gamma_vec[i] = dot * scale;
        }
        let response_mean_sq = response.iter().map(|&y| y * y).sum::<F>() * scale;
        Ok(Self {
            ell,
            n_eff,
            design,
            response,
            gamma_mat,
            gamma_vec,
            response_mean_sq,
        })
    }

    /// Build the design from one multipole block of shape `(2l + 1) x n`.
    pub fn from_series(ell: usize, p: usize, series: &Array2<F>, n: usize) -> Result<Self> {
        if n <= p {
            return Err(SpharError::Dimension(format!(
                "need more than p = {p} time points, got n = {n}"
            )));
        }
        if series.nrows() != 2 * ell + 1 || series.ncols() != n {
            return Err(SpharError::Dimension(format!(
                "multipole {ell} block must be {}x{n}",
                2 * ell + 1
            )));
        }
        let n_eff = n - p;
        let count = 2 * ell + 1;
        let mut design = Array2::zeros((n_eff * count, p));
        let mut response = Array1::zeros(n_eff * count);
        for m_row in 0..count {
            for (offset, t) in (p + 1..=n).rev().enumerate() {
                let r = m_row * n_eff + offset;
                response[r] = series[[m_row, t - 1]];
                for h in 1..=p {
                    design[[r, h - 1]] = series[[m_row, t - h - 1]];
                }
            }
        }
        Self::new(ell, n_eff, design, response)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Effective number of observations `N = n - p`.
    pub fn n_eff(&self) -> usize {
        self.n_eff
    }

    pub fn order(&self) -> usize {
        self.gamma_vec.len()
    }

    pub fn design(&self) -> ArrayView2<'_, F> {
        self.design.view()
    }

    pub fn response(&self) -> ArrayView1<'_, F> {
        self.response.view()
    }

    /// Normalized Gram matrix `X'X / (N (2l+1))`.
    pub fn gamma_mat(&self) -> ArrayView2<'_, F> {
        self.gamma_mat.view()
    }

    /// Normalized cross moments `X'Y / (N (2l+1))`.
    pub fn gamma_vec(&self) -> ArrayView1<'_, F> {
        self.gamma_vec.view()
    }

    /// Normalized squared response `Y'Y / (N (2l+1))`.
    pub fn response_mean_sq(&self) -> F {
        self.response_mean_sq
    }
}

/// Build the regression objects for multipole `ell` of a sample.
pub fn build_design<F: Real>(
    sample: &HarmonicSample<F>,
    ell: usize,
    p: usize,
) -> Result<MultipoleRegression<F>> {
    if ell >= sample.truncation() {
        return Err(SpharError::Dimension(format!(
            "multipole {ell} outside sample truncation {}",
            sample.truncation()
        )));
    }
    MultipoleRegression::from_series(ell, p, sample.series(ell), sample.len_time())
}

/// Proximal map of the absolute value: `sign(x) * max(|x| - t, 0)`.
pub fn soft_threshold<F: Real>(x: F, t: F) -> F {
    debug_assert!(t >= F::zero());
    let shrunk = x.abs() - t;
    if shrunk <= F::zero() {
        F::zero()
    } else {
        shrunk * x.signum()
    }
}

/// Stopping rule of the coordinate-descent solver.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig<F> {
    /// Convergence threshold on the largest coordinate change per sweep.
    pub tol: F,
    pub max_sweeps: usize,
}

impl<F: Real> Default for SolverConfig<F> {
    fn default() -> Self {
        Self {
            tol: cast(1e-10),
            max_sweeps: 100_000,
        }
    }
}

/// Solver output with its optimality certificate.
#[derive(Debug, Clone)]
pub struct LassoSolution<F> {
    pub coefficients: Array1<F>,
    pub sweeps: usize,
    /// Final penalized objective value.
    pub objective: F,
    /// Worst violation of the stationarity (KKT) conditions.
    pub kkt_residual: F,
    /// Set when `lambda = 0` meets a rank-deficient Gram matrix: the point
    /// returned is one of many minimizers.
    pub rank_deficient: bool,
}

fn penalized_objective<F: Real>(reg: &MultipoleRegression<F>, phi: &Array1<F>, lambda: F) -> F {
    let p = reg.order();
    let mut quad = reg.response_mean_sq;
    for i in 0..p {
        quad -= cast::<F>(2.0) * reg.gamma_vec[i] * phi[i];
        for j in 0..p {
            quad += phi[i] * reg.gamma_mat[[i, j]] * phi[j];
        }
    }
    let l1: F = phi.iter().map(|c| c.abs()).sum();
    quad + lambda / cast::<F>(reg.n_eff as f64) * l1
}

/// Worst violation of the subgradient conditions
/// `2 (gamma_vec - gamma_mat phi)_j = (lambda / N) s_j`, `s_j` a subgradient
/// of `|phi_j|`.
pub fn kkt_residual<F: Real>(reg: &MultipoleRegression<F>, phi: &Array1<F>, lambda: F) -> F {
    let p = reg.order();
    let penalty = lambda / cast::<F>(reg.n_eff as f64);
    let mut worst = F::zero();
    for j in 0..p {
        let mut grad = reg.gamma_vec[j];
        for k in 0..p {
            grad -= reg.gamma_mat[[j, k]] * phi[k];
        }
        let grad = cast::<F>(2.0) * grad;
        let violation = if phi[j] != F::zero() {
            (grad - penalty * phi[j].signum()).abs()
        } else {
            (grad.abs() - penalty).max(F::zero())
        };
        worst = worst.max(violation);
    }
    worst
}

/// Minimize the penalized objective for one multipole, starting from zero.
pub fn lasso_solve<F: Real>(
    reg: &MultipoleRegression<F>,
    lambda: F,
    config: &SolverConfig<F>,
) -> Result<LassoSolution<F>> {
    lasso_solve_warm(reg, lambda, None, config)
}

/// As [`lasso_solve`] but optionally warm-started, typically from the
/// solution at a neighbouring penalty level. The objective is convex, so
/// the minimizer does not depend on the start; only the sweep count does.
pub fn lasso_solve_warm<F: Real>(
    reg: &MultipoleRegression<F>,
    lambda: F,
    init: Option<&Array1<F>>,
    config: &SolverConfig<F>,
) -> Result<LassoSolution<F>> {
    if lambda < F::zero() {
        return Err(SpharError::Domain(format!(
            "penalty must be nonnegative, got {lambda}"
        )));
    }
    let p = reg.order();
    let threshold = lambda / (cast::<F>(2.0) * cast::<F>(reg.n_eff as f64));
    let mut phi = match init {
        Some(start) => {
            if start.len() != p {
                return Err(SpharError::Dimension(format!(
                    "warm start has {} coordinates, problem has {p}",
                    start.len()
                )));
            }
            start.clone()
        }
        None => Array1::zeros(p),
    };
    let mut sweeps = 0usize;
    let mut last_change = F::infinity();
    let mut prev_objective = penalized_objective(reg, &phi, lambda);
    while sweeps < config.max_sweeps {
        sweeps += 1;
        let mut max_delta = F::zero();
        for j in 0..p {
            let diag = reg.gamma_mat[[j, j]];
            if diag <= F::zero() {
                continue;
            }
            let mut partial = reg.gamma_vec[j];
            for k in 0..p {
                if k != j {
                    partial -= reg.gamma_mat[[j, k]] * phi[k];
                }
            }
            let updated = soft_threshold(partial, threshold) / diag;
            max_delta = max_delta.max((updated - phi[j]).abs());
            phi[j] = updated;
        }
        let objective = penalized_objective(reg, &phi, lambda);
        debug_assert!(
            objective <= prev_objective + cast::<F>(1e-12) * (F::one() + prev_objective.abs()),
            "objective increased from {prev_objective} to {objective} in sweep {sweeps}"
        );
        prev_objective = objective;
        last_change = max_delta;
        if max_delta <= config.tol {
            let rank_deficient = lambda == F::zero()
                && linalg::min_symmetric_eigenvalue(reg.gamma_mat.view())
                    <= F::epsilon() * cast::<F>(16.0) * reg.response_mean_sq.max(F::one());
            return Ok(LassoSolution {
                kkt_residual: kkt_residual(reg, &phi, lambda),
                objective: prev_objective,
                coefficients: phi,
                sweeps,
                rank_deficient,
            });
        }
    }
    Err(SpharError::NonConvergence {
        ell: reg.ell,
        sweeps,
        last_change: last_change.to_f64().unwrap_or(f64::NAN),
    })
}

/// Sup norm of the empirical process `gamma_vec - gamma_mat * phi_row`
/// evaluated at a candidate coefficient row (typically the truth).
pub fn empirical_process_norm<F: Real>(reg: &MultipoleRegression<F>, phi_row: &[F]) -> F {
    assert_eq!(
        phi_row.len(),
        reg.order(),
        "coefficient row length mismatch"
    );
    let mut worst = F::zero();
    for j in 0..reg.order() {
        let mut v = reg.gamma_vec[j];
        for (k, &phi) in phi_row.iter().enumerate() {
            v -= reg.gamma_mat[[j, k]] * phi;
        }
        worst = worst.max(v.abs());
    }
    worst
}

/// Per-multipole solver diagnostics carried by a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitDiagnostic<F> {
    pub ell: usize,
    pub sweeps: usize,
    pub kkt: F,
    pub objective: F,
    /// `||gamma_vec - gamma_mat * phi_hat||_inf` at the fitted row.
    pub empirical_sup: F,
}

/// Fitted coefficient matrix for all multipoles at one penalty level.
#[derive(Debug, Clone, PartialEq)]
pub struct LassoFit<F> {
    pub lambda: F,
    pub phi_hat: Array2<F>,
    pub diagnostics: Vec<FitDiagnostic<F>>,
}

/// Fit every multipole of a sample at one penalty level.
///
/// Multipoles are independent problems and are solved in parallel; results
/// are assembled in multipole order so the output never depends on
/// scheduling. `lambda = 0` reproduces the non-penalized estimator.
pub fn fit<F: Real>(
    sample: &HarmonicSample<F>,
    p: usize,
    lambda: F,
    config: &SolverConfig<F>,
) -> Result<LassoFit<F>> {
    let truncation = sample.truncation();
    let rows: Vec<(Array1<F>, FitDiagnostic<F>)> = (0..truncation)
        .into_par_iter()
        .map(|ell| {
            let reg = build_design(sample, ell, p)?;
            let solution = lasso_solve(&reg, lambda, config)?;
            let empirical_sup =
                empirical_process_norm(&reg, solution.coefficients.as_slice().expect("contiguous"));
            let diagnostic = FitDiagnostic {
                ell,
                sweeps: solution.sweeps,
                kkt: solution.kkt_residual,
                objective: solution.objective,
                empirical_sup,
            };
            Ok((solution.coefficients, diagnostic))
        })
        .collect::<Result<_>>()?;
    let mut phi_hat = Array2::zeros((truncation, p));
    let mut diagnostics = Vec::with_capacity(truncation);
    for (ell, (coefficients, diagnostic)) in rows.into_iter().enumerate() {
        for j in 0..p {
            phi_hat[[ell, j]] = coefficients[j];
        }
        diagnostics.push(diagnostic);
    }
    Ok(LassoFit {
        lambda,
        phi_hat,
        diagnostics,
    })
}

#[derive(Serialize, Deserialize)]
struct FitDoc<F> {
    lambda: F,
    phi_hat: Vec<Vec<F>>,
    diagnostics: Vec<FitDiagnosticDoc<F>>,
}

#[derive(Serialize, Deserialize)]
struct FitDiagnosticDoc<F> {
    ell: usize,
    sweeps: usize,
    kkt: F,
}

impl<F: Real + Serialize> LassoFit<F> {
    /// JSON document form: `{"lambda", "phi_hat", "diagnostics"}` with one
    /// `{"ell", "sweeps", "kkt"}` record per multipole.
    pub fn to_json_string(&self) -> Result<String> {
        let doc = FitDoc {
            lambda: self.lambda,
            phi_hat: self.phi_hat.outer_iter().map(|row| row.to_vec()).collect(),
            diagnostics: self
                .diagnostics
                .iter()
                .map(|d| FitDiagnosticDoc {
                    ell: d.ell,
                    sweeps: d.sweeps,
                    kkt: d.kkt,
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json_string()?).map_err(SpharError::io(path))
    }
}

impl<F: Real + serde::de::DeserializeOwned> LassoFit<F> {
    /// Parse the JSON document form. The objective and empirical-process
    /// fields are solver-side extras and come back as zero.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let doc: FitDoc<F> = serde_json::from_str(text)?;
        let truncation = doc.phi_hat.len();
        let p = doc.phi_hat.first().map_or(0, |r| r.len());
        if doc.phi_hat.iter().any(|r| r.len() != p) {
            return Err(SpharError::Dimension("ragged phi_hat rows".into()));
        }
        let mut phi_hat = Array2::zeros((truncation, p));
        for (l, row) in doc.phi_hat.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                phi_hat[[l, j]] = v;
            }
        }
        Ok(LassoFit {
            lambda: doc.lambda,
            phi_hat,
            diagnostics: doc
                .diagnostics
                .into_iter()
                .map(|d| FitDiagnostic {
                    ell: d.ell,
                    sweeps: d.sweeps,
                    kkt: d.kkt,
                    objective: F::zero(),
                    empirical_sup: F::zero(),
                })
                .collect(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(SpharError::io(path))?;
        Self::from_json_str(&text)
    }
}
