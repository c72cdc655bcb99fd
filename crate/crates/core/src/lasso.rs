//! LASSO baseline: cyclic coordinate descent along a decreasing penalty
//! path, with repeated K-fold cross-validation to pick the penalty.
//!
//! Columns are standardized internally (mean 0, variance 1 with divisor N)
//! and the response is centred, so the objective is
//! `RSS / (2N) + lambda * ||b||_1` on the standardized scale.
//! Coefficients are reported on the original scale.
//!
//! A solve stops when no coordinate update moves the objective's quadratic
//! part by more than `tol` times the null deviance per observation, i.e.
//! `max_j (delta b_j)^2 < tol * mean(y_c^2)` on the standardized scale.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::dot;
use crate::rng::{derive_seed, rng_from_seed};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LassoConfig {
    pub n_lambda: usize,
    pub lambda_min_ratio: f64,
    /// Explicit penalty grid; overrides `n_lambda` / `lambda_min_ratio`.
    pub lambdas: Option<Vec<f64>>,
    pub folds: usize,
    pub repeats: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_sweeps: usize,
    pub parallel: bool,
}

impl Default for LassoConfig {
    fn default() -> Self {
        Self {
            n_lambda: 100,
            lambda_min_ratio: 1e-3,
            lambdas: None,
            folds: 10,
            repeats: 30,
            seed: 0,
            tol: 1e-7,
            max_sweeps: 10_000,
            parallel: true,
        }
    }
}

impl LassoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Schema(format!("folds must be at least 2, got {}", self.folds)));
        }
        if self.repeats == 0 {
            return Err(Error::Schema("repeats must be at least 1".into()));
        }
        if let Some(l) = &self.lambdas {
            if l.is_empty() || l.windows(2).any(|w| w[1] > w[0]) || l.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Schema("lambdas must be non-negative and non-increasing".into()));
            }
        } else if self.n_lambda == 0 || !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
            return Err(Error::Schema("invalid penalty grid settings".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Schema("tol must be positive".into()));
        }
        Ok(())
    }
}

pub fn soft_threshold(x: f64, lambda: f64) -> f64 {
    if x > lambda {
        x - lambda
    } else if x < -lambda {
        x + lambda
    } else {
        0.0
    }
}

/// Coordinate-descent solver state on standardized data.
#[derive(Debug, Clone)]
pub struct CoordinateDescent {
    x: Vec<Vec<f64>>,
    means: Vec<f64>,
    sds: Vec<f64>,
    y_mean: f64,
    n: usize,
    beta: Vec<f64>,
    resid: Vec<f64>,
    null_deviance: f64,
}

impl CoordinateDescent {
    pub fn new(y: &[f64], columns: &[Vec<f64>]) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidInput("LASSO needs at least two observations".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::InvalidInput("column length does not match the response".into()));
        }
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;
        let mut means = Vec::with_capacity(columns.len());
        let mut sds = Vec::with_capacity(columns.len());
        let x = columns
            .iter()
            .map(|c| {
                let m = c.iter().sum::<f64>() / nf;
                let sd = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / nf).sqrt();
                means.push(m);
                sds.push(sd);
                if sd > 0.0 {
                    c.iter().map(|v| (v - m) / sd).collect()
                } else {
                    vec![0.0; n]
                }
            })
            .collect();
        let resid: Vec<f64> = y.iter().map(|v| v - y_mean).collect();
        let null_deviance = resid.iter().map(|r| r * r).sum::<f64>() / nf;
        Ok(Self {
            x,
            means,
            sds,
            y_mean,
            n,
            beta: vec![0.0; columns.len()],
            resid,
            null_deviance,
        })
    }

    /// Smallest penalty at which every coefficient is zero.
    pub fn lambda_max(&self) -> f64 {
        let nf = self.n as f64;
        let yc: Vec<f64> = self.resid_at_zero();
        self.x.iter().map(|c| dot(c, &yc).abs() / nf).fold(0.0, f64::max)
    }

    fn resid_at_zero(&self) -> Vec<f64> {
        let mut r = self.resid.clone();
        for (j, b) in self.beta.iter().enumerate() {
            if *b != 0.0 {
                for (ri, xi) in r.iter_mut().zip(&self.x[j]) {
                    *ri += b * xi;
                }
            }
        }
        r
    }

    /// `RSS / (2N) + lambda ||b||_1` on the standardized scale.
    pub fn objective(&self, lambda: f64) -> f64 {
        let nf = self.n as f64;
        self.resid.iter().map(|r| r * r).sum::<f64>() / (2.0 * nf)
            + lambda * self.beta.iter().map(|b| b.abs()).sum::<f64>()
    }

    /// One cyclic pass; returns the largest squared coefficient change.
    pub fn sweep(&mut self, lambda: f64, active_only: bool) -> f64 {
        let nf = self.n as f64;
        let mut max_change: f64 = 0.0;
        for j in 0..self.x.len() {
            if self.sds[j] == 0.0 || (active_only && self.beta[j] == 0.0) {
                continue;
            }
            let old = self.beta[j];
            let rho = dot(&self.x[j], &self.resid) / nf + old;
            let new = soft_threshold(rho, lambda);
            if new != old {
                let d = new - old;
                for (ri, xi) in self.resid.iter_mut().zip(&self.x[j]) {
                    *ri -= d * xi;
                }
                self.beta[j] = new;
                max_change = max_change.max(d * d);
            }
        }
        max_change
    }

    /// Minimize at `lambda` from the current coefficients. Returns whether
    /// the sweep limit was respected and the number of sweeps used.
    pub fn solve(&mut self, lambda: f64, tol: f64, max_sweeps: usize) -> (bool, usize) {
        let tol = tol * self.null_deviance.max(f64::MIN_POSITIVE);
        let mut sweeps = 0;
        while sweeps < max_sweeps {
            sweeps += 1;
            if self.sweep(lambda, false) < tol {
                return (true, sweeps);
            }
            while sweeps < max_sweeps {
                sweeps += 1;
                if self.sweep(lambda, true) < tol {
                    break;
                }
            }
        }
        (false, sweeps)
    }

    pub fn standardized_coefficients(&self) -> &[f64] {
        &self.beta
    }

    /// Intercept and slopes on the original column scale.
    pub fn original_coefficients(&self) -> (f64, Vec<f64>) {
        let coef: Vec<f64> = self
            .beta
            .iter()
            .zip(&self.sds)
            .map(|(b, sd)| if *sd > 0.0 { b / sd } else { 0.0 })
            .collect();
        let intercept = self.y_mean - coef.iter().zip(&self.means).map(|(b, m)| b * m).sum::<f64>();
        (intercept, coef)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    pub intercepts: Vec<f64>,
    /// Original-scale coefficients, one vector per penalty.
    pub coefficients: Vec<Vec<f64>>,
    pub converged: Vec<bool>,
}

impl LassoPath {
    pub fn predict(&self, index: usize, columns: &[Vec<f64>], row: usize) -> f64 {
        self.intercepts[index]
            + self.coefficients[index].iter().zip(columns).map(|(b, c)| b * c[row]).sum::<f64>()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|&c| c)
    }
}

fn lambda_grid(lambda_max: f64, config: &LassoConfig) -> Vec<f64> {
    if let Some(l) = &config.lambdas {
        return l.clone();
    }
    let m = config.n_lambda;
    if m == 1 {
        return vec![lambda_max];
    }
    let lo = config.lambda_min_ratio.ln();
    (0..m).map(|i| lambda_max * (lo * i as f64 / (m - 1) as f64).exp()).collect()
}

fn fit_path(y: &[f64], columns: &[Vec<f64>], lambdas: &[f64], config: &LassoConfig) -> Result<LassoPath> {
    let mut cd = CoordinateDescent::new(y, columns)?;
    let mut path = LassoPath {
        lambdas: lambdas.to_vec(),
        intercepts: Vec::with_capacity(lambdas.len()),
        coefficients: Vec::with_capacity(lambdas.len()),
        converged: Vec::with_capacity(lambdas.len()),
    };
    for &lambda in lambdas {
        let (ok, _) = cd.solve(lambda, config.tol, config.max_sweeps);
        let (b0, b) = cd.original_coefficients();
        path.intercepts.push(b0);
        path.coefficients.push(b);
        path.converged.push(ok);
    }
    Ok(path)
}

/// Coefficient path over the configured penalty grid (warm-started).
pub fn lasso_path(y: &[f64], columns: &[Vec<f64>], config: &LassoConfig) -> Result<LassoPath> {
    config.validate()?;
    let lambda_max = CoordinateDescent::new(y, columns)?.lambda_max();
    let grid = lambda_grid(lambda_max, config);
    fit_path(y, columns, &grid, config)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoCv {
    pub lambdas: Vec<f64>,
    /// Mean CV error per penalty, averaged over repeats.
    pub cv_mean: Vec<f64>,
    /// CV error curve of each repeat.
    pub cv_repeats: Vec<Vec<f64>>,
    pub lambda_index: usize,
    pub lambda_star: f64,
    pub selected: Vec<usize>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// Full-data R² at the penalty chosen by each repeat.
    pub repeat_r2: Vec<f64>,
    pub median_r2: f64,
    pub converged: bool,
}

fn argmin(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let m = s.len() / 2;
    if s.len() % 2 == 1 {
        s[m]
    } else {
        0.5 * (s[m - 1] + s[m])
    }
}

/// Fold assignment for one repeat: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % folds;
    }
    fold
}

/// Held-out squared error per penalty for one fold.
fn fold_errors(
    y: &[f64],
    columns: &[Vec<f64>],
    lambdas: &[f64],
    assignment: &[usize],
    fold: usize,
    config: &LassoConfig,
) -> Result<(Vec<f64>, bool)> {
    let train: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] != fold).collect();
    let test: Vec<usize> = (0..y.len()).filter(|&i| assignment[i] == fold).collect();
    let ty: Vec<f64> = train.iter().map(|&i| y[i]).collect();
    let tc: Vec<Vec<f64>> = columns.iter().map(|c| train.iter().map(|&i| c[i]).collect()).collect();
    let path = fit_path(&ty, &tc, lambdas, config)?;
    let sse = (0..lambdas.len())
        .map(|l| {
            test.iter()
                .map(|&i| (y[i] - path.predict(l, columns, i)).powi(2))
                .sum::<f64>()
        })
        .collect();
    Ok((sse, path.all_converged()))
}

fn r_squared(y: &[f64], columns: &[Vec<f64>], intercept: f64, coef: &[f64]) -> f64 {
    let n = y.len() as f64;
    let m = y.iter().sum::<f64>() / n;
    let tss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let rss: f64 = (0..y.len())
        .map(|i| {
            let fit = intercept + coef.iter().zip(columns).map(|(b, c)| b * c[i]).sum::<f64>();
            (y[i] - fit).powi(2)
        })
        .sum();
    if tss > 0.0 {
        1.0 - rss / tss
    } else {
        1.0
    }
}

/// Repeated K-fold cross-validation over the full-data penalty grid.
pub fn lasso_cv_select(y: &[f64], columns: &[Vec<f64>], config: &LassoConfig) -> Result<LassoCv> {
    config.validate()?;
    let n = y.len();
    if n < config.folds {
        return Err(Error::InvalidInput(format!(
            "{n} observations cannot be split into {} folds",
            config.folds
        )));
    }
    let full = lasso_path(y, columns, config)?;
    let lambdas = full.lambdas.clone();

    let assignments: Vec<Vec<usize>> = (0..config.repeats)
        .map(|r| fold_assignment(n, config.folds, derive_seed(config.seed, r as u64)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..config.repeats)
        .flat_map(|r| (0..config.folds).map(move |f| (r, f)))
        .collect();
    let run = |&(r, f): &(usize, usize)| fold_errors(y, columns, &lambdas, &assignments[r], f, config);
    let results: Vec<(Vec<f64>, bool)> = if config.parallel {
        jobs.par_iter().map(run).collect::<Result<_>>()?
    } else {
        jobs.iter().map(run).collect::<Result<_>>()?
    };

    let nl = lambdas.len();
    let mut cv_repeats = vec![vec![0.0; nl]; config.repeats];
    let mut converged = full.all_converged();
    for (&(r, _), (sse, ok)) in jobs.iter().zip(&results) {
        converged &= ok;
        for l in 0..nl {
            cv_repeats[r][l] += sse[l];
        }
    }
    for curve in &mut cv_repeats {
        for v in curve.iter_mut() {
            *v /= n as f64;
        }
    }
    let cv_mean: Vec<f64> = (0..nl)
        .map(|l| cv_repeats.iter().map(|c| c[l]).sum::<f64>() / config.repeats as f64)
        .collect();
    let lambda_index = argmin(&cv_mean);
    let coefficients = full.coefficients[lambda_index].clone();
    let selected = (0..coefficients.len()).filter(|&j| coefficients[j] != 0.0).collect();
    let repeat_r2: Vec<f64> = cv_repeats
        .iter()
        .map(|c| {
            let i = argmin(c);
            r_squared(y, columns, full.intercepts[i], &full.coefficients[i])
        })
        .collect();

    Ok(LassoCv {
        lambda_star: lambdas[lambda_index],
        median_r2: median(&repeat_r2),
        lambdas,
        cv_mean,
        cv_repeats,
        lambda_index,
        selected,
        intercept: full.intercepts[lambda_index],
        coefficients,
        repeat_r2,
        converged,
    })
}
