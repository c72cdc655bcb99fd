//! Simulation study with correlated signal groups.
//!
//! 301 standard-normal columns are generated; columns 1-4 and 5-6 (1-based)
//! form groups sharing a latent factor, `z_j = w + d * eta_j` with
//! `d = sqrt(1/rho - 1)` so that pairwise correlation is `rho`. The response
//! is `Z3 + Z6 + Z7 + Z8 + e`, `e ~ N(0, noise_variance)`, and `Z8` is then
//! withheld, leaving 300 candidate columns. A model with `Z7`, one column of
//! the first group and one of the second is the target; columns 9-301 are
//! nulls.

use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{ols_refit, refit_selection};
use crate::em::{run_em, EmConfig, MoveRecord};
use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::lasso::{lasso_cv_select, median, LassoConfig};
use crate::model::Dataset;
use crate::rng::{derive_seed, rng_from_seed};

/// Correlated groups, by 1-based column number.
pub const GROUPS: [&[usize]; 2] = [&[1, 2, 3, 4], &[5, 6]];
/// Columns entering the response.
pub const SIGNAL: [usize; 4] = [3, 6, 7, 8];
/// Column generated but withheld from the fit.
pub const DROPPED: usize = 8;
/// Reference model for the "true" R².
pub const TRUE_MODEL: [usize; 3] = [3, 6, 7];
/// Columns counted as true positives.
pub const TRUE_POSITIVE_SET: std::ops::RangeInclusive<usize> = 1..=7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimDesign {
    pub n: usize,
    pub n_generated: usize,
    pub group_correlation: f64,
    pub noise_variance: f64,
    pub replicates: usize,
    pub seed: u64,
    pub parallel: bool,
}

impl Default for SimDesign {
    fn default() -> Self {
        Self {
            n: 40,
            n_generated: 301,
            group_correlation: 0.99,
            noise_variance: 0.1,
            replicates: 100,
            seed: 0,
            parallel: true,
        }
    }
}

impl SimDesign {
    pub fn validate(&self) -> Result<()> {
        if self.n < 4 {
            return Err(Error::Schema(format!("n must be at least 4, got {}", self.n)));
        }
        if self.n_generated < 9 {
            return Err(Error::Schema("n_generated must be at least 9".into()));
        }
        if !(self.group_correlation > 0.0 && self.group_correlation < 1.0) {
            return Err(Error::Schema("group_correlation must lie in (0, 1)".into()));
        }
        if !(self.noise_variance >= 0.0) {
            return Err(Error::Schema("noise_variance must be non-negative".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Schema("replicates must be at least 1".into()));
        }
        Ok(())
    }

    /// Noise scale on the shared factor that yields the target correlation.
    pub fn group_noise_scale(&self) -> f64 {
        (1.0 / self.group_correlation - 1.0).sqrt()
    }
}

/// One simulated data set. `columns` and `names` exclude the withheld column.
#[derive(Debug, Clone)]
pub struct SimReplicate {
    pub y: Vec<f64>,
    pub columns: Vec<Vec<f64>>,
    pub names: Vec<String>,
    /// 1-based generated column number of each retained column.
    pub column_ids: Vec<usize>,
    pub dataset: Dataset,
}

impl SimReplicate {
    pub fn position_of(&self, id: usize) -> Option<usize> {
        self.column_ids.iter().position(|&c| c == id)
    }
}

fn normals(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn generate_replicate(design: &SimDesign, seed: u64) -> Result<SimReplicate> {
    design.validate()?;
    let n = design.n;
    let mut rng = rng_from_seed(seed);
    let d = design.group_noise_scale();
    let mut all: Vec<Vec<f64>> = Vec::with_capacity(design.n_generated);
    let mut latent: [Option<Vec<f64>>; 2] = [None, None];
    for id in 1..=design.n_generated {
        match GROUPS.iter().position(|g| g.contains(&id)) {
            Some(g) => {
                let w = latent[g].get_or_insert_with(|| normals(&mut rng, n)).clone();
                let eta = normals(&mut rng, n);
                all.push(w.iter().zip(&eta).map(|(w, e)| w + d * e).collect());
            }
            None => all.push(normals(&mut rng, n)),
        }
    }
    let sd = design.noise_variance.sqrt();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let signal: f64 = SIGNAL.iter().map(|&id| all[id - 1][i]).sum();
            let e: f64 = rng.sample(StandardNormal);
            signal + sd * e
        })
        .collect();
    let mut columns = Vec::with_capacity(design.n_generated - 1);
    let mut names = Vec::with_capacity(design.n_generated - 1);
    let mut column_ids = Vec::with_capacity(design.n_generated - 1);
    for (i, col) in all.into_iter().enumerate() {
        let id = i + 1;
        if id == DROPPED {
            continue;
        }
        columns.push(col);
        names.push(format!("Z{id}"));
        column_ids.push(id);
    }
    let dataset = Dataset::from_columns(
        y.clone(),
        vec![vec![1.0; n]],
        columns.clone(),
        vec!["(Intercept)".into()],
        names.clone(),
    )?;
    Ok(SimReplicate {
        y,
        columns,
        names,
        column_ids,
        dataset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: usize,
    pub seed: u64,
    pub eb_selected: Vec<usize>,
    pub eb_true_positives: usize,
    pub eb_false_positives: usize,
    pub lasso_selected: Vec<usize>,
    pub lasso_true_positives: usize,
    pub lasso_false_positives: usize,
    pub r2_true: f64,
    pub r2_eb: f64,
    pub r2_lasso: f64,
    pub eb_iterations: usize,
    pub eb_converged: bool,
    pub eb_initial_loglik: f64,
    pub eb_final_loglik: f64,
    pub eb_moves: Vec<MoveRecord>,
    pub lasso_lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub replicate: usize,
    pub seed: u64,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub replicates: usize,
    pub failures: usize,
    pub eb_true_positive_median: f64,
    pub eb_false_positive_median: f64,
    pub lasso_true_positive_median: f64,
    pub lasso_false_positive_median: f64,
    pub eb_max_true_positives: usize,
    pub eb_exactly_three_true_positives: f64,
    pub eb_zero_false_positives: f64,
    pub lasso_exactly_three_true_positives: f64,
    pub r2_true_mean: f64,
    pub r2_eb_median: f64,
    pub r2_lasso_median: f64,
    /// Share of replicates with |R²_EB - R²_true| <= 0.15.
    pub eb_r2_within_0_15: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub design: SimDesign,
    pub rows: Vec<ReplicateRecord>,
    pub failures: Vec<ReplicateFailure>,
    pub summary: SimSummary,
}

fn count_sets(ids: &[usize]) -> (usize, usize) {
    let tp = ids.iter().filter(|id| TRUE_POSITIVE_SET.contains(id)).count();
    let fp = ids.iter().filter(|&&id| id > DROPPED).count();
    (tp, fp)
}

/// Fit both methods on one replicate.
pub fn run_replicate(
    design: &SimDesign,
    replicate: usize,
    em_config: &EmConfig,
    lasso_config: &LassoConfig,
) -> Result<ReplicateRecord> {
    let seed = derive_seed(design.seed, replicate as u64);
    let rep = generate_replicate(design, seed)?;
    let n = design.n;

    let em_cfg = EmConfig { seed: derive_seed(seed, 1), ..em_config.clone() };
    let (fit, trace) = run_em(&rep.dataset, &em_cfg)?;
    let eb_ids: Vec<usize> = fit.selected.iter().map(|s| rep.column_ids[s.index]).collect();
    let (eb_tp, eb_fp) = count_sets(&eb_ids);
    let r2_eb = if fit.selected.is_empty() {
        0.0
    } else {
        refit_selection(&rep.dataset, &fit.selected)?.r_squared
    };

    let lasso_cfg = LassoConfig { seed: derive_seed(seed, 2), ..lasso_config.clone() };
    let cv = lasso_cv_select(&rep.y, &rep.columns, &lasso_cfg)?;
    let lasso_ids: Vec<usize> = cv.selected.iter().map(|&j| rep.column_ids[j]).collect();
    let (lasso_tp, lasso_fp) = count_sets(&lasso_ids);

    let true_cols: Vec<usize> = TRUE_MODEL
        .iter()
        .map(|&id| rep.position_of(id).expect("true-model column retained"))
        .collect();
    let design_true = DMatrix::from_fn(n, 1 + true_cols.len(), |i, j| {
        if j == 0 {
            1.0
        } else {
            rep.columns[true_cols[j - 1]][i]
        }
    });
    let names_true: Vec<String> = std::iter::once("(Intercept)".to_string())
        .chain(TRUE_MODEL.iter().map(|id| format!("Z{id}")))
        .collect();
    let r2_true = ols_refit(&rep.y, &design_true, &names_true)?.r_squared;

    Ok(ReplicateRecord {
        replicate,
        seed,
        eb_selected: eb_ids,
        eb_true_positives: eb_tp,
        eb_false_positives: eb_fp,
        lasso_selected: lasso_ids,
        lasso_true_positives: lasso_tp,
        lasso_false_positives: lasso_fp,
        r2_true,
        r2_eb,
        r2_lasso: cv.median_r2,
        eb_iterations: fit.iterations,
        eb_converged: fit.converged,
        eb_initial_loglik: fit.initial_log_likelihood,
        eb_final_loglik: fit.log_likelihood,
        eb_moves: trace.moves().cloned().collect(),
        lasso_lambda: cv.lambda_star,
    })
}

fn proportion(rows: &[ReplicateRecord], f: impl Fn(&ReplicateRecord) -> bool) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    rows.iter().filter(|r| f(r)).count() as f64 / rows.len() as f64
}

fn summarize(rows: &[ReplicateRecord], failures: usize) -> SimSummary {
    let col = |f: fn(&ReplicateRecord) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    SimSummary {
        replicates: rows.len(),
        failures,
        eb_true_positive_median: median(&col(|r| r.eb_true_positives as f64)),
        eb_false_positive_median: median(&col(|r| r.eb_false_positives as f64)),
        lasso_true_positive_median: median(&col(|r| r.lasso_true_positives as f64)),
        lasso_false_positive_median: median(&col(|r| r.lasso_false_positives as f64)),
        eb_max_true_positives: rows.iter().map(|r| r.eb_true_positives).max().unwrap_or(0),
        eb_exactly_three_true_positives: proportion(rows, |r| r.eb_true_positives == 3),
        eb_zero_false_positives: proportion(rows, |r| r.eb_false_positives == 0),
        lasso_exactly_three_true_positives: proportion(rows, |r| r.lasso_true_positives == 3),
        r2_true_mean: col(|r| r.r2_true).iter().sum::<f64>() / rows.len().max(1) as f64,
        r2_eb_median: median(&col(|r| r.r2_eb)),
        r2_lasso_median: median(&col(|r| r.r2_lasso)),
        eb_r2_within_0_15: proportion(rows, |r| (r.r2_eb - r.r2_true).abs() <= 0.15),
    }
}

/// Run every replicate. Individual failures are recorded; more than 10%
/// failures abort the study.
pub fn run_study(design: &SimDesign, em_config: &EmConfig, lasso_config: &LassoConfig) -> Result<SimReport> {
    design.validate()?;
    em_config.validate()?;
    lasso_config.validate()?;
    let run = |r: usize| (r, run_replicate(design, r, em_config, lasso_config));
    let outcomes: Vec<(usize, Result<ReplicateRecord>)> = if design.parallel {
        (0..design.replicates).into_par_iter().map(run).collect()
    } else {
        (0..design.replicates).map(run).collect()
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (r, out) in outcomes {
        match out {
            Ok(rec) => rows.push(rec),
            Err(e) => failures.push(ReplicateFailure {
                replicate: r,
                seed: derive_seed(design.seed, r as u64),
                message: e.to_string(),
            }),
        }
    }
    if failures.len() * 10 > design.replicates {
        return Err(Error::Study {
            failed: failures.len(),
            total: design.replicates,
        });
    }
    let summary = summarize(&rows, failures.len());
    Ok(SimReport {
        design: design.clone(),
        rows,
        failures,
        summary,
    })
}

impl SimReport {
    /// One row per replicate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "replicate",
            "seed",
            "eb_true_positives",
            "eb_false_positives",
            "lasso_true_positives",
            "lasso_false_positives",
            "r2_true",
            "r2_eb",
            "r2_lasso",
            "eb_selected",
            "lasso_selected",
        ])?;
        let ids = |v: &[usize]| v.iter().map(|id| format!("Z{id}")).collect::<Vec<_>>().join(";");
        for r in &self.rows {
            w.write_record([
                r.replicate.to_string(),
                r.seed.to_string(),
                r.eb_true_positives.to_string(),
                r.eb_false_positives.to_string(),
                r.lasso_true_positives.to_string(),
                r.lasso_false_positives.to_string(),
                fmt_f64(r.r2_true),
                fmt_f64(r.r2_eb),
                fmt_f64(r.r2_lasso),
                ids(&r.eb_selected),
                ids(&r.lasso_selected),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
