//! The approximate EM loop.
//!
//! Each iteration evaluates every putative column under the three indicator
//! values (E-step), applies the configured selection move, then updates the
//! mean, the variance components and the mixture weights (M-step).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, LeastSquares};
use crate::model::{
    build_covariance, check_params, clamp_probabilities, class_of, log_likelihood, prior_term,
    residual, CovarianceHandle, Dataset, LatentState, ModelParams, SIGMA_FLOOR,
};
use crate::rng::rng_from_seed;
use crate::selection::{
    candidates_from_evals, choose_move_greedy, choose_move_weighted, correlation_adjust,
    finalize_selection, guard_batch, posterior_threshold_update, Posterior, SelectedColumn,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    PosteriorThreshold,
    Greedy,
    Weighted,
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "posterior_threshold" | "posterior-threshold" | "threshold" => {
                Ok(Strategy::PosteriorThreshold)
            }
            "greedy" => Ok(Strategy::Greedy),
            "weighted" => Ok(Strategy::Weighted),
            other => Err(Error::InvalidInput(format!("unknown strategy `{other}`"))),
        }
    }
}

/// Handling of putative columns that are highly correlated with the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorrelationConfig {
    /// Refuse to add a column whose |r| with an active column reaches the cutoff.
    pub guard: bool,
    /// Shrink non-null posteriors by `1 - max r^2` against the active set.
    pub shrink: bool,
    pub max_abs_correlation: f64,
}

impl Default for CorrelationConfig {
    fn default() -> Self {
        Self {
            guard: true,
            shrink: false,
            max_abs_correlation: 0.975,
        }
    }
}

impl CorrelationConfig {
    pub fn squared_cutoff(&self) -> f64 {
        self.max_abs_correlation * self.max_abs_correlation
    }
}

/// Optional starting values; anything left `None` uses the default start.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitOverrides {
    pub beta: Option<Vec<f64>>,
    pub mu: Option<f64>,
    pub sigma2: Option<f64>,
    pub sigma2_e: Option<f64>,
    pub p: Option<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub null_threshold: f64,
    pub delta: f64,
    pub strategy: Strategy,
    pub seed: u64,
    pub correlation: CorrelationConfig,
    pub init: InitOverrides,
    /// Evaluate columns on the rayon pool. Results do not depend on it.
    pub parallel: bool,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-6,
            null_threshold: 0.8,
            delta: std::f64::consts::LN_2,
            strategy: Strategy::Greedy,
            seed: 0,
            correlation: CorrelationConfig::default(),
            init: InitOverrides::default(),
            parallel: true,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Schema(format!("tol must be positive, got {}", self.tol)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::Schema(format!("delta must be non-negative, got {}", self.delta)));
        }
        if !(self.null_threshold > 0.0 && self.null_threshold < 1.0) {
            return Err(Error::Schema(format!(
                "null_threshold must lie in (0, 1), got {}",
                self.null_threshold
            )));
        }
        let r = self.correlation.max_abs_correlation;
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::Schema(format!("max_abs_correlation must lie in (0, 1], got {r}")));
        }
        Ok(())
    }
}

/// An applied change to one indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoveRecord {
    pub k: usize,
    pub sign: i8,
    /// Predicted gain `l_k(s) - l_t` at the parameters of the E-step.
    pub gain: f64,
    /// Log-likelihood before and after the move, before the M-step.
    pub loglik_before: f64,
    pub loglik_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub log_likelihood: f64,
    pub n_active: usize,
    pub params: ModelParams,
    pub moves: Vec<MoveRecord>,
    /// The mean update could not identify `mu` and kept it fixed.
    pub mu_frozen: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn moves(&self) -> impl Iterator<Item = &MoveRecord> {
        self.records.iter().flat_map(|r| r.moves.iter())
    }

    pub fn initial_log_likelihood(&self) -> Option<f64> {
        self.records.first().map(|r| r.log_likelihood)
    }

    pub fn final_log_likelihood(&self) -> Option<f64> {
        self.records.last().map(|r| r.log_likelihood)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    pub gamma: Vec<f64>,
    pub posteriors: Vec<Posterior>,
    pub selected: Vec<SelectedColumn>,
    pub log_likelihood: f64,
    pub initial_log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Starting values: OLS for `beta`, `mu = 0`, both variances at `RSS / 2N`,
/// weights `(0.9, 0.05, 0.05)` and an empty active set.
pub fn init_params(data: &Dataset, config: &EmConfig) -> Result<(ModelParams, LatentState)> {
    let n = data.n();
    let ls = LeastSquares::fit(data.x(), data.y(), data.x_names())?;
    let fitted = data.x() * &ls.coef;
    let rss = (data.y() - fitted).norm_squared();
    let start_var = (rss / (2.0 * n as f64)).max(SIGMA_FLOOR);
    let o = &config.init;
    let beta = match &o.beta {
        Some(b) if b.len() != data.j() => {
            return Err(Error::InvalidInput(format!(
                "initial beta has {} entries for {} locked-in columns",
                b.len(),
                data.j()
            )))
        }
        Some(b) => b.clone(),
        None => ls.coef.as_slice().to_vec(),
    };
    let params = ModelParams {
        beta,
        mu: o.mu.unwrap_or(0.0),
        sigma2: o.sigma2.unwrap_or(start_var).max(0.0),
        sigma2_e: o.sigma2_e.unwrap_or(start_var).max(SIGMA_FLOOR),
        p: clamp_probabilities(o.p.unwrap_or([0.9, 0.05, 0.05]), data.k()),
    };
    Ok((params, LatentState::empty(data.k())))
}

/// Everything the E-step knows about one column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnEval {
    /// Marginal log density with the column's indicator at -1, 0, +1.
    pub log_density: [f64; 3],
    /// Full log-likelihood `l_k(s)` for s = -1, 0, +1.
    pub loglik: [f64; 3],
    /// Current log-likelihood `l_t`.
    pub loglik_current: f64,
    pub posterior: Posterior,
    /// Largest squared correlation with the other active columns.
    pub max_r2: f64,
}

struct Base<'a> {
    handle: CovarianceHandle<'a>,
    r: DVector<f64>,
    quad: f64,
    log_det: f64,
}

impl<'a> Base<'a> {
    fn new(state: &'a LatentState, params: &ModelParams, r: DVector<f64>) -> Result<Self> {
        let handle = build_covariance(state, params, r.len())?;
        let quad = dot(r.as_slice(), handle.solve(r.as_slice()).as_slice());
        let log_det = handle.log_det();
        Ok(Self {
            handle,
            r,
            quad,
            log_det,
        })
    }

    /// Log densities for s = -1, 0, +1 obtained by bordering the base with
    /// column `z`: `Sigma_s = Sigma_b + s2 z z'` and mean shifted by `s mu z`.
    fn densities(&self, z: &[f64], params: &ModelParams) -> [f64; 3] {
        let n = z.len() as f64;
        let c = -0.5 * n * (2.0 * PI).ln();
        let w = self.handle.solve(z);
        let a = dot(z, w.as_slice());
        let b = dot(w.as_slice(), self.r.as_slice());
        let (s2, mu) = (params.sigma2, params.mu);
        let denom = 1.0 + s2 * a;
        let mut out = [0.0; 3];
        for (slot, s) in [(0usize, -1.0), (2, 1.0)] {
            let e = b - s * mu * a;
            let quad = self.quad - 2.0 * s * mu * b + mu * mu * a - s2 * e * e / denom;
            out[slot] = c - 0.5 * (self.log_det + denom.ln()) - 0.5 * quad;
        }
        out[1] = c - 0.5 * self.log_det - 0.5 * self.quad;
        out
    }
}

fn normalize_log_weights(lw: [f64; 3]) -> Posterior {
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = lw.map(|v| (v - m).exp());
    let s: f64 = e.iter().sum();
    e.map(|v| v / s)
}

/// Prior index of sign `s`: 0 -> p0, +1 -> p1, -1 -> p2.
fn prior_index(slot: usize) -> usize {
    [2, 0, 1][slot]
}

struct EStep<'a> {
    data: &'a Dataset,
    state: &'a LatentState,
    params: ModelParams,
    base: Base<'a>,
    log_p: [f64; 3],
    prior: f64,
    loglik: f64,
}

impl<'a> EStep<'a> {
    fn new(data: &'a Dataset, state: &'a LatentState, params: &ModelParams) -> Result<Self> {
        check_params(data, params)?;
        let mut params = params.clone();
        params.p = clamp_probabilities(params.p, data.k());
        let r = residual(data, state, &params);
        let base = Base::new(state, &params, r)?;
        let prior = prior_term(state.counts(), params.p, data.k());
        let n = data.n() as f64;
        let loglik = prior - 0.5 * n * (2.0 * PI).ln() - 0.5 * base.log_det - 0.5 * base.quad;
        Ok(Self {
            data,
            state,
            log_p: params.p.map(f64::ln),
            params,
            base,
            prior,
            loglik,
        })
    }

    fn evaluate(&self, k: usize) -> Result<ColumnEval> {
        let z = self.data.z_column(k)?;
        let current = self.state.gamma()[k];
        let log_density = if current == 0.0 {
            self.base.densities(&z, &self.params)
        } else {
            let mut reduced = self.state.clone();
            reduced.set_gamma(self.data, k, 0.0)?;
            let mut r = self.base.r.clone();
            let shift = self.params.mu * current;
            for (ri, zi) in r.iter_mut().zip(z.iter()) {
                *ri += shift * zi;
            }
            Base::new(&reduced, &self.params, r)?.densities(&z, &self.params)
        };
        let prior_without = self.prior - self.log_p[class_of(current)];
        let mut loglik = [0.0; 3];
        let mut lw = [0.0; 3];
        for slot in 0..3 {
            let lp = self.log_p[prior_index(slot)];
            loglik[slot] = log_density[slot] + prior_without + lp;
            lw[slot] = log_density[slot] + lp;
        }
        Ok(ColumnEval {
            log_density,
            loglik,
            loglik_current: self.loglik,
            posterior: normalize_log_weights(lw),
            max_r2: crate::selection::max_squared_correlation(&z, self.state, Some(k)),
        })
    }
}

/// Evaluate every putative column against a frozen snapshot. Results come
/// back in column order whether or not the pool is used.
pub fn evaluate_columns(
    data: &Dataset,
    state: &LatentState,
    params: &ModelParams,
    parallel: bool,
) -> Result<Vec<ColumnEval>> {
    let estep = EStep::new(data, state, params)?;
    if parallel {
        (0..data.k()).into_par_iter().map(|k| estep.evaluate(k)).collect()
    } else {
        (0..data.k()).map(|k| estep.evaluate(k)).collect()
    }
}

/// Posterior `(P(-1), P(0), P(+1))` for column `k`, holding the other
/// indicators at their current values.
pub fn e_step_posteriors(
    data: &Dataset,
    state: &LatentState,
    params: &ModelParams,
    k: usize,
) -> Result<Posterior> {
    if k >= data.k() {
        return Err(Error::InvalidInput(format!("column {k} out of range")));
    }
    Ok(EStep::new(data, state, params)?.evaluate(k)?.posterior)
}

/// Same posterior computed by refactoring Sigma from scratch for each
/// candidate value.
pub fn e_step_posteriors_refactored(
    data: &Dataset,
    state: &LatentState,
    params: &ModelParams,
    k: usize,
) -> Result<Posterior> {
    let p = clamp_probabilities(params.p, data.k());
    let mut lw = [0.0; 3];
    for (slot, s) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
        let mut st = state.clone();
        st.set_gamma(data, k, s)?;
        lw[slot] = crate::model::log_density(data, &st, params)? + p[prior_index(slot)].ln();
    }
    Ok(normalize_log_weights(lw))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeanUpdate {
    pub beta: Vec<f64>,
    pub mu: f64,
    /// `W' Sigma^-1 W` was singular with the `mu` column, so `mu` was held.
    pub mu_frozen: bool,
}

/// Generalized least squares for `(beta, mu)` with `W = [X, V 1]`.
pub fn m_step_mean(data: &Dataset, state: &LatentState, params: &ModelParams) -> Result<MeanUpdate> {
    check_params(data, params)?;
    let n = data.n();
    let handle = build_covariance(state, params, n)?;
    let l = state.n_active();
    let mut w_cols: Vec<DVector<f64>> = data.x().column_iter().map(|c| c.into_owned()).collect();
    if l > 0 {
        w_cols.push(state.v_mul(&vec![1.0; l], n));
    }
    let sinv_w: Vec<DVector<f64>> = w_cols.iter().map(|c| handle.solve(c.as_slice())).collect();

    let gls = |cols: usize, y: &DVector<f64>| {
        let a = DMatrix::from_fn(cols, cols, |i, j| w_cols[i].dot(&sinv_w[j]));
        let rhs = DVector::from_fn(cols, |i, _| sinv_w[i].dot(y));
        a.cholesky().map(|ch| ch.solve(&rhs))
    };

    let j = data.j();
    if l > 0 {
        if let Some(sol) = gls(j + 1, data.y()) {
            return Ok(MeanUpdate {
                beta: sol.rows(0, j).iter().copied().collect(),
                mu: sol[j],
                mu_frozen: false,
            });
        }
    }
    let mu = params.mu;
    let y_adj = if l > 0 { data.y() - &w_cols[j] * mu } else { data.y().clone() };
    if j == 0 {
        return Ok(MeanUpdate {
            beta: Vec::new(),
            mu,
            mu_frozen: l > 0,
        });
    }
    let sol = gls(j, &y_adj).ok_or_else(|| {
        Error::Numerical("X' Sigma^-1 X is singular; the locked-in design is rank deficient".into())
    })?;
    Ok(MeanUpdate {
        beta: sol.iter().copied().collect(),
        mu,
        mu_frozen: l > 0,
    })
}

/// EM updates of `(sigma2_e, sigma2)` from the trace identities. `params`
/// must already carry the fresh `(beta, mu)`.
pub fn m_step_variances(
    data: &Dataset,
    state: &LatentState,
    params: &ModelParams,
) -> Result<(f64, f64)> {
    check_params(data, params)?;
    let n = data.n() as f64;
    let r = residual(data, state, params);
    let l = state.n_active();
    if l == 0 {
        let s2e = (r.norm_squared() / n).max(SIGMA_FLOOR);
        return Ok((s2e, params.sigma2));
    }
    let handle = build_covariance(state, params, data.n())?;
    let (s2, s2e) = (params.sigma2, params.sigma2_e);
    let sinv_r = handle.solve(r.as_slice());

    let tau_e = s2 * handle.trace_minv_vtv() + s2e * s2e * sinv_r.norm_squared();
    let vt_sinv_r = state.vt_mul(sinv_r.as_slice());
    let tau_r = l as f64 * s2 - s2 * s2 * handle.vt_sigma_inv_v().trace()
        + s2 * s2 * vt_sinv_r.norm_squared();

    Ok(((tau_e / n).max(SIGMA_FLOOR), (tau_r / l as f64).max(0.0)))
}

/// Mixture weights `(p0, p1, p2)` from posterior responsibilities, clamped.
pub fn m_step_mixture(posteriors: &[Posterior]) -> [f64; 3] {
    let k = posteriors.len();
    let raw = mixture_unclamped(posteriors);
    clamp_probabilities(raw, k)
}

pub(crate) fn mixture_unclamped(posteriors: &[Posterior]) -> [f64; 3] {
    let k = posteriors.len().max(1) as f64;
    let mut sums = [0.0; 3];
    for &[pm, p0, pp] in posteriors {
        sums[0] += p0;
        sums[1] += pp;
        sums[2] += pm;
    }
    sums.map(|s| s / k)
}

/// Run EM from the default start until convergence or `max_iter`.
pub fn run_em(data: &Dataset, config: &EmConfig) -> Result<(FitResult, IterationTrace)> {
    config.validate()?;
    let (mut params, mut state) = init_params(data, config)?;
    let mut rng = rng_from_seed(config.seed);
    let mut ll = log_likelihood(data, &state, &params)?;
    if !ll.is_finite() {
        return Err(Error::NonFiniteLikelihood { iteration: 0 });
    }
    let initial_ll = ll;
    let mut trace = IterationTrace {
        records: vec![IterationRecord {
            iteration: 0,
            log_likelihood: ll,
            n_active: 0,
            params: params.clone(),
            moves: Vec::new(),
            mu_frozen: false,
        }],
    };
    let mut converged = false;
    let mut iterations = 0;
    let cutoff = config.correlation.squared_cutoff();

    for it in 1..=config.max_iter {
        iterations = it;
        let evals = evaluate_columns(data, &state, &params, config.parallel)?;
        let mut posteriors: Vec<Posterior> = evals.iter().map(|e| e.posterior).collect();
        if config.correlation.shrink {
            for (k, (p, e)) in posteriors.iter_mut().zip(&evals).enumerate() {
                if !state.is_active(k) {
                    *p = correlation_adjust(*p, e.max_r2);
                }
            }
        }

        let mut moves = Vec::new();
        match config.strategy {
            Strategy::Greedy | Strategy::Weighted => {
                let candidates = candidates_from_evals(&evals, &state, config);
                let chosen = match config.strategy {
                    Strategy::Greedy => choose_move_greedy(&candidates),
                    _ => choose_move_weighted(&candidates, &mut rng),
                };
                if let Some(mv) = chosen {
                    state.set_gamma(data, mv.k, mv.sign as f64)?;
                    let after = log_likelihood(data, &state, &params)?;
                    moves.push(MoveRecord {
                        k: mv.k,
                        sign: mv.sign,
                        gain: mv.gain,
                        loglik_before: ll,
                        loglik_after: after,
                    });
                }
            }
            Strategy::PosteriorThreshold => {
                let proposed = posterior_threshold_update(&posteriors, config.null_threshold);
                let proposed = if config.correlation.guard {
                    guard_batch(data, &proposed, &posteriors, cutoff)?
                } else {
                    proposed
                };
                let changed: Vec<usize> = (0..data.k())
                    .filter(|&k| class_of(proposed[k]) != class_of(state.gamma()[k]))
                    .collect();
                state.set_all(data, &proposed)?;
                if !changed.is_empty() {
                    let after = log_likelihood(data, &state, &params)?;
                    for k in changed {
                        let sign = match class_of(proposed[k]) {
                            0 => 0,
                            1 => 1,
                            _ => -1,
                        };
                        moves.push(MoveRecord {
                            k,
                            sign,
                            gain: evals[k].loglik[(sign + 1) as usize] - ll,
                            loglik_before: ll,
                            loglik_after: after,
                        });
                    }
                }
            }
        }

        let mean = m_step_mean(data, &state, &params)?;
        params.beta = mean.beta;
        params.mu = mean.mu;
        let (s2e, s2) = m_step_variances(data, &state, &params)?;
        params.sigma2_e = s2e;
        params.sigma2 = s2;
        params.p = m_step_mixture(&posteriors);

        let new_ll = log_likelihood(data, &state, &params)?;
        if !new_ll.is_finite() {
            return Err(Error::NonFiniteLikelihood { iteration: it });
        }
        let moved = !moves.is_empty();
        trace.records.push(IterationRecord {
            iteration: it,
            log_likelihood: new_ll,
            n_active: state.n_active(),
            params: params.clone(),
            moves,
            mu_frozen: mean.mu_frozen,
        });
        let small = (new_ll - ll).abs() < config.tol * (1.0 + ll.abs());
        ll = new_ll;
        if small && !moved {
            converged = true;
            break;
        }
    }

    let evals = evaluate_columns(data, &state, &params, config.parallel)?;
    let mut posteriors: Vec<Posterior> = evals.iter().map(|e| e.posterior).collect();
    if config.correlation.shrink {
        for (k, (p, e)) in posteriors.iter_mut().zip(&evals).enumerate() {
            if !state.is_active(k) {
                *p = correlation_adjust(*p, e.max_r2);
            }
        }
    }
    let mut gamma = state.gamma().to_vec();
    canonicalize_sign(&mut params, &mut gamma, &mut posteriors);
    let selected = finalize_selection(data, &posteriors, config)?;
    Ok((
        FitResult {
            params,
            gamma,
            posteriors,
            selected,
            log_likelihood: ll,
            initial_log_likelihood: initial_ll,
            iterations,
            converged,
        },
        trace,
    ))
}

/// The likelihood is unchanged by flipping `mu` together with every
/// indicator (and swapping p1/p2). Report the orientation with `mu >= 0`, so
/// indicator signs read as effect directions.
fn canonicalize_sign(params: &mut ModelParams, gamma: &mut [f64], posteriors: &mut [Posterior]) {
    if params.mu >= 0.0 {
        return;
    }
    params.mu = -params.mu;
    params.p.swap(1, 2);
    for g in gamma.iter_mut() {
        *g = -*g;
    }
    for p in posteriors.iter_mut() {
        p.swap(0, 2);
    }
}
