//! Domain types and the low-rank covariance machinery.
//!
//! The marginal model for the response is
//!
//! ```text
//! y ~ N(X beta + mu V 1, Sigma),   Sigma = s2e I_N + s2 V V',   V = Z_L Gamma_L
//! ```
//!
//! where `Z_L` holds the active putative columns and `Gamma_L` their
//! indicator values. `Sigma` is never formed: solves and determinants go
//! through the L x L matrix `M = I_L + (s2/s2e) Gamma_L Z_L' Z_L Gamma_L`.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::columns::{ColumnSource, InMemoryColumns};
use crate::error::{Error, Result};
use crate::linalg::dot;

/// Lower bound on the error variance.
pub const SIGMA_FLOOR: f64 = 1e-12;

/// Response, locked-in design and putative columns.
#[derive(Clone)]
pub struct Dataset {
    y: DVector<f64>,
    x: DMatrix<f64>,
    z: Arc<dyn ColumnSource>,
    x_names: Vec<String>,
    z_names: Vec<String>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset")
            .field("n", &self.n())
            .field("j", &self.j())
            .field("k", &self.k())
            .finish()
    }
}

impl Dataset {
    pub fn new(
        y: Vec<f64>,
        x: DMatrix<f64>,
        z: Arc<dyn ColumnSource>,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if n < 2 {
            return Err(Error::InvalidInput(format!("need at least 2 observations, got {n}")));
        }
        if x.nrows() != n || z.n_rows() != n {
            return Err(Error::InvalidInput(format!(
                "row mismatch: y has {n}, X has {}, Z has {}",
                x.nrows(),
                z.n_rows()
            )));
        }
        if z.n_cols() == 0 {
            return Err(Error::InvalidInput("no putative columns".into()));
        }
        if x_names.len() != x.ncols() || z_names.len() != z.n_cols() {
            return Err(Error::InvalidInput("column name count mismatch".into()));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("response is non-finite at row {i}")));
        }
        if let Some(i) = x.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "locked-in column {} is non-finite at row {}",
                i / n,
                i % n
            )));
        }
        Ok(Self {
            y: DVector::from_vec(y),
            x,
            z,
            x_names,
            z_names,
        })
    }

    /// Intercept-only locked-in design with in-memory putative columns.
    pub fn with_intercept(y: Vec<f64>, z_columns: Vec<Vec<f64>>) -> Result<Self> {
        let n = y.len();
        let names = (0..z_columns.len()).map(|k| format!("z{}", k + 1)).collect();
        Self::from_columns(y, vec![vec![1.0; n]], z_columns, vec!["(Intercept)".into()], names)
    }

    pub fn from_columns(
        y: Vec<f64>,
        x_columns: Vec<Vec<f64>>,
        z_columns: Vec<Vec<f64>>,
        x_names: Vec<String>,
        z_names: Vec<String>,
    ) -> Result<Self> {
        let n = y.len();
        if let Some(c) = x_columns.iter().position(|c| c.len() != n) {
            return Err(Error::InvalidInput(format!("locked-in column {c} has the wrong length")));
        }
        let x = DMatrix::from_iterator(n, x_columns.len(), x_columns.into_iter().flatten());
        let z = InMemoryColumns::from_columns(z_columns)?;
        Self::new(y, x, Arc::new(z), x_names, z_names)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn j(&self) -> usize {
        self.x.ncols()
    }

    pub fn k(&self) -> usize {
        self.z.n_cols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn z_column(&self, k: usize) -> Result<Cow<'_, [f64]>> {
        self.z.column(k)
    }

    pub fn z_source(&self) -> &Arc<dyn ColumnSource> {
        &self.z
    }

    pub fn x_names(&self) -> &[String] {
        &self.x_names
    }

    pub fn z_names(&self) -> &[String] {
        &self.z_names
    }

    /// Same response and locked-in design over a different column source.
    pub fn with_source(&self, z: Arc<dyn ColumnSource>) -> Result<Self> {
        Self::new(
            self.y.as_slice().to_vec(),
            self.x.clone(),
            z,
            self.x_names.clone(),
            self.z_names.clone(),
        )
    }
}

/// Hyperparameters and fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub beta: Vec<f64>,
    pub mu: f64,
    pub sigma2: f64,
    pub sigma2_e: f64,
    /// Mixture weights `(p0, p1, p2)` for gamma = 0, +1, -1.
    pub p: [f64; 3],
}

/// Smallest admissible mixture weight for `k` putative columns.
pub fn probability_floor(k: usize) -> f64 {
    1.0 / (10.0 * k.max(1) as f64)
}

/// Clamp mixture weights to `[floor, 1]` and renormalize, keeping floored
/// components exactly at the floor.
pub fn clamp_probabilities(p: [f64; 3], k: usize) -> [f64; 3] {
    let floor = probability_floor(k);
    let mut out = p.map(|v| if v.is_finite() { v.max(0.0) } else { 0.0 });
    let mut pinned = [false; 3];
    loop {
        let free_mass: f64 = (0..3).filter(|&i| !pinned[i]).map(|i| out[i]).sum();
        let pinned_mass = floor * pinned.iter().filter(|&&b| b).count() as f64;
        let target = 1.0 - pinned_mass;
        let mut changed = false;
        for i in 0..3 {
            if pinned[i] {
                out[i] = floor;
            } else if free_mass > 0.0 {
                out[i] *= target / free_mass;
            } else {
                out[i] = target / (3 - pinned.iter().filter(|&&b| b).count()) as f64;
            }
        }
        for i in 0..3 {
            if !pinned[i] && out[i] < floor {
                pinned[i] = true;
                changed = true;
            }
        }
        if !changed {
            return out;
        }
    }
}

/// Prior class of an indicator value: 0 for gamma = 0, 1 for gamma > 0,
/// 2 for gamma < 0 (matching the order of [`ModelParams::p`]).
pub fn class_of(gamma: f64) -> usize {
    if gamma > 0.0 {
        1
    } else if gamma < 0.0 {
        2
    } else {
        0
    }
}

/// Per-column indicators plus the cached active columns and their Gram matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    gamma: Vec<f64>,
    active: Vec<usize>,
    columns: Vec<Vec<f64>>,
    gram: DMatrix<f64>,
}

impl LatentState {
    pub fn empty(k: usize) -> Self {
        Self {
            gamma: vec![0.0; k],
            active: Vec::new(),
            columns: Vec::new(),
            gram: DMatrix::zeros(0, 0),
        }
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Active column indices in ascending order.
    pub fn active(&self) -> &[usize] {
        &self.active
    }

    pub fn n_active(&self) -> usize {
        self.active.len()
    }

    pub fn active_column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    /// Inner products of the active columns (ungated by gamma).
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn is_active(&self, k: usize) -> bool {
        self.gamma[k] != 0.0
    }

    /// Counts `(c0, c1, c2)` of null, positive and negative indicators.
    pub fn counts(&self) -> [usize; 3] {
        let mut c = [0usize; 3];
        for &g in &self.gamma {
            c[class_of(g)] += 1;
        }
        c
    }

    pub fn active_gammas(&self) -> Vec<f64> {
        self.active.iter().map(|&k| self.gamma[k]).collect()
    }

    /// Set `gamma[k]`, fetching the column and its Gram row when it enters
    /// the active set and dropping them when it leaves.
    pub fn set_gamma(&mut self, data: &Dataset, k: usize, value: f64) -> Result<()> {
        if k >= self.gamma.len() {
            return Err(Error::InvalidInput(format!("column {k} out of range")));
        }
        if !value.is_finite() || value.abs() > 1.0 {
            return Err(Error::InvalidInput(format!("indicator value {value} outside [-1, 1]")));
        }
        let was = self.gamma[k] != 0.0;
        let now = value != 0.0;
        self.gamma[k] = value;
        match (was, now) {
            (false, true) => {
                let col = data.z_column(k)?.into_owned();
                let pos = self.active.partition_point(|&a| a < k);
                let l = self.active.len();
                let mut gram = DMatrix::zeros(l + 1, l + 1);
                for i in 0..l {
                    let ii = if i < pos { i } else { i + 1 };
                    for j in 0..l {
                        let jj = if j < pos { j } else { j + 1 };
                        gram[(ii, jj)] = self.gram[(i, j)];
                    }
                }
                for i in 0..l {
                    let ii = if i < pos { i } else { i + 1 };
                    let v = dot(&self.columns[i], &col);
                    gram[(ii, pos)] = v;
                    gram[(pos, ii)] = v;
                }
                gram[(pos, pos)] = dot(&col, &col);
                self.gram = gram;
                self.active.insert(pos, k);
                self.columns.insert(pos, col);
            }
            (true, false) => {
                let pos = self.active.binary_search(&k).expect("active set out of sync");
                self.active.remove(pos);
                self.columns.remove(pos);
                self.gram = self.gram.clone().remove_row(pos).remove_column(pos);
            }
            _ => {}
        }
        Ok(())
    }

    /// Replace every indicator at once.
    pub fn set_all(&mut self, data: &Dataset, gamma: &[f64]) -> Result<()> {
        if gamma.len() != self.gamma.len() {
            return Err(Error::InvalidInput("indicator vector has the wrong length".into()));
        }
        for (k, &g) in gamma.iter().enumerate() {
            if g != self.gamma[k] {
                self.set_gamma(data, k, g)?;
            }
        }
        Ok(())
    }

    /// Recompute every cached Gram entry from the stored columns.
    pub fn refresh_gram(&mut self) {
        let l = self.active.len();
        self.gram = DMatrix::from_fn(l, l, |i, j| dot(&self.columns[i], &self.columns[j]));
    }

    /// `V c = sum_i gamma_i c_i z_i`.
    pub fn v_mul(&self, c: &[f64], n: usize) -> DVector<f64> {
        let mut out = DVector::zeros(n);
        for (i, &k) in self.active.iter().enumerate() {
            let w = self.gamma[k] * c[i];
            for (o, z) in out.iter_mut().zip(&self.columns[i]) {
                *o += w * z;
            }
        }
        out
    }

    /// `V' r`, entry i = gamma_i <z_i, r>.
    pub fn vt_mul(&self, r: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.active.len(),
            self.active
                .iter()
                .enumerate()
                .map(|(i, &k)| self.gamma[k] * dot(&self.columns[i], r)),
        )
    }

    /// `V' z` for an arbitrary column.
    pub fn vt_column(&self, z: &[f64]) -> DVector<f64> {
        self.vt_mul(z)
    }
}

/// Woodbury view of Sigma for a fixed state and variance pair.
pub struct CovarianceHandle<'a> {
    state: &'a LatentState,
    n: usize,
    sigma2: f64,
    sigma2_e: f64,
    /// `Gamma_L G Gamma_L = V'V`.
    vtv: DMatrix<f64>,
    m: DMatrix<f64>,
    chol: Option<Cholesky<f64, Dyn>>,
}

/// Factor `M = I_L + (s2/s2e) V'V` for the current active set.
pub fn build_covariance<'a>(
    state: &'a LatentState,
    params: &ModelParams,
    n: usize,
) -> Result<CovarianceHandle<'a>> {
    if !(params.sigma2_e > 0.0) || !params.sigma2_e.is_finite() {
        return Err(Error::Numerical(format!(
            "error variance must be positive, got {}",
            params.sigma2_e
        )));
    }
    if !(params.sigma2 >= 0.0) || !params.sigma2.is_finite() {
        return Err(Error::Numerical(format!(
            "random-effect variance must be non-negative, got {}",
            params.sigma2
        )));
    }
    let g = state.active_gammas();
    let l = g.len();
    let vtv = DMatrix::from_fn(l, l, |i, j| g[i] * state.gram[(i, j)] * g[j]);
    let ratio = params.sigma2 / params.sigma2_e;
    let m = DMatrix::identity(l, l) + &vtv * ratio;
    let chol = if l == 0 {
        None
    } else {
        Some(m.clone().cholesky().ok_or_else(|| {
            Error::Numerical("I + (s2/s2e) V'V is not positive definite".into())
        })?)
    };
    Ok(CovarianceHandle {
        state,
        n,
        sigma2: params.sigma2,
        sigma2_e: params.sigma2_e,
        vtv,
        m,
        chol,
    })
}

impl<'a> CovarianceHandle<'a> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_active(&self) -> usize {
        self.vtv.nrows()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn sigma2_e(&self) -> f64 {
        self.sigma2_e
    }

    /// The L x L matrix `M`.
    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    /// `V'V` for the active set.
    pub fn vtv(&self) -> &DMatrix<f64> {
        &self.vtv
    }

    pub fn state(&self) -> &LatentState {
        self.state
    }

    /// `M^{-1} c`.
    pub fn m_solve(&self, c: &DVector<f64>) -> DVector<f64> {
        match &self.chol {
            Some(ch) => ch.solve(c),
            None => c.clone(),
        }
    }

    pub fn m_inverse(&self) -> DMatrix<f64> {
        match &self.chol {
            Some(ch) => ch.inverse(),
            None => DMatrix::zeros(0, 0),
        }
    }

    /// `Sigma^{-1} r = r/s2e - (s2/s2e^2) V M^{-1} V' r`.
    pub fn solve(&self, r: &[f64]) -> DVector<f64> {
        let inv_e = 1.0 / self.sigma2_e;
        let mut out = DVector::from_iterator(r.len(), r.iter().map(|v| v * inv_e));
        if self.chol.is_some() && self.sigma2 != 0.0 {
            let c = self.m_solve(&self.state.vt_mul(r));
            let scale = self.sigma2 / (self.sigma2_e * self.sigma2_e);
            let vc = self.state.v_mul(c.as_slice(), r.len());
            out.axpy(-scale, &vc, 1.0);
        }
        out
    }

    /// `log|Sigma| = N log s2e + log|M|`.
    pub fn log_det(&self) -> f64 {
        let base = self.n as f64 * self.sigma2_e.ln();
        match &self.chol {
            Some(ch) => base + 2.0 * ch.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            None => base,
        }
    }

    /// `trace(M^{-1} V'V)`.
    pub fn trace_minv_vtv(&self) -> f64 {
        if self.n_active() == 0 {
            return 0.0;
        }
        (self.m_inverse() * &self.vtv).trace()
    }

    /// `trace(Sigma^{-1}) = N/s2e - (s2/s2e^2) trace(M^{-1} V'V)`.
    pub fn trace_inverse(&self) -> f64 {
        self.n as f64 / self.sigma2_e
            - self.sigma2 / (self.sigma2_e * self.sigma2_e) * self.trace_minv_vtv()
    }

    /// `V' Sigma^{-1} V = V'V/s2e - (s2/s2e^2) V'V M^{-1} V'V`.
    pub fn vt_sigma_inv_v(&self) -> DMatrix<f64> {
        let l = self.n_active();
        if l == 0 {
            return DMatrix::zeros(0, 0);
        }
        let minv_vtv = match &self.chol {
            Some(ch) => ch.solve(&self.vtv),
            None => self.vtv.clone(),
        };
        &self.vtv / self.sigma2_e
            - (&self.vtv * minv_vtv) * (self.sigma2 / (self.sigma2_e * self.sigma2_e))
    }
}

/// `y - X beta - mu V 1`.
pub fn residual(data: &Dataset, state: &LatentState, params: &ModelParams) -> DVector<f64> {
    let beta = DVector::from_column_slice(&params.beta);
    let mut r = data.y() - data.x() * beta;
    if params.mu != 0.0 && state.n_active() > 0 {
        let ones = vec![1.0; state.n_active()];
        r.axpy(-params.mu, &state.v_mul(&ones, data.n()), 1.0);
    }
    r
}

/// `sum_m c_m log p_m` with clamped weights.
pub fn prior_term(counts: [usize; 3], p: [f64; 3], k: usize) -> f64 {
    let p = clamp_probabilities(p, k);
    (0..3).map(|m| counts[m] as f64 * p[m].ln()).sum()
}

/// Gaussian part of the log-likelihood, given a factored handle and residual.
pub fn gaussian_log_density(handle: &CovarianceHandle<'_>, r: &[f64]) -> f64 {
    let n = r.len() as f64;
    let quad = dot(r, handle.solve(r).as_slice());
    -0.5 * n * (2.0 * PI).ln() - 0.5 * handle.log_det() - 0.5 * quad
}

/// Marginal Gaussian log density of `y` with the random effects integrated out.
pub fn log_density(data: &Dataset, state: &LatentState, params: &ModelParams) -> Result<f64> {
    check_params(data, params)?;
    let handle = build_covariance(state, params, data.n())?;
    let r = residual(data, state, params);
    Ok(gaussian_log_density(&handle, r.as_slice()))
}

/// Complete-data log-likelihood: prior count terms plus the marginal density.
pub fn log_likelihood(data: &Dataset, state: &LatentState, params: &ModelParams) -> Result<f64> {
    Ok(prior_term(state.counts(), params.p, data.k()) + log_density(data, state, params)?)
}

pub(crate) fn check_params(data: &Dataset, params: &ModelParams) -> Result<()> {
    if params.beta.len() != data.j() {
        return Err(Error::InvalidInput(format!(
            "beta has {} entries for {} locked-in columns",
            params.beta.len(),
            data.j()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_by_two() -> (Dataset, LatentState, ModelParams) {
        let data = Dataset::with_intercept(vec![1.0, 0.0], vec![vec![1.0, 1.0]]).unwrap();
        let mut state = LatentState::empty(1);
        state.set_gamma(&data, 0, 1.0).unwrap();
        let params = ModelParams {
            beta: vec![0.0],
            mu: 0.0,
            sigma2: 1.0,
            sigma2_e: 1.0,
            p: [0.5, 0.25, 0.25],
        };
        (data, state, params)
    }

    #[test]
    fn m_matrix_for_two_by_two() {
        let (_, state, params) = two_by_two();
        let h = build_covariance(&state, &params, 2).unwrap();
        assert_eq!(h.m().shape(), (1, 1));
        assert_relative_eq!(h.m()[(0, 0)], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn solve_matches_dense_inverse() {
        let (_, state, params) = two_by_two();
        let h = build_covariance(&state, &params, 2).unwrap();
        let s = h.solve(&[1.0, 0.0]);
        assert_relative_eq!(s[0], 2.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(s[1], -1.0 / 3.0, epsilon = 1e-14);
        let zero = h.solve(&[0.0, 0.0]);
        assert_eq!(zero.as_slice(), &[0.0, 0.0]);
        assert_relative_eq!(h.log_det(), 3f64.ln(), epsilon = 1e-14);
    }

    #[test]
    fn empty_active_set_is_diagonal() {
        let data = Dataset::with_intercept(vec![1.0, 2.0], vec![vec![1.0, 3.0]]).unwrap();
        let state = LatentState::empty(1);
        let params = ModelParams {
            beta: vec![0.0],
            mu: 0.0,
            sigma2: 1.0,
            sigma2_e: 2.0,
            p: [0.9, 0.05, 0.05],
        };
        let h = build_covariance(&state, &params, 2).unwrap();
        assert_eq!(h.solve(&[4.0, 6.0]).as_slice(), &[2.0, 3.0]);
        let _ = data;

        let p3 = ModelParams { sigma2_e: 1.0, ..params.clone() };
        assert_eq!(build_covariance(&state, &p3, 3).unwrap().log_det(), 0.0);
        let pe = ModelParams { sigma2_e: std::f64::consts::E, ..params };
        assert_relative_eq!(build_covariance(&state, &pe, 4).unwrap().log_det(), 4.0, epsilon = 1e-14);
    }

    #[test]
    fn zero_random_variance_is_diagonal() {
        let (_, state, mut params) = two_by_two();
        params.sigma2 = 0.0;
        params.sigma2_e = 4.0;
        let h = build_covariance(&state, &params, 2).unwrap();
        assert_eq!(h.solve(&[4.0, -8.0]).as_slice(), &[1.0, -2.0]);
    }

    #[test]
    fn loglik_single_observation_standard_normal() {
        let data = Dataset::from_columns(
            vec![0.0, 0.0],
            vec![vec![1.0, 1.0]],
            vec![vec![1.0, -1.0]],
            vec!["int".into()],
            vec!["z".into()],
        )
        .unwrap();
        let state = LatentState::empty(1);
        let params = ModelParams {
            beta: vec![0.0],
            mu: 0.0,
            sigma2: 1.0,
            sigma2_e: 1.0,
            p: [1.0, 0.0, 0.0],
        };
        let p = clamp_probabilities(params.p, 1);
        let ll = log_likelihood(&data, &state, &params).unwrap();
        assert_relative_eq!(ll, -(2.0 * PI).ln() + p[0].ln(), epsilon = 1e-14);
    }

    #[test]
    fn loglik_two_by_two_against_hand_value() {
        let (data, state, params) = two_by_two();
        let ll = log_likelihood(&data, &state, &params).unwrap();
        let prior = 0.25f64.ln();
        let expected = prior - (2.0 * PI).ln() - 0.5 * 3f64.ln() - 0.5 * (2.0 / 3.0);
        assert_relative_eq!(ll, expected, epsilon = 1e-14);
    }

    #[test]
    fn doubling_error_variance_shifts_loglik() {
        let data = Dataset::with_intercept(vec![1.0, -2.0, 0.5], vec![vec![1.0, 0.0, 2.0]]).unwrap();
        let state = LatentState::empty(1);
        let p1 = ModelParams {
            beta: vec![0.0],
            mu: 0.0,
            sigma2: 1.0,
            sigma2_e: 1.5,
            p: [0.9, 0.05, 0.05],
        };
        let p2 = ModelParams { sigma2_e: 3.0, ..p1.clone() };
        let rss = 1.0 + 4.0 + 0.25;
        let d = log_likelihood(&data, &state, &p2).unwrap() - log_likelihood(&data, &state, &p1).unwrap();
        let expected = -1.5 * 2f64.ln() - 0.5 * (rss / 3.0 - rss / 1.5);
        assert_relative_eq!(d, expected, epsilon = 1e-13);
    }

    #[test]
    fn clamp_keeps_simplex_and_floor() {
        let p = clamp_probabilities([1.0, 0.0, 0.0], 300);
        let f = probability_floor(300);
        assert_relative_eq!(p.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_eq!(p[1], f);
        assert_eq!(p[2], f);
        assert_relative_eq!(p[0], 1.0 - 2.0 * f, epsilon = 1e-15);
        let q = clamp_probabilities([0.8, 0.1, 0.1], 300);
        assert_relative_eq!(q[0], 0.8, epsilon = 1e-15);
        let u = clamp_probabilities([0.0, 0.0, 0.0], 5);
        assert_relative_eq!(u[0], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn gram_tracks_membership_changes() {
        let cols = vec![vec![1.0, 2.0, 0.0], vec![0.0, 1.0, 1.0], vec![3.0, -1.0, 2.0]];
        let data = Dataset::with_intercept(vec![0.0, 1.0, 2.0], cols.clone()).unwrap();
        let mut s = LatentState::empty(3);
        s.set_gamma(&data, 2, -1.0).unwrap();
        s.set_gamma(&data, 0, 1.0).unwrap();
        s.set_gamma(&data, 1, 0.5).unwrap();
        assert_eq!(s.active(), &[0, 1, 2]);
        let before = s.gram().clone();
        s.refresh_gram();
        assert_eq!(&before, s.gram());
        s.set_gamma(&data, 1, 0.0).unwrap();
        assert_eq!(s.active(), &[0, 2]);
        assert_eq!(s.gram()[(0, 1)], dot(&cols[0], &cols[2]));
        assert_eq!(s.counts(), [1, 1, 1]);
        assert!(s.set_gamma(&data, 0, 1.5).is_err());
    }
}
