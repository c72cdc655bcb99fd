//! Dense reference computations shared by the integration tests. Nothing
//! here uses the low-rank machinery: every covariance is formed as an
//! explicit N x N matrix and inverted directly.

#![allow(dead_code)]

use std::f64::consts::{FRAC_PI_2, PI};

use ebvarsel::model::{clamp_probabilities, Dataset, LatentState, ModelParams};
use ebvarsel::rng::{rng_from_seed, SeededRng};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// A random model instance with a consistent latent state.
pub struct Instance {
    pub data: Dataset,
    pub state: LatentState,
    pub params: ModelParams,
}

pub fn uniform_columns(rng: &mut SeededRng, n: usize, k: usize) -> Vec<Vec<f64>> {
    (0..k).map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

/// `n` rows, `k` putative columns of which `l` are active with random signs,
/// an intercept plus one further locked-in column.
pub fn random_instance(seed: u64, n: usize, k: usize, l: usize) -> Instance {
    assert!(l <= k);
    let mut rng = rng_from_seed(seed);
    let z = uniform_columns(&mut rng, n, k);
    let x1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let data = Dataset::from_columns(
        y,
        vec![vec![1.0; n], x1],
        z,
        vec!["(Intercept)".into(), "x1".into()],
        (1..=k).map(|i| format!("z{i}")).collect(),
    )
    .unwrap();

    let mut gamma = vec![0.0; k];
    let mut order: Vec<usize> = (0..k).collect();
    for i in 0..l {
        let j = rng.random_range(i..k);
        order.swap(i, j);
        gamma[order[i]] = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
    }
    let mut state = LatentState::empty(k);
    state.set_all(&data, &gamma).unwrap();

    let raw = [rng.random_range(0.2..1.0), rng.random_range(0.05..1.0), rng.random_range(0.05..1.0)];
    let total: f64 = raw.iter().sum();
    let params = ModelParams {
        beta: vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        mu: rng.random_range(-2.0..2.0),
        sigma2: rng.random_range(0.05..3.0),
        sigma2_e: rng.random_range(0.1..2.0),
        p: clamp_probabilities(raw.map(|v| v / total), k),
    };
    Instance { data, state, params }
}

pub fn z_matrix(data: &Dataset) -> DMatrix<f64> {
    let n = data.n();
    let cols: Vec<Vec<f64>> = (0..data.k()).map(|k| data.z_column(k).unwrap().into_owned()).collect();
    DMatrix::from_fn(n, data.k(), |i, k| cols[k][i])
}

/// `sigma_e^2 I + sigma^2 sum_k gamma_k^2 z_k z_k'`.
pub fn dense_sigma(data: &Dataset, gamma: &[f64], sigma2: f64, sigma2_e: f64) -> DMatrix<f64> {
    let z = z_matrix(data);
    let mut s = DMatrix::identity(data.n(), data.n()) * sigma2_e;
    for (k, &g) in gamma.iter().enumerate() {
        if g != 0.0 {
            let c = z.column(k);
            s += (&c * c.transpose()) * (sigma2 * g * g);
        }
    }
    s
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("invertible")
}

pub fn dense_log_det(m: &DMatrix<f64>) -> f64 {
    let lu = m.clone().lu();
    lu.determinant().ln()
}

/// `y - X beta - mu sum_k gamma_k z_k`.
pub fn dense_residual(data: &Dataset, gamma: &[f64], beta: &[f64], mu: f64) -> DVector<f64> {
    let z = z_matrix(data);
    let g = DVector::from_column_slice(gamma);
    data.y() - data.x() * DVector::from_column_slice(beta) - (&z * g) * mu
}

pub fn dense_log_density(data: &Dataset, gamma: &[f64], params: &ModelParams) -> f64 {
    let sigma = dense_sigma(data, gamma, params.sigma2, params.sigma2_e);
    let r = dense_residual(data, gamma, &params.beta, params.mu);
    let quad = r.dot(&(dense_inverse(&sigma) * &r));
    -0.5 * data.n() as f64 * (2.0 * PI).ln() - 0.5 * dense_log_det(&sigma) - 0.5 * quad
}

/// Prior weight of an indicator value under `(p0, p+, p-)`.
pub fn prior_of(value: f64, p: [f64; 3]) -> f64 {
    if value > 0.0 {
        p[1]
    } else if value < 0.0 {
        p[2]
    } else {
        p[0]
    }
}

pub fn dense_log_likelihood(data: &Dataset, gamma: &[f64], params: &ModelParams) -> f64 {
    let p = clamp_probabilities(params.p, data.k());
    let prior: f64 = gamma.iter().map(|&g| prior_of(g, p).ln()).sum();
    prior + dense_log_density(data, gamma, params)
}

/// `(P(-1), P(0), P(+1))` for column `k` by evaluating all three densities.
pub fn brute_posterior(data: &Dataset, gamma: &[f64], params: &ModelParams, k: usize) -> [f64; 3] {
    let p = clamp_probabilities(params.p, data.k());
    let mut lw = [0.0; 3];
    for (slot, s) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
        let mut g = gamma.to_vec();
        g[k] = s;
        lw[slot] = dense_log_density(data, &g, params) + prior_of(s, p).ln();
    }
    let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w = lw.map(|v| (v - m).exp());
    let t: f64 = w.iter().sum();
    w.map(|v| v / t)
}

/// GLS estimate of `(beta, mu)` with `W = [X, Z gamma]`; `mu` is absent when
/// no column is active.
pub fn dense_gls(data: &Dataset, gamma: &[f64], params: &ModelParams) -> (Vec<f64>, Option<f64>) {
    let n = data.n();
    let j = data.j();
    let active = gamma.iter().any(|&g| g != 0.0);
    let cols = j + usize::from(active);
    let v1 = z_matrix(data) * DVector::from_column_slice(gamma);
    let w = DMatrix::from_fn(n, cols, |i, c| if c < j { data.x()[(i, c)] } else { v1[i] });
    let sinv = dense_inverse(&dense_sigma(data, gamma, params.sigma2, params.sigma2_e));
    let a = w.transpose() * &sinv * &w;
    let b = w.transpose() * &sinv * data.y();
    let sol = dense_inverse(&a) * b;
    let beta = sol.rows(0, j).iter().copied().collect();
    (beta, active.then(|| sol[j]))
}

/// Variance updates from the conditional moments of the errors and the
/// random effects given `y`.
pub fn dense_variances(data: &Dataset, gamma: &[f64], params: &ModelParams) -> (f64, f64) {
    let n = data.n();
    let (s2, s2e) = (params.sigma2, params.sigma2_e);
    let sinv = dense_inverse(&dense_sigma(data, gamma, s2, s2e));
    let r = dense_residual(data, gamma, &params.beta, params.mu);

    let e_mean = &sinv * &r * s2e;
    let e_cov = DMatrix::identity(n, n) * s2e - &sinv * (s2e * s2e);
    let sigma2_e = (e_cov.trace() + e_mean.norm_squared()) / n as f64;

    let active: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k] != 0.0).collect();
    if active.is_empty() {
        return (sigma2_e, s2);
    }
    let z = z_matrix(data);
    let v = DMatrix::from_fn(n, active.len(), |i, c| z[(i, active[c])] * gamma[active[c]]);
    let b_mean = v.transpose() * &sinv * &r * s2;
    let b_cov = DMatrix::identity(active.len(), active.len()) * s2 - v.transpose() * &sinv * &v * (s2 * s2);
    let sigma2 = (b_cov.trace() + b_mean.norm_squared()) / active.len() as f64;
    (sigma2_e, sigma2)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

pub fn max_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Composite Simpson rule on [a, b] with `m` (even) panels.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, m: usize) -> f64 {
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for i in 1..m {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

/// Upper tail of Student's t by integrating the unnormalized density after
/// the substitution x = tan(theta), then dividing by the total mass.
pub fn t_tail_by_quadrature(t: f64, df: f64) -> f64 {
    let g = |theta: f64| {
        let x = theta.tan();
        let c = theta.cos();
        (1.0 + x * x / df).powf(-(df + 1.0) / 2.0) / (c * c)
    };
    let edge = |th: f64| th.clamp(-FRAC_PI_2 + 1e-12, FRAC_PI_2 - 1e-12);
    let m = 200_000;
    let total = simpson(g, edge(-FRAC_PI_2), edge(FRAC_PI_2), m);
    simpson(g, edge(t.atan()), edge(FRAC_PI_2), m) / total
}

/// The 20 (t, df) pairs used to check the t tail.
pub const T_TAIL_POINTS: [(f64, f64); 20] = [
    (0.1, 1.0),
    (1.0, 1.0),
    (6.0, 1.0),
    (0.5, 2.0),
    (2.0, 2.0),
    (-1.5, 3.0),
    (3.182, 3.0),
    (0.8, 4.5),
    (2.776, 4.0),
    (-0.3, 5.0),
    (1.2, 7.0),
    (2.365, 7.0),
    (4.0, 8.0),
    (0.05, 10.0),
    (2.228, 10.0),
    (-2.5, 15.0),
    (1.96, 25.0),
    (3.5, 30.0),
    (0.7, 60.0),
    (2.6, 120.0),
];

/// Mean-zero, mutually orthogonal +-1 columns `js` of the `n` x `n`
/// Sylvester-Hadamard matrix (`n` a power of two, every `j` in 1..n).
pub fn hadamard_columns(n: u32, js: &[u32]) -> Vec<Vec<f64>> {
    js.iter()
        .map(|&j| (0..n).map(|i| if (i & j).count_ones() % 2 == 0 { 1.0 } else { -1.0 }).collect())
        .collect()
}
