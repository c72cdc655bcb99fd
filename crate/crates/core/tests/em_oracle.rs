//! E-step and M-step updates against brute-force dense evaluation.

mod support;

use ebvarsel::em::{e_step_posteriors, evaluate_columns, m_step_mean, m_step_variances};
use ebvarsel::model::{Dataset, LatentState, ModelParams};
use ebvarsel::rng::rng_from_seed;
use rand::Rng;
use support::*;

fn small_instances() -> Vec<Instance> {
    let mut rng = rng_from_seed(97);
    (0..100u64)
        .map(|case| {
            let n = rng.random_range(4..=12);
            let k = rng.random_range(1..=6);
            let l = rng.random_range(0..=k.min(n - 2));
            random_instance(20_000 + case, n, k, l)
        })
        .collect()
}

#[test]
fn posteriors_match_brute_force() {
    for (case, inst) in small_instances().iter().enumerate() {
        for k in 0..inst.data.k() {
            let fast = e_step_posteriors(&inst.data, &inst.state, &inst.params, k).unwrap();
            let slow = brute_posterior(&inst.data, inst.state.gamma(), &inst.params, k);
            for s in 0..3 {
                assert!((fast[s] - slow[s]).abs() < 1e-8, "case {case} column {k}: {fast:?} vs {slow:?}");
            }
        }
    }
}

#[test]
fn column_likelihoods_match_dense() {
    for inst in small_instances().iter().take(30) {
        let evals = evaluate_columns(&inst.data, &inst.state, &inst.params, false).unwrap();
        let gamma = inst.state.gamma();
        let current = dense_log_likelihood(&inst.data, gamma, &inst.params);
        for (k, e) in evals.iter().enumerate() {
            assert!(rel_err(e.loglik_current, current) < 1e-10);
            for (slot, s) in [-1.0, 0.0, 1.0].into_iter().enumerate() {
                let mut g = gamma.to_vec();
                g[k] = s;
                let dense = dense_log_likelihood(&inst.data, &g, &inst.params);
                assert!(rel_err(e.loglik[slot], dense) < 1e-10, "column {k} s {s}");
            }
        }
    }
}

#[test]
fn parallel_and_serial_evaluation_agree_bitwise() {
    let inst = random_instance(5, 15, 40, 4);
    let a = evaluate_columns(&inst.data, &inst.state, &inst.params, false).unwrap();
    let b = evaluate_columns(&inst.data, &inst.state, &inst.params, true).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.posterior, y.posterior);
        assert_eq!(x.loglik, y.loglik);
    }
}

#[test]
fn mean_update_matches_dense_gls() {
    for (case, inst) in small_instances().iter().enumerate() {
        let up = m_step_mean(&inst.data, &inst.state, &inst.params).unwrap();
        let (beta, mu) = dense_gls(&inst.data, inst.state.gamma(), &inst.params);
        assert!(max_rel_err(&up.beta, &beta) < 1e-10, "case {case}: {:?} vs {beta:?}", up.beta);
        match mu {
            Some(m) => {
                assert!(!up.mu_frozen);
                assert!(rel_err(up.mu, m) < 1e-10, "case {case}");
            }
            None => assert_eq!(up.mu, inst.params.mu),
        }
    }
}

#[test]
fn variance_update_matches_dense_moments() {
    for (case, inst) in small_instances().iter().enumerate() {
        let (s2e, s2) = m_step_variances(&inst.data, &inst.state, &inst.params).unwrap();
        let (d2e, d2) = dense_variances(&inst.data, inst.state.gamma(), &inst.params);
        assert!(rel_err(s2e, d2e) < 1e-10, "case {case}: {s2e} vs {d2e}");
        assert!(rel_err(s2, d2) < 1e-10, "case {case}: {s2} vs {d2}");
    }
}

#[test]
fn without_active_columns_error_variance_is_mean_squared_residual() {
    let mut rng = rng_from_seed(8);
    for _ in 0..20 {
        let n = rng.random_range(3..30);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let z = uniform_columns(&mut rng, n, 3);
        let data = Dataset::with_intercept(y.clone(), z).unwrap();
        let b0 = rng.random_range(-1.0..1.0);
        let params = ModelParams { beta: vec![b0], mu: 0.7, sigma2: 0.4, sigma2_e: 1.3, p: [0.8, 0.1, 0.1] };
        let (s2e, s2) = m_step_variances(&data, &LatentState::empty(3), &params).unwrap();
        let rss: f64 = y.iter().map(|v| (v - b0).powi(2)).sum();
        let expected = rss / n as f64;
        assert!((s2e - expected).abs() <= 4.0 * f64::EPSILON * expected, "{s2e} vs {expected}");
        assert_eq!(s2, 0.4);
    }
}
