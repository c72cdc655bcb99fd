//! Low-rank covariance algebra against explicit N x N matrices.

mod support;

use ebvarsel::model::{build_covariance, log_density, log_likelihood, residual, LatentState};
use ebvarsel::rng::rng_from_seed;
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use support::*;

#[test]
fn solve_log_det_and_likelihood_match_dense() {
    let mut rng = rng_from_seed(41);
    for case in 0..200u64 {
        let n = rng.random_range(3..=20);
        let l = rng.random_range(0..=8.min(n));
        let k = (l + rng.random_range(0..=3)).max(1);
        let inst = random_instance(1000 + case, n, k, l);
        let (data, state, params) = (&inst.data, &inst.state, &inst.params);
        let gamma = state.gamma();

        let sigma = dense_sigma(data, gamma, params.sigma2, params.sigma2_e);
        let handle = build_covariance(state, params, n).unwrap();
        let r = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
        let dense = dense_inverse(&sigma) * &r;
        let fast = handle.solve(r.as_slice());
        assert!(max_rel_err(fast.as_slice(), dense.as_slice()) < 1e-10, "solve, case {case}");
        assert!(rel_err(handle.log_det(), dense_log_det(&sigma)) < 1e-10, "log det, case {case}");

        let ll = log_likelihood(data, state, params).unwrap();
        assert!(rel_err(ll, dense_log_likelihood(data, gamma, params)) < 1e-10, "loglik, case {case}");
        let r_model = residual(data, state, params);
        let r_dense = dense_residual(data, gamma, &params.beta, params.mu);
        assert!(max_rel_err(r_model.as_slice(), r_dense.as_slice()) < 1e-12);
    }
}

#[test]
fn trace_identities_match_dense() {
    for case in 0..50u64 {
        let inst = random_instance(7000 + case, 12, 6, 1 + (case as usize % 5));
        let (data, state, params) = (&inst.data, &inst.state, &inst.params);
        let sinv = dense_inverse(&dense_sigma(data, state.gamma(), params.sigma2, params.sigma2_e));
        let handle = build_covariance(state, params, data.n()).unwrap();
        assert!(rel_err(handle.trace_inverse(), sinv.trace()) < 1e-10);
    }
}

#[test]
fn empty_active_set_is_scaled_identity() {
    let inst = random_instance(3, 10, 4, 0);
    let handle = build_covariance(&inst.state, &inst.params, 10).unwrap();
    let r: Vec<f64> = (0..10).map(|i| i as f64 - 4.5).collect();
    let s = handle.solve(&r);
    for (a, b) in s.iter().zip(&r) {
        assert!((a - b / inst.params.sigma2_e).abs() < 1e-15);
    }
    assert!((handle.log_det() - 10.0 * inst.params.sigma2_e.ln()).abs() < 1e-12);
}

#[test]
fn zero_random_effect_variance_removes_columns_from_sigma() {
    let mut inst = random_instance(11, 9, 5, 3);
    inst.params.sigma2 = 0.0;
    let handle = build_covariance(&inst.state, &inst.params, 9).unwrap();
    assert!((handle.log_det() - 9.0 * inst.params.sigma2_e.ln()).abs() < 1e-12);
    let d = log_density(&inst.data, &inst.state, &inst.params).unwrap();
    assert!(rel_err(d, dense_log_density(&inst.data, inst.state.gamma(), &inst.params)) < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn solve_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let inst = random_instance(seed, 10, 6, 4);
        let handle = build_covariance(&inst.state, &inst.params, 10).unwrap();
        let mut rng = rng_from_seed(seed ^ 0xABCD);
        let r1: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
        let combo: Vec<f64> = r1.iter().zip(&r2).map(|(x, y)| a * x + b * y).collect();
        let lhs = handle.solve(&combo);
        let rhs = handle.solve(&r1) * a + handle.solve(&r2) * b;
        prop_assert!(max_rel_err(lhs.as_slice(), rhs.as_slice()) < 1e-12);
    }

    #[test]
    fn log_det_ignores_signs(seed in 0u64..10_000) {
        let inst = random_instance(seed, 10, 6, 5);
        let flipped: Vec<f64> = inst.state.gamma().iter().map(|g| -g).collect();
        let mut other = LatentState::empty(6);
        other.set_all(&inst.data, &flipped).unwrap();
        let a = build_covariance(&inst.state, &inst.params, 10).unwrap().log_det();
        let b = build_covariance(&other, &inst.params, 10).unwrap().log_det();
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
}
