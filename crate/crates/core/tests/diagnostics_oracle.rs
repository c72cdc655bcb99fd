//! Refit summaries and the t tail against independent computations.

mod support;

use std::f64::consts::PI;

use ebvarsel::diagnostics::{ols_refit, student_t_sf};
use ebvarsel::rng::rng_from_seed;
use nalgebra::DMatrix;
use rand::Rng;
use support::{hadamard_columns, t_tail_by_quadrature, uniform_columns, T_TAIL_POINTS};

#[test]
fn t_tail_matches_numeric_integration() {
    for (t, df) in T_TAIL_POINTS {
        let expect = t_tail_by_quadrature(t, df);
        let got = student_t_sf(t, df);
        assert!((got - expect).abs() < 1e-6, "t={t} df={df}: {got} vs {expect}");
    }
    // Cauchy closed form as a sanity check on the quadrature itself.
    assert!((t_tail_by_quadrature(1.0, 1.0) - (0.5 - 1.0f64.atan() / PI)).abs() < 1e-9);
}

fn design_with_intercept(cols: &[Vec<f64>]) -> DMatrix<f64> {
    let n = cols[0].len();
    DMatrix::from_fn(n, cols.len() + 1, |i, j| if j == 0 { 1.0 } else { cols[j - 1][i] })
}

fn names(p: usize) -> Vec<String> {
    (0..p).map(|j| format!("c{j}")).collect()
}

#[test]
fn orthogonal_design_has_unit_vifs() {
    // Mutually orthogonal, mean-zero columns from a 16-row Hadamard matrix.
    let cols = hadamard_columns(16, &[1, 2, 4, 7, 11]);
    let mut rng = rng_from_seed(1);
    let y: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let report = ols_refit(&y, &design_with_intercept(&cols), &names(6)).unwrap();
    assert!(report.coefficients[0].vif.is_none());
    for c in &report.coefficients[1..] {
        assert!((c.vif.unwrap() - 1.0).abs() < 1e-12, "{}: {:?}", c.name, c.vif);
    }
}

#[test]
fn r_squared_never_drops_when_a_column_is_added() {
    let mut rng = rng_from_seed(2);
    for _ in 0..50 {
        let n = rng.random_range(8..40);
        let p = rng.random_range(1..(n - 3).min(8));
        let cols = uniform_columns(&mut rng, n, p + 1);
        let y: Vec<f64> = (0..n).map(|i| cols[0][i] + rng.random_range(-1.0..1.0)).collect();
        let small = ols_refit(&y, &design_with_intercept(&cols[..p]), &names(p + 1)).unwrap();
        let big = ols_refit(&y, &design_with_intercept(&cols), &names(p + 2)).unwrap();
        assert!(big.r_squared >= small.r_squared - 1e-12);
        assert!(big.rss <= small.rss * (1.0 + 1e-12));
    }
}

#[test]
fn summaries_match_hand_formulas() {
    let mut rng = rng_from_seed(3);
    let n = 30;
    let cols = uniform_columns(&mut rng, n, 3);
    let y: Vec<f64> = (0..n).map(|i| 0.5 + cols[1][i] + rng.random_range(-0.5..0.5)).collect();
    let x = design_with_intercept(&cols);
    let r = ols_refit(&y, &x, &names(4)).unwrap();

    let yv = nalgebra::DVector::from_column_slice(&y);
    let xtx_inv = (x.transpose() * &x).try_inverse().unwrap();
    let b = &xtx_inv * x.transpose() * &yv;
    let resid = &yv - &x * &b;
    let rss = resid.norm_squared();
    let m = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - m).powi(2)).sum();
    let nf = n as f64;
    assert!((r.rss - rss).abs() < 1e-10 * rss);
    assert!((r.r_squared - (1.0 - rss / tss)).abs() < 1e-12);
    assert!((r.adj_r_squared - (1.0 - (rss / (nf - 4.0)) / (tss / (nf - 1.0)))).abs() < 1e-12);
    let aic = nf * (2.0 * PI * rss / nf).ln() + nf + 2.0 * 5.0;
    assert!((r.aic - aic).abs() < 1e-10);
    let s2 = rss / (nf - 4.0);
    for j in 0..4 {
        let se = (s2 * xtx_inv[(j, j)]).sqrt();
        assert!((r.coefficients[j].estimate - b[j]).abs() < 1e-10);
        assert!((r.coefficients[j].std_error - se).abs() < 1e-10);
        let p = 2.0 * t_tail_by_quadrature(b[j].abs() / se, nf - 4.0);
        assert!((r.coefficients[j].p_value - p).abs() < 1e-6);
    }
}

#[test]
fn aic_prefers_the_true_nested_model() {
    let mut rng = rng_from_seed(4);
    let n = 60;
    let cols = uniform_columns(&mut rng, n, 2);
    let y: Vec<f64> = (0..n).map(|i| 3.0 * cols[0][i] + rng.random_range(-0.2..0.2)).collect();
    let none = ols_refit(&y, &DMatrix::from_element(n, 1, 1.0), &names(1)).unwrap();
    let right = ols_refit(&y, &design_with_intercept(&cols[..1]), &names(2)).unwrap();
    assert!(right.aic < none.aic);
}
