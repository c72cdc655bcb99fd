//! Ordinary least-squares refit of a selected model and the usual
//! goodness-of-fit summaries.
//!
//! AIC follows the Gaussian maximum-likelihood convention
//! `N log(2 pi RSS / N) + N + 2 (p + 1)`, counting the `p` coefficients and
//! the error variance. Values are comparable only with AICs computed under
//! the same convention.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::linalg::LeastSquares;
use crate::model::Dataset;
use crate::selection::SelectedColumn;

/// Floor applied to the residual sum of squares before taking logs.
pub const RSS_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    /// Variance inflation factor; `None` for the intercept.
    pub vif: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub coefficients: Vec<Coefficient>,
    pub aic: f64,
    pub r_squared: f64,
    pub adj_r_squared: f64,
    pub mae: f64,
    pub rss: f64,
    pub n: usize,
    /// Number of coefficients, intercept included.
    pub p: usize,
}

impl RefitReport {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

fn is_intercept(col: nalgebra::DVectorView<'_, f64>) -> bool {
    let first = col[0];
    first != 0.0 && col.iter().all(|&v| v == first)
}

/// R² of `y` on `design`: centred when the design has an intercept column.
fn r_squared(y: &DVector<f64>, design: &DMatrix<f64>, names: &[String]) -> Result<f64> {
    let fit = LeastSquares::fit(design, y, names)?;
    let rss = (y - design * &fit.coef).norm_squared();
    let centred = design.column_iter().any(is_intercept);
    let tss = if centred {
        let m = y.mean();
        y.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    } else {
        y.norm_squared()
    };
    Ok(if tss > 0.0 { 1.0 - rss / tss } else { 1.0 })
}

/// Fit `y` on the columns of `design` by least squares.
pub fn ols_refit(y: &[f64], design: &DMatrix<f64>, names: &[String]) -> Result<RefitReport> {
    let (n, p) = design.shape();
    if y.len() != n {
        return Err(Error::InvalidInput(format!("response has {} rows, design has {n}", y.len())));
    }
    if names.len() != p {
        return Err(Error::InvalidInput("one name per design column is required".into()));
    }
    if n <= p {
        return Err(Error::InvalidInput(format!(
            "{n} observations leave no residual degrees of freedom for {p} coefficients"
        )));
    }
    let yv = DVector::from_column_slice(y);
    let fit = LeastSquares::fit(design, &yv, names)?;
    let resid = &yv - design * &fit.coef;
    let rss = resid.norm_squared();
    let df = (n - p) as f64;
    let sigma2_hat = rss / df;
    let cov = fit.xtx_inverse()? * sigma2_hat;

    let intercept_cols: Vec<bool> = design.column_iter().map(is_intercept).collect();
    let has_intercept = intercept_cols.iter().any(|&b| b);

    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let estimate = fit.coef[j];
        let std_error = cov[(j, j)].max(0.0).sqrt();
        let t_value = estimate / std_error;
        let p_value = if t_value.is_nan() {
            f64::NAN
        } else {
            (2.0 * student_t_sf(t_value.abs(), df)).min(1.0)
        };
        let vif = if intercept_cols[j] {
            None
        } else if p == 1 || (p == 2 && has_intercept) {
            Some(1.0)
        } else {
            let others = design.clone().remove_column(j);
            let other_names: Vec<String> =
                names.iter().enumerate().filter(|&(i, _)| i != j).map(|(_, s)| s.clone()).collect();
            let r2 = r_squared(&design.column(j).into_owned(), &others, &other_names)?;
            Some(1.0 / (1.0 - r2).max(f64::MIN_POSITIVE))
        };
        coefficients.push(Coefficient {
            name: names[j].clone(),
            estimate,
            std_error,
            t_value,
            p_value,
            vif,
        });
    }

    let tss = if has_intercept {
        let m = yv.mean();
        yv.iter().map(|v| (v - m).powi(2)).sum::<f64>()
    } else {
        yv.norm_squared()
    };
    let r_squared = if tss > 0.0 { 1.0 - rss / tss } else { 1.0 };
    let df_total = if has_intercept { (n - 1) as f64 } else { n as f64 };
    let adj_r_squared = 1.0 - (1.0 - r_squared) * df_total / df;
    let nf = n as f64;
    let aic = nf * (2.0 * std::f64::consts::PI * rss.max(RSS_FLOOR) / nf).ln()
        + nf
        + 2.0 * (p as f64 + 1.0);
    let mae = resid.iter().map(|v| v.abs()).sum::<f64>() / nf;

    Ok(RefitReport {
        coefficients,
        aic,
        r_squared,
        adj_r_squared,
        mae,
        rss,
        n,
        p,
    })
}

/// Refit the response on the locked-in design plus the selected columns.
pub fn refit_selection(data: &Dataset, selected: &[SelectedColumn]) -> Result<RefitReport> {
    let n = data.n();
    let j = data.j();
    let mut design = DMatrix::zeros(n, j + selected.len());
    design.columns_mut(0, j).copy_from(data.x());
    let mut names = data.x_names().to_vec();
    for (i, s) in selected.iter().enumerate() {
        let z = data.z_column(s.index)?;
        design.column_mut(j + i).copy_from_slice(&z);
        names.push(s.name.clone());
    }
    ols_refit(data.y().as_slice(), &design, &names)
}

/// Upper tail `P(T > t)` of Student's t with `df` degrees of freedom, via
/// the regularized incomplete beta function.
pub fn student_t_sf(t: f64, df: f64) -> f64 {
    assert!(df > 0.0, "degrees of freedom must be positive");
    if t.is_nan() {
        return f64::NAN;
    }
    if t == 0.0 {
        return 0.5;
    }
    if t.is_infinite() {
        return if t > 0.0 { 0.0 } else { 1.0 };
    }
    let x = df / (df + t * t);
    let tail = 0.5 * beta_reg(df / 2.0, 0.5, x);
    if t > 0.0 {
        tail
    } else {
        1.0 - tail
    }
}
