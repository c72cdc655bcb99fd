//! Column transforms applied to the putative matrix before fitting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformMode {
    None,
    /// Affine map of each column onto [-1, 1].
    MinmaxSymmetric,
    Zscore,
    /// Additive log-ratio against a reference column (default: last).
    Logratio {
        #[serde(default)]
        reference: Option<usize>,
        #[serde(default = "default_zero_replacement")]
        zero_replacement: f64,
    },
}

fn default_zero_replacement() -> f64 {
    0.5
}

impl Default for TransformMode {
    fn default() -> Self {
        TransformMode::None
    }
}

/// Per-column affine record: `transformed = (raw - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub mode: TransformMode,
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
    /// Columns left untouched because they were constant.
    pub constant: Vec<usize>,
}

impl TransformSpec {
    pub fn identity(k: usize) -> Self {
        Self {
            mode: TransformMode::None,
            shift: vec![0.0; k],
            scale: vec![1.0; k],
            constant: Vec::new(),
        }
    }

    /// Map transformed columns back to the raw scale.
    pub fn invert(&self, columns: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        if matches!(self.mode, TransformMode::Logratio { .. }) {
            return Err(Error::InvalidInput(
                "log-ratio output cannot be inverted without the row totals".into(),
            ));
        }
        if columns.len() != self.shift.len() {
            return Err(Error::InvalidInput("column count does not match the transform".into()));
        }
        Ok(columns
            .iter()
            .zip(self.shift.iter().zip(&self.scale))
            .map(|(c, (&s, &h))| c.iter().map(|v| v * h + s).collect())
            .collect())
    }
}

fn affine(columns: &[Vec<f64>], mode: TransformMode, f: impl Fn(&[f64]) -> Option<(f64, f64)>) -> (Vec<Vec<f64>>, TransformSpec) {
    let mut spec = TransformSpec {
        mode,
        shift: Vec::with_capacity(columns.len()),
        scale: Vec::with_capacity(columns.len()),
        constant: Vec::new(),
    };
    let out = columns
        .iter()
        .enumerate()
        .map(|(k, col)| {
            let (shift, scale) = f(col).unwrap_or_else(|| {
                spec.constant.push(k);
                (0.0, 1.0)
            });
            spec.shift.push(shift);
            spec.scale.push(scale);
            col.iter().map(|v| (v - shift) / scale).collect()
        })
        .collect();
    (out, spec)
}

/// Rescale each column so that its minimum is -1 and its maximum +1.
/// Constant columns pass through unchanged and are listed in the spec.
pub fn rescale_minmax(columns: &[Vec<f64>]) -> (Vec<Vec<f64>>, TransformSpec) {
    affine(columns, TransformMode::MinmaxSymmetric, |col| {
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (hi > lo).then(|| ((hi + lo) / 2.0, (hi - lo) / 2.0))
    })
}

/// Centre each column and scale it to unit (population) variance.
pub fn zscore(columns: &[Vec<f64>]) -> (Vec<Vec<f64>>, TransformSpec) {
    affine(columns, TransformMode::Zscore, |col| {
        let n = col.len() as f64;
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        (var > 0.0).then(|| (mean, var.sqrt()))
    })
}

/// Log-ratio transform of a counts table given as columns.
///
/// Zeros become `zero_replacement`, rows are closed to proportions, and each
/// non-reference column becomes `log(z_ij / z_i,ref)`. The output has one
/// column fewer than the input, in the original order with the reference
/// removed.
pub fn logratio_transform(
    counts: &[Vec<f64>],
    reference: usize,
    zero_replacement: f64,
) -> Result<Vec<Vec<f64>>> {
    let k = counts.len();
    if k < 2 {
        return Err(Error::InvalidInput("log-ratio needs at least two components".into()));
    }
    if reference >= k {
        return Err(Error::InvalidInput(format!("reference column {reference} out of range")));
    }
    let n = counts[0].len();
    for (j, col) in counts.iter().enumerate() {
        if col.len() != n {
            return Err(Error::InvalidInput(format!("component {j} has the wrong length")));
        }
        if let Some(i) = col.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "component {j} has a negative or non-finite count at row {i}"
            )));
        }
    }
    let fill = |v: f64| if v == 0.0 { zero_replacement } else { v };
    let mut out = vec![Vec::with_capacity(n); k - 1];
    for i in 0..n {
        let total: f64 = counts.iter().map(|c| fill(c[i])).sum();
        let denom = fill(counts[reference][i]) / total;
        if !(denom > 0.0) {
            return Err(Error::InvalidInput(format!(
                "reference component is zero at row {i} after replacement"
            )));
        }
        for (slot, j) in (0..k).filter(|&j| j != reference).enumerate() {
            out[slot].push((fill(counts[j][i]) / total / denom).ln());
        }
    }
    Ok(out)
}

/// Indices of columns with non-zero values in at least `min_fraction` of rows.
pub fn prevalence_filter(columns: &[Vec<f64>], min_fraction: f64) -> Vec<usize> {
    columns
        .iter()
        .enumerate()
        .filter(|(_, c)| {
            let nz = c.iter().filter(|&&v| v != 0.0).count();
            nz as f64 >= min_fraction * c.len() as f64
        })
        .map(|(k, _)| k)
        .collect()
}

/// Apply a transform mode to a set of columns, returning the new columns,
/// their names and the transform record.
pub fn apply(
    mode: &TransformMode,
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
) -> Result<(Vec<Vec<f64>>, Vec<String>, TransformSpec)> {
    match mode {
        TransformMode::None => {
            let spec = TransformSpec::identity(columns.len());
            Ok((columns, names, spec))
        }
        TransformMode::MinmaxSymmetric => {
            let (c, s) = rescale_minmax(&columns);
            Ok((c, names, s))
        }
        TransformMode::Zscore => {
            let (c, s) = zscore(&columns);
            Ok((c, names, s))
        }
        TransformMode::Logratio {
            reference,
            zero_replacement,
        } => {
            let r = reference.unwrap_or(columns.len().saturating_sub(1));
            let out = logratio_transform(&columns, r, *zero_replacement)?;
            let names: Vec<String> = names
                .into_iter()
                .enumerate()
                .filter(|&(j, _)| j != r)
                .map(|(_, n)| n)
                .collect();
            let spec = TransformSpec {
                mode: mode.clone(),
                shift: vec![0.0; out.len()],
                scale: vec![1.0; out.len()],
                constant: Vec::new(),
            };
            Ok((out, names, spec))
        }
    }
}
