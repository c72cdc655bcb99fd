//! Selection strategies: posterior thresholding, greedy and weighted
//! likelihood-ratio moves, plus the correlation guard and shrinkage.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::em::{evaluate_columns, ColumnEval, EmConfig};
use crate::error::Result;
use crate::linalg::pearson;
use crate::model::{class_of, Dataset, LatentState, ModelParams};

/// Posterior rows are stored as `(P(-1), P(0), P(+1))`.
pub type Posterior = [f64; 3];

/// A proposed change of one indicator and the log-likelihood it gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoveCandidate {
    pub k: usize,
    pub sign: i8,
    pub gain: f64,
}

/// One column of the final model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedColumn {
    pub index: usize,
    pub name: String,
    pub sign: i8,
    /// Posterior probability of the reported sign.
    pub posterior: f64,
    pub p_null: f64,
}

/// Batch rule: null if `P(0) > threshold`, otherwise the signed posterior of
/// the more probable direction.
pub fn posterior_threshold_update(posteriors: &[Posterior], null_threshold: f64) -> Vec<f64> {
    posteriors
        .iter()
        .map(|&[pm, p0, pp]| {
            if p0 > null_threshold {
                0.0
            } else if pp > pm {
                pp
            } else {
                -pm
            }
        })
        .collect()
}

/// Shrink the non-null posteriors by `1 - c`, where `c` is the largest
/// squared correlation with a column already in the model.
pub fn correlation_adjust(posterior: Posterior, c: f64) -> Posterior {
    let c = c.clamp(0.0, 1.0);
    let pm = (1.0 - c) * posterior[0];
    let pp = (1.0 - c) * posterior[2];
    [pm, (1.0 - pm - pp).max(0.0), pp]
}

/// Largest squared Pearson correlation between `z` and the active columns,
/// skipping active column `skip` if given.
pub fn max_squared_correlation(z: &[f64], state: &LatentState, skip: Option<usize>) -> f64 {
    state
        .active()
        .iter()
        .enumerate()
        .filter(|(_, &k)| Some(k) != skip)
        .map(|(i, _)| pearson(z, state.active_column(i)).powi(2))
        .fold(0.0, f64::max)
}

/// Moves with gain above `delta` from a full column evaluation. New columns
/// whose squared correlation with the active set reaches the guard cutoff
/// are not admitted.
pub fn candidates_from_evals(
    evals: &[ColumnEval],
    state: &LatentState,
    config: &EmConfig,
) -> Vec<MoveCandidate> {
    let cutoff = config.correlation.squared_cutoff();
    let mut out = Vec::new();
    for (k, ev) in evals.iter().enumerate() {
        let current = state.gamma()[k];
        let current_class = class_of(current);
        let mut best: Option<(i8, f64)> = None;
        // Order +1, -1, 0 so that exact ties favour a positive sign.
        for s in [1i8, -1, 0] {
            if current_class == class_of(s as f64) && (s == 0 || current.abs() == 1.0) {
                continue;
            }
            let gain = ev.loglik[(s + 1) as usize] - ev.loglik_current;
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((s, gain));
            }
        }
        let Some((sign, gain)) = best else { continue };
        if !(gain > config.delta) || !gain.is_finite() {
            continue;
        }
        let entering = current == 0.0 && sign != 0;
        if entering && config.correlation.guard && ev.max_r2 >= cutoff {
            continue;
        }
        out.push(MoveCandidate { k, sign, gain });
    }
    out
}

/// Evaluate every column and return the admissible moves.
pub fn propose_moves(
    data: &Dataset,
    state: &LatentState,
    params: &ModelParams,
    config: &EmConfig,
) -> Result<Vec<MoveCandidate>> {
    let evals = evaluate_columns(data, state, params, config.parallel)?;
    Ok(candidates_from_evals(&evals, state, config))
}

/// Largest gain; ties go to the lowest column index.
pub fn choose_move_greedy(candidates: &[MoveCandidate]) -> Option<MoveCandidate> {
    candidates.iter().copied().reduce(|best, c| {
        if c.gain > best.gain || (c.gain == best.gain && c.k < best.k) {
            c
        } else {
            best
        }
    })
}

/// Sample a candidate with probability proportional to its gain.
pub fn choose_move_weighted<R: Rng + ?Sized>(
    candidates: &[MoveCandidate],
    rng: &mut R,
) -> Option<MoveCandidate> {
    match candidates {
        [] => None,
        [only] => Some(*only),
        _ => {
            let total: f64 = candidates.iter().map(|c| c.gain).sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for c in candidates {
                acc += c.gain;
                if u < acc {
                    return Some(*c);
                }
            }
            candidates.last().copied()
        }
    }
}

/// Keep the proposed non-zero indicators in order of increasing `P(0)`,
/// dropping any column too correlated with one already kept.
pub fn guard_batch(
    data: &Dataset,
    gamma: &[f64],
    posteriors: &[Posterior],
    squared_cutoff: f64,
) -> Result<Vec<f64>> {
    let mut order: Vec<usize> = (0..gamma.len()).filter(|&k| gamma[k] != 0.0).collect();
    order.sort_by(|&a, &b| posteriors[a][1].total_cmp(&posteriors[b][1]).then(a.cmp(&b)));
    let mut kept: Vec<Vec<f64>> = Vec::new();
    let mut out = vec![0.0; gamma.len()];
    for k in order {
        let z = data.z_column(k)?;
        if kept.iter().all(|c| pearson(&z, c).powi(2) < squared_cutoff) {
            out[k] = gamma[k];
            kept.push(z.into_owned());
        }
    }
    Ok(out)
}

/// Columns with `P(0) <= null_threshold`, signed by the more probable
/// direction and sorted by increasing `P(0)`. With the guard on, a column
/// is skipped when it is too correlated with one listed before it.
pub fn finalize_selection(
    data: &Dataset,
    posteriors: &[Posterior],
    config: &EmConfig,
) -> Result<Vec<SelectedColumn>> {
    let mut order: Vec<usize> = (0..posteriors.len())
        .filter(|&k| posteriors[k][1] <= config.null_threshold)
        .collect();
    order.sort_by(|&a, &b| posteriors[a][1].total_cmp(&posteriors[b][1]).then(a.cmp(&b)));
    let cutoff = config.correlation.squared_cutoff();
    let mut kept_cols: Vec<Vec<f64>> = Vec::new();
    let mut out = Vec::new();
    for k in order {
        let [pm, p0, pp] = posteriors[k];
        if config.correlation.guard {
            let z = data.z_column(k)?;
            if kept_cols.iter().any(|c| pearson(&z, c).powi(2) >= cutoff) {
                continue;
            }
            kept_cols.push(z.into_owned());
        }
        let (sign, posterior) = if pp >= pm { (1, pp) } else { (-1, pm) };
        out.push(SelectedColumn {
            index: k,
            name: data.z_names()[k].clone(),
            sign,
            posterior,
            p_null: p0,
        });
    }
    Ok(out)
}
