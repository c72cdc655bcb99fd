use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative tolerance on |R_ii| / ||d_i|| below which a column is treated as
/// lying in the span of the columns before it.
const RANK_TOL: f64 = 1e-10;

/// Least-squares fit through an unpivoted Householder QR.
pub(crate) struct LeastSquares {
    pub coef: DVector<f64>,
    /// Upper-triangular R with D = QR.
    pub r: DMatrix<f64>,
}

impl LeastSquares {
    pub fn fit(design: &DMatrix<f64>, y: &DVector<f64>, names: &[String]) -> Result<Self> {
        let (n, p) = design.shape();
        if p == 0 {
            return Ok(Self {
                coef: DVector::zeros(0),
                r: DMatrix::zeros(0, 0),
            });
        }
        if n < p {
            return Err(Error::InvalidInput(format!(
                "{n} observations cannot identify {p} coefficients"
            )));
        }
        let qr = design.clone().qr();
        let r = qr.r();
        for i in 0..p {
            let norm = design.column(i).norm();
            if norm == 0.0 || r[(i, i)].abs() <= RANK_TOL * norm {
                return Err(Error::RankDeficient {
                    index: i,
                    name: names.get(i).cloned().unwrap_or_else(|| format!("column {i}")),
                });
            }
        }
        let qty = qr.q().transpose() * y;
        let coef = r
            .solve_upper_triangular(&qty)
            .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
        Ok(Self { coef, r })
    }

    /// (D'D)^{-1} = R^{-1} R^{-T}.
    pub fn xtx_inverse(&self) -> Result<DMatrix<f64>> {
        let p = self.r.nrows();
        let r_inv = self
            .r
            .solve_upper_triangular(&DMatrix::identity(p, p))
            .ok_or_else(|| Error::Numerical("triangular inverse failed".into()))?;
        Ok(&r_inv * r_inv.transpose())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pearson correlation of two equal-length slices; 0 when either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        sab / (saa * sbb).sqrt()
    }
}
