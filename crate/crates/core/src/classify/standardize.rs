use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::N_PAIRS;

/// Column-wise affine map fitted on one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Standardizer {
    pub means: [f64; N_PAIRS],
    /// Population standard deviations; 1 for constant columns.
    pub stds: [f64; N_PAIRS],
}

impl Standardizer {
    pub fn fit(rows: &[[f64; N_PAIRS]]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::invalid(format!(
                "standardization needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let n = rows.len() as f64;
        let means: [f64; N_PAIRS] = std::array::from_fn(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n);
        let stds = std::array::from_fn(|j| {
            let var = rows.iter().map(|r| (r[j] - means[j]).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        });
        Ok(Standardizer { means, stds })
    }

    pub fn apply(&self, row: &[f64; N_PAIRS]) -> [f64; N_PAIRS] {
        std::array::from_fn(|j| (row[j] - self.means[j]) / self.stds[j])
    }

    pub fn apply_all(&self, rows: &[[f64; N_PAIRS]]) -> Vec<[f64; N_PAIRS]> {
        rows.iter().map(|r| self.apply(r)).collect()
    }
}

/// Standardizes columns to zero mean and unit population variance.
pub fn standardize(rows: &[[f64; N_PAIRS]]) -> Result<(Vec<[f64; N_PAIRS]>, Standardizer)> {
    let s = Standardizer::fit(rows)?;
    Ok((s.apply_all(rows), s))
}
