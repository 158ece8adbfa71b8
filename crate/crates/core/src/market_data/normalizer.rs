use serde::{Deserialize, Serialize};

use super::history::CurveHistory;
use crate::error::{ensure_len, Error, Result};
use crate::ndmath::Matrix;

/// Per-tenor affine standardization `(x − mean) / std`.
///
/// Standard deviations use the `n − 1` divisor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

fn moments(data: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if data.rows() < 2 {
        return Err(Error::Degenerate(format!(
            "normalizer needs at least 2 observations, got {}",
            data.rows()
        )));
    }
    let mean = data.column_means();
    let mut var = vec![0.0; data.cols()];
    for row in data.iter_rows() {
        for (v, (x, m)) in var.iter_mut().zip(row.iter().zip(&mean)) {
            *v += (x - m) * (x - m);
        }
    }
    let denom = data.rows() as f64 - 1.0;
    Ok((mean, var.into_iter().map(|v| (v / denom).sqrt()).collect()))
}

impl Normalizer {
    /// Strict per-tenor fit; a zero-variance column is an error naming it.
    pub fn fit(data: &Matrix, labels: &[String]) -> Result<Self> {
        ensure_len("normalizer labels", data.cols(), labels.len())?;
        let (mean, std) = moments(data)?;
        if let Some(i) = std.iter().position(|&s| !(s > 0.0)) {
            return Err(Error::Degenerate(format!("tenor {} has zero variance", labels[i])));
        }
        Ok(Self { mean, std })
    }

    pub fn fit_history(history: &CurveHistory) -> Result<Self> {
        Self::fit(&history.to_matrix(), history.grid().labels())
    }

    /// Per-tenor means with one shared scale: the root-mean-square of the
    /// per-tenor standard deviations, floored at `floor`. Keeps squared
    /// errors proportional across tenors.
    pub fn fit_pooled(data: &Matrix, floor: f64) -> Result<Self> {
        let (mean, std) = moments(data)?;
        let rms = (std.iter().map(|s| s * s).sum::<f64>() / std.len().max(1) as f64).sqrt();
        let scale = rms.max(floor);
        if !(scale > 0.0) {
            return Err(Error::Degenerate("dataset has zero variance".into()));
        }
        Ok(Self {
            std: vec![scale; mean.len()],
            mean,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: vec![0.0; dim],
            std: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn validate(&self) -> Result<()> {
        ensure_len("normalizer std", self.mean.len(), self.std.len())?;
        if self.std.iter().any(|s| !(s.is_finite() && *s > 0.0)) || !crate::ndmath::matrix::all_finite(&self.mean) {
            return Err(Error::InvalidConfig("normalizer needs finite means and positive std".into()));
        }
        Ok(())
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }

    pub fn invert(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| v * s + m)
            .collect()
    }

    /// Scales a difference vector (no mean shift).
    pub fn scale_delta(&self, d: &[f64]) -> Vec<f64> {
        d.iter().zip(&self.std).map(|(v, s)| v / s).collect()
    }

    pub fn unscale_delta(&self, d: &[f64]) -> Vec<f64> {
        d.iter().zip(&self.std).map(|(v, s)| v * s).collect()
    }

    pub fn apply_matrix(&self, data: &Matrix) -> Matrix {
        let rows: Vec<Vec<f64>> = data.iter_rows().map(|r| self.apply(r)).collect();
        Matrix::from_rows(&rows).expect("finite")
    }
}

pub fn fit_normalizer(history: &CurveHistory) -> Result<Normalizer> {
    Normalizer::fit_history(history)
}
