//! Outlier dates from robust z-scores of quantized latents.
//!
//! Each latent coordinate is centred on its median and scaled by
//! `1.4826·MAD`, or by its standard deviation when the MAD is zero.
//! Coordinates with neither spread are skipped. A date's score on a layer is
//! the largest absolute z over that layer's coordinates.

use chrono::NaiveDate;
use serde::Serialize;

use super::{decompose_history, mean_std};
use crate::error::{Error, Result};
use crate::market_data::CurveHistory;
use crate::pipeline::FinqModel;

pub const DEFAULT_OUTLIER_THRESHOLD: f64 = 4.0;
const MAD_TO_STD: f64 = 1.4826;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerOutliers {
    pub layer: usize,
    pub anchors: Vec<String>,
    pub centers: Vec<f64>,
    /// `None` for coordinates without spread.
    pub scales: Vec<Option<f64>>,
    /// One score per date.
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierFlag {
    pub date: NaiveDate,
    pub layer: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutlierReport {
    pub threshold: f64,
    pub dates: Vec<NaiveDate>,
    pub layers: Vec<LayerOutliers>,
    /// Flags ordered by date, then layer.
    pub flags: Vec<OutlierFlag>,
}

impl OutlierReport {
    /// Maximum score over layers for each date.
    pub fn date_scores(&self) -> Vec<f64> {
        (0..self.dates.len())
            .map(|t| self.layers.iter().map(|l| l.scores[t]).fold(0.0, f64::max))
            .collect()
    }

    /// Index of the highest-scoring date.
    pub fn top_date(&self) -> Option<usize> {
        self.date_scores()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(t, _)| t)
    }
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn robust_center_scale(values: &[f64]) -> (f64, Option<f64>) {
    let mut v = values.to_vec();
    let center = median(&mut v);
    let mut dev: Vec<f64> = values.iter().map(|x| (x - center).abs()).collect();
    let mad = MAD_TO_STD * median(&mut dev);
    if mad > 0.0 {
        return (center, Some(mad));
    }
    let (_, std) = mean_std(values);
    (center, (std > 0.0).then_some(std))
}

pub fn detect_outliers(model: &FinqModel, history: &CurveHistory, threshold: f64) -> Result<OutlierReport> {
    if !(threshold.is_finite() && threshold > 0.0) {
        return Err(Error::InvalidConfig(format!("outlier threshold must be positive, got {threshold}")));
    }
    if history.len() < 3 {
        return Err(Error::InvalidConfig("outlier detection needs at least 3 dates".into()));
    }
    let decs = decompose_history(model, history)?;
    let dates = history.dates();
    let mut layers = Vec::with_capacity(model.num_layers());
    for (k, dim) in model.latent_dims().into_iter().enumerate() {
        let mut centers = Vec::with_capacity(dim);
        let mut scales = Vec::with_capacity(dim);
        let mut scores = vec![0.0f64; decs.len()];
        for c in 0..dim {
            let col: Vec<f64> = decs.iter().map(|d| d.diagnostics[k].z_q[c]).collect();
            let (center, scale) = robust_center_scale(&col);
            match scale {
                Some(s) => {
                    for (score, v) in scores.iter_mut().zip(&col) {
                        *score = score.max(((v - center) / s).abs());
                    }
                }
                None => log::warn!("layer {k} latent {c} has no spread; skipped"),
            }
            centers.push(center);
            scales.push(scale);
        }
        layers.push(LayerOutliers {
            layer: k,
            anchors: model.anchor_labels(k),
            centers,
            scales,
            scores,
        });
    }
    let mut flags = Vec::new();
    for (t, &date) in dates.iter().enumerate() {
        for l in &layers {
            if l.scores[t] > threshold {
                flags.push(OutlierFlag {
                    date,
                    layer: l.layer,
                    score: l.scores[t],
                });
            }
        }
    }
    Ok(OutlierReport {
        threshold,
        dates,
        layers,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mad_scale_and_fallbacks() {
        let (c, s) = robust_center_scale(&[1.0, 2.0, 3.0, 4.0, 100.0]);
        assert_eq!(c, 3.0);
        assert!((s.unwrap() - MAD_TO_STD).abs() < 1e-15);
        let (c, s) = robust_center_scale(&[5.0, 5.0, 5.0, 5.0, 9.0]);
        assert_eq!(c, 5.0);
        assert!(s.unwrap() > 0.0);
        assert_eq!(robust_center_scale(&[2.0; 4]), (2.0, None));
    }
}
