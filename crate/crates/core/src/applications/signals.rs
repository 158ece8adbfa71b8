//! Residual series against intermediate reconstructions.

use chrono::NaiveDate;
use serde::Serialize;

use super::{decompose_history, mean_std};
use crate::error::{Error, Result};
use crate::market_data::CurveHistory;
use crate::pipeline::FinqModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesStats {
    pub mean: f64,
    pub std: f64,
    pub standard_error: f64,
}

impl SeriesStats {
    pub fn of(v: &[f64]) -> Self {
        let (mean, std) = mean_std(v);
        Self {
            mean,
            std,
            standard_error: std / (v.len() as f64).sqrt(),
        }
    }
}

/// `x_t(tenor) − 𝒪_j,t(tenor)` for every intermediate reconstruction `𝒪_j`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualSignal {
    pub tenor: String,
    pub dates: Vec<NaiveDate>,
    /// `residuals[j][t]`, one series per intermediate.
    pub residuals: Vec<Vec<f64>>,
    pub stats: Vec<SeriesStats>,
}

pub fn residual_signal(model: &FinqModel, history: &CurveHistory, tenor: &str) -> Result<ResidualSignal> {
    let i = model
        .grid()
        .index_of(tenor)
        .ok_or_else(|| Error::MissingTenors(vec![tenor.to_string()]))?;
    let decs = decompose_history(model, history)?;
    let levels = model.num_layers() - 1;
    let residuals: Vec<Vec<f64>> = (0..levels)
        .map(|j| decs.iter().map(|d| d.input[i] - d.intermediates[j][i]).collect())
        .collect();
    Ok(ResidualSignal {
        tenor: tenor.to_string(),
        dates: history.dates(),
        stats: residuals.iter().map(|r| SeriesStats::of(r)).collect(),
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TenorSpread {
    pub tenor: String,
    pub stats: SeriesStats,
    /// `|mean| > 2·std`.
    pub candidate: bool,
}

/// Spread of instrument `b` over the finest intermediate reconstruction of `a`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelativeValueReport {
    pub dates: Vec<NaiveDate>,
    pub tenors: Vec<String>,
    /// `spreads[t][i] = b_t,i − 𝒪_t,i(a)`.
    pub spreads: Vec<Vec<f64>>,
    pub per_tenor: Vec<TenorSpread>,
}

impl RelativeValueReport {
    pub fn candidates(&self) -> impl Iterator<Item = &TenorSpread> {
        self.per_tenor.iter().filter(|t| t.candidate)
    }
}

pub fn relative_value(model: &FinqModel, a: &CurveHistory, b: &CurveHistory) -> Result<RelativeValueReport> {
    if **a.grid() != **b.grid() {
        return Err(Error::InvalidConfig("instrument histories use different grids".into()));
    }
    let dates = a.dates();
    if dates != b.dates() {
        return Err(Error::InvalidConfig("instrument histories cover different dates".into()));
    }
    let decs = decompose_history(model, a)?;
    let spreads: Vec<Vec<f64>> = decs
        .iter()
        .zip(b.objects())
        .map(|(d, ob)| {
            let o = d.intermediates.last().unwrap_or(&d.base_q);
            ob.values.iter().zip(o).map(|(v, r)| v - r).collect()
        })
        .collect();
    let tenors = a.grid().labels().to_vec();
    let per_tenor = tenors
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let col: Vec<f64> = spreads.iter().map(|s| s[i]).collect();
            let stats = SeriesStats::of(&col);
            TenorSpread {
                tenor: t.clone(),
                stats,
                candidate: stats.mean.abs() > 2.0 * stats.std,
            }
        })
        .collect();
    Ok(RelativeValueReport {
        dates,
        tenors,
        spreads,
        per_tenor,
    })
}
