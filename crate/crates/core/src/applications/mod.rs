//! Use cases built on decomposition and quantization.

mod export;
mod nowcast;
mod outliers;
mod sampling;
mod scenario;
mod signals;

pub use export::{export_latents, pca_compare, LatentExport, PcaCompareReport, PcaCompareRow, PeriodSummary};
pub use nowcast::{nowcast, NowcastResult};
pub use outliers::{detect_outliers, LayerOutliers, OutlierFlag, OutlierReport, DEFAULT_OUTLIER_THRESHOLD};
pub use sampling::{sample_synthetic, LayerSampling, SampleSpec};
pub use scenario::{generate_scenario, parse_shock, ScenarioMove, ScenarioRequest, ScenarioResult};
pub use signals::{relative_value, residual_signal, RelativeValueReport, ResidualSignal, SeriesStats, TenorSpread};

use crate::error::Result;
use crate::market_data::CurveHistory;
use crate::pipeline::{Decomposition, FinqModel};

/// Decomposes every curve of `history`, in date order.
pub fn decompose_history(model: &FinqModel, history: &CurveHistory) -> Result<Vec<Decomposition>> {
    history.objects().iter().map(|o| model.decompose(o)).collect()
}

pub(crate) fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
