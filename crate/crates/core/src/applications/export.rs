//! Latent export and the PCA baseline comparison.

use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;

use super::decompose_history;
use crate::error::{Error, Result};
use crate::market_data::CurveHistory;
use crate::ndmath::pca_fit;
use crate::pipeline::FinqModel;

/// Quantized latents of every layer for every date.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatentExport {
    pub dates: Vec<NaiveDate>,
    pub latent_dims: Vec<usize>,
    /// `latents[k][t]` is layer `k`'s quantized latent on date `t`.
    pub latents: Vec<Vec<Vec<f64>>>,
}

impl LatentExport {
    /// Rows `date,layer,z0,z1,…`, padded with empty cells to the widest layer.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let width = self.latent_dims.iter().copied().max().unwrap_or(0);
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["date".to_string(), "layer".to_string()];
        header.extend((0..width).map(|c| format!("z{c}")));
        w.write_record(&header)?;
        for (t, date) in self.dates.iter().enumerate() {
            for (k, layer) in self.latents.iter().enumerate() {
                let mut rec = vec![date.to_string(), k.to_string()];
                rec.extend(layer[t].iter().map(|v| v.to_string()));
                rec.resize(width + 2, String::new());
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn export_latents(model: &FinqModel, history: &CurveHistory) -> Result<LatentExport> {
    let decs = decompose_history(model, history)?;
    Ok(LatentExport {
        dates: history.dates(),
        latent_dims: model.latent_dims(),
        latents: (0..model.num_layers())
            .map(|k| decs.iter().map(|d| d.diagnostics[k].z_q.clone()).collect())
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaCompareRow {
    pub date: NaiveDate,
    pub tenor: String,
    pub finq_abs_resid: f64,
    pub pca_abs_resid: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodSummary {
    pub period: String,
    pub dates: usize,
    pub finq_mean: f64,
    pub finq_max: f64,
    pub pca_mean: f64,
    pub pca_max: f64,
}

/// Base-anchor residuals of the first intermediate reconstruction against a
/// rank-`k` PCA fitted on the training period.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaCompareReport {
    pub components: usize,
    pub split_date: Option<NaiveDate>,
    pub rows: Vec<PcaCompareRow>,
    pub summaries: Vec<PeriodSummary>,
}

impl PcaCompareReport {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn summarize(period: &str, rows: &[&PcaCompareRow], dates: usize) -> PeriodSummary {
    let n = rows.len().max(1) as f64;
    PeriodSummary {
        period: period.into(),
        dates,
        finq_mean: rows.iter().map(|r| r.finq_abs_resid).sum::<f64>() / n,
        finq_max: rows.iter().map(|r| r.finq_abs_resid).fold(0.0, f64::max),
        pca_mean: rows.iter().map(|r| r.pca_abs_resid).sum::<f64>() / n,
        pca_max: rows.iter().map(|r| r.pca_abs_resid).fold(0.0, f64::max),
    }
}

/// Dates before `split_date` form the training period used to fit the PCA;
/// without a split the whole history is used.
pub fn pca_compare(
    model: &FinqModel,
    history: &CurveHistory,
    split_date: Option<NaiveDate>,
    components: usize,
) -> Result<PcaCompareReport> {
    let (train, _) = match split_date {
        Some(d) => history.split_by_date(d),
        None => (history.clone(), history.clone()),
    };
    if train.len() < 2 {
        return Err(Error::InvalidConfig("PCA training period needs at least 2 dates".into()));
    }
    let basis = pca_fit(&train.to_matrix(), components)?;
    let anchors = model.anchors(0);
    let labels = model.grid().labels();
    let decs = decompose_history(model, history)?;
    let mut rows = Vec::with_capacity(decs.len() * anchors.len());
    for (o, d) in history.objects().iter().zip(&decs) {
        let date = o.date.ok_or_else(|| Error::InvalidConfig("history curves must be dated".into()))?;
        let finq = d.intermediates.first().unwrap_or(&d.base_q);
        let pca = basis.reconstruct(&o.values)?;
        for &i in anchors {
            rows.push(PcaCompareRow {
                date,
                tenor: labels[i].clone(),
                finq_abs_resid: (o.values[i] - finq[i]).abs(),
                pca_abs_resid: (o.values[i] - pca[i]).abs(),
            });
        }
    }
    let in_train = |r: &&PcaCompareRow| split_date.is_none_or(|s| r.date < s);
    let train_rows: Vec<&PcaCompareRow> = rows.iter().filter(in_train).collect();
    let test_rows: Vec<&PcaCompareRow> = rows.iter().filter(|r| !in_train(r)).collect();
    let mut summaries = vec![summarize("train", &train_rows, train_rows.len() / anchors.len())];
    if split_date.is_some() {
        summaries.push(summarize("test", &test_rows, test_rows.len() / anchors.len()));
    }
    Ok(PcaCompareReport {
        components,
        split_date,
        rows,
        summaries,
    })
}
