//! Completing a partially observed curve.
//!
//! Unobserved tenors are linearly interpolated in year fraction (flat beyond
//! the ends) only to form encoder inputs. Each layer is then quantized against
//! its anchors that were observed, or left at its encoder mean when none were.
//! Observed values are returned unchanged; the rest come from the cascade.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::market_data::MarketObject;
use crate::pipeline::{FinqModel, LayerDiagnostics};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NowcastResult {
    #[serde(skip)]
    pub curve: MarketObject,
    pub tenors: Vec<String>,
    pub values: Vec<f64>,
    /// Cascade output at every tenor, observed or not.
    pub cascade: Vec<f64>,
    pub observed: Vec<bool>,
    pub diagnostics: Vec<LayerDiagnostics>,
}

fn interpolate(t: &[f64], known: &[(usize, f64)]) -> Vec<f64> {
    t.iter()
        .map(|&ti| {
            let right = known.iter().position(|&(i, _)| t[i] >= ti);
            match right {
                None => known[known.len() - 1].1,
                Some(0) => known[0].1,
                Some(r) => {
                    let (i0, v0) = known[r - 1];
                    let (i1, v1) = known[r];
                    if t[i1] == ti {
                        v1
                    } else {
                        v0 + (v1 - v0) * (ti - t[i0]) / (t[i1] - t[i0])
                    }
                }
            }
        })
        .collect()
}

/// `observed` maps tenor labels to decimal values and must cover every base
/// anchor.
pub fn nowcast(model: &FinqModel, observed: &BTreeMap<String, f64>, date: Option<chrono::NaiveDate>) -> Result<NowcastResult> {
    let grid = model.grid();
    let m = grid.len();
    let mut have = vec![None; m];
    let mut unknown = Vec::new();
    for (label, &v) in observed {
        match grid.index_of(label) {
            Some(i) => {
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("observed value at {label}")));
                }
                have[i] = Some(v);
            }
            None => unknown.push(label.clone()),
        }
    }
    if !unknown.is_empty() {
        return Err(Error::MissingTenors(unknown));
    }
    let missing_base: Vec<String> = model
        .anchors(0)
        .iter()
        .filter(|&&i| have[i].is_none())
        .map(|&i| grid.labels()[i].clone())
        .collect();
    if !missing_base.is_empty() {
        return Err(Error::InvalidConfig(format!(
            "nowcast needs every base anchor; missing {}",
            missing_base.join(", ")
        )));
    }

    let known: Vec<(usize, f64)> = have.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i, v))).collect();
    let mut residual = interpolate(grid.year_fractions(), &known);
    let mut cascade = vec![0.0; m];
    let mut diagnostics = Vec::with_capacity(model.num_layers());
    let config = model.quantize_config();
    for k in 0..model.num_layers() {
        let anchors: Vec<usize> = model.anchors(k).iter().copied().filter(|&i| have[i].is_some()).collect();
        let mu = model.encode_layer(k, &residual)?;
        let (part, r) = if anchors.is_empty() {
            (model.decode_layer(k, &mu)?, None)
        } else {
            let (p, r) = model.quantize_layer(k, &residual, &anchors, None, &mu, config)?;
            (p, Some(r))
        };
        for i in 0..m {
            residual[i] -= part[i];
            cascade[i] += part[i];
        }
        diagnostics.push(match r {
            Some(r) => LayerDiagnostics {
                layer: k,
                anchors,
                mu,
                z_q: r.z_q,
                anchor_error_before: r.anchor_error_before,
                anchor_error_after: r.anchor_error_after,
                iterations: r.iterations,
                converged: r.converged,
            },
            None => LayerDiagnostics {
                layer: k,
                anchors,
                z_q: mu.clone(),
                mu,
                anchor_error_before: 0.0,
                anchor_error_after: 0.0,
                iterations: 0,
                converged: true,
            },
        });
    }
    let values: Vec<f64> = (0..m).map(|i| have[i].unwrap_or(cascade[i])).collect();
    Ok(NowcastResult {
        curve: MarketObject::new(grid.clone(), values.clone(), date)?,
        tenors: grid.labels().to_vec(),
        values,
        cascade,
        observed: have.iter().map(Option::is_some).collect(),
        diagnostics,
    })
}
