//! What-if scenarios from moves at anchor tenors.
//!
//! A move set belongs to anchor level `ℓ`, the finest anchor set any moved
//! tenor first appears in. Layers using anchor sets `≤ ℓ` are re-quantized,
//! coarse to fine, each against its previous output plus whatever change is
//! still missing after the coarser layers: the move at moved tenors and zero
//! at the layer's other anchors. Moved tenors join every re-quantized layer's
//! anchors with a heavy weight, so a coarse layer can carry a move at a finer
//! anchor while holding its own anchors in place. Finer layers and the final
//! residual are carried over unchanged, so
//!
//! ```text
//! S = x + Σ_{k re-quantized} (P'_k − P_k)
//! ```
//!
//! Warm starts are the previous quantized latents, which makes a zero move an
//! exact identity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::market_data::MarketObject;
use crate::pipeline::{Decomposition, FinqModel, LayerDiagnostics};

/// Shock matching target; scenarios report non-convergence beyond it.
const MATCH_TOLERANCE: f64 = 1e-4;
const MOVED_WEIGHT: f64 = 1e4;
const CORRECTION_ROUNDS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioMove {
    pub tenor: String,
    /// Decimal rate change (`0.0010` = +10bp).
    pub shock: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRequest {
    pub current: MarketObject,
    pub moves: Vec<ScenarioMove>,
    /// Anchor set index the moves belong to; inferred when `None`.
    pub level: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioResult {
    pub level: usize,
    /// Cascade layers that were re-quantized (`0..=last`).
    pub requantized_layers: usize,
    pub curve: MarketObject,
    /// Decomposition of the scenario curve; its top level is `curve`.
    pub decomposition: Decomposition,
    /// Largest `|S_i − (x_i + shock_i)|` over moved tenors.
    pub max_shock_miss: f64,
    pub converged: bool,
}

impl ScenarioResult {
    /// Scenario reconstruction at every level, coarse to fine.
    pub fn levels(&self) -> Result<Vec<MarketObject>> {
        (0..=self.decomposition.num_levels())
            .map(|j| self.decomposition.reconstruct_at_level(j))
            .collect()
    }
}

/// Parses `"+10bp"`, `"-4bp"`, `"0.001"` or `"+0.25%"` into a decimal rate.
pub fn parse_shock(text: &str) -> Result<f64> {
    let t = text.trim();
    let lower = t.to_ascii_lowercase();
    let (num, scale) = if let Some(v) = lower.strip_suffix("bp") {
        (v, 1e-4)
    } else if let Some(v) = lower.strip_suffix('%') {
        (v, 1e-2)
    } else {
        (lower.as_str(), 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("cannot parse shock {text:?}")))?;
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("shock {text:?}")));
    }
    Ok(v * scale)
}

fn anchor_hint(model: &FinqModel) -> String {
    (0..model.layout().num_sets())
        .map(|j| {
            let labels: Vec<&str> = model
                .layout()
                .set(j)
                .iter()
                .map(|&i| model.grid().labels()[i].as_str())
                .collect();
            format!("level {j}: {}", labels.join(","))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Resolves moves to grid indices and the anchor level they belong to.
fn resolve(model: &FinqModel, moves: &[ScenarioMove], level: Option<usize>) -> Result<(BTreeMap<usize, f64>, usize)> {
    let layout = model.layout();
    let mut shocks = BTreeMap::new();
    let mut finest = 0;
    for m in moves {
        if !m.shock.is_finite() {
            return Err(Error::NonFinite(format!("shock at {}", m.tenor)));
        }
        let i = model
            .grid()
            .index_of(&m.tenor)
            .ok_or_else(|| Error::MissingTenors(vec![m.tenor.clone()]))?;
        let set = layout.coarsest_set_of(i).ok_or_else(|| Error::NotAnAnchor {
            tenor: m.tenor.clone(),
            hint: anchor_hint(model),
        })?;
        finest = finest.max(set);
        if shocks.insert(i, m.shock).is_some() {
            return Err(Error::InvalidConfig(format!("tenor {} moved twice", m.tenor)));
        }
    }
    let level = match level {
        None => finest,
        Some(l) if l >= layout.num_sets() => {
            return Err(Error::OutOfRange(format!(
                "level {l} outside 0..{}",
                layout.num_sets()
            )));
        }
        Some(l) => {
            for &i in shocks.keys() {
                if layout.set(l).binary_search(&i).is_err() {
                    return Err(Error::NotAnAnchor {
                        tenor: model.grid().labels()[i].clone(),
                        hint: format!("not in level {l}; {}", anchor_hint(model)),
                    });
                }
            }
            l
        }
    };
    Ok((shocks, level))
}

pub fn generate_scenario(
    model: &FinqModel,
    request: &ScenarioRequest,
    previous: Option<&Decomposition>,
) -> Result<ScenarioResult> {
    let owned;
    let prev = match previous {
        Some(d) => {
            ensure_len("previous decomposition", model.grid().len(), d.input.len())?;
            if d.input != request.current.values {
                return Err(Error::InvalidConfig(
                    "previous decomposition was computed for a different curve".into(),
                ));
            }
            d
        }
        None => {
            owned = model.decompose(&request.current)?;
            &owned
        }
    };
    let (shocks, level) = resolve(model, &request.moves, request.level)?;
    // Anchor set ℓ is used by cascade layer ℓ + 1 and by every layer below it.
    let last = (level + 1).min(model.num_layers() - 1);
    let m = model.grid().len();
    let x = &prev.input;
    let config = model.quantize_config().clone();

    let mut desired = vec![0.0; m];
    for (&i, &s) in &shocks {
        desired[i] = s;
    }
    let mut ask = desired.clone();
    let mut latents: Vec<Vec<f64>> = prev.diagnostics.iter().map(|d| d.z_q.clone()).collect();
    let mut parts: Vec<Vec<f64>> = (0..model.num_layers()).map(|k| prev.layer_part(k).to_vec()).collect();
    let mut diagnostics: Vec<LayerDiagnostics> = prev.diagnostics.clone();
    let mut scenario = x.clone();
    let mut miss = 0.0;

    let rounds = if shocks.values().all(|&s| s == 0.0) { 0 } else { CORRECTION_ROUNDS };
    for round in 0..rounds {
        let mut produced = vec![0.0; m];
        for k in 0..=last {
            let mut anchors = model.anchors(k).to_vec();
            anchors.extend(shocks.keys().filter(|i| !model.anchors(k).contains(i)));
            anchors.sort_unstable();
            let base = prev.layer_part(k);
            let target: Vec<f64> = (0..m).map(|i| base[i] + ask[i] - produced[i]).collect();
            let weights: Vec<f64> = anchors
                .iter()
                .map(|i| if shocks.contains_key(i) { MOVED_WEIGHT } else { 1.0 })
                .collect();
            let (part, r) = model.quantize_layer(k, &target, &anchors, Some(&weights), &latents[k], &config)?;
            for i in 0..m {
                produced[i] += part[i] - base[i];
            }
            diagnostics[k] = LayerDiagnostics {
                layer: k,
                anchors,
                mu: latents[k].clone(),
                z_q: r.z_q.clone(),
                anchor_error_before: r.anchor_error_before,
                anchor_error_after: r.anchor_error_after,
                iterations: r.iterations,
                converged: r.converged,
            };
            latents[k] = r.z_q;
            parts[k] = part;
        }
        scenario = x.iter().zip(&produced).map(|(a, d)| a + d).collect();
        miss = shocks
            .iter()
            .map(|(&i, &s)| (scenario[i] - x[i] - s).abs())
            .fold(0.0, f64::max);
        log::debug!("scenario round {round}: max shock miss {miss:e}");
        if miss < 0.01 * MATCH_TOLERANCE {
            break;
        }
        for (&i, &s) in &shocks {
            ask[i] += s - (scenario[i] - x[i]);
        }
    }

    let mut running = vec![0.0; m];
    let mut intermediates = Vec::with_capacity(parts.len() - 1);
    for (k, p) in parts.iter().enumerate() {
        running.iter_mut().zip(p).for_each(|(a, v)| *a += v);
        if k > 0 {
            intermediates.push(running.clone());
        }
    }
    let mut parts = parts.into_iter();
    let decomposition = Decomposition {
        grid: model.grid().clone(),
        date: request.current.date,
        input: scenario.clone(),
        base_q: parts.next().expect("at least one layer"),
        residuals_q: parts.collect(),
        final_residual: prev.final_residual.clone(),
        intermediates,
        diagnostics,
    };
    Ok(ScenarioResult {
        level,
        requantized_layers: last + 1,
        curve: MarketObject::new(model.grid().clone(), scenario, request.current.date)?,
        decomposition,
        max_shock_miss: miss,
        converged: miss <= MATCH_TOLERANCE,
    })
}
