//! JSON payloads shared by the CLI and the HTTP service.
//!
//! Every curve carries its tenor labels; values are decimal rates.

use std::collections::BTreeMap;
use std::sync::Arc;

use chrono::NaiveDate;
use finq_core::applications::{parse_shock, LayerSampling, SampleSpec, ScenarioMove, ScenarioResult};
use finq_core::market_data::{MarketObject, TenorGrid};
use finq_core::pipeline::{Decomposition, FinqModel, LayerDiagnostics, PIPELINE_FORMAT_VERSION};
use finq_core::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireCurve {
    pub tenors: Vec<String>,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
}

impl WireCurve {
    pub fn from_object(o: &MarketObject) -> Self {
        Self {
            tenors: o.grid.labels().to_vec(),
            values: o.values.clone(),
            date: o.date,
        }
    }

    /// Reorders the payload onto `grid`, which it must cover exactly.
    pub fn to_object(&self, grid: &Arc<TenorGrid>) -> Result<MarketObject, Error> {
        if self.tenors.len() != self.values.len() {
            return Err(Error::InvalidConfig(format!(
                "curve has {} tenors but {} values",
                self.tenors.len(),
                self.values.len()
            )));
        }
        if self.tenors.len() != grid.len() {
            return Err(Error::Dimension {
                context: "curve",
                expected: grid.len(),
                actual: self.tenors.len(),
            });
        }
        let mut values = vec![None; grid.len()];
        let mut unknown = Vec::new();
        for (t, &v) in self.tenors.iter().zip(&self.values) {
            match grid.index_of(t) {
                Some(i) if values[i].is_some() => {
                    return Err(Error::InvalidConfig(format!("tenor {t} appears twice")));
                }
                Some(i) => values[i] = Some(v),
                None => unknown.push(t.clone()),
            }
        }
        if !unknown.is_empty() {
            return Err(Error::MissingTenors(unknown));
        }
        MarketObject::new(grid.clone(), values.into_iter().map(Option::unwrap).collect(), self.date)
    }
}

/// A rate change given as a decimal number or as text such as `"+10bp"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Shock {
    Decimal(f64),
    Text(String),
}

impl Shock {
    pub fn value(&self) -> Result<f64, Error> {
        match self {
            Shock::Decimal(v) => Ok(*v),
            Shock::Text(t) => parse_shock(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMove {
    pub tenor: String,
    pub shock: Shock,
}

pub fn to_moves(moves: &[WireMove]) -> Result<Vec<ScenarioMove>, Error> {
    moves
        .iter()
        .map(|m| {
            Ok(ScenarioMove {
                tenor: m.tenor.clone(),
                shock: m.shock.value()?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecomposeRequest {
    pub curve: WireCurve,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioRequestBody {
    pub curve: WireCurve,
    #[serde(default)]
    pub moves: Vec<WireMove>,
    #[serde(default)]
    pub level: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRequest {
    /// Per-layer choices; every layer samples the prior when absent.
    #[serde(default)]
    pub spec: Option<SampleSpec>,
    #[serde(default)]
    pub count: Option<usize>,
    pub seed: u64,
}

impl SampleRequest {
    pub fn resolve(&self, model: &FinqModel) -> Result<SampleSpec, Error> {
        match (&self.spec, self.count) {
            (Some(s), None) => Ok(s.clone()),
            (Some(s), Some(c)) if c == s.count => Ok(s.clone()),
            (Some(_), Some(_)) => Err(Error::InvalidConfig("count disagrees with spec.count".into())),
            (None, c) => Ok(SampleSpec {
                layers: vec![LayerSampling::Prior; model.num_layers()],
                count: c.unwrap_or(1),
            }),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NowcastRequest {
    pub partial: BTreeMap<String, f64>,
    #[serde(default)]
    pub date: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub model_version: &'static str,
}

impl Default for Health {
    fn default() -> Self {
        Self {
            status: "ok",
            model_version: PIPELINE_FORMAT_VERSION,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelMeta {
    pub model_version: &'static str,
    pub tenors: Vec<String>,
    pub year_fractions: Vec<f64>,
    /// Anchor labels used by each cascade layer.
    pub anchors: Vec<Vec<String>>,
    pub latent_dims: Vec<usize>,
    /// Anchor labels per anchor level, coarse to fine.
    pub anchor_levels: Vec<Vec<String>>,
}

impl ModelMeta {
    pub fn of(model: &FinqModel) -> Self {
        let labels = model.grid().labels();
        Self {
            model_version: PIPELINE_FORMAT_VERSION,
            tenors: labels.to_vec(),
            year_fractions: model.grid().year_fractions().to_vec(),
            anchors: (0..model.num_layers()).map(|k| model.anchor_labels(k)).collect(),
            latent_dims: model.latent_dims(),
            anchor_levels: model
                .layout()
                .sets()
                .iter()
                .map(|s| s.iter().map(|&i| labels[i].clone()).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecompositionBody {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub tenors: Vec<String>,
    pub input: Vec<f64>,
    pub base: Vec<f64>,
    pub residuals: Vec<Vec<f64>>,
    pub final_residual: Vec<f64>,
    /// Reconstruction at every level, coarse to fine; the last is the input.
    pub levels: Vec<Vec<f64>>,
    pub diagnostics: Vec<LayerDiagnostics>,
}

impl DecompositionBody {
    pub fn of(d: &Decomposition) -> Result<Self, Error> {
        Ok(Self {
            date: d.date,
            tenors: d.grid.labels().to_vec(),
            input: d.input.clone(),
            base: d.base_q.clone(),
            residuals: d.residuals_q.clone(),
            final_residual: d.final_residual.clone(),
            levels: (0..=d.num_levels())
                .map(|j| d.reconstruct_at_level(j).map(|o| o.values))
                .collect::<Result<_, _>>()?,
            diagnostics: d.diagnostics.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioBody {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub date: Option<NaiveDate>,
    pub level: usize,
    pub requantized_layers: usize,
    pub converged: bool,
    pub max_shock_miss: f64,
    pub tenors: Vec<String>,
    pub curve: Vec<f64>,
    pub levels: Vec<Vec<f64>>,
    pub decomposition: DecompositionBody,
}

impl ScenarioBody {
    pub fn of(r: &ScenarioResult) -> Result<Self, Error> {
        Ok(Self {
            date: r.curve.date,
            level: r.level,
            requantized_layers: r.requantized_layers,
            converged: r.converged,
            max_shock_miss: r.max_shock_miss,
            tenors: r.curve.grid.labels().to_vec(),
            curve: r.curve.values.clone(),
            levels: r.levels()?.into_iter().map(|o| o.values).collect(),
            decomposition: DecompositionBody::of(&r.decomposition)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplesBody {
    pub tenors: Vec<String>,
    pub curves: Vec<Vec<f64>>,
}

impl SamplesBody {
    pub fn of(grid: &TenorGrid, samples: &[MarketObject]) -> Self {
        Self {
            tenors: grid.labels().to_vec(),
            curves: samples.iter().map(|s| s.values.clone()).collect(),
        }
    }
}
