//! The multiresolution cascade.
//!
//! Layer 0 (base) models curves; layer `k ≥ 1` models what is left after the
//! quantized reconstructions of layers `< k` are subtracted. Every layer works
//! in its own normalized space and is quantized against its anchor set. What
//! the last layer leaves is kept exactly, so
//!
//! ```text
//! x = base_q + δ₀ + δ₁ + … + δ_{n−1} + final_residual
//! ```

mod bundle;

pub use bundle::{load_model, save_model, FinqModelFile, PIPELINE_FORMAT_VERSION};

use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::market_data::{AnchorLayout, CurveHistory, MarketObject, Normalizer, TenorGrid};
use crate::ndmath::Matrix;
use crate::quantizer::{quantize_weighted, QuantizeConfig, QuantizeResult};
use crate::vae::{train, EpochStats, TrainConfig, VaeModel};

/// Latent sizes of base, L₀, L₁, L₂.
pub const DEFAULT_LATENT_DIMS: [usize; 4] = [3, 1, 1, 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// One entry per cascade layer, base first.
    pub layers: Vec<TrainConfig>,
    pub quantize: QuantizeConfig,
    pub min_history: usize,
    /// Lower bound on each layer's normalization scale (decimal units).
    pub std_floor: f64,
    /// Fail on a layer whose training inputs have (near) zero variance
    /// instead of training it on the floored scale.
    pub strict: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self::with_seed(7)
    }
}

impl PipelineConfig {
    /// Default layers seeded `seed, seed + 1, …`.
    pub fn with_seed(seed: u64) -> Self {
        Self {
            layers: DEFAULT_LATENT_DIMS
                .iter()
                .enumerate()
                .map(|(k, &d)| TrainConfig {
                    seed: seed.wrapping_add(k as u64),
                    ..TrainConfig::with_latent_dim(d)
                })
                .collect(),
            quantize: QuantizeConfig::default(),
            min_history: 50,
            std_floor: 1e-6,
            strict: false,
        }
    }

    pub fn set_epochs(&mut self, epochs: usize) {
        self.layers.iter_mut().for_each(|l| l.epochs = epochs);
    }
}

/// Trained cascade. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct FinqModel {
    grid: Arc<TenorGrid>,
    layout: AnchorLayout,
    normalizers: Vec<Normalizer>,
    layers: Vec<VaeModel>,
    quantize: QuantizeConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerReport {
    pub loss_trace: Vec<EpochStats>,
    /// Mean anchor error of this layer's quantized output on its training
    /// inputs, in decimal units squared.
    pub mean_anchor_error: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub layers: Vec<LayerReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDiagnostics {
    pub layer: usize,
    pub anchors: Vec<usize>,
    /// Encoder mean of the layer input.
    pub mu: Vec<f64>,
    pub z_q: Vec<f64>,
    /// Anchor errors in the layer's normalized units.
    pub anchor_error_before: f64,
    pub anchor_error_after: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One curve split into calibrated layers. All vectors are in decimal units.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub grid: Arc<TenorGrid>,
    pub date: Option<NaiveDate>,
    pub input: Vec<f64>,
    pub base_q: Vec<f64>,
    pub residuals_q: Vec<Vec<f64>>,
    pub final_residual: Vec<f64>,
    /// `𝒪_j = base_q + δ₀ + … + δ_j` for each residual layer `j`.
    pub intermediates: Vec<Vec<f64>>,
    pub diagnostics: Vec<LayerDiagnostics>,
}

impl Decomposition {
    /// Number of modelled layers; `reconstruct_at_level(num_levels())` is the input.
    pub fn num_levels(&self) -> usize {
        self.residuals_q.len() + 1
    }

    /// Sum of the first `j + 1` modelled parts (`j = 0` is the base); the
    /// top level returns the input.
    pub fn reconstruct_at_level(&self, j: usize) -> Result<MarketObject> {
        let n = self.num_levels();
        let values = match j {
            0 => self.base_q.clone(),
            j if j < n => self.intermediates[j - 1].clone(),
            j if j == n => self.input.clone(),
            _ => {
                return Err(Error::OutOfRange(format!("level {j} outside 0..={n}")));
            }
        };
        MarketObject::new(self.grid.clone(), values, self.date)
    }

    /// Parts in order: base, each residual layer, final residual.
    pub fn parts(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![&self.base_q];
        out.extend(self.residuals_q.iter().map(|r| r.as_slice()));
        out.push(&self.final_residual);
        out
    }

    /// Sum of all parts, accumulated in order.
    pub fn sum_of_parts(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.input.len()];
        for p in self.parts() {
            acc.iter_mut().zip(p).for_each(|(a, v)| *a += v);
        }
        acc
    }

    /// Modelled part of layer `k` (0 = base).
    pub fn layer_part(&self, k: usize) -> &[f64] {
        if k == 0 {
            &self.base_q
        } else {
            &self.residuals_q[k - 1]
        }
    }
}

impl FinqModel {
    pub fn from_parts(
        grid: Arc<TenorGrid>,
        layout: AnchorLayout,
        normalizers: Vec<Normalizer>,
        layers: Vec<VaeModel>,
        quantize: QuantizeConfig,
    ) -> Result<Self> {
        let m = grid.len();
        if layers.len() != layout.num_sets() + 1 {
            return Err(Error::InvalidConfig(format!(
                "{} anchor sets need {} layers, got {}",
                layout.num_sets(),
                layout.num_sets() + 1,
                layers.len()
            )));
        }
        ensure_len("normalizers", layers.len(), normalizers.len())?;
        if let Some(bad) = layout.sets().iter().flatten().find(|&&i| i >= m) {
            return Err(Error::OutOfRange(format!("anchor index {bad} outside grid of {m}")));
        }
        for (k, (l, n)) in layers.iter().zip(&normalizers).enumerate() {
            if l.input_dim() != m {
                return Err(in_layer(k, Error::dim("layer input", m, l.input_dim())));
            }
            ensure_len("normalizer", m, n.dim())?;
            n.validate()?;
        }
        quantize.validate()?;
        Ok(Self {
            grid,
            layout,
            normalizers,
            layers,
            quantize,
        })
    }

    pub fn grid(&self) -> &Arc<TenorGrid> {
        &self.grid
    }

    pub fn layout(&self) -> &AnchorLayout {
        &self.layout
    }

    pub fn normalizers(&self) -> &[Normalizer] {
        &self.normalizers
    }

    pub fn layers(&self) -> &[VaeModel] {
        &self.layers
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn latent_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.latent_dim()).collect()
    }

    pub fn quantize_config(&self) -> &QuantizeConfig {
        &self.quantize
    }

    pub fn set_quantize_config(&mut self, config: QuantizeConfig) -> Result<()> {
        config.validate()?;
        self.quantize = config;
        Ok(())
    }

    pub fn anchors(&self, k: usize) -> &[usize] {
        self.layout.for_layer(k)
    }

    pub fn anchor_labels(&self, k: usize) -> Vec<String> {
        self.anchors(k).iter().map(|&i| self.grid.labels()[i].clone()).collect()
    }

    /// Encoder mean of layer `k` for an input in decimal units.
    pub fn encode_layer(&self, k: usize, input: &[f64]) -> Result<Vec<f64>> {
        ensure_len("layer input", self.grid.len(), input.len())?;
        Ok(self.layers[k].encode(&self.normalizers[k].apply(input))?.0)
    }

    /// Decoding of `z` by layer `k`, in decimal units.
    pub fn decode_layer(&self, k: usize, z: &[f64]) -> Result<Vec<f64>> {
        Ok(self.normalizers[k].invert(&self.layers[k].decode(z)?))
    }

    /// Quantizes layer `k` against `target` (decimal units) on the given
    /// anchors and returns the decoded part in decimal units.
    pub fn quantize_layer(
        &self,
        k: usize,
        target: &[f64],
        anchors: &[usize],
        weights: Option<&[f64]>,
        z0: &[f64],
        config: &QuantizeConfig,
    ) -> Result<(Vec<f64>, QuantizeResult)> {
        ensure_len("layer target", self.grid.len(), target.len())?;
        let xn = self.normalizers[k].apply(target);
        let r = quantize_weighted(&self.layers[k], &xn, anchors, weights, config, z0)?;
        Ok((self.decode_layer(k, &r.z_q)?, r))
    }

    pub fn decompose(&self, x: &MarketObject) -> Result<Decomposition> {
        self.decompose_with(x, &self.quantize)
    }

    pub fn decompose_with(&self, x: &MarketObject, config: &QuantizeConfig) -> Result<Decomposition> {
        if *x.grid != *self.grid {
            return Err(Error::InvalidConfig(format!(
                "curve grid [{}] differs from model grid [{}]",
                x.grid.labels().join(","),
                self.grid.labels().join(",")
            )));
        }
        self.decompose_values(&x.values, x.date, config)
    }

    pub fn decompose_values(
        &self,
        values: &[f64],
        date: Option<NaiveDate>,
        config: &QuantizeConfig,
    ) -> Result<Decomposition> {
        ensure_len("curve", self.grid.len(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("curve value at {}", self.grid.labels()[i])));
        }
        let mut residual = values.to_vec();
        let mut running = vec![0.0; values.len()];
        let mut parts = Vec::with_capacity(self.layers.len());
        let mut intermediates = Vec::with_capacity(self.layers.len() - 1);
        let mut diagnostics = Vec::with_capacity(self.layers.len());
        for k in 0..self.layers.len() {
            let anchors = self.anchors(k);
            let mu = self.encode_layer(k, &residual)?;
            let (part, r) = self.quantize_layer(k, &residual, anchors, None, &mu, config)?;
            for ((res, run), p) in residual.iter_mut().zip(running.iter_mut()).zip(&part) {
                *res -= p;
                *run += p;
            }
            if k > 0 {
                intermediates.push(running.clone());
            }
            diagnostics.push(LayerDiagnostics {
                layer: k,
                anchors: anchors.to_vec(),
                mu,
                z_q: r.z_q,
                anchor_error_before: r.anchor_error_before,
                anchor_error_after: r.anchor_error_after,
                iterations: r.iterations,
                converged: r.converged,
            });
            parts.push(part);
        }
        let final_residual: Vec<f64> = values.iter().zip(&running).map(|(x, o)| x - o).collect();
        let mut parts = parts.into_iter();
        let base_q = parts.next().expect("at least one layer");
        Ok(Decomposition {
            grid: self.grid.clone(),
            date,
            input: values.to_vec(),
            base_q,
            residuals_q: parts.collect(),
            final_residual,
            intermediates,
            diagnostics,
        })
    }

    /// The curve obtained with every latent at the origin.
    pub fn mean_shape(&self) -> Result<Vec<f64>> {
        let mut acc = vec![0.0; self.grid.len()];
        for k in 0..self.layers.len() {
            let part = self.decode_layer(k, &vec![0.0; self.layers[k].latent_dim()])?;
            acc.iter_mut().zip(&part).for_each(|(a, p)| *a += p);
        }
        Ok(acc)
    }
}

fn in_layer(k: usize, e: Error) -> Error {
    Error::InvalidConfig(format!("layer {k}: {e}"))
}

/// Trains the cascade layer by layer on quantized residuals of the layers
/// already built.
pub fn train_pipeline(
    history: &CurveHistory,
    layout: &AnchorLayout,
    config: &PipelineConfig,
) -> Result<(FinqModel, TrainReport)> {
    let n_layers = layout.num_sets() + 1;
    if config.layers.len() != n_layers {
        return Err(Error::InvalidConfig(format!(
            "{} anchor sets need {} layer configs, got {}",
            layout.num_sets(),
            n_layers,
            config.layers.len()
        )));
    }
    if history.len() < config.min_history {
        return Err(Error::InvalidConfig(format!(
            "history has {} curves, at least {} required",
            history.len(),
            config.min_history
        )));
    }
    if !(config.std_floor > 0.0 && config.std_floor.is_finite()) {
        return Err(Error::InvalidConfig("std_floor must be positive".into()));
    }
    config.quantize.validate()?;
    let grid = history.grid().clone();
    if let Some(bad) = layout.sets().iter().flatten().find(|&&i| i >= grid.len()) {
        return Err(Error::OutOfRange(format!("anchor index {bad} outside grid of {}", grid.len())));
    }

    let mut inputs = history.to_matrix();
    let mut normalizers = Vec::with_capacity(n_layers);
    let mut layers = Vec::with_capacity(n_layers);
    let mut reports = Vec::with_capacity(n_layers);
    for (k, layer_cfg) in config.layers.iter().enumerate() {
        let anchors = layout.for_layer(k);
        let norm = Normalizer::fit_pooled(&inputs, config.std_floor)?;
        let scale = norm.std[0];
        let raw_scale = Normalizer::fit_pooled(&inputs, f64::MIN_POSITIVE).map_or(0.0, |n| n.std[0]);
        if raw_scale < config.std_floor {
            let msg = format!("layer {k} training inputs have (near) zero variance ({raw_scale:e})");
            if config.strict {
                return Err(Error::Degenerate(msg));
            }
            log::warn!("{msg}; using scale {scale:e}");
        }
        let data = norm.apply_matrix(&inputs);
        let (vae, trace) = train(&data, anchors, layer_cfg).map_err(|e| match e {
            Error::Divergence { epoch, message } => Error::Divergence {
                epoch,
                message: format!("layer {k}: {message}"),
            },
            other => in_layer(k, other),
        })?;

        let mut next = Vec::with_capacity(inputs.rows());
        let mut err_sum = 0.0;
        for (raw, row) in inputs.iter_rows().zip(data.iter_rows()) {
            let mu = vae.encode(row)?.0;
            let r = quantize_weighted(&vae, row, anchors, None, &config.quantize, &mu)?;
            let part = norm.invert(&vae.decode(&r.z_q)?);
            err_sum += r.anchor_error_after * scale * scale;
            next.push(raw.iter().zip(&part).map(|(x, p)| x - p).collect::<Vec<f64>>());
        }
        log::info!(
            "layer {k}: latent {} final loss {:.6e} mean anchor error {:.3e}",
            layer_cfg.latent_dim,
            trace.last().map_or(f64::NAN, |s| s.total),
            err_sum / inputs.rows() as f64
        );
        reports.push(LayerReport {
            loss_trace: trace,
            mean_anchor_error: err_sum / inputs.rows() as f64,
            scale,
        });
        normalizers.push(norm);
        layers.push(vae);
        inputs = Matrix::from_rows(&next)?;
    }
    let model = FinqModel::from_parts(grid, layout.clone(), normalizers, layers, config.quantize.clone())?;
    Ok((model, TrainReport { layers: reports }))
}
