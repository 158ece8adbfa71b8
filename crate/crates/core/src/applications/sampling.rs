//! Synthetic curves assembled from per-layer latent choices.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::MarketObject;
use crate::ndmath::{all_finite, Rng};
use crate::pipeline::FinqModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum LayerSampling {
    /// `z ~ N(0, I)`.
    Prior,
    /// The same latent for every sample.
    Fixed(Vec<f64>),
    /// A latent drawn uniformly from a pool of historical quantized latents.
    Historical(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    /// One entry per cascade layer.
    pub layers: Vec<LayerSampling>,
    pub count: usize,
}

impl SampleSpec {
    pub fn all_prior(num_layers: usize, count: usize) -> Self {
        Self {
            layers: vec![LayerSampling::Prior; num_layers],
            count,
        }
    }

    fn validate(&self, model: &FinqModel) -> Result<()> {
        if self.layers.len() != model.num_layers() {
            return Err(Error::InvalidConfig(format!(
                "sample spec has {} layers, model has {}",
                self.layers.len(),
                model.num_layers()
            )));
        }
        if self.count == 0 {
            return Err(Error::InvalidConfig("sample count must be positive".into()));
        }
        for (k, (s, d)) in self.layers.iter().zip(model.latent_dims()).enumerate() {
            let check = |z: &Vec<f64>| -> Result<()> {
                if z.len() != d {
                    return Err(Error::InvalidConfig(format!(
                        "layer {k}: latent has length {}, expected {d}",
                        z.len()
                    )));
                }
                if !all_finite(z) {
                    return Err(Error::NonFinite(format!("layer {k} latent")));
                }
                Ok(())
            };
            match s {
                LayerSampling::Prior => {}
                LayerSampling::Fixed(z) => check(z)?,
                LayerSampling::Historical(pool) => {
                    if pool.is_empty() {
                        return Err(Error::InvalidConfig(format!("layer {k}: empty historical pool")));
                    }
                    pool.iter().try_for_each(check)?;
                }
            }
        }
        Ok(())
    }
}

/// Draws `spec.count` curves `Σ_k Dec_k(z_k)`. Samples are undated.
pub fn sample_synthetic(model: &FinqModel, spec: &SampleSpec, rng: &mut Rng) -> Result<Vec<MarketObject>> {
    spec.validate(model)?;
    let grid: Arc<_> = model.grid().clone();
    let dims = model.latent_dims();
    (0..spec.count)
        .map(|_| {
            let mut curve = vec![0.0; grid.len()];
            for (k, s) in spec.layers.iter().enumerate() {
                let z = match s {
                    LayerSampling::Prior => rng.normal_vec(dims[k]),
                    LayerSampling::Fixed(z) => z.clone(),
                    LayerSampling::Historical(pool) => pool[rng.below(pool.len())].clone(),
                };
                let part = model.decode_layer(k, &z)?;
                curve.iter_mut().zip(&part).for_each(|(c, p)| *c += p);
            }
            MarketObject::new(grid.clone(), curve, None)
        })
        .collect()
}
