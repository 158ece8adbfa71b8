use serde::{Deserialize, Serialize};

use super::{LossParts, VaeGradients, VaeModel};
use crate::error::{Error, Result};
use crate::ndmath::{adam_step, AdamConfig, AdamState, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta: f64,
    pub alpha: f64,
    pub seed: u64,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            latent_dim: 3,
            epochs: 600,
            batch_size: 32,
            learning_rate: 1e-3,
            beta: 0.001,
            alpha: 10.0,
            seed: 7,
            encoder_hidden: vec![32, 16],
            decoder_hidden: vec![16, 32],
        }
    }
}

impl TrainConfig {
    pub fn with_latent_dim(latent_dim: usize) -> Self {
        Self {
            latent_dim,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig(
                "latent_dim, epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.beta >= 0.0 && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig("beta and alpha must be non-negative".into()));
        }
        if self.encoder_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return Err(Error::InvalidConfig("hidden sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Per-epoch sample means of the loss parts.
pub type EpochStats = LossParts;

/// Mini-batch Adam on the anchor-augmented β-VAE loss, one noise sample per
/// datum per step. Fully determined by `(dataset, anchors, config)`.
pub fn train(dataset: &Matrix, anchors: &[usize], config: &TrainConfig) -> Result<(VaeModel, Vec<EpochStats>)> {
    config.validate()?;
    let n = dataset.rows();
    if n < config.batch_size {
        return Err(Error::InvalidConfig(format!(
            "dataset has {n} rows, fewer than batch size {}",
            config.batch_size
        )));
    }
    if anchors.is_empty() {
        return Err(Error::InvalidConfig("anchor set is empty".into()));
    }
    if let Some(&bad) = anchors.iter().find(|&&i| i >= dataset.cols()) {
        return Err(Error::OutOfRange(format!("anchor index {bad} outside {} columns", dataset.cols())));
    }

    let mut root = Rng::new(config.seed);
    let mut init_rng = root.fork();
    let mut noise_rng = root.fork();
    let mut model = VaeModel::init(
        dataset.cols(),
        config.latent_dim,
        &config.encoder_hidden,
        &config.decoder_hidden,
        config.beta,
        config.alpha,
        &mut init_rng,
    )?;

    let adam = AdamConfig::default();
    let mut state = AdamState::new();
    let mut grads = VaeGradients::zeros_like(&model);
    let mut order: Vec<usize> = (0..n).collect();
    let mut trace = Vec::with_capacity(config.epochs);
    let mut eps = vec![0.0; config.latent_dim];

    for epoch in 0..config.epochs {
        noise_rng.shuffle(&mut order);
        let mut sum = LossParts::default();
        for batch in order.chunks(config.batch_size) {
            grads.encoder.fill_zero();
            grads.decoder.fill_zero();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                eps.iter_mut().for_each(|e| *e = noise_rng.normal());
                let p = model
                    .accumulate_gradients(dataset.row(i), &eps, anchors, scale, &mut grads)
                    .map_err(|e| Error::Divergence {
                        epoch,
                        message: e.to_string(),
                    })?;
                sum.total += p.total;
                sum.recon += p.recon;
                sum.anchor += p.anchor;
                sum.kl += p.kl;
            }
            let lr = config.learning_rate;
            let g = grads.blocks();
            adam_step(&mut model.param_blocks_mut(), &g, &mut state, &adam, lr).map_err(|e| {
                Error::Divergence {
                    epoch,
                    message: e.to_string(),
                }
            })?;
        }
        let nf = n as f64;
        let stats = LossParts {
            total: sum.total / nf,
            recon: sum.recon / nf,
            anchor: sum.anchor / nf,
            kl: sum.kl / nf,
        };
        if !stats.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                message: "non-finite mean loss".into(),
            });
        }
        log::trace!("epoch {epoch}: {stats:?}");
        trace.push(stats);
    }
    Ok((model, trace))
}
