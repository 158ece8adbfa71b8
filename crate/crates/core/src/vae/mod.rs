//! One decomposition layer: a β-VAE with a Gaussian encoder, a deterministic
//! decoder and an anchor-weighted reconstruction term.
//!
//! Per datum the loss is
//!
//! ```text
//! total = ‖x − Dec(z)‖² + α · Σ_{i∈𝒜} (x_i − Dec(z)_i)² + β · KL(q(z|x) ‖ N(0, I))
//! ```
//!
//! with `z = μ + exp(½ log σ²) ⊙ ε`. Batches average this over samples.

mod io;
mod train;

pub use io::{MlpFile, VaeFile, VAE_FORMAT_VERSION};
pub use train::{train, EpochStats, TrainConfig};

use crate::error::{ensure_len, Error, Result};
use crate::ndmath::{Activation, ForwardCache, Mlp, MlpGradients, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    encoder: Mlp,
    decoder: Mlp,
    latent_dim: usize,
    beta: f64,
    alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub anchor: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeGradients {
    pub encoder: MlpGradients,
    pub decoder: MlpGradients,
}

impl VaeGradients {
    pub fn zeros_like(model: &VaeModel) -> Self {
        Self {
            encoder: MlpGradients::zeros_like(&model.encoder),
            decoder: MlpGradients::zeros_like(&model.decoder),
        }
    }

    pub fn accumulate(&mut self, other: &VaeGradients, scale: f64) {
        self.encoder.accumulate(&other.encoder, scale);
        self.decoder.accumulate(&other.decoder, scale);
    }

    /// Encoder blocks followed by decoder blocks; matches
    /// [`VaeModel::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.encoder.blocks();
        b.extend(self.decoder.blocks());
        b
    }
}

impl VaeModel {
    pub fn from_parts(encoder: Mlp, decoder: Mlp, beta: f64, alpha: f64) -> Result<Self> {
        let latent_dim = decoder.input_dim();
        ensure_len("encoder output (2 × latent)", 2 * latent_dim, encoder.output_dim())?;
        ensure_len("decoder output", encoder.input_dim(), decoder.output_dim())?;
        if !(beta >= 0.0 && alpha >= 0.0 && beta.is_finite() && alpha.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "beta and alpha must be finite and non-negative (beta={beta}, alpha={alpha})"
            )));
        }
        Ok(Self {
            encoder,
            decoder,
            latent_dim,
            beta,
            alpha,
        })
    }

    /// Freshly initialized model: encoder `[m, hidden.., 2·latent]`, decoder
    /// `[latent, hidden.., m]`.
    pub fn init(
        input_dim: usize,
        latent_dim: usize,
        encoder_hidden: &[usize],
        decoder_hidden: &[usize],
        beta: f64,
        alpha: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        if latent_dim == 0 || input_dim == 0 {
            return Err(Error::InvalidConfig("input and latent dims must be positive".into()));
        }
        let mut enc_sizes = vec![input_dim];
        enc_sizes.extend_from_slice(encoder_hidden);
        enc_sizes.push(2 * latent_dim);
        let mut dec_sizes = vec![latent_dim];
        dec_sizes.extend_from_slice(decoder_hidden);
        dec_sizes.push(input_dim);
        let encoder = Mlp::new(&enc_sizes, Activation::Tanh, rng)?;
        let decoder = Mlp::new(&dec_sizes, Activation::Tanh, rng)?;
        Self::from_parts(encoder, decoder, beta, alpha)
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn decoder(&self) -> &Mlp {
        &self.decoder
    }

    pub fn encoder_mut(&mut self) -> &mut Mlp {
        &mut self.encoder
    }

    pub fn decoder_mut(&mut self) -> &mut Mlp {
        &mut self.decoder
    }

    pub fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Posterior mean and log-variance.
    pub fn encode(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut out = self.encoder.predict(x)?;
        let logvar = out.split_off(self.latent_dim);
        if !out.iter().chain(&logvar).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("encoder output".into()));
        }
        Ok((out, logvar))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.decoder.predict(z)
    }

    pub fn decode_with_cache(&self, z: &[f64]) -> Result<ForwardCache> {
        self.decoder.forward(z)
    }

    /// Reconstruction through the posterior mean, `Dec(μ(x))`.
    pub fn reconstruct_mean(&self, x: &[f64]) -> Result<Vec<f64>> {
        let (mu, _) = self.encode(x)?;
        self.decode(&mu)
    }

    /// Encoder blocks (prefixed `encoder.`) then decoder blocks.
    pub fn param_blocks_mut(&mut self) -> Vec<crate::ndmath::ParamBlock<'_>> {
        let mut b = self.encoder.param_blocks_mut("encoder.");
        b.extend(self.decoder.param_blocks_mut("decoder."));
        b
    }

    /// Loss at a given latent `z`; the KL term uses the encoding of `x`.
    pub fn loss(&self, x: &[f64], z: &[f64], anchors: &[usize]) -> Result<LossParts> {
        ensure_len("latent", self.latent_dim, z.len())?;
        let (mu, logvar) = self.encode(x)?;
        let x_hat = self.decode(z)?;
        self.combine(x, &x_hat, &mu, &logvar, anchors)
    }

    fn combine(
        &self,
        x: &[f64],
        x_hat: &[f64],
        mu: &[f64],
        logvar: &[f64],
        anchors: &[usize],
    ) -> Result<LossParts> {
        let recon = squared_error(x, x_hat)?;
        let anchor = anchor_loss(x, x_hat, anchors)?;
        let kl = kl_divergence(mu, logvar)?;
        for (name, v) in [("reconstruction", recon), ("anchor", anchor), ("kl", kl)] {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("{name} loss term")));
            }
        }
        Ok(LossParts {
            total: recon + self.alpha * anchor + self.beta * kl,
            recon,
            anchor,
            kl,
        })
    }

    /// Training objective for one datum with fixed noise `eps`, and its
    /// gradient with respect to every encoder and decoder parameter.
    pub fn loss_and_gradients(
        &self,
        x: &[f64],
        eps: &[f64],
        anchors: &[usize],
    ) -> Result<(LossParts, VaeGradients)> {
        let mut grads = VaeGradients::zeros_like(self);
        let parts = self.accumulate_gradients(x, eps, anchors, 1.0, &mut grads)?;
        Ok((parts, grads))
    }

    /// Adds `scale · ∇loss` into `grads`.
    pub(crate) fn accumulate_gradients(
        &self,
        x: &[f64],
        eps: &[f64],
        anchors: &[usize],
        scale: f64,
        grads: &mut VaeGradients,
    ) -> Result<LossParts> {
        ensure_len("noise", self.latent_dim, eps.len())?;
        let enc = self.encoder.forward(x)?;
        let (mu, logvar) = enc.output().split_at(self.latent_dim);
        let sigma: Vec<f64> = logvar.iter().map(|lv| (0.5 * lv).exp()).collect();
        let z: Vec<f64> = mu
            .iter()
            .zip(&sigma)
            .zip(eps)
            .map(|((m, s), e)| m + s * e)
            .collect();
        let dec = self.decoder.forward(&z)?;
        let x_hat = dec.output();
        let parts = self.combine(x, x_hat, mu, logvar, anchors)?;

        let mut d_out: Vec<f64> = x_hat
            .iter()
            .zip(x)
            .map(|(h, t)| 2.0 * (h - t) * scale)
            .collect();
        for &i in anchors {
            d_out[i] += self.alpha * 2.0 * (x_hat[i] - x[i]) * scale;
        }
        let dz = self
            .decoder
            .backward_accumulate(&dec, &d_out, &mut grads.decoder)?;

        let mut d_enc = vec![0.0; 2 * self.latent_dim];
        for k in 0..self.latent_dim {
            d_enc[k] = dz[k] + scale * self.beta * mu[k];
            d_enc[self.latent_dim + k] = dz[k] * eps[k] * 0.5 * sigma[k]
                + scale * self.beta * 0.5 * (logvar[k].exp() - 1.0);
        }
        self.encoder
            .backward_accumulate(&enc, &d_enc, &mut grads.encoder)?;
        Ok(parts)
    }
}

fn squared_error(x: &[f64], x_hat: &[f64]) -> Result<f64> {
    ensure_len("reconstruction", x.len(), x_hat.len())?;
    Ok(x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum())
}

/// `z = μ + exp(½ log σ²) ⊙ ε`, `ε ~ N(0, I)`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], rng: &mut Rng) -> Result<Vec<f64>> {
    ensure_len("reparameterize", mu.len(), logvar.len())?;
    Ok(mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m + (0.5 * lv).exp() * rng.normal())
        .collect())
}

/// Closed-form `KL(N(μ, σ²) ‖ N(0, I))` for a diagonal Gaussian.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    ensure_len("kl divergence", mu.len(), logvar.len())?;
    Ok(-0.5
        * mu
            .iter()
            .zip(logvar)
            .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
            .sum::<f64>())
}

/// `Σ_{i∈𝒜} (x_i − x̂_i)²`
pub fn anchor_loss(x: &[f64], x_hat: &[f64], anchors: &[usize]) -> Result<f64> {
    ensure_len("anchor loss", x.len(), x_hat.len())?;
    if anchors.is_empty() {
        return Err(Error::InvalidConfig("anchor set is empty".into()));
    }
    let mut s = 0.0;
    for &i in anchors {
        if i >= x.len() {
            return Err(Error::OutOfRange(format!("anchor index {i} outside curve of {}", x.len())));
        }
        s += (x[i] - x_hat[i]) * (x[i] - x_hat[i]);
    }
    Ok(s)
}
