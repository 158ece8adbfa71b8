use serde::{Deserialize, Serialize};

use super::VaeModel;
use crate::error::{ensure_len, Error, Result};
use crate::ndmath::{Activation, Dense, Matrix, Mlp};

pub const VAE_FORMAT_VERSION: &str = "finq-vae-1";

/// Network parameters with row-major `(out, in)` weight arrays per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpFile {
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeFile {
    pub version: String,
    pub latent_dim: usize,
    pub beta: f64,
    pub alpha: f64,
    pub encoder: MlpFile,
    pub decoder: MlpFile,
}

impl From<&Mlp> for MlpFile {
    fn from(net: &Mlp) -> Self {
        Self {
            layer_sizes: net.layer_sizes(),
            hidden_activation: net.hidden_activation(),
            output_activation: net.output_activation(),
            weights: net.layers().iter().map(|l| l.weights.as_slice().to_vec()).collect(),
            biases: net.layers().iter().map(|l| l.bias.clone()).collect(),
        }
    }
}

impl TryFrom<&MlpFile> for Mlp {
    type Error = Error;

    fn try_from(f: &MlpFile) -> Result<Self> {
        if f.layer_sizes.len() < 2 {
            return Err(Error::InvalidConfig("network file needs at least two layer sizes".into()));
        }
        let n = f.layer_sizes.len() - 1;
        ensure_len("network weight arrays", n, f.weights.len())?;
        ensure_len("network bias arrays", n, f.biases.len())?;
        let layers = f
            .layer_sizes
            .windows(2)
            .zip(f.weights.iter().zip(&f.biases))
            .map(|(w, (weights, bias))| {
                Ok(Dense {
                    weights: Matrix::new(w[1], w[0], weights.clone())?,
                    bias: bias.clone(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Mlp::from_layers(layers, f.hidden_activation, f.output_activation)
    }
}

impl VaeModel {
    pub fn to_file(&self) -> VaeFile {
        VaeFile {
            version: VAE_FORMAT_VERSION.to_string(),
            latent_dim: self.latent_dim,
            beta: self.beta,
            alpha: self.alpha,
            encoder: (&self.encoder).into(),
            decoder: (&self.decoder).into(),
        }
    }

    pub fn from_file(f: &VaeFile) -> Result<Self> {
        if f.version != VAE_FORMAT_VERSION {
            return Err(Error::Version {
                expected: VAE_FORMAT_VERSION.into(),
                found: f.version.clone(),
            });
        }
        let m = Self::from_parts(Mlp::try_from(&f.encoder)?, Mlp::try_from(&f.decoder)?, f.beta, f.alpha)?;
        ensure_len("latent dim", f.latent_dim, m.latent_dim)?;
        Ok(m)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndmath::Rng;

    #[test]
    fn json_round_trip_is_exact() {
        let m = VaeModel::init(7, 2, &[5], &[6], 0.01, 3.0, &mut Rng::new(2)).unwrap();
        let back = VaeModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn wrong_version_and_corruption() {
        let m = VaeModel::init(4, 1, &[3], &[3], 0.01, 3.0, &mut Rng::new(2)).unwrap();
        let mut f = m.to_file();
        f.version = "finq-vae-0".into();
        assert!(matches!(VaeModel::from_file(&f), Err(Error::Version { .. })));
        let mut f = m.to_file();
        f.decoder.weights[0].pop();
        assert!(VaeModel::from_file(&f).is_err());
        let text = m.to_json().unwrap();
        assert!(VaeModel::from_json(&text[..text.len() / 2]).is_err());
    }
}
