use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::FinqModel;
use crate::error::{Error, Result};
use crate::market_data::{AnchorLayout, AnchorLayoutFile, Normalizer, TenorGrid};
use crate::quantizer::QuantizeConfig;
use crate::vae::{VaeFile, VaeModel};

pub const PIPELINE_FORMAT_VERSION: &str = "finq-pipeline-1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinqModelFile {
    pub version: String,
    pub grid: TenorGrid,
    pub layout: AnchorLayoutFile,
    pub normalizers: Vec<Normalizer>,
    pub layers: Vec<VaeFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize: Option<QuantizeConfig>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: String,
}

impl FinqModel {
    pub fn to_file(&self) -> FinqModelFile {
        FinqModelFile {
            version: PIPELINE_FORMAT_VERSION.into(),
            grid: (*self.grid).clone(),
            layout: self.layout.to_file(&self.grid),
            normalizers: self.normalizers.clone(),
            layers: self.layers.iter().map(VaeModel::to_file).collect(),
            quantize: Some(self.quantize.clone()),
        }
    }

    pub fn from_file(f: FinqModelFile) -> Result<Self> {
        if f.version != PIPELINE_FORMAT_VERSION {
            return Err(Error::Version {
                expected: PIPELINE_FORMAT_VERSION.into(),
                found: f.version,
            });
        }
        let layout = AnchorLayout::from_labels(&f.grid, &f.layout.layers)?;
        let layers = f.layers.iter().map(VaeModel::from_file).collect::<Result<Vec<_>>>()?;
        Self::from_parts(
            Arc::new(f.grid),
            layout,
            f.normalizers,
            layers,
            f.quantize.unwrap_or_default(),
        )
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_file())?)
    }

    /// Parses a bundle; a wrong version is reported before any other problem.
    pub fn from_json(text: &str) -> Result<Self> {
        if let Ok(probe) = serde_json::from_str::<VersionProbe>(text) {
            if probe.version != PIPELINE_FORMAT_VERSION {
                return Err(Error::Version {
                    expected: PIPELINE_FORMAT_VERSION.into(),
                    found: probe.version,
                });
            }
        }
        Self::from_file(serde_json::from_str(text)?)
    }
}

pub fn save_model(model: &FinqModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model.to_json()?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FinqModel> {
    FinqModel::from_json(&std::fs::read_to_string(path)?)
}
