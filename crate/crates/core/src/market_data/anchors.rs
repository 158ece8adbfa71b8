use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tenor::TenorGrid;
use crate::error::{Error, Result};

/// Default anchor sets, coarse to fine. Each set includes the previous one.
pub const DEFAULT_ANCHORS: [&[&str]; 3] = [
    &["2Y", "5Y", "10Y", "30Y"],
    &["3Y", "7Y", "20Y"],
    &["1Y", "4Y", "15Y", "25Y"],
];

/// Per-layer anchor index sets `𝒜⁰ … 𝒜ⁿ⁻¹` into a tenor grid.
///
/// The base VAE and the first residual VAE both use `𝒜⁰`; residual VAE `j`
/// uses `𝒜ʲ` for `j ≥ 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorLayout {
    sets: Vec<Vec<usize>>,
}

/// On-disk form: `{"layers": [["2Y","5Y","10Y","30Y"], ...]}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnchorLayoutFile {
    pub layers: Vec<Vec<String>>,
}

impl AnchorLayout {
    pub fn new(sets: Vec<Vec<usize>>, grid_len: usize) -> Result<Self> {
        if sets.is_empty() {
            return Err(Error::InvalidConfig("anchor layout has no layers".into()));
        }
        let mut out = Vec::with_capacity(sets.len());
        for (j, mut s) in sets.into_iter().enumerate() {
            s.sort_unstable();
            s.dedup();
            if s.is_empty() {
                return Err(Error::InvalidConfig(format!("anchor set {j} is empty")));
            }
            if let Some(&bad) = s.iter().find(|&&i| i >= grid_len) {
                return Err(Error::OutOfRange(format!(
                    "anchor index {bad} in set {j} outside grid of {grid_len} tenors"
                )));
            }
            out.push(s);
        }
        Ok(Self { sets: out })
    }

    pub fn from_labels<S: AsRef<str>>(grid: &TenorGrid, layers: &[Vec<S>]) -> Result<Self> {
        let sets = layers
            .iter()
            .map(|l| grid.indices_of(l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(sets, grid.len())
    }

    /// Number of anchor sets (`n`); the cascade has `n + 1` VAEs.
    pub fn num_sets(&self) -> usize {
        self.sets.len()
    }

    pub fn set(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    pub fn sets(&self) -> &[Vec<usize>] {
        &self.sets
    }

    /// Anchors used by cascade layer `k` (0 = base).
    pub fn for_layer(&self, k: usize) -> &[usize] {
        &self.sets[k.saturating_sub(1)]
    }

    /// Index of the coarsest anchor set containing tenor `index`.
    pub fn coarsest_set_of(&self, index: usize) -> Option<usize> {
        self.sets.iter().position(|s| s.binary_search(&index).is_ok())
    }

    pub fn is_cumulative(&self) -> bool {
        self.sets
            .windows(2)
            .all(|w| w[0].iter().all(|i| w[1].binary_search(i).is_ok()))
    }

    pub fn to_file(&self, grid: &TenorGrid) -> AnchorLayoutFile {
        AnchorLayoutFile {
            layers: self
                .sets
                .iter()
                .map(|s| s.iter().map(|&i| grid.labels()[i].clone()).collect())
                .collect(),
        }
    }

    pub fn load(path: impl AsRef<Path>, grid: &TenorGrid) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: AnchorLayoutFile = serde_json::from_str(&text)?;
        Self::from_labels(grid, &file.layers)
    }

    pub fn save(&self, path: impl AsRef<Path>, grid: &TenorGrid) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.to_file(grid))?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Cumulative coarse-to-fine default:
/// `𝒜⁰ = {2Y,5Y,10Y,30Y}`, `𝒜¹ = 𝒜⁰ ∪ {3Y,7Y,20Y}`,
/// `𝒜² = 𝒜¹ ∪ {1Y,4Y,15Y,25Y}`.
pub fn default_anchor_layout(grid: &TenorGrid) -> Result<AnchorLayout> {
    let required: Vec<&str> = DEFAULT_ANCHORS.iter().flat_map(|s| s.iter().copied()).collect();
    grid.indices_of(&required)?;
    let mut layers: Vec<Vec<&str>> = Vec::new();
    let mut acc: Vec<&str> = Vec::new();
    for set in DEFAULT_ANCHORS {
        acc.extend_from_slice(set);
        layers.push(acc.clone());
    }
    AnchorLayout::from_labels(grid, &layers)
}
