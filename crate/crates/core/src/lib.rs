//! Multiresolution decomposition of market curves.
//!
//! A market object (one curve on a tenor grid) is split into a base shape and
//! a stack of residual layers. Every layer is a small β-VAE whose latent code
//! is *quantized*: replaced by the latent point whose decoding best matches
//! the layer's anchor tenors. The final residual is kept exactly, so the parts
//! always sum back to the input.
//!
//! Modules, bottom-up:
//!
//! - [`ndmath`]: matrices, MLP, Adam, RNG, PCA.
//! - [`market_data`]: tenor grids, curves, anchor layouts, CSV, synthetic
//!   Nelson–Siegel histories.
//! - [`vae`]: one layer's VAE, its anchor-augmented loss and training loop.
//! - [`quantizer`]: latent quantization against anchors.
//! - [`pipeline`]: the trained cascade, decomposition and model bundles.
//! - [`applications`]: scenarios, sampling, nowcasting, residual signals,
//!   relative value, outlier detection, latent export, PCA comparison.

// Negated float comparisons are deliberate: they reject NaN in one test.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod applications;
pub mod error;
pub mod market_data;
pub mod ndmath;
pub mod pipeline;
pub mod quantizer;
pub mod vae;

pub use error::{Error, Result};
