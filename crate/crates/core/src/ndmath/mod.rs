//! Dense numeric core: matrices, an MLP with manual backpropagation, Adam,
//! a reproducible RNG and a PCA baseline.

pub mod adam;
pub mod matrix;
pub mod mlp;
pub mod pca;
pub mod rng;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use matrix::{add, all_finite, axpy, dot, norm, sub, Matrix};
pub use mlp::{Activation, Dense, ForwardCache, Mlp, MlpGradients, ParamBlock};
pub use pca::{pca_fit, pca_reconstruct, symmetric_eigen, PcaBasis};
pub use rng::Rng;
