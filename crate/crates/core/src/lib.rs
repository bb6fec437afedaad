//! Supervised beta-TC variational autoencoder for fetal heart rate
//! segments: synthetic corpus generation, preprocessing, clinical
//! features, a small reverse-mode autodiff engine, the model and its
//! training loop, evaluation metrics and latent-space interpretation.

pub mod error;
pub mod eval;
pub mod features;
pub mod interpret;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod preprocess;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
