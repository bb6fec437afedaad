//! The supervised beta-TC-VAE: dual-branch transformer encoder over the
//! FHR samples and their spectrum, a transformer decoder, a classification
//! head on the latent code, and the training loop.

mod checkpoint;
mod config;
mod controller;
mod infer;
mod loss;
mod network;
mod params;
mod train;

pub use checkpoint::{ModelCheckpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ModelConfig, Precision, TrainConfig};
pub use controller::{coeff_update, SNAP_TO_ZERO};
pub use infer::{Inference, Model, Session};
pub use loss::{
    focal_bce, focal_var, kl_per_dim, kl_var, masked_mse_var, reparameterize, tc_estimate, tc_var, total_loss,
    LossComponents,
};
pub use network::{
    classify, decode, embed_inputs, encode, reparameterize_var, transformer_block, LatentStats, SegmentInput,
    LOGVAR_LIMIT, SCORE_EPS,
};
pub use params::{check_layout, init_parameters, layout, Bound, Parameters};
pub use train::{
    batch_loss, evaluate_loss, history_csv, train, BalancedSampler, Batch, BatchLoss, EpochRecord, TrainData,
    TrainOutcome, TrainingMeta,
};
