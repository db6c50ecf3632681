//! Desk-scale transformer encoder: masked-language-model pre-training,
//! mean-pooled sentence embeddings and triplet fine-tuning.

pub mod checkpoint;
pub mod config;
pub mod masking;
pub mod model;
pub mod optim;
pub mod params;
pub mod pretrain;
pub mod sentence;

pub use config::EncoderConfig;
pub use masking::{apply_masking, MaskedBatch, MaskedSeq, MaskingMode, MaskingPolicy, IGNORE_LABEL};
pub use model::{init_encoder, EncoderModel};
pub use params::Params;
pub use pretrain::{forward_mlm, mlm_loss_and_grad, pretrain, PretrainConfig, PretrainReport};
pub use sentence::{
    cosine_dense, finetune_triplet, triplet_loss, triplet_satisfaction, DenseVector, FinetuneConfig, SentenceEncoder,
    Triplet,
};
