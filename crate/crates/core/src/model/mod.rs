//! The prototype-learning network: per-pathway SNN encoders, a patch
//! projector, learnable query banks that pool each modality by
//! cross-attention, joint self-attention over the pooled prototypes, and a
//! linear head emitting one logit per time bin.

mod checkpoint;
mod config;
mod interpret;
mod layers;
mod network;

pub use checkpoint::{Checkpoint, CheckpointHeader, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{AblationConfig, AplConfig};
pub use interpret::{export_interpretation, patch_name, InterpretationReport, PrototypeAttention};
pub use layers::{
    alpha_dropout, alpha_dropout_affine, cross_attention_prototypes, mixed_self_attention,
    AttentionProj, Linear, SnnEncoder, INIT_STD,
};
pub use network::{init_model, AplModel, ForwardOutput, ForwardVars, Mode, PrototypeBranch};
