//! Minimal reverse-mode differentiable compute core: the scalar tape,
//! dense SiLU layers with optional feature normalization, losses, AdamW,
//! and finite-difference gradient checking.

pub mod checkpoint;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod tape;

pub use mlp::{batch_standardize, Bound, Mlp, ParamStore, Phase, RunningStats, SegId};
pub use optim::{clip_gradient_norm, cosine_lr_schedule, AdamW};
pub use tape::{Tape, Value};
