//! Equivariant message passing between local frames: canonicalization,
//! scalar and tensorial layers, the encoder/decoder stack and global
//! pooling, assembled into a configurable pipeline.

pub mod canon;
pub mod config;
pub mod layers;
pub mod pipeline;

pub use canon::{canonicalize_in, decanonicalize_out};
pub use config::{
    Aggregation, FrameConfig, FrameKind, LayerConfig, LayerKind, MessageMode, PipelineConfig,
};
pub use layers::{LayerCtx, LevelState};
pub use pipeline::{ForwardResult, LevelTrace, Pipeline, Trace};
