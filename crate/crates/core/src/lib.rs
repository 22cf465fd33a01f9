//! O(d)-equivariant message passing on point clouds via local
//! canonicalization with tensorial messages.
//!
//! The crate is organized around six pieces: `reps` (representation
//! algebra for O(d)), `geometry` (clouds, radius graphs, sampling,
//! embeddings), `frames` (equivariant local frame construction and
//! refinement), `netcore` (a minimal reverse-mode tape, MLPs, losses and
//! AdamW), `mp` (the equivariant layers and the encoder/decoder
//! pipeline), and `tapemath` (small-matrix algebra over tape values).
//!
//! All numerics are generic over [`Scalar`] (f32 or f64); the `*64` type
//! aliases below pin the default double-precision instantiations.

pub mod error;
pub mod frames;
pub mod geometry;
pub mod linalg;
pub mod mp;
pub mod netcore;
pub mod reps;
pub mod scalar;
pub mod tapemath;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use reps::{
    apply_rep, change_of_basis, parse_rep_spec, random_orthogonal, rep_width, FeatureBlock,
    Group, Orthogonal, Parity, RepSpec, RepTerm,
};

pub use geometry::{
    farthest_point_sampling, gaussian_radial_embedding, local_center_of_mass, radius_graph,
    unit_edge_direction, Graph, PointCloud,
};

pub use frames::{
    build_constant_frames, build_learned_frames, build_pca_frames, build_random_frames,
    complete_frame, envelope, frame_stability_metrics, gram_schmidt_pair, FrameSet, Provenance,
};

pub use netcore::{
    clip_gradient_norm, cosine_lr_schedule, AdamW, Mlp, ParamStore, Phase, Tape, Value,
};

pub use mp::{FrameKind, LayerConfig, MessageMode, Pipeline, PipelineConfig};

/// Double-precision aliases (the default instantiation).
pub type Orthogonal64 = reps::Orthogonal<f64>;
pub type FeatureBlock64 = reps::FeatureBlock<f64>;
pub type PointCloud64 = geometry::PointCloud<f64>;
pub type Graph64 = geometry::Graph<f64>;
pub type FrameSet64 = frames::FrameSet<f64>;
pub type Tape64 = netcore::Tape<f64>;
pub type ParamStore64 = netcore::ParamStore<f64>;
pub type Mlp64 = netcore::Mlp<f64>;
pub type Pipeline64 = mp::Pipeline<f64>;
