//! Pipeline configuration: the JSON wire format for assembling
//! frame construction, message passing layers and the output stage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::reps::{parse_rep_spec, RepSpec};

/// How the per-node local frames are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    /// Two vectors predicted by the frame net, Gram-Schmidt completed.
    Learned,
    /// Eigenvectors of the local covariance with sign fixing.
    Pca,
    /// Per-node independent Haar samples.
    Random,
    /// One shared random O(3) element for all nodes (the
    /// data-augmentation baseline resamples it per training step).
    Constant,
    Identity,
}

/// Neighbor-feature treatment during message passing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MessageMode {
    /// Neighbor features used as-is (their own local coordinates).
    Scalar,
    /// Neighbor features re-expressed in the receiver frame.
    Tensorial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[derive(Default)]
pub enum Aggregation {
    #[default]
    Max,
    Sum,
    Mean,
}


#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    /// Same-level layer with self features and a ψ update.
    Message,
    /// Subsampling layer, max-style aggregation, no self features.
    Encoder,
    /// Upsampling layer: 3-NN inverse-distance interpolation plus skip.
    Decoder,
    /// Global pooling to the node closest to the center of mass.
    Pool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerConfig {
    #[serde(rename = "type")]
    pub kind: LayerKind,
    /// Output representation of this layer.
    pub rep: String,
    #[serde(default)]
    pub hidden: Vec<usize>,
    /// Neighborhood radius (message/encoder) or radial-embedding scale (pool).
    #[serde(default)]
    pub radius: Option<f64>,
    /// Subsample fraction for encoder layers.
    #[serde(default)]
    pub fraction: Option<f64>,
    #[serde(default)]
    pub refine: bool,
    #[serde(default = "default_mode")]
    pub mode: MessageMode,
    #[serde(default)]
    pub aggregation: Aggregation,
}

fn default_mode() -> MessageMode {
    MessageMode::Tensorial
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameConfig {
    pub kind: FrameKind,
    /// Radius of the graph used for frame prediction and the local
    /// center of mass.
    pub radius: f64,
    /// Hidden widths of the frame net (learned frames only).
    #[serde(default = "default_frame_hidden")]
    pub hidden: Vec<usize>,
    /// Envelope exponent p.
    #[serde(default = "default_envelope_p")]
    pub envelope_p: u32,
}

fn default_frame_hidden() -> Vec<usize> {
    vec![32, 32]
}

fn default_envelope_p() -> u32 {
    5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Input representation; absent means no input node features.
    #[serde(default)]
    pub input_rep: Option<String>,
    pub output_rep: String,
    /// Number of Gaussians in the radial embedding.
    #[serde(default = "default_radial_k")]
    pub radial_k: usize,
    pub frames: FrameConfig,
    #[serde(default)]
    pub layers: Vec<LayerConfig>,
    /// Hidden widths of the final output MLP; empty plus matching widths
    /// means no output MLP at all.
    #[serde(default)]
    pub output_hidden: Vec<usize>,
    /// Normalize output rows to unit length (vector regression heads).
    #[serde(default)]
    pub normalize_output: bool,
    /// Dropout rate on output-MLP hidden units during training.
    #[serde(default)]
    pub dropout: f64,
    /// Batch standardization inside the layer MLPs.
    #[serde(default)]
    pub norm: bool,
    /// Hidden widths of refinement MLPs.
    #[serde(default = "default_refine_hidden")]
    pub refine_hidden: Vec<usize>,
    /// Pool anchor: node closest to the center of mass by default; set to
    /// pick the farthest instead.
    #[serde(default)]
    pub pool_anchor_farthest: bool,
}

fn default_dim() -> usize {
    3
}

fn default_radial_k() -> usize {
    8
}

fn default_refine_hidden() -> Vec<usize> {
    vec![64, 32]
}

impl PipelineConfig {
    pub fn input_spec(&self) -> Result<Option<RepSpec>> {
        self.input_rep
            .as_deref()
            .map(|s| parse_rep_spec(s, self.dim))
            .transpose()
    }

    pub fn output_spec(&self) -> Result<RepSpec> {
        parse_rep_spec(&self.output_rep, self.dim)
    }

    /// Structural validation with layer indices in error messages.
    pub fn validate(&self) -> Result<()> {
        if self.dim != 3 {
            return Err(Error::Config {
                layer: None,
                msg: format!("pipeline dimension {} unsupported (d = 3)", self.dim),
            });
        }
        if self.frames.radius <= 0.0 {
            return Err(Error::Config {
                layer: None,
                msg: "frame radius must be positive".into(),
            });
        }
        if self.radial_k < 2 {
            return Err(Error::Config {
                layer: None,
                msg: "radial_k must be at least 2".into(),
            });
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config {
                layer: None,
                msg: format!("dropout {} outside [0,1)", self.dropout),
            });
        }
        let mut pending_subsamples = 0usize;
        for (idx, layer) in self.layers.iter().enumerate() {
            let cfg_err = |msg: String| Error::Config { layer: Some(idx), msg };
            parse_rep_spec(&layer.rep, self.dim)?;
            match layer.kind {
                LayerKind::Message | LayerKind::Encoder => {
                    let r = layer
                        .radius
                        .ok_or_else(|| cfg_err("missing neighborhood radius".into()))?;
                    if r <= 0.0 {
                        return Err(cfg_err(format!("radius {r} must be positive")));
                    }
                    if layer.kind == LayerKind::Encoder {
                        let f = layer
                            .fraction
                            .ok_or_else(|| cfg_err("missing subsample fraction".into()))?;
                        if !(f > 0.0 && f <= 1.0) {
                            return Err(cfg_err(format!("fraction {f} outside (0, 1]")));
                        }
                        pending_subsamples += 1;
                    }
                }
                LayerKind::Decoder => {
                    if pending_subsamples == 0 {
                        return Err(cfg_err(
                            "decoder has no cached encoder level to upsample to".into(),
                        ));
                    }
                    pending_subsamples -= 1;
                }
                LayerKind::Pool => {
                    if layer.radius.is_none_or(|r| r <= 0.0) {
                        return Err(cfg_err(
                            "pool layer needs a positive radial-embedding scale".into(),
                        ));
                    }
                    if idx + 1 != self.layers.len() {
                        return Err(cfg_err("pool must be the last layer".into()));
                    }
                }
            }
        }
        Ok(())
    }
}
