//! Task specifications: dataset parameters, pipeline config and training
//! hyperparameters, with desk-scale defaults per task.

use serde::{Deserialize, Serialize};

use tenframe::mp::{
    Aggregation, FrameConfig, FrameKind, LayerConfig, LayerKind, MessageMode, PipelineConfig,
};

use crate::datasets::{DatasetConfig, ShapeFamily, TaskKind};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub steps: usize,
    #[serde(default = "default_warmup")]
    pub warmup: usize,
    #[serde(default = "default_clip")]
    pub clip: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_smoothing")]
    pub label_smoothing: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
}

fn default_warmup() -> usize {
    100
}
fn default_clip() -> f64 {
    0.5
}
fn default_smoothing() -> f64 {
    0.3
}
fn default_seed() -> u64 {
    7
}
fn default_eval_every() -> usize {
    200
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: TaskKind,
    pub dataset: DatasetConfig,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
}

fn hidden_rep() -> String {
    "16x0n+4x0p+4x1n+1x1p+1x2n".to_string()
}

impl TaskSpec {
    pub fn defaults(task: TaskKind) -> TaskSpec {
        match task {
            TaskKind::NormalRegression => normal_regression_defaults(),
            TaskKind::DirectionalRelay => relay_defaults(),
            TaskKind::ShapeClassification => classification_defaults(),
        }
    }

    /// Applies the common CLI overrides.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        mode: Option<MessageMode>,
        frames: Option<FrameKind>,
        refine: Option<bool>,
        steps: Option<usize>,
        noise: Option<f64>,
    ) -> TaskSpec {
        if let Some(s) = seed {
            self.train.seed = s;
        }
        if let Some(m) = mode {
            for layer in self.pipeline.layers.iter_mut() {
                layer.mode = m;
            }
        }
        if let Some(f) = frames {
            self.pipeline.frames.kind = f;
        }
        if let Some(r) = refine {
            for layer in self.pipeline.layers.iter_mut() {
                if layer.kind != LayerKind::Decoder && layer.kind != LayerKind::Pool {
                    layer.refine = r;
                }
            }
        }
        if let Some(s) = steps {
            self.train.steps = s;
            self.train.warmup = self.train.warmup.min(s / 10);
        }
        if let Some(n) = noise {
            self.dataset.noise = n;
        }
        self
    }
}

fn normal_regression_defaults() -> TaskSpec {
    let rep = hidden_rep();
    TaskSpec {
        task: TaskKind::NormalRegression,
        dataset: DatasetConfig {
            family: ShapeFamily::Mixed,
            points: 128,
            clouds: 48,
            eval_clouds: 12,
            noise: 0.0,
            prerotate: true,
            relay_radius: 0.25,
            relay_triples: 12,
        },
        pipeline: PipelineConfig {
            dim: 3,
            input_rep: None,
            output_rep: "1x1n".into(),
            radial_k: 8,
            frames: FrameConfig {
                kind: FrameKind::Learned,
                radius: 0.6,
                hidden: vec![32, 32],
                envelope_p: 5,
            },
            layers: vec![
                LayerConfig {
                    kind: LayerKind::Encoder,
                    rep: rep.clone(),
                    hidden: vec![64],
                    radius: Some(0.6),
                    fraction: Some(1.0),
                    refine: true,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
                LayerConfig {
                    kind: LayerKind::Encoder,
                    rep: rep.clone(),
                    hidden: vec![64],
                    radius: Some(0.9),
                    fraction: Some(0.25),
                    refine: true,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
                LayerConfig {
                    kind: LayerKind::Decoder,
                    rep,
                    hidden: vec![64],
                    radius: None,
                    fraction: None,
                    refine: false,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
            ],
            output_hidden: vec![32],
            normalize_output: true,
            dropout: 0.0,
            norm: false,
            refine_hidden: vec![64, 32],
            pool_anchor_farthest: false,
        },
        train: TrainConfig {
            lr: 0.01,
            steps: 2000,
            warmup: 100,
            clip: 0.5,
            weight_decay: 5e-4,
            label_smoothing: 0.0,
            seed: 7,
            eval_every: 200,
        },
    }
}

fn relay_defaults() -> TaskSpec {
    let rep = "8x0n+2x0p+3x1n+1x1p".to_string();
    TaskSpec {
        task: TaskKind::DirectionalRelay,
        dataset: DatasetConfig {
            family: ShapeFamily::Mixed,
            points: 0,
            clouds: 48,
            eval_clouds: 12,
            noise: 0.01,
            prerotate: true,
            relay_radius: 0.25,
            relay_triples: 12,
        },
        pipeline: PipelineConfig {
            dim: 3,
            input_rep: Some("2x0n".into()),
            output_rep: "1x1n".into(),
            radial_k: 8,
            frames: FrameConfig {
                kind: FrameKind::Learned,
                radius: 0.25,
                hidden: vec![32, 32],
                envelope_p: 5,
            },
            layers: vec![
                LayerConfig {
                    kind: LayerKind::Message,
                    rep: rep.clone(),
                    hidden: vec![48],
                    radius: Some(0.25),
                    fraction: None,
                    refine: false,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
                LayerConfig {
                    kind: LayerKind::Message,
                    rep,
                    hidden: vec![48],
                    radius: Some(0.25),
                    fraction: None,
                    refine: false,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
            ],
            output_hidden: vec![32],
            normalize_output: true,
            dropout: 0.0,
            norm: false,
            refine_hidden: vec![64, 32],
            pool_anchor_farthest: false,
        },
        train: TrainConfig {
            lr: 0.0025,
            steps: 250,
            warmup: 50,
            clip: 0.5,
            weight_decay: 5e-4,
            label_smoothing: 0.0,
            seed: 7,
            eval_every: 50,
        },
    }
}

fn classification_defaults() -> TaskSpec {
    let rep = hidden_rep();
    TaskSpec {
        task: TaskKind::ShapeClassification,
        dataset: DatasetConfig {
            family: ShapeFamily::Mixed,
            points: 96,
            clouds: 48,
            eval_clouds: 12,
            noise: 0.0,
            prerotate: true,
            relay_radius: 0.25,
            relay_triples: 12,
        },
        pipeline: PipelineConfig {
            dim: 3,
            input_rep: None,
            output_rep: "3x0n".into(),
            radial_k: 8,
            frames: FrameConfig {
                kind: FrameKind::Learned,
                radius: 0.65,
                hidden: vec![32, 32],
                envelope_p: 5,
            },
            layers: vec![
                LayerConfig {
                    kind: LayerKind::Encoder,
                    rep: rep.clone(),
                    hidden: vec![64],
                    radius: Some(0.65),
                    fraction: Some(1.0),
                    refine: true,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
                LayerConfig {
                    kind: LayerKind::Encoder,
                    rep: rep.clone(),
                    hidden: vec![64],
                    radius: Some(1.0),
                    fraction: Some(0.33),
                    refine: true,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
                LayerConfig {
                    kind: LayerKind::Pool,
                    rep,
                    hidden: vec![64],
                    radius: Some(2.5),
                    fraction: None,
                    refine: false,
                    mode: MessageMode::Tensorial,
                    aggregation: Aggregation::Max,
                },
            ],
            output_hidden: vec![32],
            normalize_output: false,
            dropout: 0.5,
            norm: false,
            refine_hidden: vec![64, 32],
            pool_anchor_farthest: false,
        },
        train: TrainConfig {
            lr: 0.005,
            steps: 1200,
            warmup: 100,
            clip: 0.5,
            weight_decay: 0.05,
            label_smoothing: 0.3,
            seed: 7,
            eval_every: 150,
        },
    }
}
