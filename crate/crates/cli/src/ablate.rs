//! Ablation over message mode × frame provenance, and the data-efficiency
//! sweep comparing built-in equivariance against data augmentation.

use serde::Serialize;

use tenframe::mp::{FrameKind, MessageMode};
use tenframe::Result;

use crate::datasets::Dataset;
use crate::taskspec::TaskSpec;
use crate::train::{augmented_variant, train};

#[derive(Debug, Clone, Serialize)]
pub struct AblationCell {
    pub frames: String,
    pub mode: String,
    pub final_metric: f64,
    pub final_loss: f64,
    pub param_count: usize,
    pub frame_param_count: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AblationReport {
    pub seed: u64,
    pub cells: Vec<AblationCell>,
}

fn cell_spec(base: &TaskSpec, frames: FrameKind, mode: MessageMode) -> TaskSpec {
    let mut spec = base.clone();
    spec.pipeline.frames.kind = frames;
    for layer in spec.pipeline.layers.iter_mut() {
        layer.mode = mode;
    }
    spec
}

/// Trains the 2×2 grid {learned, random} × {tensorial, scalar} with one
/// shared seed and identical hyperparameters.
pub fn ablation_matrix(base: &TaskSpec, data: &Dataset, quiet: bool) -> Result<AblationReport> {
    let mut cells = Vec::new();
    for (frames, fname) in [(FrameKind::Learned, "learned"), (FrameKind::Random, "random")] {
        for (mode, mname) in [
            (MessageMode::Tensorial, "tensorial"),
            (MessageMode::Scalar, "scalar"),
        ] {
            let spec = cell_spec(base, frames, mode);
            if !quiet {
                eprintln!("ablation cell: {fname} frames, {mname} messages");
            }
            let outcome = train(&spec, data, quiet)?;
            cells.push(AblationCell {
                frames: fname.to_string(),
                mode: mname.to_string(),
                final_metric: outcome.report.final_metric,
                final_loss: outcome.report.final_loss,
                param_count: outcome.report.param_count,
                frame_param_count: outcome.report.frame_param_count,
            });
        }
    }
    Ok(AblationReport { seed: base.train.seed, cells })
}

pub fn ablation_csv(report: &AblationReport) -> String {
    let mut out = String::from("frames,mode,final_metric,final_loss,param_count,frame_param_count\n");
    for c in &report.cells {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            c.frames, c.mode, c.final_metric, c.final_loss, c.param_count, c.frame_param_count
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub fraction: f64,
    pub mode: String,
    pub final_error: f64,
}

/// Trains the equivariant model and its augmented twin on nested
/// fractions of the training split; errors are 1 − metric.
pub fn data_efficiency_sweep(
    base: &TaskSpec,
    data: &Dataset,
    fractions: &[f64],
    quiet: bool,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &fraction in fractions {
        let take = ((fraction * data.train.len() as f64).ceil() as usize)
            .clamp(1, data.train.len());
        let subset = Dataset {
            train: data.train[..take].to_vec(),
            eval: data.eval.clone(),
        };
        for (spec, name) in [
            (base.clone(), "equivariant"),
            (augmented_variant(base), "augmented"),
        ] {
            if !quiet {
                eprintln!("sweep: fraction {fraction}, {name}");
            }
            let outcome = train(&spec, &subset, quiet)?;
            rows.push(SweepRow {
                fraction,
                mode: name.to_string(),
                final_error: 1.0 - outcome.report.final_metric,
            });
        }
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("fraction,mode,final_error\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.fraction, r.mode, r.final_error));
    }
    out
}
