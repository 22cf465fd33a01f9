//! Desk-scale training loop: AdamW with linear warmup and cosine decay,
//! gradient clipping, per-step data-augmentation frame resampling, and
//! deterministic metric reporting.

use std::path::Path;
use std::time::Instant;

use serde::Serialize;

use tenframe::mp::{FrameKind, Pipeline};
use tenframe::netcore::checkpoint::save_checkpoint;
use tenframe::netcore::loss::{cosine_similarity, cross_entropy, l1};
use tenframe::netcore::{clip_gradient_norm, cosine_lr_schedule, AdamW, Phase, Tape};
use tenframe::{Error, Result};

use crate::datasets::{Dataset, Sample, Target, TaskKind};
use crate::taskspec::TaskSpec;

#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub metric: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub config: serde_json::Value,
    pub seed: u64,
    pub param_count: usize,
    pub frame_param_count: usize,
    pub metrics: Vec<MetricRow>,
    pub final_loss: f64,
    pub final_metric: f64,
    pub degenerate_gram_schmidt: usize,
    pub degenerate_refinement: usize,
    pub empty_neighborhoods: usize,
    /// Informational only; everything else is reproducible from
    /// (seed, config).
    pub wall_clock_s: f64,
}

pub struct TrainOutcome {
    pub pipeline: Pipeline<f64>,
    pub report: RunReport,
}

/// Frame seed for one training step. Constant frames are resampled per
/// step, which is exactly global input augmentation.
fn step_frame_seed(seed: u64, step: usize) -> u64 {
    seed ^ (step as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0x5151
}

fn target_rows(sample: &Sample, node_ids: &[usize]) -> (Vec<Vec<f64>>, Option<Vec<f64>>) {
    match &sample.target {
        Target::Vectors { values, mask } => {
            let rows = node_ids.iter().map(|&i| values[i].to_vec()).collect();
            let masks = node_ids.iter().map(|&i| mask[i]).collect();
            (rows, Some(masks))
        }
        Target::Class(_) => (Vec::new(), None),
    }
}

/// Mean evaluation metric over a split: masked cosine similarity for
/// vector targets, accuracy for labels.
pub fn evaluate(
    pipeline: &mut Pipeline<f64>,
    samples: &[Sample],
    eval_seed: u64,
) -> Result<f64> {
    if samples.is_empty() {
        return Ok(f64::NAN);
    }
    let mut total = 0.0;
    for (i, sample) in samples.iter().enumerate() {
        let mut tape = Tape::new();
        let bound = pipeline.store.bind(&mut tape);
        let res = pipeline.forward(
            &mut tape,
            &bound,
            &sample.cloud,
            Phase::Eval,
            eval_seed ^ (i as u64),
            false,
        )?;
        match &sample.target {
            Target::Vectors { .. } => {
                let (targets, mask) = target_rows(sample, &res.node_ids);
                let metric =
                    cosine_similarity(&mut tape, &res.output, &targets, mask.as_deref());
                total += tape.val(metric);
            }
            Target::Class(label) => {
                let logits: Vec<f64> =
                    res.output[0].iter().map(|&v| tape.val(v)).collect();
                let pred = logits
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                    .map(|(k, _)| k)
                    .unwrap_or(0);
                total += if pred == *label { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(total / samples.len() as f64)
}

/// Runs the full training loop. Aborts with [`Error::Divergence`] when
/// the loss stops being finite.
pub fn train(spec: &TaskSpec, data: &Dataset, quiet: bool) -> Result<TrainOutcome> {
    let started = Instant::now();
    let seed = spec.train.seed;
    let mut pipeline = Pipeline::<f64>::build(spec.pipeline.clone(), seed)?;
    let mut opt = AdamW::new(pipeline.store.len(), spec.train.weight_decay);
    let mut tape = Tape::new();
    let mut metrics: Vec<MetricRow> = Vec::new();
    let mut events = (0usize, 0usize, 0usize);

    let order: Vec<usize> = {
        // fixed shuffled visit order, reproducible under seed
        use rand::seq::SliceRandom;
        let mut rng = tenframe::reps::seeded_rng(seed ^ 0x0bbe);
        let mut idx: Vec<usize> = (0..data.train.len()).collect();
        idx.shuffle(&mut rng);
        idx
    };

    let eval_metric = |p: &mut Pipeline<f64>| evaluate(p, &data.eval, seed ^ 0xeeee);

    let initial = eval_metric(&mut pipeline)?;
    metrics.push(MetricRow { step: 0, lr: 0.0, loss: f64::NAN, metric: initial });

    let mut last_loss = f64::NAN;
    for step in 0..spec.train.steps {
        let lr = cosine_lr_schedule(step, spec.train.steps, spec.train.warmup, spec.train.lr);
        let sample = &data.train[order[step % order.len().max(1)]];
        tape.reset();
        let bound = pipeline.store.bind(&mut tape);
        let res = pipeline.forward(
            &mut tape,
            &bound,
            &sample.cloud,
            Phase::Train,
            step_frame_seed(seed, step),
            true,
        )?;
        if let Some(trace) = &res.trace {
            events.0 += trace.events.degenerate_gram_schmidt;
            events.1 += trace.events.degenerate_refinement;
            events.2 += trace.events.empty_neighborhoods;
        }
        let loss_node = match &sample.target {
            Target::Vectors { .. } => {
                let (targets, mask) = target_rows(sample, &res.node_ids);
                l1(&mut tape, &res.output, &targets, mask.as_deref())
            }
            Target::Class(label) => cross_entropy(
                &mut tape,
                &res.output[0],
                *label,
                spec.train.label_smoothing,
            ),
        };
        let loss = tape.val(loss_node);
        if !loss.is_finite() {
            return Err(Error::Divergence { step });
        }
        last_loss = loss;
        tape.backward(loss_node);
        let mut grads = pipeline.store.gradients(&tape, &bound);
        clip_gradient_norm(&mut grads, spec.train.clip);
        opt.step(pipeline.store.data_mut(), &grads, lr);

        let done = step + 1 == spec.train.steps;
        if done || (spec.train.eval_every > 0 && (step + 1) % spec.train.eval_every == 0) {
            let metric = eval_metric(&mut pipeline)?;
            if !quiet {
                eprintln!("step {:>5}  lr {lr:.5}  loss {loss:.5}  metric {metric:.4}", step + 1);
            }
            metrics.push(MetricRow { step: step + 1, lr, loss, metric });
        }
    }

    let final_metric = metrics.last().map(|m| m.metric).unwrap_or(f64::NAN);
    let report = RunReport {
        config: serde_json::to_value(spec).expect("spec serializes"),
        seed,
        param_count: pipeline.param_count(),
        frame_param_count: pipeline.frame_param_count(),
        metrics,
        final_loss: last_loss,
        final_metric,
        degenerate_gram_schmidt: events.0,
        degenerate_refinement: events.1,
        empty_neighborhoods: events.2,
        wall_clock_s: started.elapsed().as_secs_f64(),
    };
    Ok(TrainOutcome { pipeline, report })
}

/// Writes report.json, metrics.csv and the checkpoint pair into `dir`.
pub fn write_outputs(dir: &Path, outcome: &mut TrainOutcome) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let report_path = dir.join("report.json");
    let tmp = dir.join("report.json.tmp");
    std::fs::write(
        &tmp,
        serde_json::to_string_pretty(&outcome.report).expect("report"),
    )?;
    std::fs::rename(tmp, report_path)?;

    let mut csv = String::from("step,lr,loss,metric\n");
    for row in &outcome.report.metrics {
        csv.push_str(&format!("{},{},{},{}\n", row.step, row.lr, row.loss, row.metric));
    }
    let tmp = dir.join("metrics.csv.tmp");
    std::fs::write(&tmp, csv)?;
    std::fs::rename(tmp, dir.join("metrics.csv"))?;

    let extra = serde_json::json!({
        "config": outcome.report.config,
        "norm_states": outcome.pipeline.norm_states_json(),
    });
    save_checkpoint(
        &dir.join("checkpoint.bin"),
        &dir.join("checkpoint.json"),
        &outcome.pipeline.store,
        outcome.report.seed,
        outcome
            .report
            .metrics
            .last()
            .map(|m| m.step)
            .unwrap_or(0),
        extra,
    )?;
    Ok(())
}

/// Rebuilds a pipeline from a checkpoint directory.
pub fn load_pipeline(dir: &Path) -> Result<(Pipeline<f64>, TaskSpec)> {
    let ck = tenframe::netcore::checkpoint::load_checkpoint(
        &dir.join("checkpoint.bin"),
        &dir.join("checkpoint.json"),
    )?;
    let spec: TaskSpec =
        serde_json::from_value(ck.manifest["extra"]["config"].clone()).map_err(|e| {
            Error::Format {
                path: dir.join("checkpoint.json").display().to_string(),
                msg: format!("bad task config: {e}"),
            }
        })?;
    let mut pipeline = Pipeline::<f64>::build(
        spec.pipeline.clone(),
        ck.manifest["seed"].as_u64().unwrap_or(0),
    )?;
    if pipeline.store.len() != ck.params.len() {
        return Err(Error::Format {
            path: dir.join("checkpoint.bin").display().to_string(),
            msg: format!(
                "checkpoint has {} params, pipeline needs {}",
                ck.params.len(),
                pipeline.store.len()
            ),
        });
    }
    pipeline.store.data_mut().copy_from_slice(&ck.params);
    pipeline.restore_norm_states_json(&ck.manifest["extra"]["norm_states"]);
    Ok((pipeline, spec))
}

/// Data-augmentation counterpart of a task spec: scalar messages on
/// per-step constant random frames, no learned frame net.
pub fn augmented_variant(spec: &TaskSpec) -> TaskSpec {
    let mut out = spec.clone();
    out.pipeline.frames.kind = FrameKind::Constant;
    for layer in out.pipeline.layers.iter_mut() {
        layer.mode = tenframe::mp::MessageMode::Scalar;
        layer.refine = false;
    }
    out
}

/// Task kind of a spec (handy for reports).
pub fn task_kind(spec: &TaskSpec) -> TaskKind {
    spec.task
}
