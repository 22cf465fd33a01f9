//! Equivariance and frame-stability audits over trained checkpoints.

use serde::Serialize;

use tenframe::frames::frame_stability_metrics;
use tenframe::mp::Pipeline;
use tenframe::reps::{apply_rep, random_orthogonal, seeded_rng, FeatureBlock, Group};
use tenframe::{Orthogonal64, PointCloud64, Result};

use crate::datasets::Sample;

#[derive(Debug, Clone, Serialize)]
pub struct EquivarianceRow {
    pub sample: usize,
    pub transform: usize,
    pub det: f64,
    /// max |run(R̂x+t) − ρ_out(R̂) run(x)|∞ over nodes and channels.
    pub max_deviation: f64,
    /// max |run(x+t) − run(x)|∞ for a pure translation.
    pub translation_deviation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivarianceAudit {
    pub rows: Vec<EquivarianceRow>,
    pub worst: f64,
    pub worst_translation: f64,
}

fn transform_sample_cloud(
    cloud: &PointCloud64,
    r: &Orthogonal64,
    t: &[f64; 3],
) -> Result<PointCloud64> {
    let moved: Vec<f64> = (0..cloud.len())
        .flat_map(|i| {
            let y = r.apply_vec(cloud.position(i));
            [y[0] + t[0], y[1] + t[1], y[2] + t[2]]
        })
        .collect();
    let mut out = PointCloud64::new(moved, 3)?;
    for (name, block) in cloud.features() {
        out.insert_features(name, apply_rep(block.spec(), r, block)?)?;
    }
    Ok(out)
}

/// For each sample and sampled R̂ ∈ O(3) (half of them reflections),
/// compares the transformed run against the transformed output.
pub fn audit_equivariance(
    pipeline: &mut Pipeline<f64>,
    samples: &[Sample],
    n_transforms: usize,
    seed: u64,
) -> Result<EquivarianceAudit> {
    let mut rng = seeded_rng(seed);
    let out_rep = pipeline.output_rep().clone();
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    let mut worst_translation: f64 = 0.0;
    for (si, sample) in samples.iter().enumerate() {
        if n_transforms == 0 {
            break;
        }
        let (ids, base) = pipeline.run(&sample.cloud, seed)?;
        for ti in 0..n_transforms {
            let r: Orthogonal64 = random_orthogonal(&mut rng, Group::Orthogonal, 3);
            let t = [
                rand::Rng::gen::<f64>(&mut rng) - 0.5,
                rand::Rng::gen::<f64>(&mut rng) - 0.5,
                rand::Rng::gen::<f64>(&mut rng) - 0.5,
            ];
            let moved = transform_sample_cloud(&sample.cloud, &r, &t)?;
            let (ids2, transformed) = pipeline.run(&moved, seed)?;
            assert_eq!(ids, ids2, "node selection changed under transform");
            let mut dev: f64 = 0.0;
            for (row, row2) in base.iter().zip(&transformed) {
                let block = FeatureBlock::new(row.clone(), 1, out_rep.clone())?;
                let expect = apply_rep(&out_rep, &r, &block)?;
                for (a, b) in expect.values().iter().zip(row2) {
                    dev = dev.max((a - b).abs());
                }
            }
            let shift = [0.35, -0.8, 0.125];
            let shifted = transform_sample_cloud(
                &sample.cloud,
                &Orthogonal64::identity(3),
                &shift,
            )?;
            let (_, y_shift) = pipeline.run(&shifted, seed)?;
            let mut tdev: f64 = 0.0;
            for (row, row2) in base.iter().zip(&y_shift) {
                for (a, b) in row.iter().zip(row2) {
                    tdev = tdev.max((a - b).abs());
                }
            }
            worst = worst.max(dev);
            worst_translation = worst_translation.max(tdev);
            rows.push(EquivarianceRow {
                sample: si,
                transform: ti,
                det: r.det(),
                max_deviation: dev,
                translation_deviation: tdev,
            });
        }
    }
    Ok(EquivarianceAudit { rows, worst, worst_translation })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityRow {
    pub sigma: f64,
    pub mean_frobenius: f64,
    pub axis_cosines: [f64; 3],
}

/// Rebuilds frames on jittered copies of each cloud and reports the mean
/// Frobenius distance and per-axis cosines against the noiseless frames.
pub fn audit_frame_stability(
    pipeline: &mut Pipeline<f64>,
    samples: &[Sample],
    sigmas: &[f64],
    seed: u64,
) -> Result<Vec<StabilityRow>> {
    let mut out = Vec::new();
    for (k, &sigma) in sigmas.iter().enumerate() {
        let mut frob = 0.0;
        let mut cos = [0.0f64; 3];
        let mut count = 0usize;
        for (si, sample) in samples.iter().enumerate() {
            let clean = pipeline.frames_for(&sample.cloud, seed)?;
            let mut rng = seeded_rng(seed ^ ((k as u64) << 20) ^ (si as u64));
            let mut positions = sample.cloud.positions().to_vec();
            for x in positions.iter_mut() {
                *x += sigma * gaussian(&mut rng);
            }
            let mut jittered = PointCloud64::new(positions, 3)?;
            for (name, block) in sample.cloud.features() {
                jittered.insert_features(name, block.clone())?;
            }
            let noisy = pipeline.frames_for(&jittered, seed)?;
            let (f, c) = frame_stability_metrics(&clean, &noisy)?;
            frob += f;
            for a in 0..3 {
                cos[a] += c[a];
            }
            count += 1;
        }
        let n = count.max(1) as f64;
        out.push(StabilityRow {
            sigma,
            mean_frobenius: frob / n,
            axis_cosines: [cos[0] / n, cos[1] / n, cos[2] / n],
        });
    }
    Ok(out)
}

fn gaussian(rng: &mut rand_chacha::ChaCha8Rng) -> f64 {
    use rand::Rng;
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}
