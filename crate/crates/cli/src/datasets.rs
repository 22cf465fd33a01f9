//! Synthetic datasets with analytic ground truth: surface sampling with
//! exact normals, the directional-relay task, shape classification, and
//! the rotated-sender fixture pair.

use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use tenframe::geometry::{write_cloud, PointCloud};
use tenframe::reps::{parse_rep_spec, random_orthogonal, seeded_rng, FeatureBlock, Group};
use tenframe::{Error, Orthogonal64, PointCloud64, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShapeFamily {
    Sphere,
    Torus,
    Superellipsoid,
    /// Alternates through the three families.
    Mixed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub family: ShapeFamily,
    pub points: usize,
    pub clouds: usize,
    #[serde(default)]
    pub eval_clouds: usize,
    /// Gaussian jitter applied to positions only; targets stay clean.
    #[serde(default)]
    pub noise: f64,
    /// Pre-rotate every sample by a recorded random O(3) element.
    #[serde(default = "default_true")]
    pub prerotate: bool,
    /// Neighborhood scale of the relay task.
    #[serde(default = "default_relay_radius")]
    pub relay_radius: f64,
    /// Relay triples per cloud.
    #[serde(default = "default_relay_triples")]
    pub relay_triples: usize,
}

fn default_true() -> bool {
    true
}

fn default_relay_radius() -> f64 {
    0.25
}

fn default_relay_triples() -> usize {
    12
}

/// Regression targets are per-node vectors with a row mask; classification
/// targets are one label per cloud.
#[derive(Debug, Clone)]
pub enum Target {
    Vectors { values: Vec<[f64; 3]>, mask: Vec<f64> },
    Class(usize),
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub cloud: PointCloud64,
    pub target: Target,
    pub prerotation: Option<Orthogonal64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub eval: Vec<Sample>,
}

const TORUS_MAJOR: f64 = 1.0;
const TORUS_MINOR: f64 = 0.3;
const SUPER_EXP: f64 = 4.0;
const SUPER_AXES: [f64; 3] = [1.0, 0.75, 0.5];

fn unit_sphere_point(rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = [
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
            rng.gen::<f64>() * 2.0 - 1.0,
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 0.05 && n <= 1.0 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Samples one surface point with its outward unit normal.
fn surface_point(family: ShapeFamily, rng: &mut ChaCha8Rng) -> ([f64; 3], [f64; 3]) {
    match family {
        ShapeFamily::Sphere => {
            let p = unit_sphere_point(rng);
            (p, p)
        }
        ShapeFamily::Torus => {
            let theta = rng.gen::<f64>() * std::f64::consts::TAU;
            // area-uniform in the tube angle via rejection on R + r cos φ
            let phi = loop {
                let phi = rng.gen::<f64>() * std::f64::consts::TAU;
                let accept = (TORUS_MAJOR + TORUS_MINOR * phi.cos()) / (TORUS_MAJOR + TORUS_MINOR);
                if rng.gen::<f64>() < accept {
                    break phi;
                }
            };
            let ring = TORUS_MAJOR + TORUS_MINOR * phi.cos();
            let p = [ring * theta.cos(), ring * theta.sin(), TORUS_MINOR * phi.sin()];
            let n = [
                phi.cos() * theta.cos(),
                phi.cos() * theta.sin(),
                phi.sin(),
            ];
            (p, n)
        }
        ShapeFamily::Superellipsoid => {
            let u = unit_sphere_point(rng);
            let f: f64 = (0..3)
                .map(|k| (u[k] / SUPER_AXES[k]).abs().powf(SUPER_EXP))
                .sum();
            let t = f.powf(-1.0 / SUPER_EXP);
            let p = [t * u[0], t * u[1], t * u[2]];
            let mut g = [0.0; 3];
            for k in 0..3 {
                let s = p[k] / SUPER_AXES[k];
                g[k] = SUPER_EXP * s.abs().powf(SUPER_EXP - 1.0) * s.signum() / SUPER_AXES[k];
            }
            let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            (p, [g[0] / gn, g[1] / gn, g[2] / gn])
        }
        ShapeFamily::Mixed => unreachable!("mixed resolves per sample"),
    }
}

fn family_of(family: ShapeFamily, index: usize) -> ShapeFamily {
    match family {
        ShapeFamily::Mixed => match index % 2 {
            0 => ShapeFamily::Sphere,
            _ => ShapeFamily::Torus,
        },
        f => f,
    }
}

fn apply_prerotation(
    positions: &mut [f64],
    vectors: &mut [[f64; 3]],
    r: &Orthogonal64,
) {
    let n = positions.len() / 3;
    for i in 0..n {
        let p = r.apply_vec(&positions[i * 3..i * 3 + 3]);
        positions[i * 3..i * 3 + 3].copy_from_slice(&p);
    }
    for v in vectors.iter_mut() {
        let y = r.apply_vec(v);
        v.copy_from_slice(&y);
    }
}

/// One surface cloud with analytic unit normals as regression targets.
fn gen_surface_sample(
    family: ShapeFamily,
    points: usize,
    noise: f64,
    prerotate: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Sample> {
    let mut positions = Vec::with_capacity(points * 3);
    let mut normals = Vec::with_capacity(points);
    for _ in 0..points {
        let (p, n) = surface_point(family, rng);
        positions.extend_from_slice(&p);
        normals.push(n);
    }
    let prerotation = if prerotate {
        let r: Orthogonal64 = random_orthogonal(rng, Group::Orthogonal, 3);
        apply_prerotation(&mut positions, &mut normals, &r);
        Some(r)
    } else {
        None
    };
    // jitter positions only, after the targets are fixed
    if noise > 0.0 {
        for x in positions.iter_mut() {
            *x += noise * gaussian(rng);
        }
    }
    let cloud = PointCloud::new(positions, 3)?;
    let mask = vec![1.0; points];
    Ok(Sample {
        cloud,
        target: Target::Vectors { values: normals, mask },
        prerotation,
    })
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let u1: f64 = rng.gen();
        let u2: f64 = rng.gen();
        if u1 > f64::MIN_POSITIVE {
            return (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        }
    }
}

fn random_unit(rng: &mut ChaCha8Rng) -> [f64; 3] {
    unit_sphere_point(rng)
}

fn perp_unit(u: &[f64; 3], rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let v = random_unit(rng);
        let d = u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
        let w = [v[0] - d * u[0], v[1] - d * u[1], v[2] - d * u[2]];
        let n = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
        if n > 0.2 {
            return [w[0] / n, w[1] / n, w[2] / n];
        }
    }
}

/// Node roles of one relay triple, used when assembling flags and targets.
struct TripleLayout {
    positions: Vec<[f64; 3]>,
    receiver: usize,
    marker: usize,
    target: [f64; 3],
}

/// Geometry of one relay group around `center`: a receiver (with two
/// satellite points shaping its frame), a flagged marker and decoys
/// around the relay. The marker sits two hops from the receiver: inside
/// the relay's radius but outside the receiver's.
fn relay_triple(center: [f64; 3], rc: f64, rng: &mut ChaCha8Rng) -> TripleLayout {
    let u = random_unit(rng); // relay → receiver direction
    let mut positions = Vec::new();
    positions.push(center); // relay, local index 0
    let receiver_pos = [
        center[0] + 0.8 * rc * u[0],
        center[1] + 0.8 * rc * u[1],
        center[2] + 0.8 * rc * u[2],
    ];
    positions.push(receiver_pos); // receiver, local index 1

    // three satellites around the receiver, within rc of it and beyond rc
    // of the relay. Radii, polar angles and azimuths are all jittered:
    // equal distances would make the frame vectors and the local center
    // of mass coplanar, parking the handedness dot on its boundary.
    let w = perp_unit(&u, rng);
    let wx = [
        u[1] * w[2] - u[2] * w[1],
        u[2] * w[0] - u[0] * w[2],
        u[0] * w[1] - u[1] * w[0],
    ];
    let azimuth0 = rng.gen::<f64>() * std::f64::consts::TAU;
    for k in 0..3 {
        let az = azimuth0
            + k as f64 * std::f64::consts::TAU / 3.0
            + (rng.gen::<f64>() - 0.5) * 1.2;
        let polar = 0.45 + 0.4 * rng.gen::<f64>(); // ~26°..49°
        let radius = (0.36 + 0.18 * rng.gen::<f64>()) * rc;
        let mut d = [0.0; 3];
        for c in 0..3 {
            d[c] = radius
                * (polar.cos() * u[c] + polar.sin() * (az.cos() * w[c] + az.sin() * wx[c]));
        }
        positions.push([
            receiver_pos[0] + d[0],
            receiver_pos[1] + d[1],
            receiver_pos[2] + d[2],
        ]);
    }

    // marker: away from the receiver so it stays outside its radius
    let m_dir = loop {
        let v = random_unit(rng);
        if v[0] * u[0] + v[1] * u[1] + v[2] * u[2] <= -0.1 {
            break v;
        }
    };
    let m_len = (0.65 + 0.2 * rng.gen::<f64>()) * rc;
    let marker = positions.len();
    positions.push([
        center[0] + m_len * m_dir[0],
        center[1] + m_len * m_dir[1],
        center[2] + m_len * m_dir[2],
    ]);
    // decoys within a 45° cone of the marker direction: the whole cluster
    // stays mutually inside the cutoff, so no frame-graph node is left
    // with a single collinear neighbor
    for _ in 0..2 {
        let d_dir = loop {
            let v = random_unit(rng);
            let cos_m = v[0] * m_dir[0] + v[1] * m_dir[1] + v[2] * m_dir[2];
            let cos_u = v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
            if cos_m >= 0.707 && cos_u <= -0.05 {
                break v;
            }
        };
        let d_len = (0.65 + 0.2 * rng.gen::<f64>()) * rc;
        positions.push([
            center[0] + d_len * d_dir[0],
            center[1] + d_len * d_dir[1],
            center[2] + d_len * d_dir[2],
        ]);
    }

    TripleLayout {
        positions,
        receiver: 1,
        marker,
        target: m_dir,
    }
}

/// A directional-relay cloud: each receiver must regress the direction of
/// the marker in its relay's cluster, two hops away.
pub fn gen_relay_sample(
    triples: usize,
    rc: f64,
    prerotate: bool,
    noise: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Sample> {
    let spacing = 4.0 * rc;
    let side = (triples as f64).cbrt().ceil() as usize;
    let mut positions: Vec<f64> = Vec::new();
    let mut flags: Vec<f64> = Vec::new(); // (marker, receiver) per node
    let mut targets: Vec<[f64; 3]> = Vec::new();
    let mut mask: Vec<f64> = Vec::new();
    let mut placed = 0;
    'grid: for gx in 0..side {
        for gy in 0..side {
            for gz in 0..side {
                if placed == triples {
                    break 'grid;
                }
                let jitter = |rng: &mut ChaCha8Rng| (rng.gen::<f64>() - 0.5) * 0.4 * rc;
                let center = [
                    gx as f64 * spacing + jitter(rng),
                    gy as f64 * spacing + jitter(rng),
                    gz as f64 * spacing + jitter(rng),
                ];
                let triple = relay_triple(center, rc, rng);
                for (k, p) in triple.positions.iter().enumerate() {
                    positions.extend_from_slice(p);
                    flags.push(if k == triple.marker { 1.0 } else { 0.0 });
                    flags.push(if k == triple.receiver { 1.0 } else { 0.0 });
                    if k == triple.receiver {
                        targets.push(triple.target);
                        mask.push(1.0);
                    } else {
                        targets.push([0.0; 3]);
                        mask.push(0.0);
                    }
                }
                placed += 1;
            }
        }
    }
    let prerotation = if prerotate {
        let r: Orthogonal64 = random_orthogonal(rng, Group::Orthogonal, 3);
        apply_prerotation(&mut positions, &mut targets, &r);
        Some(r)
    } else {
        None
    };
    if noise > 0.0 {
        for x in positions.iter_mut() {
            *x += noise * gaussian(rng);
        }
    }
    let n = positions.len() / 3;
    let mut cloud = PointCloud::new(positions, 3)?;
    let spec = parse_rep_spec("2x0n", 3)?;
    cloud.insert_features("input", FeatureBlock::new(flags, n, spec)?)?;
    Ok(Sample {
        cloud,
        target: Target::Vectors { values: targets, mask },
        prerotation,
    })
}

/// Task-level dataset generation, fully determined by (config, seed).
pub fn gen_dataset(task: TaskKind, cfg: &DatasetConfig, seed: u64) -> Result<Dataset> {
    let mut rng = seeded_rng(seed);
    let total = cfg.clouds + cfg.eval_clouds;
    let mut samples = Vec::with_capacity(total);
    for idx in 0..total {
        let sample = match task {
            TaskKind::NormalRegression => gen_surface_sample(
                family_of(cfg.family, idx),
                cfg.points,
                cfg.noise,
                cfg.prerotate,
                &mut rng,
            )?,
            TaskKind::DirectionalRelay => gen_relay_sample(
                cfg.relay_triples,
                cfg.relay_radius,
                cfg.prerotate,
                cfg.noise,
                &mut rng,
            )?,
            TaskKind::ShapeClassification => {
                let fam = match idx % 3 {
                    0 => ShapeFamily::Sphere,
                    1 => ShapeFamily::Torus,
                    _ => ShapeFamily::Superellipsoid,
                };
                let mut s =
                    gen_surface_sample(fam, cfg.points, cfg.noise, cfg.prerotate, &mut rng)?;
                s.target = Target::Class(idx % 3);
                s
            }
        };
        samples.push(sample);
    }
    let eval = samples.split_off(cfg.clouds);
    Ok(Dataset { train: samples, eval })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    NormalRegression,
    DirectionalRelay,
    ShapeClassification,
}

/// The rotated-sender fixture: two clouds identical except that the
/// relay's marker cluster is rotated by `q` about the receiver axis. The
/// receivers' own neighborhoods are unchanged and the two receivers sit
/// symmetric around the relay so their contributions to its frame cancel
/// exactly.
pub struct SenderFixture {
    pub cloud_a: PointCloud64,
    pub cloud_b: PointCloud64,
    pub receivers: Vec<usize>,
    pub relay: usize,
    pub marker: usize,
    pub q: Orthogonal64,
    pub radius: f64,
}

pub fn sender_fixture() -> Result<SenderFixture> {
    let rc = 0.25;
    let _axis = [1.0, 0.0, 0.0];
    let mut positions: Vec<[f64; 3]> = Vec::new();
    let mut flags: Vec<[f64; 2]> = Vec::new();

    positions.push([0.0; 3]); // relay 0
    flags.push([0.0, 0.0]);
    let receivers = vec![1usize, 2usize];
    positions.push([0.8 * rc, 0.0, 0.0]); // receiver +e
    flags.push([0.0, 1.0]);
    positions.push([-0.8 * rc, 0.0, 0.0]); // receiver −e
    flags.push([0.0, 1.0]);

    // satellites give each receiver a nondegenerate own neighborhood;
    // mirrored so the two receivers stay exactly symmetric about the relay
    let sat = |sx: f64, wy: f64, wz: f64| {
        [
            sx * (0.8 + 0.45 * 0.766) * rc,
            0.45 * 0.643 * rc * wy,
            0.45 * 0.643 * rc * wz,
        ]
    };
    for sx in [1.0, -1.0] {
        positions.push(sat(sx, 1.0, 0.0));
        flags.push([0.0, 0.0]);
        positions.push(sat(sx, -0.3, 0.95));
        flags.push([0.0, 0.0]);
    }

    // marker cluster around the relay, strictly perpendicular to e so a
    // rotation about e preserves every pairwise distance to the receivers
    let marker = positions.len();
    let cluster = [
        (0.88 * rc, 0.3f64),
        (0.78 * rc, 1.8),
        (0.68 * rc, 3.9),
    ];
    for (idx, &(len, ang)) in cluster.iter().enumerate() {
        positions.push([0.0, len * ang.cos(), len * ang.sin()]);
        flags.push([if idx == 0 { 1.0 } else { 0.0 }, 0.0]);
    }

    // quarter turn about the receiver axis
    let q = Orthogonal64::new(
        vec![1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0],
        3,
    )?;
    let mut positions_b = positions.clone();
    for k in marker..positions.len() {
        let y = q.apply_vec(&positions[k]);
        positions_b[k] = [y[0], y[1], y[2]];
    }

    let build = |pts: &[[f64; 3]]| -> Result<PointCloud64> {
        let mut cloud = PointCloud::new(pts.iter().flatten().copied().collect(), 3)?;
        let spec = parse_rep_spec("2x0n", 3)?;
        let vals: Vec<f64> = flags.iter().flatten().copied().collect();
        cloud.insert_features("input", FeatureBlock::new(vals, pts.len(), spec)?)?;
        Ok(cloud)
    };
    Ok(SenderFixture {
        cloud_a: build(&positions)?,
        cloud_b: build(&positions_b)?,
        receivers,
        relay: 0,
        marker,
        q,
        radius: rc,
    })
}

/// Writes a dataset directory: `train_0000.xyz`, `eval_0000.xyz`, ... (+ JSON sidecars) plus a
/// `meta.json` with the generation parameters.
pub fn write_dataset(dir: &Path, task: TaskKind, cfg: &DatasetConfig, seed: u64, data: &Dataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let splits = [("train", &data.train), ("eval", &data.eval)];
    for (split, samples) in splits {
        for (i, sample) in samples.iter().enumerate() {
            let path = dir.join(format!("{split}_{i:04}.xyz"));
            let mut cloud = sample.cloud.clone();
            match &sample.target {
                Target::Vectors { values, mask } => {
                    let spec = parse_rep_spec("1x1n", 3)?;
                    let vals: Vec<f64> = values.iter().flatten().copied().collect();
                    cloud.insert_features(
                        "target",
                        FeatureBlock::new(vals, sample.cloud.len(), spec)?,
                    )?;
                    let mspec = parse_rep_spec("1x0n", 3)?;
                    cloud.insert_features(
                        "target_mask",
                        FeatureBlock::new(mask.clone(), sample.cloud.len(), mspec)?,
                    )?;
                }
                Target::Class(_) => {}
            }
            write_cloud(&path, &cloud)?;
        }
    }
    let labels: Vec<Option<usize>> = data
        .train
        .iter()
        .chain(&data.eval)
        .map(|s| match s.target {
            Target::Class(c) => Some(c),
            _ => None,
        })
        .collect();
    let rotations: Vec<Option<Vec<f64>>> = data
        .train
        .iter()
        .chain(&data.eval)
        .map(|s| s.prerotation.as_ref().map(|r| r.entries().to_vec()))
        .collect();
    let meta = serde_json::json!({
        "task": task,
        "config": cfg,
        "seed": seed,
        "train": data.train.len(),
        "eval": data.eval.len(),
        "labels": labels,
        "prerotations": rotations,
    });
    let tmp = dir.join("meta.json.tmp");
    std::fs::write(&tmp, serde_json::to_string_pretty(&meta).expect("meta"))?;
    std::fs::rename(tmp, dir.join("meta.json"))?;
    Ok(())
}

/// Reads back a dataset directory written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let meta: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.join("meta.json"))?,
    )
    .map_err(|e| Error::Format {
        path: dir.join("meta.json").display().to_string(),
        msg: e.to_string(),
    })?;
    let n_train = meta["train"].as_u64().unwrap_or(0) as usize;
    let n_eval = meta["eval"].as_u64().unwrap_or(0) as usize;
    let labels = meta["labels"].as_array().cloned().unwrap_or_default();
    let read_split = |split: &str, count: usize, label_off: usize| -> Result<Vec<Sample>> {
        let mut out = Vec::with_capacity(count);
        for i in 0..count {
            let path = dir.join(format!("{split}_{i:04}.xyz"));
            let mut cloud: PointCloud64 = tenframe::geometry::read_cloud(&path)?;
            let target = if let Some(label) =
                labels.get(label_off + i).and_then(|l| l.as_u64())
            {
                Target::Class(label as usize)
            } else {
                let tgt = cloud.feature("target").ok_or_else(|| Error::Format {
                    path: path.display().to_string(),
                    msg: "missing target feature block".into(),
                })?;
                let values: Vec<[f64; 3]> = (0..cloud.len())
                    .map(|r| {
                        let row = tgt.row(r);
                        [row[0], row[1], row[2]]
                    })
                    .collect();
                let mask = cloud
                    .feature("target_mask")
                    .map(|m| (0..cloud.len()).map(|r| m.row(r)[0]).collect())
                    .unwrap_or_else(|| vec![1.0; cloud.len()]);
                Target::Vectors { values, mask }
            };
            // drop bookkeeping blocks so the model sees only real inputs
            let mut clean = PointCloud::new(cloud.positions().to_vec(), 3)?;
            if let Some(block) = cloud.feature("input") {
                clean.insert_features("input", block.clone())?;
            }
            if let Some(n) = cloud.normals() {
                clean.set_normals(n.to_vec())?;
            }
            std::mem::swap(&mut cloud, &mut clean);
            out.push(Sample { cloud, target, prerotation: None });
        }
        Ok(out)
    };
    Ok(Dataset {
        train: read_split("train", n_train, 0)?,
        eval: read_split("eval", n_eval, n_train)?,
    })
}
