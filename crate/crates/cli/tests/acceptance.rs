//! Acceptance suite: one test per criterion, each printing a PASS line
//! with its measured values. Tolerances are pinned in the assertions.

use std::time::Instant;

use rand::Rng;

use tenframe::frames::{build_learned_frames, build_pca_frames, frame_phi_width};
use tenframe::geometry::{radius_graph, PointCloud};
use tenframe::mp::{
    Aggregation, FrameConfig, FrameKind, LayerConfig, LayerKind, MessageMode, Pipeline,
    PipelineConfig,
};
use tenframe::netcore::gradcheck::max_fd_relative_error;
use tenframe::netcore::loss::l1;
use tenframe::netcore::{Mlp, ParamStore, Phase, Tape};
use tenframe::reps::{
    apply_rep, change_of_basis, parse_rep_spec, random_orthogonal, seeded_rng, FeatureBlock,
    Group, Orthogonal, Parity, RepSpec, RepTerm,
};
use tenframe::{Orthogonal64, PointCloud64};

use tenframe_cli::datasets::{gen_dataset, sender_fixture, Target, TaskKind};
use tenframe_cli::taskspec::TaskSpec;
use tenframe_cli::train::train;

// --- helpers -------------------------------------------------------------

fn scattered_cloud(n: usize, seed: u64) -> PointCloud64 {
    let mut rng = seeded_rng(seed);
    let pts: Vec<f64> = (0..3 * n)
        .map(|_| ((rng.gen::<f64>() * 2.0 - 1.0) * 65536.0).round() / 65536.0)
        .collect();
    PointCloud::new(pts, 3).unwrap()
}

fn with_vector_features(mut cloud: PointCloud64, rep: &str, seed: u64) -> PointCloud64 {
    let spec = parse_rep_spec(rep, 3).unwrap();
    let mut rng = seeded_rng(seed);
    let vals: Vec<f64> = (0..cloud.len() * spec.width())
        .map(|_| rng.gen::<f64>() * 2.0 - 1.0)
        .collect();
    cloud
        .insert_features("input", FeatureBlock::new(vals, cloud.len(), spec).unwrap())
        .unwrap();
    cloud
}

fn transform_cloud(cloud: &PointCloud64, r: &Orthogonal64, t: &[f64; 3]) -> PointCloud64 {
    let moved: Vec<f64> = (0..cloud.len())
        .flat_map(|i| {
            let y = r.apply_vec(cloud.position(i));
            [y[0] + t[0], y[1] + t[1], y[2] + t[2]]
        })
        .collect();
    let mut out = PointCloud::new(moved, 3).unwrap();
    for (name, block) in cloud.features() {
        out.insert_features(name, apply_rep(block.spec(), r, block).unwrap())
            .unwrap();
    }
    out
}

fn max_abs_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut worst = 0.0f64;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}

fn random_spec(seed: u64, d: usize) -> RepSpec {
    let mut rng = seeded_rng(seed);
    let terms = (0..rng.gen_range(1..=3))
        .map(|_| RepTerm {
            mult: rng.gen_range(1..=3),
            order: rng.gen_range(0..=3),
            parity: if rng.gen_bool(0.5) { Parity::Tensor } else { Parity::Pseudo },
        })
        .collect();
    RepSpec::new(terms, d)
}

fn random_block(spec: &RepSpec, seed: u64) -> FeatureBlock<f64> {
    let mut rng = seeded_rng(seed);
    let vals: Vec<f64> = (0..spec.width()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
    FeatureBlock::new(vals, 1, spec.clone()).unwrap()
}

/// Test oracle: explicit d^n × d^n Kronecker power of R.
fn kron_apply(r: &Orthogonal64, order: u32, parity: Parity, seg: &[f64]) -> Vec<f64> {
    let d = r.dim();
    let w = d.pow(order);
    let decode = |mut idx: usize| -> Vec<usize> {
        let mut digits = vec![0usize; order as usize];
        for k in (0..order as usize).rev() {
            digits[k] = idx % d;
            idx /= d;
        }
        digits
    };
    let mut out = vec![0.0; w];
    for i in 0..w {
        let di = decode(i);
        for j in 0..w {
            let dj = decode(j);
            let mut prod = 1.0;
            for k in 0..order as usize {
                prod *= r.entry(di[k], dj[k]);
            }
            out[i] += prod * seg[j];
        }
    }
    if parity == Parity::Pseudo {
        let det = r.det();
        for v in out.iter_mut() {
            *v *= det;
        }
    }
    out
}

// --- criterion 1 ---------------------------------------------------------

#[test]
fn criterion_1_representation_law_and_kronecker_oracle() {
    let start = Instant::now();
    let mut worst_law = 0.0f64;
    for case in 0..100u64 {
        let d = if case % 2 == 0 { 2 } else { 3 };
        let spec = random_spec(1000 + case, d);
        let mut rng = seeded_rng(2000 + case);
        let r1 = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, d);
        let r2 = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, d);
        let f = random_block(&spec, 3000 + case);
        let composed = apply_rep(&spec, &r1, &apply_rep(&spec, &r2, &f).unwrap()).unwrap();
        let product = apply_rep(&spec, &r1.matmul(&r2), &f).unwrap();
        for (a, b) in composed.values().iter().zip(product.values()) {
            worst_law = worst_law.max((a - b).abs());
        }
    }
    assert!(worst_law < 1e-10, "representation law deviation {worst_law}");

    let mut worst_kron = 0.0f64;
    for case in 0..40u64 {
        let d = if case % 2 == 0 { 2 } else { 3 };
        let order = 2 + (case % 2) as u32; // orders 2 and 3
        for parity in [Parity::Tensor, Parity::Pseudo] {
            let spec = RepSpec::new(vec![RepTerm { mult: 1, order, parity }], d);
            let mut rng = seeded_rng(4000 + case);
            let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, d);
            let f = random_block(&spec, 5000 + case);
            let got = apply_rep(&spec, &r, &f).unwrap();
            let expect = kron_apply(&r, order, parity, f.row(0));
            for (a, b) in got.row(0).iter().zip(&expect) {
                worst_kron = worst_kron.max((a - b).abs());
            }
        }
    }
    assert!(worst_kron < 1e-12, "Kronecker oracle deviation {worst_kron}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 5.0, "criterion 1 runtime {secs:.2}s exceeds 5s");
    println!(
        "criterion 1 (representation law): PASS — law dev {worst_law:.2e}, kron dev {worst_kron:.2e}, {secs:.2}s"
    );
}

// --- criterion 2 ---------------------------------------------------------

#[test]
fn criterion_2_frame_transform_law() {
    let start = Instant::now();
    let rep = parse_rep_spec("2x0n+1x1n", 3).unwrap();
    let mut worst_learned = 0.0f64;
    let mut worst_pca = 0.0f64;
    let mut reflections = 0usize;
    for cloud_idx in 0..20u64 {
        let cloud = with_vector_features(
            scattered_cloud(48, 100 + cloud_idx),
            "2x0n+1x1n",
            200 + cloud_idx,
        );
        let graph = radius_graph(&cloud, 1.5);
        for i in 0..cloud.len() {
            assert!(graph.degree(i) >= 3, "cloud {cloud_idx} too sparse at node {i}");
        }
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded_rng(300 + cloud_idx);
        let in_w = frame_phi_width(Some(&rep));
        let mut phi = Mlp::new(&mut store, &mut rng, "phi", in_w, &[32, 32], 2, false);
        let (learned, ev) =
            build_learned_frames(&store, &mut phi, &cloud, &graph, Some(&rep), 5, 77);
        assert_eq!(ev.degenerate_gram_schmidt, 0, "degenerate frame in test cloud");
        let pca = build_pca_frames(&cloud, &graph);

        let mut trng = seeded_rng(400 + cloud_idx);
        for _ in 0..20 {
            let r = random_orthogonal::<f64, _>(&mut trng, Group::Orthogonal, 3);
            if r.det() < 0.0 {
                reflections += 1;
            }
            let t = [
                trng.gen::<f64>() - 0.5,
                trng.gen::<f64>() - 0.5,
                trng.gen::<f64>() - 0.5,
            ];
            let moved = transform_cloud(&cloud, &r, &t);
            let graph2 = radius_graph(&moved, 1.5);
            let (learned2, _) =
                build_learned_frames(&store, &mut phi, &moved, &graph2, Some(&rep), 5, 77);
            let pca2 = build_pca_frames(&moved, &graph2);
            for i in 0..cloud.len() {
                let expect = learned.frames[i].matmul(&r.transpose());
                for (a, b) in learned2.frames[i].entries().iter().zip(expect.entries()) {
                    worst_learned = worst_learned.max((a - b).abs());
                }
                let expect = pca.frames[i].matmul(&r.transpose());
                for (a, b) in pca2.frames[i].entries().iter().zip(expect.entries()) {
                    worst_pca = worst_pca.max((a - b).abs());
                }
            }
        }
    }
    assert!(reflections > 100, "transform sample must include reflections");
    assert!(worst_learned < 1e-10, "learned frame law deviation {worst_learned}");
    assert!(worst_pca < 1e-8, "pca frame law deviation {worst_pca}");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 30.0, "criterion 2 runtime {secs:.2}s exceeds 30s");
    println!(
        "criterion 2 (frame transform law): PASS — learned {worst_learned:.2e}, pca {worst_pca:.2e}, {secs:.2}s"
    );
}

// --- criteria 3 and 8 ----------------------------------------------------

/// Audits output equivariance of the full pipeline under random
/// transforms and collects refinement determinants along the way.
fn audit_pipeline(
    pipeline: &mut Pipeline<f64>,
    clouds: &[PointCloud64],
    n_transforms: usize,
    seed: u64,
) -> (f64, f64) {
    let out_rep = pipeline.output_rep().clone();
    let mut worst = 0.0f64;
    let mut worst_det = 0.0f64;
    let mut rng = seeded_rng(seed);
    for cloud in clouds {
        let (ids, base, trace) = pipeline.run_traced(cloud, seed).unwrap();
        assert_eq!(trace.events.degenerate_gram_schmidt, 0);
        for dets in &trace.refine_dets {
            for d in dets {
                worst_det = worst_det.max((d - 1.0).abs());
            }
        }
        for _ in 0..n_transforms {
            let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
            let t = [
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
                rng.gen::<f64>() - 0.5,
            ];
            let moved = transform_cloud(cloud, &r, &t);
            let (ids2, transformed) = pipeline.run(&moved, seed).unwrap();
            assert_eq!(ids, ids2);
            for (row, row2) in base.iter().zip(&transformed) {
                let block = FeatureBlock::new(row.clone(), 1, out_rep.clone()).unwrap();
                let expect = apply_rep(&out_rep, &r, &block).unwrap();
                for (a, b) in expect.values().iter().zip(row2) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
    }
    (worst, worst_det)
}

#[test]
fn criterion_3_pipeline_equivariance_untrained_and_trained() {
    let start = Instant::now();
    let mut spec = TaskSpec::defaults(TaskKind::NormalRegression);
    spec.dataset.clouds = 8;
    spec.dataset.eval_clouds = 3;
    spec.train.steps = 300;
    spec.train.warmup = 50;
    let data = gen_dataset(spec.task, &spec.dataset, spec.train.seed).unwrap();
    let clouds: Vec<PointCloud64> = data.eval.iter().map(|s| s.cloud.clone()).collect();

    let mut untrained = Pipeline::<f64>::build(spec.pipeline.clone(), spec.train.seed).unwrap();
    let (dev_untrained, _) = audit_pipeline(&mut untrained, &clouds, 20, 41);
    assert!(dev_untrained < 1e-9, "untrained deviation {dev_untrained}");

    let mut outcome = train(&spec, &data, true).unwrap();
    let (dev_trained, _) = audit_pipeline(&mut outcome.pipeline, &clouds, 20, 42);
    assert!(dev_trained < 1e-9, "trained deviation {dev_trained}");

    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 120.0, "criterion 3 runtime {secs:.2}s exceeds 2min");
    println!(
        "criterion 3 (pipeline equivariance): PASS — untrained {dev_untrained:.2e}, trained {dev_trained:.2e}, {secs:.2}s"
    );
}

#[test]
fn criterion_8_refinement_soundness() {
    let mut spec = TaskSpec::defaults(TaskKind::NormalRegression);
    spec.dataset.clouds = 4;
    spec.dataset.eval_clouds = 2;
    spec.train.steps = 120;
    spec.train.warmup = 20;
    for layer in &spec.pipeline.layers {
        if layer.kind == LayerKind::Encoder {
            assert!(layer.refine, "refinement must be enabled for this criterion");
        }
    }
    let data = gen_dataset(spec.task, &spec.dataset, spec.train.seed).unwrap();
    let clouds: Vec<PointCloud64> = data.eval.iter().map(|s| s.cloud.clone()).collect();

    let mut untrained = Pipeline::<f64>::build(spec.pipeline.clone(), 9).unwrap();
    let (dev_u, det_u) = audit_pipeline(&mut untrained, &clouds, 10, 43);
    let mut outcome = train(&spec, &data, true).unwrap();
    let (dev_t, det_t) = audit_pipeline(&mut outcome.pipeline, &clouds, 10, 44);
    let worst_det = det_u.max(det_t);
    assert!(worst_det < 1e-12, "det(U) deviates from +1 by {worst_det}");
    assert!(dev_u < 1e-9 && dev_t < 1e-9, "equivariance with refinement: {dev_u} / {dev_t}");
    println!(
        "criterion 8 (refinement soundness): PASS — max |det(U)−1| {worst_det:.2e}, equivariance {dev_u:.2e}/{dev_t:.2e}"
    );
}

// --- criterion 4 ---------------------------------------------------------

fn reduction_config(frames: FrameKind, mode: MessageMode) -> PipelineConfig {
    let rep = "6x0n+2x0p+2x1n+1x1p+1x2n".to_string();
    PipelineConfig {
        dim: 3,
        input_rep: Some("2x0n+1x1n".into()),
        output_rep: "1x1n".into(),
        radial_k: 4,
        frames: FrameConfig { kind: frames, radius: 1.6, hidden: vec![16, 16], envelope_p: 5 },
        layers: vec![
            LayerConfig {
                kind: LayerKind::Message,
                rep: rep.clone(),
                hidden: vec![24],
                radius: Some(1.6),
                fraction: None,
                refine: false,
                mode,
                aggregation: Aggregation::Max,
            },
            LayerConfig {
                kind: LayerKind::Encoder,
                rep: rep.clone(),
                hidden: vec![24],
                radius: Some(1.8),
                fraction: Some(0.5),
                refine: false,
                mode,
                aggregation: Aggregation::Max,
            },
            LayerConfig {
                kind: LayerKind::Decoder,
                rep,
                hidden: vec![24],
                radius: None,
                fraction: None,
                refine: false,
                mode,
                aggregation: Aggregation::Max,
            },
        ],
        output_hidden: vec![16],
        normalize_output: false,
        dropout: 0.0,
        norm: false,
        refine_hidden: vec![16, 8],
        pool_anchor_farthest: false,
    }
}

#[test]
fn criterion_4_generalization_reduction_and_augmentation_equivalence() {
    let cloud = with_vector_features(scattered_cloud(18, 61), "2x0n+1x1n", 62);

    // (a) constant frames: tensorial ≡ scalar within 1e-12
    let mut worst_reduction = 0.0f64;
    for kind in [FrameKind::Identity, FrameKind::Constant] {
        let mut tens =
            Pipeline::<f64>::build(reduction_config(kind, MessageMode::Tensorial), 5).unwrap();
        let mut scal =
            Pipeline::<f64>::build(reduction_config(kind, MessageMode::Scalar), 5).unwrap();
        let (_, ya) = tens.run(&cloud, 9).unwrap();
        let (_, yb) = scal.run(&cloud, 9).unwrap();
        worst_reduction = worst_reduction.max(max_abs_diff(&ya, &yb));
    }
    assert!(worst_reduction < 1e-12, "tensorial/scalar reduction deviates {worst_reduction}");

    // (b) pipeline(cloud; frames ≡ R̃) = pipeline(R̃·cloud; frames ≡ I) within 1e-10
    let mut constant =
        Pipeline::<f64>::build(reduction_config(FrameKind::Constant, MessageMode::Tensorial), 5)
            .unwrap();
    let mut identity =
        Pipeline::<f64>::build(reduction_config(FrameKind::Identity, MessageMode::Tensorial), 5)
            .unwrap();
    let out_rep = parse_rep_spec("1x1n", 3).unwrap();
    let mut worst_aug = 0.0f64;
    for frame_seed in [3u64, 17, 99] {
        let shared = constant.frames_for(&cloud, frame_seed).unwrap().frames[0].clone();
        let moved = transform_cloud(&cloud, &shared, &[0.0; 3]);
        let (_, y_const) = constant.run(&cloud, frame_seed).unwrap();
        let (_, y_id) = identity.run(&moved, frame_seed).unwrap();
        for (a, b) in y_const.iter().zip(&y_id) {
            let block = FeatureBlock::new(a.clone(), 1, out_rep.clone()).unwrap();
            let rotated = apply_rep(&out_rep, &shared, &block).unwrap();
            for (x, y) in rotated.values().iter().zip(b) {
                worst_aug = worst_aug.max((x - y).abs());
            }
        }
    }
    assert!(worst_aug < 1e-10, "augmentation equivalence deviates {worst_aug}");
    println!(
        "criterion 4 (reduction + augmentation equivalence): PASS — reduction {worst_reduction:.2e}, augmentation {worst_aug:.2e}"
    );
}

// --- criterion 5 ---------------------------------------------------------

#[test]
fn criterion_5_rotated_sender_fixture() {
    let fx = sender_fixture().unwrap();
    let mut spec = TaskSpec::defaults(TaskKind::DirectionalRelay);
    spec.pipeline.frames.radius = fx.radius;
    for layer in spec.pipeline.layers.iter_mut() {
        layer.radius = Some(fx.radius);
    }

    // scalar mode: receiver outputs identical across the pair
    let mut scalar_cfg = spec.pipeline.clone();
    for layer in scalar_cfg.layers.iter_mut() {
        layer.mode = MessageMode::Scalar;
    }
    let mut scalar = Pipeline::<f64>::build(scalar_cfg, 36).unwrap();
    let (_, ya) = scalar.run(&fx.cloud_a, 4).unwrap();
    let (_, yb) = scalar.run(&fx.cloud_b, 4).unwrap();
    let mut scalar_dev = 0.0f64;
    for &recv in &fx.receivers {
        for (x, y) in ya[recv].iter().zip(&yb[recv]) {
            scalar_dev = scalar_dev.max((x - y).abs());
        }
    }
    assert!(scalar_dev < 1e-10, "scalar outputs differ by {scalar_dev}");

    // tensorial mode: outputs differ and the received vector channels
    // rotate with the sender neighborhood
    let mut tensorial = Pipeline::<f64>::build(spec.pipeline.clone(), 36).unwrap();
    let (_, ya, tr_a) = tensorial.run_traced(&fx.cloud_a, 4).unwrap();
    let (_, yb, tr_b) = tensorial.run_traced(&fx.cloud_b, 4).unwrap();
    let mut tensorial_diff = 0.0f64;
    for &recv in &fx.receivers {
        for (x, y) in ya[recv].iter().zip(&yb[recv]) {
            tensorial_diff = tensorial_diff.max((x - y).abs());
        }
    }
    assert!(tensorial_diff > 0.1, "tensorial outputs differ by only {tensorial_diff}");

    // sender frame law under the local rotation: R_j(B) = R_j(A)·Qᵀ
    let layer1_rep = parse_rep_spec(&spec.pipeline.layers[0].rep, 3).unwrap();
    let stage_a = &tr_a.stages[1];
    let stage_b = &tr_b.stages[1];
    let qt = fx.q.transpose();
    let frame = |stage: &tenframe::mp::LevelTrace<f64>, node: usize| {
        Orthogonal64::new_unchecked(stage.frames[node].clone(), 3)
    };
    let rj_a = frame(stage_a, fx.relay);
    let rj_b = frame(stage_b, fx.relay);
    let expect = rj_a.matmul(&qt);
    let mut frame_dev = 0.0f64;
    for (a, b) in expect.entries().iter().zip(rj_b.entries()) {
        frame_dev = frame_dev.max((a - b).abs());
    }
    assert!(frame_dev < 1e-9, "sender frame law deviates {frame_dev}");

    // received message term: global vector channels rotate by Q
    let recv = fx.receivers[0];
    let ri_a = frame(stage_a, recv);
    let ri_b = frame(stage_b, recv);
    let fj_a =
        FeatureBlock::new(stage_a.features[fx.relay].clone(), 1, layer1_rep.clone()).unwrap();
    let fj_b =
        FeatureBlock::new(stage_b.features[fx.relay].clone(), 1, layer1_rep.clone()).unwrap();
    let msg_a = change_of_basis(&layer1_rep, &ri_a, &rj_a, &fj_a).unwrap();
    let msg_b = change_of_basis(&layer1_rep, &ri_b, &rj_b, &fj_b).unwrap();
    let mut chan_dev = 0.0f64;
    let mut moved_channels = 0usize;
    for off in layer1_rep.vector_channel_offsets() {
        let va = &msg_a.row(0)[off..off + 3];
        let vb = &msg_b.row(0)[off..off + 3];
        let global_a = ri_a.transpose().apply_vec(va);
        let global_b = ri_b.transpose().apply_vec(vb);
        let rotated = fx.q.apply_vec(&global_a);
        for k in 0..3 {
            chan_dev = chan_dev.max((rotated[k] - global_b[k]).abs());
        }
        let delta: f64 = (0..3).map(|k| (global_b[k] - global_a[k]).powi(2)).sum::<f64>().sqrt();
        if delta > 1e-6 {
            moved_channels += 1;
        }
    }
    assert!(chan_dev < 1e-9, "received vector channel rotation deviates {chan_dev}");
    assert!(moved_channels > 0, "no vector channel actually carried direction");
    println!(
        "criterion 5 (rotated-sender fixture): PASS — scalar {scalar_dev:.2e}, tensorial diff {tensorial_diff:.3}, channel rotation {chan_dev:.2e}"
    );
}

// --- criterion 6 ---------------------------------------------------------

#[test]
fn criterion_6_gradient_checks_through_everything() {
    let start = Instant::now();
    // one relay group (8 nodes): small enough for exhaustive finite
    // differences over every parameter of every module type
    let mut dataset_spec = TaskSpec::defaults(TaskKind::DirectionalRelay);
    dataset_spec.dataset.clouds = 1;
    dataset_spec.dataset.eval_clouds = 0;
    dataset_spec.dataset.relay_triples = 1;
    dataset_spec.dataset.noise = 0.0;
    let data = gen_dataset(dataset_spec.task, &dataset_spec.dataset, 5).unwrap();
    let sample = &data.train[0];

    let rep = "2x0n+1x1n".to_string();
    let config = PipelineConfig {
        dim: 3,
        input_rep: Some("2x0n".into()),
        output_rep: "1x1n".into(),
        radial_k: 4,
        frames: FrameConfig {
            kind: FrameKind::Learned,
            radius: 0.25,
            hidden: vec![8, 8],
            envelope_p: 5,
        },
        layers: vec![
            LayerConfig {
                kind: LayerKind::Message,
                rep: rep.clone(),
                hidden: vec![8],
                radius: Some(0.25),
                fraction: None,
                refine: true,
                mode: MessageMode::Tensorial,
                aggregation: Aggregation::Max,
            },
            LayerConfig {
                kind: LayerKind::Encoder,
                rep: rep.clone(),
                hidden: vec![8],
                radius: Some(0.3),
                fraction: Some(0.5),
                refine: false,
                mode: MessageMode::Tensorial,
                aggregation: Aggregation::Mean,
            },
            LayerConfig {
                kind: LayerKind::Decoder,
                rep,
                hidden: vec![8],
                radius: None,
                fraction: None,
                refine: false,
                mode: MessageMode::Tensorial,
                aggregation: Aggregation::Max,
            },
        ],
        output_hidden: vec![8],
        normalize_output: false,
        dropout: 0.0,
        norm: false,
        refine_hidden: vec![8],
        pool_anchor_farthest: false,
    };
    let mut pipeline = Pipeline::<f64>::build(config, 31).unwrap();
    let targets: Vec<Vec<f64>> = match &sample.target {
        Target::Vectors { values, .. } => values.iter().map(|v| v.to_vec()).collect(),
        _ => unreachable!(),
    };

    let loss_and_grads = |p: &mut Pipeline<f64>, want_grads: bool| -> (f64, Vec<f64>) {
        let mut tape = Tape::new();
        let bound = p.store.bind(&mut tape);
        let res = p
            .forward(&mut tape, &bound, &sample.cloud, Phase::Eval, 77, false)
            .unwrap();
        let rows: Vec<Vec<f64>> = res.node_ids.iter().map(|&i| targets[i].clone()).collect();
        let loss = l1(&mut tape, &res.output, &rows, None);
        let val = tape.val(loss);
        if want_grads {
            tape.backward(loss);
            (val, p.store.gradients(&tape, &bound))
        } else {
            (val, Vec::new())
        }
    };

    let (_, analytic) = loss_and_grads(&mut pipeline, true);
    let n_params = pipeline.store.len();
    let mut data_vec = pipeline.store.data().to_vec();
    let (err, idx) = max_fd_relative_error(
        &mut data_vec,
        &analytic,
        |d| {
            pipeline.store.data_mut().copy_from_slice(d);
            loss_and_grads(&mut pipeline, false).0
        },
        1e-6,
    );
    let secs = start.elapsed().as_secs_f64();
    assert!(
        err < 1e-6,
        "gradient check failed: max relative error {err} at param {idx} of {n_params}"
    );
    assert!(secs < 60.0, "criterion 6 runtime {secs:.2}s exceeds 1min");
    println!(
        "criterion 6 (gradient checks): PASS — max rel err {err:.2e} over {n_params} params, {secs:.2}s"
    );
}

// --- criterion 7 ---------------------------------------------------------

#[test]
fn criterion_7a_normal_regression_gate() {
    let start = Instant::now();
    let mut metrics = Vec::new();
    for seed in [7u64, 8, 9] {
        let mut spec = TaskSpec::defaults(TaskKind::NormalRegression);
        spec.train.seed = seed;
        assert!(spec.train.steps <= 2000, "gate allows at most 2000 steps");
        let data = gen_dataset(spec.task, &spec.dataset, seed).unwrap();
        let outcome = train(&spec, &data, true).unwrap();
        metrics.push(outcome.report.final_metric);
    }
    let mean: f64 = metrics.iter().sum::<f64>() / metrics.len() as f64;
    for (k, m) in metrics.iter().enumerate() {
        assert!(*m >= 0.95, "seed {k}: cosine {m} below 0.95");
        assert!((m - mean).abs() <= 0.02, "seed {k}: {m} deviates from mean {mean}");
    }
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 960.0, "criterion 7a runtime {secs:.1}s exceeds budget");
    println!(
        "criterion 7a (normal regression gate): PASS — cosines {:?}, {secs:.1}s",
        metrics.iter().map(|m| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
    );
}

#[test]
fn criterion_7b_relay_ablation_ordering() {
    let start = Instant::now();
    let mut cells: std::collections::BTreeMap<&str, Vec<f64>> = Default::default();
    for seed in [7u64, 8, 9] {
        let mut spec = TaskSpec::defaults(TaskKind::DirectionalRelay);
        spec.train.seed = seed;
        let data = gen_dataset(spec.task, &spec.dataset, seed).unwrap();
        let report = tenframe_cli::ablate::ablation_matrix(&spec, &data, true).unwrap();
        for cell in report.cells {
            let key = match (cell.frames.as_str(), cell.mode.as_str()) {
                ("learned", "tensorial") => "tl",
                ("learned", "scalar") => "sl",
                ("random", "tensorial") => "tr",
                ("random", "scalar") => "sr",
                _ => unreachable!(),
            };
            cells.entry(key).or_default().push(cell.final_metric);
        }
    }
    let median = |xs: &Vec<f64>| -> f64 {
        let mut s = xs.clone();
        s.sort_by(|a, b| a.partial_cmp(b).unwrap());
        s[s.len() / 2]
    };
    let tl = median(&cells["tl"]);
    let tr = median(&cells["tr"]);
    let sl = median(&cells["sl"]);
    assert!(tl - tr >= 0.01, "tensorial+learned ({tl:.4}) must beat tensorial+random ({tr:.4})");
    assert!(tl - sl >= 0.01, "tensorial+learned ({tl:.4}) must beat scalar+learned ({sl:.4})");
    assert!(tr - sl >= 0.01, "tensorial+random ({tr:.4}) must beat scalar+learned ({sl:.4})");
    let secs = start.elapsed().as_secs_f64();
    assert!(secs < 240.0, "criterion 7b runtime {secs:.1}s exceeds budget");
    println!(
        "criterion 7b (relay ablation ordering): PASS — medians T+L {tl:.4} > T+R {tr:.4} > S+L {sl:.4}, {secs:.1}s"
    );
}

// --- criterion 9 ---------------------------------------------------------

#[test]
fn criterion_9_envelope_and_embedding_pins() {
    // exact in double precision: every term is dyadic
    let w: f64 = tenframe::frames::envelope(0.5, 1.0, 5);
    assert_eq!(w, 99.0 / 128.0, "envelope(r_c/2, p=5) must be exactly 99/128");

    let mid = tenframe::geometry::gaussian_radial_embedding(0.35f64, 2, 0.7).unwrap();
    assert!((mid[0] - 0.5).abs() < 1e-12);
    assert!((mid[1] - 0.5).abs() < 1e-12);
    for k in [4usize, 9] {
        let r_max = 1.3;
        let spacing = r_max / (k - 1) as f64;
        for i in 0..k - 1 {
            let e = tenframe::geometry::gaussian_radial_embedding(
                spacing * (i as f64 + 0.5),
                k,
                r_max,
            )
            .unwrap();
            assert!((e[i] - 0.5).abs() < 1e-12);
            assert!((e[i + 1] - 0.5).abs() < 1e-12);
        }
    }
    println!("criterion 9 (envelope and embedding pins): PASS — envelope exact, midpoints at 0.5");
}
