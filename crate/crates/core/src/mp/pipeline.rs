//! Assembling and running the full pipeline: frame construction,
//! canonicalization into local frames, the layer stack (encoders with
//! optional refinement, decoders with skip connections, message layers,
//! global pooling), the output MLP, and decanonicalization back into the
//! global frame.

use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::frames::{
    self, build_learned_frames_values, refine_frames_values, FrameEvents, FrameSet, Provenance,
};
use crate::geometry::{radius_graph, PointCloud};
use crate::mp::canon::{canonicalize_row_values, decanonicalize_row_values};
use crate::mp::config::{FrameKind, LayerConfig, LayerKind, PipelineConfig};
use crate::mp::layers::{
    decoder_layer, encoder_layer, global_pool, message_layer, LayerCtx, LevelState,
};
use crate::netcore::mlp::{Bound, Mlp, ParamStore, Phase, RunningStats};
use crate::netcore::tape::{Tape, Value};
use crate::reps::{random_orthogonal, seeded_rng, Group, Orthogonal, RepSpec};
use crate::scalar::Scalar;
use crate::tapemath::{self, Mat3v};

enum LayerNets<T> {
    Message { phi: Mlp<T>, psi: Mlp<T> },
    Encoder { phi: Mlp<T> },
    Decoder { mlp: Mlp<T> },
    Pool { phi: Mlp<T> },
}

/// Snapshot of one stage for audits and tests.
#[derive(Debug, Clone)]
pub struct LevelTrace<T> {
    pub indices: Vec<usize>,
    /// Row-major 3×3 per node.
    pub frames: Vec<Vec<T>>,
    pub features: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Default)]
pub struct Trace<T> {
    /// After frame construction and canonicalization, then after every layer.
    pub stages: Vec<LevelTrace<T>>,
    /// det(U) per node for every refinement application, in layer order.
    pub refine_dets: Vec<Vec<T>>,
    pub events: FrameEvents,
}

/// Output of one forward run.
pub struct ForwardResult<T> {
    /// Original node ids carrying the output rows (all nodes for
    /// per-node heads, the anchor for pooled heads).
    pub node_ids: Vec<usize>,
    /// Decanonicalized output rows (global frame), width = output rep.
    pub output: Vec<Vec<Value>>,
    pub trace: Option<Trace<T>>,
}

/// A configured network: parameter store plus the per-layer MLPs.
pub struct Pipeline<T> {
    pub config: PipelineConfig,
    pub store: ParamStore<T>,
    input_rep: Option<RepSpec>,
    output_rep: RepSpec,
    frame_phi: Option<Mlp<T>>,
    layers: Vec<LayerNets<T>>,
    refines: Vec<Option<Mlp<T>>>,
    output_mlp: Option<Mlp<T>>,
}

impl<T: Scalar> Pipeline<T> {
    /// Builds all networks with Glorot-initialized parameters; width
    /// chaining is validated and errors carry the offending layer index.
    pub fn build(config: PipelineConfig, init_seed: u64) -> Result<Self> {
        config.validate()?;
        let input_rep = config.input_spec()?;
        let output_rep = config.output_spec()?;
        let mut store = ParamStore::new();
        let mut rng = seeded_rng(init_seed);
        let k = config.radial_k;

        let frame_phi = if config.frames.kind == FrameKind::Learned {
            let in_w = frames::frame_phi_width(input_rep.as_ref());
            Some(Mlp::new(
                &mut store,
                &mut rng,
                "frame_phi",
                in_w,
                &config.frames.hidden,
                2,
                false,
            ))
        } else {
            None
        };

        let mut layers = Vec::new();
        let mut refines = Vec::new();
        let mut cur_w = input_rep.as_ref().map_or(0, |s| s.width());
        let mut cache_widths: Vec<usize> = Vec::new();
        for (idx, layer) in config.layers.iter().enumerate() {
            let out_rep = crate::reps::parse_rep_spec(&layer.rep, config.dim)?;
            let out_w = out_rep.width();
            let nets = match layer.kind {
                LayerKind::Message => {
                    let phi = Mlp::new(
                        &mut store,
                        &mut rng,
                        &format!("layer{idx}.phi"),
                        2 * cur_w + k + 3,
                        &layer.hidden,
                        out_w,
                        config.norm,
                    );
                    let psi = Mlp::new(
                        &mut store,
                        &mut rng,
                        &format!("layer{idx}.psi"),
                        cur_w + out_w,
                        &layer.hidden,
                        out_w,
                        config.norm,
                    );
                    LayerNets::Message { phi, psi }
                }
                LayerKind::Encoder => {
                    cache_widths.push(cur_w);
                    let phi = Mlp::new(
                        &mut store,
                        &mut rng,
                        &format!("layer{idx}.phi"),
                        cur_w + k + 3,
                        &layer.hidden,
                        out_w,
                        config.norm,
                    );
                    LayerNets::Encoder { phi }
                }
                LayerKind::Decoder => {
                    let skip_w = cache_widths.pop().ok_or(Error::Config {
                        layer: Some(idx),
                        msg: "decoder without cached encoder level".into(),
                    })?;
                    let mlp = Mlp::new(
                        &mut store,
                        &mut rng,
                        &format!("layer{idx}.dec"),
                        cur_w + skip_w,
                        &layer.hidden,
                        out_w,
                        config.norm,
                    );
                    LayerNets::Decoder { mlp }
                }
                LayerKind::Pool => {
                    let phi = Mlp::new(
                        &mut store,
                        &mut rng,
                        &format!("layer{idx}.pool"),
                        cur_w + k + 3,
                        &layer.hidden,
                        out_w,
                        config.norm,
                    );
                    LayerNets::Pool { phi }
                }
            };
            layers.push(nets);
            refines.push(if layer.refine {
                Some(Mlp::new(
                    &mut store,
                    &mut rng,
                    &format!("layer{idx}.refine"),
                    out_w,
                    &config.refine_hidden,
                    6,
                    config.norm,
                ))
            } else {
                None
            });
            cur_w = out_w;
        }

        let out_w = output_rep.width();
        let output_mlp = if config.output_hidden.is_empty() && cur_w == out_w {
            None
        } else {
            Some(Mlp::new(
                &mut store,
                &mut rng,
                "output",
                cur_w,
                &config.output_hidden,
                out_w,
                false,
            ))
        };

        Ok(Pipeline {
            config,
            store,
            input_rep,
            output_rep,
            frame_phi,
            layers,
            refines,
            output_mlp,
        })
    }

    pub fn input_rep(&self) -> Option<&RepSpec> {
        self.input_rep.as_ref()
    }

    pub fn output_rep(&self) -> &RepSpec {
        &self.output_rep
    }

    pub fn param_count(&self) -> usize {
        self.store.len()
    }

    /// Parameters belonging to the frame net alone.
    pub fn frame_param_count(&self) -> usize {
        self.frame_phi.as_ref().map_or(0, |m| m.param_count())
    }

    fn check_inputs(&self, cloud: &PointCloud<T>) -> Result<()> {
        if cloud.dim() != 3 {
            return Err(Error::DimMismatch {
                context: "pipeline forward",
                expected: 3,
                got: cloud.dim(),
            });
        }
        if let Some(spec) = &self.input_rep {
            match cloud.feature("input") {
                Some(block) if block.spec() == spec => {}
                Some(block) => {
                    return Err(Error::WidthMismatch {
                        context: "pipeline input features",
                        expected: spec.width(),
                        got: block.width(),
                    })
                }
                None => {
                    return Err(Error::Config {
                        layer: None,
                        msg: "cloud lacks the `input` feature block".into(),
                    })
                }
            }
        }
        Ok(())
    }

    /// Frame construction for one cloud; learned frames go through the
    /// differentiable builder, everything else enters as constants.
    fn build_frames(
        &mut self,
        tape: &mut Tape<T>,
        bound: &Bound,
        cloud: &PointCloud<T>,
        phase: Phase,
        frame_seed: u64,
        events: &mut FrameEvents,
    ) -> Vec<Mat3v> {
        let n = cloud.len();
        match self.config.frames.kind {
            FrameKind::Learned => {
                let graph = radius_graph(cloud, T::of(self.config.frames.radius));
                let phi = self.frame_phi.as_mut().expect("learned frames need a net");
                build_learned_frames_values(
                    tape,
                    &self.store,
                    bound,
                    phi,
                    cloud,
                    &graph,
                    self.input_rep.as_ref(),
                    self.config.frames.envelope_p,
                    frame_seed,
                    phase,
                    events,
                )
            }
            FrameKind::Pca => {
                let graph = radius_graph(cloud, T::of(self.config.frames.radius));
                let set = frames::build_pca_frames(cloud, &graph);
                set.frames
                    .iter()
                    .map(|f| tapemath::mat3_const(tape, f.entries()))
                    .collect()
            }
            FrameKind::Random => {
                let mut rng = seeded_rng(frame_seed);
                (0..n)
                    .map(|_| {
                        let r: Orthogonal<T> =
                            random_orthogonal(&mut rng, Group::Orthogonal, 3);
                        tapemath::mat3_const(tape, r.entries())
                    })
                    .collect()
            }
            FrameKind::Constant => {
                let mut rng = seeded_rng(frame_seed);
                let r: Orthogonal<T> = random_orthogonal(&mut rng, Group::Orthogonal, 3);
                let shared = tapemath::mat3_const(tape, r.entries());
                vec![shared; n]
            }
            FrameKind::Identity => {
                let shared = tapemath::identity3(tape);
                vec![shared; n]
            }
        }
    }

    fn snapshot(tape: &Tape<T>, state: &LevelState) -> LevelTrace<T> {
        LevelTrace {
            indices: state.indices.clone(),
            frames: state
                .frames
                .iter()
                .map(|m| tapemath::mat3_vals(tape, m))
                .collect(),
            features: state
                .features
                .iter()
                .map(|row| row.iter().map(|&v| tape.val(v)).collect())
                .collect(),
        }
    }

    /// One forward run over a cloud. `frame_seed` drives random/constant
    /// frame sampling, degenerate fallbacks and dropout, so a fixed seed
    /// reproduces the run bit for bit.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        bound: &Bound,
        cloud: &PointCloud<T>,
        phase: Phase,
        frame_seed: u64,
        want_trace: bool,
    ) -> Result<ForwardResult<T>> {
        self.check_inputs(cloud)?;
        let n = cloud.len();
        let mut events = FrameEvents::default();
        let frames = self.build_frames(tape, bound, cloud, phase, frame_seed, &mut events);

        // canonicalize in
        let features: Vec<Vec<Value>> = match (&self.input_rep, cloud.feature("input")) {
            (Some(spec), Some(block)) => (0..n)
                .map(|i| canonicalize_row_values(tape, spec, &frames[i], block.row(i)))
                .collect(),
            _ => vec![Vec::new(); n],
        };
        let mut state = LevelState {
            indices: (0..n).collect(),
            frames,
            features,
            rep: self
                .input_rep
                .clone()
                .unwrap_or_else(|| RepSpec::empty(3)),
        };

        let mut trace = Trace::<T>::default();
        if want_trace {
            trace.stages.push(Self::snapshot(tape, &state));
        }

        let mut cache: Vec<LevelState> = Vec::new();
        let layer_configs: Vec<LayerConfig> = self.config.layers.clone();
        for (idx, layer_cfg) in layer_configs.iter().enumerate() {
            let out_rep = crate::reps::parse_rep_spec(&layer_cfg.rep, 3)?;
            let mut ctx = LayerCtx {
                tape,
                store: &self.store,
                bound,
                phase,
                radial_k: self.config.radial_k,
                events: &mut events,
            };
            match (&mut self.layers[idx], layer_cfg.kind) {
                (LayerNets::Message { phi, psi }, LayerKind::Message) => {
                    message_layer(
                        &mut ctx,
                        cloud,
                        &mut state,
                        T::of(layer_cfg.radius.unwrap()),
                        layer_cfg.mode,
                        layer_cfg.aggregation,
                        &out_rep,
                        phi,
                        psi,
                    )?;
                }
                (LayerNets::Encoder { phi }, LayerKind::Encoder) => {
                    cache.push(state.clone());
                    state = encoder_layer(
                        &mut ctx,
                        cloud,
                        &state,
                        T::of(layer_cfg.radius.unwrap()),
                        layer_cfg.fraction.unwrap(),
                        layer_cfg.mode,
                        layer_cfg.aggregation,
                        &out_rep,
                        phi,
                    )?;
                }
                (LayerNets::Decoder { mlp }, LayerKind::Decoder) => {
                    let target = cache.pop().ok_or(Error::Config {
                        layer: Some(idx),
                        msg: "decoder without cached encoder level".into(),
                    })?;
                    state = decoder_layer(
                        &mut ctx,
                        cloud,
                        &state,
                        &target,
                        layer_cfg.mode,
                        &out_rep,
                        mlp,
                    )?;
                }
                (LayerNets::Pool { phi }, LayerKind::Pool) => {
                    state = global_pool(
                        &mut ctx,
                        cloud,
                        &state,
                        T::of(layer_cfg.radius.unwrap()),
                        self.config.pool_anchor_farthest,
                        layer_cfg.mode,
                        layer_cfg.aggregation,
                        &out_rep,
                        phi,
                    )?;
                }
                _ => unreachable!("layer nets out of sync with config"),
            }
            if let Some(refine) = self.refines[idx].as_mut() {
                let dets = refine_frames_values(
                    tape,
                    &self.store,
                    bound,
                    refine,
                    &out_rep,
                    &mut state.frames,
                    &mut state.features,
                    frame_seed ^ (idx as u64 + 1),
                    phase,
                    &mut events,
                );
                trace.refine_dets.push(dets);
            }
            if want_trace {
                trace.stages.push(Self::snapshot(tape, &state));
            }
        }

        // output stage
        let mut rows = state.features.clone();
        if let Some(out_mlp) = self.output_mlp.as_mut() {
            let dropout = T::of(self.config.dropout);
            let mut drop_rng = seeded_rng(frame_seed ^ 0x64726f70_u64);
            let mut rng_opt: Option<&mut ChaCha8Rng> = Some(&mut drop_rng);
            rows = out_mlp.forward_batch_dropout(
                tape,
                &self.store,
                bound,
                &rows,
                phase,
                dropout,
                &mut rng_opt,
            );
        }
        let mut output = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != self.output_rep.width() {
                return Err(Error::WidthMismatch {
                    context: "pipeline output stage",
                    expected: self.output_rep.width(),
                    got: row.len(),
                });
            }
            let mut y = decanonicalize_row_values(tape, &self.output_rep, &state.frames[i], row);
            if self.config.normalize_output {
                let sq = tape.dot(&y, &y);
                let nrm = tape.sqrt(sq);
                let floor = tape.constant(T::of(1e-9));
                let guarded = tape.max(&[nrm, floor]);
                let inv = tape.recip(guarded);
                for v in y.iter_mut() {
                    *v = tape.mul(*v, inv);
                }
            }
            output.push(y);
        }

        trace.events = events;
        Ok(ForwardResult {
            node_ids: state.indices,
            output,
            trace: want_trace.then_some(trace),
        })
    }

    /// Reads the forward values of an output block into plain rows.
    pub fn read_output(tape: &Tape<T>, result: &ForwardResult<T>) -> Vec<Vec<T>> {
        result
            .output
            .iter()
            .map(|row| row.iter().map(|&v| tape.val(v)).collect())
            .collect()
    }

    /// Convenience: full evaluation run returning plain output rows.
    pub fn run(
        &mut self,
        cloud: &PointCloud<T>,
        frame_seed: u64,
    ) -> Result<(Vec<usize>, Vec<Vec<T>>)> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let res = self.forward(&mut tape, &bound, cloud, Phase::Eval, frame_seed, false)?;
        let rows = Self::read_output(&tape, &res);
        Ok((res.node_ids, rows))
    }

    /// As [`Pipeline::run`] but with the full stage trace.
    #[allow(clippy::type_complexity)]
    pub fn run_traced(
        &mut self,
        cloud: &PointCloud<T>,
        frame_seed: u64,
    ) -> Result<(Vec<usize>, Vec<Vec<T>>, Trace<T>)> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let res = self.forward(&mut tape, &bound, cloud, Phase::Eval, frame_seed, true)?;
        let rows = Self::read_output(&tape, &res);
        Ok((res.node_ids, rows, res.trace.unwrap()))
    }

    /// Snapshot of the frames the pipeline would use on this cloud.
    pub fn frames_for(&mut self, cloud: &PointCloud<T>, frame_seed: u64) -> Result<FrameSet<T>> {
        let mut tape = Tape::new();
        let bound = self.store.bind(&mut tape);
        let mut events = FrameEvents::default();
        let frames = self.build_frames(&mut tape, &bound, cloud, Phase::Eval, frame_seed, &mut events);
        let provenance = match self.config.frames.kind {
            FrameKind::Learned => Provenance::Learned,
            FrameKind::Pca => Provenance::Pca,
            FrameKind::Random => Provenance::Random,
            FrameKind::Constant => Provenance::Constant,
            FrameKind::Identity => Provenance::Identity,
        };
        Ok(FrameSet {
            frames: frames
                .iter()
                .map(|m| Orthogonal::new_unchecked(tapemath::mat3_vals(&tape, m), 3))
                .collect(),
            provenance,
        })
    }

    fn for_each_mlp_mut(&mut self, f: &mut dyn FnMut(&mut Mlp<T>)) {
        if let Some(m) = self.frame_phi.as_mut() {
            f(m);
        }
        for (nets, refine) in self.layers.iter_mut().zip(self.refines.iter_mut()) {
            match nets {
                LayerNets::Message { phi, psi } => {
                    f(phi);
                    f(psi);
                }
                LayerNets::Encoder { phi } | LayerNets::Pool { phi } => f(phi),
                LayerNets::Decoder { mlp } => f(mlp),
            }
            if let Some(r) = refine.as_mut() {
                f(r);
            }
        }
        if let Some(m) = self.output_mlp.as_mut() {
            f(m);
        }
    }

    /// Serializes running normalization statistics in traversal order.
    pub fn norm_states_json(&mut self) -> serde_json::Value {
        let mut all = Vec::new();
        self.for_each_mlp_mut(&mut |m| {
            let states: Vec<serde_json::Value> = m
                .norm_states()
                .iter()
                .map(|s| {
                    json!({
                        "mean": s.mean.iter().map(|x| x.as_f64()).collect::<Vec<f64>>(),
                        "var": s.var.iter().map(|x| x.as_f64()).collect::<Vec<f64>>(),
                    })
                })
                .collect();
            all.push(serde_json::Value::Array(states));
        });
        serde_json::Value::Array(all)
    }

    pub fn restore_norm_states_json(&mut self, v: &serde_json::Value) {
        let Some(per_mlp) = v.as_array() else { return };
        let mut idx = 0usize;
        self.for_each_mlp_mut(&mut |m| {
            if let Some(states) = per_mlp.get(idx).and_then(|s| s.as_array()) {
                let parsed: Vec<RunningStats<T>> = states
                    .iter()
                    .map(|s| RunningStats {
                        mean: s["mean"]
                            .as_array()
                            .map(|a| a.iter().map(|x| T::of(x.as_f64().unwrap())).collect())
                            .unwrap_or_default(),
                        var: s["var"]
                            .as_array()
                            .map(|a| a.iter().map(|x| T::of(x.as_f64().unwrap())).collect())
                            .unwrap_or_default(),
                    })
                    .collect();
                m.restore_norm_states(&parsed);
            }
            idx += 1;
        });
    }
}
