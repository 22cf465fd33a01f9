//! Parameter storage and the SiLU MLP with optional per-feature batch
//! standardization.

use rand::Rng;

use crate::netcore::tape::{Tape, Value};
use crate::scalar::Scalar;

/// Forward phase: training uses batch statistics (and dropout where
/// configured), evaluation uses running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Handle to a named parameter segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegId(usize);

#[derive(Debug, Clone)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// Flat trainable parameter vector with named segments.
#[derive(Debug, Clone, Default)]
pub struct ParamStore<T> {
    data: Vec<T>,
    segments: Vec<Segment>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { data: Vec::new(), segments: Vec::new() }
    }

    pub fn alloc(&mut self, name: &str, shape: &[usize], mut init: impl FnMut() -> T) -> SegId {
        let len: usize = shape.iter().product();
        let offset = self.data.len();
        self.data.extend((0..len).map(|_| init()));
        self.segments.push(Segment {
            name: name.to_string(),
            shape: shape.to_vec(),
            offset,
            len,
        });
        SegId(self.segments.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, id: SegId) -> &Segment {
        &self.segments[id.0]
    }

    pub fn seg_slice(&self, id: SegId) -> &[T] {
        let s = &self.segments[id.0];
        &self.data[s.offset..s.offset + s.len]
    }

    /// Pushes every parameter as an input node; index-aligned with `data`.
    pub fn bind(&self, tape: &mut Tape<T>) -> Bound {
        Bound {
            values: self.data.iter().map(|&x| tape.input(x)).collect(),
        }
    }

    /// Reads gradients for all parameters after a backward pass.
    pub fn gradients(&self, tape: &Tape<T>, bound: &Bound) -> Vec<T> {
        bound.values.iter().map(|&v| tape.grad(v)).collect()
    }
}

/// Tape handles for one binding of a [`ParamStore`].
pub struct Bound {
    pub values: Vec<Value>,
}

impl Bound {
    pub fn seg<'a, T: Scalar>(&'a self, store: &ParamStore<T>, id: SegId) -> &'a [Value] {
        let s = store.segment(id);
        &self.values[s.offset..s.offset + s.len]
    }
}

/// Glorot-uniform initializer: ±√(6/(fan_in+fan_out)).
pub fn glorot_uniform<T: Scalar, R: Rng>(rng: &mut R, fan_in: usize, fan_out: usize) -> T {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    T::of(rng.gen_range(-bound..bound))
}

const BN_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// Running statistics of one standardized layer.
#[derive(Debug, Clone)]
pub struct RunningStats<T> {
    pub mean: Vec<T>,
    pub var: Vec<T>,
}

impl<T: Scalar> RunningStats<T> {
    fn new(width: usize) -> Self {
        RunningStats {
            mean: vec![T::zero(); width],
            var: vec![T::one(); width],
        }
    }
}

struct Linear {
    w: SegId,
    b: SegId,
    in_w: usize,
    out_w: usize,
}

struct NormLayer<T> {
    scale: SegId,
    shift: SegId,
    stats: RunningStats<T>,
}

/// Affine–SiLU chain with a final affine layer (no activation). Hidden
/// layers optionally standardize per channel over the batch between the
/// affine map and the activation.
pub struct Mlp<T> {
    linears: Vec<Linear>,
    norms: Vec<Option<NormLayer<T>>>,
    in_w: usize,
    out_w: usize,
}

impl<T: Scalar> Mlp<T> {
    pub fn new<R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_w: usize,
        hidden: &[usize],
        out_w: usize,
        norm: bool,
    ) -> Self {
        let mut widths = vec![in_w];
        widths.extend_from_slice(hidden);
        widths.push(out_w);
        let mut linears = Vec::new();
        let mut norms = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fi, fo) = (widths[l], widths[l + 1]);
            let w = store.alloc(&format!("{name}.w{l}"), &[fo, fi], || {
                glorot_uniform(rng, fi, fo)
            });
            let b = store.alloc(&format!("{name}.b{l}"), &[fo], T::zero);
            linears.push(Linear { w, b, in_w: fi, out_w: fo });
            let is_hidden = l < widths.len() - 2;
            if norm && is_hidden {
                let scale = store.alloc(&format!("{name}.bn_scale{l}"), &[fo], T::one);
                let shift = store.alloc(&format!("{name}.bn_shift{l}"), &[fo], T::zero);
                norms.push(Some(NormLayer { scale, shift, stats: RunningStats::new(fo) }));
            } else {
                norms.push(None);
            }
        }
        Mlp { linears, norms, in_w, out_w }
    }

    pub fn in_width(&self) -> usize {
        self.in_w
    }

    pub fn out_width(&self) -> usize {
        self.out_w
    }

    /// Σ (w_in+1)·w_out over the affine stack.
    pub fn affine_param_count(&self) -> usize {
        self.linears.iter().map(|l| (l.in_w + 1) * l.out_w).sum()
    }

    pub fn param_count(&self) -> usize {
        self.affine_param_count()
            + self
                .norms
                .iter()
                .flatten()
                .map(|n| 2 * n.stats.mean.len())
                .sum::<usize>()
    }

    /// Runs the whole batch through the net; needed because batch
    /// standardization couples samples.
    pub fn forward_batch(
        &mut self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        bound: &Bound,
        inputs: &[Vec<Value>],
        phase: Phase,
    ) -> Vec<Vec<Value>> {
        let mut no_rng: Option<&mut rand_chacha::ChaCha8Rng> = None;
        self.forward_batch_dropout(tape, store, bound, inputs, phase, T::zero(), &mut no_rng)
    }

    /// As [`Mlp::forward_batch`] with inverted dropout on the hidden
    /// activations during training.
    #[allow(clippy::too_many_arguments)]
    pub fn forward_batch_dropout<R: rand::Rng>(
        &mut self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        bound: &Bound,
        inputs: &[Vec<Value>],
        phase: Phase,
        dropout: T,
        rng: &mut Option<&mut R>,
    ) -> Vec<Vec<Value>> {
        let n_layers = self.linears.len();
        let drop = phase == Phase::Train && dropout > T::zero();
        let keep_scale = if drop {
            T::one() / (T::one() - dropout)
        } else {
            T::one()
        };
        let mut cur: Vec<Vec<Value>> = inputs.to_vec();
        for l in 0..n_layers {
            let lin = &self.linears[l];
            let w = bound.seg(store, lin.w);
            let b = bound.seg(store, lin.b);
            let mut next: Vec<Vec<Value>> = Vec::with_capacity(cur.len());
            for x in &cur {
                assert_eq!(x.len(), lin.in_w, "mlp input width mismatch");
                let mut row = Vec::with_capacity(lin.out_w);
                for o in 0..lin.out_w {
                    row.push(tape.affine(&w[o * lin.in_w..(o + 1) * lin.in_w], x, b[o]));
                }
                next.push(row);
            }
            if let Some(norm) = self.norms[l].as_mut() {
                let scale = bound.seg(store, norm.scale).to_vec();
                let shift = bound.seg(store, norm.shift).to_vec();
                batch_standardize(tape, &mut next, &scale, &shift, &mut norm.stats, phase);
            }
            let last = l + 1 == n_layers;
            if !last {
                for row in &mut next {
                    for v in row.iter_mut() {
                        *v = tape.silu(*v);
                        if drop {
                            let rng = rng.as_mut().expect("dropout needs a generator");
                            let factor = if T::of(rng.gen::<f64>()) < dropout {
                                T::zero()
                            } else {
                                keep_scale
                            };
                            *v = tape.scale(*v, factor);
                        }
                    }
                }
            }
            cur = next;
        }
        cur
    }

    /// Single-sample convenience wrapper.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        store: &ParamStore<T>,
        bound: &Bound,
        input: &[Value],
        phase: Phase,
    ) -> Vec<Value> {
        self.forward_batch(tape, store, bound, &[input.to_vec()], phase)
            .pop()
            .unwrap()
    }

    /// Snapshot of running statistics (for checkpoints).
    pub fn norm_states(&self) -> Vec<RunningStats<T>> {
        self.norms
            .iter()
            .flatten()
            .map(|n| n.stats.clone())
            .collect()
    }

    pub fn restore_norm_states(&mut self, states: &[RunningStats<T>]) {
        let mut it = states.iter();
        for n in self.norms.iter_mut().flatten() {
            if let Some(s) = it.next() {
                n.stats = s.clone();
            }
        }
    }
}

/// Per-channel batch standardization: (x − mean)/√(var + 1e-5) with
/// learnable scale and shift. A batch of one falls back to the running
/// statistics; training mode updates them from batch statistics.
pub fn batch_standardize<T: Scalar>(
    tape: &mut Tape<T>,
    batch: &mut [Vec<Value>],
    scale: &[Value],
    shift: &[Value],
    stats: &mut RunningStats<T>,
    phase: Phase,
) {
    let b = batch.len();
    if b == 0 {
        return;
    }
    let width = batch[0].len();
    let eps = T::of(BN_EPS);
    let use_batch_stats = phase == Phase::Train && b >= 2;
    for c in 0..width {
        let column: Vec<Value> = batch.iter().map(|row| row[c]).collect();
        if use_batch_stats {
            let total = tape.sum(&column);
            let mean = tape.scale(total, T::one() / T::of(b as f64));
            let devs: Vec<Value> = column.iter().map(|&x| tape.sub(x, mean)).collect();
            let ss = tape.dot(&devs, &devs);
            let var = tape.scale(ss, T::one() / T::of(b as f64));
            let var_eps = tape.add_const(var, eps);
            let std = tape.sqrt(var_eps);
            let inv = tape.recip(std);
            for (row, &dev) in batch.iter_mut().zip(&devs) {
                row[c] = tape.norm_affine(dev, inv, scale[c], shift[c]);
            }
            let m = T::of(BN_MOMENTUM);
            stats.mean[c] = (T::one() - m) * stats.mean[c] + m * tape.val(mean);
            stats.var[c] = (T::one() - m) * stats.var[c] + m * tape.val(var);
        } else {
            let inv_val = T::one() / (stats.var[c] + eps).sqrt();
            let mean = tape.constant(stats.mean[c]);
            let inv = tape.constant(inv_val);
            for row in batch.iter_mut() {
                let dev = tape.sub(row[c], mean);
                row[c] = tape.norm_affine(dev, inv, scale[c], shift[c]);
            }
        }
    }
}
