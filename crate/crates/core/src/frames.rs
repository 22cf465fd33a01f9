//! Per-node equivariant local frames: the smooth envelope, learned
//! two-vector prediction, Gram-Schmidt completion with handedness fixing
//! via the local center of mass, PCA and random frames, and the
//! refinement update applied between message passing layers.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Graph, PointCloud};
use crate::linalg;
use crate::netcore::mlp::{Bound, Mlp, ParamStore, Phase};
use crate::netcore::tape::{Tape, Value};
use crate::reps::{Group, Orthogonal, Parity, RepSpec};
use crate::scalar::Scalar;
use crate::tapemath::{self, Mat3v, Vec3v};

/// How a frame set was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Learned,
    Pca,
    Random,
    Constant,
    Identity,
}

/// N per-node orthogonal matrices; rows are the local basis vectors, so
/// the matrix maps global coordinates into the local frame.
#[derive(Debug, Clone)]
pub struct FrameSet<T> {
    pub frames: Vec<Orthogonal<T>>,
    pub provenance: Provenance,
}

impl<T: Scalar> FrameSet<T> {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Row-major 3×3 per node, the JSON report layout.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<Vec<f64>> = self
            .frames
            .iter()
            .map(|f| f.entries().iter().map(|x| x.as_f64()).collect())
            .collect();
        serde_json::json!({
            "provenance": serde_json::to_value(self.provenance).unwrap(),
            "frames": rows,
        })
    }
}

/// Smooth cutoff polynomial: 1 at r = 0, zero value and slope at r = r_c.
pub fn envelope<T: Scalar>(r: T, r_c: T, p: u32) -> T {
    debug_assert!(p >= 1);
    if r >= r_c {
        return T::zero();
    }
    let pf = T::of(p as f64);
    let x = r / r_c;
    let xp = x.powi(p as i32);
    let c1 = (pf + T::one()) * (pf + T::of(2.0)) / T::of(2.0);
    let c2 = pf * (pf + T::of(2.0));
    let c3 = pf * (pf + T::one()) / T::of(2.0);
    T::one() - c1 * xp + c2 * xp * x - c3 * xp * x * x
}

fn orthonormal_tol<T: Scalar>() -> T {
    T::of(1e-9).max(T::epsilon() * T::of(1024.0))
}

/// Relative degeneracy threshold for Gram-Schmidt: 1e-8 × max(‖v1‖,‖v2‖,1).
fn parallel_eps<T: Scalar>(n1: T, n2: T) -> T {
    T::of(1e-8) * n1.max(n2).max(T::one())
}

fn random_unit3<T: Scalar, R: Rng>(rng: &mut R) -> [T; 3] {
    loop {
        let v: [T; 3] = [
            T::of(rng.gen::<f64>() * 2.0 - 1.0),
            T::of(rng.gen::<f64>() * 2.0 - 1.0),
            T::of(rng.gen::<f64>() * 2.0 - 1.0),
        ];
        let n = linalg::norm(&v);
        if n > T::of(0.1) && n <= T::one() {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Orthonormalizes (v1, v2): n1 = v1/‖v1‖, n2 = normalized rejection of
/// v2 from n1. Degenerate inputs (zero v1 or near-parallel pair) are
/// replaced by directions from the seeded generator and the procedure is
/// redone, so the result is always orthonormal.
pub fn gram_schmidt_pair<T: Scalar, R: Rng>(
    v1: &[T],
    v2: &[T],
    rng: &mut R,
) -> ([T; 3], [T; 3], bool) {
    let mut v1 = [v1[0], v1[1], v1[2]];
    let mut v2 = [v2[0], v2[1], v2[2]];
    let eps = parallel_eps(linalg::norm(&v1), linalg::norm(&v2));
    let mut degenerate = false;
    if linalg::norm(&v1) < eps {
        v1 = random_unit3(rng);
        degenerate = true;
    }
    let n1v = linalg::norm(&v1);
    let n1 = [v1[0] / n1v, v1[1] / n1v, v1[2] / n1v];
    for _ in 0..16 {
        let proj = linalg::dot(&n1, &v2);
        let rej = [v2[0] - proj * n1[0], v2[1] - proj * n1[1], v2[2] - proj * n1[2]];
        let rn = linalg::norm(&rej);
        if rn >= eps {
            let mut n2 = [rej[0] / rn, rej[1] / rn, rej[2] / rn];
            // second rejection pass recovers full precision when v2 was
            // nearly parallel to n1
            let p2 = linalg::dot(&n1, &n2);
            n2 = [n2[0] - p2 * n1[0], n2[1] - p2 * n1[1], n2[2] - p2 * n1[2]];
            let rn2 = linalg::norm(&n2);
            return (n1, [n2[0] / rn2, n2[1] / rn2, n2[2] / rn2], degenerate);
        }
        v2 = random_unit3(rng);
        degenerate = true;
    }
    // A random direction parallel to n1 has measure zero; the loop bound
    // is unreachable in practice but keeps the function total.
    let fallback = if n1[0].abs() < T::of(0.9) {
        [T::one(), T::zero(), T::zero()]
    } else {
        [T::zero(), T::one(), T::zero()]
    };
    let proj = linalg::dot(&n1, &fallback);
    let rej = [
        fallback[0] - proj * n1[0],
        fallback[1] - proj * n1[1],
        fallback[2] - proj * n1[2],
    ];
    let rn = linalg::norm(&rej);
    (n1, [rej[0] / rn, rej[1] / rn, rej[2] / rn], true)
}

/// Completes an orthonormal pair to a frame: n3 = ±(n1 × n2), the sign
/// chosen so n3 points into the half space of the local center of mass
/// (non-strict: a zero dot keeps +n1×n2). Rows are (n1, n2, n3).
pub fn complete_frame<T: Scalar>(n1: &[T], n2: &[T], r_bar: &[T]) -> Result<Orthogonal<T>> {
    let tol = orthonormal_tol::<T>();
    if (linalg::norm(n1) - T::one()).abs() > tol || (linalg::norm(n2) - T::one()).abs() > tol {
        return Err(Error::NotOrthonormal("inputs are not unit vectors".into()));
    }
    if linalg::dot(n1, n2).abs() > tol {
        return Err(Error::NotOrthonormal("inputs are not orthogonal".into()));
    }
    let c = linalg::cross3(n1, n2);
    let flip = linalg::dot(&c, r_bar) < T::zero();
    let s = if flip { -T::one() } else { T::one() };
    let entries = vec![
        n1[0], n1[1], n1[2], n2[0], n2[1], n2[2], s * c[0], s * c[1], s * c[2],
    ];
    Ok(Orthogonal::new_unchecked(entries, 3))
}

/// Deterministic per-node stream so degenerate fallbacks are reproducible
/// and independent of scheduling.
pub fn node_rng(seed: u64, node: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ (node as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Per-node independent Haar samples.
pub fn build_random_frames<T: Scalar, R: Rng>(n: usize, rng: &mut R, group: Group) -> FrameSet<T> {
    let frames = (0..n)
        .map(|_| crate::reps::random_orthogonal(rng, group, 3))
        .collect();
    FrameSet { frames, provenance: Provenance::Random }
}

/// One shared matrix for every node; identity frames via R̃ = I.
pub fn build_constant_frames<T: Scalar>(n: usize, shared: &Orthogonal<T>) -> FrameSet<T> {
    let identity = shared
        .entries()
        .iter()
        .zip(Orthogonal::<T>::identity(shared.dim()).entries())
        .all(|(a, b)| *a == *b);
    FrameSet {
        frames: vec![shared.clone(); n],
        provenance: if identity { Provenance::Identity } else { Provenance::Constant },
    }
}

/// PCA frames: eigenvectors of Σ_j (x_i−x_j)(x_i−x_j)ᵀ sorted by
/// descending eigenvalue, each sign fixed toward Σ_j e·(x_i−x_j) > 0 with
/// zero-sum ties resolved toward a positive first nonzero component.
pub fn build_pca_frames<T: Scalar>(cloud: &PointCloud<T>, graph: &Graph<T>) -> FrameSet<T> {
    assert_eq!(cloud.dim(), 3, "PCA frames are built for d=3");
    let mut frames = Vec::with_capacity(cloud.len());
    for i in 0..cloud.len() {
        let mut cov = [T::zero(); 9];
        let mut scale = T::zero();
        for e in graph.edges(i) {
            // rel = x_j − x_i, covariance uses x_i − x_j; the sign cancels.
            for a in 0..3 {
                for b in 0..3 {
                    cov[a * 3 + b] += e.rel[a] * e.rel[b];
                }
            }
            scale = scale.max(e.dist);
        }
        let (_vals, mut rows) = linalg::sym_eigen_desc(&cov, 3);
        for k in 0..3 {
            let e = [rows[k * 3], rows[k * 3 + 1], rows[k * 3 + 2]];
            let mut s = T::zero();
            let mut mag = T::zero();
            for edge in graph.edges(i) {
                let d = -linalg::dot(&e, edge.rel); // e · (x_i − x_j)
                s += d;
                mag += d.abs();
            }
            let tie_tol = mag.max(scale).max(T::one()) * T::of(1e-12);
            let flip = if s.abs() <= tie_tol {
                let first = e
                    .iter()
                    .find(|x| x.abs() > T::epsilon() * T::of(64.0))
                    .copied()
                    .unwrap_or(T::one());
                first < T::zero()
            } else {
                s < T::zero()
            };
            if flip {
                for c in 0..3 {
                    rows[k * 3 + c] = -rows[k * 3 + c];
                }
            }
        }
        frames.push(Orthogonal::new_unchecked(rows, 3));
    }
    FrameSet { frames, provenance: Provenance::Pca }
}

/// Mean Frobenius distance and per-axis mean row cosines between two
/// frame sets over the same nodes.
pub fn frame_stability_metrics<T: Scalar>(
    a: &FrameSet<T>,
    b: &FrameSet<T>,
) -> Result<(T, Vec<T>)> {
    if a.len() != b.len() {
        return Err(Error::WidthMismatch {
            context: "frame_stability_metrics: node counts",
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Ok((T::zero(), vec![T::one(); 3]));
    }
    let n = T::of(a.len() as f64);
    let mut frob = T::zero();
    let mut cos = [T::zero(); 3];
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        let mut sq = T::zero();
        for (x, y) in fa.entries().iter().zip(fb.entries()) {
            let d = *x - *y;
            sq += d * d;
        }
        frob += sq.sqrt();
        for (k, c) in cos.iter_mut().enumerate() {
            *c += linalg::dot(fa.row(k), fb.row(k));
        }
    }
    Ok((frob / n, cos.iter().map(|&c| c / n).collect()))
}

// --- tape-valued construction (differentiable w.r.t. the frame net) -----

/// Bookkeeping of degenerate events during frame construction.
#[derive(Debug, Clone, Copy, Default)]
pub struct FrameEvents {
    pub degenerate_gram_schmidt: usize,
    pub degenerate_refinement: usize,
    pub empty_neighborhoods: usize,
}

/// Tape version of [`gram_schmidt_pair`]. Degeneracy is decided on the
/// forward values; substituted random directions enter as constants, so
/// no gradient flows through the fallback branch.
pub fn gram_schmidt_pair_values<T: Scalar>(
    tape: &mut Tape<T>,
    v1: Vec3v,
    v2: Vec3v,
    rng: &mut ChaCha8Rng,
    events: &mut FrameEvents,
) -> (Vec3v, Vec3v) {
    let read3 = |tape: &Tape<T>, v: &Vec3v| [tape.val(v[0]), tape.val(v[1]), tape.val(v[2])];
    let mag1 = linalg::norm(&read3(tape, &v1));
    let mag2 = linalg::norm(&read3(tape, &v2));
    let eps = parallel_eps(mag1, mag2);
    let mut v1 = v1;
    let mut v2 = v2;
    if mag1 < eps {
        let r = random_unit3::<T, _>(rng);
        v1 = tapemath::vec3_const(tape, &r);
        events.degenerate_gram_schmidt += 1;
    }
    let n1v = tapemath::norm3(tape, &v1);
    let inv1 = tape.recip(n1v);
    let n1 = tapemath::scale3(tape, &v1, inv1);
    loop {
        let proj = tapemath::dot3(tape, &n1, &v2);
        let scaled = tapemath::scale3(tape, &n1, proj);
        let rej = tapemath::sub3(tape, &v2, &scaled);
        let rn = linalg::norm(&read3(tape, &rej));
        if rn >= eps {
            let rnv = tapemath::norm3(tape, &rej);
            let inv2 = tape.recip(rnv);
            let n2 = tapemath::scale3(tape, &rej, inv2);
            // second rejection pass, as in the plain version
            let p2 = tapemath::dot3(tape, &n1, &n2);
            let s2 = tapemath::scale3(tape, &n1, p2);
            let rej2 = tapemath::sub3(tape, &n2, &s2);
            let rnv2 = tapemath::norm3(tape, &rej2);
            let inv3 = tape.recip(rnv2);
            return (n1, tapemath::scale3(tape, &rej2, inv3));
        }
        let r = random_unit3::<T, _>(rng);
        v2 = tapemath::vec3_const(tape, &r);
        events.degenerate_gram_schmidt += 1;
    }
}

/// Tape version of [`complete_frame`]; the handedness decision is read
/// from forward values and applied as a constant sign (piecewise-constant
/// branch, no gradient through the sign).
pub fn complete_frame_values<T: Scalar>(
    tape: &mut Tape<T>,
    n1: Vec3v,
    n2: Vec3v,
    r_bar: &[T],
) -> Mat3v {
    let c = tapemath::cross3(tape, &n1, &n2);
    let cv = [tape.val(c[0]), tape.val(c[1]), tape.val(c[2])];
    let flip = linalg::dot(&cv, r_bar) < T::zero();
    let n3 = if flip {
        [tape.neg(c[0]), tape.neg(c[1]), tape.neg(c[2])]
    } else {
        c
    };
    [n1, n2, n3]
}

/// Inputs consumed by the frame net φ for one edge: the even scalars of
/// both endpoint features plus the distance.
pub fn frame_phi_input<T: Scalar>(
    self_scalars: &[T],
    neighbor_scalars: &[T],
    dist: T,
) -> Vec<T> {
    let mut out = Vec::with_capacity(self_scalars.len() + neighbor_scalars.len() + 1);
    out.extend_from_slice(self_scalars);
    out.extend_from_slice(neighbor_scalars);
    out.push(dist);
    out
}

/// Expected φ input width for a given input representation.
pub fn frame_phi_width(input_rep: Option<&RepSpec>) -> usize {
    let scalars = input_rep.map_or(0, |s| s.even_scalar_columns().len());
    2 * scalars + 1
}

/// Learned two-vector prediction for every node: envelope-weighted sums
/// of normalized edge directions with MLP weights, followed by
/// Gram-Schmidt and handedness completion against the local center of
/// mass. Differentiable w.r.t. the
/// φ parameters. Returns tape-valued frames.
#[allow(clippy::too_many_arguments)]
pub fn build_learned_frames_values<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    bound: &Bound,
    phi: &mut Mlp<T>,
    cloud: &PointCloud<T>,
    graph: &Graph<T>,
    input_rep: Option<&RepSpec>,
    envelope_p: u32,
    fallback_seed: u64,
    phase: Phase,
    events: &mut FrameEvents,
) -> Vec<Mat3v> {
    let n = cloud.len();
    let scalar_cols = input_rep.map_or(Vec::new(), |s| s.even_scalar_columns());
    let feat = input_rep.and_then(|_| cloud.feature("input"));
    let scalars_of = |i: usize| -> Vec<T> {
        match feat {
            Some(block) => scalar_cols.iter().map(|&c| block.row(i)[c]).collect(),
            None => Vec::new(),
        }
    };

    // Batch φ over every edge of the graph.
    let mut inputs = Vec::with_capacity(graph.edge_count());
    let mut edge_nodes = Vec::with_capacity(graph.edge_count());
    for i in 0..n {
        let si = scalars_of(i);
        for e in graph.edges(i) {
            inputs.push(frame_phi_input(&si, &scalars_of(e.to), e.dist));
            edge_nodes.push(i);
        }
    }
    let input_values: Vec<Vec<Value>> = inputs.iter().map(|x| tape.constants(x)).collect();
    let phi_out = if input_values.is_empty() {
        Vec::new()
    } else {
        phi.forward_batch(tape, store, bound, &input_values, phase)
    };

    let r_c = graph.cutoff();
    let mut frames = Vec::with_capacity(n);
    let mut cursor = 0usize;
    for i in 0..n {
        let deg = graph.degree(i);
        let mut w_units: Vec<[T; 3]> = Vec::with_capacity(deg);
        for e in graph.edges(i) {
            // unit(x_i − x_j) = −rel/dist, weighted by the envelope.
            let w = envelope(e.dist, r_c, envelope_p);
            let inv = w / e.dist;
            w_units.push([-e.rel[0] * inv, -e.rel[1] * inv, -e.rel[2] * inv]);
        }
        let mut v = [[tape.constant(T::zero()); 3]; 2];
        if deg > 0 {
            for (k, vk) in v.iter_mut().enumerate() {
                let weights: Vec<Value> =
                    (0..deg).map(|e| phi_out[cursor + e][k]).collect();
                for (c, out) in vk.iter_mut().enumerate() {
                    let dirs: Vec<Value> =
                        w_units.iter().map(|u| tape.constant(u[c])).collect();
                    *out = tape.dot(&weights, &dirs);
                }
            }
        } else {
            events.empty_neighborhoods += 1;
        }
        let mut rng = node_rng(fallback_seed, i);
        let (n1, n2) = gram_schmidt_pair_values(tape, v[0], v[1], &mut rng, events);
        let r_bar = crate::geometry::local_center_of_mass(graph, i, |r| {
            envelope(r, r_c, envelope_p)
        });
        frames.push(complete_frame_values(tape, n1, n2, &r_bar));
        cursor += deg;
    }
    frames
}

/// Learned two-vector prediction for a single node; the per-node slice of
/// [`build_learned_frames_values`], exposed for direct inspection.
#[allow(clippy::too_many_arguments)]
pub fn learned_frame_vectors<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    bound: &Bound,
    phi: &mut Mlp<T>,
    cloud: &PointCloud<T>,
    graph: &Graph<T>,
    input_rep: Option<&RepSpec>,
    node: usize,
    envelope_p: u32,
    phase: Phase,
) -> (Vec3v, Vec3v) {
    let scalar_cols = input_rep.map_or(Vec::new(), |s| s.even_scalar_columns());
    let feat = input_rep.and_then(|_| cloud.feature("input"));
    let scalars_of = |i: usize| -> Vec<T> {
        match feat {
            Some(block) => scalar_cols.iter().map(|&c| block.row(i)[c]).collect(),
            None => Vec::new(),
        }
    };
    let si = scalars_of(node);
    let r_c = graph.cutoff();
    let mut inputs = Vec::new();
    let mut w_units = Vec::new();
    for e in graph.edges(node) {
        inputs.push(frame_phi_input(&si, &scalars_of(e.to), e.dist));
        let w = envelope(e.dist, r_c, envelope_p);
        let inv = w / e.dist;
        w_units.push([-e.rel[0] * inv, -e.rel[1] * inv, -e.rel[2] * inv]);
    }
    let mut v = [[tape.constant(T::zero()); 3]; 2];
    if !inputs.is_empty() {
        let input_values: Vec<Vec<Value>> = inputs.iter().map(|x| tape.constants(x)).collect();
        let phi_out = phi.forward_batch(tape, store, bound, &input_values, phase);
        for (k, vk) in v.iter_mut().enumerate() {
            let weights: Vec<Value> = phi_out.iter().map(|o| o[k]).collect();
            for (c, out) in vk.iter_mut().enumerate() {
                let dirs: Vec<Value> = w_units.iter().map(|u| tape.constant(u[c])).collect();
                *out = tape.dot(&weights, &dirs);
            }
        }
    }
    (v[0], v[1])
}

/// Snapshot helper: builds learned frames and reads them into a plain
/// [`FrameSet`] (same code path as the differentiable builder).
#[allow(clippy::too_many_arguments)]
pub fn build_learned_frames<T: Scalar>(
    store: &ParamStore<T>,
    phi: &mut Mlp<T>,
    cloud: &PointCloud<T>,
    graph: &Graph<T>,
    input_rep: Option<&RepSpec>,
    envelope_p: u32,
    fallback_seed: u64,
) -> (FrameSet<T>, FrameEvents) {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let mut events = FrameEvents::default();
    let frames = build_learned_frames_values(
        &mut tape,
        store,
        &bound,
        phi,
        cloud,
        graph,
        input_rep,
        envelope_p,
        fallback_seed,
        Phase::Eval,
        &mut events,
    );
    let set = FrameSet {
        frames: frames
            .iter()
            .map(|m| Orthogonal::new_unchecked(tapemath::mat3_vals(&tape, m), 3))
            .collect(),
        provenance: Provenance::Learned,
    };
    (set, events)
}

/// Frame refinement: an MLP on the invariant features predicts six
/// numbers, Gram-Schmidt plus cross product build U ∈ SO(3) (no
/// handedness flip), frames update R ← U·R and features re-express by
/// ρ_f(U). Returns the det(U) forward values for auditing.
#[allow(clippy::too_many_arguments)]
pub fn refine_frames_values<T: Scalar>(
    tape: &mut Tape<T>,
    store: &ParamStore<T>,
    bound: &Bound,
    refine_mlp: &mut Mlp<T>,
    spec: &RepSpec,
    frames: &mut [Mat3v],
    features: &mut [Vec<Value>],
    fallback_seed: u64,
    phase: Phase,
    events: &mut FrameEvents,
) -> Vec<T> {
    assert_eq!(frames.len(), features.len());
    if frames.is_empty() {
        return Vec::new();
    }
    let outs = refine_mlp.forward_batch(tape, store, bound, features, phase);
    let has_pseudo = spec.terms().iter().any(|t| t.parity == Parity::Pseudo);
    let mut dets = Vec::with_capacity(frames.len());
    for (i, out) in outs.iter().enumerate() {
        let u1 = [out[0], out[1], out[2]];
        let u2 = [out[3], out[4], out[5]];
        let mut rng = node_rng(fallback_seed.wrapping_add(0x5eed), i);
        let before = events.degenerate_gram_schmidt;
        let (n1, n2) = gram_schmidt_pair_values(tape, u1, u2, &mut rng, events);
        events.degenerate_refinement += events.degenerate_gram_schmidt - before;
        events.degenerate_gram_schmidt = before;
        let n3 = tapemath::cross3(tape, &n1, &n2);
        let u: Mat3v = [n1, n2, n3];
        let det = tapemath::det3(tape, &u);
        dets.push(tape.val(det));
        frames[i] = tapemath::matmul3(tape, &u, &frames[i]);
        let det_node = if has_pseudo { Some(det) } else { None };
        features[i] = tapemath::apply_rep_values(tape, spec, &u, det_node, &features[i]);
    }
    dets
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::radius_graph;
    use crate::reps::{parse_rep_spec, random_orthogonal, seeded_rng};

    #[test]
    fn envelope_pins() {
        assert_eq!(envelope(0.0f64, 1.0, 5), 1.0);
        assert_eq!(envelope(1.0f64, 1.0, 5), 0.0);
        assert_eq!(envelope(1.5f64, 1.0, 5), 0.0);
        // exact dyadic evaluation at r_c/2
        assert_eq!(envelope(0.5f64, 1.0, 5), 99.0 / 128.0);
    }

    #[test]
    fn envelope_smooth_at_cutoff() {
        let h = 1e-6;
        let w = |r: f64| envelope(r, 1.0, 5);
        assert!(w(1.0 - 1e-9) < 1e-4);
        let slope = (w(1.0 - h) - w(1.0 - 2.0 * h)) / h;
        assert!(slope.abs() < 1e-4, "slope {slope}");
    }

    #[test]
    fn gram_schmidt_examples() {
        let mut rng = seeded_rng(1);
        let (n1, n2, deg) = gram_schmidt_pair(&[2.0f64, 0.0, 0.0], &[1.0, 1.0, 0.0], &mut rng);
        assert!(!deg);
        assert_eq!(n1, [1.0, 0.0, 0.0]);
        assert!((n2[0]).abs() < 1e-15 && (n2[1] - 1.0).abs() < 1e-15);

        let (n1, n2, _) = gram_schmidt_pair(&[0.0f64, 3.0, 4.0], &[0.0, 0.0, 1.0], &mut rng);
        assert!((n1[1] - 0.6).abs() < 1e-15 && (n1[2] - 0.8).abs() < 1e-15);
        assert!((n2[1] + 0.8).abs() < 1e-12 && (n2[2] - 0.6).abs() < 1e-12);
    }

    #[test]
    fn gram_schmidt_parallel_falls_back_deterministically() {
        let mut a = seeded_rng(9);
        let mut b = seeded_rng(9);
        let (n1a, n2a, dega) = gram_schmidt_pair(&[1.0f64, 1.0, 0.0], &[2.0, 2.0, 0.0], &mut a);
        let (n1b, n2b, _) = gram_schmidt_pair(&[1.0, 1.0, 0.0], &[2.0, 2.0, 0.0], &mut b);
        assert!(dega);
        assert_eq!(n2a, n2b);
        assert!(linalg::dot(&n1a, &n2a).abs() < 1e-12);
        assert_eq!(n1a, n1b);
    }

    #[test]
    fn complete_frame_handedness() {
        let e1 = [1.0f64, 0.0, 0.0];
        let e2 = [0.0f64, 1.0, 0.0];
        let f = complete_frame(&e1, &e2, &[0.0, 0.0, 2.0]).unwrap();
        assert_eq!(f.row(2), &[0.0, 0.0, 1.0]);
        assert!((f.det() - 1.0).abs() < 1e-15);

        let f = complete_frame(&e1, &e2, &[0.0, 0.0, -2.0]).unwrap();
        assert_eq!(f.row(2), &[0.0, 0.0, -1.0]);
        assert!((f.det() + 1.0).abs() < 1e-15);

        // boundary: zero dot keeps +n1×n2
        let f = complete_frame(&e1, &e2, &[0.7, -0.3, 0.0]).unwrap();
        assert_eq!(f.row(2), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn complete_frame_rejects_bad_inputs() {
        assert!(complete_frame(&[2.0f64, 0.0, 0.0], &[0.0, 1.0, 0.0], &[0.0; 3]).is_err());
        assert!(complete_frame(&[1.0f64, 0.0, 0.0], &[0.7, 0.7, 0.0], &[0.0; 3]).is_err());
    }

    #[test]
    fn constant_frames_share_matrix() {
        let mut rng = seeded_rng(4);
        let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        let set = build_constant_frames(5, &r);
        assert_eq!(set.provenance, Provenance::Constant);
        for f in &set.frames {
            assert_eq!(f.entries(), r.entries());
        }
        let id = build_constant_frames::<f64>(3, &Orthogonal::identity(3));
        assert_eq!(id.provenance, Provenance::Identity);
    }

    #[test]
    fn random_frames_reproducible_and_special() {
        let mut a = seeded_rng(5);
        let mut b = seeded_rng(5);
        let fa = build_random_frames::<f64, _>(4, &mut a, Group::SpecialOrthogonal);
        let fb = build_random_frames::<f64, _>(4, &mut b, Group::SpecialOrthogonal);
        for (x, y) in fa.frames.iter().zip(&fb.frames) {
            assert_eq!(x.entries(), y.entries());
            assert!((x.det() - 1.0).abs() < 1e-12);
        }
    }

    fn scattered_cloud(n: usize, seed: u64) -> PointCloud<f64> {
        use rand::Rng;
        let mut rng = seeded_rng(seed);
        let pts: Vec<f64> = (0..3 * n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        PointCloud::new(pts, 3).unwrap()
    }

    #[test]
    fn pca_frames_equivariant() {
        // Generic positions with enough neighbors per node: the sign rule
        // has clear margins, so the transform law holds. Near-coplanar
        // neighborhoods have no equivariant sign choice at all.
        let cloud = scattered_cloud(48, 41);
        let graph = radius_graph(&cloud, 1.5);
        for i in 0..cloud.len() {
            assert!(graph.degree(i) >= 4, "test cloud too sparse at node {i}");
        }
        let frames = build_pca_frames(&cloud, &graph);
        let mut rng = seeded_rng(6);
        for _ in 0..5 {
            let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
            let moved: Vec<f64> = (0..cloud.len())
                .flat_map(|i| r.apply_vec(cloud.position(i)))
                .collect();
            let cloud2 = PointCloud::new(moved, 3).unwrap();
            let graph2 = radius_graph(&cloud2, 1.5);
            let frames2 = build_pca_frames(&cloud2, &graph2);
            for i in 0..cloud.len() {
                let expect = frames.frames[i].matmul(&r.transpose());
                for (a, b) in frames2.frames[i].entries().iter().zip(expect.entries()) {
                    assert!((a - b).abs() < 1e-8, "law violation {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn pca_coplanar_third_axis_is_plane_normal() {
        // points in the z=0 plane around the origin
        let pts = [
            [0.0f64, 0.0, 0.0],
            [0.3, 0.1, 0.0],
            [-0.2, 0.25, 0.0],
            [0.1, -0.3, 0.0],
            [-0.25, -0.15, 0.0],
        ];
        let cloud = PointCloud::new(pts.iter().flatten().copied().collect(), 3).unwrap();
        let graph = radius_graph(&cloud, 1.0);
        let frames = build_pca_frames(&cloud, &graph);
        let third = frames.frames[0].row(2);
        assert!(third[0].abs() < 1e-12 && third[1].abs() < 1e-12);
        assert!((third[2].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pca_degenerate_simplex_stays_orthonormal() {
        // regular tetrahedron around a center node: isotropic covariance
        let s = 0.4;
        let pts = [
            [0.0f64, 0.0, 0.0],
            [s, s, s],
            [s, -s, -s],
            [-s, s, -s],
            [-s, -s, s],
        ];
        let cloud = PointCloud::new(pts.iter().flatten().copied().collect(), 3).unwrap();
        let graph = radius_graph(&cloud, 2.0);
        let frames = build_pca_frames(&cloud, &graph);
        for f in &frames.frames {
            assert!(linalg::orthogonality_residual(f.entries(), 3) < 1e-10);
        }
    }

    #[test]
    fn stability_metrics_cases() {
        let mut rng = seeded_rng(8);
        let set = build_random_frames::<f64, _>(6, &mut rng, Group::Orthogonal);
        let (frob, cos) = frame_stability_metrics(&set, &set).unwrap();
        assert_eq!(frob, 0.0);
        for c in &cos {
            assert!((c - 1.0).abs() < 1e-12);
        }

        let negated = FrameSet {
            frames: set
                .frames
                .iter()
                .map(|f| {
                    Orthogonal::new_unchecked(f.entries().iter().map(|x| -x).collect(), 3)
                })
                .collect(),
            provenance: Provenance::Random,
        };
        let (frob, cos) = frame_stability_metrics(&set, &negated).unwrap();
        assert!((frob - 2.0 * 3.0f64.sqrt()).abs() < 1e-12);
        for c in &cos {
            assert!((c + 1.0).abs() < 1e-12);
        }

        // rotate every frame by 180° about its first axis: rows 2,3 negate
        let half_turn = FrameSet {
            frames: set
                .frames
                .iter()
                .map(|f| {
                    let mut e = f.entries().to_vec();
                    for k in 3..9 {
                        e[k] = -e[k];
                    }
                    Orthogonal::new_unchecked(e, 3)
                })
                .collect(),
            provenance: Provenance::Random,
        };
        let (_, cos) = frame_stability_metrics(&set, &half_turn).unwrap();
        assert!((cos[0] - 1.0).abs() < 1e-12);
        assert!((cos[1] + 1.0).abs() < 1e-12);
        assert!((cos[2] + 1.0).abs() < 1e-12);

        let small = FrameSet {
            frames: set.frames[..3].to_vec(),
            provenance: Provenance::Random,
        };
        assert!(frame_stability_metrics(&set, &small).is_err());
    }

    #[test]
    fn refinement_identity_outputs_leave_everything_unchanged() {
        use crate::netcore::mlp::{Mlp, ParamStore};
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded_rng(10);
        // final layer weights zero, bias = (1,0,0,0,1,0) → u1 = e1, u2 = e2 → U = I
        let spec = parse_rep_spec("1x1n", 3).unwrap();
        let mut mlp = Mlp::new(&mut store, &mut rng, "refine", 3, &[], 6, false);
        for x in store.data_mut().iter_mut() {
            *x = 0.0;
        }
        let n = store.len();
        store.data_mut()[n - 6] = 1.0; // bias u1.x
        store.data_mut()[n - 2] = 1.0; // bias u2.y

        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let mut rngf = seeded_rng(11);
        let base = random_orthogonal::<f64, _>(&mut rngf, Group::Orthogonal, 3);
        let mut frames = vec![tapemath::mat3_const(&mut tape, base.entries())];
        let feat = tape.constants(&[0.2, -0.4, 0.9]);
        let mut features = vec![feat.clone()];
        let mut events = FrameEvents::default();
        let dets = refine_frames_values(
            &mut tape,
            &store,
            &bound,
            &mut mlp,
            &spec,
            &mut frames,
            &mut features,
            99,
            Phase::Eval,
            &mut events,
        );
        assert!((dets[0] - 1.0).abs() < 1e-12);
        let out = tapemath::mat3_vals(&tape, &frames[0]);
        for (a, b) in out.iter().zip(base.entries()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (v, orig) in features[0].iter().zip(&feat) {
            assert!((tape.val(*v) - tape.val(*orig)).abs() < 1e-12);
        }
    }

    #[test]
    fn refinement_always_special_orthogonal() {
        use crate::netcore::mlp::{Mlp, ParamStore};
        let spec = parse_rep_spec("2x0n+1x1n", 3).unwrap();
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded_rng(12);
        let mut mlp = Mlp::new(&mut store, &mut rng, "refine", 5, &[8], 6, false);
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        let mut frames = vec![tapemath::identity3(&mut tape); 4];
        let mut features: Vec<Vec<Value>> = (0..4)
            .map(|i| tape.constants(&[0.1 * i as f64, -0.2, 0.3, 0.5, -0.7]))
            .collect();
        let mut events = FrameEvents::default();
        let dets = refine_frames_values(
            &mut tape,
            &store,
            &bound,
            &mut mlp,
            &spec,
            &mut frames,
            &mut features,
            7,
            Phase::Eval,
            &mut events,
        );
        for d in dets {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }
}
