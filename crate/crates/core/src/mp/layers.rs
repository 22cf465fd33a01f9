//! The equivariant layers: same-level message passing, the subsampling
//! encoder, the interpolating decoder and global pooling. All of them
//! assemble per-edge inputs of the form (features, transformed neighbor
//! features, radial embedding, receiver-frame edge direction) and feed a
//! small MLP.

use crate::error::{Error, Result};
use crate::frames::FrameEvents;
use crate::geometry::{self, PointCloud};
use crate::mp::config::{Aggregation, MessageMode};
use crate::netcore::mlp::{Bound, Mlp, ParamStore, Phase};
use crate::netcore::tape::{Tape, Value};
use crate::reps::RepSpec;
use crate::scalar::Scalar;
use crate::tapemath::{self, Mat3v};

/// One level of the pipeline: surviving node ids (ascending), their
/// frames and invariant features, and the representation the features
/// transform under.
#[derive(Clone)]
pub struct LevelState {
    pub indices: Vec<usize>,
    pub frames: Vec<Mat3v>,
    pub features: Vec<Vec<Value>>,
    pub rep: RepSpec,
}

/// Shared mutable context threaded through the layer computations.
pub struct LayerCtx<'a, T: Scalar> {
    pub tape: &'a mut Tape<T>,
    pub store: &'a ParamStore<T>,
    pub bound: &'a Bound,
    pub phase: Phase,
    pub radial_k: usize,
    pub events: &'a mut FrameEvents,
}

fn positions_of<T: Scalar>(cloud: &PointCloud<T>, indices: &[usize]) -> Vec<[T; 3]> {
    indices
        .iter()
        .map(|&i| {
            let p = cloud.position(i);
            [p[0], p[1], p[2]]
        })
        .collect()
}

fn dist3<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let mut acc = T::zero();
    for k in 0..3 {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc.sqrt()
}

/// Radial embedding plus receiver-frame unit direction for one edge.
/// `dir` is the unnormalized edge vector in global coordinates.
fn edge_geometry_terms<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    receiver_frame: &Mat3v,
    dir: [T; 3],
    dist: T,
    r_max: T,
) -> Result<Vec<Value>> {
    let radial = geometry::gaussian_radial_embedding(dist, ctx.radial_k, r_max)?;
    let mut out = ctx.tape.constants(&radial);
    let (unit, _) = geometry::unit_edge_direction(&dir);
    let unit_c = tapemath::vec3_const(ctx.tape, &unit);
    out.extend(tapemath::matvec3(ctx.tape, receiver_frame, &unit_c));
    Ok(out)
}

fn transformed_neighbor<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    mode: MessageMode,
    rep: &RepSpec,
    receiver: &Mat3v,
    sender: &Mat3v,
    f_sender: &[Value],
) -> Vec<Value> {
    match mode {
        MessageMode::Scalar => f_sender.to_vec(),
        MessageMode::Tensorial => {
            tapemath::change_of_basis_values(ctx.tape, rep, receiver, sender, f_sender)
        }
    }
}

fn aggregate<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    agg: Aggregation,
    messages: &[&Vec<Value>],
    width: usize,
) -> Vec<Value> {
    if messages.is_empty() {
        ctx.events.empty_neighborhoods += 1;
        return (0..width).map(|_| ctx.tape.constant(T::zero())).collect();
    }
    let mut out = Vec::with_capacity(width);
    for c in 0..width {
        let column: Vec<Value> = messages.iter().map(|m| m[c]).collect();
        let v = match agg {
            Aggregation::Max => ctx.tape.max(&column),
            Aggregation::Sum => ctx.tape.sum(&column),
            Aggregation::Mean => {
                let s = ctx.tape.sum(&column);
                ctx.tape.scale(s, T::one() / T::of(column.len() as f64))
            }
        };
        out.push(v);
    }
    out
}

/// Same-level message passing: per edge
/// φ(f_i, T(f_j), radial(‖x_i−x_j‖), R_i·unit(x_i−x_j)), aggregated per
/// node, followed by the update f_i ← ψ(f_i, aggregate). T is the change
/// of basis in tensorial mode and the identity in scalar mode.
#[allow(clippy::too_many_arguments)]
pub fn message_layer<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    cloud: &PointCloud<T>,
    state: &mut LevelState,
    radius: T,
    mode: MessageMode,
    agg: Aggregation,
    out_rep: &RepSpec,
    phi: &mut Mlp<T>,
    psi: &mut Mlp<T>,
) -> Result<()> {
    let pos = positions_of(cloud, &state.indices);
    let n = pos.len();
    let mut edge_inputs: Vec<Vec<Value>> = Vec::new();
    let mut edge_owner: Vec<usize> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let dist = dist3(&pos[i], &pos[j]);
            if dist >= radius {
                continue;
            }
            let mut input = state.features[i].clone();
            let t = transformed_neighbor(
                ctx,
                mode,
                &state.rep,
                &state.frames[i],
                &state.frames[j],
                &state.features[j],
            );
            input.extend(t);
            // direction x_i − x_j, per the general message form
            let dir = [
                pos[i][0] - pos[j][0],
                pos[i][1] - pos[j][1],
                pos[i][2] - pos[j][2],
            ];
            input.extend(edge_geometry_terms(ctx, &state.frames[i], dir, dist, radius)?);
            edge_inputs.push(input);
            edge_owner.push(i);
        }
    }
    let messages = if edge_inputs.is_empty() {
        Vec::new()
    } else {
        phi.forward_batch(ctx.tape, ctx.store, ctx.bound, &edge_inputs, ctx.phase)
    };
    let width = out_rep.width();
    let mut psi_inputs = Vec::with_capacity(n);
    for i in 0..n {
        let own: Vec<&Vec<Value>> = edge_owner
            .iter()
            .zip(&messages)
            .filter(|(&o, _)| o == i)
            .map(|(_, m)| m)
            .collect();
        let agg_i = aggregate(ctx, agg, &own, width);
        let mut input = state.features[i].clone();
        input.extend(agg_i);
        psi_inputs.push(input);
    }
    state.features = psi.forward_batch(ctx.tape, ctx.store, ctx.bound, &psi_inputs, ctx.phase);
    state.rep = out_rep.clone();
    Ok(())
}

/// Subsampling encoder layer: farthest point sampling picks the centers,
/// messages flow from every previous-level node within the radius, and
/// the channel-wise aggregate becomes the new node feature (no self
/// features, no ψ).
#[allow(clippy::too_many_arguments)]
pub fn encoder_layer<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    cloud: &PointCloud<T>,
    state: &LevelState,
    radius: T,
    fraction: f64,
    mode: MessageMode,
    agg: Aggregation,
    out_rep: &RepSpec,
    phi: &mut Mlp<T>,
) -> Result<LevelState> {
    let pos = positions_of(cloud, &state.indices);
    let n = pos.len();
    let count = ((fraction * n as f64).ceil() as usize).clamp(1, n);
    let centers_local: Vec<usize> = if count == n {
        (0..n).collect()
    } else {
        let flat: Vec<T> = pos.iter().flatten().copied().collect();
        let sub = PointCloud::new(flat, 3)?;
        let mut sel = geometry::farthest_point_sampling(&sub, count, 0)?;
        sel.sort_unstable();
        sel
    };

    let mut edge_inputs: Vec<Vec<Value>> = Vec::new();
    let mut edge_owner: Vec<usize> = Vec::new();
    for (ci, &li) in centers_local.iter().enumerate() {
        for lj in 0..n {
            if lj == li {
                continue;
            }
            let dist = dist3(&pos[li], &pos[lj]);
            if dist >= radius {
                continue;
            }
            let mut input = transformed_neighbor(
                ctx,
                mode,
                &state.rep,
                &state.frames[li],
                &state.frames[lj],
                &state.features[lj],
            );
            // direction x_j − x_i, per the encoder form
            let dir = [
                pos[lj][0] - pos[li][0],
                pos[lj][1] - pos[li][1],
                pos[lj][2] - pos[li][2],
            ];
            input.extend(edge_geometry_terms(ctx, &state.frames[li], dir, dist, radius)?);
            edge_inputs.push(input);
            edge_owner.push(ci);
        }
    }
    let messages = if edge_inputs.is_empty() {
        Vec::new()
    } else {
        phi.forward_batch(ctx.tape, ctx.store, ctx.bound, &edge_inputs, ctx.phase)
    };
    let width = out_rep.width();
    let mut features = Vec::with_capacity(centers_local.len());
    for ci in 0..centers_local.len() {
        let own: Vec<&Vec<Value>> = edge_owner
            .iter()
            .zip(&messages)
            .filter(|(&o, _)| o == ci)
            .map(|(_, m)| m)
            .collect();
        features.push(aggregate(ctx, agg, &own, width));
    }
    Ok(LevelState {
        indices: centers_local.iter().map(|&l| state.indices[l]).collect(),
        frames: centers_local.iter().map(|&l| state.frames[l]).collect(),
        features,
        rep: out_rep.clone(),
    })
}

/// Upsampling decoder layer: features of the coarse level are pulled to
/// each target node from its three nearest coarse nodes by
/// inverse-distance weighting (transformed into the target frame in
/// tensorial mode), concatenated with the cached encoder features of the
/// target level, and mapped through an MLP.
#[allow(clippy::too_many_arguments)]
pub fn decoder_layer<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    cloud: &PointCloud<T>,
    top: &LevelState,
    target: &LevelState,
    mode: MessageMode,
    out_rep: &RepSpec,
    mlp: &mut Mlp<T>,
) -> Result<LevelState> {
    let eps_dist = T::of(1e-9);
    let top_pos = positions_of(cloud, &top.indices);
    let tgt_pos = positions_of(cloud, &target.indices);
    let width = top.rep.width();
    let mut inputs = Vec::with_capacity(tgt_pos.len());
    for (t, tp) in tgt_pos.iter().enumerate() {
        let mut dists: Vec<(T, usize)> = top_pos
            .iter()
            .enumerate()
            .map(|(j, sp)| (dist3(tp, sp), j))
            .collect();
        dists.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let take = dists.len().min(3);
        let picked = &dists[..take];
        let mut weights: Vec<T> = picked
            .iter()
            .map(|&(d, _)| T::one() / d.max(eps_dist))
            .collect();
        let total: T = weights.iter().copied().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        let transformed: Vec<Vec<Value>> = picked
            .iter()
            .map(|&(_, j)| {
                transformed_neighbor(
                    ctx,
                    mode,
                    &top.rep,
                    &target.frames[t],
                    &top.frames[j],
                    &top.features[j],
                )
            })
            .collect();
        let w_consts = ctx.tape.constants(&weights);
        let mut h = Vec::with_capacity(width);
        for c in 0..width {
            let col: Vec<Value> = transformed.iter().map(|f| f[c]).collect();
            h.push(ctx.tape.dot(&w_consts, &col));
        }
        h.extend(target.features[t].iter().copied());
        inputs.push(h);
    }
    let features = mlp.forward_batch(ctx.tape, ctx.store, ctx.bound, &inputs, ctx.phase);
    Ok(LevelState {
        indices: target.indices.clone(),
        frames: target.frames.clone(),
        features,
        rep: out_rep.clone(),
    })
}

/// Pools the surviving nodes into one feature at the anchor node
/// (closest to the center of mass by default; ties go to the lowest
/// index). Every other surviving node sends one message to the anchor.
#[allow(clippy::too_many_arguments)]
pub fn global_pool<T: Scalar>(
    ctx: &mut LayerCtx<'_, T>,
    cloud: &PointCloud<T>,
    state: &LevelState,
    embed_radius: T,
    anchor_farthest: bool,
    mode: MessageMode,
    agg: Aggregation,
    out_rep: &RepSpec,
    phi: &mut Mlp<T>,
) -> Result<LevelState> {
    if state.indices.is_empty() {
        return Err(Error::Config {
            layer: None,
            msg: "global pool on an empty level".into(),
        });
    }
    let pos = positions_of(cloud, &state.indices);
    let n = pos.len();
    let mut centroid = [T::zero(); 3];
    for p in &pos {
        for k in 0..3 {
            centroid[k] += p[k];
        }
    }
    for c in centroid.iter_mut() {
        *c /= T::of(n as f64);
    }
    let mut anchor = 0usize;
    let mut best = dist3(&pos[0], &centroid);
    for (i, p) in pos.iter().enumerate().skip(1) {
        let d = dist3(p, &centroid);
        let better = if anchor_farthest { d > best } else { d < best };
        if better {
            best = d;
            anchor = i;
        }
    }

    let mut edge_inputs = Vec::new();
    for j in 0..n {
        if j == anchor {
            continue;
        }
        let dist = dist3(&pos[anchor], &pos[j]);
        let mut input = transformed_neighbor(
            ctx,
            mode,
            &state.rep,
            &state.frames[anchor],
            &state.frames[j],
            &state.features[j],
        );
        let dir = [
            pos[j][0] - pos[anchor][0],
            pos[j][1] - pos[anchor][1],
            pos[j][2] - pos[anchor][2],
        ];
        input.extend(edge_geometry_terms(
            ctx,
            &state.frames[anchor],
            dir,
            dist,
            embed_radius,
        )?);
        edge_inputs.push(input);
    }
    let messages = if edge_inputs.is_empty() {
        Vec::new()
    } else {
        phi.forward_batch(ctx.tape, ctx.store, ctx.bound, &edge_inputs, ctx.phase)
    };
    let refs: Vec<&Vec<Value>> = messages.iter().collect();
    let pooled = aggregate(ctx, agg, &refs, out_rep.width());
    Ok(LevelState {
        indices: vec![state.indices[anchor]],
        frames: vec![state.frames[anchor]],
        features: vec![pooled],
        rep: out_rep.clone(),
    })
}
