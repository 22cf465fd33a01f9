//! Canonicalization in and out of local frames: features enter the
//! network as ρ_in(R_i)F_i and leave as ρ_out(R_iᵀ)f_i.

use crate::error::{Error, Result};
use crate::frames::FrameSet;
use crate::netcore::tape::{Tape, Value};
use crate::reps::{self, FeatureBlock, Parity, RepSpec};
use crate::scalar::Scalar;
use crate::tapemath::{self, Mat3v};

fn transform_rows<T: Scalar>(
    features: &FeatureBlock<T>,
    frames: &FrameSet<T>,
    transpose: bool,
) -> Result<FeatureBlock<T>> {
    if features.rows() != frames.len() {
        return Err(Error::WidthMismatch {
            context: "canonicalize: row count vs frame count",
            expected: frames.len(),
            got: features.rows(),
        });
    }
    let spec = features.spec().clone();
    let mut out = features.clone();
    for i in 0..out.rows() {
        let r = if transpose {
            frames.frames[i].transpose()
        } else {
            frames.frames[i].clone()
        };
        let det = r.det();
        let row = out.row_mut(i);
        let mut offset = 0;
        for term in spec.terms() {
            let tw = term.tensor_width(spec.dim());
            for m in 0..term.mult {
                let seg = &mut row[offset + m * tw..offset + (m + 1) * tw];
                reps::transform_tensor(&r, seg, term.order);
                if term.parity == Parity::Pseudo {
                    for v in seg.iter_mut() {
                        *v *= det;
                    }
                }
            }
            offset += term.width(spec.dim());
        }
    }
    Ok(out)
}

/// Per node: f_i = ρ(R_i) F_i, the invariant local-frame coordinates.
pub fn canonicalize_in<T: Scalar>(
    features: &FeatureBlock<T>,
    frames: &FrameSet<T>,
) -> Result<FeatureBlock<T>> {
    transform_rows(features, frames, false)
}

/// Per node: Y_i = ρ(R_iᵀ) f_i, back to global coordinates.
pub fn decanonicalize_out<T: Scalar>(
    features: &FeatureBlock<T>,
    frames: &FrameSet<T>,
) -> Result<FeatureBlock<T>> {
    transform_rows(features, frames, true)
}

/// Tape variant of [`canonicalize_in`] for one node.
pub fn canonicalize_row_values<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &RepSpec,
    frame: &Mat3v,
    raw: &[T],
) -> Vec<Value> {
    let f = tape.constants(raw);
    let det = if spec.terms().iter().any(|t| t.parity == Parity::Pseudo) {
        Some(tapemath::det3(tape, frame))
    } else {
        None
    };
    tapemath::apply_rep_values(tape, spec, frame, det, &f)
}

/// Tape variant of [`decanonicalize_out`] for one node.
pub fn decanonicalize_row_values<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &RepSpec,
    frame: &Mat3v,
    f: &[Value],
) -> Vec<Value> {
    let rt = tapemath::transpose3(frame);
    let det = if spec.terms().iter().any(|t| t.parity == Parity::Pseudo) {
        Some(tapemath::det3(tape, &rt))
    } else {
        None
    };
    tapemath::apply_rep_values(tape, spec, &rt, det, f)
}
