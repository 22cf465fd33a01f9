//! Tape-valued small-matrix algebra: 3-vectors, 3×3 frames, and the
//! (pseudo)tensor representation acting on tape values. Mirrors the plain
//! routines in [`crate::reps`] on differentiable values.

use crate::netcore::tape::{Tape, Value};
use crate::reps::{Parity, RepSpec};
use crate::scalar::Scalar;

/// A 3×3 matrix of tape values, rows are basis vectors.
pub type Mat3v = [[Value; 3]; 3];
pub type Vec3v = [Value; 3];

pub fn vec3_const<T: Scalar>(tape: &mut Tape<T>, x: &[T]) -> Vec3v {
    [tape.constant(x[0]), tape.constant(x[1]), tape.constant(x[2])]
}

pub fn mat3_const<T: Scalar>(tape: &mut Tape<T>, rows: &[T]) -> Mat3v {
    let v: Vec<Value> = rows.iter().map(|&x| tape.constant(x)).collect();
    [[v[0], v[1], v[2]], [v[3], v[4], v[5]], [v[6], v[7], v[8]]]
}

pub fn identity3<T: Scalar>(tape: &mut Tape<T>) -> Mat3v {
    let one = tape.constant(T::one());
    let zero = tape.constant(T::zero());
    [[one, zero, zero], [zero, one, zero], [zero, zero, one]]
}

pub fn dot3<T: Scalar>(tape: &mut Tape<T>, a: &Vec3v, b: &Vec3v) -> Value {
    tape.dot(a, b)
}

pub fn cross3<T: Scalar>(tape: &mut Tape<T>, a: &Vec3v, b: &Vec3v) -> Vec3v {
    let x1 = tape.mul(a[1], b[2]);
    let x2 = tape.mul(a[2], b[1]);
    let y1 = tape.mul(a[2], b[0]);
    let y2 = tape.mul(a[0], b[2]);
    let z1 = tape.mul(a[0], b[1]);
    let z2 = tape.mul(a[1], b[0]);
    [tape.sub(x1, x2), tape.sub(y1, y2), tape.sub(z1, z2)]
}

pub fn norm3<T: Scalar>(tape: &mut Tape<T>, a: &Vec3v) -> Value {
    let sq = tape.dot(a, a);
    tape.sqrt(sq)
}

pub fn scale3<T: Scalar>(tape: &mut Tape<T>, a: &Vec3v, s: Value) -> Vec3v {
    [tape.mul(a[0], s), tape.mul(a[1], s), tape.mul(a[2], s)]
}

pub fn sub3<T: Scalar>(tape: &mut Tape<T>, a: &Vec3v, b: &Vec3v) -> Vec3v {
    [
        tape.sub(a[0], b[0]),
        tape.sub(a[1], b[1]),
        tape.sub(a[2], b[2]),
    ]
}

/// Matrix-vector product R·x, rows dotted with x.
pub fn matvec3<T: Scalar>(tape: &mut Tape<T>, m: &Mat3v, x: &Vec3v) -> Vec3v {
    [tape.dot(&m[0], x), tape.dot(&m[1], x), tape.dot(&m[2], x)]
}

/// Matrix product A·B.
pub fn matmul3<T: Scalar>(tape: &mut Tape<T>, a: &Mat3v, b: &Mat3v) -> Mat3v {
    let bt = transpose3(b);
    let mut out = *a;
    for (r, row) in out.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = tape.dot(&a[r], &bt[c]);
        }
    }
    out
}

/// Transpose is pure index shuffling; no tape nodes are created.
pub fn transpose3(m: &Mat3v) -> Mat3v {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

/// det via the scalar triple product row₀ · (row₁ × row₂).
pub fn det3<T: Scalar>(tape: &mut Tape<T>, m: &Mat3v) -> Value {
    let c = cross3(tape, &m[1], &m[2]);
    tape.dot(&m[0], &c)
}

/// Reads the forward values of a frame into a row-major array.
pub fn mat3_vals<T: Scalar>(tape: &Tape<T>, m: &Mat3v) -> Vec<T> {
    let mut out = Vec::with_capacity(9);
    for row in m {
        for &v in row {
            out.push(tape.val(v));
        }
    }
    out
}

fn contract_mode_values<T: Scalar>(
    tape: &mut Tape<T>,
    r: &Mat3v,
    x: &[Value],
    order: u32,
    mode: u32,
) -> Vec<Value> {
    let d = 3usize;
    let stride = d.pow(order - 1 - mode);
    let outer = d.pow(mode);
    let mut out = x.to_vec();
    let mut fiber = [x[0]; 3];
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * d * stride + inner;
            for (j, f) in fiber.iter_mut().enumerate() {
                *f = x[base + j * stride];
            }
            for i in 0..d {
                out[base + i * stride] = tape.dot(&r[i], &fiber);
            }
        }
    }
    out
}

/// Applies the representation of `r` (rows as a 3×3 orthogonal matrix of
/// tape values) to a feature row laid out per `spec`. `det_r` must be the
/// determinant node of `r` when the spec has pseudotensor terms.
pub fn apply_rep_values<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &RepSpec,
    r: &Mat3v,
    det_r: Option<Value>,
    f: &[Value],
) -> Vec<Value> {
    assert_eq!(spec.dim(), 3, "tape representation action is built for d=3");
    assert_eq!(f.len(), spec.width(), "feature width mismatch");
    let mut out = Vec::with_capacity(f.len());
    let mut offset = 0;
    for term in spec.terms() {
        let tw = term.tensor_width(3);
        for m in 0..term.mult {
            let seg = &f[offset + m * tw..offset + (m + 1) * tw];
            let mut transformed = if term.order == 0 {
                vec![seg[0]]
            } else {
                let mut cur = seg.to_vec();
                for mode in 0..term.order {
                    cur = contract_mode_values(tape, r, &cur, term.order, mode);
                }
                cur
            };
            if term.parity == Parity::Pseudo {
                let det = det_r.expect("pseudotensor term needs det node");
                for v in transformed.iter_mut() {
                    *v = tape.mul(*v, det);
                }
            }
            out.extend(transformed);
        }
        offset += term.width(3);
    }
    out
}

/// Same-id frames make the change of basis exactly trivial (ρ(RRᵀ) = id
/// for orthogonal R), so constant/identity frame sets skip the matrix
/// product entirely.
pub fn frames_identical(a: &Mat3v, b: &Mat3v) -> bool {
    (0..3).all(|r| (0..3).all(|c| a[r][c] == b[r][c]))
}

/// ρ_f(R_to · R_fromᵀ) f — re-expresses a feature row between frames.
pub fn change_of_basis_values<T: Scalar>(
    tape: &mut Tape<T>,
    spec: &RepSpec,
    r_to: &Mat3v,
    r_from: &Mat3v,
    f: &[Value],
) -> Vec<Value> {
    if frames_identical(r_to, r_from) {
        return f.to_vec();
    }
    let from_t = transpose3(r_from);
    let rel = matmul3(tape, r_to, &from_t);
    let det = if spec.terms().iter().any(|t| t.parity == Parity::Pseudo) {
        Some(det3(tape, &rel))
    } else {
        None
    };
    apply_rep_values(tape, spec, &rel, det, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reps::{self, parse_rep_spec, seeded_rng, Group};

    #[test]
    fn tape_apply_matches_plain() {
        let spec = parse_rep_spec("2x0n+1x0p+2x1n+1x1p+1x2n+1x2p", 3).unwrap();
        let mut rng = seeded_rng(13);
        let r = reps::random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        use rand::Rng;
        let vals: Vec<f64> = (0..spec.width()).map(|_| rng.gen::<f64>() - 0.5).collect();
        let block = reps::FeatureBlock::new(vals.clone(), 1, spec.clone()).unwrap();
        let plain = reps::apply_rep(&spec, &r, &block).unwrap();

        let mut tape = Tape::<f64>::new();
        let rm = mat3_const(&mut tape, r.entries());
        let det = det3(&mut tape, &rm);
        let f = tape.constants(&vals);
        let out = apply_rep_values(&mut tape, &spec, &rm, Some(det), &f);
        for (v, expect) in out.iter().zip(plain.values()) {
            assert!((tape.val(*v) - expect).abs() < 1e-13);
        }
    }

    #[test]
    fn change_of_basis_shortcut_on_shared_frame() {
        let mut tape = Tape::<f64>::new();
        let spec = parse_rep_spec("1x1n", 3).unwrap();
        let m = identity3(&mut tape);
        let f = tape.constants(&[1.0, 2.0, 3.0]);
        let out = change_of_basis_values(&mut tape, &spec, &m, &m, &f);
        assert_eq!(out, f);
    }

    #[test]
    fn matmul_transpose_consistency() {
        let mut rng = seeded_rng(5);
        let r = reps::random_orthogonal::<f64, _>(&mut rng, Group::SpecialOrthogonal, 3);
        let mut tape = Tape::<f64>::new();
        let m = mat3_const(&mut tape, r.entries());
        let mt = transpose3(&m);
        let prod = matmul3(&mut tape, &m, &mt);
        let vals = mat3_vals(&tape, &prod);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((vals[i * 3 + j] - expect).abs() < 1e-14);
            }
        }
        let det = det3(&mut tape, &m);
        assert!((tape.val(det) - 1.0).abs() < 1e-14);
    }
}
