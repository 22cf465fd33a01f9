//! Loss functions on tape values.

use crate::netcore::tape::{Tape, Value};
use crate::scalar::Scalar;

/// |x| as max(x, −x); the tie at 0 routes the gradient to +x.
pub fn abs<T: Scalar>(tape: &mut Tape<T>, x: Value) -> Value {
    let n = tape.neg(x);
    tape.max(&[x, n])
}

/// Mean absolute error over all elements; rows weighted by `weights`
/// when given (weights are renormalized to sum 1 over nonzero rows).
pub fn l1<T: Scalar>(
    tape: &mut Tape<T>,
    pred: &[Vec<Value>],
    target: &[Vec<T>],
    weights: Option<&[T]>,
) -> Value {
    assert_eq!(pred.len(), target.len(), "l1: row count mismatch");
    let mut terms = Vec::new();
    let mut total_w = T::zero();
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        assert_eq!(p.len(), t.len(), "l1: width mismatch");
        let w = weights.map_or(T::one(), |ws| ws[i]);
        if w == T::zero() {
            continue;
        }
        total_w += w * T::of(p.len() as f64);
        for (&pv, &tv) in p.iter().zip(t) {
            let tv = tape.constant(tv);
            let diff = tape.sub(pv, tv);
            let a = abs(tape, diff);
            let a = tape.scale(a, w);
            terms.push(a);
        }
    }
    let total = tape.sum(&terms);
    if total_w > T::zero() {
        tape.scale(total, T::one() / total_w)
    } else {
        total
    }
}

/// Mean cosine similarity over rows; targets are unit vectors. Rows with
/// zero weight are skipped.
pub fn cosine_similarity<T: Scalar>(
    tape: &mut Tape<T>,
    pred: &[Vec<Value>],
    target: &[Vec<T>],
    weights: Option<&[T]>,
) -> Value {
    assert_eq!(pred.len(), target.len(), "cosine: row count mismatch");
    let mut terms = Vec::new();
    let eps = tape.constant(T::of(1e-12));
    for (i, (p, t)) in pred.iter().zip(target).enumerate() {
        let w = weights.map_or(T::one(), |ws| ws[i]);
        if w == T::zero() {
            continue;
        }
        let tvals = tape.constants(t);
        let num = tape.dot(p, &tvals);
        let pp = tape.dot(p, p);
        let tt = tape.dot(&tvals, &tvals);
        let nn = tape.mul(pp, tt);
        let norm = tape.sqrt(nn);
        let norm = tape.max(&[norm, eps]);
        let cos = tape.div(num, norm);
        terms.push(tape.scale(cos, w));
    }
    let total = tape.sum(&terms);
    let total_w: T = (0..pred.len())
        .map(|i| weights.map_or(T::one(), |ws| ws[i]))
        .sum();
    if total_w > T::zero() {
        tape.scale(total, T::one() / total_w)
    } else {
        total
    }
}

/// Cross entropy with label smoothing: the target mixes the one-hot
/// label with the uniform distribution.
pub fn cross_entropy<T: Scalar>(
    tape: &mut Tape<T>,
    logits: &[Value],
    label: usize,
    smoothing: T,
) -> Value {
    let c = logits.len();
    assert!(label < c, "label out of range");
    // log-sum-exp with max shift for stability
    let m = tape.max(logits);
    let shifted: Vec<Value> = logits.iter().map(|&l| tape.sub(l, m)).collect();
    let exps: Vec<Value> = shifted.iter().map(|&s| tape.exp(s)).collect();
    let z = tape.sum(&exps);
    let lnz = tape.ln(z);
    let lse = tape.add(m, lnz);
    let uniform = smoothing / T::of(c as f64);
    let mut weighted = Vec::with_capacity(c);
    for (k, &l) in logits.iter().enumerate() {
        let y = if k == label {
            T::one() - smoothing + uniform
        } else {
            uniform
        };
        weighted.push(tape.scale(l, y));
    }
    let dot = tape.sum(&weighted);
    tape.sub(lse, dot)
}
