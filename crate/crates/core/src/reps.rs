//! Representation algebra for O(d): parsing of direct-sum representation
//! specs, tensor/pseudotensor action on feature blocks, and changes of
//! basis between orthogonal frames.
//!
//! A spec string like `8x0p+4x1n` denotes a direct sum of 8 pseudoscalars
//! and 4 vectors. Parity marker `n` is a plain tensor, `p` a pseudotensor
//! (picks up a det(R) factor). An order-n term occupies d^n columns and
//! transforms by contracting every index with R.

use std::fmt;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Scalar;

/// Parity of a representation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    /// Plain tensor, marker `n`.
    Tensor,
    /// Pseudotensor, marker `p`: transforms with an extra det(R) factor.
    Pseudo,
}

impl Parity {
    fn marker(self) -> char {
        match self {
            Parity::Tensor => 'n',
            Parity::Pseudo => 'p',
        }
    }
}

/// One `<mult>x<order><parity>` term of a direct sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RepTerm {
    pub mult: usize,
    pub order: u32,
    pub parity: Parity,
}

impl RepTerm {
    /// Width of a single tensor of this order in dimension d.
    pub fn tensor_width(&self, dim: usize) -> usize {
        dim.pow(self.order)
    }

    /// Total width of the term: multiplicity · d^order.
    pub fn width(&self, dim: usize) -> usize {
        self.mult * self.tensor_width(dim)
    }
}

/// Ordered direct sum of (multiplicity, order, parity) terms over O(d).
///
/// Term order is preserved exactly; no sorting or merging happens.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RepSpec {
    terms: Vec<RepTerm>,
    dim: usize,
}

impl RepSpec {
    pub fn new(terms: Vec<RepTerm>, dim: usize) -> Self {
        RepSpec { terms, dim }
    }

    /// The empty representation (width 0) in dimension d.
    pub fn empty(dim: usize) -> Self {
        RepSpec { terms: Vec::new(), dim }
    }

    pub fn terms(&self) -> &[RepTerm] {
        &self.terms
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Total feature width Σ mult · d^order. Needs no matrix.
    pub fn width(&self) -> usize {
        self.terms.iter().map(|t| t.width(self.dim)).sum()
    }

    /// True if every term is an even scalar (order 0, tensor parity).
    pub fn is_even_scalar(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.order == 0 && t.parity == Parity::Tensor)
    }

    /// Column ranges of the even-scalar (order-0 tensor) channels.
    pub fn even_scalar_columns(&self) -> Vec<usize> {
        let mut cols = Vec::new();
        let mut offset = 0;
        for t in &self.terms {
            if t.order == 0 && t.parity == Parity::Tensor {
                cols.extend(offset..offset + t.mult);
            }
            offset += t.width(self.dim);
        }
        cols
    }

    /// Column ranges of the vector (order-1 tensor parity) channels,
    /// returned as starting offsets of each d-wide slice.
    pub fn vector_channel_offsets(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut offset = 0;
        for t in &self.terms {
            if t.order == 1 && t.parity == Parity::Tensor {
                for m in 0..t.mult {
                    out.push(offset + m * self.dim);
                }
            }
            offset += t.width(self.dim);
        }
        out
    }
}

impl fmt::Display for RepSpec {
    /// Canonical string form; multiplicity is printed even when 1.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, "+")?;
            }
            write!(f, "{}x{}{}", t.mult, t.order, t.parity.marker())?;
        }
        Ok(())
    }
}

impl Serialize for RepSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Parses the spec grammar `term ('+' term)*`, term `<mult>x<order><parity>`
/// with parity `n` or `p`. Errors name the offending span.
pub fn parse_rep_spec(text: &str, dim: usize) -> Result<RepSpec> {
    let mut terms = Vec::new();
    for raw in text.split('+') {
        let span = raw.to_string();
        let err = |msg: &str| Error::RepParse {
            span: span.clone(),
            msg: msg.to_string(),
        };
        let piece = raw.trim();
        if piece.is_empty() {
            return Err(err("empty term"));
        }
        let (mult_s, rest) = piece
            .split_once('x')
            .ok_or_else(|| err("expected `<mult>x<order><parity>`"))?;
        let mult: usize = mult_s
            .parse()
            .map_err(|_| err("multiplicity is not a positive integer"))?;
        if mult == 0 {
            return Err(err("zero multiplicity"));
        }
        if rest.is_empty() {
            return Err(err("missing order and parity"));
        }
        let parity = match rest.chars().last().unwrap() {
            'n' => Parity::Tensor,
            'p' => Parity::Pseudo,
            c => return Err(err(&format!("unknown parity marker `{c}` (expected n or p)"))),
        };
        let order_s = &rest[..rest.len() - 1];
        let order: u32 = order_s
            .parse()
            .map_err(|_| err("order is not a non-negative integer"))?;
        terms.push(RepTerm { mult, order, parity });
    }
    Ok(RepSpec::new(terms, dim))
}

/// Width of a spec, exposed as a free function to mirror the parse side.
pub fn rep_width(spec: &RepSpec) -> usize {
    spec.width()
}

/// A d×d orthogonal matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Orthogonal<T> {
    entries: Vec<T>,
    dim: usize,
}

impl<T: Scalar> Orthogonal<T> {
    /// Validates R·Rᵀ = I within `tol` before wrapping.
    pub fn try_new(entries: Vec<T>, dim: usize, tol: T) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::WidthMismatch {
                context: "Orthogonal::try_new",
                expected: dim * dim,
                got: entries.len(),
            });
        }
        let residual = linalg::orthogonality_residual(&entries, dim);
        if residual > tol {
            return Err(Error::NotOrthogonal {
                tol: tol.as_f64(),
                residual: residual.as_f64(),
            });
        }
        Ok(Orthogonal { entries, dim })
    }

    /// Default validation tolerance, scaled to the scalar's precision.
    pub fn default_tol() -> T {
        T::epsilon() * T::of(512.0)
    }

    pub fn new(entries: Vec<T>, dim: usize) -> Result<Self> {
        Self::try_new(entries, dim, Self::default_tol())
    }

    /// Wraps without validation; for matrices known orthogonal by construction.
    pub fn new_unchecked(entries: Vec<T>, dim: usize) -> Self {
        debug_assert_eq!(entries.len(), dim * dim);
        Orthogonal { entries, dim }
    }

    pub fn identity(dim: usize) -> Self {
        let mut entries = vec![T::zero(); dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = T::one();
        }
        Orthogonal { entries, dim }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[T] {
        &self.entries
    }

    pub fn entry(&self, row: usize, col: usize) -> T {
        self.entries[row * self.dim + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.entries[row * self.dim..(row + 1) * self.dim]
    }

    pub fn transpose(&self) -> Self {
        Orthogonal {
            entries: linalg::transpose(&self.entries, self.dim),
            dim: self.dim,
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        Orthogonal {
            entries: linalg::matmul(&self.entries, &other.entries, self.dim),
            dim: self.dim,
        }
    }

    pub fn det(&self) -> T {
        linalg::det(&self.entries, self.dim)
    }

    pub fn apply_vec(&self, x: &[T]) -> Vec<T> {
        linalg::matvec(&self.entries, x, self.dim)
    }
}

/// Feature block: N rows of width exactly `spec.width()`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureBlock<T> {
    values: Vec<T>,
    rows: usize,
    spec: RepSpec,
}

impl<T: Scalar> FeatureBlock<T> {
    pub fn new(values: Vec<T>, rows: usize, spec: RepSpec) -> Result<Self> {
        let width = spec.width();
        if values.len() != rows * width {
            return Err(Error::WidthMismatch {
                context: "FeatureBlock::new",
                expected: rows * width,
                got: values.len(),
            });
        }
        Ok(FeatureBlock { values, rows, spec })
    }

    pub fn zeros(rows: usize, spec: RepSpec) -> Self {
        let width = spec.width();
        FeatureBlock {
            values: vec![T::zero(); rows * width],
            rows,
            spec,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.spec.width()
    }

    pub fn spec(&self) -> &RepSpec {
        &self.spec
    }

    pub fn row(&self, i: usize) -> &[T] {
        let w = self.width();
        &self.values[i * w..(i + 1) * w]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        let w = self.width();
        &mut self.values[i * w..(i + 1) * w]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

/// Applies one mode contraction: out[..., i_m, ...] = Σ_j R[i_m,j] x[..., j, ...]
/// for a row-major order-n tensor flattened over (i₁,…,i_n).
fn contract_mode<T: Scalar>(r: &Orthogonal<T>, x: &[T], out: &mut [T], order: u32, mode: u32) {
    let d = r.dim();
    let stride = d.pow(order - 1 - mode);
    let outer = d.pow(mode);
    for o in 0..outer {
        for inner in 0..stride {
            let base = o * d * stride + inner;
            for i in 0..d {
                let mut acc = T::zero();
                for j in 0..d {
                    acc += r.entry(i, j) * x[base + j * stride];
                }
                out[base + i * stride] = acc;
            }
        }
    }
}

/// Transforms one order-n tensor segment in place: every index contracted
/// with R (n successive mode contractions).
pub fn transform_tensor<T: Scalar>(r: &Orthogonal<T>, segment: &mut [T], order: u32) {
    if order == 0 {
        return;
    }
    let mut cur = segment.to_vec();
    let mut next = vec![T::zero(); segment.len()];
    for mode in 0..order {
        contract_mode(r, &cur, &mut next, order, mode);
        std::mem::swap(&mut cur, &mut next);
    }
    segment.copy_from_slice(&cur);
}

/// Applies the (pseudo)tensor representation of R to every row of `f`.
///
/// Each term transforms independently; pseudotensor terms pick up det(R).
pub fn apply_rep<T: Scalar>(
    spec: &RepSpec,
    r: &Orthogonal<T>,
    f: &FeatureBlock<T>,
) -> Result<FeatureBlock<T>> {
    if f.spec() != spec {
        return Err(Error::WidthMismatch {
            context: "apply_rep: block spec differs from requested spec",
            expected: spec.width(),
            got: f.width(),
        });
    }
    if r.dim() != spec.dim() {
        return Err(Error::DimMismatch {
            context: "apply_rep",
            expected: spec.dim(),
            got: r.dim(),
        });
    }
    let det = r.det();
    let dim = spec.dim();
    let mut out = f.clone();
    for row in 0..out.rows() {
        let data = out.row_mut(row);
        let mut offset = 0;
        for term in spec.terms() {
            let tw = term.tensor_width(dim);
            for m in 0..term.mult {
                let seg = &mut data[offset + m * tw..offset + (m + 1) * tw];
                transform_tensor(r, seg, term.order);
                if term.parity == Parity::Pseudo {
                    for v in seg.iter_mut() {
                        *v *= det;
                    }
                }
            }
            offset += term.width(dim);
        }
    }
    Ok(out)
}

/// Re-expresses `f` from the basis of `r_from` in the basis of `r_to`:
/// apply_rep(spec, r_to · r_fromᵀ, f). Transpose serves as inverse.
pub fn change_of_basis<T: Scalar>(
    spec: &RepSpec,
    r_to: &Orthogonal<T>,
    r_from: &Orthogonal<T>,
    f: &FeatureBlock<T>,
) -> Result<FeatureBlock<T>> {
    let rel = r_to.matmul(&r_from.transpose());
    apply_rep(spec, &rel, f)
}

/// Which component of O(d) to sample from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Group {
    SpecialOrthogonal,
    Orthogonal,
}

fn gaussian<T: Scalar, R: Rng>(rng: &mut R) -> T {
    // Box-Muller; one value per call keeps the stream layout simple.
    loop {
        let u1: f64 = rng.gen::<f64>();
        let u2: f64 = rng.gen::<f64>();
        if u1 > f64::MIN_POSITIVE {
            return T::of((-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos());
        }
    }
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// diagonal sign fixed, then det corrected into SO(d); for O(d) a final
/// reflection is applied with probability 1/2. Deterministic under seed.
pub fn random_orthogonal<T: Scalar, R: Rng>(rng: &mut R, group: Group, dim: usize) -> Orthogonal<T> {
    loop {
        let mut m: Vec<T> = (0..dim * dim).map(|_| gaussian(rng)).collect();
        // Record projections before normalization so diagonal signs of the
        // implicit R factor can be fixed (r_jj > 0).
        let mut cols = m.clone();
        if !linalg::orthonormalize_columns(&mut cols, dim) {
            continue;
        }
        for j in 0..dim {
            let mut rjj = T::zero();
            for k in 0..dim {
                rjj += cols[k * dim + j] * m[k * dim + j];
            }
            if rjj < T::zero() {
                for k in 0..dim {
                    cols[k * dim + j] = -cols[k * dim + j];
                }
            }
        }
        m = cols;
        if linalg::det(&m, dim) < T::zero() {
            // Negate the last column: Haar on the det=-1 component maps to SO(d).
            for k in 0..dim {
                m[k * dim + dim - 1] = -m[k * dim + dim - 1];
            }
        }
        if group == Group::Orthogonal && rng.gen_bool(0.5) {
            for k in 0..dim {
                m[k * dim + dim - 1] = -m[k * dim + dim - 1];
            }
        }
        return Orthogonal::new_unchecked(m, dim);
    }
}

/// Convenience: a seeded generator for reproducible sampling.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_examples() {
        let s = parse_rep_spec("8x0p+4x1n", 3).unwrap();
        assert_eq!(s.terms().len(), 2);
        assert_eq!(s.width(), 8 + 12);
        assert_eq!(rep_width(&parse_rep_spec("1x0n", 3).unwrap()), 1);
        assert_eq!(rep_width(&parse_rep_spec("2x2n+1x1p", 3).unwrap()), 21);
        assert_eq!(rep_width(&parse_rep_spec("1x1n", 3).unwrap()), 3);
        assert_eq!(rep_width(&parse_rep_spec("64x0n+16x1n+4x2n", 3).unwrap()), 148);
        assert_eq!(rep_width(&parse_rep_spec("1x0p", 2).unwrap()), 1);
    }

    #[test]
    fn parse_round_trip_is_identity() {
        for text in ["8x0p+4x1n", "1x1n", "2x2n+1x1p", "16x0n+4x0p+4x1n+1x1p+1x2n"] {
            let s = parse_rep_spec(text, 3).unwrap();
            assert_eq!(s.to_string(), text);
            let back = parse_rep_spec(&s.to_string(), 3).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn parse_errors_name_span() {
        for bad in ["0x1n", "4y1n", "2x-1n", "2x1q", "", "3x1n+"] {
            match parse_rep_spec(bad, 3) {
                Err(Error::RepParse { span, .. }) => {
                    assert!(bad.contains(span.as_str()) || span.is_empty() || bad.is_empty());
                }
                other => panic!("expected parse error for {bad:?}, got {other:?}"),
            }
        }
    }

    #[test]
    fn term_order_preserved() {
        let s = parse_rep_spec("4x1n+8x0p", 3).unwrap();
        assert_eq!(s.terms()[0].order, 1);
        assert_eq!(s.terms()[1].order, 0);
        assert_eq!(s.to_string(), "4x1n+8x0p");
    }

    fn block<T: Scalar>(spec: &RepSpec, vals: Vec<T>) -> FeatureBlock<T> {
        FeatureBlock::new(vals, 1, spec.clone()).unwrap()
    }

    #[test]
    fn identity_rep_is_identity() {
        let spec = parse_rep_spec("1x1n", 3).unwrap();
        let f = block(&spec, vec![1.0, 2.0, 3.0]);
        let out = apply_rep(&spec, &Orthogonal::<f64>::identity(3), &f).unwrap();
        assert_eq!(out.values(), f.values());
    }

    #[test]
    fn parity_under_point_reflection() {
        // diag(-1,-1,-1): vectors flip, pseudovectors do not.
        let neg = Orthogonal::new(
            vec![-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, -1.0f64],
            3,
        )
        .unwrap();
        let vspec = parse_rep_spec("1x1n", 3).unwrap();
        let v = block(&vspec, vec![1.0, -2.0, 0.5]);
        let out = apply_rep(&vspec, &neg, &v).unwrap();
        assert_eq!(out.values(), &[-1.0, 2.0, -0.5]);

        let pspec = parse_rep_spec("1x1p", 3).unwrap();
        let p = block(&pspec, vec![1.0, -2.0, 0.5]);
        let out = apply_rep(&pspec, &neg, &p).unwrap();
        assert_eq!(out.values(), &[1.0, -2.0, 0.5]);
    }

    #[test]
    fn change_of_basis_same_frame_is_identity() {
        let spec = parse_rep_spec("2x0n+1x1n", 3).unwrap();
        let mut rng = seeded_rng(11);
        let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        let f = block(&spec, vec![0.3, -1.0, 0.2, 0.4, 0.9]);
        let out = change_of_basis(&spec, &r, &r, &f).unwrap();
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn change_of_basis_from_identity_matches_apply() {
        let spec = parse_rep_spec("1x1n+1x2p", 3).unwrap();
        let mut rng = seeded_rng(5);
        let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        let vals: Vec<f64> = (0..spec.width()).map(|i| (i as f64) * 0.17 - 0.4).collect();
        let f = block(&spec, vals);
        let a = change_of_basis(&spec, &r, &Orthogonal::identity(3), &f).unwrap();
        let b = apply_rep(&spec, &r, &f).unwrap();
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn change_of_basis_composes() {
        let spec = parse_rep_spec("1x1n+1x0p", 3).unwrap();
        let mut rng = seeded_rng(7);
        let a = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        let b = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        let c = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
        let f = block(&spec, vec![0.1, 0.2, 0.3, -0.7]);
        let via_b = change_of_basis(&spec, &a, &b, &change_of_basis(&spec, &b, &c, &f).unwrap()).unwrap();
        let direct = change_of_basis(&spec, &a, &c, &f).unwrap();
        for (x, y) in via_b.values().iter().zip(direct.values()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn random_orthogonal_contracts() {
        let mut rng = seeded_rng(42);
        for _ in 0..10 {
            let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
            assert!(linalg::orthogonality_residual(r.entries(), 3) < 1e-12);
            assert!((r.det().abs() - 1.0).abs() < 1e-12);
        }
        for _ in 0..10 {
            let r = random_orthogonal::<f64, _>(&mut rng, Group::SpecialOrthogonal, 3);
            assert!((r.det() - 1.0).abs() < 1e-12);
        }
        let mut r1 = seeded_rng(9);
        let mut r2 = seeded_rng(9);
        let a = random_orthogonal::<f64, _>(&mut r1, Group::Orthogonal, 3);
        let b = random_orthogonal::<f64, _>(&mut r2, Group::Orthogonal, 3);
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn reflection_sampling_covers_both_components() {
        let mut rng = seeded_rng(3);
        let mut saw = [false, false];
        for _ in 0..64 {
            let r = random_orthogonal::<f64, _>(&mut rng, Group::Orthogonal, 3);
            saw[if r.det() > 0.0 { 0 } else { 1 }] = true;
        }
        assert!(saw[0] && saw[1]);
    }
}
