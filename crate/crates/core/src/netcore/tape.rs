//! Flat-arena reverse-mode tape over scalar values.
//!
//! Every [`Value`] is one scalar node; forward values are computed eagerly
//! as nodes are pushed, so the node list is already in topological order
//! and the backward pass is a single reverse sweep. Wide linear algebra is
//! expressed through fused n-ary primitives (`dot`/`affine`/`sum`/`max`)
//! whose operand lists live in a shared side arena, which keeps node
//! counts small enough to train on.

use crate::scalar::Scalar;

/// Handle to one scalar node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Value(u32);

impl Value {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

const NO_BIAS: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
enum Op<T> {
    Const,
    Input,
    Add(u32, u32),
    Sub(u32, u32),
    Mul(u32, u32),
    Neg(u32),
    Recip(u32),
    Sqrt(u32),
    Exp(u32),
    Ln(u32),
    Silu(u32),
    Scale(u32, T),
    AddConst(u32, T),
    /// Σ a·b (+ bias node unless NO_BIAS); operand ids at
    /// args[off..off+len] and args[off+len..off+2len].
    Affine { off: u32, len: u32, bias: u32 },
    Sum { off: u32, len: u32 },
    /// Channel max; `winner` is the argmax node id (ties resolved toward
    /// the earliest operand at forward time).
    Max { winner: u32 },
    /// scale·x·inv + shift, the per-element tail of batch standardization.
    NormAffine { x: u32, inv: u32, scale: u32, shift: u32 },
}

/// Reverse-mode tape: node list in topological order plus value/gradient
/// arenas. Reset between steps to reuse capacity.
pub struct Tape<T> {
    ops: Vec<Op<T>>,
    vals: Vec<T>,
    grads: Vec<T>,
    args: Vec<u32>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape {
            ops: Vec::new(),
            vals: Vec::new(),
            grads: Vec::new(),
            args: Vec::new(),
        }
    }

    /// Clears all nodes, keeping allocations.
    pub fn reset(&mut self) {
        self.ops.clear();
        self.vals.clear();
        self.grads.clear();
        self.args.clear();
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    #[inline]
    fn push(&mut self, op: Op<T>, val: T) -> Value {
        let id = self.ops.len() as u32;
        self.ops.push(op);
        self.vals.push(val);
        Value(id)
    }

    #[inline]
    pub fn val(&self, v: Value) -> T {
        self.vals[v.index()]
    }

    /// Gradient of the last `backward` loss w.r.t. `v`. Constants report
    /// zero by contract.
    pub fn grad(&self, v: Value) -> T {
        match self.ops[v.index()] {
            Op::Const => T::zero(),
            _ => self.grads[v.index()],
        }
    }

    /// Leaf with no gradient.
    pub fn constant(&mut self, x: T) -> Value {
        self.push(Op::Const, x)
    }

    /// Leaf that participates in differentiation (parameter or probed input).
    pub fn input(&mut self, x: T) -> Value {
        self.push(Op::Input, x)
    }

    pub fn add(&mut self, a: Value, b: Value) -> Value {
        let v = self.vals[a.index()] + self.vals[b.index()];
        self.push(Op::Add(a.0, b.0), v)
    }

    pub fn sub(&mut self, a: Value, b: Value) -> Value {
        let v = self.vals[a.index()] - self.vals[b.index()];
        self.push(Op::Sub(a.0, b.0), v)
    }

    pub fn mul(&mut self, a: Value, b: Value) -> Value {
        let v = self.vals[a.index()] * self.vals[b.index()];
        self.push(Op::Mul(a.0, b.0), v)
    }

    pub fn neg(&mut self, a: Value) -> Value {
        let v = -self.vals[a.index()];
        self.push(Op::Neg(a.0), v)
    }

    pub fn recip(&mut self, a: Value) -> Value {
        let v = T::one() / self.vals[a.index()];
        self.push(Op::Recip(a.0), v)
    }

    pub fn div(&mut self, a: Value, b: Value) -> Value {
        let r = self.recip(b);
        self.mul(a, r)
    }

    pub fn sqrt(&mut self, a: Value) -> Value {
        let v = self.vals[a.index()].sqrt();
        self.push(Op::Sqrt(a.0), v)
    }

    pub fn exp(&mut self, a: Value) -> Value {
        let v = self.vals[a.index()].exp();
        self.push(Op::Exp(a.0), v)
    }

    pub fn ln(&mut self, a: Value) -> Value {
        let v = self.vals[a.index()].ln();
        self.push(Op::Ln(a.0), v)
    }

    /// silu(x) = x · sigmoid(x).
    pub fn silu(&mut self, a: Value) -> Value {
        let x = self.vals[a.index()];
        let v = x * sigmoid(x);
        self.push(Op::Silu(a.0), v)
    }

    pub fn scale(&mut self, a: Value, c: T) -> Value {
        let v = self.vals[a.index()] * c;
        self.push(Op::Scale(a.0, c), v)
    }

    pub fn add_const(&mut self, a: Value, c: T) -> Value {
        let v = self.vals[a.index()] + c;
        self.push(Op::AddConst(a.0, c), v)
    }

    fn push_args(&mut self, a: &[Value], b: &[Value]) -> (u32, u32) {
        debug_assert_eq!(a.len(), b.len());
        let off = self.args.len() as u32;
        self.args.extend(a.iter().map(|v| v.0));
        self.args.extend(b.iter().map(|v| v.0));
        (off, a.len() as u32)
    }

    /// Fused inner product Σ aᵢ·bᵢ as a single node.
    pub fn dot(&mut self, a: &[Value], b: &[Value]) -> Value {
        let (off, len) = self.push_args(a, b);
        let mut acc = T::zero();
        for k in 0..len as usize {
            acc += self.vals[self.args[off as usize + k] as usize]
                * self.vals[self.args[off as usize + len as usize + k] as usize];
        }
        self.push(Op::Affine { off, len, bias: NO_BIAS }, acc)
    }

    /// Fused Σ wᵢ·xᵢ + bias.
    pub fn affine(&mut self, w: &[Value], x: &[Value], bias: Value) -> Value {
        let (off, len) = self.push_args(w, x);
        let mut acc = self.vals[bias.index()];
        for k in 0..len as usize {
            acc += self.vals[self.args[off as usize + k] as usize]
                * self.vals[self.args[off as usize + len as usize + k] as usize];
        }
        self.push(Op::Affine { off, len, bias: bias.0 }, acc)
    }

    /// n-ary sum; the empty sum is a constant zero.
    pub fn sum(&mut self, xs: &[Value]) -> Value {
        if xs.is_empty() {
            return self.constant(T::zero());
        }
        let off = self.args.len() as u32;
        self.args.extend(xs.iter().map(|v| v.0));
        let mut acc = T::zero();
        for v in xs {
            acc += self.vals[v.index()];
        }
        self.push(Op::Sum { off, len: xs.len() as u32 }, acc)
    }

    /// Channel-wise max; gradient routes to the argmax element only, ties
    /// resolved toward the lowest operand position.
    pub fn max(&mut self, xs: &[Value]) -> Value {
        assert!(!xs.is_empty(), "max over empty operand list");
        let mut winner = xs[0];
        let mut best = self.vals[winner.index()];
        for &v in &xs[1..] {
            let x = self.vals[v.index()];
            if x > best {
                best = x;
                winner = v;
            }
        }
        self.push(Op::Max { winner: winner.0 }, best)
    }

    /// scale·x·inv + shift as one node (x is the pre-centered deviation).
    pub fn norm_affine(&mut self, x: Value, inv: Value, scale: Value, shift: Value) -> Value {
        let v = self.vals[scale.index()] * self.vals[x.index()] * self.vals[inv.index()]
            + self.vals[shift.index()];
        self.push(
            Op::NormAffine { x: x.0, inv: inv.0, scale: scale.0, shift: shift.0 },
            v,
        )
    }

    /// Reverse sweep seeding d loss/d loss = 1. Visits each node exactly
    /// once in reverse topological (= reverse insertion) order.
    pub fn backward(&mut self, loss: Value) {
        let n = self.ops.len();
        self.grads.clear();
        self.grads.resize(n, T::zero());
        self.grads[loss.index()] = T::one();
        for i in (0..n).rev() {
            let g = self.grads[i];
            if g == T::zero() {
                continue;
            }
            match self.ops[i] {
                Op::Const | Op::Input => {}
                Op::Add(a, b) => {
                    self.grads[a as usize] += g;
                    self.grads[b as usize] += g;
                }
                Op::Sub(a, b) => {
                    self.grads[a as usize] += g;
                    self.grads[b as usize] -= g;
                }
                Op::Mul(a, b) => {
                    let va = self.vals[a as usize];
                    let vb = self.vals[b as usize];
                    self.grads[a as usize] += g * vb;
                    self.grads[b as usize] += g * va;
                }
                Op::Neg(a) => {
                    self.grads[a as usize] -= g;
                }
                Op::Recip(a) => {
                    let y = self.vals[i];
                    self.grads[a as usize] -= g * y * y;
                }
                Op::Sqrt(a) => {
                    let y = self.vals[i];
                    self.grads[a as usize] += g / (y + y);
                }
                Op::Exp(a) => {
                    self.grads[a as usize] += g * self.vals[i];
                }
                Op::Ln(a) => {
                    self.grads[a as usize] += g / self.vals[a as usize];
                }
                Op::Silu(a) => {
                    let x = self.vals[a as usize];
                    let s = sigmoid(x);
                    self.grads[a as usize] += g * (s + x * s * (T::one() - s));
                }
                Op::Scale(a, c) => {
                    self.grads[a as usize] += g * c;
                }
                Op::AddConst(a, _) => {
                    self.grads[a as usize] += g;
                }
                Op::Affine { off, len, bias } => {
                    let off = off as usize;
                    let len = len as usize;
                    for k in 0..len {
                        let a = self.args[off + k] as usize;
                        let b = self.args[off + len + k] as usize;
                        let va = self.vals[a];
                        let vb = self.vals[b];
                        self.grads[a] += g * vb;
                        self.grads[b] += g * va;
                    }
                    if bias != NO_BIAS {
                        self.grads[bias as usize] += g;
                    }
                }
                Op::Sum { off, len } => {
                    for k in 0..len as usize {
                        let a = self.args[off as usize + k] as usize;
                        self.grads[a] += g;
                    }
                }
                Op::Max { winner } => {
                    self.grads[winner as usize] += g;
                }
                Op::NormAffine { x, inv, scale, shift } => {
                    let vx = self.vals[x as usize];
                    let vi = self.vals[inv as usize];
                    let vs = self.vals[scale as usize];
                    self.grads[x as usize] += g * vs * vi;
                    self.grads[inv as usize] += g * vs * vx;
                    self.grads[scale as usize] += g * vx * vi;
                    self.grads[shift as usize] += g;
                }
            }
        }
    }

    /// Lifts a slice of plain scalars to constant nodes.
    pub fn constants(&mut self, xs: &[T]) -> Vec<Value> {
        xs.iter().map(|&x| self.constant(x)).collect()
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
