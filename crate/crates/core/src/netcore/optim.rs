//! AdamW with decoupled weight decay, cosine learning-rate schedule with
//! linear warmup, and global-norm gradient clipping.

use crate::scalar::Scalar;

/// AdamW optimizer state (bias-corrected first/second moments).
#[derive(Debug, Clone)]
pub struct AdamW<T> {
    m: Vec<T>,
    v: Vec<T>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub weight_decay: T,
}

impl<T: Scalar> AdamW<T> {
    pub fn new(n_params: usize, weight_decay: T) -> Self {
        AdamW {
            m: vec![T::zero(); n_params],
            v: vec![T::zero(); n_params],
            step: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            eps: T::of(1e-8),
            weight_decay,
        }
    }

    /// One decoupled-decay update: p ← p·(1 − lr·λ) − lr·m̂/(√v̂ + ε).
    pub fn step(&mut self, params: &mut [T], grads: &[T], lr: T) {
        assert_eq!(params.len(), self.m.len(), "adamw: state shape mismatch");
        assert_eq!(grads.len(), self.m.len(), "adamw: gradient shape mismatch");
        self.step += 1;
        let b1 = self.beta1;
        let b2 = self.beta2;
        let bc1 = T::one() - b1.powi(self.step as i32);
        let bc2 = T::one() - b2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = b1 * self.m[i] + (T::one() - b1) * g;
            self.v[i] = b2 * self.v[i] + (T::one() - b2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] = params[i] * (T::one() - lr * self.weight_decay)
                - lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Linear warmup to `base_lr`, then half-cosine decay to zero at `total`.
pub fn cosine_lr_schedule<T: Scalar>(step: usize, total: usize, warmup: usize, base_lr: T) -> T {
    assert!(step <= total, "schedule step out of range");
    if warmup > 0 && step < warmup {
        return base_lr * T::of(step as f64) / T::of(warmup as f64);
    }
    if total == warmup {
        return base_lr;
    }
    let progress = (step - warmup) as f64 / (total - warmup) as f64;
    base_lr * T::of(0.5) * (T::one() + T::of((std::f64::consts::PI * progress).cos()))
}

/// Scales gradients so their global norm does not exceed `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_gradient_norm<T: Scalar>(grads: &mut [T], max_norm: T) -> T {
    let mut sq = T::zero();
    for g in grads.iter() {
        sq += *g * *g;
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > T::zero() {
        let f = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= f;
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_zero_decay_is_noop() {
        let mut opt = AdamW::<f64>::new(3, 0.0);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0, 0.0, 0.0], 0.1);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn zero_grad_decay_shrinks_multiplicatively() {
        let lambda = 0.01;
        let lr = 0.1;
        let mut opt = AdamW::<f64>::new(1, lambda);
        let mut p = vec![2.0];
        opt.step(&mut p, &[0.0], lr);
        assert!((p[0] - 2.0 * (1.0 - lr * lambda)).abs() < 1e-15);
    }

    #[test]
    fn optimizes_scalar_quadratic() {
        // f(w) = (w-2)^2, gradient 2(w-2); 50 steps at lr 0.1.
        let mut opt = AdamW::<f64>::new(1, 0.0);
        let mut w = vec![0.0];
        for _ in 0..50 {
            let g = 2.0 * (w[0] - 2.0);
            opt.step(&mut w, &[g], 0.1);
        }
        assert!((w[0] - 2.0).abs() < 0.1, "w = {}", w[0]);
    }

    #[test]
    fn schedule_pins() {
        let base = 0.02f64;
        assert_eq!(cosine_lr_schedule(0, 100, 10, base), 0.0);
        assert!((cosine_lr_schedule(10, 100, 10, base) - base).abs() < 1e-15);
        assert!(cosine_lr_schedule(100, 100, 10, base).abs() < 1e-12);
        // no warmup: starts at base
        assert!((cosine_lr_schedule(0, 100, 0, base) - base).abs() < 1e-15);
    }

    #[test]
    fn clip_never_increases_norm() {
        let mut g = vec![3.0f64, 4.0];
        let before = clip_gradient_norm(&mut g, 0.5);
        assert!((before - 5.0).abs() < 1e-15);
        let after: f64 = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((after - 0.5).abs() < 1e-12);

        let mut small = vec![0.1f64, 0.2];
        clip_gradient_norm(&mut small, 0.5);
        assert_eq!(small, vec![0.1, 0.2]);
    }
}
