//! Central finite-difference gradient verification.

use crate::scalar::Scalar;

/// Worst-case relative disagreement between analytic gradients and a
/// central finite difference of `loss_fn` (step `h`) over every
/// parameter. The relative error uses a unit floor in the denominator,
/// |a − fd| / max(|a|, |fd|, 1), so tiny gradients are compared at the
/// finite-difference noise scale rather than blown up.
pub fn max_fd_relative_error<T: Scalar>(
    params: &mut [T],
    analytic: &[T],
    mut loss_fn: impl FnMut(&[T]) -> T,
    h: T,
) -> (T, usize) {
    assert_eq!(params.len(), analytic.len());
    let mut worst = T::zero();
    let mut worst_idx = 0;
    for i in 0..params.len() {
        let orig = params[i];
        params[i] = orig + h;
        let up = loss_fn(params);
        params[i] = orig - h;
        let down = loss_fn(params);
        params[i] = orig;
        let fd = (up - down) / (h + h);
        let a = analytic[i];
        let denom = a.abs().max(fd.abs()).max(T::one());
        let err = (a - fd).abs() / denom;
        if err > worst {
            worst = err;
            worst_idx = i;
        }
    }
    (worst, worst_idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcore::mlp::{Mlp, ParamStore, Phase};
    use crate::netcore::tape::Tape;
    use crate::reps::seeded_rng;

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = seeded_rng(7);
        let mut mlp = Mlp::new(&mut store, &mut rng, "gc", 3, &[6, 4], 2, false);
        let input = [0.4, -0.9, 1.3];
        let target = [0.2, -0.5];

        let loss_of = |mlp: &mut Mlp<f64>, probe: &ParamStore<f64>| -> (f64, Vec<f64>) {
            let mut tape = Tape::new();
            let bound = probe.bind(&mut tape);
            let x = tape.constants(&input);
            let y = mlp.forward(&mut tape, probe, &bound, &x, Phase::Eval);
            let mut acc = tape.constant(0.0);
            for (k, &v) in y.iter().enumerate() {
                let t = tape.constant(target[k]);
                let d = tape.sub(v, t);
                let sq = tape.mul(d, d);
                acc = tape.add(acc, sq);
            }
            tape.backward(acc);
            (tape.val(acc), probe.gradients(&tape, &bound))
        };

        let (_, analytic) = loss_of(&mut mlp, &store.clone());
        let mut data = store.data().to_vec();
        let (err, idx) = max_fd_relative_error(
            &mut data,
            &analytic,
            |d| {
                let mut probe = store.clone();
                probe.data_mut().copy_from_slice(d);
                loss_of(&mut mlp, &probe).0
            },
            1e-6,
        );
        assert!(err < 1e-6, "max relative error {err} at param {idx}");
    }
}
