use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Largest relative error between the taped gradient of a scalar function
/// and central differences with step `h`, over every coordinate of `x`.
///
/// The relative error of one coordinate is
/// `|a - c| / max(|a|, |c|, 1e-12)`.
pub fn grad_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    grad_check_many(|tape, vars| f(tape, vars[0]), std::slice::from_ref(x), h)
}

/// [`grad_check`] over several inputs at once.
pub fn grad_check_many<F>(f: F, xs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    if !(h > 0.0) {
        return Err(Error::InvalidParameter(format!("step must be > 0, got {h}")));
    }
    let eval = |inputs: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = xs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst: f64 = 0.0;
    let mut probe: Vec<Tensor> = xs.to_vec();
    for (k, v) in vars.iter().enumerate() {
        let analytic = grads
            .get(*v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(xs[k].shape()));
        for i in 0..xs[k].numel() {
            let orig = xs[k].data()[i];
            probe[k].data_mut()[i] = orig + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = orig - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = orig;
            let c = (up - down) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - c).abs() / a.abs().max(c.abs()).max(1e-12);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut rng = crate::rng::stream_rng(seed, 0);
        let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
        Tensor::matrix(rows, cols, data).unwrap()
    }

    #[test]
    fn linear_function_is_exact() {
        let x = random(3, 4, 1);
        let err = grad_check(|t, v| Ok(t.sum(v)), &x, 1e-5).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn matmul_gradients() {
        let a = random(5, 4, 2);
        let b = random(4, 3, 3);
        let w = random(5, 3, 4);
        let err = grad_check_many(
            |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let wc = t.constant(w.clone());
                let q = t.mul(p, wc)?;
                Ok(t.sum(q))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn softplus_matmul_chain() {
        let a = random(4, 3, 5);
        let b = random(3, 2, 6);
        let err = grad_check_many(
            |t, v| {
                let p = t.matmul(v[0], v[1])?;
                let s = t.softplus(p);
                Ok(t.mean(s))
            },
            &[a, b],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn wrong_backward_rule_is_detected() {
        let x = random(3, 3, 7);
        // d/dx sin x is cos x; register -sin x instead
        let err = grad_check(
            |t, v| {
                let y = t.map(v, f64::sin, |z| -z.sin());
                Ok(t.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(err > 1e-2, "{err}");
        let ok = grad_check(
            |t, v| {
                let y = t.map(v, f64::sin, f64::cos);
                Ok(t.sum(y))
            },
            &x,
            1e-5,
        )
        .unwrap();
        assert!(ok < 1e-6);
    }

    #[test]
    fn replay_is_deterministic() {
        let run = || {
            let mut tape = Tape::new();
            let a = tape.leaf(random(6, 5, 8));
            let b = tape.leaf(random(4, 5, 9));
            let p = tape.matmul_nt(a, b).unwrap();
            let s = tape.tanh(p);
            let l = tape.mean(s);
            let v = tape.value(l).item().unwrap();
            let g = tape.backward(l).unwrap();
            (v, g.get(a).unwrap().clone(), g.get(b).unwrap().clone())
        };
        assert_eq!(run(), run());
    }

    fn unary_case(op: usize, t: &mut Tape, v: Var) -> Var {
        match op {
            0 => t.exp(v),
            1 => {
                let s = t.square(v);
                let p = t.add_scalar(s, 0.5);
                t.log(p)
            }
            2 => t.tanh(v),
            3 => t.sigmoid(v),
            4 => t.softplus(v),
            5 => t.square(v),
            _ => t.scale(v, -1.7),
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn every_unary_op_passes(op in 0usize..7, seed in 0u64..10_000) {
            let x = random(3, 2, seed);
            let w = random(3, 2, seed + 1);
            let err = grad_check(
                |t, v| {
                    let y = unary_case(op, t, v);
                    let wc = t.constant(w.clone());
                    let z = t.mul(y, wc)?;
                    Ok(t.sum(z))
                },
                &x,
                1e-5,
            ).unwrap();
            prop_assert!(err < 1e-4, "op {} err {}", op, err);
        }

        #[test]
        fn every_structural_op_passes(op in 0usize..7, seed in 0u64..10_000) {
            let a = random(3, 4, seed);
            let b = random(3, 4, seed + 1);
            let r = random(1, 4, seed + 2);
            let w = random(3, 4, seed + 3);
            let err = grad_check_many(
                |t, v| {
                    let y = match op {
                        0 => t.add(v[0], v[1])?,
                        1 => t.sub(v[0], v[1])?,
                        2 => t.mul(v[0], v[1])?,
                        3 => t.add_row(v[0], v[2])?,
                        4 => t.repeat_rows(v[2], 3)?,
                        5 => {
                            let s = t.slice_cols(v[0], 1, 3)?;
                            let z = t.constant(Tensor::zeros(&[3, 2]));
                            let p = t.matmul_nt(s, z)?;
                            let q = t.matmul_nt(v[1], v[0])?;
                            let q = t.slice_cols(q, 0, 3)?;
                            let e = t.add(p, q)?;
                            t.matmul(e, v[0])?
                        }
                        _ => {
                            let m = t.mean(v[0]);
                            let m = t.repeat_rows(m, 3)?;
                            let m = t.matmul(m, v[2])?;
                            t.add(m, v[1])?
                        }
                    };
                    let wc = t.constant(w.clone());
                    let z = t.mul(y, wc)?;
                    Ok(t.sum(z))
                },
                &[a, b, r],
                1e-5,
            ).unwrap();
            prop_assert!(err < 1e-4, "op {} err {}", op, err);
        }
    }
}
