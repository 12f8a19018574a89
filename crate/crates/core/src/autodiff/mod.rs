//! Minimal reverse-mode automatic differentiation.

pub mod check;
pub mod init;
pub mod lstm;
pub mod optim;
pub mod tape;
pub mod tensor;

pub use check::{check_gradients, GradCheck};
pub use lstm::{bilstm, LstmVars};
pub use optim::{Adam, PlateauScheduler};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand_distr::{Distribution, Uniform};

    fn random(shape: &[usize], seed: u64) -> Tensor {
        let mut r = rng::stream(seed, 0);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| u.sample(&mut r)).collect()).unwrap()
    }

    /// Values bounded away from zero, for ops with a kink there.
    fn away_from_zero(shape: &[usize], seed: u64) -> Tensor {
        let t = random(shape, seed);
        let data = t.data().iter().map(|v| v.signum() * (0.1 + v.abs())).collect();
        Tensor::new(shape.to_vec(), data).unwrap()
    }

    fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let (l, c_in) = (x.shape()[0], x.shape()[1]);
        let (width, f) = (w.shape()[0], w.shape()[2]);
        let mut out = vec![0.0; l * f];
        for t in 0..l {
            for fo in 0..f {
                let mut s = b.data()[fo];
                for i in 0..width {
                    let src = t as isize + i as isize - (width / 2) as isize;
                    if src < 0 || src >= l as isize {
                        continue;
                    }
                    for c in 0..c_in {
                        s += x.data()[src as usize * c_in + c] * w.data()[(i * c_in + c) * f + fo];
                    }
                }
                out[t * f + fo] = s;
            }
        }
        out
    }

    fn conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Vec<f64> {
        let mut tape = Tape::new();
        let (xv, wv, bv) = (tape.input(x.clone()), tape.input(w.clone()), tape.input(b.clone()));
        let out = tape.conv1d(xv, wv, bv).unwrap();
        tape.value(out).data().to_vec()
    }

    #[test]
    fn conv1d_identity_kernel() {
        let x = random(&[9, 1], 1);
        let out = conv(&x, &Tensor::new(vec![1, 1, 1], vec![1.0]).unwrap(), &Tensor::zeros(&[1]));
        assert_eq!(out, x.data());
    }

    #[test]
    fn conv1d_matches_direct_summation() {
        let (x, w, b) = (random(&[12, 2], 2), random(&[3, 2, 4], 3), random(&[4], 4));
        for (a, o) in conv(&x, &w, &b).iter().zip(conv_oracle(&x, &w, &b)) {
            assert!((a - o).abs() <= 1e-12);
        }
    }

    #[test]
    fn conv1d_zero_input_gives_bias() {
        let b = random(&[3], 5);
        let out = conv(&Tensor::zeros(&[6, 2]), &random(&[4, 2, 3], 6), &b);
        for row in out.chunks(3) {
            assert_eq!(row, b.data());
        }
    }

    #[test]
    fn conv1d_rejects_mismatched_shapes() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::zeros(&[5, 2]));
        let w = tape.input(Tensor::zeros(&[3, 3, 4]));
        let b = tape.input(Tensor::zeros(&[4]));
        assert!(tape.conv1d(x, w, b).is_err());
    }

    #[test]
    fn relu_values_and_gradients() {
        let mut tape = Tape::new();
        let x = tape.leaf(0, Tensor::vector(vec![-1.0, 0.0, 2.0, 3.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0, 3.0]);
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.wrt(x).unwrap(), &[0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn dense_arithmetic() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::vector(vec![1.0, 2.0]));
        let w = tape.input(Tensor::new(vec![2, 1], vec![1.0, 1.0]).unwrap());
        let b = tape.input(Tensor::vector(vec![0.5]));
        let y = tape.dense(x, w, Some(b)).unwrap();
        assert_eq!(tape.value(y).data(), &[3.5]);
        let eye = tape.input(Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let y = tape.dense(x, eye, None).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn dropout_behaviour() {
        let mut tape = Tape::new();
        let x = tape.input(Tensor::filled(&[100_000], 1.0));
        let mut r = rng::stream(1, 0);
        assert_eq!(tape.dropout(x, 0.0, &mut r).unwrap(), x);
        let y = tape.dropout(x, 0.5, &mut r).unwrap();
        let mean = tape.value(y).data().iter().sum::<f64>() / 1e5;
        assert!((0.99..=1.01).contains(&mean), "mean {mean}");
        let masks: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                let y = tape.dropout(x, 0.3, &mut rng::stream(4, 4)).unwrap();
                tape.value(y).data().to_vec()
            })
            .collect();
        assert_eq!(masks[0], masks[1]);
        assert!(tape.dropout(x, 1.0, &mut r).is_err());
        assert!(tape.dropout(x, -0.1, &mut r).is_err());
    }

    #[test]
    fn backward_trivial_cases() {
        let mut tape = Tape::new();
        let x = tape.leaf(0, random(&[3, 2], 7));
        let s = tape.sum(x);
        assert_eq!(tape.backward(s).unwrap().wrt(x).unwrap(), &[1.0; 6]);

        let c = tape.input(Tensor::scalar(4.0));
        let g = tape.backward(c).unwrap();
        let grads = g.params(&[&[3, 2]]);
        assert_eq!(grads[0].data(), &[0.0; 6]);

        assert!(tape.backward(x).is_err());
    }

    #[test]
    fn shared_nodes_accumulate() {
        let mut tape = Tape::new();
        let x = tape.leaf(0, Tensor::vector(vec![3.0]));
        let y = tape.mul(x, x).unwrap();
        let z = tape.add(y, x).unwrap();
        assert_eq!(tape.backward(z).unwrap().wrt(x).unwrap(), &[7.0]);
    }

    fn assert_grad(inputs: &[Tensor], f: impl Fn(&mut Tape, &[Var]) -> crate::Result<Var>) {
        let r = check_gradients(inputs, check::DEFAULT_STEP, f).unwrap();
        assert!(r.max_rel_err < 1e-6, "{r:?}");
    }

    #[test]
    fn gradients_of_each_op() {
        let weights = random(&[5], 99);
        // Projects a tensor to a scalar with non-uniform weights.
        let project = move |t: &mut Tape, v: Var| -> crate::Result<Var> {
            let flat = if t.value(v).rank() == 1 { v } else { t.mean_time(v)? };
            let m = t.value(flat).len();
            let w = t.input(Tensor::vector(weights.data().iter().cycle().take(m).copied().collect()));
            let p = t.mul(flat, w)?;
            Ok(t.sum(p))
        };
        assert_grad(&[random(&[7, 2], 1), random(&[3, 2, 3], 2), random(&[3], 3)], |t, v| {
            let y = t.conv1d(v[0], v[1], v[2])?;
            project(t, y)
        });
        assert_grad(&[random(&[4], 4), random(&[4, 3], 5), random(&[3], 6)], |t, v| {
            let y = t.dense(v[0], v[1], Some(v[2]))?;
            project(t, y)
        });
        assert_grad(&[random(&[5], 7), random(&[5], 8)], |t, v| {
            let a = t.add(v[0], v[1])?;
            let m = t.mul(a, v[1])?;
            project(t, m)
        });
        assert_grad(&[away_from_zero(&[5], 9)], |t, v| {
            let y = t.relu(v[0]);
            project(t, y)
        });
        assert_grad(&[random(&[5], 10)], |t, v| {
            let s = t.sigmoid(v[0]);
            let h = t.tanh(s);
            project(t, h)
        });
        assert_grad(&[random(&[6, 3], 11)], |t, v| {
            let mut r = rng::stream(3, 3);
            let d = t.dropout(v[0], 0.5, &mut r)?;
            project(t, d)
        });
        assert_grad(&[random(&[6, 3], 12)], |t, v| {
            let r = t.row(v[0], 2)?;
            let s = t.slice(r, 1, 2)?;
            let c = t.concat(&[s, r])?;
            project(t, c)
        });
        assert_grad(&[random(&[1], 13)], |t, v| t.squared_error(v[0], 0.3));
    }

    #[test]
    fn gradients_of_bilstm() {
        let (c, h) = (2, 3);
        let inputs = [
            random(&[4, c], 20),
            random(&[c, 4 * h], 21),
            random(&[h, 4 * h], 22),
            random(&[4 * h], 23),
            random(&[c, 4 * h], 24),
            random(&[h, 4 * h], 25),
            random(&[4 * h], 26),
        ];
        assert_grad(&inputs, |t, v| {
            let fwd = LstmVars { wx: v[1], wh: v[2], b: v[3] };
            let bwd = LstmVars { wx: v[4], wh: v[5], b: v[6] };
            let out = bilstm(t, v[0], &fwd, &bwd)?;
            let w = t.input(Tensor::vector(vec![0.3, -0.7, 1.1, 0.5, -0.2, 0.9]));
            let p = t.mul(out, w)?;
            Ok(t.sum(p))
        });
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn conv1d_matches_oracle_on_small_shapes(
                l in 1usize..=16, w in 1usize..=8, c in 1usize..=4, f in 1usize..=4, seed in 0u64..1000
            ) {
                let (x, k, b) = (random(&[l, c], seed), random(&[w, c, f], seed + 1), random(&[f], seed + 2));
                for (a, o) in conv(&x, &k, &b).iter().zip(conv_oracle(&x, &k, &b)) {
                    prop_assert!((a - o).abs() <= 1e-12);
                }
            }

            #[test]
            fn conv1d_gradients_on_small_shapes(
                l in 1usize..=6, w in 1usize..=4, c in 1usize..=3, f in 1usize..=3, seed in 0u64..1000
            ) {
                let inputs = [random(&[l, c], seed), random(&[w, c, f], seed + 1), random(&[f], seed + 2)];
                let r = check_gradients(&inputs, check::DEFAULT_STEP, |t, v| {
                    let y = t.conv1d(v[0], v[1], v[2])?;
                    let y = t.tanh(y);
                    Ok(t.sum(y))
                }).unwrap();
                prop_assert!(r.max_rel_err < 1e-4, "{:?}", r);
            }
        }
    }
}
