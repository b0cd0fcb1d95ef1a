use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::{Error, Real, Tensor};

fn t(shape: &[usize], data: &[Real]) -> Tensor {
    Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
}

/// Direct nested-loop cross-correlation, independent of the im2col path.
fn conv_oracle(x: &Tensor, w: &Tensor, stride: usize, pad: usize) -> Tensor {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (wd + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; n * o * oh * ow];
    for b in 0..n {
        for oc in 0..o {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = 0.0;
                    for ic in 0..c {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((b * c + ic) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((oc * c + ic) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * o + oc) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    t(&[n, o, oh, ow], &out)
}

#[test]
fn matmul_by_hand() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[1, 2], &[1.0, 2.0]));
    let b = tape.constant(t(&[2, 1], &[3.0, 4.0]));
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c), &t(&[1, 1], &[11.0]));
}

#[test]
fn relu_by_definition() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(vec![-1.0, 0.0, 2.0]));
    let y = tape.relu(x).unwrap();
    assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
}

#[test]
fn impulse_response_is_the_rotated_kernel_centered_on_the_impulse() {
    let mut img = vec![0.0; 49];
    img[3 * 7 + 3] = 1.0;
    let x = t(&[1, 1, 7, 7], &img);
    let kernel: Vec<Real> = (1..=9).map(|v| v as Real).collect();
    let k = t(&[1, 1, 3, 3], &kernel);

    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let kv = tape.constant(k.clone());
    let y = tape.conv2d(xv, kv, 1, 1).unwrap();
    let got = tape.value(y);
    assert_eq!(got, &conv_oracle(&x, &k, 1, 1));
    for dy in 0..3 {
        for dx in 0..3 {
            let v = got.data()[(2 + dy) * 7 + 2 + dx];
            assert_eq!(v, kernel[(2 - dy) * 3 + (2 - dx)]);
        }
    }
    // For a symmetric kernel the response is the kernel itself.
    let sym = t(&[1, 1, 3, 3], &[1.0, 2.0, 1.0, 2.0, 4.0, 2.0, 1.0, 2.0, 1.0]);
    let sv = tape.constant(sym.clone());
    let ys = tape.conv2d(xv, sv, 1, 1).unwrap();
    for dy in 0..3 {
        for dx in 0..3 {
            assert_eq!(tape.value(ys).data()[(2 + dy) * 7 + 2 + dx], sym.data()[dy * 3 + dx]);
        }
    }
}

#[test]
fn conv_matches_oracle_with_stride_padding_and_batches() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for (stride, pad) in [(1, 0), (2, 0), (1, 2), (2, 1), (3, 1)] {
        let x = random(&mut rng, &[2, 3, 7, 6]);
        let w = random(&mut rng, &[4, 3, 3, 2]);
        let mut tape = Tape::new();
        let (xv, wv) = (tape.constant(x.clone()), tape.constant(w.clone()));
        let y = tape.conv2d(xv, wv, stride, pad).unwrap();
        let oracle = conv_oracle(&x, &w, stride, pad);
        assert_eq!(tape.value(y).shape(), oracle.shape());
        for (a, b) in tape.value(y).data().iter().zip(oracle.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn shape_errors_name_the_primitive_and_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
    let img = tape.constant(Tensor::zeros(&[1, 2, 5, 5]));
    let w = tape.constant(Tensor::zeros(&[1, 3, 3, 3]));
    assert!(matches!(tape.conv2d(img, w, 1, 0), Err(Error::ShapeMismatch { op: "conv2d", .. })));
}

#[test]
fn sum_of_parameter_gives_ones() {
    let mut tape = Tape::new();
    let w = tape.param(Tensor::full(&[2, 3, 4], 0.7), ParamId(0));
    let loss = tape.sum(w).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.param(ParamId(0)).unwrap(), &Tensor::full(&[2, 3, 4], 1.0));
}

#[test]
fn zero_scaled_parameter_gives_zero_gradient() {
    let mut tape = Tape::new();
    let w = tape.param(Tensor::full(&[5], 3.0), ParamId(4));
    let z = tape.scale(w, 0.0).unwrap();
    let loss = tape.sum(z).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.param(ParamId(4)).unwrap(), &Tensor::zeros(&[5]));
}

#[test]
fn backward_rejects_non_scalar_and_foreign_losses() {
    let mut tape = Tape::new();
    let w = tape.param(Tensor::zeros(&[3]), ParamId(0));
    assert!(matches!(tape.backward(w), Err(Error::Backward(_))));
    let mut other = Tape::new();
    let x = other.param(Tensor::zeros(&[1]), ParamId(0));
    let l = other.sum(x).unwrap();
    assert!(matches!(tape.backward(l), Err(Error::Backward(_))));
    let mut off = Tape::inference();
    let y = off.param(Tensor::zeros(&[1]), ParamId(0));
    let l = off.sum(y).unwrap();
    assert!(off.backward(l).is_err());
}

#[test]
fn non_finite_values_surface_as_errors() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::from_vec(vec![Real::MAX, Real::MAX]));
    assert!(matches!(tape.scale(x, 10.0), Err(Error::NonFinite { op: "scale" })));
}

#[test]
fn each_node_is_replayed_once_and_shared_uses_accumulate() {
    // loss = sum(x * x) + sum(x): x is consumed three times.
    let mut tape = Tape::new();
    let x = tape.variable(Tensor::from_vec(vec![1.0, -2.0, 3.0]));
    let sq = tape.mul(x, x).unwrap();
    let a = tape.sum(sq).unwrap();
    let b = tape.sum(x).unwrap();
    let loss = tape.add(a, b).unwrap();
    let grads = tape.backward(loss).unwrap();
    assert_eq!(grads.wrt(x).unwrap().data(), &[3.0, -3.0, 7.0]);
    assert_eq!(grads.visited_nodes(), tape.len());
}

#[test]
fn gradient_of_sum_of_losses_is_sum_of_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let w0 = random(&mut rng, &[4, 3]);
    let x0 = random(&mut rng, &[2, 4]);
    let build = |tape: &mut Tape, which: u8| {
        let w = tape.param(w0.clone(), ParamId(0));
        let x = tape.constant(x0.clone());
        let h = tape.matmul(x, w).unwrap();
        let l1 = tape.softmax_cross_entropy(h, &[0, 2]).unwrap();
        let r = tape.tanh(h).unwrap();
        let l2 = tape.sum(r).unwrap();
        match which {
            1 => l1,
            2 => l2,
            _ => tape.add(l1, l2).unwrap(),
        }
    };
    let grad = |which| {
        let mut tape = Tape::new();
        let l = build(&mut tape, which);
        tape.backward(l).unwrap().param(ParamId(0)).unwrap().clone()
    };
    let (g1, g2, g12) = (grad(1), grad(2), grad(0));
    for ((a, b), c) in g1.data().iter().zip(g2.data()).zip(g12.data()) {
        assert!((a + b - c).abs() < 1e-12);
    }
}

#[test]
fn inference_tape_is_bit_identical_to_recording_tape() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[2, 2, 6, 6]);
    let w = random(&mut rng, &[3, 2, 3, 3]);
    let b = random(&mut rng, &[3]);
    let run = |tape: &mut Tape| {
        let xv = tape.constant(x.clone());
        let wv = tape.param(w.clone(), ParamId(0));
        let bv = tape.param(b.clone(), ParamId(1));
        let c = tape.conv2d(xv, wv, 1, 1).unwrap();
        let c = tape.add_bias(c, bv).unwrap();
        let r = tape.relu(c).unwrap();
        let p = tape.max_pool2d(r, 2, 2).unwrap();
        let f = tape.flatten(p).unwrap();
        let s = tape.softmax(f).unwrap();
        tape.value(s).clone()
    };
    assert_eq!(run(&mut Tape::new()), run(&mut Tape::inference()));
}

#[test]
fn max_pool_ties_route_to_first_index() {
    let mut tape = Tape::new();
    let x = tape.variable(t(&[1, 1, 2, 2], &[5.0, 5.0, 5.0, 1.0]));
    let p = tape.max_pool2d(x, 2, 2).unwrap();
    let l = tape.sum(p).unwrap();
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn softmax_cross_entropy_symmetric_logits() {
    let mut tape = Tape::new();
    let z = tape.variable(t(&[1, 2], &[0.3, 0.3]));
    let l = tape.softmax_cross_entropy(z, &[0]).unwrap();
    assert!((tape.value(l).data()[0] - (2.0 as Real).ln()).abs() < 1e-15);
    let g = tape.backward(l).unwrap();
    assert_eq!(g.wrt(z).unwrap().data(), &[-0.5, 0.5]);
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

/// Inputs for kinked primitives: magnitudes at least 0.05 and pairwise gaps
/// of at least 0.01, so a finite-difference step never crosses a kink.
fn spaced(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n: usize = shape.iter().product();
    let mut vals: Vec<Real> = (0..n)
        .map(|i| {
            let mag = 0.05 + 0.013 * i as Real;
            if i % 2 == 0 { mag } else { -mag }
        })
        .collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        vals.swap(i, j);
    }
    Tensor::new(shape.to_vec(), vals).unwrap()
}

pub(crate) fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central-difference check of `prim` applied to `inputs`, reduced to a scalar
/// with fixed random weights.
fn check_primitive(prim: &Primitive, inputs: &[Tensor], rng: &mut ChaCha8Rng) {
    let forward = |vals: &[Tensor], weights: Option<&[Real]>| -> (Real, Vec<Real>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.variable(v.clone())).collect();
        let out = tape.apply(prim, &vars).unwrap();
        let w: Vec<Real> = match weights {
            Some(w) => w.to_vec(),
            None => vec![0.0; tape.value(out).numel()],
        };
        let l = tape.weighted_sum(out, &w).unwrap();
        (tape.value(l).data()[0], w)
    };
    let n_out = {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|v| tape.variable(v.clone())).collect();
        let out = tape.apply(prim, &vars).unwrap();
        tape.value(out).numel()
    };
    let weights: Vec<Real> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();

    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|v| tape.variable(v.clone())).collect();
    let out = tape.apply(prim, &vars).unwrap();
    let l = tape.weighted_sum(out, &weights).unwrap();
    let grads = tape.backward(l).unwrap();

    let h = 1e-5;
    for (k, var) in vars.iter().enumerate() {
        let analytic = grads.wrt(*var).unwrap();
        for j in 0..inputs[k].numel() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= h;
            let fd = (forward(&plus, Some(&weights)).0 - forward(&minus, Some(&weights)).0) / (2.0 * h);
            let a = analytic.data()[j];
            assert!(
                rel_err(a as f64, fd as f64) < 1e-4,
                "{prim:?} input {k} element {j}: analytic {a} vs fd {fd}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn primitive_adjoints_match_finite_differences(seed in any::<u64>(), which in 0usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut d = |lo: usize, hi: usize| rng.random_range(lo..=hi);
        let (a, b, c) = (d(1, 3), d(1, 4), d(1, 4));
        let (h, w, k, s, p) = (d(3, 6), d(3, 6), d(1, 3), d(1, 2), d(0, 1));
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        match which {
            0 => check_primitive(&Primitive::MatMul,
                &[random(&mut rng, &[a, b]), random(&mut rng, &[b, c])], &mut rng),
            1 => check_primitive(&Primitive::Conv2d { stride: s, padding: p },
                &[random(&mut rng, &[a, b, h, w]), random(&mut rng, &[c, b, k, k])], &mut rng),
            2 => check_primitive(&Primitive::MaxPool2d { size: k.min(h).min(w), stride: s },
                &[spaced(&mut rng, &[a, b, h, w])], &mut rng),
            3 => check_primitive(&Primitive::AddBias,
                &[random(&mut rng, &[a, b, h]), random(&mut rng, &[b])], &mut rng),
            4 => check_primitive(&Primitive::Relu, &[spaced(&mut rng, &[a, b, c])], &mut rng),
            5 => check_primitive(&Primitive::Softmax, &[random(&mut rng, &[a, c + 1])], &mut rng),
            6 => check_primitive(&Primitive::Reshape(vec![a * b, c]), &[random(&mut rng, &[a, b, c])], &mut rng),
            _ => check_primitive(&Primitive::Flatten, &[random(&mut rng, &[a, b, h])], &mut rng),
        }
    }

    #[test]
    fn elementwise_and_loss_adjoints_match_finite_differences(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = random(&mut rng, &[3, 4]);
        let y0 = random(&mut rng, &[3, 4]);
        let labels: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
        let f = |x: &Tensor, y: &Tensor, tape: &mut Tape| {
            let xv = tape.variable(x.clone());
            let yv = tape.variable(y.clone());
            let m = tape.mul(xv, yv).unwrap();
            let th = tape.tanh(m).unwrap();
            let s = tape.sub(th, xv).unwrap();
            let sc = tape.scale(s, 1.7).unwrap();
            let a = tape.add(sc, yv).unwrap();
            let ce = tape.softmax_cross_entropy(a, &labels).unwrap();
            let sm = tape.sum(a).unwrap();
            let l = tape.add(ce, sm).unwrap();
            (xv, yv, l)
        };
        let mut tape = Tape::new();
        let (xv, yv, l) = f(&x0, &y0, &mut tape);
        let g = tape.backward(l).unwrap();
        let value = |x: &Tensor, y: &Tensor| {
            let mut tp = Tape::new();
            let (_, _, l) = f(x, y, &mut tp);
            tp.value(l).data()[0]
        };
        let h = 1e-5;
        for j in 0..12 {
            let (mut xp, mut xm) = (x0.clone(), x0.clone());
            xp.data_mut()[j] += h;
            xm.data_mut()[j] -= h;
            let fd = (value(&xp, &y0) - value(&xm, &y0)) / (2.0 * h);
            prop_assert!(rel_err(g.wrt(xv).unwrap().data()[j] as f64, fd as f64) < 1e-4);
            let (mut yp, mut ym) = (y0.clone(), y0.clone());
            yp.data_mut()[j] += h;
            ym.data_mut()[j] -= h;
            let fd = (value(&x0, &yp) - value(&x0, &ym)) / (2.0 * h);
            prop_assert!(rel_err(g.wrt(yv).unwrap().data()[j] as f64, fd as f64) < 1e-4);
        }
    }
}
