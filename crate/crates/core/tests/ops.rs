use gbx_core::ops::*;
use gbx_core::verify::{central_diff, rel_error};
use gbx_core::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let len = shape.iter().product();
    Tensor::new(shape, (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

fn with_data(t: &Tensor, data: &[f64]) -> Tensor {
    Tensor::new(t.shape(), data.to_vec()).unwrap()
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| rel_error(*x, *y)).fold(0.0, f64::max)
}

// Scalarize an output with fixed random weights.
fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn naive_conv(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Vec<f64> {
    let (ci, h, ww) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (co, kh, kw) = (w.shape()[0], w.shape()[2], w.shape()[3]);
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (ww + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0; co * oh * ow];
    for o in 0..co {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut s = b.data()[o];
                for c in 0..ci {
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            let ix = (ox * stride + kx) as isize - pad as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= ww as isize {
                                continue;
                            }
                            s += w.data()[((o * ci + c) * kh + ky) * kw + kx]
                                * x.data()[(c * h + iy as usize) * ww + ix as usize];
                        }
                    }
                }
                out[(o * oh + oy) * ow + ox] = s;
            }
        }
    }
    out
}

fn naive_pool(x: &Tensor, k: usize, s: usize) -> Vec<f64> {
    let (c, h, w) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (oh, ow) = ((h - k) / s + 1, (w - k) / s + 1);
    let mut out = Vec::new();
    for ch in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut m = f64::NEG_INFINITY;
                for dy in 0..k {
                    for dx in 0..k {
                        m = m.max(x.data()[(ch * h + oy * s + dy) * w + ox * s + dx]);
                    }
                }
                out.push(m);
            }
        }
    }
    out
}

#[test]
fn conv_two_by_five_matches_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = random(&mut rng, &[2, 5, 5]);
    let w = random(&mut rng, &[3, 2, 3, 3]);
    let b = random(&mut rng, &[3]);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        let y = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
        let oracle = naive_conv(&x, &w, &b, stride, pad);
        for (a, o) in y.data().iter().zip(&oracle) {
            assert!((a - o).abs() <= 1e-12);
        }
    }
}

#[test]
fn conv_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for (stride, pad) in [(1, 0), (1, 1), (2, 1)] {
        let x = random(&mut rng, &[2, 5, 6]);
        let w = random(&mut rng, &[3, 2, 3, 3]);
        let b = random(&mut rng, &[3]);
        let y = conv2d_forward(&x, &w, &b, stride, pad).unwrap();
        let r = random(&mut rng, y.shape());
        let g = conv2d_backward(&r, &x, &w, stride, pad).unwrap();
        let fx = central_diff(x.data(), |d| dot(&conv2d_forward(&with_data(&x, d), &w, &b, stride, pad).unwrap(), &r));
        let fw = central_diff(w.data(), |d| dot(&conv2d_forward(&x, &with_data(&w, d), &b, stride, pad).unwrap(), &r));
        let fb = central_diff(b.data(), |d| dot(&conv2d_forward(&x, &w, &with_data(&b, d), stride, pad).unwrap(), &r));
        assert!(max_rel(g.input.data(), &fx) < 1e-6);
        assert!(max_rel(g.weights.data(), &fw) < 1e-6);
        assert!(max_rel(g.bias.data(), &fb) < 1e-6);
    }
}

#[test]
fn relu_backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    // keep every entry away from the kink
    let mut x = random(&mut rng, &[3, 4, 4]);
    x.data_mut().iter_mut().for_each(|v| *v += 0.1 * v.signum());
    let r = random(&mut rng, x.shape());
    let g = relu_backward(&r, &x).unwrap();
    let fd = central_diff(x.data(), |d| dot(&relu_forward(&with_data(&x, d)), &r));
    assert!(max_rel(g.data(), &fd) < 1e-6);
}

#[test]
fn pool_matches_loop_oracle_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&mut rng, &[3, 8, 8]);
    for (k, s) in [(2, 2), (3, 2), (2, 1)] {
        let p = maxpool_forward(&x, k, s).unwrap();
        assert_eq!(p.output.data(), &naive_pool(&x, k, s)[..]);
        let r = random(&mut rng, p.output.shape());
        let g = maxpool_backward(&r, &p.argmax, x.shape()).unwrap();
        let fd = central_diff(x.data(), |d| dot(&maxpool_forward(&with_data(&x, d), k, s).unwrap().output, &r));
        assert!(max_rel(g.data(), &fd) < 1e-6);
    }
}

#[test]
fn fc_matches_loop_oracle_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = random(&mut rng, &[2, 3, 3]);
    let w = random(&mut rng, &[4, 18]);
    let b = random(&mut rng, &[4]);
    let y = fc_forward(&x, &w, &b).unwrap();
    for o in 0..4 {
        let v: f64 = b.data()[o] + (0..18).map(|i| w.data()[o * 18 + i] * x.data()[i]).sum::<f64>();
        assert!((y.data()[o] - v).abs() <= 1e-12);
    }
    let r = random(&mut rng, &[4]);
    let g = fc_backward(&r, &x, &w).unwrap();
    let fx = central_diff(x.data(), |d| dot(&fc_forward(&with_data(&x, d), &w, &b).unwrap(), &r));
    let fw = central_diff(w.data(), |d| dot(&fc_forward(&x, &with_data(&w, d), &b).unwrap(), &r));
    let fb = central_diff(b.data(), |d| dot(&fc_forward(&x, &w, &with_data(&b, d)).unwrap(), &r));
    assert_eq!(g.input.shape(), x.shape());
    assert!(max_rel(g.input.data(), &fx) < 1e-6);
    assert!(max_rel(g.weights.data(), &fw) < 1e-6);
    assert!(max_rel(g.bias.data(), &fb) < 1e-6);
}

#[test]
fn task_losses_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let z = random(&mut rng, &[5, 4]);
    let z = with_data(&z, &z.data().iter().map(|v| v * 3.0).collect::<Vec<_>>());
    let softmax: Vec<Label> = (0..5).map(|i| Label::Category(i % 4)).collect();
    let mut logistic = softmax.clone();
    logistic[4] = Label::Negative;
    for (kind, labels) in [(TaskLossKind::SoftmaxMulticlass, softmax), (TaskLossKind::LogisticBinary, logistic)] {
        let (_, g) = task_loss(&z, &labels, kind).unwrap();
        let fd = central_diff(z.data(), |d| task_loss(&with_data(&z, d), &labels, kind).unwrap().0);
        assert!(max_rel(g.data(), &fd) < 1e-6, "{kind:?}");
    }
}

#[test]
fn momentum_two_steps_match_hand_unrolled_recurrence() {
    let mut p = Tensor::new(&[3], vec![1.0, -2.0, 0.5]).unwrap();
    let g1 = Tensor::new(&[3], vec![0.3, 0.1, -0.4]).unwrap();
    let g2 = Tensor::new(&[3], vec![-0.2, 0.6, 0.05]).unwrap();
    let names = vec!["p".to_string()];
    let mut opt = Sgd::new(0.1, 0.9).unwrap();
    opt.step(&mut [&mut p], std::slice::from_ref(&g1), &names).unwrap();
    opt.step(&mut [&mut p], std::slice::from_ref(&g2), &names).unwrap();
    let start = [1.0, -2.0, 0.5];
    for i in 0..3 {
        let v1 = g1.data()[i];
        let p1 = start[i] - 0.1 * v1;
        let v2 = 0.9 * v1 + g2.data()[i];
        let p2 = p1 - 0.1 * v2;
        assert_eq!(p.data()[i], p2);
    }
}

#[test]
fn forwards_are_bitwise_repeatable() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = random(&mut rng, &[4, 8, 8]);
    let w = random(&mut rng, &[2, 4, 3, 3]);
    let b = random(&mut rng, &[2]);
    let a = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
    let c = conv2d_forward(&x, &w, &b, 1, 1).unwrap();
    assert_eq!(a, c);
    assert_eq!(maxpool_forward(&x, 2, 2).unwrap().argmax, maxpool_forward(&x, 2, 2).unwrap().argmax);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn conv_agrees_with_oracle_on_random_shapes(
        ci in 1usize..=4, co in 1usize..=3, h in 3usize..=8, w in 3usize..=8,
        k in 1usize..=3, stride in 1usize..=2, pad in 0usize..=1, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[ci, h, w]);
        let wt = random(&mut rng, &[co, ci, k, k]);
        let b = random(&mut rng, &[co]);
        let y = conv2d_forward(&x, &wt, &b, stride, pad).unwrap();
        let oracle = naive_conv(&x, &wt, &b, stride, pad);
        prop_assert_eq!(y.len(), oracle.len());
        for (a, o) in y.data().iter().zip(&oracle) {
            prop_assert!((a - o).abs() <= 1e-12);
        }
    }

    #[test]
    fn pool_agrees_with_oracle_on_random_shapes(
        c in 1usize..=4, h in 2usize..=8, w in 2usize..=8, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[c, h, w]);
        let p = maxpool_forward(&x, 2, 2).unwrap();
        prop_assert_eq!(p.output.data(), &naive_pool(&x, 2, 2)[..]);
    }

    #[test]
    fn conv_input_gradient_matches_finite_differences(
        ci in 1usize..=3, h in 3usize..=6, w in 3usize..=6, pad in 0usize..=1, seed in any::<u64>(),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random(&mut rng, &[ci, h, w]);
        let wt = random(&mut rng, &[2, ci, 3, 3]);
        let b = random(&mut rng, &[2]);
        let y = conv2d_forward(&x, &wt, &b, 1, pad).unwrap();
        let r = random(&mut rng, y.shape());
        let g = conv2d_backward(&r, &x, &wt, 1, pad).unwrap();
        let fd = central_diff(x.data(), |d| dot(&conv2d_forward(&with_data(&x, d), &wt, &b, 1, pad).unwrap(), &r));
        // scale by the largest entry so near-zero cells at the border don't dominate
        let scale = fd.iter().fold(1e-8f64, |m, v| m.max(v.abs()));
        let err = g.input.data().iter().zip(&fd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / scale;
        prop_assert!(err < 1e-6);
    }
}
