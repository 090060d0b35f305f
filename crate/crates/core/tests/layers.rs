use cogan::nn::gradcheck::{check_gradients, grad_check, linear_probe, Coverage};
use cogan::nn::{LayerSpec, Mode, NetBuilder, Network, ParamId, ParamStore};
use cogan::rng::{stream, Rng64, Stream};
use cogan::{Error, Tensor};
use proptest::prelude::*;

use LayerSpec::*;

fn single(input: &[usize], spec: LayerSpec, rng: &mut Rng64) -> (Network, ParamStore) {
    let mut store = ParamStore::new();
    let mut b = NetBuilder::new("t", input.to_vec(), &mut store, rng);
    b.block(&[spec]).unwrap();
    let net = b.build();
    (net, store)
}

fn set(store: &mut ParamStore, name: &str, t: Tensor) {
    store.set(&ParamId::new(name), t).unwrap();
}

fn rng() -> Rng64 {
    stream(42, Stream::Aux)
}

// naive 6-loop cross-correlation, stride s, zero padding p
fn conv_oracle(x: &Tensor, w: &Tensor, b: &[f64], s: usize, p: usize) -> Tensor {
    let (n, c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (o, k) = (w.shape()[0], w.shape()[2]);
    let oh = (h + 2 * p - k) / s + 1;
    let ow = (wd + 2 * p - k) / s + 1;
    let mut out = Tensor::zeros([n, o, oh, ow]);
    for ni in 0..n {
        for oi in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut acc = b[oi];
                    for ci in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * s + ky) as isize - p as isize;
                                let ix = (xx * s + kx) as isize - p as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((ni * c + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((oi * c + ci) * k + ky) * k + kx];
                            }
                        }
                    }
                    out.data_mut()[((ni * o + oi) * oh + y) * ow + xx] = acc;
                }
            }
        }
    }
    out
}

#[test]
fn conv_all_ones_sums_to_nine() {
    let mut r = rng();
    let (net, mut store) = single(&[1, 3, 3], Conv { out: 1, k: 3, stride: 1, pad: 0 }, &mut r);
    set(&mut store, "t.b1.0.weight", Tensor::full([1, 1, 3, 3], 1.0));
    let (y, _) = net.infer(&store, &Tensor::full([1, 1, 3, 3], 1.0)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1, 1]);
    assert_eq!(y.data()[0], 9.0);
}

#[test]
fn conv_identity_kernel_preserves_input() {
    let mut r = rng();
    let (net, mut store) = single(&[2, 5, 4], Conv { out: 2, k: 3, stride: 1, pad: 1 }, &mut r);
    let mut w = Tensor::zeros([2, 2, 3, 3]);
    w.data_mut()[4] = 1.0; // out 0 <- in 0 centre
    w.data_mut()[3 * 9 + 4] = 1.0; // out 1 <- in 1 centre
    set(&mut store, "t.b1.0.weight", w);
    let x = Tensor::randn([3, 2, 5, 4], 1.0, &mut r);
    let (y, _) = net.infer(&store, &x).unwrap();
    assert_eq!(y, x);
}

#[test]
fn conv_matches_loop_oracle() {
    let mut r = rng();
    for (stride, pad) in [(1, 0), (2, 1), (1, 2)] {
        let (net, mut store) = single(&[2, 5, 5], Conv { out: 3, k: 3, stride, pad }, &mut r);
        let w = Tensor::randn([3, 2, 3, 3], 1.0, &mut r);
        let b = Tensor::randn([3], 1.0, &mut r);
        set(&mut store, "t.b1.0.weight", w.clone());
        set(&mut store, "t.b1.0.bias", b.clone());
        let x = Tensor::randn([1, 2, 5, 5], 1.0, &mut r);
        let (y, _) = net.infer(&store, &x).unwrap();
        let want = conv_oracle(&x, &w, b.data(), stride, pad);
        assert!(y.max_abs_diff(&want).unwrap() < 1e-12);
    }
}

#[test]
fn conv_shape_errors_name_dims() {
    let mut r = rng();
    let (net, store) = single(&[2, 5, 5], Conv { out: 3, k: 3, stride: 1, pad: 0 }, &mut r);
    let err = net.infer(&store, &Tensor::zeros([1, 3, 5, 5])).unwrap_err();
    assert!(matches!(err, Error::Shape { .. }));
    assert!(err.to_string().contains("[1, 3, 5, 5]"), "{err}");
    let mut store = ParamStore::new();
    let mut b = NetBuilder::new("t", [1, 2, 2], &mut store, &mut r);
    assert!(b.block(&[Conv { out: 1, k: 3, stride: 1, pad: 0 }]).is_err());
}

fn adjoint_gap(r: &mut Rng64, n: usize, c: usize, o: usize, h: usize, w: usize, k: usize, s: usize, p: usize) -> f64 {
    let (conv, mut store) = single(&[c, h, w], Conv { out: o, k, stride: s, pad: p }, r);
    let wt = Tensor::randn([o, c, k, k], 1.0, r);
    set(&mut store, "t.b1.0.weight", wt.clone());
    let x = Tensor::randn([n, c, h, w], 1.0, r);
    let (cx, _) = conv.infer(&store, &x).unwrap();
    let (oh, ow) = (cx.shape()[2], cx.shape()[3]);
    let (tconv, mut tstore) = single(&[o, oh, ow], TransposedConv { out: c, k, stride: s, pad: p }, r);
    set(&mut tstore, "t.b1.0.weight", wt);
    let y = Tensor::randn([n, o, oh, ow], 1.0, r);
    let (ty, _) = tconv.infer(&tstore, &y).unwrap();
    if ty.shape()[2..] != [h, w] {
        // strided convolutions that drop trailing rows are not invertible in extent
        return 0.0;
    }
    let lhs = cx.dot(&y).unwrap();
    let rhs = x.dot(&ty).unwrap();
    (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0)
}

#[test]
fn transposed_conv_is_the_adjoint() {
    let mut r = rng();
    assert!(adjoint_gap(&mut r, 2, 2, 3, 7, 7, 3, 2, 1) < 1e-10);
    assert!(adjoint_gap(&mut r, 1, 3, 2, 8, 6, 4, 2, 1) < 1e-10);
}

#[test]
fn transposed_conv_hand_expansion() {
    let mut r = rng();
    let (net, mut store) = single(&[1, 1, 1], TransposedConv { out: 1, k: 2, stride: 2, pad: 0 }, &mut r);
    set(&mut store, "t.b1.0.weight", Tensor::full([1, 1, 2, 2], 1.0));
    let (y, _) = net.infer(&store, &Tensor::full([1, 1, 1, 1], 2.0)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert_eq!(y.data(), &[2.0; 4]);
    let (y, _) = net.infer(&store, &Tensor::zeros([3, 1, 1, 1])).unwrap();
    assert!(y.data().iter().all(|&v| v == 0.0));
}

#[test]
fn batch_norm_normalizes_per_channel() {
    let mut r = rng();
    let (mut net, store) = single(&[3, 4, 4], BatchNorm, &mut r);
    let x = Tensor::randn([8, 3, 4, 4], 3.0, &mut r).map(|v| v + 5.0);
    let (y, _) = net.forward(&store, &x).unwrap();
    for c in 0..3 {
        let vals: Vec<f64> = (0..8).flat_map(|n| y.item(n)[c * 16..(c + 1) * 16].to_vec()).collect();
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let v = vals.iter().map(|a| (a - m).powi(2)).sum::<f64>() / vals.len() as f64;
        assert!(m.abs() < 1e-10);
        assert!((v - 1.0).abs() < 1e-4, "variance {v} carries the eps correction");
    }
}

#[test]
fn batch_norm_constant_channel_gives_beta() {
    let mut r = rng();
    let (mut net, mut store) = single(&[2], BatchNorm, &mut r);
    set(&mut store, "t.b1.0.beta", Tensor::new([2], vec![0.3, -1.0]).unwrap());
    let x = Tensor::new([4, 2], vec![7.0, 1.0, 7.0, 2.0, 7.0, 3.0, 7.0, 4.0]).unwrap();
    let (y, _) = net.forward(&store, &x).unwrap();
    for n in 0..4 {
        assert_eq!(y.item(n)[0], 0.3);
    }
}

#[test]
fn batch_norm_two_element_closed_form() {
    let mut r = rng();
    let (mut net, mut store) = single(&[1], BatchNorm, &mut r);
    set(&mut store, "t.b1.0.gamma", Tensor::full([1], 2.0));
    set(&mut store, "t.b1.0.beta", Tensor::full([1], 1.0));
    let (y, _) = net.forward(&store, &Tensor::new([2, 1], vec![1.0, 3.0]).unwrap()).unwrap();
    let s = 1.0 / (1.0f64 + 1e-5).sqrt();
    assert!((y.data()[0] - (1.0 - 2.0 * s)).abs() < 1e-12);
    assert!((y.data()[1] - (1.0 + 2.0 * s)).abs() < 1e-12);
    assert!((y.data()[0] + 1.0).abs() < 1e-4 && (y.data()[1] - 3.0).abs() < 1e-4);
}

#[test]
fn batch_norm_rejects_single_sample_in_train_mode() {
    let mut r = rng();
    let (mut net, store) = single(&[2], BatchNorm, &mut r);
    assert!(matches!(net.forward(&store, &Tensor::zeros([1, 2])), Err(Error::Config(_))));
    net.set_mode(Mode::Inference);
    assert!(net.forward(&store, &Tensor::zeros([1, 2])).is_ok());
}

#[test]
fn batch_norm_running_stats_track_batches() {
    let mut r = rng();
    let (mut net, store) = single(&[1], BatchNorm, &mut r);
    let x = Tensor::new([2, 1], vec![1.0, 3.0]).unwrap();
    net.forward(&store, &x).unwrap();
    let stats = net.running_stats();
    // momentum 0.9: 0.9 * 0 + 0.1 * 2; var 0.9 * 1 + 0.1 * 2 (unbiased)
    assert!((stats[0].1.data()[0] - 0.2).abs() < 1e-15);
    assert!((stats[1].1.data()[0] - 1.1).abs() < 1e-15);
}

#[test]
fn prelu_branches() {
    let mut r = rng();
    let (net, store) = single(&[1], PRelu, &mut r);
    let (y, _) = net.infer(&store, &Tensor::new([2, 1], vec![2.0, -2.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[2.0, -0.5]);
    let (net, mut store) = single(&[3], PRelu, &mut r);
    set(&mut store, "t.b1.0.slope", Tensor::full([3], 1.0));
    let x = Tensor::randn([4, 3], 1.0, &mut r);
    assert_eq!(net.infer(&store, &x).unwrap().0, x);
}

#[test]
fn max_pool_values_and_errors() {
    let mut r = rng();
    let (net, store) = single(&[1, 2, 2], MaxPool { window: 2 }, &mut r);
    let (y, _) = net.infer(&store, &Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    assert_eq!(y.data(), &[4.0]);
    let (net4, store4) = single(&[1, 4, 4], MaxPool { window: 2 }, &mut r);
    let (y, _) = net4.infer(&store4, &Tensor::full([1, 1, 4, 4], 0.7)).unwrap();
    assert_eq!(y.shape(), &[1, 1, 2, 2]);
    assert!(y.data().iter().all(|&v| v == 0.7));
    assert!(net4.infer(&store4, &Tensor::zeros([1, 1, 3, 4])).is_err());
    let mut store = ParamStore::new();
    let mut b = NetBuilder::new("t", [1, 3, 4], &mut store, &mut r);
    assert!(b.block(&[MaxPool { window: 2 }]).is_err());
}

#[test]
fn max_pool_tie_routes_to_first_maximum() {
    let mut r = rng();
    let (net, store) = single(&[1, 2, 2], MaxPool { window: 2 }, &mut r);
    let x = Tensor::new([1, 1, 2, 2], vec![4.0, 4.0, 0.0, 0.0]).unwrap();
    let (_, trace) = net.infer(&store, &x).unwrap();
    let (_, dx) = net.backward(&store, &trace, &Tensor::full([1, 1, 1, 1], 1.0)).unwrap();
    assert_eq!(dx.data(), &[1.0, 0.0, 0.0, 0.0]);
    // one-sided differences: raising the first entry moves the output, raising
    // the second (a tie, broken toward the first) does not move it by more
    let out = |v: &Tensor| net.infer(&store, v).unwrap().0.data()[0];
    let h = 1e-6;
    let mut up0 = x.clone();
    up0.data_mut()[0] += h;
    assert!(((out(&up0) - 4.0) / h - 1.0).abs() < 1e-6);
    let mut down1 = x.clone();
    down1.data_mut()[1] -= h;
    assert_eq!(out(&down1), 4.0);
}

#[test]
fn dense_identity_and_constant() {
    let mut r = rng();
    let (net, mut store) = single(&[3], Dense { out: 3 }, &mut r);
    set(&mut store, "t.b1.0.weight", Tensor::from_fn([3, 3], |i| if i % 4 == 0 { 1.0 } else { 0.0 }));
    let x = Tensor::randn([2, 3], 1.0, &mut r);
    assert_eq!(net.infer(&store, &x).unwrap().0, x);
    set(&mut store, "t.b1.0.weight", Tensor::zeros([3, 3]));
    set(&mut store, "t.b1.0.bias", Tensor::full([3], 1.5));
    assert!(net.infer(&store, &x).unwrap().0.data().iter().all(|&v| v == 1.5));
    assert!(net.infer(&store, &Tensor::zeros([2, 4])).is_err());
}

#[test]
fn dense_matches_loop_oracle() {
    let mut r = rng();
    let (net, mut store) = single(&[2, 3], Dense { out: 4 }, &mut r);
    let w = Tensor::randn([4, 6], 1.0, &mut r);
    let b = Tensor::randn([4], 1.0, &mut r);
    set(&mut store, "t.b1.0.weight", w.clone());
    set(&mut store, "t.b1.0.bias", b.clone());
    let x = Tensor::randn([3, 2, 3], 1.0, &mut r);
    let (y, _) = net.infer(&store, &x).unwrap();
    for n in 0..3 {
        for o in 0..4 {
            let want: f64 = b.data()[o] + (0..6).map(|i| w.data()[o * 6 + i] * x.item(n)[i]).sum::<f64>();
            assert!((y.item(n)[o] - want).abs() < 1e-12);
        }
    }
}

#[test]
fn activations_fixed_points() {
    let mut r = rng();
    let (s, st) = single(&[1], Sigmoid, &mut r);
    assert_eq!(s.infer(&st, &Tensor::zeros([1, 1])).unwrap().0.data(), &[0.5]);
    let (t, tt) = single(&[1], Tanh, &mut r);
    assert_eq!(t.infer(&tt, &Tensor::zeros([1, 1])).unwrap().0.data(), &[0.0]);
    let (sm, smt) = single(&[3], Softmax, &mut r);
    let y = sm.infer(&smt, &Tensor::zeros([1, 3])).unwrap().0;
    assert!(y.data().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    let y = sm.infer(&smt, &Tensor::new([1, 3], vec![1000.0, 0.0, 0.0]).unwrap()).unwrap().0;
    assert!(y.all_finite());
    assert!(y.data()[0] >= 1.0 - 1e-12);
}

#[test]
fn dense_gradient_is_outer_product() {
    let mut r = rng();
    let (net, store) = single(&[3], Dense { out: 2 }, &mut r);
    let x = Tensor::randn([1, 3], 1.0, &mut r);
    let up = Tensor::new([1, 2], vec![0.5, -2.0]).unwrap();
    let (_, trace) = net.infer(&store, &x).unwrap();
    let (g, _) = net.backward(&store, &trace, &up).unwrap();
    let gw = g.get(&ParamId::new("t.b1.0.weight")).unwrap();
    for o in 0..2 {
        for i in 0..3 {
            assert_eq!(gw.data()[o * 3 + i], up.data()[o] * x.data()[i]);
        }
    }
}

#[test]
fn two_linear_layers_chain_rule() {
    // y = w2 * (w1 * x), scalar everything: dy/dw1 = w2 x, dy/dw2 = w1 x, dy/dx = w1 w2
    let mut r = rng();
    let mut store = ParamStore::new();
    let mut b = NetBuilder::new("t", [1], &mut store, &mut r);
    b.block(&[Dense { out: 1 }]).unwrap().block(&[Dense { out: 1 }]).unwrap();
    let net = b.build();
    set(&mut store, "t.b1.0.weight", Tensor::full([1, 1], 3.0));
    set(&mut store, "t.b2.0.weight", Tensor::full([1, 1], -2.0));
    let x = Tensor::full([1, 1], 0.5);
    let (y, trace) = net.infer(&store, &x).unwrap();
    assert_eq!(y.data(), &[-3.0]);
    let (g, dx) = net.backward(&store, &trace, &Tensor::full([1, 1], 1.0)).unwrap();
    assert_eq!(g.get(&ParamId::new("t.b1.0.weight")).unwrap().data(), &[-1.0]);
    assert_eq!(g.get(&ParamId::new("t.b2.0.weight")).unwrap().data(), &[1.5]);
    assert_eq!(g.get(&ParamId::new("t.b1.0.bias")).unwrap().data(), &[-2.0]);
    assert_eq!(dx.data(), &[-6.0]);
}

#[test]
fn backward_without_cache_is_a_usage_error() {
    let mut r = rng();
    let (mut net, store) = single(&[2], Dense { out: 1 }, &mut r);
    assert!(matches!(net.backward_cached(&store, &Tensor::zeros([1, 1])), Err(Error::Usage(_))));
    net.forward_cached(&store, &Tensor::zeros([1, 2])).unwrap();
    assert!(net.backward_cached(&store, &Tensor::zeros([1, 1])).is_ok());
    assert!(net.backward_cached(&store, &Tensor::zeros([2, 1])).is_err());
}

#[test]
fn every_layer_kind_passes_finite_differences() {
    let mut r = rng();
    let cases: Vec<(Vec<usize>, Vec<LayerSpec>)> = vec![
        (vec![2, 6, 6], vec![Conv { out: 3, k: 3, stride: 2, pad: 1 }]),
        (vec![3, 3, 3], vec![TransposedConv { out: 2, k: 3, stride: 2, pad: 1 }]),
        (vec![4], vec![TransposedConv { out: 2, k: 4, stride: 1, pad: 0 }]),
        (vec![2, 3], vec![Dense { out: 4 }]),
        (vec![3, 2, 2], vec![BatchNorm]),
        (vec![5], vec![BatchNorm]),
        (vec![3, 2, 2], vec![PRelu]),
        (vec![2, 4, 4], vec![MaxPool { window: 2 }]),
        (vec![4], vec![Sigmoid]),
        (vec![4], vec![Tanh]),
        (vec![4], vec![Softmax]),
        (vec![6], vec![Reshape(vec![1, 2, 3])]),
    ];
    for (shape, specs) in cases {
        let mut store = ParamStore::new();
        let mut b = NetBuilder::new("t", shape.clone(), &mut store, &mut r);
        b.block(&specs).unwrap();
        let net = b.build();
        // move parameters away from their special initial values
        let ids: Vec<ParamId> = net.param_ids();
        for id in &ids {
            let t = store.get(id).unwrap().clone();
            let nt = Tensor::randn(t.shape(), 0.5, &mut r);
            store.set(id, nt.map(|v| v + 0.5)).unwrap();
        }
        let mut full = vec![4];
        full.extend(&shape);
        let x = Tensor::randn(full, 1.0, &mut r);
        let out_shape = net.forward_pure(&store, &x).unwrap().0.shape().to_vec();
        let probe = linear_probe(Tensor::randn(out_shape, 1.0, &mut r));
        let rep = grad_check(&net, &store, &x, probe, 1e-5, 1e-5, Coverage::All, &mut r).unwrap();
        assert!(rep.passed(), "{specs:?}: {:?}", rep.failures());
    }
}

#[test]
fn grad_check_quadratic_loss_on_dense() {
    let mut r = rng();
    let (net, store) = single(&[3], Dense { out: 2 }, &mut r);
    let x = Tensor::randn([5, 3], 1.0, &mut r);
    let target = Tensor::randn([5, 2], 1.0, &mut r);
    let loss = move |y: &Tensor| {
        let d = y.zip_map(&target, |a, b| a - b).unwrap();
        (d.sq_norm(), d.map(|v| 2.0 * v))
    };
    let rep = grad_check(&net, &store, &x, loss, 1e-5, 1e-7, Coverage::All, &mut r).unwrap();
    assert!(rep.passed(), "{:?}", rep.checks);
}

#[test]
fn grad_check_vacuous_on_zero_network() {
    let mut r = rng();
    let (net, mut store) = single(&[3], Dense { out: 2 }, &mut r);
    set(&mut store, "t.b1.0.weight", Tensor::zeros([2, 3]));
    let probe = |y: &Tensor| (0.0 * y.sum(), Tensor::zeros(y.shape()));
    let rep = grad_check(&net, &store, &Tensor::zeros([2, 3]), probe, 1e-5, 1e-5, Coverage::All, &mut r).unwrap();
    assert!(rep.passed());
    assert_eq!(rep.worst(), 0.0);
}

#[test]
fn grad_check_flags_corrupted_backward() {
    let mut r = rng();
    let (net, store) = single(&[3], Dense { out: 2 }, &mut r);
    let x = Tensor::randn([2, 3], 1.0, &mut r);
    let w = Tensor::randn([2, 2], 1.0, &mut r);
    let (_, trace) = net.infer(&store, &x).unwrap();
    let (mut grads, _) = net.backward(&store, &trace, &w).unwrap();
    let bad_id = ParamId::new("t.b1.0.weight");
    let mut corrupted = grads.get(&bad_id).unwrap().clone();
    corrupted.scale(1.5);
    grads.insert(bad_id.clone(), corrupted);
    let objective = |s: &ParamStore| Ok(net.infer(s, &x)?.0.dot(&w)?);
    let rep = check_gradients(&store, &net.param_ids(), &grads, objective, 1e-5, 1e-5, Coverage::All, &mut r).unwrap();
    let failed: Vec<&str> = rep.failures().iter().map(|c| c.id.as_str()).collect();
    assert_eq!(failed, vec!["t.b1.0.weight"]);
}

#[test]
fn grad_check_skips_kink_crossings() {
    let mut r = rng();
    let (net, store) = single(&[3], PRelu, &mut r);
    // the first unit sits within eps of the kink
    let x = Tensor::new([1, 3], vec![1e-7, 0.5, -0.7]).unwrap();
    let probe = linear_probe(Tensor::new([1, 3], vec![1.0, 2.0, 3.0]).unwrap());
    let rep = grad_check(&net, &store, &x, probe, 1e-5, 1e-7, Coverage::All, &mut r).unwrap();
    let input = rep.checks.iter().find(|c| c.id == "<input>").unwrap();
    assert_eq!((input.coords_checked, input.coords_skipped), (2, 1));
    assert_eq!(rep.skipped(), 1);
    assert!(rep.passed(), "{:?}", rep.checks);
}

#[test]
fn rosenbrock_minimizer_matches_analytic_optimum() {
    use cogan::optim::{lbfgs_minimize, LbfgsConfig};
    let obj = |x: &Tensor| {
        let (a, b) = (x.data()[0], x.data()[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        Ok((f, Tensor::new([2], g)?))
    };
    let cfg = LbfgsConfig { max_iter: 100, ..Default::default() };
    let res = lbfgs_minimize(obj, &Tensor::new([2], vec![-1.2, 1.0]).unwrap(), &cfg, None).unwrap();
    assert!(res.value < 1e-8);
    assert!((res.x.data()[0] - 1.0).abs() < 1e-3 && (res.x.data()[1] - 1.0).abs() < 1e-3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_identity_random_shapes(
        seed in 0u64..1_000_000,
        n in 1usize..3, c in 1usize..4, o in 1usize..4,
        h in 3usize..9, w in 3usize..9, k in 1usize..4, s in 1usize..3, p in 0usize..2,
    ) {
        prop_assume!(k <= h + 2 * p && k <= w + 2 * p && p < k);
        let mut r = stream(seed, Stream::Aux);
        prop_assert!(adjoint_gap(&mut r, n, c, o, h, w, k, s, p) < 1e-10);
    }

    #[test]
    fn softmax_rows_sum_to_one(seed in 0u64..1_000_000, k in 1usize..8, scale in 0.1f64..50.0) {
        let mut r = stream(seed, Stream::Aux);
        let x = Tensor::randn([3, k], scale, &mut r);
        let y = cogan::nn::softmax_last(&x).unwrap();
        for row in y.data().chunks(k) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }

    #[test]
    fn batch_norm_moments(seed in 0u64..1_000_000, n in 8usize..16, shift in -5.0f64..5.0, scale in 0.1f64..10.0) {
        let mut r = stream(seed, Stream::Aux);
        let (mut net, store) = single(&[2], BatchNorm, &mut r);
        let x = Tensor::randn([n, 2], scale, &mut r).map(|v| v + shift);
        let (y, _) = net.forward(&store, &x).unwrap();
        for c in 0..2 {
            let col: Vec<f64> = (0..n).map(|i| y.item(i)[c]).collect();
            let m = col.iter().sum::<f64>() / n as f64;
            let v = col.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n as f64;
            // population variance of the pre-affine output is var / (var + eps)
            let raw: Vec<f64> = (0..n).map(|i| x.item(i)[c]).collect();
            let rm = raw.iter().sum::<f64>() / n as f64;
            let rv = raw.iter().map(|a| (a - rm).powi(2)).sum::<f64>() / n as f64;
            prop_assert!(m.abs() < 1e-10);
            prop_assert!((v - rv / (rv + 1e-5)).abs() < 1e-10);
            prop_assert!((v - 1.0).abs() < 1e-6 || rv < 10.0);
        }
    }
}
