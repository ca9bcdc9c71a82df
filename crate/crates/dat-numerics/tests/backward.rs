//! Gradient contracts for the tape: analytic cases, a finite-difference
//! oracle over an independent f64 evaluator, and the loss-node edge cases.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dat_numerics::{ClassMap, Graph, NumericsError, PixelMask, Tensor};
use dat_testkit::refnet::{central_diff_grad, RNode, RefNet};
use dat_testkit::RTensor;

#[test]
fn grad_of_sum_is_all_ones() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(&[5], vec![0.3, -1.0, 2.0, 0.0, 9.0]).unwrap(), 0);
    let loss = g.sum(x);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads, vec![1.0; 5]);
}

#[test]
fn grad_of_sum_of_squares_is_two_x() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(&[1], vec![3.0]).unwrap(), 0);
    let sq = g.mul(x, x).unwrap();
    let loss = g.sum(sq);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads, vec![6.0]);
}

#[test]
fn params_off_the_loss_path_get_zero_gradient() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), 0);
    let _unused = g.param(Tensor::new(&[3], vec![5.0, 5.0, 5.0]).unwrap(), 2);
    let loss = g.sum(x);
    let grads = g.backward(loss).unwrap();
    assert_eq!(grads, vec![1.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut g = Graph::new();
    let x = g.param(Tensor::new(&[2], vec![1.0, 2.0]).unwrap(), 0);
    assert!(matches!(g.backward(x), Err(NumericsError::Contract(_))));
}

/// Builds the same two-layer convnet on the f32 tape and as an f64 reference,
/// returning (autodiff grads, reference net, f64 params).
fn two_layer_convnet(seed: u64) -> (Vec<f32>, RefNet, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut take = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect() };

    let x_data = take(2 * 6 * 6);
    let w1_data = take(4 * 2 * 3 * 3);
    let b1_data = take(4);
    let w2_data = take(3 * 4 * 3 * 3);
    let b2_data = take(3);
    let labels: Vec<u8> = (0..36).map(|_| rng.gen_range(0u8..3)).collect();

    // Flat parameter space: w1 | b1 | w2 | b2.
    let offsets = [0usize, 72, 76, 184];

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[2, 6, 6], x_data.clone()).unwrap());
    let w1 = g.param(Tensor::new(&[4, 2, 3, 3], w1_data.clone()).unwrap(), offsets[0]);
    let b1 = g.param(Tensor::new(&[4], b1_data.clone()).unwrap(), offsets[1]);
    let h1 = g.conv2d(x, w1, b1, 1, 1).unwrap();
    let a1 = g.relu(h1);
    let w2 = g.param(Tensor::new(&[3, 4, 3, 3], w2_data.clone()).unwrap(), offsets[2]);
    let b2 = g.param(Tensor::new(&[3], b2_data.clone()).unwrap(), offsets[3]);
    let h2 = g.conv2d(a1, w2, b2, 1, 1).unwrap();
    let probs = g.softmax_channels(h2).unwrap();
    let label_map = ClassMap::from_data(6, 6, labels.clone());
    let (loss, count) = g.cross_entropy_mean(probs, &label_map, None).unwrap();
    assert_eq!(count, 36);
    let grads = g.backward(loss).unwrap();

    let mut net = RefNet::default();
    let xr = net.push(RNode::Input(RTensor::from_f32(&[2, 6, 6], &x_data)));
    let w1r = net.push(RNode::Param { offset: offsets[0], shape: vec![4, 2, 3, 3] });
    let b1r = net.push(RNode::Param { offset: offsets[1], shape: vec![4] });
    let h1r = net.push(RNode::Conv2d { x: xr, w: w1r, b: b1r, stride: 1, pad: 1 });
    let a1r = net.push(RNode::Relu(h1r));
    let w2r = net.push(RNode::Param { offset: offsets[2], shape: vec![3, 4, 3, 3] });
    let b2r = net.push(RNode::Param { offset: offsets[3], shape: vec![3] });
    let h2r = net.push(RNode::Conv2d { x: a1r, w: w2r, b: b2r, stride: 1, pad: 1 });
    let pr = net.push(RNode::SoftmaxChannels(h2r));
    net.push(RNode::CrossEntropyMean { probs: pr, labels, mask: None });

    let mut params64 = vec![0.0f64; 187];
    for (vals, off) in [(&w1_data, 0usize), (&b1_data, 72), (&w2_data, 76), (&b2_data, 184)] {
        for (i, &v) in vals.iter().enumerate() {
            params64[off + i] = v as f64;
        }
    }
    (grads, net, params64)
}

/// Scale-normalized error: |a-b| / max(1, |a|, |b|).
fn grad_err(a: f32, b: f64) -> f64 {
    let (a, b) = (a as f64, b);
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

#[test]
fn random_convnet_gradient_matches_central_differences() {
    // Frozen seed: every entry must clear the 1e-4 bar at h = 1e-3.
    let (grads, net, params64) = two_layer_convnet(20240617);
    let fd = central_diff_grad(&net, &params64, 1e-3);
    assert_eq!(grads.len(), fd.len());
    for (i, (&ad, &want)) in grads.iter().zip(&fd).enumerate() {
        let err = grad_err(ad, want);
        assert!(err < 1e-4, "param {i}: autodiff {ad} vs fd {want} (err {err:.2e})");
    }
}

#[test]
fn masked_cross_entropy_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let w_data: Vec<f32> = (0..2 * 1 * 3 * 3).map(|_| rng.gen_range(-0.7f32..0.7)).collect();
    let x_data: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let labels: Vec<u8> = (0..16).map(|_| rng.gen_range(0u8..2)).collect();
    let mask_bits: Vec<bool> = (0..16).map(|_| rng.gen_bool(0.5)).collect();

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[1, 4, 4], x_data.clone()).unwrap());
    let w = g.param(Tensor::new(&[2, 1, 3, 3], w_data.clone()).unwrap(), 0);
    let b = g.param(Tensor::zeros(&[2]), 18);
    let h = g.conv2d(x, w, b, 1, 1).unwrap();
    let probs = g.softmax_channels(h).unwrap();
    let labels_map = ClassMap::from_data(4, 4, labels.clone());
    let mask = PixelMask::from_data(4, 4, mask_bits.clone());
    let (loss, count) = g.cross_entropy_mean(probs, &labels_map, Some(&mask)).unwrap();
    assert!(count > 0);
    let grads = g.backward(loss).unwrap();

    let mut net = RefNet::default();
    let xr = net.push(RNode::Input(RTensor::from_f32(&[1, 4, 4], &x_data)));
    let wr = net.push(RNode::Param { offset: 0, shape: vec![2, 1, 3, 3] });
    let br = net.push(RNode::Param { offset: 18, shape: vec![2] });
    let hr = net.push(RNode::Conv2d { x: xr, w: wr, b: br, stride: 1, pad: 1 });
    let pr = net.push(RNode::SoftmaxChannels(hr));
    net.push(RNode::CrossEntropyMean { probs: pr, labels, mask: Some(mask_bits) });

    let mut params64 = vec![0.0f64; 20];
    for (i, &v) in w_data.iter().enumerate() {
        params64[i] = v as f64;
    }
    let fd = central_diff_grad(&net, &params64, 1e-4);
    for (i, (&ad, &want)) in grads.iter().zip(&fd).enumerate() {
        let err = grad_err(ad, want);
        assert!(err < 1e-3, "param {i}: autodiff {ad} vs fd {want} (err {err:.2e})");
    }
}

#[test]
fn entropy_mean_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(123);
    let w_data: Vec<f32> = (0..3 * 1 * 3 * 3).map(|_| rng.gen_range(-0.7f32..0.7)).collect();
    let x_data: Vec<f32> = (0..16).map(|_| rng.gen_range(-1.0f32..1.0)).collect();

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[1, 4, 4], x_data.clone()).unwrap());
    let w = g.param(Tensor::new(&[3, 1, 3, 3], w_data.clone()).unwrap(), 0);
    let b = g.param(Tensor::zeros(&[3]), 27);
    let h = g.conv2d(x, w, b, 1, 1).unwrap();
    let probs = g.softmax_channels(h).unwrap();
    let loss = g.entropy_mean(probs).unwrap();
    let grads = g.backward(loss).unwrap();

    let mut net = RefNet::default();
    let xr = net.push(RNode::Input(RTensor::from_f32(&[1, 4, 4], &x_data)));
    let wr = net.push(RNode::Param { offset: 0, shape: vec![3, 1, 3, 3] });
    let br = net.push(RNode::Param { offset: 27, shape: vec![3] });
    let hr = net.push(RNode::Conv2d { x: xr, w: wr, b: br, stride: 1, pad: 1 });
    let pr = net.push(RNode::SoftmaxChannels(hr));
    net.push(RNode::EntropyMean(pr));

    let mut params64 = vec![0.0f64; 30];
    for (i, &v) in w_data.iter().enumerate() {
        params64[i] = v as f64;
    }
    let fd = central_diff_grad(&net, &params64, 1e-4);
    for (i, (&ad, &want)) in grads.iter().zip(&fd).enumerate() {
        let err = grad_err(ad, want);
        assert!(err < 1e-3, "param {i}: autodiff {ad} vs fd {want} (err {err:.2e})");
    }
}

#[test]
fn pipeline_with_norm_pool_resize_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(555);
    let x_data: Vec<f32> = (0..2 * 8 * 8).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let w_data: Vec<f32> = (0..3 * 2 * 3 * 3).map(|_| rng.gen_range(-0.5f32..0.5)).collect();
    let gamma_data = vec![1.1f32, 0.9, 1.3];
    let beta_data = vec![0.1f32, -0.2, 0.0];
    let labels: Vec<u8> = (0..64).map(|_| rng.gen_range(0u8..3)).collect();

    let mut g = Graph::new();
    let x = g.leaf(Tensor::new(&[2, 8, 8], x_data.clone()).unwrap());
    let w = g.param(Tensor::new(&[3, 2, 3, 3], w_data.clone()).unwrap(), 0);
    let b = g.param(Tensor::zeros(&[3]), 54);
    let gamma = g.param(Tensor::new(&[3], gamma_data.clone()).unwrap(), 57);
    let beta = g.param(Tensor::new(&[3], beta_data.clone()).unwrap(), 60);
    let h = g.conv2d(x, w, b, 1, 1).unwrap();
    let n = g.channel_norm(h, gamma, beta, 1e-5).unwrap();
    let a = g.leaky_relu(n, 0.1);
    let p = g.avg_pool2(a).unwrap();
    let r = g.bilinear_resize(p, 8, 8).unwrap();
    let probs = g.softmax_channels(r).unwrap();
    let labels_map = ClassMap::from_data(8, 8, labels.clone());
    let (loss, _) = g.cross_entropy_mean(probs, &labels_map, None).unwrap();
    let grads = g.backward(loss).unwrap();

    let mut net = RefNet::default();
    let xr = net.push(RNode::Input(RTensor::from_f32(&[2, 8, 8], &x_data)));
    let wr = net.push(RNode::Param { offset: 0, shape: vec![3, 2, 3, 3] });
    let br = net.push(RNode::Param { offset: 54, shape: vec![3] });
    let gr = net.push(RNode::Param { offset: 57, shape: vec![3] });
    let ber = net.push(RNode::Param { offset: 60, shape: vec![3] });
    let hr = net.push(RNode::Conv2d { x: xr, w: wr, b: br, stride: 1, pad: 1 });
    let nr = net.push(RNode::ChannelNorm { x: hr, gamma: gr, beta: ber, eps: 1e-5 });
    let ar = net.push(RNode::LeakyRelu(nr, 0.1));
    let pr = net.push(RNode::AvgPool2(ar));
    let rr = net.push(RNode::BilinearResize { x: pr, h: 8, w: 8 });
    let smr = net.push(RNode::SoftmaxChannels(rr));
    net.push(RNode::CrossEntropyMean { probs: smr, labels, mask: None });

    let mut params64 = vec![0.0f64; 63];
    for (i, &v) in w_data.iter().enumerate() {
        params64[i] = v as f64;
    }
    for (i, &v) in gamma_data.iter().enumerate() {
        params64[57 + i] = v as f64;
    }
    for (i, &v) in beta_data.iter().enumerate() {
        params64[60 + i] = v as f64;
    }
    let fd = central_diff_grad(&net, &params64, 1e-4);
    for (i, (&ad, &want)) in grads.iter().zip(&fd).enumerate() {
        let err = grad_err(ad, want);
        assert!(err < 1e-3, "param {i}: autodiff {ad} vs fd {want} (err {err:.2e})");
    }
}

#[test]
fn empty_pixel_mask_gives_zero_loss_and_zero_gradient() {
    let mut g = Graph::new();
    let w = g.param(Tensor::new(&[2, 1, 1, 1], vec![0.5, -0.5]).unwrap(), 0);
    let x = g.leaf(Tensor::full(&[1, 2, 2], 1.0));
    let b = g.leaf(Tensor::zeros(&[2]));
    let h = g.conv2d(x, w, b, 1, 0).unwrap();
    let probs = g.softmax_channels(h).unwrap();
    let labels = ClassMap::new(2, 2);
    let mask = PixelMask::new(2, 2);
    let (loss, count) = g.cross_entropy_mean(probs, &labels, Some(&mask)).unwrap();
    assert_eq!(count, 0);
    assert_eq!(g.value(loss).item(), 0.0);
    let grads = g.backward(loss).unwrap();
    assert!(grads.iter().all(|&v| v == 0.0));
}
