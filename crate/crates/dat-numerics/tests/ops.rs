//! Operation-level contracts: convolution against a nested-loop oracle,
//! elementwise/reduction primitives, and their edge cases.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dat_numerics::{ops, NumericsError, Tensor};
use dat_testkit::{bilinear_oracle, conv2d_oracle, RTensor};

fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    Tensor::from_fn(shape, |_| rng.gen_range(-1.0f32..1.0))
}

#[test]
fn conv2d_identity_kernel_passes_input_through() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = rand_tensor(&[1, 5, 7], &mut rng);
    let w = Tensor::new(&[1, 1, 1, 1], vec![1.0]).unwrap();
    let b = Tensor::zeros(&[1]);
    let y = ops::conv2d(&x, &w, &b, 1, 0).unwrap();
    assert!(y.bits_eq(&x));
}

#[test]
fn conv2d_all_ones_3x3_sums_to_nine() {
    let x = Tensor::full(&[1, 3, 3], 1.0);
    let w = Tensor::full(&[1, 1, 3, 3], 1.0);
    let b = Tensor::zeros(&[1]);
    let y = ops::conv2d(&x, &w, &b, 1, 0).unwrap();
    assert_eq!(y.shape(), &[1, 1, 1]);
    assert_eq!(y.item(), 9.0);
}

#[test]
fn conv2d_matches_nested_loop_oracle_on_random_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x = rand_tensor(&[2, 3, 8, 8], &mut rng);
    let w = rand_tensor(&[4, 3, 3, 3], &mut rng);
    let b = rand_tensor(&[4], &mut rng);
    let y = ops::conv2d(&x, &w, &b, 1, 0).unwrap();
    assert_eq!(y.shape(), &[2, 4, 6, 6]);

    let w_ref = RTensor::from_f32(&[4, 3, 3, 3], w.data());
    let bias_ref: Vec<f64> = b.data().iter().map(|&v| v as f64).collect();
    for n in 0..2 {
        let plane = 3 * 8 * 8;
        let x_ref = RTensor::from_f32(&[3, 8, 8], &x.data()[n * plane..(n + 1) * plane]);
        let expect = conv2d_oracle(&x_ref, &w_ref, &bias_ref, 1, 0);
        let out_plane = 4 * 6 * 6;
        for (i, &got) in y.data()[n * out_plane..(n + 1) * out_plane].iter().enumerate() {
            let want = expect.data[i];
            // Relative to the O(1) scale of the operands, so near-zero
            // entries (catastrophic cancellation) don't dominate.
            let rel = (got as f64 - want).abs() / want.abs().max(1.0);
            assert!(rel < 1e-5, "entry {i} of batch {n}: got {got}, want {want}");
        }
    }
}

#[test]
fn conv2d_strided_and_padded_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let x = rand_tensor(&[2, 9, 9], &mut rng);
    let w = rand_tensor(&[3, 2, 3, 3], &mut rng);
    let b = rand_tensor(&[3], &mut rng);
    let y = ops::conv2d(&x, &w, &b, 2, 1).unwrap();
    assert_eq!(y.shape(), &[3, 5, 5]);
    let expect = conv2d_oracle(
        &RTensor::from_f32(&[2, 9, 9], x.data()),
        &RTensor::from_f32(&[3, 2, 3, 3], w.data()),
        &b.data().iter().map(|&v| v as f64).collect::<Vec<_>>(),
        2,
        1,
    );
    for (i, &got) in y.data().iter().enumerate() {
        assert!((got as f64 - expect.data[i]).abs() < 1e-5);
    }
}

#[test]
fn conv2d_rejects_channel_mismatch_with_dimension_detail() {
    let x = Tensor::zeros(&[2, 4, 4]);
    let w = Tensor::zeros(&[1, 3, 3, 3]);
    let b = Tensor::zeros(&[1]);
    let err = ops::conv2d(&x, &w, &b, 1, 1).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains('2') && msg.contains('3'), "unhelpful error: {msg}");
}

#[test]
fn conv2d_rejects_even_kernels_and_small_inputs() {
    let x = Tensor::zeros(&[1, 4, 4]);
    let w_even = Tensor::zeros(&[1, 1, 2, 2]);
    assert!(ops::conv2d(&x, &w_even, &Tensor::zeros(&[1]), 1, 0).is_err());
    let x_small = Tensor::zeros(&[1, 2, 2]);
    let w3 = Tensor::zeros(&[1, 1, 3, 3]);
    assert!(ops::conv2d(&x_small, &w3, &Tensor::zeros(&[1]), 1, 0).is_err());
}

#[test]
fn dropout_rate_zero_is_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = rand_tensor(&[4, 4], &mut rng);
    let y = ops::dropout(&x, 0.0, &mut rng).unwrap();
    assert!(y.bits_eq(&x));
}

#[test]
fn dropout_scales_survivors_by_keep_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::full(&[64, 64], 1.0);
    let rate = 0.25f32;
    let y = ops::dropout(&x, rate, &mut rng).unwrap();
    let scale = 1.0 / (1.0 - rate);
    let mut kept = 0usize;
    for &v in y.data() {
        assert!(v == 0.0 || v == scale, "unexpected dropout value {v}");
        if v != 0.0 {
            kept += 1;
        }
    }
    let kept_frac = kept as f64 / y.len() as f64;
    assert!((kept_frac - 0.75).abs() < 0.05, "kept fraction {kept_frac}");
}

#[test]
fn dropout_rejects_rate_one_or_more() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x = Tensor::zeros(&[2, 2]);
    assert!(matches!(
        ops::dropout(&x, 1.0, &mut rng),
        Err(NumericsError::InvalidParameter(_))
    ));
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let x = Tensor::zeros(&[4, 1, 1]);
    let y = ops::softmax_over_channels(&x).unwrap();
    for &v in y.data() {
        assert!((v - 0.25).abs() < 1e-7);
    }
}

#[test]
fn softmax_sums_to_one_per_pixel() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = rand_tensor(&[6, 8, 8], &mut rng);
    let y = ops::softmax_over_channels(&x).unwrap();
    let hw = 64;
    for j in 0..hw {
        let s: f32 = (0..6).map(|c| y.data()[c * hw + j]).sum();
        assert!((s - 1.0).abs() < 1e-6, "pixel {j} sums to {s}");
    }
}

#[test]
fn bilinear_resize_matches_direct_interpolation_oracle() {
    let x = Tensor::new(&[1, 2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
    let y = ops::bilinear_resize(&x, 4, 4).unwrap();
    let expect = bilinear_oracle(&RTensor::from_f32(&[1, 2, 2], x.data()), 4, 4);
    for (i, &got) in y.data().iter().enumerate() {
        assert!(
            (got as f64 - expect.data[i]).abs() < 1e-6,
            "pixel {i}: got {got}, want {}",
            expect.data[i]
        );
    }
}

#[test]
fn bilinear_resize_random_shapes_match_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for &(h, w, nh, nw) in &[(8usize, 6usize, 16usize, 12usize), (9, 9, 5, 7), (4, 4, 13, 3)] {
        let x = rand_tensor(&[2, h, w], &mut rng);
        let y = ops::bilinear_resize(&x, nh, nw).unwrap();
        let expect = bilinear_oracle(&RTensor::from_f32(&[2, h, w], x.data()), nh, nw);
        for (i, &got) in y.data().iter().enumerate() {
            assert!((got as f64 - expect.data[i]).abs() < 1e-5);
        }
    }
}

#[test]
fn bilinear_resize_is_exact_for_constant_inputs() {
    let x = Tensor::full(&[3, 4, 4], 0.7317);
    let y = ops::bilinear_resize(&x, 11, 5).unwrap();
    for &v in y.data() {
        assert_eq!(v.to_bits(), 0.7317f32.to_bits());
    }
}

#[test]
fn channel_norm_normalizes_then_applies_affine() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let x = rand_tensor(&[2, 4, 4], &mut rng);
    let gamma = Tensor::new(&[2], vec![2.0, 0.5]).unwrap();
    let beta = Tensor::new(&[2], vec![-1.0, 3.0]).unwrap();
    let y = ops::channel_norm(&x, &gamma, &beta, 1e-5).unwrap();
    for c in 0..2 {
        let plane = &y.data()[c * 16..(c + 1) * 16];
        let mean: f32 = plane.iter().sum::<f32>() / 16.0;
        let var: f32 = plane.iter().map(|&v| (v - mean) * (v - mean)).sum::<f32>() / 16.0;
        assert!((mean - beta.data()[c]).abs() < 1e-4, "channel {c} mean {mean}");
        assert!(
            (var.sqrt() - gamma.data()[c].abs()).abs() < 1e-2,
            "channel {c} std {}",
            var.sqrt()
        );
    }
}

#[test]
fn relu_and_leaky_relu_behave_on_both_sides() {
    let x = Tensor::new(&[4], vec![-2.0, -0.5, 0.0, 3.0]).unwrap();
    assert_eq!(ops::relu(&x).data(), &[0.0, 0.0, 0.0, 3.0]);
    assert_eq!(ops::leaky_relu(&x, 0.1).data(), &[-0.2, -0.05, 0.0, 3.0]);
}

#[test]
fn add_and_mul_scalar_compose() {
    let a = Tensor::new(&[3], vec![1.0, 2.0, 3.0]).unwrap();
    let b = Tensor::new(&[3], vec![10.0, 20.0, 30.0]).unwrap();
    let y = ops::add(&a, &b).unwrap();
    assert_eq!(y.data(), &[11.0, 22.0, 33.0]);
    assert_eq!(ops::mul_scalar(&y, 0.5).data(), &[5.5, 11.0, 16.5]);
    assert!(ops::add(&a, &Tensor::zeros(&[4])).is_err());
}

#[test]
fn argmax_ties_resolve_to_lowest_class() {
    let probs = Tensor::new(&[3, 1, 2], vec![0.4, 0.2, 0.4, 0.5, 0.2, 0.3]).unwrap();
    let map = ops::argmax_channels(&probs).unwrap();
    assert_eq!(map.get(0, 0), 0); // tie between class 0 and 1
    assert_eq!(map.get(0, 1), 1);
}
