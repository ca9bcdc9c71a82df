use std::time::Instant;
use dat_numerics::{kernels, Tensor};
use rand::Rng;
use rand_chacha::{rand_core::SeedableRng, ChaCha8Rng};

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut rv = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect() };

    for (cin, cout, h, w) in [(16usize, 16usize, 64usize, 64usize), (32, 32, 32, 32), (64, 64, 16, 16), (16, 16, 128, 128)] {
        let x = Tensor::new(&[cin, h, w], rv(cin * h * w)).unwrap();
        let wt = Tensor::new(&[cout, cin, 3, 3], rv(cout * cin * 9)).unwrap();
        let b = Tensor::new(&[cout], rv(cout)).unwrap();
        let macs = (cout * cin * 9 * h * w) as f64;
        let reps = (2e9 / macs).max(3.0) as usize;
        let t0 = Instant::now();
        let mut sink = 0.0f32;
        for _ in 0..reps {
            let y = kernels::conv2d_chw(&x, &wt, &b, 1, 1).unwrap();
            sink += y.data()[0];
        }
        let dt = t0.elapsed().as_secs_f64() / reps as f64;
        let gf = 2.0 * macs / dt / 1e9;
        let dy = Tensor::new(&[cout, h, w], rv(cout * h * w)).unwrap();
        let reps_b = (reps / 2).max(2);
        let t1 = Instant::now();
        for _ in 0..reps_b {
            let (dx, _dw, _db) = kernels::conv2d_chw_backward(&x, &wt, &dy, 1, 1).unwrap();
            sink += dx.data()[0];
        }
        let dtb = t1.elapsed().as_secs_f64() / reps_b as f64;
        let gfb = 2.0 * 2.0 * macs / dtb / 1e9;
        println!("conv {cin}->{cout} @{h}x{w}: fwd {:.2} ms ({gf:.1} GF/s), bwd {:.2} ms ({gfb:.1} GF/s)  [sink {sink:.3}]", dt * 1e3, dtb * 1e3);
    }
}
