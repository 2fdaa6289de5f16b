//! Rough throughput probe for the layer kernels; used to size desk-scale
//! experiment configs. Run with `cargo run --release -p wsnet --example perf_probe`.

use ndarray::{Array2, Array3};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::time::Instant;
use wsnet::nn::conv::Conv2d;
use wsnet::nn::lstm::BiLstm;
use wsnet::nn::ParamStore;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // matmul baseline
    let a = Array2::<f32>::from_shape_fn((256, 256), |_| rng.random_range(-1.0..1.0f32));
    let b = a.clone();
    let t0 = Instant::now();
    let mut acc = 0.0f32;
    let reps = 100;
    for _ in 0..reps {
        let c = a.dot(&b);
        acc += c[[0, 0]];
    }
    let dt = t0.elapsed().as_secs_f64();
    let flops = 2.0 * 256f64.powi(3) * reps as f64;
    println!("matmul 256^3: {:.2} GFLOPS ({acc})", flops / dt / 1e9);

    // conv stack resembling a desk-scale block chain on a 32x72 line
    let mut store = ParamStore::new();
    let convs = [
        Conv2d::new(&mut store, "c1a", 1, 8, (3, 3), (1, 1), &mut rng),
        Conv2d::new(&mut store, "c1b", 8, 8, (3, 3), (1, 1), &mut rng),
        Conv2d::new(&mut store, "c2a", 8, 16, (3, 3), (1, 1), &mut rng),
        Conv2d::new(&mut store, "c2b", 16, 16, (3, 3), (1, 2), &mut rng),
        Conv2d::new(&mut store, "c3a", 16, 32, (3, 3), (1, 1), &mut rng),
        Conv2d::new(&mut store, "c3b", 32, 32, (3, 3), (1, 2), &mut rng),
        Conv2d::new(&mut store, "c4a", 32, 48, (3, 3), (1, 1), &mut rng),
        Conv2d::new(&mut store, "c4b", 48, 48, (3, 3), (1, 1), &mut rng),
    ];
    let x = Array3::<f32>::from_shape_fn((1, 32, 72), |_| rng.random_range(0.0..1.0f32));
    let t0 = Instant::now();
    let reps = 50;
    for _ in 0..reps {
        // crude: chain without pooling, heights kept, just to measure kernels
        let (y1, c1) = convs[0].forward(&store, &x);
        let (y2, c2) = convs[1].forward(&store, &y1);
        let mut grads = store.zero_grads();
        let g = convs[1].backward(&store, &c2, &y2, &mut grads);
        let _ = convs[0].backward(&store, &c1, &g, &mut grads);
        acc += y2[[0, 0, 0]];
    }
    println!(
        "conv fwd+bwd pair on 32x72: {:.2} ms/rep ({acc})",
        t0.elapsed().as_secs_f64() * 1000.0 / reps as f64
    );

    // BiLSTM T=18, in 96, hidden 32
    let lstm = BiLstm::new(&mut store, "l", 96, 32, &mut rng);
    let xs = Array2::<f32>::from_shape_fn((18, 96), |_| rng.random_range(-1.0..1.0f32));
    let t0 = Instant::now();
    let reps = 200;
    for _ in 0..reps {
        let (y, ctx) = lstm.forward(&store, &xs);
        let mut grads = store.zero_grads();
        let _ = lstm.backward(&store, &ctx, &y, &mut grads);
        acc += y[[0, 0]];
    }
    println!(
        "bilstm T=18 H=32 fwd+bwd: {:.3} ms/rep ({acc})",
        t0.elapsed().as_secs_f64() * 1000.0 / reps as f64
    );
}
