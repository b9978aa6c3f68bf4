use relight::Tensor;
use relight::Tape;
use std::time::Instant;

fn main() {
    // Coupling-subnet-like load: batch 4, 6->8 channels, 48x32, 3x3 kernel.
    let x = Tensor::new(vec![4, 6, 48, 32], (0..4*6*48*32).map(|i| (i % 97) as f32 * 0.01).collect());
    let w = Tensor::new(vec![8, 6, 3, 3], (0..8*6*9).map(|i| (i % 13) as f32 * 0.01 - 0.05).collect());
    let b = Tensor::new(vec![8], vec![0.01f32; 8]);
    let macs = 4.0 * 8.0 * 48.0 * 32.0 * 6.0 * 9.0;

    let t0 = Instant::now();
    let iters = 2000;
    let mut acc = 0f32;
    for _ in 0..iters {
        let y = x.conv2d(&w, &b, 1, 1);
        acc += y.data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("fwd: {:.2} GMAC/s ({acc})", macs * iters as f64 / dt / 1e9);

    // With tape + backward
    let t0 = Instant::now();
    let iters = 600;
    for _ in 0..iters {
        let tape = Tape::new();
        let mut wt = w.clone();
        tape.watch(&mut wt);
        let loss = x.conv2d(&wt, &b, 1, 1).mean();
        let g = loss.backward();
        acc += g.get(&wt).data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("fwd+bwd(w): {:.2} GMAC-fwd-equiv/s ({acc})", macs * iters as f64 / dt / 1e9);

    // Wider middle conv 8->8... and the discriminator-like stride-2 on big input
    let x2 = Tensor::new(vec![16, 3, 192, 128], vec![0.3f32; 16*3*192*128]);
    let w2 = Tensor::new(vec![4, 3, 4, 4], vec![0.02f32; 4*3*16]);
    let b2 = Tensor::new(vec![4], vec![0.0f32; 4]);
    let macs2 = 16.0 * 4.0 * 96.0 * 64.0 * 3.0 * 16.0;
    let t0 = Instant::now();
    let iters = 200;
    for _ in 0..iters {
        let y = x2.conv2d(&w2, &b2, 2, 1);
        acc += y.data()[0];
    }
    let dt = t0.elapsed().as_secs_f64();
    println!("disc L1 stride2: {:.2} GMAC/s ({acc})", macs2 * iters as f64 / dt / 1e9);
}
