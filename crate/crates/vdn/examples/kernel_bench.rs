//! Rough throughput probe for the dense kernels at the exact shapes the
//! trainer uses. Run with `cargo run --release --example kernel_bench`.

use std::time::Instant;
use vdn::neuralcore::{accum_mat, backward_dw, backward_dx, forward_mat};

fn bench(name: &str, flops_per_call: f64, mut f: impl FnMut()) {
    // Warm up, then time enough iterations for ~0.3 s.
    f();
    let t0 = Instant::now();
    let mut iters = 0u64;
    while t0.elapsed().as_secs_f64() < 0.3 {
        f();
        iters += 1;
    }
    let secs = t0.elapsed().as_secs_f64();
    let gflops = flops_per_call * iters as f64 / secs / 1e9;
    println!("{name:32} {gflops:7.2} GFLOP/s");
}

fn main() {
    let batch = 32;
    for (label, i_dim, o_dim) in [
        ("fc1 75->32", 75usize, 32usize),
        ("lstm_ih 32->128", 32, 128),
        ("lstm_ih 64->128", 64, 128),
        ("lstm_hh 32->128", 32, 128),
        ("head 32->8", 32, 8),
    ] {
        let wt = vec![0.5f32; i_dim * o_dim];
        let w = vec![0.5f32; i_dim * o_dim];
        let bias = vec![0.1f32; o_dim];
        let x = vec![0.7f32; i_dim * batch];
        let mut y = vec![0.0f32; o_dim * batch];
        let dy = vec![0.3f32; o_dim * batch];
        let mut dx = vec![0.0f32; i_dim * batch];
        let mut dw = vec![0.0f32; i_dim * o_dim];
        let mut db = vec![0.0f32; o_dim];
        let flops = 2.0 * (i_dim * o_dim * batch) as f64;

        bench(&format!("forward {label}"), flops, || {
            forward_mat(&wt, &bias, &x, &mut y, i_dim, o_dim, batch);
            std::hint::black_box(&mut y);
        });
        bench(&format!("accum   {label}"), flops, || {
            accum_mat(&wt, &x, &mut y, i_dim, o_dim, batch);
            std::hint::black_box(&mut y);
        });
        bench(&format!("dx      {label}"), flops, || {
            backward_dx(&w, &dy, &mut dx, i_dim, o_dim, batch);
            std::hint::black_box(&mut dx);
        });
        bench(&format!("dw      {label}"), flops, || {
            backward_dw(&mut dw, &mut db, &dy, &x, i_dim, o_dim, batch);
            std::hint::black_box(&mut dw);
        });
        println!();
    }

    // Transcendental cost: the LSTM computes 5·H sigmoid/tanh per (batch row, step).
    let n = 128 * 32;
    let mut a = vec![0.3f32; n];
    bench("sigmoid libm 4096 elems", n as f64, || {
        for v in a.iter_mut() {
            *v = 1.0 / (1.0 + (-*v).exp());
        }
        std::hint::black_box(&mut a);
    });
    let mut b = vec![0.3f32; n];
    bench("tanh libm 4096 elems", n as f64, || {
        for v in b.iter_mut() {
            *v = v.tanh();
        }
        std::hint::black_box(&mut b);
    });
    let mut c = vec![0.3f32; n];
    bench("sigmoid fast 4096 elems", n as f64, || {
        for v in c.iter_mut() {
            *v = 1.0 / (1.0 + vdn::neuralcore::exp_approx_f32(-*v));
        }
        std::hint::black_box(&mut c);
    });
}
