use std::hint::black_box;
use std::sync::Arc;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use hmatpc::bench_gen::{Frame, FrameSeeds};
use hmatpc::factors::{apply_into, ApplyWorkspace, FactorTensor, InitMode};
use hmatpc::hpartition::HPartition;
use hmatpc::linalg::{batched_gemm, DenseMat, Op, Purpose, RngStream};
use hmatpc::{par, Exec};

const POLICIES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn spmm(c: &mut Criterion) {
    let f = Frame::generate(4096, FrameSeeds { master: 0, frame: 0 }).unwrap();
    let k = 64;
    let x = RngStream::new(1, 0, Purpose::Test).sample_normal(4096 * k);
    let mut y = vec![0.0; 4096 * k];
    let mut g = c.benchmark_group("spmm_n4096_k64");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| f.a.spmm_into(exec, black_box(&x), k, &mut y).unwrap()));
    }
    g.finish();
}

fn gemm(c: &mut Criterion) {
    let mut s = RngStream::new(2, 0, Purpose::Test);
    let mats: Vec<DenseMat<f32>> = (0..32)
        .map(|_| DenseMat::from_vec(128, 128, s.sample_normal(128 * 128)).unwrap().cast::<f32>())
        .collect();
    let pairs: Vec<(&DenseMat<f32>, &DenseMat<f32>)> = mats.chunks(2).map(|p| (&p[0], &p[1])).collect();
    let mut g = c.benchmark_group("batched_gemm_16x128");
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| b.iter(|| batched_gemm(exec, black_box(&pairs), Op::N, Op::N, false).unwrap()));
    }
    g.finish();
}

fn factor_apply(c: &mut Criterion) {
    let n = 1024;
    let p = Arc::new(HPartition::build(n, 128).unwrap());
    let m = FactorTensor::<f32>::init(p, 32, InitMode::Random { sigma: 0.1 }, &mut RngStream::new(3, 0, Purpose::FactorInit))
        .unwrap();
    let d = vec![4.0; n];
    let mut g = c.benchmark_group("factor_apply_n1024");
    for cols in [1, 64] {
        let x = RngStream::new(4, 0, Purpose::Test).sample_normal(n * cols);
        let mut y = vec![0.0; n * cols];
        let mut ws = ApplyWorkspace::new(&m, cols);
        for (name, exec) in POLICIES {
            g.bench_with_input(BenchmarkId::new(name, cols), &cols, |b, &cols| {
                b.iter(|| apply_into(exec, &m, &d, black_box(&x), cols, &mut ws, &mut y).unwrap())
            });
        }
    }
    g.finish();
}

fn frame_generation(c: &mut Criterion) {
    let mut g = c.benchmark_group("generate_8_frames_n1024");
    g.sample_size(10);
    for (name, exec) in POLICIES {
        g.bench_function(name, |b| {
            b.iter(|| {
                par::map_indices(exec, 8, |i| Frame::generate(1024, FrameSeeds { master: 0, frame: i as u64 }).unwrap())
            })
        });
    }
    g.finish();
}

criterion_group!(benches, spmm, gemm, factor_apply, frame_generation);
criterion_main!(benches);
