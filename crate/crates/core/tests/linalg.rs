use hmatpc::bench_gen::{Frame, FrameSeeds};
use hmatpc::linalg::eig::jacobi_eig;
use hmatpc::linalg::svd::singular_values_gram;
use hmatpc::linalg::{
    batched_gemm, gemm, morton_decode, morton_encode, singular_values, sym_eig, sym_eigvals, Accum, CsrMatrix,
    DenseMat, Op, Purpose, RngStream,
};
use hmatpc::Exec;
use proptest::prelude::*;

fn random_dense(rows: usize, cols: usize, seed: u64) -> DenseMat<f64> {
    let mut s = RngStream::new(seed, rows as u64 * 1000 + cols as u64, Purpose::Test);
    DenseMat::from_vec(rows, cols, s.sample_normal(rows * cols)).unwrap()
}

fn random_symmetric(n: usize, seed: u64) -> DenseMat<f64> {
    let b = random_dense(n, n, seed);
    DenseMat::from_fn(n, n, |i, j| b[(i, j)] + b[(j, i)])
}

fn naive(a: &DenseMat<f64>, b: &DenseMat<f64>) -> DenseMat<f64> {
    DenseMat::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|p| a[(i, p)] * b[(p, j)]).sum())
}

#[test]
fn identity_spmv_is_passthrough() {
    let x: Vec<f64> = (0..17).map(|i| i as f64 * 0.5 - 3.0).collect();
    assert_eq!(CsrMatrix::identity(17).spmv(&x).unwrap(), x);
}

#[test]
fn neumann_operator_annihilates_constants() {
    for seed in 0..5 {
        let f = Frame::generate(1024, FrameSeeds { master: seed, frame: 3 }).unwrap();
        let y = f.a.spmv(&vec![1.0; 1024]).unwrap();
        let worst = y.iter().map(|v| v.abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-12 * f.a.frobenius_norm());
    }
}

#[test]
fn eight_by_eight_spmv_matches_dense() {
    let mut s = RngStream::new(5, 0, Purpose::Test);
    let dense = DenseMat::from_fn(8, 8, |_, _| 0.0);
    let mut d = dense;
    for i in 0..8 {
        for j in 0..8 {
            if s.uniform() < 0.4 {
                d[(i, j)] = s.normal();
            }
        }
    }
    let a = CsrMatrix::from_dense(&d);
    let x = s.sample_normal(8);
    let y = a.spmv(&x).unwrap();
    let want = d.matvec(&x).unwrap();
    let norm = want.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = y.iter().zip(&want).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 1e-14 * norm);
}

#[test]
fn batched_identity_times_x_is_x() {
    let x = random_dense(6, 4, 1);
    let eye = DenseMat::identity(6);
    let out = batched_gemm(Exec::Parallel, &[(&eye, &x), (&eye, &x)], Op::N, Op::N, false).unwrap();
    assert!(out.iter().all(|o| o == &x));
}

#[test]
fn single_batch_matches_triple_loop_in_both_precisions() {
    let a = random_dense(33, 17, 2);
    let b = random_dense(17, 29, 3);
    let want = naive(&a, &b);
    let scale = want.frobenius_norm();
    let got = batched_gemm(Exec::Sequential, &[(&a, &b)], Op::N, Op::N, false).unwrap();
    let err = DenseMat::from_fn(33, 29, |i, j| got[0][(i, j)] - want[(i, j)]).frobenius_norm();
    assert!(err <= 1e-13 * scale);

    let (a32, b32) = (a.cast::<f32>(), b.cast::<f32>());
    let got = batched_gemm(Exec::Sequential, &[(&a32, &b32)], Op::N, Op::N, false).unwrap();
    let err = DenseMat::from_fn(33, 29, |i, j| got[0][(i, j)] as f64 - want[(i, j)]).frobenius_norm();
    assert!(err <= 1e-6 * scale);
}

#[test]
fn eigen_examples() {
    let v = sym_eigvals(&DenseMat::diag(&[3.0, 1.0, 2.0])).unwrap();
    assert_eq!(v.len(), 3);
    for (x, y) in v.iter().zip([1.0, 2.0, 3.0]) {
        assert!((x - y).abs() < 1e-14);
    }
    let a = random_symmetric(32, 4);
    let e = sym_eig(&a).unwrap();
    let recon = DenseMat::from_fn(32, 32, |i, j| {
        (0..32).map(|k| e.vectors[(i, k)] * e.values[k] * e.vectors[(j, k)]).sum::<f64>()
    });
    let err = DenseMat::from_fn(32, 32, |i, j| recon[(i, j)] - a[(i, j)]).frobenius_norm();
    assert!(err <= 1e-12 * a.frobenius_norm());
}

#[test]
fn normal_draws_have_unit_moments() {
    let v = RngStream::new(2024, 0, Purpose::Test).sample_normal(100_000);
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64;
    assert!(mean.abs() <= 0.02, "mean {mean}");
    assert!((var - 1.0).abs() <= 0.02, "var {var}");
}

#[test]
fn purpose_tags_decorrelate() {
    let n = 10_000;
    let a = RngStream::new(9, 1, Purpose::Probe).sample_normal(n);
    for p in [Purpose::Rhs, Purpose::Density, Purpose::FactorInit, Purpose::NetworkWeights, Purpose::Test] {
        let b = RngStream::new(9, 1, p).sample_normal(n);
        let corr = a.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>()
            / (a.iter().map(|x| x * x).sum::<f64>() * b.iter().map(|y| y * y).sum::<f64>()).sqrt();
        assert!(corr.abs() < 0.05, "{p:?}: {corr}");
    }
}

#[test]
fn morton_reference_codes() {
    assert_eq!(morton_encode(0, 0), 0);
    assert_eq!(morton_encode(1, 1), 3);
    assert_eq!(morton_encode(3, 5), 39);
}

/// Bit-by-bit interleave used as an oracle for the fast encoder.
fn interleave(x: u32, y: u32) -> u64 {
    (0..32).fold(0u64, |acc, b| {
        acc | (((x as u64 >> b) & 1) << (2 * b)) | (((y as u64 >> b) & 1) << (2 * b + 1))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn morton_matches_reference_and_round_trips(x in any::<u32>(), y in any::<u32>()) {
        let c = morton_encode(x, y);
        prop_assert_eq!(c, interleave(x, y));
        prop_assert_eq!(morton_decode(c), (x, y));
    }

    #[test]
    fn gemm_all_transposes_match_naive(m in 1usize..12, n in 1usize..12, k in 1usize..12, seed in 0u64..1000) {
        let a = random_dense(m, k, seed);
        let b = random_dense(k, n, seed + 1);
        let want = naive(&a, &b);
        let (at, bt) = (a.transpose(), b.transpose());
        for (oa, ob, sa, sb) in [(Op::N, Op::N, &a, &b), (Op::T, Op::N, &at, &b), (Op::N, Op::T, &a, &bt), (Op::T, Op::T, &at, &bt)] {
            let mut c = vec![1.0; m * n];
            gemm(oa, ob, m, n, k, sa.as_slice(), sb.as_slice(), &mut c, Accum::Add);
            for i in 0..m {
                for j in 0..n {
                    prop_assert!((c[i * n + j] - 1.0 - want[(i, j)]).abs() <= 1e-12 * (1.0 + want[(i, j)].abs()));
                }
            }
        }
    }

    #[test]
    fn spmv_matches_dense(n in 1usize..24, density in 0.05f64..0.9, seed in 0u64..1000) {
        let mut s = RngStream::new(seed, n as u64, Purpose::Test);
        let d = DenseMat::from_fn(n, n, |_, _| 0.0);
        let mut d = d;
        for i in 0..n {
            for j in 0..n {
                if s.uniform() < density {
                    d[(i, j)] = s.normal();
                }
            }
        }
        let a = CsrMatrix::from_dense(&d);
        prop_assert_eq!(a.to_dense(), d.clone());
        let x = s.sample_normal(n);
        let y = a.spmv(&x).unwrap();
        let want = d.matvec(&x).unwrap();
        for (p, q) in y.iter().zip(&want) {
            prop_assert!((p - q).abs() <= 1e-13 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn householder_ql_agrees_with_jacobi(n in 1usize..20, seed in 0u64..1000) {
        let a = random_symmetric(n, seed);
        let fast = sym_eig(&a).unwrap();
        let slow = jacobi_eig(&a).unwrap();
        let scale = a.frobenius_norm().max(1.0);
        for (x, y) in fast.values.iter().zip(&slow.values) {
            prop_assert!((x - y).abs() <= 1e-12 * scale);
        }
        for i in 0..n {
            let v = fast.vector(i);
            let av = a.matvec(&v).unwrap();
            let res = av.iter().zip(&v).map(|(p, q)| (p - fast.values[i] * q).powi(2)).sum::<f64>().sqrt();
            prop_assert!(res <= 1e-10 * scale);
        }
        for w in fast.values.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn one_sided_svd_agrees_with_gram_route(r in 1usize..16, c in 1usize..16, seed in 0u64..1000) {
        let a = random_dense(r, c, seed);
        let sv = singular_values(&a).unwrap();
        let oracle = singular_values_gram(&a).unwrap();
        let top = sv[0];
        for (x, y) in sv.iter().zip(&oracle) {
            prop_assert!((x - y).abs() <= 1e-7 * top);
        }
        for w in sv.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        let fro2: f64 = a.as_slice().iter().map(|v| v * v).sum();
        let s2: f64 = sv.iter().map(|s| s * s).sum();
        prop_assert!((fro2 - s2).abs() <= 1e-12 * fro2);
    }
}
