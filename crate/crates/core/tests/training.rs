use std::sync::Arc;

use hmatpc::bench_gen::{Frame, FrameSeeds};
use hmatpc::factors::{apply_into, assemble_dense, ApplyWorkspace, FactorTensor, InitMode};
use hmatpc::hpartition::HPartition;
use hmatpc::linalg::{sym_eig, CsrMatrix, DenseMat, Purpose, RngStream};
use hmatpc::training::{
    cosine_loss, cosine_loss_grad, loss_gradient, probe_count, projector_distance, sai_loss, sai_loss_dense,
    sample_probes, smooth_probes, spectral_norm_estimate, train_factors, Control, LossChoice, StopReason,
    TrainConfig,
};
use hmatpc::Exec;
use proptest::prelude::*;

fn frame(n: usize, key: u64) -> Frame {
    Frame::generate(n, FrameSeeds { master: 17, frame: key }).unwrap()
}

fn factors(n: usize, l: usize, ls: usize, mode: InitMode, seed: u64) -> FactorTensor<f64> {
    let p = Arc::new(HPartition::build_clamped(n, l).unwrap());
    FactorTensor::init(p, ls, mode, &mut RngStream::new(seed, 0, Purpose::FactorInit)).unwrap()
}

/// `Y = M A Z` for row-major `Z` with `k` columns.
fn map(m: &FactorTensor<f64>, a: &CsrMatrix, z: &[f64], k: usize) -> Vec<f64> {
    let n = m.n();
    let mut x = vec![0.0; n * k];
    a.spmm_into(Exec::Sequential, z, k, &mut x).unwrap();
    let mut ws = ApplyWorkspace::new(m, k);
    let mut y = vec![0.0; n * k];
    apply_into(Exec::Sequential, m, &a.diagonal(), &x, k, &mut ws, &mut y).unwrap();
    y
}

#[test]
fn probe_count_rule() {
    assert_eq!(probe_count(1024), 64);
    assert_eq!(probe_count(4096), 64);
    assert_eq!(probe_count(16384), 128);
    assert_eq!(sample_probes(1024, None, &mut RngStream::new(0, 0, Purpose::Probe)).k, 64);
}

#[test]
fn probes_are_white() {
    let (n, k) = (4096, 64);
    let z = sample_probes(n, Some(k), &mut RngStream::new(3, 0, Purpose::Probe)).z;
    for a in 0..k {
        for b in a..k {
            let m = (0..n).map(|i| z[i * k + a] * z[i * k + b]).sum::<f64>() / n as f64;
            if a == b {
                assert!((0.9..=1.1).contains(&m), "column {a}: {m}");
            } else {
                assert!(m.abs() <= 0.1, "({a},{b}): {m}");
            }
        }
    }
}

#[test]
fn smoothing_damps_eigenmodes() {
    let f = frame(16, 0);
    let d = f.a.diagonal();
    let s = DenseMat::from_fn(16, 16, |i, j| f.a.get(i, j) / (d[i] * d[j]).sqrt());
    let e = sym_eig(&s).unwrap();
    for idx in 0..16 {
        let mu = e.values[idx];
        let z: Vec<f64> = e.vector(idx).iter().zip(&d).map(|(w, di)| w / di.sqrt()).collect();
        let mut batch = sample_probes(16, Some(1), &mut RngStream::new(0, 0, Purpose::Probe));
        batch.z.copy_from_slice(&z);
        smooth_probes(&f.a, &mut batch, 0.6, 2, Exec::Sequential).unwrap();
        let factor = (1.0 - 0.6 * mu).powi(2);
        for (got, zi) in batch.z.iter().zip(&z) {
            assert!((got - factor * zi).abs() <= 1e-10, "mode {idx}");
        }
    }
}

#[test]
fn smoothing_keeps_constants_and_lowers_rayleigh_quotients() {
    let f = frame(1024, 1);
    let d = f.a.diagonal();
    let mut c = sample_probes(1024, Some(1), &mut RngStream::new(0, 0, Purpose::Probe));
    c.z.iter_mut().for_each(|v| *v = 3.0);
    smooth_probes(&f.a, &mut c, 0.6, 2, Exec::Sequential).unwrap();
    assert!(c.z.iter().all(|v| (v - 3.0).abs() <= 1e-12));

    let k = 100;
    let rq = |z: &[f64]| -> Vec<f64> {
        let mut az = vec![0.0; z.len()];
        f.a.spmm_into(Exec::Sequential, z, k, &mut az).unwrap();
        (0..k)
            .map(|j| {
                let num: f64 = (0..1024).map(|i| z[i * k + j] * az[i * k + j]).sum();
                let den: f64 = (0..1024).map(|i| z[i * k + j].powi(2) * d[i]).sum();
                num / den
            })
            .collect()
    };
    let mut batch = sample_probes(1024, Some(k), &mut RngStream::new(4, 0, Purpose::Probe));
    let before = rq(&batch.z);
    smooth_probes(&f.a, &mut batch, 0.6, 2, Exec::Parallel).unwrap();
    assert_eq!(batch.smoothing, Some((0.6, 2)));
    let after = rq(&batch.z);
    for (b, a) in before.iter().zip(&after) {
        assert!(a <= b);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn smoothing_is_linear(alpha in -10.0f64..10.0, seed in 0u64..1000) {
        let f = frame(256, seed % 4);
        let mut a = sample_probes(256, Some(3), &mut RngStream::new(seed, 0, Purpose::Probe));
        let mut b = a.clone();
        b.z.iter_mut().for_each(|v| *v *= alpha);
        smooth_probes(&f.a, &mut a, 0.6, 2, Exec::Sequential).unwrap();
        smooth_probes(&f.a, &mut b, 0.6, 2, Exec::Sequential).unwrap();
        for (x, y) in a.z.iter().zip(&b.z) {
            prop_assert!((alpha * x - y).abs() <= 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn projector_identity(n in 2usize..64, seed in 0u64..1000) {
        let mut s = RngStream::new(seed, n as u64, Purpose::Test);
        let (u, v) = (s.sample_normal(n), s.sample_normal(n));
        let (lhs, rhs) = projector_distance(&u, &v);
        prop_assert!((lhs - rhs).abs() <= 1e-12);
        let cos = 1.0 - cosine_loss(&u, &v).unwrap();
        prop_assert!((rhs - (1.0 - cos * cos)).abs() <= 1e-12);
    }
}

#[test]
fn cosine_loss_laws() {
    let z = RngStream::new(1, 0, Purpose::Test).sample_normal(500);
    let neg: Vec<f64> = z.iter().map(|v| -v).collect();
    assert!(cosine_loss(&z, &z).unwrap().abs() <= 1e-10);
    assert!((cosine_loss(&z, &neg).unwrap() - 2.0).abs() <= 1e-10);
    for alpha in [1e-3, 1.0, 1e3] {
        let y: Vec<f64> = z.iter().map(|v| alpha * v).collect();
        assert!(cosine_loss(&z, &y).unwrap().abs() <= 1e-10);
    }
    assert!(cosine_loss(&z, &vec![0.0; 500]).is_err());
}

/// Scales the operator by `alpha` section by section.
fn scaled(m: &FactorTensor<f64>, alpha: f64) -> FactorTensor<f64> {
    let mut s = m.clone();
    let layout = *m.layout();
    let data = s.as_mut_slice();
    data[layout.leaf_section()].iter_mut().for_each(|v| *v *= alpha.sqrt());
    data[layout.tile_section()].iter_mut().for_each(|v| *v *= alpha);
    data[layout.gate()].iter_mut().for_each(|v| *v *= alpha);
    s
}

#[test]
fn cosine_is_scale_invariant_and_sai_is_not() {
    let f = frame(512, 2);
    let m = factors(512, 128, 32, InitMode::Random { sigma: 0.1 }, 5);
    let k = 8;
    let z = sample_probes(512, Some(k), &mut RngStream::new(6, 0, Purpose::Probe)).z;
    let base = cosine_loss(&z, &map(&m, &f.a, &z, k)).unwrap();
    for alpha in [1e-3, 0.5, 7.0, 1e3] {
        let l = cosine_loss(&z, &map(&scaled(&m, alpha), &f.a, &z, k)).unwrap();
        assert!((l - base).abs() <= 1e-10, "alpha {alpha}: {l} vs {base}");
    }
    let na = spectral_norm_estimate(&f.a, 50, 1e-6, &mut RngStream::new(0, 0, Purpose::Test)).unwrap();
    let s1 = sai_loss(&f.a, &m, &z, k, na, Exec::Sequential).unwrap();
    let s2 = sai_loss(&f.a, &scaled(&m, 2.0), &z, k, na, Exec::Sequential).unwrap();
    assert!((s1 - s2).abs() > 1e-6 * s1);
}

#[test]
fn sai_dense_oracle() {
    let eye = DenseMat::identity(5);
    let z = DenseMat::from_fn(5, 3, |i, j| (i * 3 + j) as f64 - 4.0);
    assert_eq!(sai_loss_dense(&eye, &eye, &z, 1.0).unwrap(), 0.0);

    let f = frame(64, 3);
    let m = factors(64, 16, 4, InitMode::Random { sigma: 0.2 }, 1);
    let k = 5;
    let zv = sample_probes(64, Some(k), &mut RngStream::new(2, 0, Purpose::Probe)).z;
    let na = spectral_norm_estimate(&f.a, 50, 1e-6, &mut RngStream::new(0, 0, Purpose::Test)).unwrap();
    let fast = sai_loss(&f.a, &m, &zv, k, na, Exec::Sequential).unwrap();
    let md = assemble_dense(&m, &f.a.diagonal()).unwrap();
    let slow = sai_loss_dense(&f.a.to_dense(), &md, &DenseMat::from_vec(64, k, zv).unwrap(), na).unwrap();
    assert!((fast - slow).abs() <= 1e-10 * slow.max(1.0), "{fast} vs {slow}");
}

#[test]
fn spectral_norm_matches_eigensolver() {
    let f = frame(256, 4);
    let top = *hmatpc::linalg::sym_eigvals(&f.a.to_dense()).unwrap().last().unwrap();
    let est = spectral_norm_estimate(&f.a, 50, 1e-6, &mut RngStream::new(1, 0, Purpose::Test)).unwrap();
    assert!(est <= top * (1.0 + 1e-12));
    assert!(est >= 0.95 * top, "{est} vs {top}");
}

#[test]
fn gate_gradient_closed_form() {
    let f = frame(256, 5);
    let m = factors(256, 64, 16, InitMode::JacobiSeed { sigma: 0.0 }, 0);
    let k = 6;
    let z = sample_probes(256, Some(k), &mut RngStream::new(8, 0, Purpose::Probe)).z;
    let (value, grad) = loss_gradient(&m, &f.a, &z, k, LossChoice::Cosine, None, Exec::Sequential).unwrap();

    let d = f.a.diagonal();
    let mut x = vec![0.0; 256 * k];
    f.a.spmm_into(Exec::Sequential, &z, k, &mut x).unwrap();
    let y: Vec<f64> = (0..256 * k).map(|e| x[e] / d[e / k]).collect();
    let mut gy = vec![0.0; y.len()];
    let want_value = cosine_loss_grad(&z, &y, 1.0, &mut gy).unwrap();
    assert!((value - want_value).abs() <= 1e-14);
    let gate = grad.gate();
    let scale = gate.iter().map(|g| g.abs()).fold(0.0, f64::max);
    for i in 0..256 {
        let want: f64 = (0..k).map(|j| gy[i * k + j] * x[i * k + j] / d[i]).sum();
        assert!((gate[i] - want).abs() <= 1e-12 * scale, "gate {i}");
    }
    // with zero factors every product-rule adjoint vanishes
    let layout = *m.layout();
    assert!(grad.as_slice()[..layout.gate().start].iter().all(|&g| g == 0.0));
}

#[test]
fn gradient_vanishes_at_alignment() {
    let mut s = RngStream::new(1, 0, Purpose::Test);
    let d: Vec<f64> = (0..128).map(|_| 1.0 + 5.0 * s.uniform()).collect();
    let a = CsrMatrix::from_diagonal(&d);
    let m = factors(128, 32, 8, InitMode::JacobiSeed { sigma: 0.0 }, 0);
    let z = sample_probes(128, Some(4), &mut RngStream::new(2, 0, Purpose::Probe)).z;
    let (value, grad) = loss_gradient(&m, &a, &z, 4, LossChoice::Cosine, None, Exec::Sequential).unwrap();
    assert!(value.abs() <= 1e-14);
    assert!(grad.norm() <= 1e-14, "{}", grad.norm());
}

#[test]
fn training_reduces_the_loss_tenfold() {
    let f = frame(1024, 6);
    let cfg = TrainConfig { max_steps: 2000, seed: 3, eval_pcg: false, ..TrainConfig::default() };
    // loss of the initial tensor on fresh smoothed probes
    let init = factors(1024, cfg.leaf, cfg.coarse, cfg.init, cfg.seed);
    let mut probes = sample_probes(1024, None, &mut RngStream::new(99, 0, Purpose::Probe));
    smooth_probes(&f.a, &mut probes, 0.6, 2, Exec::Sequential).unwrap();
    let first = cosine_loss(&probes.z, &map(&init, &f.a, &probes.z, probes.k)).unwrap();
    let out = train_factors(&[&f], None, &cfg, &mut |e, _| {
        if e.loss * 10.0 <= first { Control::Stop } else { Control::Continue }
    })
    .unwrap();
    let last = out.history.last().unwrap().loss;
    assert!(last * 10.0 <= first, "{first} -> {last} after {} steps", out.steps);
    assert!(out.factors.all_finite());
}

#[test]
fn training_is_deterministic() {
    let f = frame(256, 6);
    let cfg = TrainConfig { leaf: 64, coarse: 16, max_steps: 60, log_every: 20, ..TrainConfig::default() };
    let mut logs = 0;
    let a = train_factors(&[&f], None, &cfg, &mut |_, _| {
        logs += 1;
        Control::Continue
    })
    .unwrap();
    assert_eq!(a.stop, StopReason::MaxSteps);
    assert_eq!((a.history.len(), logs), (3, 3));
    let b = train_factors(&[&f], None, &cfg, &mut |_, _| Control::Continue).unwrap();
    assert_eq!(a.factors.as_slice(), b.factors.as_slice());
    assert_eq!(a.history.iter().map(|e| e.pcg_iters).collect::<Vec<_>>(), b.history.iter().map(|e| e.pcg_iters).collect::<Vec<_>>());
}

#[test]
fn observer_can_stop_training() {
    let f = frame(256, 7);
    let cfg = TrainConfig { leaf: 64, coarse: 16, max_steps: 1000, log_every: 10, ..TrainConfig::default() };
    let out = train_factors(&[&f], None, &cfg, &mut |e, _| {
        if e.step >= 30 { Control::Stop } else { Control::Continue }
    })
    .unwrap();
    assert_eq!(out.stop, StopReason::Observer);
    assert_eq!(out.steps, 30);
}
