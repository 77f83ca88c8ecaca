use hmatpc::analysis::{
    aggregate_reports, dense_preconditioner, precond_spectrum, pseudo_inverse, rank_audit, required_rank,
    to_csv_string, truncation_error, Deflation, SpectrumContext, ANALYSIS_CAP, DEFAULT_EPS,
};
use hmatpc::bench_gen::{Frame, FrameSeeds};
use hmatpc::hpartition::HPartition;
use hmatpc::linalg::{singular_values, CsrMatrix, DenseMat, Purpose, RngStream};
use hmatpc::pcg::{IdentityPrecond, JacobiApplier, SolveReport, SolveStatus};
use hmatpc::Exec;
use proptest::prelude::*;

fn frame(n: usize, key: u64) -> Frame {
    Frame::generate(n, FrameSeeds { master: 23, frame: key }).unwrap()
}

#[test]
fn pseudo_inverse_solves_consistent_systems() {
    let f = frame(1024, 0);
    let x = pseudo_inverse(&f.a, Deflation::Constant, ANALYSIS_CAP).unwrap();
    let y = x.matvec(&f.b).unwrap();
    let ay = f.a.spmv(&y).unwrap();
    let bnorm = f.b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let err = ay.iter().zip(&f.b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
    assert!(err <= 1e-8 * bnorm, "{}", err / bnorm);
    // A⁺ annihilates the constants as well
    let c = x.matvec(&vec![1.0; 1024]).unwrap();
    assert!(c.iter().all(|v| v.abs() <= 1e-8));
}

#[test]
fn pseudo_inverse_spectrum_is_flat() {
    let f = frame(256, 1);
    let x = pseudo_inverse(&f.a, Deflation::Constant, ANALYSIS_CAP).unwrap();
    let r = precond_spectrum(&f.a, "pinv", &x, Deflation::Constant, ANALYSIS_CAP).unwrap();
    assert_eq!(r.eigenvalues.len(), 255);
    assert!(r.eigenvalues.iter().all(|l| (l - 1.0).abs() <= 1e-9));
    assert!((r.kappa - 1.0).abs() <= 1e-9);
    assert_eq!(r.neg_count, 0);
}

#[test]
fn jacobi_on_a_diagonal_operator_is_exact() {
    let mut s = RngStream::new(4, 0, Purpose::Test);
    let d: Vec<f64> = (0..40).map(|_| 0.5 + 10.0 * s.uniform()).collect();
    let a = CsrMatrix::from_diagonal(&d);
    let m = dense_preconditioner(40, &mut JacobiApplier::new(&a).unwrap(), ANALYSIS_CAP).unwrap();
    let r = precond_spectrum(&a, "jacobi", &m, Deflation::None, ANALYSIS_CAP).unwrap();
    assert_eq!(r.eigenvalues.len(), 40);
    assert!(r.eigenvalues.iter().all(|l| (l - 1.0).abs() <= 1e-12));
}

#[test]
fn jacobi_lowers_kappa_on_most_frames() {
    let frames = 5;
    let mut wins = 0;
    for k in 0..frames {
        let f = frame(512, 10 + k);
        let ctx = SpectrumContext::new(&f.a, Deflation::Constant, ANALYSIS_CAP).unwrap();
        let none = ctx.unpreconditioned();
        let m = dense_preconditioner(512, &mut JacobiApplier::new(&f.a).unwrap(), ANALYSIS_CAP).unwrap();
        let jac = ctx.spectrum("jacobi", &m).unwrap();
        assert!(none.kappa >= 1.0 && jac.kappa >= 1.0);
        let ident = dense_preconditioner(512, &mut IdentityPrecond, ANALYSIS_CAP).unwrap();
        let again = ctx.spectrum("none", &ident).unwrap();
        assert!((again.kappa - none.kappa).abs() <= 1e-8 * none.kappa);
        if jac.kappa < none.kappa {
            wins += 1;
        }
        assert!(jac.reduction_vs(&none) > 0.0);
    }
    assert!(wins * 10 >= frames * 8);
}

#[test]
fn dense_cap_is_enforced() {
    let f = frame(512, 2);
    assert!(pseudo_inverse(&f.a, Deflation::Constant, 256).is_err());
    assert!(SpectrumContext::new(&f.a, Deflation::Constant, 256).is_err());
}

#[test]
fn identity_has_rank_free_tiles() {
    let p = HPartition::build(256, 64).unwrap();
    let x = pseudo_inverse(&CsrMatrix::identity(256), Deflation::None, ANALYSIS_CAP).unwrap();
    let audit = rank_audit(&x, &p, 16, &DEFAULT_EPS, Exec::Parallel).unwrap();
    assert_eq!(audit.samples.len(), 3 * 3);
    assert!(audit.samples.iter().all(|s| s.rank == 0));
}

#[test]
fn provided_fractions() {
    let p = HPartition::build(1024, 128).unwrap();
    let x = DenseMat::identity(1024);
    let audit = rank_audit(&x, &p, 32, &[1e-3], Exec::Sequential).unwrap();
    assert_eq!(audit.provided(1), 0.25);
    assert_eq!(audit.provided(4), 0.0625);
    let rows = audit.rows();
    assert_eq!(rows.iter().map(|r| r.span).collect::<Vec<_>>(), vec![1, 2, 4]);
    let csv = to_csv_string(&rows).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "S,eps,provided,required_mean,required_std");
}

#[test]
fn required_ranks_shrink_with_distance() {
    let f = frame(1024, 3);
    let p = HPartition::build(1024, 128).unwrap();
    let x = pseudo_inverse(&f.a, Deflation::Constant, ANALYSIS_CAP).unwrap();
    let audit = rank_audit(&x, &p, 32, &DEFAULT_EPS, Exec::Parallel).unwrap();
    for s in &audit.samples {
        assert!((0.0..=1.0).contains(&s.fraction));
    }
    let rows: Vec<_> = audit.rows().into_iter().filter(|r| r.eps == 1e-3).collect();
    assert!(rows.windows(2).all(|w| w[1].required_mean <= w[0].required_mean));
    // tighter tolerances need at least as much rank
    for span in [1, 2, 4] {
        let means: Vec<f64> = audit.rows().iter().filter(|r| r.span == span).map(|r| r.required_mean).collect();
        assert!(means.windows(2).all(|w| w[0] <= w[1]));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn reported_rank_is_the_smallest_admissible(r in 2usize..20, c in 2usize..20, decay in 0.05f64..0.9, seed in 0u64..1000) {
        let mut s = RngStream::new(seed, 0, Purpose::Test);
        let k = r.min(c);
        let u = DenseMat::from_vec(r, k, s.sample_normal(r * k)).unwrap();
        let v = DenseMat::from_vec(k, c, s.sample_normal(k * c)).unwrap();
        let scaled = DenseMat::from_fn(r, k, |i, j| u[(i, j)] * decay.powi(j as i32));
        let x = scaled.matmul(&v).unwrap();
        let sv = singular_values(&x).unwrap();
        for eps in DEFAULT_EPS {
            let rank = required_rank(&sv, eps);
            prop_assert!(truncation_error(&sv, rank) <= eps);
            if rank > 0 {
                prop_assert!(truncation_error(&sv, rank - 1) > eps);
            }
        }
    }
}

fn report(method: &str, n: usize, iterations: usize, converged: bool) -> SolveReport {
    SolveReport {
        method: method.into(),
        frame: None,
        n,
        iterations,
        converged,
        status: if converged { SolveStatus::Converged } else { SolveStatus::MaxIterations },
        breakdown_at: None,
        residual_history: vec![1.0],
        true_residual: 0.0,
        wall_ms: iterations as f64 * 0.1,
    }
}

#[test]
fn aggregation_statistics() {
    let rows = aggregate_reports(&[report("jacobi", 1024, 7, true)]);
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].iters_std, 0.0);

    let reports = vec![
        report("jacobi", 1024, 10, true),
        report("ic0", 1024, 4, true),
        report("jacobi", 1024, 20, true),
        report("jacobi", 1024, 30, false),
        report("jacobi", 2048, 50, true),
    ];
    let rows = aggregate_reports(&reports);
    assert_eq!(rows.len(), 3);
    let j = &rows[0];
    assert_eq!((j.method.as_str(), j.n), ("jacobi", 1024));
    assert_eq!(j.iters_mean, 20.0);
    assert!((j.iters_std - (200.0f64 / 3.0).sqrt()).abs() <= 1e-12);
    assert!((j.iters_std - 8.165).abs() < 1e-3);
    assert_eq!((j.iters_min, j.iters_max, j.failures, j.frames), (10, 30, 1, 3));
    assert_eq!(rows[1].method, "ic0");
    assert_eq!(rows[2].n, 2048);

    let csv = to_csv_string(&rows).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "method,N,iters_mean,iters_std,wall_ms_mean,iters_min,iters_max,failures,frames"
    );
    assert!(lines.next().unwrap().starts_with("jacobi,1024,20.0,"));
}
