use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hmatpc::analysis::{
    aggregate_reports, dense_preconditioner, pseudo_inverse, rank_audit, to_csv_string, write_csv, write_json,
    Deflation, RankAudit, SpectrumContext, SpectrumReport,
};
use hmatpc::bench_gen::io::read_frame;
use hmatpc::bench_gen::{digest_files, generate_dataset, DatasetSpec, Frame, Split};
use hmatpc::factors::{read_checkpoint, write_checkpoint, FactorApplier, FactorTensor};
use hmatpc::hpartition::HPartition;
use hmatpc::par;
use hmatpc::pcg::{pcg_solve, IdentityPrecond, Ic0Applier, JacobiApplier, Preconditioner, ShiftPolicy, SolveReport};
use hmatpc::training::{train_factors, Control, StopReason};
use hmatpc::{Error, Exec, Result};

use crate::config::RunConfig;

pub const METHODS: [&str; 4] = ["none", "jacobi", "ic0", "hfactor"];

pub fn init_threads(jobs: usize) {
    #[cfg(feature = "parallel")]
    {
        // a second call fails harmlessly when the pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = jobs;
}

fn exec(cfg: &RunConfig) -> Exec {
    if cfg.jobs > 1 {
        Exec::Parallel
    } else {
        Exec::Sequential
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.into(),
        source: e,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn label(path: &Path) -> String {
    path.display().to_string()
}

/// Files as given; directories contribute their `*.mppf` entries in name order.
/// With no inputs, the test split of every configured scale is used.
pub fn expand_frames(inputs: &[PathBuf], cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let dirs: Vec<PathBuf> = if inputs.is_empty() {
        cfg.scales
            .iter()
            .map(|n| cfg.data_dir.join(format!("n{n}")).join(Split::Test.dir_name()))
            .collect()
    } else {
        inputs.to_vec()
    };
    let mut out = Vec::new();
    for p in dirs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(&p)
                .map_err(io_err(&p))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|x| x == "mppf"))
                .collect();
            found.sort();
            out.extend(found);
        } else if p.is_file() {
            out.push(p);
        } else {
            return Err(Error::Io {
                path: p,
                source: std::io::Error::new(std::io::ErrorKind::NotFound, "no such frame file or directory"),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::Config("no frames found; run `hmatpc gen` or pass --frames".into()));
    }
    Ok(out)
}

fn load_factors(path: Option<&Path>, needed: bool) -> Result<Option<FactorTensor<f32>>> {
    match path {
        Some(p) => Ok(Some(read_checkpoint(p)?.0)),
        None if needed => Err(Error::Config("method hfactor needs --checkpoint".into())),
        None => Ok(None),
    }
}

fn preconditioner<'a>(
    method: &str,
    frame: &Frame,
    factors: Option<&'a FactorTensor<f32>>,
) -> Result<Box<dyn Preconditioner + 'a>> {
    Ok(match method {
        "none" => Box::new(IdentityPrecond),
        "jacobi" => Box::new(JacobiApplier::new(&frame.a)?),
        "ic0" => Box::new(Ic0Applier::new(&frame.a, ShiftPolicy::default())?),
        "hfactor" => {
            let m = factors.ok_or_else(|| Error::Config("method hfactor needs --checkpoint".into()))?;
            if m.n() != frame.n() {
                return Err(Error::Config(format!(
                    "checkpoint is for N = {}, frame has N = {}",
                    m.n(),
                    frame.n()
                )));
            }
            Box::new(FactorApplier::new(m, &frame.a.diagonal())?)
        }
        other => return Err(Error::Config(format!("unknown method {other:?}"))),
    })
}

pub fn gen(cfg: &RunConfig, out: Option<&Path>) -> Result<u8> {
    let out = out.unwrap_or(&cfg.data_dir);
    let spec = DatasetSpec {
        scales: cfg.scales.clone(),
        train: cfg.train_frames,
        test: cfg.test_frames,
        seed: cfg.seed,
        leaf_size: cfg.leaf,
    };
    let paths = generate_dataset(out, &spec, exec(cfg))?;
    for &n in &spec.scales {
        println!("N={n}: {} train, {} test frames", spec.train, spec.test);
    }
    println!("wrote {} files under {}", paths.len(), out.display());
    println!("sha256 {}", digest_files(&paths)?);
    Ok(0)
}

pub fn train(
    cfg: &RunConfig,
    frames: &[PathBuf],
    eval: Option<&Path>,
    out: &Path,
    history: Option<&Path>,
) -> Result<u8> {
    let loaded: Vec<Frame> = frames.iter().map(|p| read_frame(p)).collect::<Result<_>>()?;
    let eval_frame = eval.map(read_frame).transpose()?;
    let refs: Vec<&Frame> = loaded.iter().collect();
    let history_path = history.map(PathBuf::from).unwrap_or_else(|| out.with_extension("jsonl"));
    let mut hist = create(&history_path)?;
    let mut write_err = None;
    let outcome = train_factors(&refs, eval_frame.as_ref(), &cfg.train, &mut |entry, _| {
        if let Err(e) = writeln!(hist, "{}", serde_json::to_string(entry).expect("entry serializes")) {
            write_err = Some(e);
            return Control::Stop;
        }
        eprintln!(
            "step {:>6}  loss {:.5}  cos {:.5}  sai {:.4e}  pcg {}  lr {:.2e}",
            entry.step,
            entry.loss,
            entry.cosine_eval,
            entry.sai_eval,
            entry.pcg_iters.map_or("-".to_string(), |i| i.to_string()),
            entry.lr
        );
        Control::Continue
    })?;
    if let Some(e) = write_err {
        return Err(io_err(&history_path)(e));
    }
    hist.flush().map_err(io_err(&history_path))?;
    let meta = serde_json::json!({
        "loss": cfg.train.loss,
        "steps": outcome.steps,
        "stop": outcome.stop,
        "seed": cfg.train.seed,
        "frames": frames.iter().map(|p| label(p)).collect::<Vec<_>>(),
    });
    write_checkpoint(out, &outcome.factors.cast(), meta)?;
    let last = outcome.history.last();
    println!(
        "{} steps, stop: {:?}, final PCG iterations: {}",
        outcome.steps,
        outcome.stop,
        last.and_then(|e| e.pcg_iters).map_or("-".to_string(), |i| i.to_string())
    );
    println!("checkpoint {}  history {}", out.display(), history_path.display());
    if outcome.stop == StopReason::Diverged {
        eprintln!("error: training diverged");
        return Ok(3);
    }
    Ok(0)
}

pub fn solve(cfg: &RunConfig, frame_path: &Path, checkpoint: Option<&Path>, emit: Option<&Path>) -> Result<u8> {
    let method = cfg.methods.first().map(String::as_str).unwrap_or("jacobi");
    let frame = read_frame(frame_path)?;
    let factors = load_factors(checkpoint, method == "hfactor")?;
    let mut m = preconditioner(method, &frame, factors.as_ref())?;
    let mut scfg = cfg.solve.clone();
    scfg.record_residuals = emit.is_some();
    let mut out = pcg_solve(&frame.a, &frame.b, m.as_mut(), &scfg)?;
    out.report.frame = Some(label(frame_path));
    println!("{}", out.report.to_json_line());
    if let (Some(path), Some(res)) = (emit, out.residuals) {
        let mut w = create(path)?;
        for (k, r) in res.iter().enumerate() {
            let line = serde_json::json!({ "iteration": k, "residual": r });
            writeln!(w, "{line}").map_err(io_err(path))?;
        }
        w.flush().map_err(io_err(path))?;
        eprintln!("wrote {} residual vectors to {}", res.len(), path.display());
    }
    Ok(0)
}

pub fn bench(cfg: &RunConfig, frames: &[PathBuf], checkpoint: Option<&Path>, out: &Path, strict: bool) -> Result<u8> {
    let paths = expand_frames(frames, cfg)?;
    let needs = cfg.methods.iter().any(|m| m == "hfactor");
    let factors = load_factors(checkpoint, needs)?;
    let per_frame = par::map_indices(exec(cfg), paths.len(), |i| -> Result<Vec<SolveReport>> {
        let frame = read_frame(&paths[i])?;
        let mut reports = Vec::with_capacity(cfg.methods.len());
        for method in &cfg.methods {
            let mut m = preconditioner(method, &frame, factors.as_ref())?;
            let mut r = pcg_solve(&frame.a, &frame.b, m.as_mut(), &cfg.solve)?.report;
            r.frame = Some(label(&paths[i]));
            reports.push(r);
        }
        Ok(reports)
    });
    let mut reports = Vec::new();
    for r in per_frame {
        reports.extend(r?);
    }
    fs::create_dir_all(out).map_err(io_err(out))?;
    let jsonl = out.join("reports.jsonl");
    let mut w = create(&jsonl)?;
    for r in &reports {
        writeln!(w, "{}", r.to_json_line()).map_err(io_err(&jsonl))?;
    }
    w.flush().map_err(io_err(&jsonl))?;
    let summary = aggregate_reports(&reports);
    write_csv(&out.join("summary.csv"), &summary)?;
    write_json(&out.join("summary.json"), &summary)?;
    print!("{}", to_csv_string(&summary)?);
    let failed: Vec<&SolveReport> = reports.iter().filter(|r| !r.converged).collect();
    if strict && !failed.is_empty() {
        for r in &failed {
            eprintln!(
                "error: {} on {} ended with {:?} after {} iterations",
                r.method,
                r.frame.as_deref().unwrap_or("?"),
                r.status,
                r.iterations
            );
        }
        return Ok(3);
    }
    Ok(0)
}

pub fn audit(cfg: &RunConfig, frames: &[PathBuf], out: &Path) -> Result<u8> {
    let paths = expand_frames(frames, cfg)?;
    let per_frame = par::map_indices(exec(cfg), paths.len(), |i| -> Result<RankAudit> {
        let frame = read_frame(&paths[i])?;
        let pinv = pseudo_inverse(&frame.a, Deflation::Constant, cfg.dense_cap)?;
        let part = HPartition::build(frame.n(), cfg.leaf)?;
        rank_audit(&pinv, &part, cfg.coarse, &cfg.eps, Exec::Sequential)
    });
    let mut pooled: Option<RankAudit> = None;
    for a in per_frame {
        let a = a?;
        match pooled.as_mut() {
            Some(p) => p.merge(a)?,
            None => pooled = Some(a),
        }
    }
    let rows = pooled.expect("at least one frame").rows();
    write_csv(out, &rows)?;
    write_json(&out.with_extension("json"), &rows)?;
    print!("{}", to_csv_string(&rows)?);
    Ok(0)
}

pub fn spectrum(cfg: &RunConfig, frames: &[PathBuf], checkpoint: Option<&Path>, out: &Path) -> Result<u8> {
    let paths = expand_frames(frames, cfg)?;
    let needs = cfg.methods.iter().any(|m| m == "hfactor");
    let factors = load_factors(checkpoint, needs)?;
    let per_frame = par::map_indices(exec(cfg), paths.len(), |i| -> Result<Vec<SpectrumReport>> {
        let frame = read_frame(&paths[i])?;
        let ctx = SpectrumContext::new(&frame.a, Deflation::Constant, cfg.dense_cap)?.with_frame(label(&paths[i]));
        let mut reports = Vec::new();
        for method in &cfg.methods {
            if method == "none" {
                reports.push(ctx.unpreconditioned());
                continue;
            }
            let mut m = preconditioner(method, &frame, factors.as_ref())?;
            let dense = dense_preconditioner(frame.n(), m.as_mut(), cfg.dense_cap)?;
            reports.push(ctx.spectrum(method, &dense)?);
        }
        Ok(reports)
    });
    let mut reports = Vec::new();
    for r in per_frame {
        reports.extend(r?);
    }
    let rows: Vec<_> = reports.iter().map(SpectrumReport::row).collect();
    write_csv(out, &rows)?;
    let mut by_method: BTreeMap<&str, Vec<&SpectrumReport>> = BTreeMap::new();
    for r in &reports {
        by_method.entry(&r.method).or_default().push(r);
    }
    write_json(&out.with_extension("json"), &reports)?;
    print!("{}", to_csv_string(&rows)?);
    for (method, rs) in by_method {
        let mean = rs.iter().map(|r| r.kappa).sum::<f64>() / rs.len() as f64;
        eprintln!("{method}: mean kappa {mean:.4e} over {} frames", rs.len());
    }
    Ok(0)
}
