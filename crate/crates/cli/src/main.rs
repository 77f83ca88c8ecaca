mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hmatpc::training::LossChoice;
use hmatpc::Error;

use config::RunConfig;

#[derive(Parser, Debug)]
#[command(name = "hmatpc", version, about = "Hierarchical factor preconditioners for variable-density Poisson systems")]
struct Cli {
    /// JSON file with defaults; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Print the resolved configuration as JSON and exit.
    #[arg(long, global = true)]
    print_config: bool,

    /// Worker threads for per-frame parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Default data directory (also read from HMATPC_DATA_DIR).
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/test frames.
    Gen(GenArgs),
    /// Optimize a factor tensor on one or more frames.
    Train(TrainArgs),
    /// Solve one frame with one method.
    Solve(SolveArgs),
    /// Solve many frames with several methods and summarize.
    Bench(BenchArgs),
    /// Numerical rank of off-diagonal tiles of the pseudo-inverse.
    Audit(AuditArgs),
    /// Eigenvalues of the preconditioned operator.
    Spectrum(SpectrumArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Output directory (defaults to the data directory).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    scales: Option<Vec<usize>>,
    #[arg(long)]
    train: Option<usize>,
    #[arg(long)]
    test: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    leaf: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LossArg {
    Cosine,
    Sai,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training frame(s).
    #[arg(long = "frame", required = true)]
    frames: Vec<PathBuf>,
    /// Held-out frame for logged evaluation (defaults to the first training frame).
    #[arg(long)]
    eval: Option<PathBuf>,
    /// Checkpoint to write.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines training history (defaults to the checkpoint path with `.jsonl`).
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    grad_clip: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    #[arg(long)]
    log_every: Option<usize>,
    #[arg(long)]
    contexts: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    leaf: Option<usize>,
    #[arg(long)]
    coarse: Option<usize>,
    /// Skip the held-out PCG solve at each log step.
    #[arg(long)]
    no_eval_pcg: bool,
}

#[derive(Args, Debug)]
struct SolveOpts {
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Factor checkpoint for the `hfactor` method.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    frame: PathBuf,
    #[arg(long, default_value = "jacobi")]
    method: String,
    #[command(flatten)]
    opts: SolveOpts,
    /// Write every residual vector as JSON lines to this file.
    #[arg(long)]
    emit_residuals: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<String>>,
    /// Frame files or directories; defaults to the test split of every configured scale.
    #[arg(long, num_args = 1..)]
    frames: Vec<PathBuf>,
    #[command(flatten)]
    opts: SolveOpts,
    /// Output directory for reports.jsonl, summary.csv and summary.json.
    #[arg(long, default_value = "bench_out")]
    out: PathBuf,
    /// Exit with code 3 when any solve fails to converge.
    #[arg(long)]
    strict: bool,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long, num_args = 1..)]
    frames: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    #[arg(long)]
    leaf: Option<usize>,
    #[arg(long)]
    coarse: Option<usize>,
    #[arg(long)]
    dense_cap: Option<usize>,
    /// CSV output; a JSON mirror is written next to it.
    #[arg(long, default_value = "audit.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SpectrumArgs {
    #[arg(long, num_args = 1..)]
    frames: Vec<PathBuf>,
    #[arg(long = "method", value_delimiter = ',')]
    methods: Option<Vec<String>>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    dense_cap: Option<usize>,
    #[arg(long, default_value = "spectra.csv")]
    out: PathBuf,
}

fn resolve(cli: &Cli) -> hmatpc::Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    if let Some(d) = &cli.data_dir {
        cfg.data_dir = d.clone();
    }
    match &cli.command {
        Command::Gen(a) => {
            set(&mut cfg.scales, a.scales.clone());
            set(&mut cfg.train_frames, a.train);
            set(&mut cfg.test_frames, a.test);
            set(&mut cfg.seed, a.seed);
            set(&mut cfg.leaf, a.leaf);
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            if let Some(l) = a.loss {
                t.loss = match l {
                    LossArg::Cosine => LossChoice::Cosine,
                    LossArg::Sai => LossChoice::Sai,
                };
            }
            set(&mut t.lr, a.lr);
            set(&mut t.weight_decay, a.weight_decay);
            set(&mut t.grad_clip, a.grad_clip);
            set(&mut t.max_steps, a.max_steps);
            set(&mut t.log_every, a.log_every);
            set(&mut t.contexts, a.contexts);
            set(&mut t.seed, a.seed);
            set(&mut t.leaf, a.leaf);
            set(&mut t.coarse, a.coarse);
            if a.no_eval_pcg {
                t.eval_pcg = false;
            }
        }
        Command::Solve(a) => {
            set(&mut cfg.solve.rtol, a.opts.rtol);
            set(&mut cfg.solve.max_iters, a.opts.max_iters);
            cfg.methods = vec![a.method.clone()];
        }
        Command::Bench(a) => {
            set(&mut cfg.solve.rtol, a.opts.rtol);
            set(&mut cfg.solve.max_iters, a.opts.max_iters);
            set(&mut cfg.methods, a.methods.clone());
        }
        Command::Audit(a) => {
            set(&mut cfg.eps, a.eps.clone());
            set(&mut cfg.leaf, a.leaf);
            set(&mut cfg.coarse, a.coarse);
            set(&mut cfg.dense_cap, a.dense_cap);
        }
        Command::Spectrum(a) => {
            set(&mut cfg.methods, a.methods.clone());
            set(&mut cfg.dense_cap, a.dense_cap);
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Contract(_) => 2,
        Error::Numerical(_) | Error::Degenerate(_) => 3,
        Error::Io { .. } | Error::Format { .. } => 4,
    }
}

fn run(cli: Cli) -> hmatpc::Result<u8> {
    let cfg = resolve(&cli)?;
    if cli.print_config {
        println!("{}", cfg.to_json());
        return Ok(0);
    }
    eprintln!("config: {}", serde_json::to_string(&cfg).expect("config serializes"));
    commands::init_threads(cfg.jobs);
    match cli.command {
        Command::Gen(a) => commands::gen(&cfg, a.out.as_deref()),
        Command::Train(a) => commands::train(&cfg, &a.frames, a.eval.as_deref(), &a.out, a.history.as_deref()),
        Command::Solve(a) => commands::solve(&cfg, &a.frame, a.opts.checkpoint.as_deref(), a.emit_residuals.as_deref()),
        Command::Bench(a) => commands::bench(&cfg, &a.frames, a.opts.checkpoint.as_deref(), &a.out, a.strict),
        Command::Audit(a) => commands::audit(&cfg, &a.frames, &a.out),
        Command::Spectrum(a) => commands::spectrum(&cfg, &a.frames, a.checkpoint.as_deref(), &a.out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
