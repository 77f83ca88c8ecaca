use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::grad::{apply_backward, sai_grad, GradWorkspace, LossChoice};
use super::loss::{cosine_loss, cosine_loss_grad, spectral_norm_estimate};
use super::optim::{clip_global_norm, AdamW, PlateauConfig, PlateauScheduler};
use super::probes::{probe_count, sample_probes, smooth_probes};
use crate::bench_gen::Frame;
use crate::error::{Error, Result};
use crate::factors::{apply_into, ApplyWorkspace, FactorApplier, FactorTensor, InitMode};
use crate::hpartition::HPartition;
use crate::linalg::{Purpose, RngStream};
use crate::par::Exec;
use crate::pcg::{pcg_solve, SolveConfig};

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ProbeConfig {
    pub omega: f64,
    pub steps: usize,
    /// Columns per batch; `None` means `max(64, ceil(sqrt(N)))`.
    pub count: Option<usize>,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            omega: 0.6,
            steps: 2,
            count: None,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub grad_clip: f64,
    pub plateau: PlateauConfig,
    pub max_steps: usize,
    /// Optimizer steps per log step.
    pub log_every: usize,
    /// Auto-stop once at the rate floor with no relative improvement of
    /// `autostop_threshold` within this many log steps.
    pub autostop_window: usize,
    pub autostop_threshold: f64,
    /// Abort when the cosine loss stays above this level ...
    pub divergence_loss: f64,
    /// ... for this many consecutive log steps.
    pub divergence_logs: usize,
    pub probes: ProbeConfig,
    pub contexts: usize,
    pub loss: LossChoice,
    pub leaf: usize,
    pub coarse: usize,
    pub init: InitMode,
    pub seed: u64,
    /// Run PCG on the evaluation frame at every log step.
    pub eval_pcg: bool,
    pub eval_solve: SolveConfig,
    pub power_steps: usize,
    pub exec: Exec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 2e-4,
            weight_decay: 1e-4,
            grad_clip: 1.0,
            plateau: PlateauConfig::default(),
            max_steps: 100_000,
            log_every: 100,
            autostop_window: 10,
            autostop_threshold: 5e-3,
            divergence_loss: 1.9,
            divergence_logs: 20,
            probes: ProbeConfig::default(),
            contexts: 4,
            loss: LossChoice::Cosine,
            leaf: 128,
            coarse: 32,
            init: InitMode::default(),
            seed: 0,
            eval_pcg: true,
            eval_solve: SolveConfig::default(),
            power_steps: 50,
            exec: Exec::Parallel,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("grad_clip", self.grad_clip),
            ("plateau.factor", self.plateau.factor),
            ("probes.omega", self.probes.omega),
        ];
        for (name, v) in positive {
            if !(v > 0.0) {
                return Err(Error::config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay must be nonnegative"));
        }
        if self.log_every == 0 || self.contexts == 0 || self.autostop_window == 0 {
            return Err(Error::config("log_every, contexts and autostop_window must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct LogEntry {
    pub step: usize,
    /// Mean training loss over the steps since the previous log.
    pub loss: f64,
    /// Cosine loss on fixed probes of the evaluation frame.
    pub cosine_eval: f64,
    /// SAI loss on the same probes.
    pub sai_eval: f64,
    pub pcg_iters: Option<usize>,
    pub pcg_converged: Option<bool>,
    pub lr: f64,
    pub wall_ms: f64,
    /// Contexts skipped because the loss was undefined.
    pub skipped: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    AutoStop,
    Observer,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub factors: FactorTensor<f64>,
    pub history: Vec<LogEntry>,
    pub steps: usize,
    pub stop: StopReason,
}

struct FrameData<'a> {
    frame: &'a Frame,
    diag: Vec<f64>,
    norm_a: f64,
}

/// Optimizes a factor tensor on `frames`, evaluating on `eval` (or the first
/// training frame). `observer` sees every log entry and may stop the run.
pub fn train_factors(
    frames: &[&Frame],
    eval: Option<&Frame>,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&LogEntry, &FactorTensor<f64>) -> Control,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let first = *frames
        .first()
        .ok_or_else(|| Error::config("training needs at least one frame"))?;
    let n = first.n();
    if frames.iter().any(|f| f.n() != n) {
        return Err(Error::config("training frames must share N"));
    }
    let part = std::sync::Arc::new(HPartition::build_clamped(n, cfg.leaf)?);
    let coarse = cfg.coarse.min(part.leaf);
    let mut init_stream = RngStream::new(cfg.seed, 0, Purpose::FactorInit);
    let mut factors = FactorTensor::<f64>::init(part.clone(), coarse, cfg.init, &mut init_stream)?;

    let prep = |f: &'_ Frame, idx: u64| -> Result<(Vec<f64>, f64)> {
        let mut s = RngStream::new(cfg.seed, idx, Purpose::Test);
        Ok((f.a.diagonal(), spectral_norm_estimate(&f.a, cfg.power_steps, 1e-6, &mut s)?))
    };
    let mut data = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let (diag, norm_a) = prep(f, i as u64)?;
        data.push(FrameData { frame: f, diag, norm_a });
    }
    let eval_frame = eval.unwrap_or(first);
    if eval_frame.n() != n {
        return Err(Error::config("evaluation frame must match the training N"));
    }
    let (eval_diag, eval_norm) = prep(eval_frame, u64::MAX)?;
    let kz = cfg.probes.count.unwrap_or_else(|| probe_count(n));
    let eval_probes = sample_probes(n, Some(kz), &mut RngStream::new(cfg.seed, u64::MAX, Purpose::Test)).z;

    let mut ws = ApplyWorkspace::new(&factors, kz);
    let mut gws = GradWorkspace::new(&factors, kz);
    let mut grad = FactorTensor::<f64>::zeros(part.clone(), coarse)?;
    let mut grad_acc = vec![0.0; factors.len()];
    let mut x = vec![0.0; n * kz];
    let mut y = vec![0.0; n * kz];
    let mut gy = vec![0.0; n * kz];
    let mut opt = AdamW::new(factors.len(), cfg.weight_decay);
    let mut sched = PlateauScheduler::new(cfg.lr, cfg.plateau);
    let mut ctx_stream = RngStream::new(cfg.seed, 0, Purpose::Probe);

    let start = Instant::now();
    let mut history: Vec<LogEntry> = Vec::new();
    let mut window_loss = 0.0;
    let mut window_count = 0usize;
    let mut skipped = 0usize;
    let mut high_logs = 0usize;
    let mut stop = StopReason::MaxSteps;
    let mut steps_done = 0;
    let scale = 1.0 / cfg.contexts as f64;

    for step in 0..cfg.max_steps {
        grad_acc.iter_mut().for_each(|g| *g = 0.0);
        let mut step_loss = 0.0;
        let mut used = 0usize;
        for ctx in 0..cfg.contexts {
            let fi = if data.len() == 1 {
                0
            } else {
                ctx_stream.below(data.len() as u64) as usize
            };
            let fd = &data[fi];
            let sub = (step * cfg.contexts + ctx) as u32;
            let mut ps = RngStream::with_substream(cfg.seed, fi as u64, Purpose::Probe, sub);
            let mut probes = sample_probes(n, Some(kz), &mut ps);
            smooth_probes(&fd.frame.a, &mut probes, cfg.probes.omega, cfg.probes.steps, cfg.exec)?;
            let z = &probes.z;
            let value = match cfg.loss {
                LossChoice::Cosine => {
                    fd.frame.a.spmm_into(cfg.exec, z, kz, &mut x)?;
                    apply_into(cfg.exec, &factors, &fd.diag, &x, kz, &mut ws, &mut y)?;
                    cosine_loss_grad(z, &y, scale, &mut gy)
                }
                LossChoice::Sai => {
                    apply_into(cfg.exec, &factors, &fd.diag, z, kz, &mut ws, &mut y)?;
                    sai_grad(&fd.frame.a, z, &y, kz, fd.norm_a, &mut gy, scale, cfg.exec)
                }
            };
            let value = match value {
                Ok(v) => v,
                Err(Error::Degenerate(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            apply_backward(cfg.exec, &factors, &fd.diag, &ws, &gy, &mut gws, &mut grad)?;
            for (a, g) in grad_acc.iter_mut().zip(grad.as_slice()) {
                *a += g;
            }
            step_loss += value;
            used += 1;
        }
        if used > 0 {
            clip_global_norm(&mut grad_acc, cfg.grad_clip);
            opt.step(factors.as_mut_slice(), &grad_acc, sched.lr());
            window_loss += step_loss / used as f64;
            window_count += 1;
        }
        if !factors.all_finite() {
            return Err(Error::Numerical(format!("factors became non-finite at step {step}")));
        }
        steps_done = step + 1;

        if steps_done % cfg.log_every != 0 && steps_done != cfg.max_steps {
            continue;
        }
        let loss = if window_count > 0 {
            window_loss / window_count as f64
        } else {
            f64::NAN
        };
        window_loss = 0.0;
        window_count = 0;

        // Evaluation on fixed, unsmoothed probes.
        eval_frame.a.spmm_into(cfg.exec, &eval_probes, kz, &mut x)?;
        apply_into(cfg.exec, &factors, &eval_diag, &x, kz, &mut ws, &mut y)?;
        let cosine_eval = cosine_loss(&eval_probes, &y).unwrap_or(f64::NAN);
        apply_into(cfg.exec, &factors, &eval_diag, &eval_probes, kz, &mut ws, &mut y)?;
        eval_frame.a.spmm_into(cfg.exec, &y, kz, &mut x)?;
        let sai_eval: f64 = x
            .iter()
            .zip(&eval_probes)
            .map(|(v, zi)| (v / eval_norm - zi).powi(2))
            .sum();
        let (pcg_iters, pcg_converged) = if cfg.eval_pcg {
            let f32s = factors.cast::<f32>();
            let mut ap = FactorApplier::new(&f32s, &eval_diag)?;
            let out = pcg_solve(&eval_frame.a, &eval_frame.b, &mut ap, &cfg.eval_solve)?;
            (Some(out.report.iterations), Some(out.report.converged))
        } else {
            (None, None)
        };

        let lr = sched.observe(loss);
        let entry = LogEntry {
            step: steps_done,
            loss,
            cosine_eval,
            sai_eval,
            pcg_iters,
            pcg_converged,
            lr,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            skipped,
        };
        history.push(entry.clone());

        let cos_now = match cfg.loss {
            LossChoice::Cosine => loss,
            LossChoice::Sai => cosine_eval,
        };
        high_logs = if cos_now > cfg.divergence_loss { high_logs + 1 } else { 0 };
        if high_logs >= cfg.divergence_logs {
            stop = StopReason::Diverged;
            break;
        }
        if observer(&entry, &factors) == Control::Stop {
            stop = StopReason::Observer;
            break;
        }
        if sched.at_min() && autostop(&history, cfg.autostop_window, cfg.autostop_threshold) {
            stop = StopReason::AutoStop;
            break;
        }
    }

    Ok(TrainOutcome {
        factors,
        history,
        steps: steps_done,
        stop,
    })
}

/// No relative improvement of `threshold` in the last `window` logs over the
/// best value seen before them.
fn autostop(history: &[LogEntry], window: usize, threshold: f64) -> bool {
    if history.len() <= window {
        return false;
    }
    let split = history.len() - window;
    let before = history[..split].iter().map(|e| e.loss).fold(f64::INFINITY, f64::min);
    let recent = history[split..].iter().map(|e| e.loss).fold(f64::INFINITY, f64::min);
    recent > before * (1.0 - threshold)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(loss: f64) -> LogEntry {
        LogEntry {
            step: 0,
            loss,
            cosine_eval: loss,
            sai_eval: 0.0,
            pcg_iters: None,
            pcg_converged: None,
            lr: 0.0,
            wall_ms: 0.0,
            skipped: 0,
        }
    }

    #[test]
    fn autostop_needs_a_flat_window() {
        let flat: Vec<_> = (0..12).map(|_| entry(0.5)).collect();
        assert!(autostop(&flat, 10, 5e-3));
        let improving: Vec<_> = (0..12).map(|i| entry(1.0 - 0.05 * i as f64)).collect();
        assert!(!autostop(&improving, 10, 5e-3));
        assert!(!autostop(&flat[..10], 10, 5e-3));
    }
}
