//! Direct optimization of a factor tensor against the cosine-Hutchinson loss
//! (or the scaled SAI loss), with hand-written adjoints through the apply chain.

mod grad;
mod loss;
mod optim;
mod probes;
mod train;

pub use grad::{apply_backward, loss_gradient, GradWorkspace, LossChoice};
pub use loss::{
    cosine_loss, cosine_loss_grad, projector_distance, sai_loss, sai_loss_dense, spectral_norm_estimate,
};
pub use optim::{clip_global_norm, AdamW, PlateauConfig, PlateauScheduler};
pub use probes::{probe_count, sample_probes, smooth_probes, ProbeBatch};
pub use train::{
    train_factors, Control, LogEntry, ProbeConfig, StopReason, TrainConfig, TrainOutcome,
};
