//! Hierarchical factorized approximate-inverse preconditioning for stiff
//! multiphase pressure-Poisson systems.
//!
//! The crate is organized bottom-up:
//!
//! * [`linalg`]: CSR/dense kernels, symmetric eigen and SVD routines, counter-based
//!   random streams and Morton codes.
//! * [`bench_gen`]: the multiphase Poisson frame generator and the `MPPF` file format.
//! * [`hpartition`]: the weak-admissibility block partition and packed factor layout.
//! * [`factors`]: the factor tensor, its allocation-free apply chain and a dense
//!   assembly oracle.
//! * [`toy_net`]: a small forward-only two-stream transformer that emits factor tensors.
//! * [`pcg`]: mixed-precision preconditioned conjugate gradient with Jacobi and IC(0)
//!   baselines.
//! * [`training`]: probes, cosine/SAI losses, hand-written adjoints and the optimizer loop.
//! * [`analysis`]: spectra of the preconditioned operator, the off-diagonal rank audit
//!   and report aggregation.
//!
//! Data-parallel kernels take an [`Exec`] policy. With the `parallel` feature disabled
//! every policy runs sequentially; results are identical either way.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod bench_gen;
pub mod error;
pub mod factors;
pub mod hpartition;
pub mod linalg;
pub mod par;
pub mod pcg;
pub mod toy_net;
pub mod training;

pub use error::{Error, Result};
pub use par::Exec;
