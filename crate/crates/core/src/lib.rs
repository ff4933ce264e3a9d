//! Prototype-connection matrix factorization (UIPC-MF) and its baselines.
//!
//! Everything in this crate is pure computation over in-memory data and
//! builds without `std` (an allocator is required). File formats, the CLI,
//! checkpoints and run manifests live in the companion `uipc` crate.
//!
//! Module map:
//!
//! * [`data`]: k-core filtering, leave-one-out splits, negative sampling.
//! * [`model`]: UIPC-MF parameters, similarity vectors, score decomposition.
//! * [`baselines`]: MF, ACF and ProtoMF scorers.
//! * [`losses`]: BCE/BPR/SSM objectives, regularizers and analytic gradients.
//! * [`optim`]: Adam and Adagrad.
//! * [`train`]: mini-batch training with early stopping, random search.
//! * [`eval`]: leave-one-out ranking metrics (HR@K, NDCG@K).
//! * [`explain`]: score breakdowns, prototype profiles, preference statistics.
//! * [`synth`]: planted block-structure datasets.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
mod error;
pub mod eval;
pub mod explain;
pub mod linalg;
pub mod losses;
pub mod model;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use model::{Model, ModelKind, ModelShape, Scorer};
