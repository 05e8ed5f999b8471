//! Repeat-purchase modeling for audience creation.
//!
//! Purchases of consumables are modeled as a multivariate temporal point
//! process per user: a per-category base rate, a non-negative latent network
//! of cross-category excitation, and mixture-of-Weibull triggering kernels
//! that capture periodic re-purchase. Parameters are estimated stage by stage
//! from purchase logs ([`estimation`]); intensities are inferred for every
//! user at once by quantizing kernels and counts onto a daily grid and
//! evaluating the resulting convolutions as sparse-dense matrix products
//! ([`inference`]).
//!
//! Module map:
//! - [`events`]: event log model, ingestion, count matrices, statistics
//! - [`preprocess`]: promotion and re-seller filters, attribution matching
//! - [`kernels`]: triggering kernels, quantization, Weibull / mixture fits
//! - [`estimation`]: base intensities, kernel bank, MKV / lifted MKV networks
//! - [`inference`]: precompute bank, intensity matrix, audience ranking
//! - [`simulate`]: thinning sampler for synthetic logs, noise injection
//! - [`evaluate`]: train/test protocol, baselines, precision / recall
//! - [`pipeline`]: configuration and the end-to-end model artifact

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimation;
pub mod evaluate;
pub mod events;
pub mod inference;
pub mod kernels;
pub mod numeric;
pub mod pipeline;
pub mod preprocess;
pub mod simulate;

pub use error::{Error, ErrorKind, Result};
pub use events::{BehavioralLog, CategoryIndex, CountMatrix, Event, PurchaseEvent};
pub use kernels::{KernelParams, QuantizedKernel};
