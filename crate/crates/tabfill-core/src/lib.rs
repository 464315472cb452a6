//! Conditional denoising diffusion for mixed-type tabular data.
//!
//! This crate contains the full algorithmic core of the pipeline:
//!
//! - [`schema`]: table schemas, typed cells, deterministic splits
//! - [`preprocess`]: rank-based Gaussian quantile transform and one-hot
//!   category encoding, with exact inverses
//! - [`diffusion`]: noise schedules plus the Gaussian and multinomial
//!   forward/posterior/loss math
//! - [`denoiser`]: an MLP noise predictor with hand-written
//!   backpropagation and an Adam optimizer
//! - [`masking`]: dynamic condition/target masking
//! - [`train`]: the weighted hybrid training loop
//! - [`sample`]: the conditional reverse-diffusion sampler used for
//!   imputation
//! - [`metrics`]: Jensen-Shannon and 1-D Wasserstein distances
//! - [`eval`]: dependency-matched distributional evaluation,
//!   reconstruction scoring, baselines, and the sample-diversity
//!   diagnostic
//! - [`oracle`]: a dependency-DAG synthetic table generator with exact
//!   conditional distributions, used as ground truth in tests
//!
//! Everything here is pure computation over in-memory tables; file
//! formats, CSV handling, and the CLI live in the companion `tabfill`
//! crate. The crate is `no_std`-compatible (`alloc` required) so the
//! core can be embedded; the default `std` feature merely re-enables
//! `std`-backed conveniences in dependencies.
//!
//! All randomness flows through explicitly seeded ChaCha streams and all
//! float math goes through `libm`, so identical inputs produce
//! bit-identical outputs on any platform.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod checkpoint;
pub mod denoiser;
pub mod diffusion;
pub mod eval;
pub mod masking;
pub mod math;
pub mod metrics;
pub mod oracle;
pub mod preprocess;
pub mod sample;
pub mod schema;
pub mod train;

pub use checkpoint::Checkpoint;
pub use schema::{ColumnKind, ColumnSpec, DataTable, TableSchema};
