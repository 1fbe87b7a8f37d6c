//! Spatiotemporal contrastive learning toolkit for street-view imagery.
//!
//! The library covers the full desk-scale pipeline:
//!
//! - [`geo`] — great-circle distance, a grid index for exact radius queries,
//!   point-to-area assignment.
//! - [`pairs`] — mining of self / temporal / spatial positive-pair manifests
//!   under the distance, heading, and area constraints, with audits.
//! - [`contrast`] — the InfoNCE loss family with analytic gradients, a toy
//!   MLP encoder, and a seeded training loop (warmup + cosine schedule,
//!   decoupled weight decay).
//! - [`synth`] — a synthetic-city generator with ground-truth static, area,
//!   and dynamic latent factors, making invariance claims testable.
//! - [`eval`] — downstream protocols: Recall@K place recognition, LASSO
//!   regression over area-aggregated features, and a logistic linear probe.
//! - [`analysis`] — representation diagnostics: attention distance, Fourier
//!   delta-log-amplitude spectra, and metadata-joined top-k retrieval.
//! - [`io`] — the on-disk formats (metadata CSV, embedding/tensor binaries,
//!   checkpoints) shared by the CLI and the library.
//! - [`cli`] — the `stcl` command-line surface tying the pipeline together.
//!
//! Every seeded entry point is deterministic: identical inputs and seeds
//! produce byte-identical artifacts.
//!
//! # Examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run -p stcl --example synth_city
//! cargo run -p stcl --example mine_pairs
//! cargo run -p stcl --example infonce_basics
//! cargo run -p stcl --example train_encoder
//! cargo run -p stcl --example place_recognition
//! cargo run -p stcl --example area_regression
//! cargo run -p stcl --example safety_probe
//! cargo run -p stcl --example retrieval
//! cargo run -p stcl --example attention_distance
//! cargo run -p stcl --example frequency_spectrum
//! cargo run -p stcl --example full_pipeline
//! ```

pub mod analysis;
pub mod cli;
pub mod contrast;
pub mod error;
pub mod eval;
pub mod geo;
pub mod io;
pub mod pairs;
pub mod synth;

pub use error::{Error, Result};
