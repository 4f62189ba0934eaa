//! Brain-decoding evaluation toolkit.
//!
//! Trains regularized linear decoders from per-stimulus response matrices
//! to per-stimulus target representations, scores them with cosine-distance
//! mean-average-rank retrieval, quantifies cross-model representation
//! overlap, and generates synthetic worlds with a controlled shared latent
//! space for calibrating the whole pipeline against known ground truth.
//!
//! The crate is organized around the pipeline stages:
//!
//! * [`matrix`] — stimulus-labeled matrices, CSV/binary formats, alignment
//! * [`manifest`] — declarative experiment descriptions
//! * [`ridge`] — the closed-form multi-output ridge solver
//! * [`decoder`] — the subject × model decoding grid
//! * [`rankeval`] — rank-retrieval scoring and bootstrap intervals
//! * [`crossmodel`] — pairwise model-to-model predictivity
//! * [`synth`] — synthetic world generation
//!
//! All randomness flows through [`rng`]: keyed, counter-based streams that
//! make every result a pure function of the inputs and a single seed.

/// Toolkit version recorded in run metadata.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod crossmodel;
pub mod decoder;
pub mod error;
pub mod linalg;
pub mod manifest;
pub mod matrix;
pub mod rankeval;
pub mod ridge;
pub mod rng;
pub mod synth;

pub use crossmodel::{AlphaPolicy, PredictivityMatrix};
pub use decoder::{DecoderJob, PredictionMode, PredictionSet};
pub use error::{Error, Result};
pub use manifest::{EvalSettings, ExperimentManifest, MatrixRef};
pub use matrix::{LabeledMatrix, MatrixFormat};
pub use rankeval::RankReport;
pub use ridge::{RidgeConfig, RidgeFit, SolverPolicy};
pub use synth::{World, WorldSpec};
