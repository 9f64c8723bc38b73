// Validation uses `!(x > 0.0)` so NaN is rejected along with nonpositive
// values; `x <= 0.0` would accept NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Topic modeling for censored time-to-event cohorts.
//!
//! The crate implements latent Dirichlet allocation (LDA) and a
//! survival-supervised variant in which each document's empirical topic
//! frequencies enter a proportional-hazards model for its event time.
//! Fitting is mean-field variational EM. Additional pieces:
//!
//! - [`docbuild`]: turns clinical treatment tables plus gene-level
//!   expression/methylation matrices into text documents by mixture-model
//!   barcoding and survival-group frequency filtering.
//! - [`survival`]: exponential / Weibull / Breslow baseline hazards, the
//!   survival part of the M-step objective with analytic gradients, and
//!   weighted Kaplan-Meier estimation.
//! - [`predict`]: held-out topic inference and median-lifetime prediction.
//! - [`simgen`]: synthetic corpora with known parameters for recovery tests.

pub mod corpus;
pub mod docbuild;
pub mod error;
pub mod math;
pub mod optim;
pub mod predict;
pub mod simgen;
pub mod survival;
pub mod trainer;
pub mod vem;

pub use corpus::{Corpus, Document, SurvivalOutcome, Vocabulary};
pub use error::{Error, Result};
pub use survival::{BaselineHazard, KMCurve, SurvivalDesign};
pub use trainer::{BackgroundSpec, FittedModel, TrainConfig};
pub use vem::{Mode, ModelParams, VariationalState};
