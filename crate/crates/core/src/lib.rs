//! Set-level collaborative ranking for implicit feedback.
//!
//! This crate trains matrix-factorization recommenders with a two-level set
//! comparison objective. At every step an observed item set and an unobserved
//! item set are sampled for a user; the item-to-set term pushes each sampled
//! unobserved item below the whole observed set, and the set-to-set term keeps
//! the hardest unobserved item at a margin from the observed set's internal
//! distance summary. An adaptive variant masks part of the observed set so the
//! effective set size varies across steps. A pairwise BPR objective and a
//! full-ranking HR@N / NDCG@N evaluation harness are included for baselines.
//!
//! Module map:
//! - [`data`]: rating-log parsing, sparse interaction store, splits, popularity
//! - [`model`]: user/item embedding tables scored by inner product, checkpoints
//! - [`sampling`]: observed/unobserved set construction, masks, epoch schedule
//! - [`loss`]: objective values and analytic gradients
//! - [`trainer`]: stochastic gradient ascent loop with early stopping
//! - [`eval`]: full-ranking top-N metrics
//! - [`synth`]: synthetic interaction generators for experiments and probes

pub mod data;
pub mod error;
pub mod eval;
pub mod loss;
pub mod model;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod trainer;

pub use data::{Interaction, InteractionDataset};
pub use error::{Error, Result};
pub use eval::{EvalReport, Split};
pub use loss::{LossBreakdown, LossConfig, Objective};
pub use model::EmbeddingModel;
pub use sampling::{NegMode, NegativeSampler, SamplerConfig, SetSample};
pub use trainer::{Optimizer, TrainConfig, TrainReport};
