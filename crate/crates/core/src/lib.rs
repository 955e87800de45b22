//! Pairwise ranking distillation.
//!
//! The pipeline has four stages, each a module here:
//!
//! 1. [`sampling`] picks a budgeted set of ordered document pairs per query,
//!    optionally weighted by the first-stage ranking.
//! 2. [`teacher`] judges those pairs (in both presentation orders) and caches
//!    the judgments in a [`teacher::JudgmentStore`].
//! 3. [`student`] trains a pointwise scorer from the pair pseudo-labels with a
//!    pairwise logistic loss, or from pointwise teacher scores with squared error.
//! 4. [`student::predict_run`] scores each candidate once and the result is
//!    measured with [`eval`].
//!
//! [`prp`] implements the full-pair aggregation baseline, [`corpus`] the data
//! model and TREC-style file formats, and [`experiment`] wires the stages
//! together for sweeps.

pub mod corpus;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod prp;
pub mod sampling;
pub mod seed;
pub mod student;
pub mod teacher;

pub use corpus::{CandidateSet, Dataset, DocId, QueryId, Ranking, RelevanceJudgments, ScoredDoc};
pub use error::{Error, Result};
