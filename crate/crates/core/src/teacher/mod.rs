//! Teachers: pointwise relevance scores and pairwise preferences.
//!
//! A [`Teacher`] answers two questions about a query: how relevant is one
//! document (a score in `[0, 1]`), and how likely it is to prefer the first
//! of two documents when they are presented in that order. Judgments are
//! cached per ordered pair in a [`JudgmentStore`].

mod judge;
mod remote;
mod scores;
mod simulated;
mod store;

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{DocId, QueryId};

pub use judge::{judge_pairs, JudgeOutcome};
pub use remote::{
    remote_judge, remote_score, PairRequest, PairResponse, PointRequest, PointResponse, PromptTemplates,
    RemoteConfig, RemoteTeacher, TEACHER_URL_ENV,
};
pub use scores::{score_docs, ScoreStore};
pub use simulated::SimulatedTeacher;
pub use store::{JudgmentStore, PairJudgment};

pub const DEFAULT_TIE_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error)]
pub enum TeacherError {
    #[error("no stored judgment for query {query}, ({first}, {second})")]
    ReplayMiss {
        query: String,
        first: String,
        second: String,
    },
    #[error("no stored pointwise score for query {query}, document {doc}")]
    ReplayScoreMiss { query: String, doc: String },
    #[error("cannot compare document {0} with itself")]
    SameDocument(String),
    #[error("invalid teacher spec: {0}")]
    InvalidSpec(String),
    #[error("remote teacher endpoint not configured (set {TEACHER_URL_ENV})")]
    NoEndpoint,
    #[error("remote teacher timed out")]
    Timeout,
    #[error("remote teacher returned HTTP status {0}")]
    Status(u16),
    #[error("remote teacher response violates schema: {0}")]
    Schema(String),
    #[error("remote teacher transport failure: {0}")]
    Transport(String),
    #[error("remote teacher failed after {attempts} attempts: {last}")]
    RetriesExhausted {
        attempts: u32,
        #[source]
        last: Box<TeacherError>,
    },
    #[error("judgment store {path}, line {line}: {message}")]
    StoreFormat {
        path: String,
        line: usize,
        message: String,
    },
    #[error("judgment store {path}: {source}")]
    StoreIo {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TeacherError {
    /// Transport-level failures that a retry may fix.
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            TeacherError::Timeout | TeacherError::Status(_) | TeacherError::Schema(_) | TeacherError::Transport(_)
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TeacherKind {
    /// Ground-truth grades: `p` is 1, 0 or 0.5.
    Oracle,
    /// `p = logistic(beta * (y_first - y_second) + order_bias)`.
    BradleyTerry,
    /// Pointwise scores `clamp(grade / max_grade + N(0, sd), 0, 1)`.
    PointwiseNoisy,
    /// Answers from a judgment store only.
    Replay,
    /// HTTP scoring service.
    Remote,
}

impl std::str::FromStr for TeacherKind {
    type Err = TeacherError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "oracle" => TeacherKind::Oracle,
            "bradley_terry" => TeacherKind::BradleyTerry,
            "pointwise_noisy" => TeacherKind::PointwiseNoisy,
            "replay" => TeacherKind::Replay,
            "remote" => TeacherKind::Remote,
            other => return Err(TeacherError::InvalidSpec(format!("unknown teacher kind {other:?}"))),
        })
    }
}

impl std::fmt::Display for TeacherKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TeacherKind::Oracle => "oracle",
            TeacherKind::BradleyTerry => "bradley_terry",
            TeacherKind::PointwiseNoisy => "pointwise_noisy",
            TeacherKind::Replay => "replay",
            TeacherKind::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherSpec {
    pub kind: TeacherKind,
    /// Preference sharpness.
    pub beta: f64,
    /// Added to the logit in favour of the first-listed document.
    pub order_bias: f64,
    pub pointwise_noise_sd: f64,
    pub tie_threshold: f64,
    pub seed: u64,
}

impl Default for TeacherSpec {
    fn default() -> Self {
        Self {
            kind: TeacherKind::BradleyTerry,
            beta: 2.0,
            order_bias: 0.1,
            pointwise_noise_sd: 0.25,
            tie_threshold: DEFAULT_TIE_THRESHOLD,
            seed: 0,
        }
    }
}

impl TeacherSpec {
    pub fn validate(&self) -> Result<(), TeacherError> {
        let bad = |m: String| Err(TeacherError::InvalidSpec(m));
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be finite and >= 0, got {}", self.beta));
        }
        if !self.order_bias.is_finite() {
            return bad(format!("order_bias must be finite, got {}", self.order_bias));
        }
        if !(self.pointwise_noise_sd >= 0.0 && self.pointwise_noise_sd.is_finite()) {
            return bad(format!("pointwise_noise_sd must be >= 0, got {}", self.pointwise_noise_sd));
        }
        if !(0.0..0.5).contains(&self.tie_threshold) {
            return bad(format!("tie_threshold must be in [0, 0.5), got {}", self.tie_threshold));
        }
        Ok(())
    }
}

/// Source of relevance judgments. Implementations are reentrant.
pub trait Teacher: Sync {
    /// Relevance of `doc` to `query`, in `[0, 1]`.
    fn pointwise_score(&self, query: &QueryId, doc: &DocId) -> Result<f64, TeacherError>;

    /// Probability of preferring `first` when it is listed first.
    /// `p(a, b) + p(b, a)` need not equal one.
    fn pairwise_preference(&self, query: &QueryId, first: &DocId, second: &DocId) -> Result<f64, TeacherError>;

    /// Half-width of the band around 0.5 discretized as a tie.
    fn tie_threshold(&self) -> f64;
}

/// Maps a preference probability to a comparison outcome in `{0, 0.5, 1}`:
/// 1 above `0.5 + tau`, 0 below `0.5 - tau`, 0.5 otherwise.
///
/// Values below one half are reflected so that
/// `discretize(1 - p) == 1 - discretize(p)` holds exactly in floating point.
pub fn discretize(p: f64, tau: f64) -> f64 {
    if p < 0.5 {
        1.0 - discretize_upper(1.0 - p, tau)
    } else {
        discretize_upper(p, tau)
    }
}

fn discretize_upper(p: f64, tau: f64) -> f64 {
    if p > 0.5 + tau {
        1.0
    } else {
        0.5
    }
}

/// Normalizes two option likelihoods, e.g. `P(yes) / (P(yes) + P(no))`.
/// Returns 0.5 when both are zero.
pub fn normalize_two_option(first: f64, second: f64) -> f64 {
    let total = first + second;
    if total > 0.0 {
        first / total
    } else {
        0.5
    }
}

/// `exp(a) / (exp(a) + exp(b))` computed without overflow.
pub fn two_option_from_logliks(loglik_first: f64, loglik_second: f64) -> f64 {
    logistic(loglik_first - loglik_second)
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Replays judgments from a store and, optionally, pointwise scores.
#[derive(Debug, Clone)]
pub struct ReplayTeacher {
    store: JudgmentStore,
    scores: HashMap<(QueryId, DocId), f64>,
    tie_threshold: f64,
}

impl ReplayTeacher {
    pub fn new(store: JudgmentStore, tie_threshold: f64) -> Self {
        Self {
            store,
            scores: HashMap::new(),
            tie_threshold,
        }
    }

    pub fn with_scores(mut self, scores: HashMap<(QueryId, DocId), f64>) -> Self {
        self.scores = scores;
        self
    }
}

impl Teacher for ReplayTeacher {
    fn pointwise_score(&self, query: &QueryId, doc: &DocId) -> Result<f64, TeacherError> {
        self.scores
            .get(&(query.clone(), doc.clone()))
            .copied()
            .ok_or_else(|| TeacherError::ReplayScoreMiss {
                query: query.to_string(),
                doc: doc.to_string(),
            })
    }

    fn pairwise_preference(&self, query: &QueryId, first: &DocId, second: &DocId) -> Result<f64, TeacherError> {
        self.store
            .get(query, first, second)
            .map(|j| j.p)
            .ok_or_else(|| TeacherError::ReplayMiss {
                query: query.to_string(),
                first: first.to_string(),
                second: second.to_string(),
            })
    }

    fn tie_threshold(&self) -> f64 {
        self.tie_threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn discretize_examples() {
        assert_eq!(discretize(0.9, 0.05), 1.0);
        assert_eq!(discretize(0.5, 0.05), 0.5);
        assert_eq!(discretize(0.46, 0.05), 0.5);
        assert_eq!(discretize(0.44, 0.05), 0.0);
        assert_eq!(discretize(0.54, 0.05), 0.5);
        assert_eq!(discretize(0.56, 0.05), 1.0);
        assert_eq!(discretize(0.0, 0.0), 0.0);
        assert_eq!(discretize(0.5, 0.0), 0.5);
    }

    #[test]
    fn two_option_normalization() {
        let p = normalize_two_option(0.6, 0.3);
        assert!((p - 0.666_666_666_666_666_6).abs() < 1e-12);
        assert_eq!(normalize_two_option(0.0, 0.0), 0.5);
        // e^{-0.1} / (e^{-0.1} + e^{-2.4})
        let expected = (-0.1f64).exp() / ((-0.1f64).exp() + (-2.4f64).exp());
        assert!((two_option_from_logliks(-0.1, -2.4) - expected).abs() < 1e-15);
        assert!((expected - 0.9089).abs() < 1e-4);
        assert_eq!(two_option_from_logliks(-3.0, -3.0), 0.5);
        assert_eq!(two_option_from_logliks(-1e6, 0.0), 0.0);
        assert_eq!(two_option_from_logliks(0.0, -1e6), 1.0);
    }

    #[test]
    fn spec_validation() {
        assert!(TeacherSpec::default().validate().is_ok());
        let mut s = TeacherSpec::default();
        s.tie_threshold = 0.5;
        assert!(s.validate().is_err());
        s.tie_threshold = 0.0;
        s.beta = -1.0;
        assert!(s.validate().is_err());
        assert_eq!("bradley_terry".parse::<TeacherKind>().unwrap(), TeacherKind::BradleyTerry);
        assert!("gpt".parse::<TeacherKind>().is_err());
    }

    proptest! {
        #[test]
        fn discretize_symmetric(p in 0.0f64..=1.0, tau in 0.0f64..0.5) {
            prop_assert_eq!(discretize(p, tau), 1.0 - discretize(1.0 - p, tau));
        }

        #[test]
        fn discretize_monotone(a in 0.0f64..=1.0, b in 0.0f64..=1.0, tau in 0.0f64..0.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(discretize(lo, tau) <= discretize(hi, tau));
        }
    }
}
