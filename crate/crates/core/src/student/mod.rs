//! Pointwise student scorers with hand-written gradients.
//!
//! Two model kinds over a feature vector `x`:
//!
//! * `linear`: `w·x + b`, parameters `[w (d), b]`.
//! * `mlp`: one ReLU hidden layer and a linear head,
//!   `w2·max(0, W1 x + b1) + b2`, parameters `[W1 (h x d, row-major), b1 (h), w2 (h), b2]`.

mod checkpoint;
mod labels;
mod train;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use thiserror::Error;

use crate::corpus::{CandidateSet, CorpusError, FeatureStore, Ranking};
use crate::prp::rank_by_scores;
use crate::seed::rng_from;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use labels::{pair_labels_from_aggregate, pair_labels_from_judgments, PairLabel, PointLabel, Supervision};
pub use train::{grad_check, train, Batch, EpochLog, LabelMode, LossKind, Term, TrainConfig, TrainLog};

#[derive(Debug, Error)]
pub enum StudentError {
    #[error("feature vector has {got} components, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite score")]
    NonFiniteScore,
    #[error("non-finite training loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no training instances for the training queries")]
    EmptyTrainingSet,
    #[error("batch has no terms")]
    EmptyBatch,
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("query {query}: pair ({first}, {second}) is missing its reverse-direction judgment")]
    MissingReverse {
        query: String,
        first: String,
        second: String,
    },
    #[error("loss {loss} cannot be trained from {supervision} supervision")]
    LossMismatch { loss: LossKind, supervision: &'static str },
    #[error("{expected} parameters expected, got {got}")]
    ParamCount { expected: usize, got: usize },
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Linear,
    Mlp,
}

impl FromStr for ModelKind {
    type Err = StudentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(ModelKind::Linear),
            "mlp" => Ok(ModelKind::Mlp),
            other => Err(StudentError::InvalidSpec(format!("unknown model kind {other:?}"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Linear => "linear",
            ModelKind::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Ignored for linear models.
    pub hidden_units: usize,
    pub input_dim: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::Linear,
            hidden_units: 0,
            input_dim,
        }
    }

    pub fn mlp(input_dim: usize, hidden_units: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            hidden_units,
            input_dim,
        }
    }

    pub fn validate(&self) -> Result<(), StudentError> {
        if self.input_dim == 0 {
            return Err(StudentError::InvalidSpec("input_dim must be at least 1".into()));
        }
        if self.kind == ModelKind::Mlp && self.hidden_units == 0 {
            return Err(StudentError::InvalidSpec("hidden_units must be at least 1".into()));
        }
        Ok(())
    }

    pub fn num_params(&self) -> usize {
        let (d, h) = (self.input_dim, self.hidden_units);
        match self.kind {
            ModelKind::Linear => d + 1,
            ModelKind::Mlp => h * d + h + h + 1,
        }
    }

    /// Whether parameter `i` is a weight (L2-regularized) rather than a bias.
    pub fn is_weight(&self, i: usize) -> bool {
        let (d, h) = (self.input_dim, self.hidden_units);
        match self.kind {
            ModelKind::Linear => i < d,
            ModelKind::Mlp => i < h * d || (h * d + h..h * d + 2 * h).contains(&i),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudentParams {
    spec: ModelSpec,
    values: Vec<f64>,
}

impl StudentParams {
    pub fn from_values(spec: ModelSpec, values: Vec<f64>) -> Result<Self, StudentError> {
        spec.validate()?;
        if values.len() != spec.num_params() {
            return Err(StudentError::ParamCount {
                expected: spec.num_params(),
                got: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(StudentError::InvalidSpec("parameters must be finite".into()));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), StudentError> {
        if x.len() != self.spec.input_dim {
            return Err(StudentError::DimensionMismatch {
                expected: self.spec.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Score with hidden pre-activations written to `hidden` (mlp only).
    pub(crate) fn forward_cached(&self, x: &[f64], hidden: &mut Vec<f64>) -> f64 {
        let d = self.spec.input_dim;
        let v = &self.values;
        match self.spec.kind {
            ModelKind::Linear => dot(&v[..d], x) + v[d],
            ModelKind::Mlp => {
                let h = self.spec.hidden_units;
                let (w1, rest) = v.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h);
                hidden.clear();
                hidden.extend((0..h).map(|k| dot(&w1[k * d..(k + 1) * d], x) + b1[k]));
                hidden.iter().zip(w2).map(|(z, w)| z.max(0.0) * w).sum::<f64>() + b2[0]
            }
        }
    }

    /// Adds `upstream * d(score)/d(theta)` into `grad`, using the
    /// pre-activations from [`forward_cached`](Self::forward_cached).
    pub(crate) fn backward(&self, x: &[f64], hidden: &[f64], upstream: f64, grad: &mut [f64]) {
        let d = self.spec.input_dim;
        match self.spec.kind {
            ModelKind::Linear => {
                for (g, xi) in grad[..d].iter_mut().zip(x) {
                    *g += upstream * xi;
                }
                grad[d] += upstream;
            }
            ModelKind::Mlp => {
                let h = self.spec.hidden_units;
                let w2 = &self.values[h * d + h..h * d + 2 * h];
                for k in 0..h {
                    let z = hidden[k];
                    // w2_k
                    grad[h * d + h + k] += upstream * z.max(0.0);
                    if z > 0.0 {
                        let back = upstream * w2[k];
                        for (g, xi) in grad[k * d..(k + 1) * d].iter_mut().zip(x) {
                            *g += back * xi;
                        }
                        grad[h * d + k] += back;
                    }
                }
                grad[h * d + 2 * h] += upstream;
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Linear models start at zero. MLP weights are drawn uniformly from
/// `±sqrt(6 / (fan_in + fan_out))` per layer; biases start at zero.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<StudentParams, StudentError> {
    spec.validate()?;
    let mut values = vec![0.0; spec.num_params()];
    if spec.kind == ModelKind::Mlp {
        let (d, h) = (spec.input_dim, spec.hidden_units);
        let mut rng = rng_from(seed);
        let limit1 = (6.0 / (d + h) as f64).sqrt();
        for v in &mut values[..h * d] {
            *v = rng.random_range(-limit1..=limit1);
        }
        let limit2 = (6.0 / (h + 1) as f64).sqrt();
        for v in &mut values[h * d + h..h * d + 2 * h] {
            *v = rng.random_range(-limit2..=limit2);
        }
    }
    StudentParams::from_values(*spec, values)
}

pub fn forward(params: &StudentParams, x: &[f64]) -> Result<f64, StudentError> {
    params.check_dim(x)?;
    let s = params.forward_cached(x, &mut Vec::new());
    if s.is_finite() {
        Ok(s)
    } else {
        Err(StudentError::NonFiniteScore)
    }
}

/// `log(1 + exp(z))` without overflow.
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    crate::teacher::logistic(z)
}

/// One pairwise logistic term and its gradients `(loss, dL/ds_i, dL/ds_j)`.
///
/// When the labels prefer `j` (`y_ij < y_ji`) the loss is
/// `log(1 + exp(s_i - s_j))`; when they prefer `i` the roles swap; equal
/// labels contribute nothing.
pub fn pairwise_logistic_term(s_i: f64, s_j: f64, y_ij: f64, y_ji: f64) -> Result<(f64, f64, f64), StudentError> {
    if !s_i.is_finite() || !s_j.is_finite() {
        return Err(StudentError::NonFiniteScore);
    }
    Ok(if y_ij < y_ji {
        let z = s_i - s_j;
        let g = sigmoid(z);
        (softplus(z), g, -g)
    } else if y_ij > y_ji {
        let z = s_j - s_i;
        let g = sigmoid(z);
        (softplus(z), -g, g)
    } else {
        (0.0, 0.0, 0.0)
    })
}

/// Squared error `(s - t)^2` and its derivative.
pub fn pointwise_mse_term(s: f64, t: f64) -> (f64, f64) {
    let r = s - t;
    (r * r, 2.0 * r)
}

/// Scores each candidate once.
pub fn score_candidates(
    params: &StudentParams,
    candidates: &CandidateSet,
    features: &FeatureStore,
) -> Result<Vec<f64>, StudentError> {
    candidates
        .entries()
        .iter()
        .map(|e| forward(params, features.require(candidates.query(), &e.doc)?))
        .collect()
}

/// Student rankings: one forward pass per candidate, ties kept in
/// first-stage order. Output follows the input query order.
pub fn predict_run(
    params: &StudentParams,
    candidates: &[CandidateSet],
    features: &FeatureStore,
) -> Result<Vec<Ranking>, StudentError> {
    candidates
        .iter()
        .map(|cs| {
            let scores = score_candidates(params, cs, features)?;
            Ok(rank_by_scores(&scores, cs).expect("one score per candidate"))
        })
        .collect()
}
