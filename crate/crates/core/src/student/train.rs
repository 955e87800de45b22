use std::collections::HashMap;
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;

use super::{
    init_params, pairwise_logistic_term, pointwise_mse_term, ModelKind, ModelSpec, StudentError, StudentParams,
    Supervision,
};
use crate::corpus::{Dataset, DatasetSplit, DocId, QueryId};
use crate::eval::{ndcg_at_k, opa};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    PairwiseLogistic,
    PointwiseMse,
}

impl FromStr for LossKind {
    type Err = StudentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pairwise_logistic" => Ok(LossKind::PairwiseLogistic),
            "pointwise_mse" => Ok(LossKind::PointwiseMse),
            other => Err(StudentError::InvalidConfig(format!("unknown loss {other:?}"))),
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossKind::PairwiseLogistic => "pairwise_logistic",
            LossKind::PointwiseMse => "pointwise_mse",
        })
    }
}

/// Which pair labels feed the pairwise loss: discretized outcomes or the
/// continuous preference probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Hard,
    Soft,
}

impl FromStr for LabelMode {
    type Err = StudentError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "hard" => Ok(LabelMode::Hard),
            "soft" => Ok(LabelMode::Soft),
            other => Err(StudentError::InvalidConfig(format!("unknown label mode {other:?}"))),
        }
    }
}

impl fmt::Display for LabelMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelMode::Hard => "hard",
            LabelMode::Soft => "soft",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Coefficient on the squared norm of the weights (biases excluded).
    pub l2: f64,
    pub seed: u64,
    pub loss: LossKind,
    pub label_mode: LabelMode,
    /// Epochs without a validation OPA improvement before stopping; 0 disables.
    pub early_stop_patience: usize,
}

impl TrainConfig {
    /// Defaults with the learning rate suited to `kind` (0.1 linear, 0.01 mlp).
    pub fn for_model(kind: ModelKind) -> Self {
        Self {
            learning_rate: match kind {
                ModelKind::Linear => 0.1,
                ModelKind::Mlp => 0.01,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StudentError> {
        let bad = |m: &str| Err(StudentError::InvalidConfig(m.to_string()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be finite and non-negative");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad("l2 must be finite and non-negative");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 128,
            l2: 0.0,
            seed: 0,
            loss: LossKind::PairwiseLogistic,
            label_mode: LabelMode::Hard,
            early_stop_patience: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub val_opa: Option<f64>,
    pub val_ndcg10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose parameters were returned, when early stopping selected one.
    pub best_epoch: Option<usize>,
}

impl TrainLog {
    /// `epoch,loss,val_opa,val_ndcg10`; undefined metrics are written as `nan`.
    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
        let mut out = String::from("epoch,loss,val_opa,val_ndcg10\n");
        for e in &self.epochs {
            writeln!(out, "{},{},{},{}", e.epoch, e.loss, opt(e.val_opa), opt(e.val_ndcg10)).unwrap();
        }
        out
    }
}

/// A loss term over rows of a feature table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Term {
    Pair { i: usize, j: usize, y_ij: f64, y_ji: f64 },
    Point { i: usize, target: f64 },
}

/// Feature rows and the loss terms defined over them.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Batch {
    pub features: Vec<Vec<f64>>,
    pub terms: Vec<Term>,
}

struct Rows<'a> {
    data: &'a [f64],
    dim: usize,
}

impl Rows<'_> {
    fn get(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }
}

struct Scratch {
    hidden_i: Vec<f64>,
    hidden_j: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Self {
            hidden_i: Vec::new(),
            hidden_j: Vec::new(),
        }
    }
}

/// Sum of term losses; adds the summed gradient into `grad`.
fn accumulate<'t>(
    params: &StudentParams,
    rows: &Rows,
    terms: impl Iterator<Item = &'t Term>,
    grad: &mut [f64],
    scratch: &mut Scratch,
) -> Result<f64, StudentError> {
    let mut total = 0.0;
    for term in terms {
        match *term {
            Term::Pair { i, j, y_ij, y_ji } => {
                let (xi, xj) = (rows.get(i), rows.get(j));
                let si = params.forward_cached(xi, &mut scratch.hidden_i);
                let sj = params.forward_cached(xj, &mut scratch.hidden_j);
                let (loss, gi, gj) = pairwise_logistic_term(si, sj, y_ij, y_ji)?;
                total += loss;
                if gi != 0.0 {
                    params.backward(xi, &scratch.hidden_i, gi, grad);
                    params.backward(xj, &scratch.hidden_j, gj, grad);
                }
            }
            Term::Point { i, target } => {
                let x = rows.get(i);
                let s = params.forward_cached(x, &mut scratch.hidden_i);
                if !s.is_finite() {
                    return Err(StudentError::NonFiniteScore);
                }
                let (loss, g) = pointwise_mse_term(s, target);
                total += loss;
                params.backward(x, &scratch.hidden_i, g, grad);
            }
        }
    }
    Ok(total)
}

fn flatten(spec: &ModelSpec, batch: &Batch) -> Result<Vec<f64>, StudentError> {
    let mut flat = Vec::with_capacity(batch.features.len() * spec.input_dim);
    for row in &batch.features {
        if row.len() != spec.input_dim {
            return Err(StudentError::DimensionMismatch {
                expected: spec.input_dim,
                got: row.len(),
            });
        }
        flat.extend_from_slice(row);
    }
    Ok(flat)
}

/// Largest relative difference between the analytic gradient of the summed
/// batch loss and its central finite-difference estimate.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-5)`. The floor keeps
/// exactly-zero components, such as the output bias under the translation
/// invariant pairwise loss, from turning rounding noise into large ratios.
pub fn grad_check(spec: &ModelSpec, params: &StudentParams, batch: &Batch, eps: f64) -> Result<f64, StudentError> {
    if params.spec() != spec {
        return Err(StudentError::InvalidSpec("parameters were built for a different model spec".into()));
    }
    if batch.terms.is_empty() {
        return Err(StudentError::EmptyBatch);
    }
    if !(eps > 0.0) {
        return Err(StudentError::InvalidConfig("eps must be positive".into()));
    }
    let flat = flatten(spec, batch)?;
    let rows = Rows {
        data: &flat,
        dim: spec.input_dim,
    };
    let mut scratch = Scratch::new();
    let mut analytic = vec![0.0; spec.num_params()];
    accumulate(params, &rows, batch.terms.iter(), &mut analytic, &mut scratch)?;

    let mut probe = params.clone();
    let mut sink = vec![0.0; spec.num_params()];
    let mut worst: f64 = 0.0;
    for k in 0..spec.num_params() {
        let original = probe.values()[k];
        probe.values_mut()[k] = original + eps;
        let plus = accumulate(&probe, &rows, batch.terms.iter(), &mut sink, &mut scratch)?;
        probe.values_mut()[k] = original - eps;
        let minus = accumulate(&probe, &rows, batch.terms.iter(), &mut sink, &mut scratch)?;
        probe.values_mut()[k] = original;
        let numeric = (plus - minus) / (2.0 * eps);
        let denom = analytic[k].abs().max(numeric.abs()).max(1e-5);
        worst = worst.max((analytic[k] - numeric).abs() / denom);
    }
    Ok(worst)
}

struct ValidationQuery {
    rows: Vec<f64>,
    grades: Vec<u32>,
}

fn validation_set(dataset: &Dataset, split: &DatasetSplit, dim: usize) -> Result<Vec<ValidationQuery>, StudentError> {
    let mut out = Vec::new();
    for q in &split.validation {
        let Some(cs) = dataset.candidate_set(q) else { continue };
        let mut rows = Vec::with_capacity(cs.len() * dim);
        for e in cs.entries() {
            let x = dataset.features.require(q, &e.doc)?;
            if x.len() != dim {
                return Err(StudentError::DimensionMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            rows.extend_from_slice(x);
        }
        let grades = cs.entries().iter().map(|e| dataset.qrels.grade(q, &e.doc)).collect();
        out.push(ValidationQuery { rows, grades });
    }
    Ok(out)
}

fn validate_epoch(params: &StudentParams, queries: &[ValidationQuery], dim: usize) -> (Option<f64>, Option<f64>) {
    let mut hidden = Vec::new();
    let (mut opa_sum, mut opa_n, mut ndcg_sum, mut ndcg_n) = (0.0, 0usize, 0.0, 0usize);
    for vq in queries {
        let rows = Rows { data: &vq.rows, dim };
        let scores: Vec<f64> = (0..vq.grades.len())
            .map(|i| params.forward_cached(rows.get(i), &mut hidden))
            .collect();
        if let Some(v) = opa(&scores, &vq.grades) {
            opa_sum += v;
            opa_n += 1;
        }
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let ranked: Vec<u32> = order.iter().map(|&i| vq.grades[i]).collect();
        if let Some(v) = ndcg_at_k(&ranked, 10) {
            ndcg_sum += v;
            ndcg_n += 1;
        }
    }
    let mean = |s: f64, n: usize| (n > 0).then(|| s / n as f64);
    (mean(opa_sum, opa_n), mean(ndcg_sum, ndcg_n))
}

struct RowIndex<'a> {
    dataset: &'a Dataset,
    dim: usize,
    index: HashMap<(QueryId, DocId), usize>,
    data: Vec<f64>,
}

impl RowIndex<'_> {
    fn row(&mut self, q: &QueryId, d: &DocId) -> Result<usize, StudentError> {
        if let Some(&i) = self.index.get(&(q.clone(), d.clone())) {
            return Ok(i);
        }
        let x = self.dataset.features.require(q, d)?;
        if x.len() != self.dim {
            return Err(StudentError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        let i = self.index.len();
        self.data.extend_from_slice(x);
        self.index.insert((q.clone(), d.clone()), i);
        Ok(i)
    }
}

/// Mini-batch gradient descent on the training queries of `split`.
///
/// Terms are reshuffled every epoch from a stream seeded by `config.seed`.
/// Each step uses the batch-mean loss plus `l2 * ||weights||^2`. With early
/// stopping enabled the parameters of the best validation-OPA epoch are
/// returned.
pub fn train(
    dataset: &Dataset,
    supervision: &Supervision,
    split: &DatasetSplit,
    model: &ModelSpec,
    config: &TrainConfig,
) -> Result<(StudentParams, TrainLog), StudentError> {
    model.validate()?;
    config.validate()?;
    match (config.loss, supervision) {
        (LossKind::PairwiseLogistic, Supervision::Pairs(_)) | (LossKind::PointwiseMse, Supervision::Points(_)) => {}
        (loss, s) => {
            return Err(StudentError::LossMismatch {
                loss,
                supervision: s.kind(),
            })
        }
    }
    let dim = model.input_dim;
    let mut rows = RowIndex {
        dataset,
        dim,
        index: HashMap::new(),
        data: Vec::new(),
    };
    let mut instances = 0usize;
    let mut terms = Vec::new();
    match supervision {
        Supervision::Pairs(labels) => {
            for l in labels.iter().filter(|l| split.train.contains(&l.query)) {
                instances += 1;
                let [y_ij, y_ji] = match config.label_mode {
                    LabelMode::Hard => l.hard,
                    LabelMode::Soft => l.soft,
                };
                let i = rows.row(&l.query, &l.first)?;
                let j = rows.row(&l.query, &l.second)?;
                if y_ij != y_ji {
                    terms.push(Term::Pair { i, j, y_ij, y_ji });
                }
            }
        }
        Supervision::Points(labels) => {
            for l in labels.iter().filter(|l| split.train.contains(&l.query)) {
                instances += 1;
                let i = rows.row(&l.query, &l.doc)?;
                terms.push(Term::Point { i, target: l.target });
            }
        }
    }
    if instances == 0 {
        return Err(StudentError::EmptyTrainingSet);
    }
    let table = rows.data;
    let rows = Rows { data: &table, dim };
    let validation = validation_set(dataset, split, dim)?;

    let mut params = init_params(model, config.seed)?;
    let weight_mask: Vec<bool> = (0..model.num_params()).map(|k| model.is_weight(k)).collect();
    let mut rng = rng_from(derive_seed(config.seed, &[b"shuffle"]));
    let mut order: Vec<usize> = (0..terms.len()).collect();
    let mut grad = vec![0.0; model.num_params()];
    let mut scratch = Scratch::new();
    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, StudentParams)> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = accumulate(&params, &rows, chunk.iter().map(|&t| &terms[t]), &mut grad, &mut scratch)?;
            if !loss.is_finite() {
                return Err(StudentError::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            let scale = 1.0 / chunk.len() as f64;
            for (k, theta) in params.values_mut().iter_mut().enumerate() {
                let mut g = grad[k] * scale;
                if weight_mask[k] {
                    g += 2.0 * config.l2 * *theta;
                }
                *theta -= config.learning_rate * g;
            }
        }
        if params.values().iter().any(|v| !v.is_finite()) {
            return Err(StudentError::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size),
            });
        }
        let mean_loss = if terms.is_empty() { 0.0 } else { epoch_loss / terms.len() as f64 };
        let (val_opa, val_ndcg10) = validate_epoch(&params, &validation, dim);
        log.epochs.push(EpochLog {
            epoch,
            loss: mean_loss,
            val_opa,
            val_ndcg10,
        });

        if config.early_stop_patience > 0 {
            if let Some(v) = val_opa {
                if best.as_ref().is_none_or(|(b, _, _)| v > *b) {
                    best = Some((v, epoch, params.clone()));
                }
            }
            if let Some((_, best_epoch, _)) = &best {
                if epoch - best_epoch >= config.early_stop_patience {
                    break;
                }
            }
        }
    }

    if let Some((_, epoch, best_params)) = best {
        log.best_epoch = Some(epoch);
        return Ok((best_params, log));
    }
    Ok((params, log))
}
