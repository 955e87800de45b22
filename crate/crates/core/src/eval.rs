//! Ranking metrics and report tables.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::corpus::{QueryId, Ranking, RelevanceJudgments};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("run contains no rankings")]
    EmptyRun,
    #[error("no metrics requested")]
    NoMetrics,
    #[error("query {0} appears more than once in the run")]
    DuplicateQuery(String),
    #[error("invalid metric {0:?}")]
    InvalidMetric(String),
}

/// NDCG over the first `k` positions of `grades` (given in ranked order).
///
/// Gain is `2^g - 1` and the discount `log2(p + 1)`. `None` when the ideal
/// DCG is zero or `k == 0`.
pub fn ndcg_at_k(grades: &[u32], k: usize) -> Option<f64> {
    let dcg = |g: &[u32]| -> f64 {
        g.iter()
            .take(k)
            .enumerate()
            .map(|(i, &g)| (2f64.powi(g as i32) - 1.0) / ((i + 2) as f64).log2())
            .sum()
    };
    let mut ideal = grades.to_vec();
    ideal.sort_unstable_by(|a, b| b.cmp(a));
    let idcg = dcg(&ideal);
    (idcg > 0.0).then(|| dcg(grades) / idcg)
}

/// Ordered pair accuracy over pairs with distinct grades; tied scores earn
/// half credit. `None` when no pair has distinct grades.
pub fn opa(scores: &[f64], grades: &[u32]) -> Option<f64> {
    assert_eq!(scores.len(), grades.len(), "one score per graded document");
    let mut credit = 0.0;
    let mut pairs = 0usize;
    for i in 0..scores.len() {
        for j in i + 1..scores.len() {
            if grades[i] == grades[j] {
                continue;
            }
            let (hi, lo) = if grades[i] > grades[j] { (i, j) } else { (j, i) };
            pairs += 1;
            if scores[hi] > scores[lo] {
                credit += 1.0;
            } else if scores[hi] == scores[lo] {
                credit += 0.5;
            }
        }
    }
    (pairs > 0).then(|| credit / pairs as f64)
}

/// Reciprocal rank of the first document with grade at least `threshold`.
pub fn mrr(grades: &[u32], threshold: u32) -> Option<f64> {
    grades
        .iter()
        .position(|&g| g >= threshold)
        .map(|p| 1.0 / (p + 1) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Metric {
    Ndcg(usize),
    Opa,
    /// Relevance threshold (at least 1).
    Mrr(u32),
}

impl Metric {
    pub fn compute(&self, ranking: &Ranking, qrels: &RelevanceJudgments) -> Option<f64> {
        let grades = qrels.grades_for(ranking);
        match *self {
            Metric::Ndcg(k) => ndcg_at_k(&grades, k),
            Metric::Opa => opa(&ranking.scores(), &grades),
            Metric::Mrr(t) => mrr(&grades, t),
        }
    }
}

impl FromStr for Metric {
    type Err = EvalError;
    /// `ndcg@K`, `opa`, `mrr` or `mrr:T`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || EvalError::InvalidMetric(s.to_string());
        let lower = s.trim().to_ascii_lowercase();
        if lower == "opa" {
            return Ok(Metric::Opa);
        }
        if lower == "mrr" {
            return Ok(Metric::Mrr(1));
        }
        if let Some(t) = lower.strip_prefix("mrr:") {
            let t: u32 = t.parse().map_err(|_| bad())?;
            return if t >= 1 { Ok(Metric::Mrr(t)) } else { Err(bad()) };
        }
        if let Some(k) = lower.strip_prefix("ndcg@") {
            let k: usize = k.parse().map_err(|_| bad())?;
            return if k >= 1 { Ok(Metric::Ndcg(k)) } else { Err(bad()) };
        }
        Err(bad())
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Ndcg(k) => write!(f, "ndcg@{k}"),
            Metric::Opa => f.write_str("opa"),
            Metric::Mrr(1) => f.write_str("mrr"),
            Metric::Mrr(t) => write!(f, "mrr:{t}"),
        }
    }
}

/// Parses a comma-separated metric list such as `ndcg@10,opa,mrr`.
pub fn parse_metrics(list: &str) -> Result<Vec<Metric>, EvalError> {
    let metrics = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::parse)
        .collect::<Result<Vec<_>, _>>()?;
    if metrics.is_empty() {
        return Err(EvalError::NoMetrics);
    }
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    metrics: Vec<Metric>,
    per_query: BTreeMap<QueryId, Vec<Option<f64>>>,
    means: Vec<Option<f64>>,
    excluded: Vec<usize>,
}

impl MetricReport {
    pub fn metrics(&self) -> &[Metric] {
        &self.metrics
    }

    fn slot(&self, metric: Metric) -> Option<usize> {
        self.metrics.iter().position(|&m| m == metric)
    }

    /// Mean over the queries where `metric` is defined.
    pub fn mean(&self, metric: Metric) -> Option<f64> {
        self.slot(metric).and_then(|i| self.means[i])
    }

    /// Number of queries left out of the mean for `metric`.
    pub fn excluded(&self, metric: Metric) -> usize {
        self.slot(metric).map_or(0, |i| self.excluded[i])
    }

    pub fn value(&self, query: &QueryId, metric: Metric) -> Option<f64> {
        let i = self.slot(metric)?;
        self.per_query.get(query).and_then(|v| v[i])
    }

    pub fn num_queries(&self) -> usize {
        self.per_query.len()
    }

    /// `qid,metric,value` rows in query order, then one `__mean__` row per
    /// metric. Undefined values are written as `NA`.
    pub fn to_csv(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        let mut out = String::from("qid,metric,value\n");
        for (q, values) in &self.per_query {
            for (m, v) in self.metrics.iter().zip(values) {
                writeln!(out, "{q},{m},{}", fmt(*v)).unwrap();
            }
        }
        for (m, v) in self.metrics.iter().zip(&self.means) {
            writeln!(out, "__mean__,{m},{}", fmt(*v)).unwrap();
        }
        out
    }
}

/// Per-query metrics and their means over valid queries.
pub fn evaluate_run(
    rankings: &[Ranking],
    qrels: &RelevanceJudgments,
    metrics: &[Metric],
) -> Result<MetricReport, EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::EmptyRun);
    }
    if metrics.is_empty() {
        return Err(EvalError::NoMetrics);
    }
    let mut per_query = BTreeMap::new();
    for r in rankings {
        let values: Vec<Option<f64>> = metrics.iter().map(|m| m.compute(r, qrels)).collect();
        if per_query.insert(r.query.clone(), values).is_some() {
            return Err(EvalError::DuplicateQuery(r.query.to_string()));
        }
    }
    let mut means = Vec::with_capacity(metrics.len());
    let mut excluded = Vec::with_capacity(metrics.len());
    for i in 0..metrics.len() {
        let (mut sum, mut n, mut skipped) = (0.0, 0usize, 0usize);
        for values in per_query.values() {
            match values[i] {
                Some(v) => {
                    sum += v;
                    n += 1;
                }
                None => skipped += 1,
            }
        }
        means.push((n > 0).then(|| sum / n as f64));
        excluded.push(skipped);
    }
    Ok(MetricReport {
        metrics: metrics.to_vec(),
        per_query,
        means,
        excluded,
    })
}

/// Median of the finite values; mean of the middle pair for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// One cell of a strategy x budget x seed grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub strategy: String,
    /// Budget as written in the configuration.
    pub budget: String,
    pub seed: u64,
    pub teacher_calls: u64,
    pub wall_clock_seconds: f64,
    pub opa: Option<f64>,
    pub ndcg10: Option<f64>,
}

/// Data rows in input order followed by one `median` row per
/// (strategy, budget) key, keys in order of first appearance.
pub fn sweep_report(results: &[SweepResult]) -> String {
    let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
    let mut out = String::from("strategy,budget_fraction,seed,teacher_calls,wall_clock_seconds,opa,ndcg10\n");
    let mut keys: Vec<(&str, &str)> = Vec::new();
    let mut seen = BTreeSet::new();
    for r in results {
        writeln!(
            out,
            "{},{},{},{},{:.3},{},{}",
            r.strategy,
            r.budget,
            r.seed,
            r.teacher_calls,
            r.wall_clock_seconds,
            fmt(r.opa),
            fmt(r.ndcg10)
        )
        .unwrap();
        if seen.insert((r.strategy.as_str(), r.budget.as_str())) {
            keys.push((r.strategy.as_str(), r.budget.as_str()));
        }
    }
    for (strategy, budget) in keys {
        let cell: Vec<&SweepResult> = results
            .iter()
            .filter(|r| r.strategy == strategy && r.budget == budget)
            .collect();
        let col = |f: &dyn Fn(&SweepResult) -> Option<f64>| median(&cell.iter().filter_map(|r| f(r)).collect::<Vec<_>>());
        writeln!(
            out,
            "{strategy},{budget},median,{},{:.3},{},{}",
            fmt(col(&|r| Some(r.teacher_calls as f64))),
            col(&|r| Some(r.wall_clock_seconds)).unwrap_or(f64::NAN),
            fmt(col(&|r| r.opa)),
            fmt(col(&|r| r.ndcg10))
        )
        .unwrap();
    }
    out
}
