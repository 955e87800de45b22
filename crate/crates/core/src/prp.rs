//! Full-pair aggregation: every ordered pair is judged and each document
//! scores `s_i = sum_{j != i} [c_ij + (1 - c_ji)]`.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::{CandidateSet, DocId, Ranking, ScoredDoc};
use crate::sampling::{pair_universe, OrderedPair};
use crate::teacher::{judge_pairs, JudgmentStore, PairJudgment, Teacher, TeacherError};

#[derive(Debug, Error)]
pub enum PrpError {
    #[error("query {query}: {} ordered pairs lack judgments, e.g. {}", missing.len(), missing.iter().take(5).map(|(a, b)| format!("({a}, {b})")).collect::<Vec<_>>().join(", "))]
    Coverage {
        query: String,
        missing: Vec<(DocId, DocId)>,
    },
    #[error("expected {expected} scores, got {got}")]
    ScoreCount { expected: usize, got: usize },
    #[error(transparent)]
    Teacher(#[from] TeacherError),
}

/// `n x n` grid of discretized outcomes; the diagonal is unused.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonMatrix {
    n: usize,
    cells: Vec<f64>,
}

impl ComparisonMatrix {
    /// Builds a matrix from explicit off-diagonal values. Panics if `c` is
    /// not `n x n`.
    pub fn from_fn(n: usize, mut c: impl FnMut(usize, usize) -> f64) -> Self {
        let mut cells = vec![f64::NAN; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    cells[i * n + j] = c(i, j);
                }
            }
        }
        Self { n, cells }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, c: f64) {
        assert_ne!(i, j, "diagonal is unused");
        self.cells[i * self.n + j] = c;
    }
}

/// Arranges judgments into a matrix over the candidate set's entry order.
/// Every ordered pair must be present.
pub fn build_matrix(judgments: &[PairJudgment], candidates: &CandidateSet) -> Result<ComparisonMatrix, PrpError> {
    let n = candidates.len();
    let index = candidates.doc_index();
    let mut cells = vec![f64::NAN; n * n];
    for j in judgments {
        if &j.query != candidates.query() {
            continue;
        }
        if let (Some(&a), Some(&b)) = (index.get(&j.first), index.get(&j.second)) {
            if a != b {
                cells[a * n + b] = j.c;
            }
        }
    }
    let missing: Vec<(DocId, DocId)> = (0..n)
        .flat_map(|a| (0..n).map(move |b| (a, b)))
        .filter(|&(a, b)| a != b && cells[a * n + b].is_nan())
        .map(|(a, b)| (candidates.doc(a).clone(), candidates.doc(b).clone()))
        .collect();
    if !missing.is_empty() {
        return Err(PrpError::Coverage {
            query: candidates.query().to_string(),
            missing,
        });
    }
    Ok(ComparisonMatrix { n, cells })
}

/// Per-document aggregate scores, each in `[0, 2(n-1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateScores(pub Vec<f64>);

impl AggregateScores {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn aggregate(matrix: &ComparisonMatrix) -> AggregateScores {
    let n = matrix.size();
    AggregateScores(
        (0..n)
            .map(|i| {
                (0..n)
                    .filter(|&j| j != i)
                    .map(|j| matrix.get(i, j) + (1.0 - matrix.get(j, i)))
                    .sum()
            })
            .collect(),
    )
}

/// Sorts candidates by score descending, ties kept in first-stage order.
pub fn rank_by_scores(scores: &[f64], candidates: &CandidateSet) -> Result<Ranking, PrpError> {
    if scores.len() != candidates.len() {
        return Err(PrpError::ScoreCount {
            expected: candidates.len(),
            got: scores.len(),
        });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable sort keeps the initial rank order among equal scores
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    Ok(Ranking {
        query: candidates.query().clone(),
        entries: order
            .into_iter()
            .map(|i| ScoredDoc::new(candidates.doc(i).clone(), scores[i]))
            .collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrpOutcome {
    pub ranking: Ranking,
    pub scores: AggregateScores,
    pub teacher_calls: usize,
}

/// Judges all `n(n-1)` ordered pairs (reusing the store), aggregates and ranks.
pub fn prp_pipeline<T: Teacher + ?Sized>(
    teacher: &T,
    candidates: &CandidateSet,
    store: &mut JudgmentStore,
) -> Result<PrpOutcome, PrpError> {
    if candidates.len() < 2 {
        return Ok(PrpOutcome {
            ranking: candidates.to_ranking(),
            scores: AggregateScores(vec![0.0; candidates.len()]),
            teacher_calls: 0,
        });
    }
    let pairs: Vec<(DocId, DocId)> = pair_universe(candidates.len())
        .expect("n >= 2")
        .into_iter()
        .map(|OrderedPair { a, b }| (candidates.doc(a).clone(), candidates.doc(b).clone()))
        .collect();
    let outcome = judge_pairs(teacher, candidates.query(), &pairs, store, false)?;
    let matrix = build_matrix(&outcome.judgments, candidates)?;
    let scores = aggregate(&matrix);
    let ranking = rank_by_scores(scores.as_slice(), candidates)?;
    Ok(PrpOutcome {
        ranking,
        scores,
        teacher_calls: outcome.teacher_calls,
    })
}

/// Pseudo-labels `y_ab` for every ordered pair: 1 when `s_a > s_b`, 0 when
/// `s_a < s_b`, 0.5 on ties. Returned in lexicographic pair order.
pub fn labels_from_aggregate(scores: &AggregateScores) -> Vec<(OrderedPair, f64)> {
    let s = scores.as_slice();
    let n = s.len();
    (0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
        .map(|(a, b)| {
            let y = if s[a] > s[b] {
                1.0
            } else if s[a] < s[b] {
                0.0
            } else {
                0.5
            };
            (OrderedPair { a, b }, y)
        })
        .collect()
}

/// Lookup of pseudo-labels by document pair, for one query.
pub fn label_map(labels: &[(OrderedPair, f64)], candidates: &CandidateSet) -> HashMap<(DocId, DocId), f64> {
    labels
        .iter()
        .map(|(p, y)| ((candidates.doc(p.a).clone(), candidates.doc(p.b).clone()), *y))
        .collect()
}
