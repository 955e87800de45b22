use std::collections::BTreeSet;

use super::StudentError;
use crate::corpus::{CandidateSet, DocId, QueryId};
use crate::sampling::{OrderedPair, SampledPairSet};
use crate::teacher::JudgmentStore;

/// Pseudo-labels for one unordered document pair, in both directions.
#[derive(Debug, Clone, PartialEq)]
pub struct PairLabel {
    pub query: QueryId,
    pub first: DocId,
    pub second: DocId,
    /// Discretized `[y_first_second, y_second_first]`.
    pub hard: [f64; 2],
    /// Continuous preference probabilities in the same layout.
    pub soft: [f64; 2],
}

/// Pointwise regression target for one document.
#[derive(Debug, Clone, PartialEq)]
pub struct PointLabel {
    pub query: QueryId,
    pub doc: DocId,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Supervision {
    Pairs(Vec<PairLabel>),
    Points(Vec<PointLabel>),
}

impl Supervision {
    pub fn kind(&self) -> &'static str {
        match self {
            Supervision::Pairs(_) => "pairwise",
            Supervision::Points(_) => "pointwise",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Supervision::Pairs(p) => p.len(),
            Supervision::Points(p) => p.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One label per sampled unordered pair, oriented with the smaller document
/// id first. Both directions must be judged.
pub fn pair_labels_from_judgments(
    sampled: &[SampledPairSet],
    store: &JudgmentStore,
) -> Result<Vec<PairLabel>, StudentError> {
    let mut out = Vec::new();
    for set in sampled {
        let unordered: BTreeSet<(&DocId, &DocId)> = set
            .pairs
            .iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        for (a, b) in unordered {
            let lookup = |x: &DocId, y: &DocId| {
                store.get(&set.query, x, y).ok_or_else(|| StudentError::MissingReverse {
                    query: set.query.to_string(),
                    first: x.to_string(),
                    second: y.to_string(),
                })
            };
            let (ab, ba) = (lookup(a, b)?, lookup(b, a)?);
            out.push(PairLabel {
                query: set.query.clone(),
                first: a.clone(),
                second: b.clone(),
                hard: [ab.c, ba.c],
                soft: [ab.p, ba.p],
            });
        }
    }
    Ok(out)
}

/// Labels from full-pair aggregation, one per unordered pair (`a < b` by
/// candidate index).
pub fn pair_labels_from_aggregate(labels: &[(OrderedPair, f64)], candidates: &CandidateSet) -> Vec<PairLabel> {
    let n = candidates.len();
    let mut y = vec![0.5; n * n];
    for (p, v) in labels {
        y[p.a * n + p.b] = *v;
    }
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let pair = [y[a * n + b], y[b * n + a]];
            out.push(PairLabel {
                query: candidates.query().clone(),
                first: candidates.doc(a).clone(),
                second: candidates.doc(b).clone(),
                hard: pair,
                soft: pair,
            });
        }
    }
    out
}
