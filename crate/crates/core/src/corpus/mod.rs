//! Queries, candidate sets, relevance judgments and feature vectors.

mod split;
mod synthetic;
mod trec;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{make_split, DatasetSplit, SplitRatios};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use trec::{
    parse_features, parse_qrels, parse_trec_run, write_features, write_qrels, write_trec_run,
};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("read error at line {line}: {source}")]
    Read {
        line: usize,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: negative relevance grade {grade}")]
    NegativeGrade { line: usize, grade: i64 },
    #[error("invalid identifier {0:?}: must be non-empty and contain no whitespace")]
    InvalidId(String),
    #[error("query {query}: duplicate document {doc}")]
    DuplicateDoc { query: String, doc: String },
    #[error("query {0}: candidate set is empty")]
    EmptyCandidateSet(String),
    #[error("query {query}: document {doc} has non-finite score")]
    NonFiniteScore { query: String, doc: String },
    #[error("feature vector for ({query}, {doc}) has {got} components, expected {expected}")]
    FeatureDim {
        query: String,
        doc: String,
        got: usize,
        expected: usize,
    },
    #[error("invalid split: {0}")]
    Split(String),
    #[error("invalid synthetic spec: {0}")]
    Synthetic(String),
    #[error("missing feature vector for ({query}, {doc})")]
    MissingFeatures { query: String, doc: String },
}

macro_rules! text_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(Arc<str>);

        impl $name {
            pub fn new(id: impl AsRef<str>) -> Result<Self, CorpusError> {
                let id = id.as_ref();
                if id.is_empty() || id.chars().any(char::is_whitespace) {
                    return Err(CorpusError::InvalidId(id.to_string()));
                }
                Ok(Self(Arc::from(id)))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{:?}", &*self.0)
            }
        }

        impl TryFrom<String> for $name {
            type Error = CorpusError;
            fn try_from(s: String) -> Result<Self, CorpusError> {
                Self::new(s)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0.to_string()
            }
        }

        impl AsRef<str> for $name {
            fn as_ref(&self) -> &str {
                &self.0
            }
        }
    };
}

text_id!(
    /// Query identifier. Non-empty, no whitespace.
    QueryId
);
text_id!(
    /// Document identifier. Non-empty, no whitespace.
    DocId
);

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDoc {
    pub doc: DocId,
    pub score: f64,
}

impl ScoredDoc {
    pub fn new(doc: DocId, score: f64) -> Self {
        Self { doc, score }
    }
}

/// An ordered list of scored documents for one query. Unlike
/// [`CandidateSet`] the order is whatever the producer chose.
#[derive(Debug, Clone, PartialEq)]
pub struct Ranking {
    pub query: QueryId,
    pub entries: Vec<ScoredDoc>,
}

impl Ranking {
    pub fn docs(&self) -> impl Iterator<Item = &DocId> {
        self.entries.iter().map(|e| &e.doc)
    }

    pub fn scores(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.score).collect()
    }
}

/// A query and its first-stage ranking.
///
/// Entries are kept sorted by initial score descending with ties broken by
/// document id ascending; the rank of entry `i` is `i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    query: QueryId,
    entries: Vec<ScoredDoc>,
}

impl CandidateSet {
    pub fn new(query: QueryId, mut entries: Vec<ScoredDoc>) -> Result<Self, CorpusError> {
        if entries.is_empty() {
            return Err(CorpusError::EmptyCandidateSet(query.to_string()));
        }
        if let Some(bad) = entries.iter().find(|e| !e.score.is_finite()) {
            return Err(CorpusError::NonFiniteScore {
                query: query.to_string(),
                doc: bad.doc.to_string(),
            });
        }
        entries.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| x.doc.cmp(&y.doc)));
        let mut seen = std::collections::HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(&e.doc) {
                return Err(CorpusError::DuplicateDoc {
                    query: query.to_string(),
                    doc: e.doc.to_string(),
                });
            }
        }
        Ok(Self { query, entries })
    }

    pub fn query(&self) -> &QueryId {
        &self.query
    }

    pub fn entries(&self) -> &[ScoredDoc] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn doc(&self, index: usize) -> &DocId {
        &self.entries[index].doc
    }

    /// 1-based ranks, in entry order.
    pub fn ranks(&self) -> Vec<usize> {
        (1..=self.entries.len()).collect()
    }

    pub fn index_of(&self, doc: &DocId) -> Option<usize> {
        self.entries.iter().position(|e| &e.doc == doc)
    }

    pub fn doc_index(&self) -> HashMap<DocId, usize> {
        self.entries
            .iter()
            .enumerate()
            .map(|(i, e)| (e.doc.clone(), i))
            .collect()
    }

    pub fn to_ranking(&self) -> Ranking {
        Ranking {
            query: self.query.clone(),
            entries: self.entries.clone(),
        }
    }
}

/// Graded relevance labels. Absent (query, doc) pairs read as grade 0.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RelevanceJudgments {
    grades: BTreeMap<QueryId, BTreeMap<DocId, u32>>,
}

impl RelevanceJudgments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, query: QueryId, doc: DocId, grade: u32) {
        self.grades.entry(query).or_default().insert(doc, grade);
    }

    pub fn grade(&self, query: &QueryId, doc: &DocId) -> u32 {
        self.grades
            .get(query)
            .and_then(|docs| docs.get(doc))
            .copied()
            .unwrap_or(0)
    }

    pub fn max_grade(&self) -> u32 {
        self.grades
            .values()
            .flat_map(|docs| docs.values().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.grades.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// (query, doc, grade) in lexicographic key order.
    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &DocId, u32)> {
        self.grades
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, g)| (q, d, *g)))
    }

    pub fn grades_for(&self, ranking: &Ranking) -> Vec<u32> {
        ranking
            .entries
            .iter()
            .map(|e| self.grade(&ranking.query, &e.doc))
            .collect()
    }
}

/// Fixed-dimension feature vectors keyed by (query, doc).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    dim: usize,
    vectors: HashMap<QueryId, HashMap<DocId, Vec<f64>>>,
}

impl FeatureStore {
    pub fn new(dim: usize) -> Self {
        assert!(dim >= 1, "feature dimension must be positive");
        Self {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn insert(&mut self, query: QueryId, doc: DocId, vector: Vec<f64>) -> Result<(), CorpusError> {
        if vector.len() != self.dim {
            return Err(CorpusError::FeatureDim {
                query: query.to_string(),
                doc: doc.to_string(),
                got: vector.len(),
                expected: self.dim,
            });
        }
        self.vectors.entry(query).or_default().insert(doc, vector);
        Ok(())
    }

    pub fn get(&self, query: &QueryId, doc: &DocId) -> Option<&[f64]> {
        self.vectors
            .get(query)
            .and_then(|docs| docs.get(doc))
            .map(Vec::as_slice)
    }

    pub fn require(&self, query: &QueryId, doc: &DocId) -> Result<&[f64], CorpusError> {
        self.get(query, doc).ok_or_else(|| CorpusError::MissingFeatures {
            query: query.to_string(),
            doc: doc.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.values().map(HashMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries sorted by (query, doc).
    pub fn sorted_entries(&self) -> Vec<(&QueryId, &DocId, &[f64])> {
        let mut out: Vec<_> = self
            .vectors
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, v)| (q, d, v.as_slice())))
            .collect();
        out.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        out
    }
}

/// Candidate sets, labels and features for one collection.
#[derive(Debug, Clone)]
pub struct Dataset {
    candidates: Vec<CandidateSet>,
    index: HashMap<QueryId, usize>,
    pub qrels: RelevanceJudgments,
    pub features: FeatureStore,
}

impl Dataset {
    /// Candidate sets are reordered by query id.
    pub fn new(
        mut candidates: Vec<CandidateSet>,
        qrels: RelevanceJudgments,
        features: FeatureStore,
    ) -> Self {
        candidates.sort_by(|a, b| a.query().cmp(b.query()));
        let index = candidates
            .iter()
            .enumerate()
            .map(|(i, c)| (c.query().clone(), i))
            .collect();
        Self {
            candidates,
            index,
            qrels,
            features,
        }
    }

    pub fn candidates(&self) -> &[CandidateSet] {
        &self.candidates
    }

    pub fn candidate_set(&self, query: &QueryId) -> Option<&CandidateSet> {
        self.index.get(query).map(|&i| &self.candidates[i])
    }

    pub fn query_ids(&self) -> Vec<QueryId> {
        self.candidates.iter().map(|c| c.query().clone()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> QueryId {
        QueryId::new(s).unwrap()
    }
    fn d(s: &str) -> DocId {
        DocId::new(s).unwrap()
    }

    #[test]
    fn ids_reject_whitespace_and_empty() {
        assert!(QueryId::new("").is_err());
        assert!(QueryId::new("a b").is_err());
        assert!(DocId::new("a\tb").is_err());
        assert_eq!(DocId::new("D12").unwrap().as_str(), "D12");
    }

    #[test]
    fn candidate_set_sorts_and_breaks_ties_by_doc_id() {
        let cs = CandidateSet::new(
            q("q1"),
            vec![
                ScoredDoc::new(d("b"), 1.0),
                ScoredDoc::new(d("c"), 3.0),
                ScoredDoc::new(d("a"), 1.0),
            ],
        )
        .unwrap();
        let order: Vec<_> = cs.entries().iter().map(|e| e.doc.as_str()).collect();
        assert_eq!(order, ["c", "a", "b"]);
        assert_eq!(cs.ranks(), vec![1, 2, 3]);
    }

    #[test]
    fn candidate_set_rejects_duplicates_and_empty() {
        let dup = CandidateSet::new(
            q("q1"),
            vec![ScoredDoc::new(d("a"), 1.0), ScoredDoc::new(d("a"), 2.0)],
        );
        assert!(matches!(dup, Err(CorpusError::DuplicateDoc { .. })));
        assert!(CandidateSet::new(q("q1"), vec![]).is_err());
    }

    #[test]
    fn missing_grades_read_as_zero() {
        let mut qrels = RelevanceJudgments::new();
        qrels.insert(q("q1"), d("a"), 2);
        assert_eq!(qrels.grade(&q("q1"), &d("a")), 2);
        assert_eq!(qrels.grade(&q("q1"), &d("zz")), 0);
        assert_eq!(qrels.grade(&q("q9"), &d("a")), 0);
    }

    #[test]
    fn feature_store_enforces_dim() {
        let mut fs = FeatureStore::new(2);
        assert!(fs.insert(q("q"), d("a"), vec![1.0]).is_err());
        fs.insert(q("q"), d("a"), vec![1.0, 2.0]).unwrap();
        assert_eq!(fs.get(&q("q"), &d("a")), Some(&[1.0, 2.0][..]));
        assert!(fs.require(&q("q"), &d("b")).is_err());
    }
}
