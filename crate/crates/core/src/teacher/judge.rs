use std::collections::BTreeSet;

use super::{discretize, JudgmentStore, PairJudgment, Teacher, TeacherError};
use crate::corpus::{DocId, QueryId};

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    /// Judgments for every requested ordered key, sorted by (first, second).
    pub judgments: Vec<PairJudgment>,
    /// Teacher invocations made by this call (cache misses).
    pub teacher_calls: usize,
}

/// Ensures the store holds a judgment for every sampled ordered pair and,
/// with `both_directions`, for its reverse. Stored judgments are reused.
///
/// On a teacher failure the judgments obtained so far stay in the store.
pub fn judge_pairs<T: Teacher + ?Sized>(
    teacher: &T,
    query: &QueryId,
    sampled: &[(DocId, DocId)],
    store: &mut JudgmentStore,
    both_directions: bool,
) -> Result<JudgeOutcome, TeacherError> {
    let mut keys = BTreeSet::new();
    for (a, b) in sampled {
        if a == b {
            return Err(TeacherError::SameDocument(a.to_string()));
        }
        keys.insert((a.clone(), b.clone()));
        if both_directions {
            keys.insert((b.clone(), a.clone()));
        }
    }

    let tau = teacher.tie_threshold();
    let mut teacher_calls = 0;
    for (a, b) in &keys {
        if store.contains(query, a, b) {
            continue;
        }
        let p = teacher.pairwise_preference(query, a, b)?;
        teacher_calls += 1;
        store.insert(PairJudgment {
            query: query.clone(),
            first: a.clone(),
            second: b.clone(),
            p,
            c: discretize(p, tau),
        });
    }

    let judgments = keys
        .iter()
        .map(|(a, b)| store.get(query, a, b).cloned().expect("judged above"))
        .collect();
    Ok(JudgeOutcome {
        judgments,
        teacher_calls,
    })
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};

    use super::*;

    struct Counting {
        calls: AtomicUsize,
        fail_after: usize,
    }

    impl Teacher for Counting {
        fn pointwise_score(&self, _: &QueryId, _: &DocId) -> Result<f64, TeacherError> {
            Ok(0.5)
        }

        fn pairwise_preference(&self, _: &QueryId, a: &DocId, b: &DocId) -> Result<f64, TeacherError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n >= self.fail_after {
                return Err(TeacherError::Timeout);
            }
            Ok(if a < b { 0.8 } else { 0.3 })
        }

        fn tie_threshold(&self) -> f64 {
            0.05
        }
    }

    fn teacher() -> Counting {
        Counting {
            calls: AtomicUsize::new(0),
            fail_after: usize::MAX,
        }
    }

    fn d(s: &str) -> DocId {
        DocId::new(s).unwrap()
    }

    fn pairs(list: &[(&str, &str)]) -> Vec<(DocId, DocId)> {
        list.iter().map(|(a, b)| (d(a), d(b))).collect()
    }

    #[test]
    fn both_directions_doubles_records() {
        let t = teacher();
        let q = QueryId::new("q").unwrap();
        let mut store = JudgmentStore::in_memory();
        let sampled = pairs(&[("a", "b"), ("a", "c"), ("b", "c"), ("d", "a"), ("e", "c")]);
        let out = judge_pairs(&t, &q, &sampled, &mut store, true).unwrap();
        assert_eq!(store.len(), 10);
        assert_eq!(out.teacher_calls, 10);
        assert_eq!(out.judgments.len(), 10);
        let keys: Vec<_> = out.judgments.iter().map(|j| (j.first.clone(), j.second.clone())).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert_eq!(out.judgments[0].c, 1.0);
    }

    #[test]
    fn warm_store_makes_no_calls() {
        let t = teacher();
        let q = QueryId::new("q").unwrap();
        let mut store = JudgmentStore::in_memory();
        let sampled = pairs(&[("a", "b"), ("c", "a")]);
        let first = judge_pairs(&t, &q, &sampled, &mut store, true).unwrap();
        let before = t.calls.load(Ordering::SeqCst);
        let second = judge_pairs(&t, &q, &sampled, &mut store, true).unwrap();
        assert_eq!(second.teacher_calls, 0);
        assert_eq!(t.calls.load(Ordering::SeqCst), before);
        assert_eq!(first.judgments, second.judgments);
    }

    #[test]
    fn reverse_pairs_are_deduplicated() {
        let t = teacher();
        let q = QueryId::new("q").unwrap();
        let mut store = JudgmentStore::in_memory();
        judge_pairs(&t, &q, &pairs(&[("a", "b"), ("b", "a")]), &mut store, true).unwrap();
        assert_eq!(store.len(), 2);
        let mut one_way = JudgmentStore::in_memory();
        judge_pairs(&t, &q, &pairs(&[("a", "b")]), &mut one_way, false).unwrap();
        assert_eq!(one_way.len(), 1);
    }

    #[test]
    fn failure_keeps_partial_store() {
        let t = Counting {
            calls: AtomicUsize::new(0),
            fail_after: 3,
        };
        let q = QueryId::new("q").unwrap();
        let mut store = JudgmentStore::in_memory();
        let err = judge_pairs(&t, &q, &pairs(&[("a", "b"), ("a", "c")]), &mut store, true);
        assert!(err.is_err());
        assert_eq!(store.len(), 3);
    }
}
