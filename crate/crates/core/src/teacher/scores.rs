use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use super::{Teacher, TeacherError};
use crate::corpus::{DocId, QueryId};

/// Cache of pointwise teacher scores, stored as `<qid>\t<docid>\t<score>`.
#[derive(Debug, Clone, Default)]
pub struct ScoreStore {
    path: Option<PathBuf>,
    scores: BTreeMap<(QueryId, DocId), f64>,
}

impl ScoreStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, TeacherError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        if path.exists() {
            let name = path.display().to_string();
            let file = fs::File::open(&path).map_err(|source| TeacherError::StoreIo {
                path: name.clone(),
                source,
            })?;
            store.load(BufReader::new(file), &name)?;
        }
        Ok(store)
    }

    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, TeacherError> {
        let mut store = Self::default();
        store.load(reader, "<memory>")?;
        Ok(store)
    }

    fn load<R: BufRead>(&mut self, reader: R, name: &str) -> Result<(), TeacherError> {
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|source| TeacherError::StoreIo {
                path: name.to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |m: &str| TeacherError::StoreFormat {
                path: name.to_string(),
                line: i + 1,
                message: m.to_string(),
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [q, d, s] = fields.as_slice() else {
                return Err(bad("expected 3 tab-separated fields"));
            };
            let q = QueryId::new(q).map_err(|e| bad(&e.to_string()))?;
            let d = DocId::new(d).map_err(|e| bad(&e.to_string()))?;
            let s: f64 = s.parse().map_err(|_| bad("score is not a number"))?;
            if !(0.0..=1.0).contains(&s) {
                return Err(bad("score outside [0, 1]"));
            }
            self.scores.insert((q, d), s);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn get(&self, query: &QueryId, doc: &DocId) -> Option<f64> {
        self.scores.get(&(query.clone(), doc.clone())).copied()
    }

    /// Inserts unless already present; returns whether it was inserted.
    pub fn insert(&mut self, query: QueryId, doc: DocId, score: f64) -> bool {
        match self.scores.entry((query, doc)) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(score);
                true
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&QueryId, &DocId, f64)> {
        self.scores.iter().map(|((q, d), s)| (q, d, *s))
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for ((q, d), s) in &self.scores {
            out.push_str(&format!("{q}\t{d}\t{s}\n"));
        }
        out
    }

    /// Rewrites the backing file sorted by key. An empty store does not
    /// create a file.
    pub fn flush(&self) -> Result<(), TeacherError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        if self.scores.is_empty() && !path.exists() {
            return Ok(());
        }
        let io_err = |source| TeacherError::StoreIo {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension("tsv.tmp");
        let mut file = fs::File::create(&tmp).map_err(io_err)?;
        file.write_all(self.to_tsv().as_bytes()).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}

/// Scores every document not yet in the store; returns the number of
/// teacher calls made.
pub fn score_docs<T: Teacher + ?Sized>(
    teacher: &T,
    query: &QueryId,
    docs: &[DocId],
    store: &mut ScoreStore,
) -> Result<usize, TeacherError> {
    let mut calls = 0;
    for d in docs {
        if store.get(query, d).is_some() {
            continue;
        }
        let s = teacher.pointwise_score(query, d)?;
        calls += 1;
        store.insert(query.clone(), d.clone(), s);
    }
    Ok(calls)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_no_overwrite() {
        let q = QueryId::new("q1").unwrap();
        let mut s = ScoreStore::in_memory();
        assert!(s.insert(q.clone(), DocId::new("b").unwrap(), 0.1 + 0.2));
        assert!(s.insert(q.clone(), DocId::new("a").unwrap(), 1.0));
        assert!(!s.insert(q.clone(), DocId::new("a").unwrap(), 0.0));
        let text = s.to_tsv();
        assert!(text.starts_with("q1\ta\t1\n"));
        let back = ScoreStore::from_tsv(text.as_bytes()).unwrap();
        assert_eq!(back.to_tsv(), text);
        assert_eq!(back.get(&q, &DocId::new("b").unwrap()), Some(0.1 + 0.2));
        assert!(ScoreStore::from_tsv("q\td\t1.5\n".as_bytes()).is_err());
        assert!(ScoreStore::from_tsv("q\td\n".as_bytes()).is_err());
    }
}
