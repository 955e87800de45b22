use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::TeacherError;
use crate::corpus::{DocId, QueryId};

/// A teacher's answer for one ordered pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairJudgment {
    pub query: QueryId,
    pub first: DocId,
    pub second: DocId,
    /// Probability of preferring `first` when it is listed first.
    pub p: f64,
    /// Discretized outcome in `{0, 0.5, 1}`.
    pub c: f64,
}

#[derive(Serialize, Deserialize)]
struct Record {
    q: QueryId,
    a: DocId,
    b: DocId,
    p: f64,
    c: f64,
}

/// Append-only cache of pair judgments keyed by (query, first, second).
///
/// Backed by a JSON-lines file when opened from a path. [`flush`] rewrites
/// the file in lexicographic key order.
///
/// [`flush`]: JudgmentStore::flush
#[derive(Debug, Clone, Default)]
pub struct JudgmentStore {
    path: Option<PathBuf>,
    records: BTreeMap<QueryId, BTreeMap<(DocId, DocId), PairJudgment>>,
    len: usize,
}

impl JudgmentStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the store at `path`, loading it if the file exists.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, TeacherError> {
        let path = path.as_ref().to_path_buf();
        let mut store = Self {
            path: Some(path.clone()),
            ..Self::default()
        };
        if path.exists() {
            let file = fs::File::open(&path).map_err(|source| TeacherError::StoreIo {
                path: path.display().to_string(),
                source,
            })?;
            store.load(BufReader::new(file), &path.display().to_string())?;
        }
        Ok(store)
    }

    pub fn from_jsonl<R: BufRead>(reader: R) -> Result<Self, TeacherError> {
        let mut store = Self::default();
        store.load(reader, "<memory>")?;
        Ok(store)
    }

    fn load<R: BufRead>(&mut self, reader: R, name: &str) -> Result<(), TeacherError> {
        for (i, line) in reader.lines().enumerate() {
            let err = |message: String| TeacherError::StoreFormat {
                path: name.to_string(),
                line: i + 1,
                message,
            };
            let line = line.map_err(|e| err(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let r: Record = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
            if r.a == r.b {
                return Err(err("first and second document are identical".into()));
            }
            if !(0.0..=1.0).contains(&r.p) {
                return Err(err(format!("p = {} outside [0, 1]", r.p)));
            }
            if ![0.0, 0.5, 1.0].contains(&r.c) {
                return Err(err(format!("c = {} not in {{0, 0.5, 1}}", r.c)));
            }
            let judgment = PairJudgment {
                query: r.q,
                first: r.a,
                second: r.b,
                p: r.p,
                c: r.c,
            };
            if let Some(existing) = self.get(&judgment.query, &judgment.first, &judgment.second) {
                if existing != &judgment {
                    return Err(err("conflicting duplicate record".into()));
                }
                continue;
            }
            self.insert(judgment);
        }
        Ok(())
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, query: &QueryId, first: &DocId, second: &DocId) -> Option<&PairJudgment> {
        self.records
            .get(query)?
            .get(&(first.clone(), second.clone()))
    }

    pub fn contains(&self, query: &QueryId, first: &DocId, second: &DocId) -> bool {
        self.get(query, first, second).is_some()
    }

    /// Adds a judgment unless its key is already present. Returns whether it
    /// was added; existing records are never replaced.
    pub fn insert(&mut self, judgment: PairJudgment) -> bool {
        let per_query = self.records.entry(judgment.query.clone()).or_default();
        let key = (judgment.first.clone(), judgment.second.clone());
        if per_query.contains_key(&key) {
            return false;
        }
        per_query.insert(key, judgment);
        self.len += 1;
        true
    }

    /// Judgments for one query in (first, second) order.
    pub fn query_judgments(&self, query: &QueryId) -> impl Iterator<Item = &PairJudgment> {
        self.records.get(query).into_iter().flat_map(|m| m.values())
    }

    /// All judgments in (query, first, second) order.
    pub fn iter(&self) -> impl Iterator<Item = &PairJudgment> {
        self.records.values().flat_map(|m| m.values())
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for j in self.iter() {
            let record = Record {
                q: j.query.clone(),
                a: j.first.clone(),
                b: j.second.clone(),
                p: j.p,
                c: j.c,
            };
            out.push_str(&serde_json::to_string(&record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Writes the sorted store to its backing file via a temporary file and
    /// rename. No-op for in-memory stores.
    pub fn flush(&self) -> Result<(), TeacherError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let io_err = |source| TeacherError::StoreIo {
            path: path.display().to_string(),
            source,
        };
        let tmp = path.with_extension("jsonl.tmp");
        let mut file = fs::File::create(&tmp).map_err(io_err)?;
        file.write_all(self.to_jsonl().as_bytes()).map_err(io_err)?;
        file.sync_all().map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn j(q: &str, a: &str, b: &str, p: f64, c: f64) -> PairJudgment {
        PairJudgment {
            query: QueryId::new(q).unwrap(),
            first: DocId::new(a).unwrap(),
            second: DocId::new(b).unwrap(),
            p,
            c,
        }
    }

    #[test]
    fn insert_never_overwrites() {
        let mut s = JudgmentStore::in_memory();
        assert!(s.insert(j("q", "a", "b", 0.9, 1.0)));
        assert!(!s.insert(j("q", "a", "b", 0.1, 0.0)));
        assert!(s.insert(j("q", "b", "a", 0.1, 0.0)));
        assert_eq!(s.len(), 2);
        let q = QueryId::new("q").unwrap();
        assert_eq!(s.get(&q, &DocId::new("a").unwrap(), &DocId::new("b").unwrap()).unwrap().p, 0.9);
    }

    #[test]
    fn file_round_trip_is_sorted() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.jsonl");
        let mut s = JudgmentStore::open(&path).unwrap();
        s.insert(j("q2", "a", "b", 0.25, 0.0));
        s.insert(j("q1", "b", "a", 0.5, 0.5));
        s.insert(j("q1", "a", "b", 0.981_013_4, 1.0));
        s.flush().unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let keys: Vec<_> = text
            .lines()
            .map(|l| {
                let v: serde_json::Value = serde_json::from_str(l).unwrap();
                format!("{} {} {}", v["q"], v["a"], v["b"])
            })
            .collect();
        assert_eq!(keys, [r#""q1" "a" "b""#, r#""q1" "b" "a""#, r#""q2" "a" "b""#]);
        let reopened = JudgmentStore::open(&path).unwrap();
        assert_eq!(reopened.len(), 3);
        assert_eq!(reopened.to_jsonl(), text);
    }

    #[test]
    fn rejects_bad_records() {
        assert!(JudgmentStore::from_jsonl(r#"{"q":"q","a":"x","b":"x","p":0.5,"c":0.5}"#.as_bytes()).is_err());
        assert!(JudgmentStore::from_jsonl(r#"{"q":"q","a":"x","b":"y","p":1.5,"c":1}"#.as_bytes()).is_err());
        assert!(JudgmentStore::from_jsonl(r#"{"q":"q","a":"x","b":"y","p":0.7,"c":0.7}"#.as_bytes()).is_err());
        assert!(JudgmentStore::from_jsonl("not json".as_bytes()).is_err());
        let conflicting = "{\"q\":\"q\",\"a\":\"x\",\"b\":\"y\",\"p\":0.7,\"c\":1}\n{\"q\":\"q\",\"a\":\"x\",\"b\":\"y\",\"p\":0.2,\"c\":0}\n";
        assert!(JudgmentStore::from_jsonl(conflicting.as_bytes()).is_err());
    }
}
