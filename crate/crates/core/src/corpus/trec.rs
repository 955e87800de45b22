//! TREC-style text formats: qrels, run files and a tab-separated feature file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;

use super::{CandidateSet, CorpusError, DocId, FeatureStore, QueryId, Ranking, RelevanceJudgments, ScoredDoc};

fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String), CorpusError>> {
    reader.lines().enumerate().map(|(i, line)| {
        line.map(|l| (i + 1, l))
            .map_err(|source| CorpusError::Read { line: i + 1, source })
    })
}

fn parse_err(line: usize, message: impl Into<String>) -> CorpusError {
    CorpusError::Parse {
        line,
        message: message.into(),
    }
}

fn id_at<T>(line: usize, field: &str, make: impl Fn(&str) -> Result<T, CorpusError>) -> Result<T, CorpusError> {
    make(field).map_err(|e| parse_err(line, e.to_string()))
}

/// Parses `<qid> <ignored> <docid> <grade>` lines. Later duplicates win.
pub fn parse_qrels<R: BufRead>(reader: R) -> Result<RelevanceJudgments, CorpusError> {
    let mut qrels = RelevanceJudgments::new();
    for item in lines(reader) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 4 {
            return Err(parse_err(n, format!("expected 4 fields, found {}", fields.len())));
        }
        let query = id_at(n, fields[0], |s| QueryId::new(s))?;
        let doc = id_at(n, fields[2], |s| DocId::new(s))?;
        let grade: i64 = fields[3]
            .parse()
            .map_err(|_| parse_err(n, format!("grade {:?} is not an integer", fields[3])))?;
        if grade < 0 {
            return Err(CorpusError::NegativeGrade { line: n, grade });
        }
        let grade = u32::try_from(grade).map_err(|_| parse_err(n, "grade out of range"))?;
        qrels.insert(query, doc, grade);
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &RelevanceJudgments) -> String {
    let mut out = String::new();
    for (q, d, g) in qrels.iter() {
        writeln!(out, "{q} 0 {d} {g}").unwrap();
    }
    out
}

/// Parses `<qid> Q0 <docid> <rank> <score> <tag>` lines into one candidate
/// set per query, ordered by query id. The rank column is validated but the
/// order is always re-derived from the scores.
pub fn parse_trec_run<R: BufRead>(reader: R) -> Result<Vec<CandidateSet>, CorpusError> {
    let mut by_query: BTreeMap<QueryId, Vec<ScoredDoc>> = BTreeMap::new();
    let mut seen: BTreeMap<QueryId, std::collections::HashSet<DocId>> = BTreeMap::new();
    for item in lines(reader) {
        let (n, line) = item?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if fields.len() != 6 {
            return Err(parse_err(n, format!("expected 6 fields, found {}", fields.len())));
        }
        let query = id_at(n, fields[0], |s| QueryId::new(s))?;
        let doc = id_at(n, fields[2], |s| DocId::new(s))?;
        fields[3]
            .parse::<u64>()
            .map_err(|_| parse_err(n, format!("rank {:?} is not a non-negative integer", fields[3])))?;
        let score: f64 = fields[4]
            .parse()
            .map_err(|_| parse_err(n, format!("score {:?} is not numeric", fields[4])))?;
        if !score.is_finite() {
            return Err(parse_err(n, format!("score {:?} is not finite", fields[4])));
        }
        if !seen.entry(query.clone()).or_default().insert(doc.clone()) {
            return Err(CorpusError::DuplicateDoc {
                query: query.to_string(),
                doc: doc.to_string(),
            });
        }
        by_query.entry(query).or_default().push(ScoredDoc::new(doc, score));
    }
    by_query
        .into_iter()
        .map(|(q, entries)| CandidateSet::new(q, entries))
        .collect()
}

/// Renders rankings in list order with ranks `1..=n` and six-decimal scores.
pub fn write_trec_run(rankings: &[Ranking], tag: &str) -> String {
    let mut out = String::new();
    for ranking in rankings {
        for (i, e) in ranking.entries.iter().enumerate() {
            writeln!(out, "{} Q0 {} {} {:.6} {}", ranking.query, e.doc, i + 1, e.score, tag).unwrap();
        }
    }
    out
}

/// Parses the feature file: a `#dim=<d>` header, then
/// `<qid>\t<docid>\t<f1>\t...\t<fd>` lines.
pub fn parse_features<R: BufRead>(reader: R) -> Result<FeatureStore, CorpusError> {
    let mut store: Option<FeatureStore> = None;
    for item in lines(reader) {
        let (n, line) = item?;
        if line.trim().is_empty() {
            continue;
        }
        let Some(fs) = store.as_mut() else {
            let dim = line
                .trim()
                .strip_prefix("#dim=")
                .ok_or_else(|| parse_err(n, "missing #dim=<d> header"))?;
            let dim: usize = dim
                .parse()
                .ok()
                .filter(|&d| d >= 1)
                .ok_or_else(|| parse_err(n, format!("invalid dimension {dim:?}")))?;
            store = Some(FeatureStore::new(dim));
            continue;
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != fs.dim() + 2 {
            return Err(parse_err(
                n,
                format!("expected {} tab-separated fields, found {}", fs.dim() + 2, fields.len()),
            ));
        }
        let query = id_at(n, fields[0], |s| QueryId::new(s))?;
        let doc = id_at(n, fields[1], |s| DocId::new(s))?;
        let values = fields[2..]
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| parse_err(n, format!("feature {f:?} is not a finite number")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        fs.insert(query, doc, values)?;
    }
    store.ok_or_else(|| parse_err(1, "missing #dim=<d> header"))
}

pub fn write_features(features: &FeatureStore) -> String {
    let mut out = format!("#dim={}\n", features.dim());
    for (q, d, v) in features.sorted_entries() {
        write!(out, "{q}\t{d}").unwrap();
        for x in v {
            write!(out, "\t{x}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qrels_single_line() {
        let qrels = parse_qrels("q1 0 dA 3\n".as_bytes()).unwrap();
        assert_eq!(qrels.len(), 1);
        assert_eq!(qrels.grade(&QueryId::new("q1").unwrap(), &DocId::new("dA").unwrap()), 3);
    }

    #[test]
    fn qrels_empty_stream() {
        assert!(parse_qrels("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn qrels_non_integer_grade_reports_line() {
        match parse_qrels("q1 0 dA x".as_bytes()) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match parse_qrels("q1 0 dA 1\n\nq1 0 dB".as_bytes()) {
            Err(CorpusError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn qrels_negative_grade_is_validation_error() {
        assert!(matches!(
            parse_qrels("q1 0 dA -1".as_bytes()),
            Err(CorpusError::NegativeGrade { line: 1, grade: -1 })
        ));
    }

    #[test]
    fn qrels_duplicate_keeps_last() {
        let qrels = parse_qrels("q1 0 dA 1\nq1 0 dA 2\n".as_bytes()).unwrap();
        assert_eq!(qrels.grade(&QueryId::new("q1").unwrap(), &DocId::new("dA").unwrap()), 2);
        assert_eq!(write_qrels(&qrels), "q1 0 dA 2\n");
    }

    #[test]
    fn run_is_resorted_by_score() {
        let runs = parse_trec_run("q1 Q0 a 1 2.0 t\nq1 Q0 b 2 5.0 t\n".as_bytes()).unwrap();
        assert_eq!(runs.len(), 1);
        assert_eq!(runs[0].doc(0).as_str(), "b");
        assert_eq!(runs[0].doc(1).as_str(), "a");
    }

    #[test]
    fn run_duplicate_doc_is_error() {
        let r = parse_trec_run("q1 Q0 a 1 2.0 t\nq1 Q0 a 2 1.0 t\n".as_bytes());
        assert!(matches!(r, Err(CorpusError::DuplicateDoc { .. })));
    }

    #[test]
    fn run_non_numeric_score_is_error() {
        assert!(matches!(
            parse_trec_run("q1 Q0 a 1 high t\n".as_bytes()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn run_with_hundred_docs_per_query() {
        let mut text = String::new();
        for q in ["q1", "q2"] {
            for i in 0..100 {
                writeln!(text, "{q} Q0 d{i} {} {}.5 bm25", i + 1, 100 - i).unwrap();
            }
        }
        let runs = parse_trec_run(text.as_bytes()).unwrap();
        assert_eq!(runs.len(), 2);
        assert!(runs.iter().all(|c| c.len() == 100));
    }

    #[test]
    fn write_empty_and_rank_column() {
        assert_eq!(write_trec_run(&[], "x"), "");
        let runs = parse_trec_run("q1 Q0 a 7 2.0 t\nq1 Q0 b 9 5.0 t\nq1 Q0 c 1 1.0 t\n".as_bytes()).unwrap();
        let text = write_trec_run(&[runs[0].to_ranking()], "tag");
        let ranks: Vec<&str> = text.lines().map(|l| l.split(' ').nth(3).unwrap()).collect();
        assert_eq!(ranks, ["1", "2", "3"]);
        assert_eq!(text.lines().next().unwrap(), "q1 Q0 b 1 5.000000 tag");
    }

    #[test]
    fn features_need_header() {
        assert!(parse_features("q\td\t1.0\n".as_bytes()).is_err());
        let fs = parse_features("#dim=2\nq\td\t1.5\t-2\n".as_bytes()).unwrap();
        assert_eq!(fs.get(&QueryId::new("q").unwrap(), &DocId::new("d").unwrap()), Some(&[1.5, -2.0][..]));
        assert!(parse_features("#dim=2\nq\td\t1.5\n".as_bytes()).is_err());
    }

    fn arb_run() -> impl Strategy<Value = Vec<CandidateSet>> {
        prop::collection::btree_map(
            "q[0-9]{1,3}",
            prop::collection::btree_map("d[a-z0-9]{1,4}", -1_000_000_000i64..1_000_000_000, 1..12),
            0..5,
        )
        .prop_map(|queries| {
            queries
                .into_iter()
                .map(|(q, docs)| {
                    let entries = docs
                        .into_iter()
                        .map(|(d, micros)| ScoredDoc::new(DocId::new(d).unwrap(), micros as f64 / 1e6))
                        .collect();
                    CandidateSet::new(QueryId::new(q).unwrap(), entries).unwrap()
                })
                .collect()
        })
    }

    proptest! {
        #[test]
        fn run_round_trip(sets in arb_run()) {
            let rankings: Vec<Ranking> = sets.iter().map(CandidateSet::to_ranking).collect();
            let text = write_trec_run(&rankings, "rt");
            let parsed = parse_trec_run(text.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, &sets);
            let again: Vec<Ranking> = parsed.iter().map(CandidateSet::to_ranking).collect();
            prop_assert_eq!(write_trec_run(&again, "rt"), text);
        }

        #[test]
        fn qrels_and_features_round_trip(
            rows in prop::collection::btree_map(("q[0-9]", "d[0-9]{1,2}"), (0u32..5, prop::array::uniform3(-1e3f64..1e3)), 0..30)
        ) {
            let mut qrels = RelevanceJudgments::new();
            let mut fs = FeatureStore::new(3);
            for ((q, d), (g, v)) in &rows {
                let (q, d) = (QueryId::new(q).unwrap(), DocId::new(d).unwrap());
                qrels.insert(q.clone(), d.clone(), *g);
                fs.insert(q, d, v.to_vec()).unwrap();
            }
            let text = write_qrels(&qrels);
            prop_assert_eq!(&parse_qrels(text.as_bytes()).unwrap(), &qrels);
            let ftext = write_features(&fs);
            let parsed = parse_features(ftext.as_bytes()).unwrap();
            prop_assert_eq!(&parsed, &fs);
            prop_assert_eq!(write_features(&parsed), ftext);
        }
    }
}
