//! Sample, judge, train, rank and evaluate in one call.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::corpus::{CandidateSet, Dataset, DatasetSplit, DocId, Ranking};
use crate::error::{Error, Result};
use crate::eval::{evaluate_run, Metric, MetricReport};
use crate::prp::{aggregate, build_matrix, labels_from_aggregate, prp_pipeline};
use crate::sampling::{sample_pairs_for_query, Budget, SampledPairSet, Strategy};
use crate::student::{
    pair_labels_from_aggregate, pair_labels_from_judgments, predict_run, train, ModelSpec, PairLabel, PointLabel,
    StudentError, StudentParams, Supervision, TrainConfig, TrainLog,
};
use crate::teacher::{judge_pairs, score_docs, JudgmentStore, PairJudgment, ScoreStore, Teacher};

/// Where the student's training labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Teacher judgments of the sampled pairs in both orders.
    Direct,
    /// Full-pair aggregation per query, restricted to the sampled pairs.
    Aggregated,
    /// Pointwise teacher scores for every training candidate.
    Pointwise,
}

impl FromStr for LabelSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "direct" => Ok(LabelSource::Direct),
            "aggregated" => Ok(LabelSource::Aggregated),
            "pointwise" => Ok(LabelSource::Pointwise),
            other => Err(StudentError::InvalidConfig(format!("unknown label source {other:?}")).into()),
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::Direct => "direct",
            LabelSource::Aggregated => "aggregated",
            LabelSource::Pointwise => "pointwise",
        })
    }
}

/// Teacher caches shared across stages and cells.
#[derive(Debug, Default)]
pub struct Stores {
    pub pairs: JudgmentStore,
    pub scores: ScoreStore,
}

impl Stores {
    pub fn flush(&self) -> Result<()> {
        self.pairs.flush()?;
        self.scores.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct JudgeCounts {
    /// Distinct teacher answers the labels depend on.
    pub judgments: usize,
    /// Answers that were not already cached.
    pub teacher_calls: usize,
}

/// Candidate sets of the training queries, in query order.
pub fn training_sets<'a>(dataset: &'a Dataset, split: &DatasetSplit) -> Vec<&'a CandidateSet> {
    dataset.candidates().iter().filter(|cs| split.train.contains(cs.query())).collect()
}

/// Candidate sets of the test queries, in query order.
pub fn test_sets(dataset: &Dataset, split: &DatasetSplit) -> Vec<CandidateSet> {
    dataset
        .candidates()
        .iter()
        .filter(|cs| split.test.contains(cs.query()))
        .cloned()
        .collect()
}

/// Samples pairs for every training query.
pub fn sample_training_pairs(
    dataset: &Dataset,
    split: &DatasetSplit,
    strategy: Strategy,
    budget: Budget,
    seed: u64,
) -> Result<Vec<SampledPairSet>> {
    training_sets(dataset, split)
        .into_iter()
        .map(|cs| Ok(sample_pairs_for_query(cs, strategy, budget, seed)?))
        .collect()
}

/// Fills `stores` with every teacher answer `source` needs, calling the
/// teacher only on cache misses.
pub fn judge_sampled<T: Teacher + ?Sized>(
    dataset: &Dataset,
    split: &DatasetSplit,
    teacher: &T,
    stores: &mut Stores,
    source: LabelSource,
    sampled: &[SampledPairSet],
    both_directions: bool,
) -> Result<JudgeCounts> {
    let mut counts = JudgeCounts::default();
    match source {
        LabelSource::Direct => {
            for set in sampled {
                let outcome = judge_pairs(teacher, &set.query, &set.pairs, &mut stores.pairs, both_directions)?;
                counts.judgments += outcome.judgments.len();
                counts.teacher_calls += outcome.teacher_calls;
            }
        }
        LabelSource::Aggregated => {
            for cs in training_sets(dataset, split) {
                let outcome = prp_pipeline(teacher, cs, &mut stores.pairs)?;
                counts.judgments += cs.len() * cs.len().saturating_sub(1);
                counts.teacher_calls += outcome.teacher_calls;
            }
        }
        LabelSource::Pointwise => {
            for cs in training_sets(dataset, split) {
                let docs: Vec<DocId> = cs.entries().iter().map(|e| e.doc.clone()).collect();
                counts.teacher_calls += score_docs(teacher, cs.query(), &docs, &mut stores.scores)?;
                counts.judgments += docs.len();
            }
        }
    }
    Ok(counts)
}

fn unordered(pairs: &[(DocId, DocId)]) -> BTreeSet<(&DocId, &DocId)> {
    pairs.iter().map(|(a, b)| if a <= b { (a, b) } else { (b, a) }).collect()
}

/// Training labels read from the stores; no teacher is consulted.
pub fn supervision_from_stores(
    dataset: &Dataset,
    split: &DatasetSplit,
    source: LabelSource,
    sampled: &[SampledPairSet],
    stores: &Stores,
) -> Result<Supervision> {
    let sampled: Vec<SampledPairSet> = sampled.iter().filter(|s| split.train.contains(&s.query)).cloned().collect();
    match source {
        LabelSource::Direct => Ok(Supervision::Pairs(pair_labels_from_judgments(&sampled, &stores.pairs)?)),
        LabelSource::Aggregated => {
            let mut labels: Vec<PairLabel> = Vec::new();
            for set in &sampled {
                let Some(cs) = dataset.candidate_set(&set.query) else {
                    continue;
                };
                let judgments: Vec<PairJudgment> = stores.pairs.query_judgments(cs.query()).cloned().collect();
                let scores = aggregate(&build_matrix(&judgments, cs)?);
                let keep = unordered(&set.pairs);
                labels.extend(
                    pair_labels_from_aggregate(&labels_from_aggregate(&scores), cs)
                        .into_iter()
                        .filter(|l| keep.contains(&(&l.first, &l.second)) || keep.contains(&(&l.second, &l.first))),
                );
            }
            Ok(Supervision::Pairs(labels))
        }
        LabelSource::Pointwise => {
            let mut labels = Vec::new();
            for cs in training_sets(dataset, split) {
                for e in cs.entries() {
                    let target = stores.scores.get(cs.query(), &e.doc).ok_or_else(|| {
                        crate::teacher::TeacherError::ReplayScoreMiss {
                            query: cs.query().to_string(),
                            doc: e.doc.to_string(),
                        }
                    })?;
                    labels.push(PointLabel {
                        query: cs.query().clone(),
                        doc: e.doc.clone(),
                        target,
                    });
                }
            }
            Ok(Supervision::Points(labels))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelOutcome {
    pub supervision: Supervision,
    pub counts: JudgeCounts,
}

/// Sampling, judging and label construction for the training queries.
#[allow(clippy::too_many_arguments)]
pub fn build_supervision<T: Teacher + ?Sized>(
    dataset: &Dataset,
    split: &DatasetSplit,
    teacher: &T,
    stores: &mut Stores,
    source: LabelSource,
    strategy: Strategy,
    budget: Budget,
    both_directions: bool,
    seed: u64,
) -> Result<LabelOutcome> {
    let sampled = match source {
        LabelSource::Pointwise => Vec::new(),
        _ => sample_training_pairs(dataset, split, strategy, budget, seed)?,
    };
    let counts = judge_sampled(dataset, split, teacher, stores, source, &sampled, both_directions)?;
    let supervision = supervision_from_stores(dataset, split, source, &sampled, stores)?;
    Ok(LabelOutcome { supervision, counts })
}

/// Everything that defines one experiment besides data and teacher.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSpec {
    pub source: LabelSource,
    pub strategy: Strategy,
    pub budget: Budget,
    pub both_directions: bool,
    pub model: ModelSpec,
    /// `train.seed` also seeds pair sampling.
    pub train: TrainConfig,
    pub metrics: Vec<Metric>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellOutcome {
    pub params: StudentParams,
    pub log: TrainLog,
    pub test_run: Vec<Ranking>,
    pub report: MetricReport,
    pub counts: JudgeCounts,
    pub wall_clock_seconds: f64,
}

/// One experiment: labels, training, then test-query ranking and metrics.
pub fn run_cell<T: Teacher + ?Sized>(
    dataset: &Dataset,
    split: &DatasetSplit,
    teacher: &T,
    stores: &mut Stores,
    cell: &CellSpec,
) -> Result<CellOutcome> {
    let start = Instant::now();
    let labels = build_supervision(
        dataset,
        split,
        teacher,
        stores,
        cell.source,
        cell.strategy,
        cell.budget,
        cell.both_directions,
        cell.train.seed,
    )?;
    let (params, log) = train(dataset, &labels.supervision, split, &cell.model, &cell.train)?;
    let test = test_sets(dataset, split);
    let test_run = predict_run(&params, &test, &dataset.features)?;
    let report = evaluate_run(&test_run, &dataset.qrels, &cell.metrics)?;
    Ok(CellOutcome {
        params,
        log,
        test_run,
        report,
        counts: labels.counts,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}
