use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use super::{CorpusError, QueryId};
use crate::seed::rng_from;

/// Train / validation / test proportions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Result<Self, CorpusError> {
        let all = [train, validation, test];
        if all.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CorpusError::Split(format!("ratios must be non-negative, got {all:?}")));
        }
        if (all.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Split(format!("ratios must sum to 1, got {all:?}")));
        }
        Ok(Self {
            train,
            validation,
            test,
        })
    }
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.7,
            validation: 0.1,
            test: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DatasetSplit {
    pub train: BTreeSet<QueryId>,
    pub validation: BTreeSet<QueryId>,
    pub test: BTreeSet<QueryId>,
}

/// Seeded, unstratified shuffle split.
///
/// Validation and test sizes are `floor(ratio * n)`, raised to one for any
/// non-zero ratio; train takes the remainder.
pub fn make_split(query_ids: &[QueryId], ratios: SplitRatios, seed: u64) -> Result<DatasetSplit, CorpusError> {
    let mut ids: Vec<QueryId> = query_ids.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
    let n = ids.len();
    let nonzero = [ratios.train, ratios.validation, ratios.test]
        .iter()
        .filter(|r| **r > 0.0)
        .count();
    if n < nonzero {
        return Err(CorpusError::Split(format!(
            "{n} queries cannot fill {nonzero} non-empty buckets"
        )));
    }

    let bucket = |ratio: f64| -> usize {
        if ratio > 0.0 {
            ((ratio * n as f64 + 1e-9).floor() as usize).max(1)
        } else {
            0
        }
    };
    let mut validation = bucket(ratios.validation);
    let mut test = bucket(ratios.test);
    if ratios.train > 0.0 && validation + test >= n {
        if validation >= test {
            validation -= validation + test + 1 - n;
        } else {
            test -= validation + test + 1 - n;
        }
    }
    let train = n - validation - test;

    ids.shuffle(&mut rng_from(seed));
    let mut it = ids.into_iter();
    Ok(DatasetSplit {
        train: it.by_ref().take(train).collect(),
        validation: it.by_ref().take(validation).collect(),
        test: it.collect(),
    })
}
