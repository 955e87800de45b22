//! Budgeted sampling of ordered document pairs.
//!
//! The universe for a candidate set of size `n` is every ordered pair
//! `(a, b)` with `a != b`, `n(n-1)` in total. A strategy assigns each pair a
//! non-negative weight from the first-stage ranks and `k` pairs are drawn
//! without replacement by successive sampling: each draw picks a remaining
//! pair with probability proportional to its weight.
//!
//! Successive sampling is realized with exponential keys: pair `i` gets
//! `E_i / w_i` with `E_i ~ Exp(1)` and the `k` smallest keys are taken in
//! ascending order, which has the same distribution over draw sequences.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use thiserror::Error;

use crate::corpus::{CandidateSet, DocId, QueryId};
use crate::seed::{derive_seed, rng_from};

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("need at least 2 candidates to form pairs, got {0}")]
    TooFewCandidates(usize),
    #[error("ranks must be a permutation of 1..={0}")]
    NotAPermutation(usize),
    #[error("requested {k} pairs from a universe of {universe}")]
    BudgetTooLarge { k: usize, universe: usize },
    #[error("sample size must be at least 1")]
    ZeroBudget,
    #[error("weights must be finite and non-negative with at least one positive")]
    InvalidWeights,
    #[error("{items} items but {weights} weights")]
    LengthMismatch { items: usize, weights: usize },
    #[error("invalid budget {0:?}")]
    InvalidBudget(String),
    #[error("unknown strategy {0:?} (expected random, rr, rrsum or rrdiff)")]
    UnknownStrategy(String),
}

/// Indices into a candidate set; `a != b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct OrderedPair {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    /// Uniform over pairs.
    Random,
    /// `1 / r_a`: favours pairs whose first document ranks high.
    Rr,
    /// `(1 / r_a + 1 / r_b) / 2`.
    RrSum,
    /// `|1 / r_a - 1 / r_b|`.
    RrDiff,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::Random, Strategy::Rr, Strategy::RrSum, Strategy::RrDiff];

    pub fn weight(self, rank_a: usize, rank_b: usize) -> f64 {
        let (ra, rb) = (1.0 / rank_a as f64, 1.0 / rank_b as f64);
        match self {
            Strategy::Random => 1.0,
            Strategy::Rr => ra,
            Strategy::RrSum => (ra + rb) / 2.0,
            Strategy::RrDiff => (ra - rb).abs(),
        }
    }
}

impl FromStr for Strategy {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(Strategy::Random),
            "rr" => Ok(Strategy::Rr),
            "rrsum" => Ok(Strategy::RrSum),
            "rrdiff" => Ok(Strategy::RrDiff),
            _ => Err(SamplingError::UnknownStrategy(s.to_string())),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Random => "random",
            Strategy::Rr => "rr",
            Strategy::RrSum => "rrsum",
            Strategy::RrDiff => "rrdiff",
        })
    }
}

/// How many pairs to draw per query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    /// Fraction of the `n(n-1)` universe, in `(0, 1]`.
    Fraction(f64),
    /// Absolute number of ordered pairs, at least 1.
    Count(usize),
}

impl Budget {
    pub fn fraction(f: f64) -> Result<Self, SamplingError> {
        if f > 0.0 && f <= 1.0 {
            Ok(Budget::Fraction(f))
        } else {
            Err(SamplingError::InvalidBudget(f.to_string()))
        }
    }

    pub fn count(k: usize) -> Result<Self, SamplingError> {
        if k >= 1 {
            Ok(Budget::Count(k))
        } else {
            Err(SamplingError::ZeroBudget)
        }
    }
}

/// `"0.02"`, `"1.0"` and `"2%"` are fractions; a bare integer such as `"198"`
/// is a pair count.
impl FromStr for Budget {
    type Err = SamplingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || SamplingError::InvalidBudget(s.to_string());
        if let Some(pct) = s.strip_suffix('%') {
            let v: f64 = pct.trim().parse().map_err(|_| bad())?;
            return Budget::fraction(v / 100.0).map_err(|_| bad());
        }
        if s.contains(['.', 'e', 'E']) {
            let v: f64 = s.parse().map_err(|_| bad())?;
            return Budget::fraction(v).map_err(|_| bad());
        }
        let k: usize = s.parse().map_err(|_| bad())?;
        Budget::count(k).map_err(|_| bad())
    }
}

/// All ordered pairs over `n` candidates in lexicographic order.
pub fn pair_universe(n: usize) -> Result<Vec<OrderedPair>, SamplingError> {
    if n < 2 {
        return Err(SamplingError::TooFewCandidates(n));
    }
    Ok((0..n)
        .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| OrderedPair { a, b }))
        .collect())
}

/// Unnormalized weight for every pair of `pair_universe(ranks.len())`, where
/// `ranks[i]` is the 1-based first-stage rank of candidate `i`.
pub fn strategy_weights(strategy: Strategy, ranks: &[usize]) -> Result<Vec<f64>, SamplingError> {
    let n = ranks.len();
    let mut seen = vec![false; n];
    for &r in ranks {
        if r == 0 || r > n || std::mem::replace(&mut seen[r - 1], true) {
            return Err(SamplingError::NotAPermutation(n));
        }
    }
    Ok(pair_universe(n)?
        .into_iter()
        .map(|p| strategy.weight(ranks[p.a], ranks[p.b]))
        .collect())
}

/// Number of ordered pairs to draw for `n` candidates. Fractions round half
/// away from zero and are at least 1; everything is clamped to `n(n-1)`.
pub fn resolve_budget(budget: Budget, n: usize) -> usize {
    let universe = n.saturating_mul(n.saturating_sub(1));
    let k = match budget {
        Budget::Fraction(f) => ((f * universe as f64).round() as usize).max(1),
        Budget::Count(k) => k,
    };
    k.min(universe)
}

/// Draws `k` distinct items by successive sampling, returned in draw order.
///
/// Once every positive-weight item is drawn, the remaining draws are uniform
/// over the zero-weight items.
pub fn sample_without_replacement<T: Clone>(
    items: &[T],
    weights: &[f64],
    k: usize,
    seed: u64,
) -> Result<Vec<T>, SamplingError> {
    if items.len() != weights.len() {
        return Err(SamplingError::LengthMismatch {
            items: items.len(),
            weights: weights.len(),
        });
    }
    if k == 0 {
        return Err(SamplingError::ZeroBudget);
    }
    if k > items.len() {
        return Err(SamplingError::BudgetTooLarge {
            k,
            universe: items.len(),
        });
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) || !weights.iter().any(|w| *w > 0.0) {
        return Err(SamplingError::InvalidWeights);
    }

    let mut rng = rng_from(seed);
    // (tier, key, index): tier 0 for positive weights, 1 for the zero-weight tail.
    let mut keys: Vec<(u8, f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let e: f64 = Exp1.sample(&mut rng);
            let u: f64 = rng.random();
            if w > 0.0 {
                (0, e / w, i)
            } else {
                (1, u, i)
            }
        })
        .collect();
    let cmp = |x: &(u8, f64, usize), y: &(u8, f64, usize)| {
        x.0.cmp(&y.0).then(x.1.total_cmp(&y.1)).then(x.2.cmp(&y.2))
    };
    if k < keys.len() {
        keys.select_nth_unstable_by(k - 1, cmp);
        keys.truncate(k);
    }
    keys.sort_by(cmp);
    Ok(keys.into_iter().map(|(_, _, i)| items[i].clone()).collect())
}

/// Ordered pairs drawn for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledPairSet {
    pub query: QueryId,
    pub pairs: Vec<(DocId, DocId)>,
}

impl SampledPairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Per-query seed: a hash of the global seed and the query id.
pub fn query_seed(global_seed: u64, query: &QueryId) -> u64 {
    derive_seed(global_seed, &[b"sample", query.as_str().as_bytes()])
}

pub fn sample_pairs_for_query(
    candidates: &CandidateSet,
    strategy: Strategy,
    budget: Budget,
    global_seed: u64,
) -> Result<SampledPairSet, SamplingError> {
    let universe = pair_universe(candidates.len())?;
    let weights = strategy_weights(strategy, &candidates.ranks())?;
    let k = resolve_budget(budget, candidates.len());
    let drawn = sample_without_replacement(&universe, &weights, k, query_seed(global_seed, candidates.query()))?;
    Ok(SampledPairSet {
        query: candidates.query().clone(),
        pairs: drawn
            .into_iter()
            .map(|p| (candidates.doc(p.a).clone(), candidates.doc(p.b).clone()))
            .collect(),
    })
}

/// Tab-separated `<qid>\t<docid_a>\t<docid_b>` lines.
pub fn write_sampled_pairs(sets: &[SampledPairSet]) -> String {
    let mut out = String::new();
    for set in sets {
        for (a, b) in &set.pairs {
            out.push_str(&format!("{}\t{a}\t{b}\n", set.query));
        }
    }
    out
}

/// Parses the tab-separated pair file, grouping consecutive lines of the
/// same query and keeping line order within a query.
pub fn parse_sampled_pairs<R: std::io::BufRead>(reader: R) -> Result<Vec<SampledPairSet>, crate::corpus::CorpusError> {
    use crate::corpus::CorpusError;
    let mut sets: Vec<SampledPairSet> = Vec::new();
    let mut index = std::collections::HashMap::new();
    for (i, line) in reader.lines().enumerate() {
        let n = i + 1;
        let line = line.map_err(|source| CorpusError::Read { line: n, source })?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let parse_err = |message: String| CorpusError::Parse { line: n, message };
        if fields.len() != 3 {
            return Err(parse_err(format!("expected 3 tab-separated fields, found {}", fields.len())));
        }
        let q = QueryId::new(fields[0]).map_err(|e| parse_err(e.to_string()))?;
        let a = DocId::new(fields[1]).map_err(|e| parse_err(e.to_string()))?;
        let b = DocId::new(fields[2]).map_err(|e| parse_err(e.to_string()))?;
        if a == b {
            return Err(parse_err("pair of identical documents".into()));
        }
        let slot = *index.entry(q.clone()).or_insert_with(|| {
            sets.push(SampledPairSet {
                query: q.clone(),
                pairs: Vec::new(),
            });
            sets.len() - 1
        });
        sets[slot].pairs.push((a, b));
    }
    Ok(sets)
}
