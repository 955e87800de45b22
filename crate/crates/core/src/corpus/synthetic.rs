//! Desk-scale stand-in for a passage re-ranking collection.
//!
//! A single latent direction `w*` is drawn per dataset. Each (query, doc)
//! gets a standard-normal feature vector `x`, latent relevance
//! `u = w*·x + N(0, label_noise_sd)`, a grade from per-query equal-mass
//! quantile buckets of `u`, and a first-stage score
//! `u + N(0, initial_ranking_noise_sd)`.

use rand_distr::{Distribution, StandardNormal};

use super::{CandidateSet, CorpusError, Dataset, DocId, FeatureStore, QueryId, RelevanceJudgments, ScoredDoc};
use crate::seed::rng_from;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub num_queries: usize,
    pub docs_per_query: usize,
    pub feature_dim: usize,
    pub label_noise_sd: f64,
    pub initial_ranking_noise_sd: f64,
    pub num_grades: u32,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_queries: 200,
            docs_per_query: 100,
            feature_dim: 10,
            label_noise_sd: 0.5,
            initial_ranking_noise_sd: 1.0,
            num_grades: 4,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |m: &str| Err(CorpusError::Synthetic(m.to_string()));
        if self.num_queries < 1 || self.docs_per_query < 1 || self.feature_dim < 1 {
            return fail("counts must be at least 1");
        }
        if !(self.label_noise_sd >= 0.0 && self.label_noise_sd.is_finite())
            || !(self.initial_ranking_noise_sd >= 0.0 && self.initial_ranking_noise_sd.is_finite())
        {
            return fail("noise standard deviations must be finite and non-negative");
        }
        if self.num_grades < 2 {
            return fail("num_grades must be at least 2");
        }
        if self.docs_per_query < self.num_grades as usize {
            return fail("docs_per_query must be at least num_grades so every quantile bucket is filled");
        }
        Ok(())
    }
}

/// First-stage scores are snapped to a 1e-6 grid so the in-memory candidate
/// sets are exactly what a six-decimal run file parses back to.
fn quantize(score: f64) -> f64 {
    (score * 1e6).round() / 1e6
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Dataset, CorpusError> {
    spec.validate()?;
    let mut rng = rng_from(seed);
    let normal = |rng: &mut rand_chacha::ChaCha8Rng| -> f64 { StandardNormal.sample(rng) };

    let mut w_star: Vec<f64> = (0..spec.feature_dim).map(|_| normal(&mut rng)).collect();
    let norm = w_star.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        w_star.iter_mut().for_each(|w| *w /= norm);
    } else {
        w_star[0] = 1.0;
    }

    let q_width = spec.num_queries.saturating_sub(1).to_string().len().max(3);
    let d_width = spec.docs_per_query.saturating_sub(1).to_string().len().max(3);
    let n = spec.docs_per_query;

    let mut candidates = Vec::with_capacity(spec.num_queries);
    let mut qrels = RelevanceJudgments::new();
    let mut features = FeatureStore::new(spec.feature_dim);

    for qi in 0..spec.num_queries {
        let query = QueryId::new(format!("q{qi:0q_width$}"))?;
        let mut latent = Vec::with_capacity(n);
        let mut entries = Vec::with_capacity(n);
        for di in 0..n {
            let doc = DocId::new(format!("d{di:0d_width$}"))?;
            let x: Vec<f64> = (0..spec.feature_dim).map(|_| normal(&mut rng)).collect();
            let label_noise: f64 = normal(&mut rng);
            let rank_noise: f64 = normal(&mut rng);
            let u = dot(&w_star, &x) + spec.label_noise_sd * label_noise;
            latent.push(u);
            entries.push(ScoredDoc::new(
                doc.clone(),
                quantize(u + spec.initial_ranking_noise_sd * rank_noise),
            ));
            features.insert(query.clone(), doc, x)?;
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| latent[a].total_cmp(&latent[b]).then(a.cmp(&b)));
        for (pos, &di) in order.iter().enumerate() {
            let grade = (pos * spec.num_grades as usize / n) as u32;
            qrels.insert(query.clone(), entries[di].doc.clone(), grade);
        }
        candidates.push(CandidateSet::new(query, entries)?);
    }
    Ok(Dataset::new(candidates, qrels, features))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(label: f64, init: f64) -> SyntheticSpec {
        SyntheticSpec {
            num_queries: 6,
            docs_per_query: 20,
            feature_dim: 4,
            label_noise_sd: label,
            initial_ranking_noise_sd: init,
            num_grades: 4,
        }
    }

    #[test]
    fn zero_noise_initial_ranking_follows_grades() {
        let ds = generate_synthetic(&small(0.0, 0.0), 11).unwrap();
        for cs in ds.candidates() {
            let grades = ds.qrels.grades_for(&cs.to_ranking());
            assert!(grades.windows(2).all(|w| w[0] >= w[1]), "{grades:?}");
        }
    }

    #[test]
    fn counts() {
        let spec = SyntheticSpec::default();
        let ds = generate_synthetic(&spec, 1).unwrap();
        assert_eq!(ds.features.len(), 20_000);
        assert_eq!(ds.candidates().len(), 200);
        assert!(ds.candidates().iter().all(|c| c.len() == 100));
        // equal-mass buckets: 25 documents per grade per query
        let cs = &ds.candidates()[0];
        let grades = ds.qrels.grades_for(&cs.to_ranking());
        for g in 0..4 {
            assert_eq!(grades.iter().filter(|&&x| x == g).count(), 25);
        }
    }

    #[test]
    fn deterministic() {
        let a = generate_synthetic(&small(0.3, 0.5), 5).unwrap();
        let b = generate_synthetic(&small(0.3, 0.5), 5).unwrap();
        assert_eq!(a.candidates(), b.candidates());
        assert_eq!(a.qrels, b.qrels);
        assert_eq!(a.features, b.features);
        let c = generate_synthetic(&small(0.3, 0.5), 6).unwrap();
        assert_ne!(a.features, c.features);
    }

    #[test]
    fn invalid_specs() {
        let mut s = small(0.1, 0.1);
        s.docs_per_query = 3;
        assert!(generate_synthetic(&s, 0).is_err());
        let mut s = small(0.1, 0.1);
        s.num_grades = 1;
        assert!(generate_synthetic(&s, 0).is_err());
        let mut s = small(-0.1, 0.1);
        s.num_queries = 1;
        assert!(generate_synthetic(&s, 0).is_err());
    }
}
