use std::collections::BTreeSet;

use proptest::prelude::*;

use prd_core::corpus::{generate_synthetic, make_split, DatasetSplit, SplitRatios, SyntheticSpec};
use prd_core::eval::{ndcg_at_k, opa};
use prd_core::experiment::{build_supervision, LabelSource, Stores};
use prd_core::prp::{aggregate, ComparisonMatrix};
use prd_core::sampling::{sample_pairs_for_query, Budget, Strategy};
use prd_core::student::{
    forward, init_params, pairwise_logistic_term, pointwise_mse_term, predict_run, train, ModelSpec, StudentParams,
    Supervision, TrainConfig,
};
use prd_core::teacher::{SimulatedTeacher, Teacher, TeacherKind, TeacherSpec};
use prd_core::{CandidateSet, DocId, QueryId, RelevanceJudgments, ScoredDoc};

fn candidate_set(n: usize) -> CandidateSet {
    CandidateSet::new(
        QueryId::new("q").unwrap(),
        (0..n)
            .map(|i| ScoredDoc::new(DocId::new(format!("d{i:03}")).unwrap(), (n - i) as f64))
            .collect(),
    )
    .unwrap()
}

proptest! {
    #[test]
    fn logistic_term_translation_invariant(si in -20.0..20.0f64, sj in -20.0..20.0f64, c in -50.0..50.0f64,
                                           y in prop::sample::select(vec![(0.0, 1.0), (1.0, 0.0), (0.5, 0.5)])) {
        let (l1, gi1, gj1) = pairwise_logistic_term(si, sj, y.0, y.1).unwrap();
        let (l2, gi2, gj2) = pairwise_logistic_term(si + c, sj + c, y.0, y.1).unwrap();
        prop_assert!((l1 - l2).abs() <= 1e-9 * (1.0 + l1.abs()));
        prop_assert!((gi1 - gi2).abs() < 1e-9 && (gj1 - gj2).abs() < 1e-9);
    }

    #[test]
    fn logistic_term_swap_symmetry(si in -30.0..30.0f64, sj in -30.0..30.0f64, yij in 0.0..1.0f64, yji in 0.0..1.0f64) {
        let (l, gi, gj) = pairwise_logistic_term(si, sj, yij, yji).unwrap();
        let (ls, gis, gjs) = pairwise_logistic_term(sj, si, yji, yij).unwrap();
        prop_assert_eq!(l, ls);
        prop_assert_eq!((gi, gj), (gjs, gis));
        prop_assert_eq!(gi, -gj);
    }

    #[test]
    fn mse_gradient_matches_finite_difference(s in -5.0..5.0f64, t in 0.0..1.0f64) {
        let eps = 1e-6;
        let (_, g) = pointwise_mse_term(s, t);
        let numeric = (pointwise_mse_term(s + eps, t).0 - pointwise_mse_term(s - eps, t).0) / (2.0 * eps);
        prop_assert!((g - numeric).abs() <= 1e-6 * g.abs().max(1.0));
    }

    #[test]
    fn prp_scores_are_conserved(n in 2usize..15, seed in any::<u64>()) {
        let mut state = seed;
        let m = ComparisonMatrix::from_fn(n, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            [0.0, 0.5, 1.0][(state >> 33) as usize % 3]
        });
        let total: f64 = aggregate(&m).as_slice().iter().sum();
        prop_assert_eq!(total, (n * (n - 1)) as f64);
    }

    #[test]
    fn opa_is_invariant_to_increasing_transforms(
        pairs in prop::collection::vec((-10.0..10.0f64, 0u32..4), 2..30)
    ) {
        let scores: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let grades: Vec<u32> = pairs.iter().map(|p| p.1).collect();
        let transformed: Vec<f64> = scores.iter().map(|s| (s / 3.0).exp() * 2.0 + 1.0).collect();
        prop_assert_eq!(opa(&scores, &grades), opa(&transformed, &grades));
    }

    #[test]
    fn ndcg_ignores_order_within_equal_grades(mut grades in prop::collection::vec(0u32..4, 1..30), k in 1usize..15) {
        let base = ndcg_at_k(&grades, k);
        // Reverse every run of equal adjacent grades.
        let mut i = 0;
        while i < grades.len() {
            let mut j = i;
            while j + 1 < grades.len() && grades[j + 1] == grades[i] {
                j += 1;
            }
            grades[i..=j].reverse();
            i = j + 1;
        }
        prop_assert_eq!(base, ndcg_at_k(&grades, k));
    }

    #[test]
    fn sampled_pairs_are_distinct_and_sized(n in 2usize..25, frac in 0.001..1.0f64, seed in any::<u64>(),
                                            strategy in prop::sample::select(Strategy::ALL.to_vec())) {
        let cs = candidate_set(n);
        let budget = Budget::fraction(frac).unwrap();
        let set = sample_pairs_for_query(&cs, strategy, budget, seed).unwrap();
        let distinct: BTreeSet<_> = set.pairs.iter().collect();
        prop_assert_eq!(distinct.len(), set.pairs.len());
        prop_assert!(set.pairs.iter().all(|(a, b)| a != b));
        prop_assert_eq!(set.len(), prd_core::sampling::resolve_budget(budget, n));
        prop_assert_eq!(set, sample_pairs_for_query(&cs, strategy, budget, seed).unwrap());
    }

    #[test]
    fn bradley_terry_complementary_without_bias(ga in 0u32..4, gb in 0u32..4, beta in 0.0..5.0f64) {
        let q = QueryId::new("q").unwrap();
        let (a, b) = (DocId::new("a").unwrap(), DocId::new("b").unwrap());
        let mut qrels = RelevanceJudgments::new();
        qrels.insert(q.clone(), a.clone(), ga);
        qrels.insert(q.clone(), b.clone(), gb);
        let t = SimulatedTeacher::new(TeacherSpec { beta, order_bias: 0.0, ..TeacherSpec::default() }, &qrels).unwrap();
        let sum = t.pairwise_preference(&q, &a, &b).unwrap() + t.pairwise_preference(&q, &b, &a).unwrap();
        prop_assert_eq!(sum, 1.0);
    }
}

#[test]
fn zero_noise_initial_ranking_has_perfect_opa() {
    let spec = SyntheticSpec {
        num_queries: 10,
        docs_per_query: 30,
        feature_dim: 5,
        label_noise_sd: 0.0,
        initial_ranking_noise_sd: 0.0,
        num_grades: 4,
    };
    let data = generate_synthetic(&spec, 9).unwrap();
    for cs in data.candidates() {
        let r = cs.to_ranking();
        assert_eq!(opa(&r.scores(), &data.qrels.grades_for(&r)), Some(1.0));
    }
}

#[test]
fn predict_run_scores_each_candidate_once() {
    let spec = SyntheticSpec {
        num_queries: 3,
        docs_per_query: 100,
        feature_dim: 4,
        ..SyntheticSpec::default()
    };
    let data = generate_synthetic(&spec, 2).unwrap();
    let zero = init_params(&ModelSpec::linear(4), 0).unwrap();
    let run = predict_run(&zero, data.candidates(), &data.features).unwrap();
    for (r, cs) in run.iter().zip(data.candidates()) {
        assert_eq!(r.entries.len(), 100);
        assert_eq!(r.docs().collect::<Vec<_>>(), cs.entries().iter().map(|e| &e.doc).collect::<Vec<_>>());
    }
    let mlp = init_params(&ModelSpec::mlp(4, 8), 3).unwrap();
    let a = predict_run(&mlp, data.candidates(), &data.features).unwrap();
    let b = predict_run(&mlp, data.candidates(), &data.features).unwrap();
    assert_eq!(a, b);
}

fn training_pair_accuracy(params: &StudentParams, supervision: &Supervision, data: &prd_core::Dataset) -> f64 {
    let Supervision::Pairs(labels) = supervision else { unreachable!() };
    let (mut agree, mut total) = (0usize, 0usize);
    for l in labels {
        if l.hard[0] == l.hard[1] {
            continue;
        }
        let si = forward(params, data.features.get(&l.query, &l.first).unwrap()).unwrap();
        let sj = forward(params, data.features.get(&l.query, &l.second).unwrap()).unwrap();
        total += 1;
        if (si > sj) == (l.hard[0] > l.hard[1]) && si != sj {
            agree += 1;
        }
    }
    agree as f64 / total as f64
}

#[test]
fn separable_oracle_problem_is_learned() {
    let spec = SyntheticSpec {
        num_queries: 30,
        docs_per_query: 20,
        feature_dim: 5,
        label_noise_sd: 0.0,
        initial_ranking_noise_sd: 1.0,
        num_grades: 4,
    };
    let data = generate_synthetic(&spec, 5).unwrap();
    let split: DatasetSplit = make_split(&data.query_ids(), SplitRatios::new(1.0, 0.0, 0.0).unwrap(), 5).unwrap();
    let teacher = SimulatedTeacher::new(
        TeacherSpec {
            kind: TeacherKind::Oracle,
            ..TeacherSpec::default()
        },
        &data.qrels,
    )
    .unwrap();
    let labels = build_supervision(
        &data,
        &split,
        &teacher,
        &mut Stores::default(),
        LabelSource::Direct,
        Strategy::Random,
        Budget::fraction(1.0).unwrap(),
        true,
        0,
    )
    .unwrap();
    let config = TrainConfig {
        epochs: 100,
        learning_rate: 0.5,
        batch_size: 256,
        ..TrainConfig::default()
    };
    let (params, _) = train(&data, &labels.supervision, &split, &ModelSpec::linear(5), &config).unwrap();
    let acc = training_pair_accuracy(&params, &labels.supervision, &data);
    assert!(acc >= 0.99, "training pair accuracy {acc}");
}
