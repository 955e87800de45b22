use rand_distr::{Distribution, StandardNormal};

use super::{logistic, normalize_two_option, Teacher, TeacherError, TeacherKind, TeacherSpec};
use crate::corpus::{DocId, QueryId, RelevanceJudgments};
use crate::seed::derived_rng;

/// Teacher simulated from ground-truth grades.
///
/// * `oracle`: score `grade / max_grade`; preference 1, 0 or 0.5 by grade.
/// * `bradley_terry`: preference `logistic(beta * (y_a - y_b) + order_bias)`;
///   scores as `pointwise_noisy`.
/// * `pointwise_noisy`: score `clamp(grade / max_grade + N(0, sd), 0, 1)`;
///   preference `s_a / (s_a + s_b)` from those scores.
///
/// Noise is keyed on (seed, query, doc), so answers do not depend on call order.
#[derive(Debug, Clone)]
pub struct SimulatedTeacher<'a> {
    spec: TeacherSpec,
    qrels: &'a RelevanceJudgments,
    max_grade: f64,
}

impl<'a> SimulatedTeacher<'a> {
    pub fn new(spec: TeacherSpec, qrels: &'a RelevanceJudgments) -> Result<Self, TeacherError> {
        spec.validate()?;
        match spec.kind {
            TeacherKind::Oracle | TeacherKind::BradleyTerry | TeacherKind::PointwiseNoisy => {}
            other => {
                return Err(TeacherError::InvalidSpec(format!(
                    "{other} is not a simulated teacher kind"
                )))
            }
        }
        let max_grade = f64::from(qrels.max_grade().max(1));
        Ok(Self { spec, qrels, max_grade })
    }

    pub fn spec(&self) -> &TeacherSpec {
        &self.spec
    }

    fn grade(&self, query: &QueryId, doc: &DocId) -> f64 {
        f64::from(self.qrels.grade(query, doc))
    }

    fn noisy_score(&self, query: &QueryId, doc: &DocId) -> f64 {
        let base = self.grade(query, doc) / self.max_grade;
        if self.spec.pointwise_noise_sd == 0.0 {
            return base;
        }
        let mut rng = derived_rng(
            self.spec.seed,
            &[b"pointwise", query.as_str().as_bytes(), doc.as_str().as_bytes()],
        );
        let z: f64 = StandardNormal.sample(&mut rng);
        (base + self.spec.pointwise_noise_sd * z).clamp(0.0, 1.0)
    }
}

impl Teacher for SimulatedTeacher<'_> {
    fn pointwise_score(&self, query: &QueryId, doc: &DocId) -> Result<f64, TeacherError> {
        Ok(match self.spec.kind {
            TeacherKind::Oracle => self.grade(query, doc) / self.max_grade,
            _ => self.noisy_score(query, doc),
        })
    }

    fn pairwise_preference(&self, query: &QueryId, first: &DocId, second: &DocId) -> Result<f64, TeacherError> {
        if first == second {
            return Err(TeacherError::SameDocument(first.to_string()));
        }
        let (ya, yb) = (self.grade(query, first), self.grade(query, second));
        Ok(match self.spec.kind {
            TeacherKind::Oracle => match ya.total_cmp(&yb) {
                std::cmp::Ordering::Greater => 1.0,
                std::cmp::Ordering::Less => 0.0,
                std::cmp::Ordering::Equal => 0.5,
            },
            TeacherKind::BradleyTerry => {
                // p(a, b) + p(b, a) == 1 exactly when order_bias is 0.
                let z = self.spec.beta * (ya - yb) + self.spec.order_bias;
                if z >= 0.0 {
                    logistic(z)
                } else {
                    1.0 - logistic(-z)
                }
            }
            _ => normalize_two_option(self.noisy_score(query, first), self.noisy_score(query, second)),
        })
    }

    fn tie_threshold(&self) -> f64 {
        self.spec.tie_threshold
    }
}
