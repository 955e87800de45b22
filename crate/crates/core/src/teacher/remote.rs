//! Client for an external scoring service.
//!
//! Pairwise requests carry `{query, passage_a, passage_b}` and expect
//! `{loglik_a, loglik_b}`; pointwise requests carry `{query, passage}` and
//! expect `{loglik_yes, loglik_no}`. Both are reduced to a probability by
//! normalizing the two option likelihoods.

use std::collections::HashMap;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{two_option_from_logliks, Teacher, TeacherError};
use crate::corpus::{DocId, QueryId};

pub const TEACHER_URL_ENV: &str = "PRD_TEACHER_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRequest {
    pub query: String,
    pub passage_a: String,
    pub passage_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairResponse {
    pub loglik_a: f64,
    pub loglik_b: f64,
}

impl PairResponse {
    pub fn preference(&self) -> f64 {
        two_option_from_logliks(self.loglik_a, self.loglik_b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRequest {
    pub query: String,
    pub passage: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResponse {
    pub loglik_yes: f64,
    pub loglik_no: f64,
}

impl PointResponse {
    pub fn score(&self) -> f64 {
        two_option_from_logliks(self.loglik_yes, self.loglik_no)
    }
}

/// Prompt templates for services that wrap a generative model. `{query}`,
/// `{document}`, `{document_a}` and `{document_b}` are substituted.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptTemplates {
    pub pointwise: String,
    pub pairwise: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            pointwise: "Does the passage {document} answer the query {query}? Output Yes or No: ".into(),
            pairwise: "Which of the following two passages is more relevant to the query {query}? \
                       Passage A: {document_a}; Passage B: {document_b}; Output Passage A or Passage B: "
                .into(),
        }
    }
}

impl PromptTemplates {
    pub fn render_pointwise(&self, query: &str, document: &str) -> String {
        self.pointwise.replace("{query}", query).replace("{document}", document)
    }

    pub fn render_pairwise(&self, query: &str, a: &str, b: &str) -> String {
        self.pairwise
            .replace("{query}", query)
            .replace("{document_a}", a)
            .replace("{document_b}", b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub url: String,
    pub timeout: Duration,
    /// Additional attempts after the first one.
    pub max_retries: u32,
    /// Delay before retry `i` is `backoff * 2^(i-1)`.
    pub backoff: Duration,
    pub prompts: PromptTemplates,
}

impl RemoteConfig {
    pub fn new(url: impl Into<String>) -> Self {
        Self {
            url: url.into(),
            timeout: Duration::from_secs(30),
            max_retries: 3,
            backoff: Duration::from_millis(200),
            prompts: PromptTemplates::default(),
        }
    }

    /// Reads the endpoint from `PRD_TEACHER_URL`.
    pub fn from_env() -> Result<Self, TeacherError> {
        match std::env::var(TEACHER_URL_ENV) {
            Ok(url) if !url.trim().is_empty() => Ok(Self::new(url.trim())),
            _ => Err(TeacherError::NoEndpoint),
        }
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }
}

fn post<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    agent: &ureq::Agent,
    url: &str,
    request: &Req,
) -> Result<Resp, TeacherError> {
    let body = serde_json::to_string(request).map_err(|e| TeacherError::Transport(e.to_string()))?;
    let mut response = agent
        .post(url)
        .header("Content-Type", "application/json")
        .send(body.as_str())
        .map_err(|e| match e {
            ureq::Error::Timeout(_) => TeacherError::Timeout,
            ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TeacherError::Timeout,
            other => TeacherError::Transport(other.to_string()),
        })?;
    let status = response.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(TeacherError::Status(status));
    }
    let text = response.body_mut().read_to_string().map_err(|e| match e {
        ureq::Error::Timeout(_) => TeacherError::Timeout,
        other => TeacherError::Transport(other.to_string()),
    })?;
    serde_json::from_str(&text).map_err(|e| TeacherError::Schema(e.to_string()))
}

fn check_finite(values: [f64; 2]) -> Result<(), TeacherError> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(TeacherError::Schema(format!("non-finite log-likelihoods {values:?}")))
    }
}

fn with_retries<T>(config: &RemoteConfig, mut attempt: impl FnMut() -> Result<T, TeacherError>) -> Result<T, TeacherError> {
    let mut tries = 0;
    loop {
        tries += 1;
        match attempt() {
            Ok(v) => return Ok(v),
            Err(e) if e.is_retryable() && tries <= config.max_retries => {
                std::thread::sleep(config.backoff * 2u32.saturating_pow(tries - 1));
            }
            Err(e) if e.is_retryable() && tries > 1 => {
                return Err(TeacherError::RetriesExhausted {
                    attempts: tries,
                    last: Box::new(e),
                })
            }
            Err(e) => return Err(e),
        }
    }
}

/// One pairwise request, retried per `config`.
pub fn remote_judge(config: &RemoteConfig, request: &PairRequest) -> Result<PairResponse, TeacherError> {
    let agent = config.agent();
    with_retries(config, || {
        let r: PairResponse = post(&agent, &config.url, request)?;
        check_finite([r.loglik_a, r.loglik_b])?;
        Ok(r)
    })
}

/// One pointwise request, retried per `config`.
pub fn remote_score(config: &RemoteConfig, request: &PointRequest) -> Result<PointResponse, TeacherError> {
    let agent = config.agent();
    with_retries(config, || {
        let r: PointResponse = post(&agent, &config.url, request)?;
        check_finite([r.loglik_yes, r.loglik_no])?;
        Ok(r)
    })
}

/// Teacher backed by the scoring service. Identifiers are sent as text
/// unless a text is registered for them.
#[derive(Debug, Clone)]
pub struct RemoteTeacher {
    config: RemoteConfig,
    agent: ureq::Agent,
    tie_threshold: f64,
    texts: HashMap<String, String>,
}

impl RemoteTeacher {
    pub fn new(config: RemoteConfig, tie_threshold: f64) -> Self {
        let agent = config.agent();
        Self {
            config,
            agent,
            tie_threshold,
            texts: HashMap::new(),
        }
    }

    pub fn with_texts(mut self, texts: HashMap<String, String>) -> Self {
        self.texts = texts;
        self
    }

    fn text<'s>(&'s self, id: &'s str) -> &'s str {
        self.texts.get(id).map(String::as_str).unwrap_or(id)
    }
}

impl Teacher for RemoteTeacher {
    fn pointwise_score(&self, query: &QueryId, doc: &DocId) -> Result<f64, TeacherError> {
        let request = PointRequest {
            query: self.text(query.as_str()).to_string(),
            passage: self.text(doc.as_str()).to_string(),
        };
        with_retries(&self.config, || {
            let r: PointResponse = post(&self.agent, &self.config.url, &request)?;
            check_finite([r.loglik_yes, r.loglik_no])?;
            Ok(r.score())
        })
    }

    fn pairwise_preference(&self, query: &QueryId, first: &DocId, second: &DocId) -> Result<f64, TeacherError> {
        if first == second {
            return Err(TeacherError::SameDocument(first.to_string()));
        }
        let request = PairRequest {
            query: self.text(query.as_str()).to_string(),
            passage_a: self.text(first.as_str()).to_string(),
            passage_b: self.text(second.as_str()).to_string(),
        };
        with_retries(&self.config, || {
            let r: PairResponse = post(&self.agent, &self.config.url, &request)?;
            check_finite([r.loglik_a, r.loglik_b])?;
            Ok(r.preference())
        })
    }

    fn tie_threshold(&self) -> f64 {
        self.tie_threshold
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn response_to_probability() {
        let r = PairResponse {
            loglik_a: -0.1,
            loglik_b: -2.4,
        };
        assert!((r.preference() - 0.9089).abs() < 1e-4);
        let r = PairResponse {
            loglik_a: -1.0,
            loglik_b: -1.0,
        };
        assert_eq!(r.preference(), 0.5);
        let s = PointResponse {
            loglik_yes: 0.6f64.ln(),
            loglik_no: 0.3f64.ln(),
        };
        assert!((s.score() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn templates_render() {
        let t = PromptTemplates::default();
        let p = t.render_pairwise("q?", "AAA", "BBB");
        assert!(p.contains("q?") && p.contains("Passage A: AAA") && p.contains("Passage B: BBB"));
        assert!(t.render_pointwise("q?", "doc").contains("passage doc answer the query q?"));
    }

    #[test]
    fn schema_of_request() {
        let req = PairRequest {
            query: "q".into(),
            passage_a: "a".into(),
            passage_b: "b".into(),
        };
        let v: serde_json::Value = serde_json::to_value(&req).unwrap();
        assert_eq!(v, serde_json::json!({"query": "q", "passage_a": "a", "passage_b": "b"}));
    }
}
