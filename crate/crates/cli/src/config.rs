//! Flat `key = value` configuration with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// Every recognised key with its default (empty means unset).
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "0"),
    ("out", "prd-out"),
    ("data.source", "synthetic"),
    ("data.run", ""),
    ("data.qrels", ""),
    ("data.features", ""),
    ("synth.num_queries", "200"),
    ("synth.docs_per_query", "100"),
    ("synth.feature_dim", "10"),
    ("synth.label_noise_sd", "0.5"),
    ("synth.initial_ranking_noise_sd", "1.0"),
    ("synth.num_grades", "4"),
    ("split.ratios", "0.7,0.1,0.2"),
    ("split.seed", ""),
    ("teacher.kind", "bradley_terry"),
    ("teacher.beta", "2.0"),
    ("teacher.order_bias", "0.1"),
    ("teacher.pointwise_noise_sd", "0.25"),
    ("teacher.tie_threshold", "0.05"),
    ("teacher.seed", ""),
    ("teacher.url", ""),
    ("teacher.timeout_secs", "30"),
    ("teacher.max_retries", "3"),
    ("sample.strategy", "random"),
    ("sample.budget", "0.02"),
    ("sample.both_directions", "true"),
    ("labels.source", "direct"),
    ("model.kind", "linear"),
    ("model.hidden_units", "16"),
    ("train.loss", ""),
    ("train.label_mode", "hard"),
    ("train.learning_rate", ""),
    ("train.epochs", "20"),
    ("train.batch_size", "128"),
    ("train.l2", "0"),
    ("train.early_stop_patience", "5"),
    ("eval.metrics", "ndcg@10,opa,mrr"),
    ("eval.queries", "test"),
    ("eval.run", ""),
    ("sweep.strategies", "random,rr,rrsum,rrdiff"),
    ("sweep.budgets", "0.005,0.02,1.0"),
    ("sweep.seeds", "0,1,2,3,4"),
];

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, String>,
}

fn known(key: &str) -> Result<(), CliError> {
    if KEYS.iter().any(|(k, _)| *k == key) {
        Ok(())
    } else {
        Err(CliError::Config(format!("unknown configuration key {key:?}")))
    }
}

impl Config {
    /// Reads `key = value` lines; `#` starts a comment.
    pub fn parse(text: &str, origin: &str) -> Result<Self, CliError> {
        let mut config = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin} line {}: expected key = value", i + 1)))?;
            config.set(k.trim(), v.trim())?;
        }
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::MissingInput(format!("config file {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        known(key)?;
        self.values.insert(key.to_string(), value.to_string());
        Ok(())
    }

    /// Applies a `key=value` override.
    pub fn apply(&mut self, assignment: &str) -> Result<(), CliError> {
        let (k, v) = assignment
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("override {assignment:?} is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    /// Value or default; `None` when unset and without a default.
    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = self.values.get(key).map(String::as_str).unwrap_or_else(|| {
            KEYS.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, d)| *d)
                .unwrap_or_else(|| panic!("unregistered key {key}"))
        });
        (!v.is_empty()).then_some(v)
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.values.get(key).is_some_and(|v| !v.is_empty())
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let v = self
            .raw(key)
            .ok_or_else(|| CliError::Config(format!("{key} is required")))?;
        v.parse()
            .map_err(|e| CliError::Config(format!("{key} = {v:?}: {e}")))
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError>
    where
        T::Err: Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(_) => self.get(key).map(Some),
        }
    }

    pub fn list(&self, key: &str) -> Vec<String> {
        self.raw(key)
            .unwrap_or("")
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).map(PathBuf::from)
    }
}
