//! Run configuration, read from a TOML file.
//!
//! Relative paths are resolved against the directory holding the file.
//! Credentials are never part of the file; live providers name the
//! environment variable that holds their key.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::corpus::default_keywords;
use crate::gateway::RetryPolicy;
use crate::predictor::Strategy;
use crate::regression::TopicScaling;
use crate::variantgen::default_phrases;

use super::PipelineError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    /// Answers from a recorded fixture file.
    Replay,
    /// Rule-based offline model for the synthetic corpus.
    Simulated,
    Openai,
    Anthropic,
}

impl ProviderKind {
    pub fn is_live(self) -> bool {
        matches!(self, ProviderKind::Openai | ProviderKind::Anthropic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessorConfig {
    pub provider: ProviderKind,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub base_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictorConfig {
    pub provider: ProviderKind,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_repeats")]
    pub repeats: u32,
    #[serde(default)]
    pub attempt_failure_budget: u32,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub base_url: Option<String>,
}

fn default_strategies() -> Vec<Strategy> {
    vec![Strategy::Basic, Strategy::Cot]
}

fn default_repeats() -> u32 {
    20
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionConfig {
    #[serde(default)]
    pub topic_scale: TopicScaling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_base_delay_ms")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_delay_ms")]
    pub max_delay_ms: u64,
}

fn default_max_retries() -> u32 {
    5
}
fn default_base_delay_ms() -> u64 {
    1000
}
fn default_max_delay_ms() -> u64 {
    60_000
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_retries: default_max_retries(),
            base_delay_ms: default_base_delay_ms(),
            max_delay_ms: default_max_delay_ms(),
        }
    }
}

impl RetryConfig {
    pub fn policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.max_retries,
            base_delay: Duration::from_millis(self.base_delay_ms),
            factor: 2.0,
            max_delay: Duration::from_millis(self.max_delay_ms),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CacheConfig {
    /// Directory for the on-disk response cache; in-memory when absent.
    #[serde(default)]
    pub dir: Option<PathBuf>,
}

fn default_context_budget() -> usize {
    200_000
}

fn default_max_in_flight() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub run_id: String,
    pub seed: u64,
    pub corpus: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub fixtures: Option<PathBuf>,
    #[serde(default)]
    pub manual_checks: Option<PathBuf>,
    #[serde(default = "default_keywords")]
    pub keywords: Vec<String>,
    #[serde(default = "default_phrases")]
    pub no_relation_phrases: Vec<String>,
    /// Characters of full text sent to the second verification stage.
    #[serde(default = "default_context_budget")]
    pub context_budget_chars: usize,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    pub preprocessor: PreprocessorConfig,
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub regression: RegressionConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub cache: CacheConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub corpus: Option<PathBuf>,
    pub fixtures: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub repeats: Option<u32>,
    pub strategy: Option<Strategy>,
    pub model: Option<String>,
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        cfg.base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default();
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Overrides take paths relative to the working directory.
    pub fn apply(&mut self, o: &Overrides) {
        let cwd = std::env::current_dir().unwrap_or_default();
        let abs = |p: &PathBuf| if p.is_absolute() { p.clone() } else { cwd.join(p) };
        if let Some(p) = &o.corpus {
            self.corpus = abs(p);
        }
        if let Some(p) = &o.fixtures {
            self.fixtures = Some(abs(p));
        }
        if let Some(p) = &o.output_dir {
            self.output_dir = abs(p);
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(r) = o.repeats {
            self.predictor.repeats = r;
        }
        if let Some(s) = o.strategy {
            self.predictor.strategies = vec![s];
        }
        if let Some(m) = &o.model {
            self.predictor.models = vec![m.clone()];
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn run_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir).join(&self.run_id)
    }

    /// Checks everything that can be checked without touching a provider.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.run_id.is_empty()
            || !self
                .run_id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.'))
        {
            return err(format!("run_id {:?} must be non-empty and use [A-Za-z0-9._-]", self.run_id));
        }
        if self.keywords.is_empty() {
            return err("keywords must not be empty".into());
        }
        if self.no_relation_phrases.is_empty() {
            return err("no_relation_phrases must not be empty".into());
        }
        if self.context_budget_chars < 100 {
            return err("context_budget_chars must be at least 100".into());
        }
        if self.max_in_flight == 0 {
            return err("max_in_flight must be at least 1".into());
        }
        if self.preprocessor.model.trim().is_empty() {
            return err("preprocessor.model is missing".into());
        }
        if self.predictor.models.is_empty() || self.predictor.models.iter().any(|m| m.trim().is_empty()) {
            return err("predictor.models must list at least one model".into());
        }
        if self.predictor.strategies.is_empty() {
            return err("predictor.strategies must not be empty".into());
        }
        if self.predictor.repeats == 0 {
            return err("predictor.repeats must be at least 1".into());
        }
        let kinds = [self.preprocessor.provider, self.predictor.provider];
        if kinds.contains(&ProviderKind::Replay) && self.fixtures.is_none() {
            return err("replay providers need a fixtures file".into());
        }
        for (name, kind, key) in [
            ("preprocessor", self.preprocessor.provider, &self.preprocessor.api_key_env),
            ("predictor", self.predictor.provider, &self.predictor.api_key_env),
        ] {
            if kind.is_live() && key.as_deref().is_none_or(str::is_empty) {
                return err(format!("{name}.api_key_env is required for live providers"));
            }
        }
        if self.preprocessor.provider.is_live()
            && self.predictor.provider.is_live()
            && self.predictor.models.contains(&self.preprocessor.model)
        {
            return err(format!(
                "model {:?} cannot serve as both preprocessor and predictor",
                self.preprocessor.model
            ));
        }
        Ok(())
    }
}
