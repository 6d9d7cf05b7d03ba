//! Harness configuration: provider roster, decoding defaults, mock and
//! simulation parameters. Loaded from TOML; unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::persona::TraitName;

pub const CONFIG_ENV: &str = "PERSONA_ALIGN_CONFIG";

const DEFAULT_CONFIG: &str = include_str!("../data/default_config.toml");

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config file {0} is empty")]
    Empty(String),
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApiStyle {
    /// `/chat/completions` with a bearer token.
    Openai,
    /// `/v1/messages` with an `x-api-key` header.
    Anthropic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    pub name: String,
    #[serde(default)]
    pub label: Option<String>,
    pub api_style: ApiStyle,
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
}

impl ProviderConfig {
    pub fn key_env(&self) -> String {
        self.api_key_env
            .clone()
            .unwrap_or_else(|| format!("{}_API_KEY", self.name.to_ascii_uppercase().replace('-', "_")))
    }

    pub fn display_label(&self) -> &str {
        self.label.as_deref().unwrap_or(&self.name)
    }
}

fn default_concurrency() -> usize {
    4
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodingConfig {
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_temperature() -> f64 {
    1.0
}

fn default_max_tokens() -> u32 {
    400
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self { temperature: default_temperature(), max_tokens: default_max_tokens() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryConfig {
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_base_delay")]
    pub base_delay_ms: u64,
    #[serde(default = "default_max_delay")]
    pub max_delay_ms: u64,
}

fn default_attempts() -> u32 {
    5
}
fn default_base_delay() -> u64 {
    1000
}
fn default_max_delay() -> u64 {
    30_000
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self {
            max_attempts: default_attempts(),
            base_delay_ms: default_base_delay(),
            max_delay_ms: default_max_delay(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockConfig {
    /// Default σ for `mock:anchor-noise` when the id carries none.
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    /// Script book for `mock:script`; the built-in book when absent.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

fn default_sigma() -> f64 {
    1.6
}

impl Default for MockConfig {
    fn default() -> Self {
        Self { noise_sigma: default_sigma(), script: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Provider used for snapshots, judge calls, and generated turns.
    #[serde(default = "default_sim_provider")]
    pub provider: String,
    #[serde(default = "default_agent_name")]
    pub agent_name: String,
    /// Token cap for generated turns.
    #[serde(default = "default_sim_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_true")]
    pub include_agent_turns: bool,
    #[serde(default = "default_capacity")]
    pub stm_capacity: usize,
    #[serde(default = "default_capacity")]
    pub snapshot_every: usize,
}

fn default_sim_provider() -> String {
    "mock:script".into()
}
fn default_agent_name() -> String {
    "Alex".into()
}
fn default_sim_tokens() -> u32 {
    80
}
fn default_true() -> bool {
    true
}
fn default_capacity() -> usize {
    20
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            provider: default_sim_provider(),
            agent_name: default_agent_name(),
            max_tokens: default_sim_tokens(),
            include_agent_turns: true,
            stm_capacity: default_capacity(),
            snapshot_every: default_capacity(),
        }
    }
}

/// Parameters of the threshold decision policy. These are calibration
/// values, not measured quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyConfig {
    #[serde(default = "default_base_rates")]
    pub base_rate: BTreeMap<TraitName, f64>,
    #[serde(default = "default_addressed")]
    pub addressed_bonus: f64,
    #[serde(default = "default_question")]
    pub question_bonus: f64,
    #[serde(default = "default_gap_weight")]
    pub gap_weight: f64,
    /// Messages since the agent's last turn at which the gap term saturates.
    #[serde(default = "default_gap_saturation")]
    pub gap_saturation: u32,
}

fn default_base_rates() -> BTreeMap<TraitName, f64> {
    BTreeMap::from([
        (TraitName::Extraversion, 0.30),
        (TraitName::Agreeableness, 0.25),
        (TraitName::Openness, 0.24),
        (TraitName::Conscientiousness, 0.23),
        (TraitName::Neuroticism, 0.20),
    ])
}
fn default_addressed() -> f64 {
    0.45
}
fn default_question() -> f64 {
    0.05
}
fn default_gap_weight() -> f64 {
    0.10
}
fn default_gap_saturation() -> u32 {
    12
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            base_rate: default_base_rates(),
            addressed_bonus: default_addressed(),
            question_bonus: default_question(),
            gap_weight: default_gap_weight(),
            gap_saturation: default_gap_saturation(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub templates: Option<PathBuf>,
    pub key_file: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub transcripts: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default = "default_runs")]
    pub runs_per_config: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, rename = "provider")]
    pub providers: Vec<ProviderConfig>,
    #[serde(default)]
    pub decoding: DecodingConfig,
    #[serde(default)]
    pub retry: RetryConfig,
    #[serde(default)]
    pub mocks: MockConfig,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub paths: PathsConfig,
}

fn default_runs() -> u32 {
    5
}

impl Config {
    /// The shipped configuration with the four hosted models.
    pub fn builtin() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG, "<builtin>").expect("builtin config is valid")
    }

    /// Mocks only; no network providers.
    pub fn mock_only() -> Self {
        Self::from_toml_str("[mocks]\n", "<mock-only>").expect("mock config is valid")
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    /// `path` if given, else `$PERSONA_ALIGN_CONFIG`, else the builtin.
    pub fn resolve(path: Option<&Path>) -> Result<Self, ConfigError> {
        match path {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::builtin()),
            },
        }
    }

    pub fn from_toml_str(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let meaningful = text.lines().map(str::trim).any(|l| !l.is_empty() && !l.starts_with('#'));
        if !meaningful {
            return Err(ConfigError::Empty(origin.to_string()));
        }
        let config: Config = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        if self.runs_per_config == 0 {
            return bad("runs_per_config must be >= 1".into());
        }
        if !(self.decoding.temperature >= 0.0) {
            return bad("decoding.temperature must be >= 0".into());
        }
        if self.decoding.max_tokens == 0 || self.simulation.max_tokens == 0 {
            return bad("max_tokens must be > 0".into());
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be >= 1".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.providers {
            if p.name.is_empty() || p.name.starts_with("mock:") {
                return bad(format!("provider name {:?} is reserved or empty", p.name));
            }
            if !seen.insert(p.name.as_str()) {
                return bad(format!("duplicate provider {}", p.name));
            }
            if p.max_concurrency == 0 {
                return bad(format!("provider {}: max_concurrency must be >= 1", p.name));
            }
        }
        if !(self.mocks.noise_sigma >= 0.0) {
            return bad("mocks.noise_sigma must be >= 0".into());
        }
        for (t, r) in &self.policy.base_rate {
            if !(0.0..=1.0).contains(r) {
                return bad(format!("policy.base_rate.{} must lie in [0, 1]", t.as_str()));
            }
        }
        if self.policy.gap_saturation == 0 {
            return bad("policy.gap_saturation must be >= 1".into());
        }
        if self.simulation.stm_capacity == 0 || self.simulation.snapshot_every == 0 {
            return bad("simulation window sizes must be >= 1".into());
        }
        Ok(())
    }

    pub fn provider(&self, name: &str) -> Option<&ProviderConfig> {
        self.providers.iter().find(|p| p.name == name)
    }
}
