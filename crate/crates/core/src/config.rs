//! Pipeline configuration, loaded from TOML.

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{
    EndpointConfig, Gateway, GatewayError, MockBackend, ModelRole, OpenAiBackend, RetryPolicy,
};
use crate::segmentation::DEFAULT_TAU;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("missing config key `{0}`")]
    MissingKey(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error("cannot read config {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Mock,
    Openai,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: BackendKind,
    pub mock_table: Option<PathBuf>,
    pub media_url_template: String,
    pub timeout_s: u64,
    pub tau: f64,
    pub m_trials: u32,
    /// Inclusive difficulty band `[lo, hi]`.
    pub band: (f64, f64),
    pub target_rl_size: usize,
    pub seed: u64,
    pub parallelism: usize,
    /// Concurrent backend requests; defaults to `parallelism`.
    pub max_in_flight: Option<usize>,
    pub strict_parsing: bool,
    pub temperature: f64,
    pub trial_temperature: f64,
    pub max_tokens: u32,
    pub numeric_rel_tol: Option<f64>,
    pub state_dir: Option<PathBuf>,
    pub retry: RetryPolicy,
    pub mllm: Option<EndpointConfig>,
    pub llm: Option<EndpointConfig>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            backend: BackendKind::Mock,
            mock_table: None,
            media_url_template: "file:///videos/{video_id}.mp4".into(),
            timeout_s: 120,
            tau: DEFAULT_TAU,
            m_trials: 8,
            band: (0.2, 0.8),
            target_rl_size: 2000,
            seed: 0,
            parallelism: 4,
            max_in_flight: None,
            strict_parsing: true,
            temperature: 0.0,
            trial_temperature: 1.0,
            max_tokens: 1024,
            numeric_rel_tol: None,
            state_dir: None,
            retry: RetryPolicy::default(),
            mllm: None,
            llm: None,
        }
    }
}

fn invalid(key: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        reason: reason.into(),
    }
}

impl Config {
    /// Parses TOML; relative paths inside resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut config = Self::from_toml(&text).map_err(|e| match e {
            ConfigError::Read { reason, .. } => ConfigError::Read {
                path: path.to_path_buf(),
                reason,
            },
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.mock_table, &mut config.state_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: Config = toml::from_str(text).map_err(|e| ConfigError::Read {
            path: PathBuf::from("<inline>"),
            reason: e.to_string(),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(invalid("tau", format!("{} not in (0, 1]", self.tau)));
        }
        if self.m_trials < 1 {
            return Err(invalid("m_trials", "must be >= 1"));
        }
        let (lo, hi) = self.band;
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(invalid("band", format!("lo {lo} must be < hi {hi}")));
        }
        if self.parallelism < 1 {
            return Err(invalid("parallelism", "must be >= 1"));
        }
        if self.max_in_flight == Some(0) {
            return Err(invalid("max_in_flight", "must be >= 1"));
        }
        if self.target_rl_size < 1 {
            return Err(invalid("target_rl_size", "must be >= 1"));
        }
        if [self.temperature, self.trial_temperature]
            .iter()
            .any(|t| t.is_nan() || *t < 0.0)
        {
            return Err(invalid("temperature", "must be >= 0"));
        }
        if self.max_tokens == 0 {
            return Err(invalid("max_tokens", "must be > 0"));
        }
        if self.retry.max_attempts == 0 {
            return Err(invalid("retry.max_attempts", "must be >= 1"));
        }
        Ok(())
    }

    /// Builds the gateway for the configured backend, checking that every
    /// key needed by `roles` is present.
    pub fn gateway(&self, roles: &[ModelRole]) -> Result<Gateway, ConfigError> {
        self.validate()?;
        let backend: Box<dyn crate::gateway::ChatBackend> = match self.backend {
            BackendKind::Mock => {
                let path = self
                    .mock_table
                    .as_ref()
                    .ok_or_else(|| ConfigError::MissingKey("mock_table".into()))?;
                Box::new(
                    MockBackend::from_file(path)
                        .map_err(|e| invalid("mock_table", e.to_string()))?,
                )
            }
            BackendKind::Openai => {
                for role in roles {
                    let (name, endpoint) = match role {
                        ModelRole::Mllm => ("mllm", &self.mllm),
                        ModelRole::Llm => ("llm", &self.llm),
                    };
                    match endpoint {
                        None => return Err(ConfigError::MissingKey(format!("{name}.endpoint"))),
                        Some(e) if e.endpoint.is_empty() => {
                            return Err(ConfigError::MissingKey(format!("{name}.endpoint")))
                        }
                        Some(e) if e.model.is_empty() => {
                            return Err(ConfigError::MissingKey(format!("{name}.model")))
                        }
                        Some(_) => {}
                    }
                }
                Box::new(OpenAiBackend::from_env(
                    self.mllm.clone(),
                    self.llm.clone(),
                    self.media_url_template.clone(),
                    Duration::from_secs(self.timeout_s),
                )?)
            }
        };
        Ok(Gateway::new(
            backend,
            self.retry.clone(),
            self.max_in_flight.unwrap_or(self.parallelism),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = Config::from_toml("").unwrap();
        assert_eq!(c.m_trials, 8);
        assert_eq!(c.band, (0.2, 0.8));
        assert_eq!(c.target_rl_size, 2000);
        assert_eq!(c.tau, 0.85);
        assert!(c.strict_parsing);
    }

    #[test]
    fn invalid_values_name_the_key() {
        let err = Config::from_toml("band = [0.8, 0.2]").unwrap_err();
        assert!(err.to_string().contains("`band`"), "{err}");
        let err = Config::from_toml("m_trials = 0").unwrap_err();
        assert!(err.to_string().contains("m_trials"));
        assert!(Config::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn missing_backend_keys_are_named() {
        let c = Config::from_toml("backend = \"mock\"").unwrap();
        let err = c.gateway(&[ModelRole::Llm]).err().unwrap();
        assert_eq!(err.to_string(), "missing config key `mock_table`");

        let c = Config::from_toml(
            "backend = \"openai\"\n[llm]\nendpoint = \"http://x\"\nmodel = \"m\"\n",
        )
        .unwrap();
        let err = c.gateway(&[ModelRole::Llm, ModelRole::Mllm]).err().unwrap();
        assert_eq!(err.to_string(), "missing config key `mllm.endpoint`");
    }
}
