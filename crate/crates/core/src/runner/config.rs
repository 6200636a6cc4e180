use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    #[serde(alias = "http")]
    HttpChat,
    #[serde(alias = "sim")]
    Simulated,
}

/// Backend settings, normally read from a TOML file.
///
/// ```toml
/// kind = "http-chat"          # or "simulated"
/// temperature = 0.0
/// max_parallel = 4
/// cache_dir = "cache"
///
/// [retry]
/// max_attempts = 3
/// initial_backoff_ms = 1000
///
/// [http]
/// endpoint = "https://api.openai.com/v1"
/// model = "gpt-4o-mini"
/// api_key_env = "OPENAI_API_KEY"
///
/// [simulated]
/// p_merged_miscount = 0.5
/// p_atomic_slip = 0.02
/// seed = 0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    /// Defaults to `http-chat` or `simulated`.
    #[serde(default)]
    pub label: Option<String>,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "one")]
    pub max_parallel: usize,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default)]
    pub http: Option<HttpConfig>,
    #[serde(default)]
    pub simulated: Option<SimConfig>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles for each later attempt.
    pub initial_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 1000,
        }
    }
}

impl RetryPolicy {
    /// Sleep before attempt `attempt` (1-based; the first attempt never waits).
    pub fn backoff(&self, attempt: u32) -> std::time::Duration {
        if attempt <= 1 {
            return std::time::Duration::ZERO;
        }
        let factor = 1u64 << (attempt - 2).min(20);
        std::time::Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    /// Base URL; requests go to `{endpoint}/chat/completions`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub max_tokens: Option<u32>,
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".into()
}

fn default_timeout() -> u64 {
    120
}

/// Error model of the simulated solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimErrorModel {
    /// Chance that a token holding several units is undercounted.
    #[serde(default)]
    pub p_merged_miscount: f64,
    /// Chance of a ±1 slip on a single-unit token.
    #[serde(default)]
    pub p_atomic_slip: f64,
    /// Reasoning budget in unit-bearing tokens.
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_max_steps() -> usize {
    10_000
}

impl Default for SimErrorModel {
    fn default() -> Self {
        Self {
            p_merged_miscount: 0.0,
            p_atomic_slip: 0.0,
            max_steps: default_max_steps(),
        }
    }
}

impl SimErrorModel {
    pub fn noiseless() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_merged_miscount", self.p_merged_miscount),
            ("p_atomic_slip", self.p_atomic_slip),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} is outside [0, 1]")));
            }
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(flatten)]
    pub errors: SimErrorModel,
    #[serde(default)]
    pub seed: u64,
    /// Merges file; when absent a table is trained on the instances.
    #[serde(default)]
    pub merges: Option<PathBuf>,
    /// Instance file the bundles were rendered from.
    #[serde(default)]
    pub instances: Option<PathBuf>,
}

impl BackendConfig {
    pub fn simulated(errors: SimErrorModel, seed: u64) -> Self {
        Self {
            kind: BackendKind::Simulated,
            label: None,
            temperature: 0.0,
            max_parallel: 1,
            retry: RetryPolicy::default(),
            cache_dir: None,
            http: None,
            simulated: Some(SimConfig {
                errors,
                seed,
                ..SimConfig::default()
            }),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| Error::Config(format!("backend config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file. Relative paths inside it resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(dir) = self.cache_dir.as_mut() {
            fix(dir);
        }
        if let Some(sim) = self.simulated.as_mut() {
            sim.merges.as_mut().map(fix);
            sim.instances.as_mut().map(fix);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_parallel == 0 {
            return Err(Error::Config("max_parallel must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(Error::Config("retry.max_attempts must be at least 1".into()));
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return Err(Error::Config(format!(
                "temperature {} must be a non-negative number",
                self.temperature
            )));
        }
        match self.kind {
            BackendKind::HttpChat if self.http.is_none() => {
                return Err(Error::Config("http-chat backend needs an [http] section".into()))
            }
            BackendKind::Simulated => {
                if let Some(sim) = &self.simulated {
                    sim.errors.validate()?;
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            match self.kind {
                BackendKind::HttpChat => "http-chat",
                BackendKind::Simulated => "simulated",
            }
            .to_owned()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let cfg = BackendConfig::from_toml_str(
            r#"
kind = "http-chat"
max_parallel = 8
[retry]
max_attempts = 5
initial_backoff_ms = 10
[http]
endpoint = "http://localhost:1"
model = "m"
[simulated]
p_merged_miscount = 0.5
"#,
        )
        .unwrap();
        assert_eq!(cfg.kind, BackendKind::HttpChat);
        assert_eq!(cfg.temperature, 0.0);
        assert_eq!(cfg.http.unwrap().api_key_env, "OPENAI_API_KEY");
        assert_eq!(cfg.simulated.unwrap().errors.p_merged_miscount, 0.5);
        assert_eq!(cfg.retry.backoff(1).as_millis(), 0);
        assert_eq!(cfg.retry.backoff(3).as_millis(), 20);
    }

    #[test]
    fn defaults() {
        let r = RetryPolicy::default();
        assert_eq!((r.max_attempts, r.initial_backoff_ms), (3, 1000));
        assert_eq!(r.backoff(2).as_millis(), 1000);
        assert_eq!(r.backoff(3).as_millis(), 2000);
    }

    #[test]
    fn rejects_invalid() {
        assert!(BackendConfig::from_toml_str("kind = \"simulated\"\nmax_parallel = 0").is_err());
        assert!(BackendConfig::from_toml_str(
            "kind = \"simulated\"\n[simulated]\np_atomic_slip = 1.5"
        )
        .is_err());
        assert!(BackendConfig::from_toml_str("kind = \"http-chat\"").is_err());
        assert!(BackendConfig::from_toml_str("kind = \"carrier-pigeon\"").is_err());
        assert!(BackendConfig::from_toml_str(
            "kind = \"simulated\"\n[simulated]\nmax_steps = 0"
        )
        .is_err());
    }
}
