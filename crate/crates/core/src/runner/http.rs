//! OpenAI-compatible chat-completions client.

use std::time::Duration;

use serde_json::{json, Value};

use super::config::HttpConfig;
use super::{Backend, BackendError};
use crate::{Error, PromptBundle, Result};

pub struct HttpChatBackend {
    label: String,
    config: HttpConfig,
    temperature: f64,
    api_key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for HttpChatBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatBackend")
            .field("label", &self.label)
            .field("endpoint", &self.config.endpoint)
            .field("model", &self.config.model)
            .finish_non_exhaustive()
    }
}

impl HttpChatBackend {
    /// Reads the bearer token from `config.api_key_env`; a missing variable is
    /// a configuration error, reported before any request is made.
    pub fn new(label: impl Into<String>, config: HttpConfig, temperature: f64) -> Result<Self> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            Error::Config(format!(
                "environment variable {} (api_key_env) is not set",
                config.api_key_env
            ))
        })?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(Self {
            label: label.into(),
            config,
            temperature,
            api_key,
            agent,
        })
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'))
    }
}

impl Backend for HttpChatBackend {
    fn label(&self) -> &str {
        &self.label
    }

    fn model(&self) -> &str {
        &self.config.model
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn complete(&self, bundle: &PromptBundle) -> std::result::Result<String, BackendError> {
        let mut body = json!({
            "model": self.config.model,
            "messages": [{"role": "user", "content": bundle.text}],
            "temperature": self.temperature,
        });
        if let Some(max) = self.config.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let mut resp = self
            .agent
            .post(&self.url())
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(&body)
            .map_err(|e| BackendError::retryable(format!("transport: {e}")))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::retryable(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(BackendError::retryable(format!("HTTP {status}: {}", snippet(&text))));
        }
        if !(200..300).contains(&status) {
            return Err(BackendError::fatal(format!("HTTP {status}: {}", snippet(&text))));
        }
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| BackendError::fatal(format!("response is not JSON: {e}")))?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_owned)
            .ok_or_else(|| BackendError::fatal("response has no choices[0].message.content"))
    }
}

fn snippet(s: &str) -> String {
    s.chars().take(200).collect()
}
