//! HTTP client for chat-completion endpoints that report first-token
//! top-logprob alternatives (`choices[0].logprobs.content[0].top_logprobs`).

use std::thread;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Completion, CompletionRequest, TokenLogprob};
use crate::error::{Error, Result};

pub const DEFAULT_ENDPOINT_ENV: &str = "TABPROBE_ENDPOINT";
pub const DEFAULT_API_KEY_ENV: &str = "TABPROBE_API_KEY";

/// Remote backend settings as written in a run configuration. Secrets are
/// named by environment variable, never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteSettings {
    pub model: String,
    #[serde(default = "default_endpoint_env")]
    pub endpoint_env: String,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub base_backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_endpoint_env() -> String {
    DEFAULT_ENDPOINT_ENV.into()
}
fn default_api_key_env() -> String {
    DEFAULT_API_KEY_ENV.into()
}
fn default_attempts() -> u32 {
    5
}
fn default_backoff_ms() -> u64 {
    500
}
fn default_timeout_secs() -> u64 {
    60
}

impl RemoteSettings {
    pub fn resolve(&self) -> Result<RemoteConfig> {
        let endpoint = std::env::var(&self.endpoint_env).map_err(|_| {
            Error::Config(format!("environment variable {} is not set", self.endpoint_env))
        })?;
        let api_key = std::env::var(&self.api_key_env)
            .map_err(|_| Error::Auth(format!("environment variable {} is not set", self.api_key_env)))?;
        Ok(RemoteConfig {
            endpoint,
            api_key,
            model: self.model.clone(),
            max_attempts: self.max_attempts.max(1),
            base_backoff: Duration::from_millis(self.base_backoff_ms),
            timeout: Duration::from_secs(self.timeout_secs),
        })
    }
}

#[derive(Debug, Clone)]
pub struct RemoteConfig {
    pub endpoint: String,
    pub api_key: String,
    pub model: String,
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub timeout: Duration,
}

pub struct RemoteClient {
    config: RemoteConfig,
    agent: ureq::Agent,
}

enum Attempt {
    Done(Completion),
    Retry(Error),
}

impl RemoteClient {
    pub fn new(config: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(config.timeout))
            .build()
            .into();
        RemoteClient { config, agent }
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    /// Sends the request, retrying 429, 5xx, and transport failures with
    /// exponential backoff.
    pub fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let body = request_body(request);
        let mut last = None;
        for attempt in 0..self.config.max_attempts {
            if attempt > 0 {
                let delay = self.config.base_backoff * 2u32.saturating_pow(attempt - 1);
                thread::sleep(delay);
            }
            match self.attempt(&body, request)? {
                Attempt::Done(c) => return Ok(c),
                Attempt::Retry(e) => {
                    warn!("attempt {} of {} failed: {e}", attempt + 1, self.config.max_attempts);
                    last = Some(e);
                }
            }
        }
        Err(match last {
            Some(Error::Http { status: 429, .. }) => Error::RateLimitExhausted {
                attempts: self.config.max_attempts,
            },
            Some(e) => e,
            None => Error::Transport("no attempts made".into()),
        })
    }

    fn attempt(&self, body: &Value, request: &CompletionRequest) -> Result<Attempt> {
        let response = self
            .agent
            .post(&self.config.endpoint)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body);
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Ok(Attempt::Retry(Error::Transport(e.to_string()))),
        };
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Error::Transport(e.to_string()));
        match status {
            200..=299 => parse_response(&text?, request.top_logprobs.is_some()).map(Attempt::Done),
            401 | 403 => Err(Error::Auth(format!("HTTP {status}"))),
            429 | 500..=599 => Ok(Attempt::Retry(Error::Http {
                status,
                body: text.unwrap_or_default(),
            })),
            _ => Err(Error::Http {
                status,
                body: text.unwrap_or_default(),
            }),
        }
    }
}

pub(crate) fn request_body(request: &CompletionRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "messages": [
            {"role": "system", "content": request.messages.system},
            {"role": "user", "content": request.messages.user},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "logprobs": request.top_logprobs.is_some(),
    });
    if let Some(k) = request.top_logprobs {
        body["top_logprobs"] = json!(k);
    }
    body
}

pub(crate) fn parse_response(text: &str, want_logprobs: bool) -> Result<Completion> {
    let v: Value =
        serde_json::from_str(text).map_err(|e| Error::MalformedResponse(format!("invalid JSON: {e}")))?;
    let choice = v
        .pointer("/choices/0")
        .ok_or_else(|| Error::MalformedResponse("no choices".into()))?;
    let content = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let top = choice.pointer("/logprobs/content/0/top_logprobs").and_then(Value::as_array);
    let logprobs = match (top, want_logprobs) {
        (Some(items), _) => items
            .iter()
            .map(|item| {
                let token = item.get("token").and_then(Value::as_str);
                let logprob = item.get("logprob").and_then(Value::as_f64);
                match (token, logprob) {
                    (Some(t), Some(lp)) => Ok(TokenLogprob {
                        token: t.to_string(),
                        logprob: lp,
                    }),
                    _ => Err(Error::MalformedResponse("bad top_logprobs entry".into())),
                }
            })
            .collect::<Result<Vec<_>>>()?,
        (None, true) => return Err(Error::MalformedResponse("missing logprobs".into())),
        (None, false) => Vec::new(),
    };
    if want_logprobs && logprobs.is_empty() {
        return Err(Error::MalformedResponse("empty top_logprobs".into()));
    }
    Completion::new(content, logprobs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_openai_shape() {
        let body = r#"{"choices":[{"message":{"content":"A"},
            "logprobs":{"content":[{"token":"A","logprob":-0.1,
              "top_logprobs":[{"token":"B","logprob":-2.3},{"token":"A","logprob":-0.1}]}]}}]}"#;
        let c = parse_response(body, true).unwrap();
        assert_eq!(c.text, "A");
        assert_eq!(c.first_token_logprobs[0].token, "A");
        assert_eq!(c.first_token_logprobs[1].logprob, -2.3);
    }

    #[test]
    fn missing_logprobs_is_malformed() {
        let body = r#"{"choices":[{"message":{"content":"A"}}]}"#;
        assert!(matches!(parse_response(body, true), Err(Error::MalformedResponse(_))));
        assert!(parse_response(body, false).is_ok());
        assert!(matches!(parse_response("{}", false), Err(Error::MalformedResponse(_))));
    }

    #[test]
    fn body_carries_logprob_fields() {
        let req = CompletionRequest {
            model: "gpt".into(),
            messages: crate::prompt::PromptMessages {
                system: "s".into(),
                user: "u".into(),
            },
            temperature: 0.0,
            max_tokens: 8,
            top_logprobs: Some(20),
        };
        let b = request_body(&req);
        assert_eq!(b["logprobs"], json!(true));
        assert_eq!(b["top_logprobs"], json!(20));
        assert_eq!(b["messages"][0]["role"], json!("system"));
    }
}
