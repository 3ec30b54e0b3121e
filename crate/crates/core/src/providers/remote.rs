//! Blocking chat-completion client.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::templates::render;
use super::{
    record_network_request, Generated, GenerationRequest, Generator, PromptTemplates,
    ProviderError, Scorer,
};
use crate::config::RemoteConfig;
use crate::model::clamp_opinion;
use crate::rng::SimRng;

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
struct Permits {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Permits {
    fn new(n: usize) -> Self {
        Permits {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> PermitGuard<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        PermitGuard(self)
    }
}

struct PermitGuard<'a>(&'a Permits);

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct RemoteClient {
    agent: ureq::Agent,
    endpoint: String,
    api_key: Option<String>,
    model: String,
    max_attempts: usize,
    backoff_base: Duration,
    permits: Permits,
}

impl std::fmt::Debug for RemoteClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RemoteClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .finish_non_exhaustive()
    }
}

impl RemoteClient {
    /// The API key is read from the configured environment variable; an unset
    /// variable sends no authorization header.
    pub fn new(config: &RemoteConfig) -> Result<Self, ProviderError> {
        if config.endpoint.is_empty() {
            return Err(ProviderError::Config("remote endpoint is not set".into()));
        }
        if !(config.timeout_secs > 0.0) || config.max_attempts == 0 {
            return Err(ProviderError::Config(
                "timeout and attempts must be positive".into(),
            ));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .build()
            .into();
        Ok(RemoteClient {
            agent,
            endpoint: config.endpoint.clone(),
            api_key: std::env::var(&config.api_key_env).ok(),
            model: config.model.clone(),
            max_attempts: config.max_attempts,
            backoff_base: Duration::from_millis(config.backoff_base_ms),
            permits: Permits::new(config.max_in_flight),
        })
    }

    fn send_once(&self, body: &Value) -> Result<String, ProviderError> {
        let _permit = self.permits.acquire();
        record_network_request();
        let mut req = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let resp = req.send_json(body).map_err(classify)?;
        let text = resp.into_body().read_to_string().map_err(classify)?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Parse(e.to_string()))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| ProviderError::Parse("missing choices[0].message.content".into()))
    }

    /// Sends a two-turn chat and post-processes the reply with `parse`,
    /// retrying every failure kind with exponential backoff. The last error
    /// is returned once attempts are exhausted.
    pub fn chat<T>(
        &self,
        system: &str,
        user: &str,
        parse: impl Fn(&str) -> Result<T, ProviderError>,
    ) -> Result<T, ProviderError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let mut last = ProviderError::Network("no attempt made".into());
        for attempt in 0..self.max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff_base * (1u32 << (attempt - 1).min(16)));
            }
            match self.send_once(&body).and_then(|reply| parse(&reply)) {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
        }
        Err(last)
    }
}

fn classify(e: ureq::Error) -> ProviderError {
    match e {
        ureq::Error::Timeout(t) => ProviderError::Timeout(t.to_string()),
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => {
            ProviderError::Timeout(io.to_string())
        }
        other => ProviderError::Network(other.to_string()),
    }
}

/// Parses a reply that should be a single real number.
pub fn parse_score(reply: &str) -> Result<f64, ProviderError> {
    let trimmed = reply.trim().trim_matches(|c: char| c == '"' || c == '`');
    trimmed
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(clamp_opinion)
        .ok_or_else(|| ProviderError::Parse(format!("expected a number, got {reply:?}")))
}

pub struct RemoteGenerator {
    client: Arc<RemoteClient>,
    templates: PromptTemplates,
}

impl RemoteGenerator {
    pub fn new(client: Arc<RemoteClient>, templates: PromptTemplates) -> Self {
        RemoteGenerator { client, templates }
    }
}

fn bullet_list<'a>(items: impl Iterator<Item = &'a str>) -> String {
    let lines: Vec<String> = items.map(|s| format!("- {s}")).collect();
    if lines.is_empty() {
        "(none)".into()
    } else {
        lines.join("\n")
    }
}

impl Generator for RemoteGenerator {
    fn generate(
        &self,
        request: &GenerationRequest<'_>,
        _rng: &mut SimRng,
    ) -> Result<Generated, ProviderError> {
        let news = bullet_list(request.news.iter().map(String::as_str));
        let memories = bullet_list(request.memories.iter().map(|m| m.content.as_str()));
        let inbox = bullet_list(request.inbox.iter().map(|m| m.content.as_str()));
        let values = [
            ("persona", request.persona),
            ("topic", request.topic),
            ("news", news.as_str()),
            ("memories", memories.as_str()),
            ("inbox", inbox.as_str()),
        ];
        let system = render(&self.templates.persona, &values);
        let user = render(&self.templates.generate, &values);
        let text = self.client.chat(&system, &user, |reply| {
            let t = reply.trim();
            if t.is_empty() {
                Err(ProviderError::Parse("empty generation".into()))
            } else {
                Ok(t.to_string())
            }
        })?;
        Ok(Generated {
            text,
            intended_opinion: None,
        })
    }
}

pub struct RemoteScorer {
    client: Arc<RemoteClient>,
    system: String,
}

impl RemoteScorer {
    pub fn new(client: Arc<RemoteClient>, templates: PromptTemplates, topic: &str) -> Self {
        let system = render(&templates.score, &[("topic", topic)]);
        RemoteScorer { client, system }
    }
}

impl Scorer for RemoteScorer {
    fn score(&self, text: &str) -> Result<f64, ProviderError> {
        self.client.chat(&self.system, text, parse_score)
    }
}
