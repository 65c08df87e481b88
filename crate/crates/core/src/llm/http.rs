use std::time::Instant;

use serde_json::{json, Value};

use super::{Completion, EndpointConfig, ModelEndpoint, SideChannel};
use crate::prompting::PromptInstance;

/// OpenAI-style `POST {base_url}/chat/completions` client.
#[derive(Debug, Clone)]
pub struct HttpEndpoint {
    config: EndpointConfig,
    client: reqwest::blocking::Client,
}

/// Request body: model, messages and temperature pinned to zero.
pub fn chat_request_body(model: &str, prompt: &PromptInstance) -> Value {
    let mut messages = Vec::new();
    if let Some(system) = &prompt.system_text {
        messages.push(json!({"role": "system", "content": system}));
    }
    messages.push(json!({"role": "user", "content": prompt.user_text}));
    json!({
        "model": model,
        "messages": messages,
        "temperature": 0,
    })
}

enum Attempt {
    Done(String),
    Fatal(String),
    Retry(String),
}

impl HttpEndpoint {
    pub fn new(config: EndpointConfig) -> Result<Self, reqwest::Error> {
        let client = reqwest::blocking::Client::builder()
            .timeout(config.request_timeout)
            .build()?;
        Ok(Self { config, client })
    }

    pub fn config(&self) -> &EndpointConfig {
        &self.config
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'))
    }

    fn attempt(&self, body: &Value) -> Attempt {
        let mut request = self.client.post(self.url()).json(body);
        if let Some(var) = &self.config.auth_token_env_var {
            if let Ok(token) = std::env::var(var) {
                request = request.bearer_auth(token);
            }
        }
        let response = match request.send() {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Attempt::Retry(e.to_string()),
        };
        if !status.is_success() {
            let message = format!("HTTP {}: {}", status.as_u16(), text);
            return if status.is_server_error() || status.as_u16() == 429 {
                Attempt::Retry(message)
            } else {
                Attempt::Fatal(message)
            };
        }
        let content = serde_json::from_str::<Value>(&text)
            .ok()
            .and_then(|v| v["choices"][0]["message"]["content"].as_str().map(str::to_string));
        match content {
            Some(c) => Attempt::Done(c),
            None => Attempt::Fatal(format!("malformed completion body: {text}")),
        }
    }
}

impl ModelEndpoint for HttpEndpoint {
    fn name(&self) -> &str {
        &self.config.name
    }

    fn supports_system_role(&self) -> bool {
        self.config.supports_system_role
    }

    fn complete(&self, prompt: &PromptInstance, _truth: &SideChannel) -> Completion {
        let body = chat_request_body(&self.config.model, prompt);
        let start = Instant::now();
        let mut attempts = 0;
        let text = loop {
            attempts += 1;
            match self.attempt(&body) {
                Attempt::Done(text) => break Ok(text),
                Attempt::Fatal(err) => break Err(err),
                Attempt::Retry(err) if attempts > self.config.max_retries => break Err(err),
                Attempt::Retry(_) => {
                    let factor = 1u32 << (attempts - 1).min(16);
                    std::thread::sleep(self.config.backoff_base.saturating_mul(factor));
                }
            }
        };
        Completion {
            text,
            attempt_count: attempts,
            latency: start.elapsed(),
        }
    }
}
