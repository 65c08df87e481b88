//! Chat-completion endpoints and evaluation runs.

#[cfg(feature = "http")]
mod http;
mod mock;
mod runner;

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ingest::Variety;
use crate::pairing::Side;
use crate::prompting::{PromptInstance, PromptVariant};

#[cfg(feature = "http")]
pub use http::{chat_request_body, HttpEndpoint};
pub use mock::{MockEndpoint, MockKind, MockParseError};
pub use runner::{run_eval, run_items, EvalItem, EvalRun, RunManifest};

/// Ground truth handed to mock endpoints. Never sent over the wire.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SideChannel {
    pub score: f64,
    pub variety: Variety,
}

/// Connection settings for an HTTP chat-completion endpoint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub name: String,
    pub base_url: String,
    /// Model identifier sent in the request body.
    pub model: String,
    pub auth_token_env_var: Option<String>,
    pub supports_system_role: bool,
    pub request_timeout: Duration,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub backoff_base: Duration,
}

impl EndpointConfig {
    pub fn new(name: impl Into<String>, base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            base_url: base_url.into(),
            model: model.into(),
            auth_token_env_var: None,
            supports_system_role: true,
            request_timeout: Duration::from_secs(60),
            max_retries: 3,
            backoff_base: Duration::from_millis(500),
        }
    }
}

/// One completion request's outcome. Exactly one of `raw_text` and
/// `transport_error` is set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub pair_id: String,
    pub side: Side,
    pub review_ref: String,
    pub variant: PromptVariant,
    pub raw_text: Option<String>,
    pub transport_error: Option<String>,
    pub attempt_count: u32,
    pub latency_ms: u64,
}

/// What an endpoint returns for one prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Completion {
    pub text: Result<String, String>,
    pub attempt_count: u32,
    pub latency: Duration,
}

impl Completion {
    pub fn immediate(text: impl Into<String>) -> Self {
        Self {
            text: Ok(text.into()),
            attempt_count: 1,
            latency: Duration::ZERO,
        }
    }
}

pub trait ModelEndpoint: Send + Sync {
    fn name(&self) -> &str;

    fn supports_system_role(&self) -> bool;

    fn complete(&self, prompt: &PromptInstance, truth: &SideChannel) -> Completion;
}

/// Sends one prompt and wraps the outcome with its keys.
pub fn complete(
    endpoint: &dyn ModelEndpoint,
    prompt: &PromptInstance,
    truth: &SideChannel,
    pair_id: &str,
    side: Side,
) -> CompletionResult {
    let prompt = prompt.clone().for_endpoint(endpoint.supports_system_role());
    let completion = endpoint.complete(&prompt, truth);
    let (raw_text, transport_error) = match completion.text {
        Ok(text) => (Some(text), None),
        Err(err) => (None, Some(err)),
    };
    CompletionResult {
        pair_id: pair_id.to_string(),
        side,
        review_ref: prompt.review_ref.clone(),
        variant: prompt.variant,
        raw_text,
        transport_error,
        attempt_count: completion.attempt_count,
        latency_ms: completion.latency.as_millis() as u64,
    }
}

/// `mock:*` specs build mocks; anything else is looked up in `defs`.
#[cfg(feature = "http")]
pub fn endpoint_from_spec(
    spec: &str,
    defs: &std::collections::BTreeMap<String, EndpointConfig>,
    tables: &std::sync::Arc<crate::script::CharSetTables>,
) -> Result<Box<dyn ModelEndpoint>, String> {
    if spec.starts_with("mock:") {
        return MockEndpoint::parse(spec, tables.clone())
            .map(|m| Box::new(m) as Box<dyn ModelEndpoint>)
            .map_err(|e| e.to_string());
    }
    let config = defs
        .get(spec)
        .ok_or_else(|| format!("no endpoint named {spec:?} in the config"))?;
    HttpEndpoint::new(config.clone())
        .map(|e| Box::new(e) as Box<dyn ModelEndpoint>)
        .map_err(|e| e.to_string())
}
