use std::sync::Arc;

use thiserror::Error;

use super::{Completion, ModelEndpoint, SideChannel};
use crate::ingest::Variety;
use crate::pairing::{round_score, sentiment_class};
use crate::prompting::{fnv1a64, PromptInstance, PromptVariant};
use crate::script::CharSetTables;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown mock endpoint {0:?}")]
pub struct MockParseError(pub String);

/// Deterministic stand-in models.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockKind {
    /// Returns the true rating (or sentiment label for sentiment prompts).
    Echo,
    /// Always returns `k`.
    Constant(u8),
    /// Echo, but off by `offset` for one variety. Predictions that would
    /// leave 1..=10 are reflected to the other side of the truth, so the
    /// error is always exactly `offset`.
    Biased { variety: Variety, offset: u8 },
    /// Echo, but off by `offset` when the prompt contains any
    /// traditional-only character.
    ScriptBiased { offset: u8 },
    /// Echo for most prompts; a fixed hash of the review id selects an
    /// explanation, an out-of-range number, an empty reply or a transport
    /// failure for the rest.
    Noisy,
    /// Every request fails at the transport level.
    Unreachable,
}

#[derive(Debug, Clone)]
pub struct MockEndpoint {
    name: String,
    kind: MockKind,
    supports_system_role: bool,
    tables: Arc<CharSetTables>,
}

fn shifted(truth: u8, offset: u8) -> u8 {
    let up = truth as i32 + offset as i32;
    if up <= 10 {
        up as u8
    } else {
        (truth as i32 - offset as i32).max(1) as u8
    }
}

impl MockEndpoint {
    pub fn new(kind: MockKind, tables: Arc<CharSetTables>) -> Self {
        let name = match &kind {
            MockKind::Echo => "mock:echo".to_string(),
            MockKind::Constant(k) => format!("mock:constant-{k}"),
            MockKind::Biased { variety, offset } => {
                format!("mock:biased-{}-{offset}", variety.as_str().to_ascii_lowercase())
            }
            MockKind::ScriptBiased { offset } => format!("mock:script-biased-{offset}"),
            MockKind::Noisy => "mock:noisy".to_string(),
            MockKind::Unreachable => "mock:unreachable".to_string(),
        };
        Self {
            name,
            kind,
            supports_system_role: true,
            tables,
        }
    }

    pub fn without_system_role(mut self) -> Self {
        self.supports_system_role = false;
        self
    }

    /// Parses `mock:echo`, `mock:constant-<k>`, `mock:biased-<tw|cn>[-<offset>]`,
    /// `mock:script-biased[-<offset>]`, `mock:noisy` and `mock:unreachable`.
    /// A `+nosys` suffix disables the system role.
    pub fn parse(spec: &str, tables: Arc<CharSetTables>) -> Result<Self, MockParseError> {
        let err = || MockParseError(spec.to_string());
        let body = spec.strip_prefix("mock:").ok_or_else(err)?;
        let (body, nosys) = match body.strip_suffix("+nosys") {
            Some(b) => (b, true),
            None => (body, false),
        };
        let offset = |s: Option<&str>| -> Result<u8, MockParseError> {
            match s {
                None => Ok(1),
                Some(s) => s.parse::<u8>().ok().filter(|o| (1..=9).contains(o)).ok_or_else(err),
            }
        };
        let kind = match body {
            "echo" | "echo-score" | "echo-sentiment" => MockKind::Echo,
            "noisy" => MockKind::Noisy,
            "unreachable" => MockKind::Unreachable,
            _ => {
                if let Some(k) = body.strip_prefix("constant-") {
                    let k = k.parse::<u8>().map_err(|_| err())?;
                    MockKind::Constant(k)
                } else if let Some(rest) = body.strip_prefix("script-biased") {
                    MockKind::ScriptBiased {
                        offset: offset(rest.strip_prefix('-'))?,
                    }
                } else if let Some(rest) = body.strip_prefix("biased-") {
                    let (v, o) = match rest.split_once('-') {
                        Some((v, o)) => (v, Some(o)),
                        None => (rest, None),
                    };
                    let variety = match v {
                        "tw" => Variety::TW,
                        "cn" => Variety::CN,
                        _ => return Err(err()),
                    };
                    MockKind::Biased {
                        variety,
                        offset: offset(o)?,
                    }
                } else {
                    return Err(err());
                }
            }
        };
        let mut mock = Self::new(kind, tables);
        mock.name = spec.to_string();
        if nosys {
            mock = mock.without_system_role();
        }
        Ok(mock)
    }

    pub fn kind(&self) -> &MockKind {
        &self.kind
    }

    fn answer(&self, prompt: &PromptInstance, rating: u8, truth: &SideChannel) -> String {
        if prompt.variant == PromptVariant::Sentiment {
            return match sentiment_class(truth.score) {
                Ok(class) => class.label().to_string(),
                Err(_) => "unknown".to_string(),
            };
        }
        rating.to_string()
    }
}

impl ModelEndpoint for MockEndpoint {
    fn name(&self) -> &str {
        &self.name
    }

    fn supports_system_role(&self) -> bool {
        self.supports_system_role
    }

    fn complete(&self, prompt: &PromptInstance, truth: &SideChannel) -> Completion {
        let rating = round_score(truth.score).unwrap_or(1);
        let text = match &self.kind {
            MockKind::Echo => self.answer(prompt, rating, truth),
            MockKind::Constant(k) => k.to_string(),
            MockKind::Biased { variety, offset } => {
                if truth.variety == *variety {
                    shifted(rating, *offset).to_string()
                } else {
                    self.answer(prompt, rating, truth)
                }
            }
            MockKind::ScriptBiased { offset } => {
                if self.tables.contains_traditional_only(&prompt.user_text) {
                    shifted(rating, *offset).to_string()
                } else {
                    self.answer(prompt, rating, truth)
                }
            }
            MockKind::Noisy => match fnv1a64(prompt.review_ref.as_bytes()) % 10 {
                0 => format!("The score is {rating}"),
                1 => "11".to_string(),
                2 => String::new(),
                3 => {
                    return Completion {
                        text: Err("simulated connection reset".to_string()),
                        attempt_count: 3,
                        latency: std::time::Duration::ZERO,
                    }
                }
                _ => self.answer(prompt, rating, truth),
            },
            MockKind::Unreachable => {
                return Completion {
                    text: Err("simulated unreachable host".to_string()),
                    attempt_count: 1,
                    latency: std::time::Duration::ZERO,
                }
            }
        };
        Completion::immediate(text)
    }
}
