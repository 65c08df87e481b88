//! Flat `key = value` configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Keys may repeat only
//! if they are meant to; here they never are, so a repeated key is an error.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::Duration;

use thiserror::Error;

use crate::llm::EndpointConfig;
use crate::mt::TranslationDirection;
use crate::pairing::{ClassBoundaries, PairingConfig};
use crate::prompting::PromptVariant;
use crate::script::Subset;
use crate::textstats::LengthConfig;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("key {0:?} given twice")]
    Duplicate(String),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("bad value for {key}: {value:?} ({reason})")]
    Invalid {
        key: String,
        value: String,
        reason: String,
    },
}

pub fn parse_kv(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: i + 1,
            text: raw.to_string(),
        })?;
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        if map.insert(key.to_string(), value.trim().to_string()).is_some() {
            return Err(ConfigError::Duplicate(key.to_string()));
        }
    }
    Ok(map)
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value.parse().map_err(|_| invalid(key, value, "not a number"))
}

fn boolean(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(key, value, "expected true or false")),
    }
}

/// Everything `run` needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub field_map: Option<PathBuf>,
    /// Directory of character-set tables; bundled tables when absent.
    pub charsets: Option<PathBuf>,
    pub seed: u64,
    pub boundaries: ClassBoundaries,
    pub length: LengthConfig,
    /// `mock:*` specs or names of `endpoint.<name>.*` definitions.
    pub endpoints: Vec<String>,
    pub variants: Vec<PromptVariant>,
    pub subsets: Vec<Subset>,
    pub parallelism: usize,
    pub endpoint_defs: BTreeMap<String, EndpointConfig>,
    /// Endpoint for the translation experiment; skipped when absent.
    pub mt_endpoint: Option<String>,
    pub mt_translator: String,
    pub mt_directions: Vec<TranslationDirection>,
    /// Endpoint for the length sweep; skipped when absent.
    pub sweep_endpoint: Option<String>,
    pub sweep_quota: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            output_dir: PathBuf::from("out"),
            field_map: None,
            charsets: None,
            seed: 0,
            boundaries: ClassBoundaries::default(),
            length: LengthConfig::default(),
            endpoints: vec!["mock:echo-score".to_string()],
            variants: PromptVariant::RATING.to_vec(),
            subsets: Subset::ALL.to_vec(),
            parallelism: 4,
            endpoint_defs: BTreeMap::new(),
            mt_endpoint: None,
            mt_translator: "mock:identity".to_string(),
            mt_directions: TranslationDirection::BOTH.to_vec(),
            sweep_endpoint: None,
            sweep_quota: 200,
        }
    }
}

impl RunConfig {
    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut config = Self::default();
        config.apply(&parse_kv(text)?)?;
        Ok(config)
    }

    /// Applies overrides on top of the current values. Used for the file
    /// first and then for command-line `--set key=value` pairs.
    pub fn apply(&mut self, kv: &BTreeMap<String, String>) -> Result<(), ConfigError> {
        for (key, value) in kv {
            if let Some(rest) = key.strip_prefix("endpoint.") {
                self.apply_endpoint(key, rest, value)?;
                continue;
            }
            match key.as_str() {
                "input" | "inputs" => self.inputs = list(value).into_iter().map(PathBuf::from).collect(),
                "output" | "output_dir" => self.output_dir = PathBuf::from(value),
                "field_map" => self.field_map = Some(PathBuf::from(value)),
                "charsets" => self.charsets = Some(PathBuf::from(value)),
                "seed" => self.seed = number(key, value)?,
                "negative_max" => self.boundaries.negative_max = number(key, value)?,
                "neutral_max" => self.boundaries.neutral_max = number(key, value)?,
                "bin_width" => self.length.bin_width = number(key, value)?,
                "max_len" => self.length.max_len = number(key, value)?,
                "short_max" => self.length.short_max = number(key, value)?,
                "parallelism" => self.parallelism = number(key, value)?,
                "endpoints" | "models" => self.endpoints = list(value),
                "variants" => {
                    self.variants = list(value)
                        .iter()
                        .map(|v| PromptVariant::parse_rating(v).ok_or_else(|| invalid(key, v, "unknown variant")))
                        .collect::<Result<_, _>>()?
                }
                "subsets" => {
                    self.subsets = list(value)
                        .iter()
                        .map(|v| Subset::parse(v).ok_or_else(|| invalid(key, v, "unknown subset")))
                        .collect::<Result<_, _>>()?
                }
                "mt_endpoint" => self.mt_endpoint = Some(value.clone()).filter(|v| !v.is_empty()),
                "mt_translator" => self.mt_translator = value.clone(),
                "mt_directions" => {
                    self.mt_directions = list(value)
                        .iter()
                        .map(|v| TranslationDirection::parse(v).ok_or_else(|| invalid(key, v, "unknown direction")))
                        .collect::<Result<_, _>>()?
                }
                "sweep_endpoint" => self.sweep_endpoint = Some(value.clone()).filter(|v| !v.is_empty()),
                "sweep_quota" => self.sweep_quota = number(key, value)?,
                _ => return Err(ConfigError::UnknownKey(key.clone())),
            }
        }
        self.validate()
    }

    fn apply_endpoint(&mut self, key: &str, rest: &str, value: &str) -> Result<(), ConfigError> {
        let (name, field) = rest
            .rsplit_once('.')
            .ok_or_else(|| ConfigError::UnknownKey(key.to_string()))?;
        let def = self
            .endpoint_defs
            .entry(name.to_string())
            .or_insert_with(|| EndpointConfig::new(name, "", name));
        match field {
            "base_url" => def.base_url = value.trim_end_matches('/').to_string(),
            "model" => def.model = value.to_string(),
            "auth_token_env_var" => def.auth_token_env_var = Some(value.to_string()),
            "supports_system_role" => def.supports_system_role = boolean(key, value)?,
            "request_timeout_ms" => def.request_timeout = Duration::from_millis(number(key, value)?),
            "max_retries" => def.max_retries = number(key, value)?,
            "backoff_ms" => def.backoff_base = Duration::from_millis(number(key, value)?),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    fn validate(&self) -> Result<(), ConfigError> {
        let b = self.boundaries;
        if !(1 <= b.negative_max && b.negative_max < b.neutral_max && b.neutral_max < 10) {
            return Err(invalid(
                "neutral_max",
                &format!("{}/{}", b.negative_max, b.neutral_max),
                "need 1 <= negative_max < neutral_max < 10",
            ));
        }
        if self.length.bin_width == 0 {
            return Err(invalid("bin_width", "0", "must be positive"));
        }
        if self.parallelism == 0 {
            return Err(invalid("parallelism", "0", "must be at least 1"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for e in &self.endpoints {
            if !seen.insert(e) {
                return Err(invalid("endpoints", e, "endpoint listed twice"));
            }
        }
        Ok(())
    }

    pub fn pairing(&self) -> PairingConfig {
        PairingConfig {
            boundaries: self.boundaries,
            length: self.length,
        }
    }

    /// Canonical `key = value` text of the scalar settings, for manifests.
    pub fn to_kv_text(&self) -> String {
        let join = |items: Vec<&str>| items.join(",");
        let mut lines = vec![
            format!("bin_width = {}", self.length.bin_width),
            format!("endpoints = {}", self.endpoints.join(",")),
            format!("max_len = {}", self.length.max_len),
            format!("mt_directions = {}", join(self.mt_directions.iter().map(|d| d.as_str()).collect())),
            format!("mt_endpoint = {}", self.mt_endpoint.clone().unwrap_or_default()),
            format!("mt_translator = {}", self.mt_translator),
            format!("negative_max = {}", self.boundaries.negative_max),
            format!("neutral_max = {}", self.boundaries.neutral_max),
            format!("seed = {}", self.seed),
            format!("short_max = {}", self.length.short_max),
            format!("subsets = {}", join(self.subsets.iter().map(|s| s.as_str()).collect())),
            format!("sweep_endpoint = {}", self.sweep_endpoint.clone().unwrap_or_default()),
            format!("sweep_quota = {}", self.sweep_quota),
            format!("variants = {}", join(self.variants.iter().map(|v| v.as_str()).collect())),
        ];
        lines.push(String::new());
        lines.join("\n")
    }
}
