//! Run configuration: a plain `key = value` file with flag overrides on top
//! (flags win). Secrets never live here; API tokens come from environment
//! variables only.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use thiserror::Error;

/// Environment variable holding the chat-endpoint bearer token.
pub const LLM_TOKEN_ENV: &str = "ONTOKG_LLM_TOKEN";
/// Environment variable holding the embeddings-endpoint bearer token.
pub const EMBED_TOKEN_ENV: &str = "ONTOKG_EMBED_TOKEN";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected `key = value`, got {content:?}")]
    Malformed { line: usize, content: String },
    #[error("unknown config key {0:?}")]
    UnknownKey(String),
    #[error("config key {key}: {message}")]
    BadValue { key: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which LLM backend a run uses. Exactly one.
#[derive(Debug, Clone, PartialEq)]
pub enum LlmChoice {
    Remote { endpoint: String, model: String },
    Scripted { fixtures: PathBuf },
}

/// Which embedder a run uses. Exactly one.
#[derive(Debug, Clone, PartialEq)]
pub enum EmbedderChoice {
    /// Deterministic offline hashed-3-gram embedder.
    Hash,
    Remote { endpoint: String, model: String, dimension: usize },
}

const KNOWN_KEYS: &[&str] = &[
    "ontology",
    "corpus",
    "out",
    "llm_backend",
    "llm_endpoint",
    "llm_model",
    "llm_fixtures",
    "llm_max_in_flight",
    "embedder",
    "embed_endpoint",
    "embed_model",
    "embed_dimension",
    "max_chunk_chars",
    "hop_k",
    "retry_budget",
    "temperature",
    "seed",
    "min_score",
    "unfiltered_link_fallback",
    "jobs",
];

/// Everything a pipeline run needs, resolved from file plus overrides.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub ontology: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub llm: LlmChoice,
    pub embedder: EmbedderChoice,
    pub max_chunk_chars: usize,
    pub hop_k: usize,
    pub retry_budget: u32,
    pub temperature: f32,
    /// Seed for bootstrap resampling only; the pipeline itself has no
    /// randomness.
    pub seed: u64,
    /// Optional minimum cosine score for retrieval candidates; off by
    /// default.
    pub min_score: Option<f32>,
    pub unfiltered_link_fallback: bool,
    pub jobs: usize,
    /// Cap on concurrent remote LLM requests; unlimited when absent.
    pub llm_max_in_flight: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            ontology: None,
            corpus: None,
            out: None,
            llm: LlmChoice::Remote {
                endpoint: "http://localhost:8000/v1/chat/completions".into(),
                model: "default".into(),
            },
            embedder: EmbedderChoice::Hash,
            max_chunk_chars: 2000,
            hop_k: 1,
            retry_budget: 3,
            temperature: 0.0,
            seed: 0,
            min_score: None,
            unfiltered_link_fallback: true,
            jobs: 1,
            llm_max_in_flight: None,
        }
    }
}

/// Parse the `key = value` file format: one pair per line, `#` comments,
/// blank lines ignored.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let content = std::fs::read_to_string(path)?;
    parse_config_str(&content)
}

pub fn parse_config_str(content: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut pairs = BTreeMap::new();
    for (index, raw) in content.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Malformed { line: index + 1, content: raw.to_string() });
        };
        let key = key.trim().to_string();
        if !KNOWN_KEYS.contains(&key.as_str()) {
            return Err(ConfigError::UnknownKey(key));
        }
        pairs.insert(key, value.trim().to_string());
    }
    Ok(pairs)
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_string(),
        message: e.to_string(),
    })
}

impl RunConfig {
    /// Resolve a config from an optional file and a list of overrides
    /// (typically CLI flags). Later sources win.
    pub fn resolve(
        file: Option<&Path>,
        overrides: &[(String, String)],
    ) -> Result<Self, ConfigError> {
        let mut pairs = match file {
            Some(path) => parse_config_file(path)?,
            None => BTreeMap::new(),
        };
        for (key, value) in overrides {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey(key.clone()));
            }
            pairs.insert(key.clone(), value.clone());
        }

        let mut config = RunConfig::default();
        let get = |key: &str| pairs.get(key).map(String::as_str);

        if let Some(value) = get("ontology") {
            config.ontology = Some(PathBuf::from(value));
        }
        if let Some(value) = get("corpus") {
            config.corpus = Some(PathBuf::from(value));
        }
        if let Some(value) = get("out") {
            config.out = Some(PathBuf::from(value));
        }
        if let Some(value) = get("max_chunk_chars") {
            config.max_chunk_chars = parse_num("max_chunk_chars", value)?;
        }
        if let Some(value) = get("hop_k") {
            config.hop_k = parse_num("hop_k", value)?;
        }
        if let Some(value) = get("retry_budget") {
            config.retry_budget = parse_num("retry_budget", value)?;
        }
        if let Some(value) = get("temperature") {
            config.temperature = parse_num("temperature", value)?;
        }
        if let Some(value) = get("seed") {
            config.seed = parse_num("seed", value)?;
        }
        if let Some(value) = get("min_score") {
            config.min_score = Some(parse_num("min_score", value)?);
        }
        if let Some(value) = get("unfiltered_link_fallback") {
            config.unfiltered_link_fallback = match value {
                "true" | "on" | "1" => true,
                "false" | "off" | "0" => false,
                other => {
                    return Err(ConfigError::BadValue {
                        key: "unfiltered_link_fallback".into(),
                        message: format!("expected true/false, got {other:?}"),
                    })
                }
            };
        }
        if let Some(value) = get("jobs") {
            config.jobs = parse_num("jobs", value)?;
        }
        if let Some(value) = get("llm_max_in_flight") {
            config.llm_max_in_flight = Some(parse_num("llm_max_in_flight", value)?);
        }

        match get("llm_backend") {
            None | Some("remote") => {
                let endpoint = get("llm_endpoint").unwrap_or_else(|| match &config.llm {
                    LlmChoice::Remote { endpoint, .. } => endpoint,
                    LlmChoice::Scripted { .. } => unreachable!("default is remote"),
                });
                let endpoint = endpoint.to_string();
                let model = get("llm_model").unwrap_or("default").to_string();
                config.llm = LlmChoice::Remote { endpoint, model };
            }
            Some("scripted") => {
                let fixtures = get("llm_fixtures").ok_or_else(|| ConfigError::BadValue {
                    key: "llm_fixtures".into(),
                    message: "required when llm_backend = scripted".into(),
                })?;
                config.llm = LlmChoice::Scripted { fixtures: PathBuf::from(fixtures) };
            }
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "llm_backend".into(),
                    message: format!("expected remote or scripted, got {other:?}"),
                })
            }
        }

        match get("embedder") {
            None | Some("hash") => config.embedder = EmbedderChoice::Hash,
            Some("remote") => {
                let endpoint = get("embed_endpoint").ok_or_else(|| ConfigError::BadValue {
                    key: "embed_endpoint".into(),
                    message: "required when embedder = remote".into(),
                })?;
                let dimension: usize = match get("embed_dimension") {
                    Some(value) => parse_num("embed_dimension", value)?,
                    None => {
                        return Err(ConfigError::BadValue {
                            key: "embed_dimension".into(),
                            message: "required when embedder = remote".into(),
                        })
                    }
                };
                config.embedder = EmbedderChoice::Remote {
                    endpoint: endpoint.to_string(),
                    model: get("embed_model").unwrap_or("default").to_string(),
                    dimension,
                };
            }
            Some(other) => {
                return Err(ConfigError::BadValue {
                    key: "embedder".into(),
                    message: format!("expected hash or remote, got {other:?}"),
                })
            }
        }

        Ok(config)
    }
}
