//! The single choke-point for LLM calls: prompt templating per stage,
//! structured-output parsing with bounded retries, and token accounting.
//!
//! Everything the pipeline asks of a model goes through [`Gateway::complete`]
//! with a [`StageKind`]; there is no other path to a backend, which is what
//! makes runs replayable and their cost auditable.

mod backend;
mod stage;
mod template;

use std::collections::BTreeMap;
use std::ops::{Add, AddAssign};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    sha256_hex, BackendReply, CallParams, FixtureRecord, LlmBackend, RecordingBackend,
    RemoteChat, RemoteChatConfig, RuleBackend, ScriptedBackend,
};
pub use stage::{
    parse_stage_output, CandidatePayload, QualifierPayload, StageKind, StageOutput,
    NOT_FINAL_SENTINEL, NO_MATCH_SENTINEL,
};

/// What kind of check the model's output failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputViolation {
    /// The response did not parse against the stage's output schema.
    Parse,
    /// The response parsed but a caller-supplied validator rejected it
    /// (typically an off-candidate selection).
    Validation,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("stage {stage}: variables are missing placeholder {name:?}")]
    MissingPlaceholder { stage: &'static str, name: String },
    #[error("stage {stage}: malformed output after {attempts} attempts ({reason}); last response: {last_response:?}")]
    MalformedOutput {
        stage: &'static str,
        attempts: u32,
        violation: OutputViolation,
        reason: String,
        last_response: String,
    },
    #[error("LLM backend transport failure (retryable): {message}")]
    Transport { message: String },
    #[error("stage {stage}: no scripted fixture for prompt sha256 {sha256}")]
    FixtureMiss { stage: &'static str, sha256: String },
    #[error("fixture file: {0}")]
    Fixture(String),
    #[error("unknown run {0:?}")]
    RunNotFound(String),
}

/// Token and call counters. Non-negative and additive by construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub calls: u64,
}

impl Add for LlmUsage {
    type Output = LlmUsage;

    fn add(self, other: LlmUsage) -> LlmUsage {
        LlmUsage {
            prompt_tokens: self.prompt_tokens + other.prompt_tokens,
            completion_tokens: self.completion_tokens + other.completion_tokens,
            calls: self.calls + other.calls,
        }
    }
}

impl AddAssign for LlmUsage {
    fn add_assign(&mut self, other: LlmUsage) {
        *self = *self + other;
    }
}

/// One backend call as recorded in the gateway's exchange log. Retries load
/// the log with one exchange per attempt.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmExchange {
    pub stage: StageKind,
    pub rendered_prompt: String,
    pub raw_response: String,
    /// Whether the response validated against the stage's output schema.
    pub parsed_ok: bool,
    pub usage: LlmUsage,
}

/// Usage aggregated per stage plus the grand total.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct UsageReport {
    pub per_stage: BTreeMap<String, LlmUsage>,
    pub total: LlmUsage,
}

impl UsageReport {
    fn record(&mut self, stage: StageKind, usage: LlmUsage) {
        *self.per_stage.entry(stage.name().to_string()).or_default() += usage;
        self.total += usage;
    }
}

/// Ledger of usage reports keyed by run id. Reports for unknown runs are an
/// error rather than silently empty.
#[derive(Debug, Default)]
pub struct UsageBook {
    runs: Mutex<BTreeMap<String, UsageReport>>,
}

impl UsageBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open_run(&self, run_id: &str) {
        self.runs.lock().unwrap().entry(run_id.to_string()).or_default();
    }

    pub fn record(&self, run_id: &str, stage: StageKind, usage: LlmUsage) {
        self.runs
            .lock()
            .unwrap()
            .entry(run_id.to_string())
            .or_default()
            .record(stage, usage);
    }

    pub fn usage_report(&self, run_id: &str) -> Result<UsageReport, LlmError> {
        self.runs
            .lock()
            .unwrap()
            .get(run_id)
            .cloned()
            .ok_or_else(|| LlmError::RunNotFound(run_id.to_string()))
    }
}

/// Gateway knobs. Temperature defaults to 0 for reproducibility and can be
/// overridden per stage.
#[derive(Debug, Clone)]
pub struct GatewayConfig {
    /// Maximum attempts per structured completion, including the first.
    pub retry_budget: u32,
    pub temperature: f32,
    pub stage_temperature: BTreeMap<StageKind, f32>,
    /// Extra in-context examples appended to a stage's prompt.
    pub stage_extras: BTreeMap<StageKind, String>,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            retry_budget: 3,
            temperature: 0.0,
            stage_temperature: BTreeMap::new(),
            stage_extras: BTreeMap::new(),
        }
    }
}

/// Appended to the prompt when the previous response failed to parse or
/// validate.
const CORRECTION_SUFFIX: &str =
    "Your previous output was not valid; emit only the requested structure.";

/// A parsed completion together with the usage it cost (all attempts).
#[derive(Debug, Clone)]
pub struct Completion {
    pub output: StageOutput,
    pub usage: LlmUsage,
}

fn whitespace_tokens(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// The LLM choke-point. One gateway instance serves one run; its exchange
/// log is the ground truth the usage report is summed from.
pub struct Gateway {
    backend: Arc<dyn LlmBackend>,
    config: GatewayConfig,
    exchanges: Mutex<Vec<LlmExchange>>,
    book: Option<(Arc<UsageBook>, String)>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn LlmBackend>, config: GatewayConfig) -> Self {
        Self { backend, config, exchanges: Mutex::new(Vec::new()), book: None }
    }

    /// Also mirror usage into `book` under `run_id`.
    pub fn with_usage_book(mut self, book: Arc<UsageBook>, run_id: impl Into<String>) -> Self {
        let run_id = run_id.into();
        book.open_run(&run_id);
        self.book = Some((book, run_id));
        self
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    /// Render the stage template, call the backend, and parse the response
    /// against the stage's output schema, re-prompting with a correction
    /// suffix on malformed output up to the retry budget.
    pub fn complete(
        &self,
        stage: StageKind,
        variables: &BTreeMap<String, String>,
    ) -> Result<Completion, LlmError> {
        self.complete_validated(stage, variables, |_| Ok(()))
    }

    /// Like [`Gateway::complete`], with an extra semantic validator folded
    /// into the retry loop (e.g. "the selection must come from the candidate
    /// list").
    pub fn complete_validated(
        &self,
        stage: StageKind,
        variables: &BTreeMap<String, String>,
        validate: impl Fn(&StageOutput) -> Result<(), String>,
    ) -> Result<Completion, LlmError> {
        let mut rendered = template::render(template::template_for(stage), variables)
            .map_err(|name| LlmError::MissingPlaceholder { stage: stage.name(), name })?;
        if let Some(extra) = self.config.stage_extras.get(&stage) {
            rendered.push_str("\n\n");
            rendered.push_str(extra);
        }

        let params = CallParams {
            temperature: self
                .config
                .stage_temperature
                .get(&stage)
                .copied()
                .unwrap_or(self.config.temperature),
        };

        let attempts = self.config.retry_budget.max(1);
        let mut prompt = rendered.clone();
        let mut usage_total = LlmUsage::default();
        let mut last_failure = (OutputViolation::Parse, String::new(), String::new());

        for attempt in 1..=attempts {
            let reply = self.backend.complete(stage, &prompt, &params)?;
            let usage = LlmUsage {
                prompt_tokens: reply.prompt_tokens.unwrap_or_else(|| whitespace_tokens(&prompt)),
                completion_tokens: reply
                    .completion_tokens
                    .unwrap_or_else(|| whitespace_tokens(&reply.text)),
                calls: 1,
            };
            usage_total += usage;

            let outcome = parse_stage_output(stage, &reply.text)
                .map_err(|reason| (OutputViolation::Parse, reason))
                .and_then(|output| match validate(&output) {
                    Ok(()) => Ok(output),
                    Err(reason) => Err((OutputViolation::Validation, reason)),
                });
            let parsed_ok = outcome.is_ok();
            self.log(LlmExchange {
                stage,
                rendered_prompt: prompt.clone(),
                raw_response: reply.text.clone(),
                parsed_ok,
                usage,
            });

            match outcome {
                Ok(output) => return Ok(Completion { output, usage: usage_total }),
                Err((violation, reason)) => {
                    last_failure = (violation, reason, reply.text);
                    if attempt < attempts {
                        prompt = format!("{rendered}\n\n{CORRECTION_SUFFIX}");
                    }
                }
            }
        }

        let (violation, reason, last_response) = last_failure;
        Err(LlmError::MalformedOutput {
            stage: stage.name(),
            attempts,
            violation,
            reason,
            last_response,
        })
    }

    fn log(&self, exchange: LlmExchange) {
        if let Some((book, run_id)) = &self.book {
            book.record(run_id, exchange.stage, exchange.usage);
        }
        self.exchanges.lock().unwrap().push(exchange);
    }

    /// A copy of the full exchange log, one entry per backend call.
    pub fn exchanges(&self) -> Vec<LlmExchange> {
        self.exchanges.lock().unwrap().clone()
    }

    /// Number of exchanges logged so far; pairs with [`Gateway::usage_since`]
    /// to attribute usage to a span of work.
    pub fn exchange_count(&self) -> usize {
        self.exchanges.lock().unwrap().len()
    }

    /// Usage summed over exchanges logged at or after `mark`.
    pub fn usage_since(&self, mark: usize) -> LlmUsage {
        self.exchanges
            .lock()
            .unwrap()
            .iter()
            .skip(mark)
            .fold(LlmUsage::default(), |acc, e| acc + e.usage)
    }

    /// Usage summed over the exchange log, per stage and total.
    pub fn usage_report(&self) -> UsageReport {
        let mut report = UsageReport::default();
        for exchange in self.exchanges.lock().unwrap().iter() {
            report.record(exchange.stage, exchange.usage);
        }
        report
    }
}
