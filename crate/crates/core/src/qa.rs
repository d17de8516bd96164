//! Multi-hop question answering over the constructed graph only, plus the
//! normalization- and alias-aware answer scoring.
//!
//! The loop decomposes a question into 1-hop subquestions; each step links
//! question entities into the store, retrieves their neighborhood, answers
//! from that subgraph alone, and checks whether the original question is
//! resolved. No source text ever reaches the answering stage: its inputs are
//! the subquestion and a rendered subgraph, nothing else.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgError, KgStore, Subgraph};
use crate::llm::{Completion, Gateway, LlmError, StageKind, StageOutput};

/// Marker recorded when a step produced no usable answer.
pub const UNKNOWN_MARKER: &str = "unknown";

/// Hard cap on reasoning steps per question.
pub const MAX_STEPS: usize = 5;

#[derive(Debug, Error)]
pub enum QaError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone)]
pub struct QaConfig {
    /// Neighborhood radius for step retrieval.
    pub hop_k: usize,
    /// Candidate list size for entity linking.
    pub link_candidates: usize,
    /// Optional minimum cosine score for linking candidates; off by default.
    pub min_link_score: Option<f32>,
}

impl Default for QaConfig {
    fn default() -> Self {
        Self { hop_k: 1, link_candidates: 10, min_link_score: None }
    }
}

/// One reasoning step of a trace.
#[derive(Debug, Clone, Serialize)]
pub struct QaStep {
    pub subquestion: String,
    pub extracted_mentions: Vec<String>,
    pub linked_entities: Vec<EntityId>,
    pub retrieved: Subgraph,
    /// Verbatim subanswer, or `None` when the step came back unknown.
    pub subanswer: Option<String>,
}

/// Full audit record of one answered question.
#[derive(Debug, Clone, Serialize)]
pub struct QaTrace {
    pub question: String,
    pub steps: Vec<QaStep>,
    pub final_answer: String,
    /// Set when any step fell back after a gateway failure.
    pub degraded: bool,
}

/// A QA dataset record: newline-delimited in files. `question_entities` is
/// only required by coverage analysis.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QaDatasetRecord {
    pub id: String,
    pub question: String,
    pub answers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question_entities: Option<Vec<String>>,
}

/// Render a subgraph as one fact per line: `subject — relation — object`,
/// qualifiers appended as `(relation: object; ...)`. Lines are sorted so the
/// rendering is a pure function of the subgraph.
pub fn render_subgraph(subgraph: &Subgraph) -> String {
    if subgraph.triplets.is_empty() {
        return "(no facts retrieved)".to_string();
    }
    let mut lines: Vec<String> = subgraph
        .triplets
        .iter()
        .map(|t| {
            let subject = &subgraph.entities[&t.subject_id].canonical_label;
            let object = &subgraph.entities[&t.object_id].canonical_label;
            let mut line = format!("{subject} — {} — {object}", t.relation.display_label());
            if !t.qualifiers.is_empty() {
                let qualifiers: Vec<String> =
                    t.qualifiers.iter().map(|q| format!("{}: {}", q.relation, q.object)).collect();
                line.push_str(&format!(" ({})", qualifiers.join("; ")));
            }
            line
        })
        .collect();
    lines.sort();
    lines.dedup();
    lines.join("\n")
}

/// Render the subquestion/answer history for decomposition and final-check
/// prompts.
fn render_history(steps: &[QaStep]) -> String {
    if steps.is_empty() {
        return "(none yet)".to_string();
    }
    steps
        .iter()
        .map(|step| {
            format!(
                "{} → {}",
                step.subquestion,
                step.subanswer.as_deref().unwrap_or(UNKNOWN_MARKER)
            )
        })
        .collect::<Vec<String>>()
        .join("\n")
}

fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

/// Splits gateway failures into "degrade and continue" (the loop's contract:
/// it never aborts on model content) and harness-level errors that must
/// surface.
fn degradable(error: LlmError) -> Result<(), QaError> {
    match error {
        LlmError::MalformedOutput { .. } | LlmError::Transport { .. } => Ok(()),
        other => Err(other.into()),
    }
}

/// An answering session over a read-only store. Sessions are independent;
/// any number may run concurrently against the same snapshot.
pub struct QaSession<'a> {
    kg: &'a KgStore,
    gateway: &'a Gateway,
    config: QaConfig,
}

impl<'a> QaSession<'a> {
    pub fn new(kg: &'a KgStore, gateway: &'a Gateway, config: QaConfig) -> Self {
        Self { kg, gateway, config }
    }

    /// Mentions worth linking for one subquestion. Guaranteed non-empty: an
    /// empty model answer falls back to the whole question as one mention.
    /// Returns (mentions, degraded).
    pub fn extract_question_entities(
        &self,
        question: &str,
    ) -> Result<(Vec<String>, bool), QaError> {
        if question.trim().is_empty() {
            return Err(QaError::InvalidArgument("question must be non-empty".into()));
        }
        match self
            .gateway
            .complete(StageKind::QaEntityExtraction, &vars(&[("question", question)]))
        {
            Ok(Completion { output: StageOutput::QaEntities(mentions), .. }) => {
                if mentions.is_empty() {
                    Ok((vec![question.to_string()], false))
                } else {
                    Ok((mentions, false))
                }
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => {
                degradable(error)?;
                Ok((vec![question.to_string()], true))
            }
        }
    }

    /// Link mentions to stored entities: alias retrieval per mention, then a
    /// gateway selection over the candidate union. Off-list or empty
    /// selections fall back to each mention's top hit. Returns
    /// (entity ids, degraded).
    pub fn link_question_entities(
        &self,
        question: &str,
        mentions: &[String],
    ) -> Result<(Vec<EntityId>, bool), QaError> {
        let mut candidates: Vec<EntityId> = Vec::new();
        let mut top_per_mention: Vec<EntityId> = Vec::new();
        for mention in mentions {
            if mention.trim().is_empty() {
                continue;
            }
            let mut hits =
                self.kg.find_entities_by_alias(mention, self.config.link_candidates, None)?;
            if let Some(min) = self.config.min_link_score {
                hits.retain(|h| h.score >= min);
            }
            if let Some(first) = hits.first() {
                if !top_per_mention.contains(&first.id) {
                    top_per_mention.push(first.id);
                }
            }
            for hit in hits {
                if !candidates.contains(&hit.id) {
                    candidates.push(hit.id);
                }
            }
        }
        if candidates.is_empty() {
            return Ok((Vec::new(), false));
        }

        let labels: Vec<String> = candidates
            .iter()
            .map(|id| self.kg.entity(*id).expect("hit ids resolve").canonical_label.clone())
            .collect();
        let rendered =
            serde_json::to_string(&labels).expect("serializable");
        match self.gateway.complete(
            StageKind::QaEntityLinking,
            &vars(&[("question", question), ("candidates", &rendered)]),
        ) {
            Ok(Completion { output: StageOutput::QaLinked(names), .. }) => {
                let mut selected: Vec<EntityId> = Vec::new();
                for name in &names {
                    let position = labels
                        .iter()
                        .position(|l| l.trim().eq_ignore_ascii_case(name.trim()));
                    if let Some(position) = position {
                        if !selected.contains(&candidates[position]) {
                            selected.push(candidates[position]);
                        }
                    }
                }
                if selected.is_empty() {
                    // Empty or fully off-list selection: top-1 per mention.
                    Ok((top_per_mention, false))
                } else {
                    Ok((selected, false))
                }
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => {
                degradable(error)?;
                Ok((top_per_mention, true))
            }
        }
    }

    /// Answer one subquestion from a rendered subgraph. `None` means the
    /// step is unknown (model said so, or the gateway failed); the loop
    /// continues either way. Returns (subanswer, degraded).
    pub fn answer_step(
        &self,
        subquestion: &str,
        retrieved: &Subgraph,
    ) -> Result<(Option<String>, bool), QaError> {
        let rendered = render_subgraph(retrieved);
        match self.gateway.complete(
            StageKind::QaSubanswer,
            &vars(&[("subquestion", subquestion), ("triplets", &rendered)]),
        ) {
            Ok(Completion { output: StageOutput::QaSubanswer(answer), .. }) => {
                if answer.trim().eq_ignore_ascii_case(UNKNOWN_MARKER) {
                    Ok((None, false))
                } else {
                    Ok((Some(answer), false))
                }
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => {
                degradable(error)?;
                Ok((None, true))
            }
        }
    }

    /// Produce the next 1-hop subquestion given the history so far. The
    /// first call sees an empty history.
    pub fn next_subquestion(
        &self,
        question: &str,
        steps: &[QaStep],
    ) -> Result<Option<String>, QaError> {
        debug_assert!(steps.len() < MAX_STEPS);
        match self.gateway.complete(
            StageKind::QaDecompose,
            &vars(&[("question", question), ("history", &render_history(steps))]),
        ) {
            Ok(Completion { output: StageOutput::QaSubquestion(subquestion), .. }) => {
                Ok(Some(subquestion))
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => {
                degradable(error)?;
                Ok(None)
            }
        }
    }

    /// Ask whether the history resolves the question. `must_answer` is set
    /// at the step cap, where NOT FINAL is no longer acceptable.
    pub fn check_final(
        &self,
        question: &str,
        steps: &[QaStep],
        must_answer: bool,
    ) -> Result<Option<Option<String>>, QaError> {
        if steps.is_empty() {
            return Err(QaError::InvalidArgument(
                "final check requires a non-empty history".into(),
            ));
        }
        let requirement = if must_answer {
            "\nThe hop budget is exhausted: answer now with your best final answer; NOT FINAL is no longer acceptable."
        } else {
            ""
        };
        match self.gateway.complete(
            StageKind::QaFinalCheck,
            &vars(&[
                ("question", question),
                ("history", &render_history(steps)),
                ("requirement", requirement),
            ]),
        ) {
            Ok(Completion { output: StageOutput::QaFinal(verdict), .. }) => Ok(Some(verdict)),
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => {
                degradable(error)?;
                Ok(None)
            }
        }
    }

    /// The full loop: decompose → extract/link entities → retrieve the
    /// neighborhood → answer → final check, stopping on a final answer or at
    /// five steps (then forcing a final from the history). Gateway content
    /// failures degrade individual steps; they never abort the trace.
    pub fn answer(&self, question: &str) -> Result<QaTrace, QaError> {
        let mut steps: Vec<QaStep> = Vec::new();
        let mut degraded = false;

        let final_answer = loop {
            if steps.len() == MAX_STEPS {
                break self.forced_final(question, &steps, &mut degraded)?;
            }
            let subquestion = match self.next_subquestion(question, &steps)? {
                Some(subquestion) => subquestion,
                None => {
                    // Decomposition failed: terminate the loop and fall
                    // through to the final check on what we have.
                    degraded = true;
                    break self.forced_final(question, &steps, &mut degraded)?;
                }
            };

            let (mentions, extract_degraded) = self.extract_question_entities(&subquestion)?;
            let (linked, link_degraded) = self.link_question_entities(&subquestion, &mentions)?;
            degraded |= extract_degraded | link_degraded;

            let retrieved = self.kg.neighborhood(&linked, self.config.hop_k);
            let (subanswer, answer_degraded) = self.answer_step(&subquestion, &retrieved)?;
            degraded |= answer_degraded;

            steps.push(QaStep {
                subquestion,
                extracted_mentions: mentions,
                linked_entities: linked,
                retrieved,
                subanswer,
            });

            match self.check_final(question, &steps, false)? {
                Some(Some(answer)) => break answer,
                Some(None) => {}
                None => degraded = true,
            }
        };

        Ok(QaTrace { question: question.to_string(), steps, final_answer, degraded })
    }

    /// Final answer at the cap (or after a decomposition failure): one
    /// must-answer final check, falling back to the last non-unknown
    /// subanswer.
    fn forced_final(
        &self,
        question: &str,
        steps: &[QaStep],
        degraded: &mut bool,
    ) -> Result<String, QaError> {
        let fallback = |degraded: &mut bool| {
            *degraded = true;
            steps
                .iter()
                .rev()
                .find_map(|step| step.subanswer.clone())
                .unwrap_or_else(|| UNKNOWN_MARKER.to_string())
        };
        if steps.is_empty() {
            return Ok(fallback(degraded));
        }
        match self.check_final(question, steps, true)? {
            Some(Some(answer)) => Ok(answer),
            Some(None) | None => Ok(fallback(degraded)),
        }
    }
}

/// Answer normalization: lowercase, strip punctuation, collapse whitespace.
/// Idempotent.
pub fn normalize_answer(text: &str) -> String {
    let lowered = text.to_lowercase();
    let stripped: String =
        lowered.chars().filter(|c| c.is_alphanumeric() || c.is_whitespace()).collect();
    stripped.split_whitespace().collect::<Vec<&str>>().join(" ")
}

fn tokens(normalized: &str) -> Vec<&str> {
    normalized.split_whitespace().collect()
}

/// Token-level F1 between two normalized strings: harmonic mean of precision
/// and recall over whitespace-token multisets.
pub fn token_f1(predicted_norm: &str, gold_norm: &str) -> f64 {
    let predicted = tokens(predicted_norm);
    let gold = tokens(gold_norm);
    if predicted.is_empty() || gold.is_empty() {
        return if predicted == gold { 1.0 } else { 0.0 };
    }
    let mut gold_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for token in &gold {
        *gold_counts.entry(token).or_insert(0) += 1;
    }
    let mut overlap = 0usize;
    for token in &predicted {
        if let Some(count) = gold_counts.get_mut(token) {
            if *count > 0 {
                *count -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let precision = overlap as f64 / predicted.len() as f64;
    let recall = overlap as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// EM/F1 for one prediction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub exact_match: bool,
    pub f1: f64,
}

/// Score a prediction against gold answers with alias expansion: when the
/// normalized prediction matches any stored entity's label or alias, that
/// entity's whole alias set stands in for the prediction, so lexical
/// variants recorded during construction ("NYC" for "New York City") count
/// as exact matches. EM requires some candidate to equal some gold after
/// normalization; F1 is the best token F1 over (candidate, gold) pairs.
pub fn score(predicted: &str, gold_answers: &[String], kg: &KgStore) -> Score {
    if gold_answers.is_empty() {
        return Score { exact_match: false, f1: 0.0 };
    }
    let predicted_norm = normalize_answer(predicted);
    let mut candidates: Vec<String> = vec![predicted_norm.clone()];
    for entity in kg.entities() {
        if entity.aliases.iter().any(|alias| normalize_answer(alias) == predicted_norm) {
            for alias in &entity.aliases {
                let normalized = normalize_answer(alias);
                if !candidates.contains(&normalized) {
                    candidates.push(normalized);
                }
            }
        }
    }
    let golds: Vec<String> = gold_answers.iter().map(|g| normalize_answer(g)).collect();

    let exact_match =
        candidates.iter().any(|candidate| golds.iter().any(|gold| candidate == gold));
    let mut f1: f64 = 0.0;
    for candidate in &candidates {
        for gold in &golds {
            f1 = f1.max(token_f1(candidate, gold));
        }
    }
    Score { exact_match, f1 }
}
