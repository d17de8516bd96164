//! Pipeline stages and their structured-output schemas.

use serde::{Deserialize, Serialize};

/// Every place in the pipeline that may dispatch an LLM call. Each variant
/// owns exactly one prompt template and one output schema; no other code
/// path reaches a backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    CandidateExtraction,
    TypeSelection,
    RelationSelection,
    EntityLinking,
    QaEntityExtraction,
    QaEntityLinking,
    QaSubanswer,
    QaDecompose,
    QaFinalCheck,
}

impl StageKind {
    pub const ALL: [StageKind; 9] = [
        StageKind::CandidateExtraction,
        StageKind::TypeSelection,
        StageKind::RelationSelection,
        StageKind::EntityLinking,
        StageKind::QaEntityExtraction,
        StageKind::QaEntityLinking,
        StageKind::QaSubanswer,
        StageKind::QaDecompose,
        StageKind::QaFinalCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StageKind::CandidateExtraction => "candidate_extraction",
            StageKind::TypeSelection => "type_selection",
            StageKind::RelationSelection => "relation_selection",
            StageKind::EntityLinking => "entity_linking",
            StageKind::QaEntityExtraction => "qa_entity_extraction",
            StageKind::QaEntityLinking => "qa_entity_linking",
            StageKind::QaSubanswer => "qa_subanswer",
            StageKind::QaDecompose => "qa_decompose",
            StageKind::QaFinalCheck => "qa_final_check",
        }
    }

    pub fn from_name(name: &str) -> Option<StageKind> {
        StageKind::ALL.into_iter().find(|stage| stage.name() == name)
    }
}

impl std::fmt::Display for StageKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// One triplet as emitted by the candidate-extraction stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePayload {
    pub subject: String,
    pub relation: String,
    pub object: String,
    #[serde(default)]
    pub qualifiers: Vec<QualifierPayload>,
    #[serde(default)]
    pub subject_type: String,
    #[serde(default)]
    pub object_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QualifierPayload {
    pub relation: String,
    pub object: String,
}

/// Exact sentinel the final-check stage must emit while the answer is still
/// incomplete.
pub const NOT_FINAL_SENTINEL: &str = "NOT FINAL";

/// Exact string the entity-linking stage must emit when no candidate matches.
pub const NO_MATCH_SENTINEL: &str = "None";

/// A structured value parsed from a backend response. Each variant validates
/// against its stage's output schema before leaving the gateway.
#[derive(Debug, Clone, PartialEq)]
pub enum StageOutput {
    /// `candidate_extraction`: the triplets found in a chunk (possibly none).
    Candidates(Vec<CandidatePayload>),
    /// `type_selection`: one chosen type name per slot.
    TypeSelection { subject_type: String, object_type: String },
    /// `relation_selection`: the chosen relation name.
    RelationSelection { relation: String },
    /// `entity_linking`: a candidate name, or `None` for "create new entity".
    EntityLink(Option<String>),
    /// `qa_entity_extraction`: entity mentions found in a question.
    QaEntities(Vec<String>),
    /// `qa_entity_linking`: names selected from the candidate list.
    QaLinked(Vec<String>),
    /// `qa_subanswer`: the verbatim answer text.
    QaSubanswer(String),
    /// `qa_decompose`: the next 1-hop subquestion.
    QaSubquestion(String),
    /// `qa_final_check`: the final answer, or `None` for NOT FINAL.
    QaFinal(Option<String>),
}

fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    if let Some(rest) = trimmed.strip_prefix("```") {
        let rest = rest.trim_start_matches(|c: char| c.is_ascii_alphanumeric());
        if let Some(inner) = rest.strip_suffix("```") {
            return inner.trim();
        }
    }
    trimmed
}

/// Pull the first JSON value out of a response, tolerating code fences and
/// surrounding chatter.
fn extract_json(text: &str) -> Option<serde_json::Value> {
    let stripped = strip_code_fence(text);
    if let Ok(value) = serde_json::from_str(stripped) {
        return Some(value);
    }
    for (open, close) in [('[', ']'), ('{', '}')] {
        if let (Some(start), Some(end)) = (stripped.find(open), stripped.rfind(close)) {
            if start < end {
                if let Ok(value) = serde_json::from_str(&stripped[start..=end]) {
                    return Some(value);
                }
            }
        }
    }
    None
}

fn candidates_from_json(value: serde_json::Value) -> Result<Vec<CandidatePayload>, String> {
    let payloads: Vec<CandidatePayload> =
        serde_json::from_value(value).map_err(|e| format!("not a triplet list: {e}"))?;
    for payload in &payloads {
        if payload.subject.is_empty() || payload.relation.is_empty() || payload.object.is_empty() {
            return Err("triplet with an empty subject, relation, or object".into());
        }
        for qualifier in &payload.qualifiers {
            if qualifier.relation.is_empty() || qualifier.object.is_empty() {
                return Err("qualifier with an empty relation or object".into());
            }
        }
    }
    Ok(payloads)
}

fn string_list_from_json(value: serde_json::Value) -> Result<Vec<String>, String> {
    let items: Vec<String> =
        serde_json::from_value(value).map_err(|e| format!("not a list of strings: {e}"))?;
    if items.iter().any(String::is_empty) {
        return Err("list contains an empty string".into());
    }
    Ok(items)
}

/// Accepts both `[{"entity": name}, ..]` and a bare list of names.
fn linked_entities_from_json(value: serde_json::Value) -> Result<Vec<String>, String> {
    #[derive(Deserialize)]
    struct Row {
        entity: String,
    }
    if let Ok(rows) = serde_json::from_value::<Vec<Row>>(value.clone()) {
        let names: Vec<String> = rows.into_iter().map(|r| r.entity).collect();
        if names.iter().any(String::is_empty) {
            return Err("entity row with an empty name".into());
        }
        return Ok(names);
    }
    string_list_from_json(value)
}

/// Parse a raw response against `stage`'s output schema. A failure here (or
/// in a caller-supplied validator) sends the gateway around its retry loop.
pub fn parse_stage_output(stage: StageKind, response: &str) -> Result<StageOutput, String> {
    match stage {
        StageKind::CandidateExtraction => {
            let value = extract_json(response).ok_or("expected a JSON list of triplets")?;
            Ok(StageOutput::Candidates(candidates_from_json(value)?))
        }
        StageKind::TypeSelection => {
            #[derive(Deserialize)]
            struct Selection {
                subject_type: String,
                object_type: String,
            }
            let value = extract_json(response)
                .ok_or("expected JSON with subject_type and object_type")?;
            let selection: Selection =
                serde_json::from_value(value).map_err(|e| format!("bad type selection: {e}"))?;
            if selection.subject_type.is_empty() || selection.object_type.is_empty() {
                return Err("empty type selection".into());
            }
            Ok(StageOutput::TypeSelection {
                subject_type: selection.subject_type,
                object_type: selection.object_type,
            })
        }
        StageKind::RelationSelection => {
            #[derive(Deserialize)]
            struct Selection {
                relation: String,
            }
            let value = extract_json(response).ok_or("expected JSON with a relation key")?;
            let selection: Selection = serde_json::from_value(value)
                .map_err(|e| format!("bad relation selection: {e}"))?;
            if selection.relation.is_empty() {
                return Err("empty relation selection".into());
            }
            Ok(StageOutput::RelationSelection { relation: selection.relation })
        }
        StageKind::EntityLinking => {
            let answer = response.trim();
            if answer.is_empty() {
                return Err("empty linking answer".into());
            }
            // Some models quote the name; accept that.
            let unquoted = answer.trim_matches('"').trim();
            if unquoted.is_empty() {
                return Err("empty linking answer".into());
            }
            if unquoted == NO_MATCH_SENTINEL {
                Ok(StageOutput::EntityLink(None))
            } else {
                Ok(StageOutput::EntityLink(Some(unquoted.to_string())))
            }
        }
        StageKind::QaEntityExtraction => {
            let value = extract_json(response).ok_or("expected a JSON list of entity names")?;
            Ok(StageOutput::QaEntities(string_list_from_json(value)?))
        }
        StageKind::QaEntityLinking => {
            let value = extract_json(response).ok_or("expected a JSON list of entities")?;
            Ok(StageOutput::QaLinked(linked_entities_from_json(value)?))
        }
        StageKind::QaSubanswer => {
            let answer = response.trim();
            if answer.is_empty() {
                return Err("empty answer".into());
            }
            Ok(StageOutput::QaSubanswer(answer.to_string()))
        }
        StageKind::QaDecompose => {
            let question = response.trim();
            if question.is_empty() {
                return Err("empty subquestion".into());
            }
            Ok(StageOutput::QaSubquestion(question.to_string()))
        }
        StageKind::QaFinalCheck => {
            let answer = response.trim();
            if answer.is_empty() {
                return Err("empty final-check answer".into());
            }
            if answer == NOT_FINAL_SENTINEL {
                Ok(StageOutput::QaFinal(None))
            } else {
                Ok(StageOutput::QaFinal(Some(answer.to_string())))
            }
        }
    }
}
