//! The three-stage construction pipeline: candidate triplet extraction,
//! ontology-aware refinement (entity typing + relation validation), and
//! alias-aware entity normalization, followed by a final verification that
//! flags (but keeps) ontology-misaligned triplets.
//!
//! Stage 1 may run per chunk in any order; stages 2–3 for one run are
//! serialized in document order because normalization mutates the store's
//! alias index, and later triplets must see aliases recorded by earlier ones.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::embed::{cosine, Embedder};
use crate::kg::{EntityId, InsertOutcome, KgError, KgStore, Provenance, Qualifier, Relation};
use crate::llm::{
    Completion, Gateway, LlmError, LlmUsage, OutputViolation, StageKind, StageOutput,
};
use crate::ontology::{
    OntologyError, OntologyIndex, OntologySchema, Orientation, PropertyRecord, TypeId,
};

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Ontology(#[from] OntologyError),
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Embed(#[from] crate::embed::EmbedError),
}

/// A source document to ingest.
#[derive(Debug, Clone)]
pub struct Document {
    pub id: String,
    pub text: String,
}

/// One unit of Stage-1 extraction: a paragraph (or a slice of an oversized
/// paragraph) with its character span in the document.
#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub document_id: String,
    pub text: String,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn provenance(&self) -> Provenance {
        Provenance { document_id: self.document_id.clone(), start: self.start, end: self.end }
    }
}

#[derive(Debug, Clone)]
pub struct ChunkingConfig {
    /// Paragraphs longer than this many characters are split at whitespace.
    pub max_chunk_chars: usize,
}

impl Default for ChunkingConfig {
    fn default() -> Self {
        Self { max_chunk_chars: 2000 }
    }
}

/// Split a document into paragraph chunks (blank-line boundaries), guarding
/// against oversized paragraphs with a whitespace-respecting length cap.
/// Spans are character offsets into the document text.
pub fn chunk_document(document: &Document, config: &ChunkingConfig) -> Vec<Chunk> {
    let chars: Vec<char> = document.text.chars().collect();
    let mut paragraphs: Vec<(usize, usize)> = Vec::new();
    let mut line_start = 0;
    let mut paragraph_start: Option<usize> = None;
    let mut position = 0;
    while position <= chars.len() {
        let at_end = position == chars.len();
        if at_end || chars[position] == '\n' {
            let line: String = chars[line_start..position].iter().collect();
            if line.trim().is_empty() {
                if let Some(start) = paragraph_start.take() {
                    paragraphs.push((start, line_start));
                }
            } else if paragraph_start.is_none() {
                paragraph_start = Some(line_start);
            }
            if at_end {
                if let Some(start) = paragraph_start.take() {
                    paragraphs.push((start, position));
                }
                break;
            }
            line_start = position + 1;
        }
        position += 1;
    }

    let mut chunks = Vec::new();
    for (start, end) in paragraphs {
        // Trim the paragraph range to its non-whitespace extent.
        let mut s = start;
        let mut e = end;
        while s < e && chars[s].is_whitespace() {
            s += 1;
        }
        while e > s && chars[e - 1].is_whitespace() {
            e -= 1;
        }
        if s == e {
            continue;
        }
        let mut piece_start = s;
        while piece_start < e {
            let mut piece_end = (piece_start + config.max_chunk_chars).min(e);
            if piece_end < e {
                // Back up to the last whitespace inside the window.
                let window_break =
                    (piece_start..piece_end).rev().find(|i| chars[*i].is_whitespace());
                if let Some(break_at) = window_break {
                    if break_at > piece_start {
                        piece_end = break_at;
                    }
                }
            }
            let text: String = chars[piece_start..piece_end].iter().collect();
            if !text.trim().is_empty() {
                chunks.push(Chunk {
                    document_id: document.id.clone(),
                    text,
                    start: piece_start,
                    end: piece_end,
                });
            }
            piece_start = piece_end;
            while piece_start < e && chars[piece_start].is_whitespace() {
                piece_start += 1;
            }
        }
    }
    chunks
}

/// Stage-1 output: surface forms straight from the model, span-annotated.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTriplet {
    pub subject: String,
    pub relation: String,
    pub object: String,
    pub subject_type: String,
    pub object_type: String,
    pub qualifiers: Vec<Qualifier>,
    pub source: Provenance,
}

/// Stage-2 output. When an inverse-oriented property is selected, the
/// subject/object surfaces (and their types) are already swapped here, so
/// stored triplets are always forward; `orientation` records the selection.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinedTriplet {
    pub subject: String,
    pub subject_type_id: TypeId,
    pub relation: Relation,
    pub orientation: Orientation,
    pub object: String,
    pub object_type_id: TypeId,
    pub qualifiers: Vec<Qualifier>,
    pub aligned: bool,
    pub source: Provenance,
}

/// Why a candidate was dropped before reaching the store.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DropReason {
    /// The ontology has no types to select from.
    NoTypeCandidates,
    /// The model kept answering a type outside the candidate list.
    OffCandidate,
    /// Type selection never produced parseable output.
    MalformedTypeSelection,
    /// Transport-level gateway failure during type selection.
    TypeSelectionBackend,
}

impl DropReason {
    pub fn name(self) -> &'static str {
        match self {
            DropReason::NoTypeCandidates => "no-type-candidates",
            DropReason::OffCandidate => "off-candidate",
            DropReason::MalformedTypeSelection => "malformed-type-selection",
            DropReason::TypeSelectionBackend => "type-selection-backend",
        }
    }
}

/// Per-document ingest accounting. Counts are conserved:
/// `candidates == stored + sum(dropped)`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestReport {
    pub document_id: String,
    pub chunks: usize,
    /// Chunks whose Stage-1 call kept returning malformed output.
    pub failed_chunks: usize,
    pub candidates: usize,
    /// Candidates that survived Stage 2 (types resolved).
    pub refined: usize,
    /// Triplets that reached the store, including merged duplicates.
    pub stored: usize,
    /// Subset of `stored` that collapsed into an existing triplet.
    pub deduplicated: usize,
    pub new_entities: usize,
    /// Mentions linked to an existing entity.
    pub linked_mentions: usize,
    /// Entity-linking gateway failures treated as "no match".
    pub normalization_fallbacks: usize,
    /// Backbones kept as surface relations (no candidates or selection
    /// failure), stored with aligned=false.
    pub relation_fallbacks: usize,
    pub dropped: BTreeMap<String, usize>,
    pub usage: LlmUsage,
}

impl IngestReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    fn drop_candidate(&mut self, reason: DropReason) {
        *self.dropped.entry(reason.name().to_string()).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub chunking: ChunkingConfig,
    /// Candidate list size for type selection.
    pub type_candidates: usize,
    /// Candidate list size for relation selection.
    pub relation_candidates: usize,
    /// Candidate list size for entity linking.
    pub link_candidates: usize,
    /// When the type-filtered alias retrieval finds nothing, retry once
    /// without the filter before concluding "new entity".
    pub unfiltered_link_fallback: bool,
    /// Optional minimum cosine score for linking candidates; off by default.
    pub min_link_score: Option<f32>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            chunking: ChunkingConfig::default(),
            type_candidates: 10,
            relation_candidates: 10,
            link_candidates: 10,
            unfiltered_link_fallback: true,
            min_link_score: None,
        }
    }
}

/// How an LLM failure at one pipeline step is handled.
enum StepFailure {
    /// Downgrade per the stage's contract (drop candidate / keep surface /
    /// treat as no-match).
    Downgrade(DropReason),
    /// Harness-level problem (missing fixture, bad template wiring): abort.
    Fatal(LlmError),
}

fn classify_failure(error: LlmError) -> StepFailure {
    match error {
        LlmError::MalformedOutput { violation: OutputViolation::Validation, .. } => {
            StepFailure::Downgrade(DropReason::OffCandidate)
        }
        LlmError::MalformedOutput { violation: OutputViolation::Parse, .. } => {
            StepFailure::Downgrade(DropReason::MalformedTypeSelection)
        }
        LlmError::Transport { .. } => StepFailure::Downgrade(DropReason::TypeSelectionBackend),
        other => StepFailure::Fatal(other),
    }
}

fn triplet_display(subject: &str, relation: &str, object: &str) -> String {
    format!("({subject}, {relation}, {object})")
}

fn json_list(items: &[String]) -> String {
    serde_json::to_string(items).expect("serializable")
}

fn vars(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn eq_ignore_case(a: &str, b: &str) -> bool {
    a.trim().eq_ignore_ascii_case(b.trim())
}

/// The construction pipeline bound to a schema, its search index, and a
/// gateway. The store is passed into each call so one pipeline can feed
/// many stores (and vice versa).
pub struct Pipeline<'a> {
    schema: &'a OntologySchema,
    index: &'a OntologyIndex,
    embedder: Arc<dyn Embedder>,
    gateway: &'a Gateway,
    config: PipelineConfig,
}

impl<'a> Pipeline<'a> {
    pub fn new(
        schema: &'a OntologySchema,
        index: &'a OntologyIndex,
        embedder: Arc<dyn Embedder>,
        gateway: &'a Gateway,
        config: PipelineConfig,
    ) -> Self {
        Self { schema, index, embedder, gateway, config }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Stage 1: one gateway call per chunk. An empty list is a valid
    /// outcome; a malformed-output failure is reported to the caller, who
    /// marks the chunk failed and continues.
    pub fn extract_candidates(
        &self,
        chunk: &Chunk,
    ) -> Result<Vec<CandidateTriplet>, ExtractError> {
        let completion = self
            .gateway
            .complete(StageKind::CandidateExtraction, &vars(&[("text", &chunk.text)]))?;
        let StageOutput::Candidates(payloads) = completion.output else {
            unreachable!("stage schema guarantees the variant");
        };
        Ok(payloads
            .into_iter()
            .map(|p| CandidateTriplet {
                subject: p.subject,
                relation: p.relation,
                object: p.object,
                subject_type: p.subject_type,
                object_type: p.object_type,
                qualifiers: p
                    .qualifiers
                    .into_iter()
                    .map(|q| Qualifier { relation: q.relation, object: q.object })
                    .collect(),
                source: chunk.provenance(),
            })
            .collect())
    }

    /// Stage 2a: resolve both type surfaces against the taxonomy via dense
    /// retrieval plus a gateway selection constrained to the candidates.
    /// `Ok(Err(reason))` is the drop path; the caller counts it and moves on.
    pub fn refine_types(
        &self,
        candidate: &CandidateTriplet,
        context: &str,
    ) -> Result<Result<(TypeId, TypeId), DropReason>, ExtractError> {
        let search = |surface: &str, fallback: &str| {
            let query = if surface.trim().is_empty() { fallback } else { surface };
            self.index.search_types(query, self.config.type_candidates)
        };
        let subject_hits = search(&candidate.subject_type, &candidate.subject)?;
        let object_hits = search(&candidate.object_type, &candidate.object)?;
        if subject_hits.is_empty() || object_hits.is_empty() {
            return Ok(Err(DropReason::NoTypeCandidates));
        }

        let labels = |hits: &[crate::ontology::ScoredId]| -> Vec<String> {
            hits.iter()
                .map(|hit| {
                    self.schema
                        .type_record(&TypeId::new(hit.id.clone()))
                        .expect("search returns schema ids")
                        .label
                        .clone()
                })
                .collect()
        };
        let subject_labels = labels(&subject_hits);
        let object_labels = labels(&object_hits);

        let variables = vars(&[
            ("text", context),
            (
                "triplet",
                &triplet_display(&candidate.subject, &candidate.relation, &candidate.object),
            ),
            ("subject_type_candidates", &json_list(&subject_labels)),
            ("object_type_candidates", &json_list(&object_labels)),
        ]);
        let outcome =
            self.gateway
                .complete_validated(StageKind::TypeSelection, &variables, |output| {
                    let StageOutput::TypeSelection { subject_type, object_type } = output else {
                        return Err("wrong output variant".into());
                    };
                    if !subject_labels.iter().any(|l| eq_ignore_case(l, subject_type)) {
                        return Err(format!("{subject_type:?} is not a candidate subject type"));
                    }
                    if !object_labels.iter().any(|l| eq_ignore_case(l, object_type)) {
                        return Err(format!("{object_type:?} is not a candidate object type"));
                    }
                    Ok(())
                });
        match outcome {
            Ok(Completion {
                output: StageOutput::TypeSelection { subject_type, object_type },
                ..
            }) => {
                let resolve =
                    |hits: &[crate::ontology::ScoredId], labels: &[String], chosen: &str| {
                        let position = labels
                            .iter()
                            .position(|l| eq_ignore_case(l, chosen))
                            .expect("validated against candidate labels");
                        TypeId::new(hits[position].id.clone())
                    };
                Ok(Ok((
                    resolve(&subject_hits, &subject_labels, &subject_type),
                    resolve(&object_hits, &object_labels, &object_type),
                )))
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => match classify_failure(error) {
                StepFailure::Downgrade(reason) => Ok(Err(reason)),
                StepFailure::Fatal(error) => Err(error.into()),
            },
        }
    }

    /// Stage 2b: pick an ontology-valid relation for the typed pair, ranked
    /// by cosine similarity to the extracted relation surface; inverse
    /// selections are materialized by swapping, so the result is always
    /// forward. Failure never drops the triplet; it keeps the surface
    /// relation with aligned=false.
    pub fn refine_backbone(
        &self,
        candidate: CandidateTriplet,
        subject_type: TypeId,
        object_type: TypeId,
        context: &str,
        report: &mut IngestReport,
    ) -> Result<RefinedTriplet, ExtractError> {
        let surface_fallback = |candidate: CandidateTriplet| RefinedTriplet {
            subject: candidate.subject.clone(),
            subject_type_id: subject_type.clone(),
            relation: Relation::surface(candidate.relation.clone()),
            orientation: Orientation::Forward,
            object: candidate.object.clone(),
            object_type_id: object_type.clone(),
            qualifiers: candidate.qualifiers,
            aligned: false,
            source: candidate.source,
        };

        let allowed = self.schema.allowed_relations(&subject_type, &object_type)?;
        if allowed.is_empty() {
            report.relation_fallbacks += 1;
            return Ok(surface_fallback(candidate));
        }

        let relation_vector = self.embedder.embed(&candidate.relation)?;
        let mut ranked: Vec<(&PropertyRecord, Orientation, f32)> = Vec::new();
        for (property, orientation) in allowed {
            let mut best = f32::MIN;
            for alias in &property.aliases {
                let score = cosine(&relation_vector, &self.embedder.embed(alias)?);
                if score > best {
                    best = score;
                }
            }
            ranked.push((property, orientation, best));
        }
        ranked.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.0.property_id.cmp(&b.0.property_id))
                .then_with(|| match (a.1, b.1) {
                    (Orientation::Forward, Orientation::Inverse) => std::cmp::Ordering::Less,
                    (Orientation::Inverse, Orientation::Forward) => std::cmp::Ordering::Greater,
                    _ => std::cmp::Ordering::Equal,
                })
        });
        ranked.truncate(self.config.relation_candidates);

        let mut display_labels: Vec<String> = Vec::new();
        for (property, _, _) in &ranked {
            if !display_labels.iter().any(|l| l == &property.label) {
                display_labels.push(property.label.clone());
            }
        }

        let variables = vars(&[
            ("text", context),
            (
                "triplet",
                &triplet_display(&candidate.subject, &candidate.relation, &candidate.object),
            ),
            ("relation_candidates", &json_list(&display_labels)),
        ]);
        let outcome =
            self.gateway
                .complete_validated(StageKind::RelationSelection, &variables, |output| {
                    let StageOutput::RelationSelection { relation } = output else {
                        return Err("wrong output variant".into());
                    };
                    if !display_labels.iter().any(|l| eq_ignore_case(l, relation)) {
                        return Err(format!("{relation:?} is not a candidate relation"));
                    }
                    Ok(())
                });

        match outcome {
            Ok(Completion { output: StageOutput::RelationSelection { relation }, .. }) => {
                let (property, orientation, _) = ranked
                    .iter()
                    .find(|(p, _, _)| eq_ignore_case(&p.label, &relation))
                    .expect("validated against candidate labels");
                let (subject, subject_type_id, object, object_type_id) = match orientation {
                    Orientation::Forward => (
                        candidate.subject.clone(),
                        subject_type.clone(),
                        candidate.object.clone(),
                        object_type.clone(),
                    ),
                    Orientation::Inverse => (
                        candidate.object.clone(),
                        object_type.clone(),
                        candidate.subject.clone(),
                        subject_type.clone(),
                    ),
                };
                let aligned = self
                    .schema
                    .check_alignment(&subject_type_id, &property.property_id, &object_type_id)
                    .is_aligned();
                Ok(RefinedTriplet {
                    subject,
                    subject_type_id,
                    relation: Relation::property(
                        property.property_id.as_str(),
                        property.label.clone(),
                    ),
                    orientation: *orientation,
                    object,
                    object_type_id,
                    qualifiers: candidate.qualifiers,
                    aligned,
                    source: candidate.source,
                })
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => match classify_failure(error) {
                StepFailure::Downgrade(_) => {
                    report.relation_fallbacks += 1;
                    Ok(surface_fallback(candidate))
                }
                StepFailure::Fatal(error) => Err(error.into()),
            },
        }
    }

    /// Stage 3 for one mention: retrieve type-compatible alias candidates,
    /// ask the gateway match-or-none, and either link to the canonical
    /// entity (recording the mention as an alias) or create a new entity.
    fn resolve_endpoint(
        &self,
        mention: &str,
        type_id: &TypeId,
        triplet_text: &str,
        context: &str,
        kg: &mut KgStore,
        report: &mut IngestReport,
    ) -> Result<EntityId, ExtractError> {
        // The filter admits entities typed as the mention's type or any of
        // its ancestors (compatible parent types).
        let filter: Option<HashSet<TypeId>> =
            self.schema.ancestors(type_id).ok().map(|set| set.iter().cloned().collect());
        let cut = |hits: Vec<crate::kg::EntityMatch>| match self.config.min_link_score {
            Some(min) => hits.into_iter().filter(|h| h.score >= min).collect(),
            None => hits,
        };
        let mut hits =
            cut(kg.find_entities_by_alias(mention, self.config.link_candidates, filter.as_ref())?);
        if hits.is_empty() && self.config.unfiltered_link_fallback {
            hits = cut(kg.find_entities_by_alias(mention, self.config.link_candidates, None)?);
        }

        let create_new = |kg: &mut KgStore, report: &mut IngestReport| {
            let before = kg.entity_count();
            let id = kg.insert_entity(mention, type_id)?;
            if kg.entity_count() > before {
                report.new_entities += 1;
            }
            Ok::<EntityId, ExtractError>(id)
        };

        if hits.is_empty() {
            return create_new(kg, report);
        }

        let candidate_rows: Vec<String> = hits
            .iter()
            .map(|hit| {
                let entity = kg.entity(hit.id).expect("hit ids resolve");
                format!(
                    "{} ({})",
                    entity.canonical_label,
                    self.schema.type_label(&entity.type_id)
                )
            })
            .collect();
        let candidate_labels: Vec<String> = hits
            .iter()
            .map(|hit| kg.entity(hit.id).expect("hit ids resolve").canonical_label.clone())
            .collect();

        let variables = vars(&[
            ("text", context),
            ("triplet", triplet_text),
            ("mention", mention),
            ("candidates", &json_list(&candidate_rows)),
        ]);
        let outcome =
            self.gateway
                .complete_validated(StageKind::EntityLinking, &variables, |output| {
                    let StageOutput::EntityLink(selection) = output else {
                        return Err("wrong output variant".into());
                    };
                    match selection {
                        None => Ok(()),
                        Some(name) => {
                            if candidate_labels.iter().any(|l| eq_ignore_case(l, name)) {
                                Ok(())
                            } else {
                                Err(format!("{name:?} is not a candidate entity"))
                            }
                        }
                    }
                });

        match outcome {
            Ok(Completion { output: StageOutput::EntityLink(Some(name)), .. }) => {
                let position = candidate_labels
                    .iter()
                    .position(|l| eq_ignore_case(l, &name))
                    .expect("validated against candidate labels");
                let id = hits[position].id;
                kg.add_alias(id, mention)?;
                report.linked_mentions += 1;
                Ok(id)
            }
            Ok(Completion { output: StageOutput::EntityLink(None), .. }) => {
                create_new(kg, report)
            }
            Ok(_) => unreachable!("stage schema guarantees the variant"),
            Err(error) => match classify_failure(error) {
                StepFailure::Downgrade(_) => {
                    report.normalization_fallbacks += 1;
                    create_new(kg, report)
                }
                StepFailure::Fatal(error) => Err(error.into()),
            },
        }
    }

    /// Stage 3 for a whole triplet: normalize both endpoints (the alias
    /// index is updated immediately, so later triplets in the run see the
    /// new surface forms), then run final verification against the stored
    /// entity types and insert. Misaligned triplets are stored too, flagged.
    pub fn normalize_and_store(
        &self,
        refined: RefinedTriplet,
        context: &str,
        kg: &mut KgStore,
        report: &mut IngestReport,
    ) -> Result<InsertOutcome, ExtractError> {
        let triplet_text = triplet_display(
            &refined.subject,
            refined.relation.display_label(),
            &refined.object,
        );
        let subject_id = self.resolve_endpoint(
            &refined.subject,
            &refined.subject_type_id,
            &triplet_text,
            context,
            kg,
            report,
        )?;
        let object_id = self.resolve_endpoint(
            &refined.object,
            &refined.object_type_id,
            &triplet_text,
            context,
            kg,
            report,
        )?;

        // Final verification recomputes alignment on the canonical entities'
        // types, which may differ from the mention types when linking chose
        // a compatible parent-typed entity.
        let aligned = match refined.relation.property_id() {
            Some(property) => {
                let subject_type = kg.entity(subject_id).expect("resolved").type_id.clone();
                let object_type = kg.entity(object_id).expect("resolved").type_id.clone();
                self.schema.check_alignment(&subject_type, property, &object_type).is_aligned()
            }
            None => false,
        };

        let outcome = kg.insert_triplet(
            subject_id,
            refined.relation,
            object_id,
            refined.qualifiers,
            aligned,
            vec![refined.source],
        )?;
        report.stored += 1;
        if outcome == InsertOutcome::Deduplicated {
            report.deduplicated += 1;
        }
        Ok(outcome)
    }

    /// Run stages 1–3 plus verification over one document. Counts are
    /// conserved (`candidates == stored + dropped`) and the report carries
    /// the LLM usage this document cost.
    pub fn process_document(
        &self,
        document: &Document,
        kg: &mut KgStore,
    ) -> Result<IngestReport, ExtractError> {
        let mut report =
            IngestReport { document_id: document.id.clone(), ..Default::default() };
        let usage_mark = self.gateway.exchange_count();

        let chunks = chunk_document(document, &self.config.chunking);
        report.chunks = chunks.len();
        for chunk in &chunks {
            let candidates = match self.extract_candidates(chunk) {
                Ok(candidates) => candidates,
                Err(ExtractError::Llm(LlmError::MalformedOutput { .. })) => {
                    report.failed_chunks += 1;
                    continue;
                }
                Err(other) => return Err(other),
            };
            report.candidates += candidates.len();
            for candidate in candidates {
                match self.refine_types(&candidate, &chunk.text)? {
                    Ok((subject_type, object_type)) => {
                        let refined = self.refine_backbone(
                            candidate,
                            subject_type,
                            object_type,
                            &chunk.text,
                            &mut report,
                        )?;
                        report.refined += 1;
                        self.normalize_and_store(refined, &chunk.text, kg, &mut report)?;
                    }
                    Err(reason) => report.drop_candidate(reason),
                }
            }
        }

        report.usage = self.gateway.usage_since(usage_mark);
        debug_assert_eq!(report.candidates, report.stored + report.dropped_total());
        Ok(report)
    }
}
