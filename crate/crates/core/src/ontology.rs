//! The type/property schema: taxonomy with ancestor closure, domain/range
//! constraint queries, alignment verification, and alias search.
//!
//! A schema is immutable after [`load_schema`], so all query operations take
//! `&self` and are safe to call from any number of threads.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{Embedder, EmbedError, VectorIndex};

/// Identifier of an entity type in the taxonomy (e.g. `Q11424`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TypeId(pub String);

impl TypeId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TypeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TypeId {
    fn from(id: &str) -> Self {
        Self(id.to_string())
    }
}

/// Identifier of a property (e.g. `P57`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PropertyId(pub String);

impl PropertyId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PropertyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PropertyId {
    fn from(id: &str) -> Self {
        Self(id.to_string())
    }
}

/// The four factual datatypes kept at schema-compile time. Everything else
/// (external ids, multimedia, URLs) is dropped before a schema is built.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Datatype {
    #[serde(rename = "item")]
    Item,
    #[serde(rename = "quantity")]
    Quantity,
    #[serde(rename = "point-in-time")]
    PointInTime,
    #[serde(rename = "string")]
    String,
}

/// One node of the type taxonomy. `parents` holds the union of instance-of
/// and subclass-of edges.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntityTypeRecord {
    pub type_id: TypeId,
    pub label: String,
    pub aliases: BTreeSet<String>,
    pub parents: BTreeSet<TypeId>,
}

/// One property with its domain (allowed subject types) and range (allowed
/// object types). An empty allowed set means the slot is unconstrained.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PropertyRecord {
    pub property_id: PropertyId,
    pub label: String,
    pub aliases: BTreeSet<String>,
    pub datatype: Datatype,
    pub allowed_subject_types: BTreeSet<TypeId>,
    pub allowed_object_types: BTreeSet<TypeId>,
}

/// Role a property plays when connecting a (subject type, object type) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    /// The property connects subject → object as queried.
    Forward,
    /// The property connects the pair with the roles swapped.
    Inverse,
}

/// Why a triplet backbone failed alignment. `check_alignment` is total: every
/// input maps to `Aligned` or one of these reasons, never to an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MisalignmentReason {
    UnknownProperty,
    UnknownType,
    DomainViolation,
    RangeViolation,
}

/// Verdict of the final ontology verification for one triplet backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Alignment {
    Aligned,
    Misaligned(MisalignmentReason),
}

impl Alignment {
    pub fn is_aligned(&self) -> bool {
        matches!(self, Alignment::Aligned)
    }
}

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate id {id}")]
    DuplicateId { line: usize, id: String },
    #[error("{kind} {id} references unknown type {referenced}")]
    DanglingReference { kind: &'static str, id: String, referenced: String },
    #[error("unknown type id {0}")]
    UnknownType(TypeId),
    #[error("unknown property id {0}")]
    UnknownProperty(PropertyId),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Non-fatal observations gathered while loading a schema.
#[derive(Debug, Default, Clone)]
pub struct LoadReport {
    pub types_loaded: usize,
    pub properties_loaded: usize,
    /// Count of taxonomy cycles detected; members of a cycle share one
    /// ancestor set and loading continues.
    pub cycles_detected: usize,
    pub warnings: Vec<String>,
}

/// The immutable schema: taxonomy, properties, and the precomputed
/// reflexive-transitive ancestor closure.
#[derive(Debug, Clone)]
pub struct OntologySchema {
    types: BTreeMap<TypeId, EntityTypeRecord>,
    properties: BTreeMap<PropertyId, PropertyRecord>,
    ancestor_closure: BTreeMap<TypeId, BTreeSet<TypeId>>,
}

#[derive(Deserialize)]
struct TypeRow {
    type_id: String,
    label: String,
    #[serde(default)]
    aliases: BTreeSet<String>,
    #[serde(default)]
    parents: BTreeSet<String>,
}

#[derive(Deserialize)]
struct PropertyRow {
    property_id: String,
    label: String,
    #[serde(default)]
    aliases: BTreeSet<String>,
    datatype: serde_json::Value,
    #[serde(default)]
    allowed_subject_types: BTreeSet<String>,
    #[serde(default)]
    allowed_object_types: BTreeSet<String>,
}

const KNOWN_TYPE_FIELDS: &[&str] = &["kind", "type_id", "label", "aliases", "parents"];
const KNOWN_PROPERTY_FIELDS: &[&str] = &[
    "kind",
    "property_id",
    "label",
    "aliases",
    "datatype",
    "allowed_subject_types",
    "allowed_object_types",
];

fn warn_unknown_fields(
    value: &serde_json::Value,
    known: &[&str],
    line: usize,
    warnings: &mut Vec<String>,
) {
    if let Some(object) = value.as_object() {
        for field in object.keys() {
            if !known.contains(&field.as_str()) {
                let message = format!("line {line}: ignoring unknown field {field:?}");
                log::warn!("{message}");
                warnings.push(message);
            }
        }
    }
}

/// Load a schema from newline-delimited records. Two record kinds are
/// discriminated by a `"kind"` field: `"type"` and `"property"`. Loading the
/// same bytes always yields an identical schema.
pub fn load_schema(reader: impl BufRead) -> Result<(OntologySchema, LoadReport), OntologyError> {
    let mut report = LoadReport::default();
    let mut types: BTreeMap<TypeId, EntityTypeRecord> = BTreeMap::new();
    let mut properties: BTreeMap<PropertyId, PropertyRecord> = BTreeMap::new();

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| OntologyError::Parse { line: line_no, message: e.to_string() })?;
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| OntologyError::Parse {
                line: line_no,
                message: "record is missing the \"kind\" discriminator".into(),
            })?
            .to_string();
        match kind.as_str() {
            "type" => {
                warn_unknown_fields(&value, KNOWN_TYPE_FIELDS, line_no, &mut report.warnings);
                let row: TypeRow = serde_json::from_value(value).map_err(|e| {
                    OntologyError::Parse { line: line_no, message: e.to_string() }
                })?;
                if row.label.is_empty() {
                    return Err(OntologyError::Parse {
                        line: line_no,
                        message: format!("type {} has an empty label", row.type_id),
                    });
                }
                let id = TypeId::new(row.type_id);
                if types.contains_key(&id) {
                    return Err(OntologyError::DuplicateId { line: line_no, id: id.0 });
                }
                let mut aliases = row.aliases;
                aliases.insert(row.label.clone());
                types.insert(
                    id.clone(),
                    EntityTypeRecord {
                        type_id: id,
                        label: row.label,
                        aliases,
                        parents: row.parents.into_iter().map(TypeId::new).collect(),
                    },
                );
            }
            "property" => {
                warn_unknown_fields(&value, KNOWN_PROPERTY_FIELDS, line_no, &mut report.warnings);
                let row: PropertyRow = serde_json::from_value(value).map_err(|e| {
                    OntologyError::Parse { line: line_no, message: e.to_string() }
                })?;
                if row.label.is_empty() {
                    return Err(OntologyError::Parse {
                        line: line_no,
                        message: format!("property {} has an empty label", row.property_id),
                    });
                }
                let datatype: Datatype =
                    serde_json::from_value(row.datatype.clone()).map_err(|_| {
                        OntologyError::Parse {
                            line: line_no,
                            message: format!(
                                "property {} has unsupported datatype {}; run compile first",
                                row.property_id, row.datatype
                            ),
                        }
                    })?;
                let id = PropertyId::new(row.property_id);
                if properties.contains_key(&id) {
                    return Err(OntologyError::DuplicateId { line: line_no, id: id.0 });
                }
                let mut aliases = row.aliases;
                aliases.insert(row.label.clone());
                properties.insert(
                    id.clone(),
                    PropertyRecord {
                        property_id: id,
                        label: row.label,
                        aliases,
                        datatype,
                        allowed_subject_types: row
                            .allowed_subject_types
                            .into_iter()
                            .map(TypeId::new)
                            .collect(),
                        allowed_object_types: row
                            .allowed_object_types
                            .into_iter()
                            .map(TypeId::new)
                            .collect(),
                    },
                );
            }
            other => {
                return Err(OntologyError::Parse {
                    line: line_no,
                    message: format!("unknown record kind {other:?}"),
                });
            }
        }
    }

    // Referential integrity before closure: parents and constraint sets must
    // resolve inside the schema.
    for record in types.values() {
        for parent in &record.parents {
            if !types.contains_key(parent) {
                return Err(OntologyError::DanglingReference {
                    kind: "type",
                    id: record.type_id.0.clone(),
                    referenced: parent.0.clone(),
                });
            }
        }
    }
    for record in properties.values() {
        for t in record.allowed_subject_types.iter().chain(&record.allowed_object_types) {
            if !types.contains_key(t) {
                return Err(OntologyError::DanglingReference {
                    kind: "property",
                    id: record.property_id.0.clone(),
                    referenced: t.0.clone(),
                });
            }
        }
    }

    let (ancestor_closure, cycles) = compute_closure(&types);
    report.types_loaded = types.len();
    report.properties_loaded = properties.len();
    report.cycles_detected = cycles;
    if cycles > 0 {
        let message = format!(
            "taxonomy contains {cycles} cycle(s); members of each cycle share an ancestor set"
        );
        log::warn!("{message}");
        report.warnings.push(message);
    }

    Ok((OntologySchema { types, properties, ancestor_closure }, report))
}

/// Reflexive-transitive closure over parent edges, computed as a fixed point
/// so accidental cycles in real dumps never hang or fail the load. Returns
/// the closure and the number of nontrivial strongly connected components.
fn compute_closure(
    types: &BTreeMap<TypeId, EntityTypeRecord>,
) -> (BTreeMap<TypeId, BTreeSet<TypeId>>, usize) {
    let mut closure: BTreeMap<TypeId, BTreeSet<TypeId>> = types
        .keys()
        .map(|id| {
            let mut set = BTreeSet::new();
            set.insert(id.clone());
            (id.clone(), set)
        })
        .collect();

    let mut changed = true;
    while changed {
        changed = false;
        for (id, record) in types {
            let mut expanded: BTreeSet<TypeId> = closure[id].clone();
            for parent in &record.parents {
                for ancestor in &closure[parent] {
                    expanded.insert(ancestor.clone());
                }
            }
            if expanded.len() != closure[id].len() {
                closure.insert(id.clone(), expanded);
                changed = true;
            }
        }
    }

    // A nontrivial SCC shows up as mutually contained ancestor sets.
    let mut cycle_members: BTreeSet<&TypeId> = BTreeSet::new();
    for (id, ancestors) in &closure {
        for other in ancestors {
            if other != id && closure[other].contains(id) {
                cycle_members.insert(id);
            }
        }
    }
    let mut cycles = 0;
    let mut seen: BTreeSet<&TypeId> = BTreeSet::new();
    for id in &cycle_members {
        if seen.contains(*id) {
            continue;
        }
        for other in &closure[*id] {
            if closure[other].contains(id) {
                seen.insert(other);
            }
        }
        cycles += 1;
    }

    (closure, cycles)
}

impl OntologySchema {
    pub fn is_empty(&self) -> bool {
        self.types.is_empty() && self.properties.is_empty()
    }

    pub fn type_count(&self) -> usize {
        self.types.len()
    }

    pub fn property_count(&self) -> usize {
        self.properties.len()
    }

    pub fn types(&self) -> impl Iterator<Item = &EntityTypeRecord> {
        self.types.values()
    }

    pub fn properties(&self) -> impl Iterator<Item = &PropertyRecord> {
        self.properties.values()
    }

    pub fn type_record(&self, id: &TypeId) -> Option<&EntityTypeRecord> {
        self.types.get(id)
    }

    pub fn property_record(&self, id: &PropertyId) -> Option<&PropertyRecord> {
        self.properties.get(id)
    }

    /// Human-readable label for a type id, falling back to the id itself for
    /// ids outside the schema (including the untyped sentinel).
    pub fn type_label<'a>(&'a self, id: &'a TypeId) -> &'a str {
        self.types.get(id).map_or(id.as_str(), |r| r.label.as_str())
    }

    /// The reflexive-transitive ancestor set of `t`.
    pub fn ancestors(&self, t: &TypeId) -> Result<&BTreeSet<TypeId>, OntologyError> {
        self.ancestor_closure.get(t).ok_or_else(|| OntologyError::UnknownType(t.clone()))
    }

    fn slot_accepts(&self, allowed: &BTreeSet<TypeId>, t: &TypeId) -> bool {
        if allowed.is_empty() {
            // Missing constraints accept any type: verification must never
            // reject a triplet the schema never restricted.
            return true;
        }
        self.ancestor_closure[t].iter().any(|ancestor| allowed.contains(ancestor))
    }

    /// Every property that can legally connect the pair, in both roles.
    /// Output is deterministic: ascending property id, forward before
    /// inverse; a property may appear in both orientations.
    pub fn allowed_relations(
        &self,
        subject_type: &TypeId,
        object_type: &TypeId,
    ) -> Result<Vec<(&PropertyRecord, Orientation)>, OntologyError> {
        if !self.types.contains_key(subject_type) {
            return Err(OntologyError::UnknownType(subject_type.clone()));
        }
        if !self.types.contains_key(object_type) {
            return Err(OntologyError::UnknownType(object_type.clone()));
        }
        let mut result = Vec::new();
        for property in self.properties.values() {
            let forward = self.slot_accepts(&property.allowed_subject_types, subject_type)
                && self.slot_accepts(&property.allowed_object_types, object_type);
            let inverse = self.slot_accepts(&property.allowed_subject_types, object_type)
                && self.slot_accepts(&property.allowed_object_types, subject_type);
            if forward {
                result.push((property, Orientation::Forward));
            }
            if inverse {
                result.push((property, Orientation::Inverse));
            }
        }
        Ok(result)
    }

    /// Total verification of one triplet backbone. Unknown ids are reported
    /// as misalignment reasons rather than errors, so verification can never
    /// abort an ingest.
    pub fn check_alignment(
        &self,
        subject_type: &TypeId,
        property: &PropertyId,
        object_type: &TypeId,
    ) -> Alignment {
        let Some(record) = self.properties.get(property) else {
            return Alignment::Misaligned(MisalignmentReason::UnknownProperty);
        };
        if !self.types.contains_key(subject_type) || !self.types.contains_key(object_type) {
            return Alignment::Misaligned(MisalignmentReason::UnknownType);
        }
        if !self.slot_accepts(&record.allowed_subject_types, subject_type) {
            return Alignment::Misaligned(MisalignmentReason::DomainViolation);
        }
        if !self.slot_accepts(&record.allowed_object_types, object_type) {
            return Alignment::Misaligned(MisalignmentReason::RangeViolation);
        }
        Alignment::Aligned
    }

    /// Canonical export: types then properties, each in ascending id order.
    /// `load_schema(export(s))` reproduces `s` exactly.
    pub fn export(&self, mut writer: impl Write) -> Result<(), OntologyError> {
        for record in self.types.values() {
            let row = serde_json::json!({
                "kind": "type",
                "type_id": record.type_id,
                "label": record.label,
                "aliases": record.aliases,
                "parents": record.parents,
            });
            writeln!(writer, "{row}")?;
        }
        for record in self.properties.values() {
            let row = serde_json::json!({
                "kind": "property",
                "property_id": record.property_id,
                "label": record.label,
                "aliases": record.aliases,
                "datatype": record.datatype,
                "allowed_subject_types": record.allowed_subject_types,
                "allowed_object_types": record.allowed_object_types,
            });
            writeln!(writer, "{row}")?;
        }
        Ok(())
    }
}

/// A ranked schema-record hit returned by name search.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredId {
    pub id: String,
    pub score: f32,
}

/// Dense-retrieval indexes over type and property names plus all their
/// aliases. Built once per schema; queries are read-only.
pub struct OntologyIndex {
    type_index: VectorIndex,
    relation_index: VectorIndex,
}

impl OntologyIndex {
    pub fn build(
        schema: &OntologySchema,
        embedder: Arc<dyn Embedder>,
    ) -> Result<Self, OntologyError> {
        let mut type_index = VectorIndex::new(embedder.clone());
        for record in schema.types() {
            let texts: Vec<&str> = record.aliases.iter().map(String::as_str).collect();
            type_index.upsert(record.type_id.as_str(), &texts, None)?;
        }
        let mut relation_index = VectorIndex::new(embedder);
        for record in schema.properties() {
            let texts: Vec<&str> = record.aliases.iter().map(String::as_str).collect();
            relation_index.upsert(record.property_id.as_str(), &texts, None)?;
        }
        Ok(Self { type_index, relation_index })
    }

    /// Top-k types by maximum cosine over any alias; ties break by ascending
    /// id and k is capped at the corpus size.
    pub fn search_types(&self, query: &str, k: usize) -> Result<Vec<ScoredId>, OntologyError> {
        search(&self.type_index, query, k)
    }

    /// Top-k properties by maximum cosine over any alias.
    pub fn search_relations(&self, query: &str, k: usize) -> Result<Vec<ScoredId>, OntologyError> {
        search(&self.relation_index, query, k)
    }
}

fn search(index: &VectorIndex, query: &str, k: usize) -> Result<Vec<ScoredId>, OntologyError> {
    if k == 0 {
        return Err(OntologyError::InvalidArgument("k must be at least 1".into()));
    }
    if index.is_empty() {
        return Ok(Vec::new());
    }
    let hits = index.top_k_by_key(query, k, None)?;
    Ok(hits.into_iter().map(|hit| ScoredId { id: hit.key, score: hit.score }).collect())
}

/// Raw-datatype names accepted by [`compile_schema`], mapped to the factual
/// datatypes kept in a compiled schema.
fn factual_datatype(raw: &str) -> Option<Datatype> {
    match raw {
        "WikibaseItem" | "wikibase-item" | "item" => Some(Datatype::Item),
        "Quantity" | "quantity" => Some(Datatype::Quantity),
        "Time" | "time" | "point-in-time" | "Point in time" => Some(Datatype::PointInTime),
        "String" | "string" => Some(Datatype::String),
        _ => None,
    }
}

/// Counters reported by [`compile_schema`].
#[derive(Debug, Default, Clone, Serialize)]
pub struct CompileReport {
    pub types_kept: usize,
    pub properties_kept: usize,
    pub properties_dropped: usize,
    /// Dropped-property counts grouped by their raw datatype name.
    pub dropped_by_datatype: BTreeMap<String, usize>,
}

/// Convert raw dump rows into the schema file format, keeping only the four
/// factual datatypes. Raw rows use the same shape as schema records except
/// that a property's `datatype` carries the dump's raw name (for example
/// `"ExternalId"` or `"WikibaseItem"`).
pub fn compile_schema(
    reader: impl BufRead,
    mut writer: impl Write,
) -> Result<CompileReport, OntologyError> {
    let mut report = CompileReport::default();
    let mut seen_types: HashSet<String> = HashSet::new();
    let mut seen_properties: HashSet<String> = HashSet::new();

    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| OntologyError::Parse { line: line_no, message: e.to_string() })?;
        let kind = value
            .get("kind")
            .and_then(|k| k.as_str())
            .ok_or_else(|| OntologyError::Parse {
                line: line_no,
                message: "record is missing the \"kind\" discriminator".into(),
            })?
            .to_string();
        match kind.as_str() {
            "type" => {
                let id = value.get("type_id").and_then(|v| v.as_str()).ok_or_else(|| {
                    OntologyError::Parse { line: line_no, message: "type row missing type_id".into() }
                })?;
                if !seen_types.insert(id.to_string()) {
                    return Err(OntologyError::DuplicateId { line: line_no, id: id.to_string() });
                }
                writeln!(writer, "{value}")?;
                report.types_kept += 1;
            }
            "property" => {
                let id = value
                    .get("property_id")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| OntologyError::Parse {
                        line: line_no,
                        message: "property row missing property_id".into(),
                    })?
                    .to_string();
                if !seen_properties.insert(id.clone()) {
                    return Err(OntologyError::DuplicateId { line: line_no, id });
                }
                let raw = value
                    .get("datatype")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| OntologyError::Parse {
                        line: line_no,
                        message: format!("property {id} has no datatype"),
                    })?
                    .to_string();
                match factual_datatype(&raw) {
                    Some(datatype) => {
                        value["datatype"] =
                            serde_json::to_value(datatype).expect("serializable");
                        writeln!(writer, "{value}")?;
                        report.properties_kept += 1;
                    }
                    None => {
                        report.properties_dropped += 1;
                        *report.dropped_by_datatype.entry(raw).or_insert(0) += 1;
                    }
                }
            }
            other => {
                return Err(OntologyError::Parse {
                    line: line_no,
                    message: format!("unknown record kind {other:?}"),
                });
            }
        }
    }
    Ok(report)
}
