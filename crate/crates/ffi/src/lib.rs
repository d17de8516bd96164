//! C ABI over the knowledge-graph engine: opaque handles for schemas and
//! stores, integer status codes, and a thread-local last-error message.
//!
//! The header `include/ontokg.h` is generated by cbindgen at build time.
//! Stores created through this interface use the deterministic hashed
//! 3-gram embedder, so alias search behaves identically everywhere the
//! library is embedded.
//!
//! Conventions:
//! - Functions returning a pointer return NULL on failure.
//! - Functions returning `int32_t` return 0 (or a documented non-negative
//!   value) on success and a negative [`OntokgStatus`] on failure.
//! - After any failure, `ontokg_last_error_message` describes it; the
//!   pointer stays valid until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::ptr;
use std::sync::Arc;

use ontokg::analytics::{graph_stats, ontology_entailment};
use ontokg::embed::HashEmbedder;
use ontokg::kg::{EntityId, InsertOutcome, KgStore, Qualifier, Relation};
use ontokg::ontology::{
    load_schema, Alignment, MisalignmentReason, OntologySchema, PropertyId, TypeId,
};
use ontokg::qa::score;

/// Opaque handle to a loaded, immutable ontology schema.
pub struct OntokgSchema {
    inner: OntologySchema,
}

/// Opaque handle to a knowledge-graph store.
pub struct OntokgKg {
    inner: KgStore,
}

/// Status codes returned by fallible functions.
#[repr(i32)]
#[derive(Clone, Copy)]
pub enum OntokgStatus {
    Ok = 0,
    /// A pointer was NULL, a string was not UTF-8, or a value was out of
    /// range.
    InvalidArgument = -1,
    /// File could not be read or written.
    Io = -2,
    /// The input parsed but violated the format or a store constraint.
    Data = -3,
    /// A referenced record does not exist.
    NotFound = -4,
}

/// Verdict codes returned by `ontokg_check_alignment`.
#[repr(i32)]
#[derive(Clone, Copy)]
pub enum OntokgAlignment {
    Aligned = 0,
    UnknownProperty = 1,
    UnknownType = 2,
    DomainViolation = 3,
    RangeViolation = 4,
}

/// Graph statistics as plain C data.
#[repr(C)]
pub struct OntokgGraphStats {
    pub num_entities: usize,
    pub num_relations: usize,
    pub avg_entity_degree: f64,
    pub unique_entities_per_relation: f64,
    pub relation_diversity_per_pair: f64,
}

/// EM/F1 verdict for one scored answer.
#[repr(C)]
pub struct OntokgScore {
    /// 1 when the prediction exactly matches a gold (after normalization
    /// and alias expansion), else 0.
    pub exact_match: i32,
    pub f1: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").expect("empty"));
}

fn set_error(message: impl std::fmt::Display) {
    let text = message.to_string().replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(text).unwrap_or_default();
    });
}

/// Message describing the most recent failure on this thread. Never NULL;
/// empty before the first failure. Valid until the next failing call.
#[no_mangle]
pub extern "C" fn ontokg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

unsafe fn utf8_arg<'a>(pointer: *const c_char, name: &str) -> Result<&'a str, OntokgStatus> {
    if pointer.is_null() {
        set_error(format!("{name} must not be NULL"));
        return Err(OntokgStatus::InvalidArgument);
    }
    match CStr::from_ptr(pointer).to_str() {
        Ok(text) => Ok(text),
        Err(_) => {
            set_error(format!("{name} is not valid UTF-8"));
            Err(OntokgStatus::InvalidArgument)
        }
    }
}

fn embedder() -> Arc<HashEmbedder> {
    Arc::new(HashEmbedder::new())
}

/// Load a schema file (the compiled newline-delimited format).
///
/// # Safety
/// `path` must be a valid NUL-terminated string pointer.
#[no_mangle]
pub unsafe extern "C" fn ontokg_schema_load(path: *const c_char) -> *mut OntokgSchema {
    let Ok(path) = utf8_arg(path, "path") else { return ptr::null_mut() };
    let file = match File::open(Path::new(path)) {
        Ok(file) => file,
        Err(error) => {
            set_error(format!("cannot open {path}: {error}"));
            return ptr::null_mut();
        }
    };
    match load_schema(BufReader::new(file)) {
        Ok((schema, _report)) => Box::into_raw(Box::new(OntokgSchema { inner: schema })),
        Err(error) => {
            set_error(error);
            ptr::null_mut()
        }
    }
}

/// # Safety
/// `schema` must be a pointer from `ontokg_schema_load`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ontokg_schema_free(schema: *mut OntokgSchema) {
    if !schema.is_null() {
        drop(Box::from_raw(schema));
    }
}

/// # Safety
/// `schema` must be valid or NULL (NULL counts as zero).
#[no_mangle]
pub unsafe extern "C" fn ontokg_schema_type_count(schema: *const OntokgSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.inner.type_count())
}

/// # Safety
/// `schema` must be valid or NULL (NULL counts as zero).
#[no_mangle]
pub unsafe extern "C" fn ontokg_schema_property_count(schema: *const OntokgSchema) -> usize {
    schema.as_ref().map_or(0, |s| s.inner.property_count())
}

/// Verify one triplet backbone against the schema. Returns an
/// `OntokgAlignment` code (>= 0), or a negative status on bad arguments.
///
/// # Safety
/// `schema` must be valid; the id arguments must be NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ontokg_check_alignment(
    schema: *const OntokgSchema,
    subject_type: *const c_char,
    property: *const c_char,
    object_type: *const c_char,
) -> i32 {
    let Some(schema) = schema.as_ref() else {
        set_error("schema must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    };
    let (Ok(s), Ok(p), Ok(o)) = (
        utf8_arg(subject_type, "subject_type"),
        utf8_arg(property, "property"),
        utf8_arg(object_type, "object_type"),
    ) else {
        return OntokgStatus::InvalidArgument as i32;
    };
    let verdict = schema.inner.check_alignment(
        &TypeId::new(s),
        &PropertyId::new(p),
        &TypeId::new(o),
    );
    match verdict {
        Alignment::Aligned => OntokgAlignment::Aligned as i32,
        Alignment::Misaligned(MisalignmentReason::UnknownProperty) => {
            OntokgAlignment::UnknownProperty as i32
        }
        Alignment::Misaligned(MisalignmentReason::UnknownType) => {
            OntokgAlignment::UnknownType as i32
        }
        Alignment::Misaligned(MisalignmentReason::DomainViolation) => {
            OntokgAlignment::DomainViolation as i32
        }
        Alignment::Misaligned(MisalignmentReason::RangeViolation) => {
            OntokgAlignment::RangeViolation as i32
        }
    }
}

/// Create an empty store.
#[no_mangle]
pub extern "C" fn ontokg_kg_new() -> *mut OntokgKg {
    Box::into_raw(Box::new(OntokgKg { inner: KgStore::new(embedder()) }))
}

/// Open a store from a snapshot file.
///
/// # Safety
/// `path` must be a valid NUL-terminated string pointer.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_import(path: *const c_char) -> *mut OntokgKg {
    let Ok(path) = utf8_arg(path, "path") else { return ptr::null_mut() };
    let file = match File::open(Path::new(path)) {
        Ok(file) => file,
        Err(error) => {
            set_error(format!("cannot open {path}: {error}"));
            return ptr::null_mut();
        }
    };
    match KgStore::import(BufReader::new(file), embedder()) {
        Ok(store) => Box::into_raw(Box::new(OntokgKg { inner: store })),
        Err(error) => {
            set_error(error);
            ptr::null_mut()
        }
    }
}

/// Write the store's snapshot to a file.
///
/// # Safety
/// `kg` must be valid; `path` must be a NUL-terminated string pointer.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_export(kg: *const OntokgKg, path: *const c_char) -> i32 {
    let Some(kg) = kg.as_ref() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    };
    let Ok(path) = utf8_arg(path, "path") else {
        return OntokgStatus::InvalidArgument as i32;
    };
    let file = match File::create(Path::new(path)) {
        Ok(file) => file,
        Err(error) => {
            set_error(format!("cannot create {path}: {error}"));
            return OntokgStatus::Io as i32;
        }
    };
    match kg.inner.export(BufWriter::new(file)) {
        Ok(()) => OntokgStatus::Ok as i32,
        Err(error) => {
            set_error(error);
            OntokgStatus::Io as i32
        }
    }
}

/// # Safety
/// `kg` must be a pointer from `ontokg_kg_new`/`ontokg_kg_import`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_free(kg: *mut OntokgKg) {
    if !kg.is_null() {
        drop(Box::from_raw(kg));
    }
}

/// # Safety
/// `kg` must be valid or NULL (NULL counts as zero).
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_entity_count(kg: *const OntokgKg) -> usize {
    kg.as_ref().map_or(0, |k| k.inner.entity_count())
}

/// # Safety
/// `kg` must be valid or NULL (NULL counts as zero).
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_triplet_count(kg: *const OntokgKg) -> usize {
    kg.as_ref().map_or(0, |k| k.inner.triplet_count())
}

/// Insert an entity (idempotent on label + type). Returns the entity id
/// (>= 1), or a negative status.
///
/// # Safety
/// `kg` must be valid and not shared with other threads during the call;
/// string arguments must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_insert_entity(
    kg: *mut OntokgKg,
    label: *const c_char,
    type_id: *const c_char,
) -> i64 {
    let Some(kg) = kg.as_mut() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i64;
    };
    let (Ok(label), Ok(type_id)) = (utf8_arg(label, "label"), utf8_arg(type_id, "type_id"))
    else {
        return OntokgStatus::InvalidArgument as i64;
    };
    match kg.inner.insert_entity(label, &TypeId::new(type_id)) {
        Ok(EntityId(id)) => id as i64,
        Err(error) => {
            set_error(error);
            OntokgStatus::InvalidArgument as i64
        }
    }
}

/// Record one more surface form for an entity.
///
/// # Safety
/// Same contract as `ontokg_kg_insert_entity`.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_add_alias(
    kg: *mut OntokgKg,
    entity_id: u64,
    alias: *const c_char,
) -> i32 {
    let Some(kg) = kg.as_mut() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    };
    let Ok(alias) = utf8_arg(alias, "alias") else {
        return OntokgStatus::InvalidArgument as i32;
    };
    match kg.inner.add_alias(EntityId(entity_id), alias) {
        Ok(_) => OntokgStatus::Ok as i32,
        Err(ontokg::kg::KgError::NotFound(_)) => {
            set_error(format!("entity {entity_id} not found"));
            OntokgStatus::NotFound as i32
        }
        Err(error) => {
            set_error(error);
            OntokgStatus::InvalidArgument as i32
        }
    }
}

/// Store a triplet. `property_id` may be NULL for a surface relation, in
/// which case `label` carries the surface text. `qualifiers_json` may be
/// NULL or a JSON list of `{"relation", "object"}` objects. Returns 0 when
/// stored, 1 when it merged into an existing duplicate, negative on error.
///
/// # Safety
/// Same contract as `ontokg_kg_insert_entity`.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_insert_triplet(
    kg: *mut OntokgKg,
    subject_id: u64,
    property_id: *const c_char,
    label: *const c_char,
    object_id: u64,
    aligned: bool,
    qualifiers_json: *const c_char,
) -> i32 {
    let Some(kg) = kg.as_mut() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    };
    let Ok(label) = utf8_arg(label, "label") else {
        return OntokgStatus::InvalidArgument as i32;
    };
    let relation = if property_id.is_null() {
        Relation::surface(label)
    } else {
        let Ok(property_id) = utf8_arg(property_id, "property_id") else {
            return OntokgStatus::InvalidArgument as i32;
        };
        Relation::property(property_id, label)
    };
    let qualifiers: Vec<Qualifier> = if qualifiers_json.is_null() {
        Vec::new()
    } else {
        let Ok(raw) = utf8_arg(qualifiers_json, "qualifiers_json") else {
            return OntokgStatus::InvalidArgument as i32;
        };
        match serde_json::from_str(raw) {
            Ok(qualifiers) => qualifiers,
            Err(error) => {
                set_error(format!("qualifiers_json: {error}"));
                return OntokgStatus::Data as i32;
            }
        }
    };
    match kg.inner.insert_triplet(
        EntityId(subject_id),
        relation,
        EntityId(object_id),
        qualifiers,
        aligned,
        Vec::new(),
    ) {
        Ok(InsertOutcome::Stored) => 0,
        Ok(InsertOutcome::Deduplicated) => 1,
        Err(error) => {
            set_error(error);
            OntokgStatus::Data as i32
        }
    }
}

/// Size (entity count) of the k-hop neighborhood around the seed ids.
/// Unknown seeds are ignored. Returns a negative status on bad arguments.
///
/// # Safety
/// `kg` must be valid; `seeds` must point to `seed_count` readable ids.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_neighborhood_size(
    kg: *const OntokgKg,
    seeds: *const u64,
    seed_count: usize,
    hops: usize,
) -> i64 {
    let Some(kg) = kg.as_ref() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i64;
    };
    if seeds.is_null() && seed_count > 0 {
        set_error("seeds must not be NULL when seed_count > 0");
        return OntokgStatus::InvalidArgument as i64;
    }
    let seed_ids: Vec<EntityId> = (0..seed_count)
        .map(|offset| EntityId(*seeds.add(offset)))
        .collect();
    kg.inner.neighborhood(&seed_ids, hops).entities.len() as i64
}

/// Fill `out` with the five structural statistics.
///
/// # Safety
/// `kg` must be valid; `out` must point to writable memory for one struct.
#[no_mangle]
pub unsafe extern "C" fn ontokg_kg_stats(
    kg: *const OntokgKg,
    out: *mut OntokgGraphStats,
) -> i32 {
    let Some(kg) = kg.as_ref() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    };
    if out.is_null() {
        set_error("out must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    }
    let stats = graph_stats(&kg.inner);
    (*out) = OntokgGraphStats {
        num_entities: stats.num_entities,
        num_relations: stats.num_relations,
        avg_entity_degree: stats.avg_entity_degree,
        unique_entities_per_relation: stats.unique_entities_per_relation,
        relation_diversity_per_pair: stats.relation_diversity_per_pair,
    };
    OntokgStatus::Ok as i32
}

/// Percentage (0..=100) of stored triplets whose backbone re-verifies as
/// aligned under the schema; 100 for an empty store. Negative on error.
///
/// # Safety
/// Both handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn ontokg_entailment_percentage(
    kg: *const OntokgKg,
    schema: *const OntokgSchema,
) -> f64 {
    let (Some(kg), Some(schema)) = (kg.as_ref(), schema.as_ref()) else {
        set_error("kg and schema must not be NULL");
        return -1.0;
    };
    ontology_entailment(&kg.inner, &schema.inner).percentage
}

/// Score a predicted answer against gold answers with the store's alias
/// expansion.
///
/// # Safety
/// `kg` must be valid; `golds` must point to `gold_count` NUL-terminated
/// strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ontokg_score_answer(
    kg: *const OntokgKg,
    predicted: *const c_char,
    golds: *const *const c_char,
    gold_count: usize,
    out: *mut OntokgScore,
) -> i32 {
    let Some(kg) = kg.as_ref() else {
        set_error("kg must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    };
    if out.is_null() {
        set_error("out must not be NULL");
        return OntokgStatus::InvalidArgument as i32;
    }
    let Ok(predicted) = utf8_arg(predicted, "predicted") else {
        return OntokgStatus::InvalidArgument as i32;
    };
    if golds.is_null() || gold_count == 0 {
        set_error("golds must contain at least one answer");
        return OntokgStatus::InvalidArgument as i32;
    }
    let mut gold_answers = Vec::with_capacity(gold_count);
    for offset in 0..gold_count {
        let Ok(gold) = utf8_arg(*golds.add(offset), "golds[..]") else {
            return OntokgStatus::InvalidArgument as i32;
        };
        gold_answers.push(gold.to_string());
    }
    let result = score(predicted, &gold_answers, &kg.inner);
    (*out) = OntokgScore { exact_match: i32::from(result.exact_match), f1: result.f1 };
    OntokgStatus::Ok as i32
}
