//! Ontology-constrained knowledge graph construction from unstructured text.
//!
//! The pipeline extracts candidate triplets with an LLM, refines them against
//! a Wikidata-style type/property schema (entity typing, domain/range-valid
//! relation selection), and normalizes entity names against the growing graph
//! so duplicate surface forms merge into one canonical entity. The resulting
//! graph is the sole knowledge source for an iterative multi-hop QA loop, and
//! its quality is measured with structural, coverage, and entailment metrics.
//!
//! Module map:
//! - [`ontology`]: schema records, taxonomy closure, constraint queries.
//! - [`embed`]: embedding backends and the exact top-k cosine index.
//! - [`llm`]: the single gateway for LLM calls, with scripted replay.
//! - [`kg`]: the entity/triplet store with alias search and snapshots.
//! - [`extract`]: the three-stage construction pipeline plus verification.
//! - [`qa`]: KG-only multi-hop question answering and answer scoring.
//! - [`analytics`]: graph statistics, answer coverage, entailment.
//! - [`config`]: run configuration shared by the CLI.

pub mod analytics;
pub mod config;
pub mod embed;
pub mod extract;
pub mod kg;
pub mod llm;
pub mod ontology;
pub mod qa;
