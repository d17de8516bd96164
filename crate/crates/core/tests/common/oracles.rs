//! Independent brute-force implementations and randomized generators. These
//! never call the code paths they check: closure is re-derived by DFS over
//! raw parent lists, distances by edge relaxation instead of BFS, and the
//! statistics by separate counting loops.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use rand::prelude::*;
use rand::rngs::StdRng;

use ontokg::embed::HashEmbedder;
use ontokg::kg::{EntityId, KgStore, Provenance, Qualifier, Relation};
use ontokg::ontology::{load_schema, OntologySchema, TypeId};
use ontokg::qa::QaDatasetRecord;

/// Raw schema rows the oracles operate on, kept separate from the engine's
/// parsed representation.
#[derive(Debug, Clone)]
pub struct RawSchema {
    /// (type id, parent ids)
    pub types: Vec<(String, Vec<String>)>,
    /// (property id, allowed subject types, allowed object types)
    pub properties: Vec<(String, BTreeSet<String>, BTreeSet<String>)>,
}

impl RawSchema {
    pub fn type_ids(&self) -> Vec<&str> {
        self.types.iter().map(|(id, _)| id.as_str()).collect()
    }
}

/// DFS reachability over parent edges, visited-set guarded (cycles are fine).
pub fn brute_ancestors(raw: &RawSchema, start: &str) -> BTreeSet<String> {
    let parents: HashMap<&str, &Vec<String>> =
        raw.types.iter().map(|(id, p)| (id.as_str(), p)).collect();
    let mut reached: BTreeSet<String> = BTreeSet::new();
    let mut stack = vec![start.to_string()];
    while let Some(node) = stack.pop() {
        if !reached.insert(node.clone()) {
            continue;
        }
        if let Some(ps) = parents.get(node.as_str()) {
            for parent in ps.iter() {
                if !reached.contains(parent) {
                    stack.push(parent.clone());
                }
            }
        }
    }
    reached
}

/// Reachability for every node, so repeated constraint checks reuse the DFS
/// results.
pub fn brute_ancestors_all(raw: &RawSchema) -> BTreeMap<String, BTreeSet<String>> {
    raw.types.iter().map(|(id, _)| (id.clone(), brute_ancestors(raw, id))).collect()
}

fn brute_slot_accepts(
    ancestors: &BTreeMap<String, BTreeSet<String>>,
    allowed: &BTreeSet<String>,
    t: &str,
) -> bool {
    allowed.is_empty() || ancestors[t].iter().any(|a| allowed.contains(a))
}

/// Every (property, forward?, inverse?) verdict, by direct evaluation of the
/// constraint predicate for both role assignments.
pub fn brute_allowed(
    raw: &RawSchema,
    ancestors: &BTreeMap<String, BTreeSet<String>>,
    s: &str,
    o: &str,
) -> Vec<(String, bool, bool)> {
    let mut out = Vec::new();
    for (pid, subjects, objects) in &raw.properties {
        let forward = brute_slot_accepts(ancestors, subjects, s)
            && brute_slot_accepts(ancestors, objects, o);
        let inverse = brute_slot_accepts(ancestors, subjects, o)
            && brute_slot_accepts(ancestors, objects, s);
        out.push((pid.clone(), forward, inverse));
    }
    out
}

pub fn brute_aligned(
    raw: &RawSchema,
    ancestors: &BTreeMap<String, BTreeSet<String>>,
    s: &str,
    p: &str,
    o: &str,
) -> bool {
    if !ancestors.contains_key(s) || !ancestors.contains_key(o) {
        return false;
    }
    match raw.properties.iter().find(|(pid, _, _)| pid == p) {
        Some((_, subjects, objects)) => {
            brute_slot_accepts(ancestors, subjects, s)
                && brute_slot_accepts(ancestors, objects, o)
        }
        None => false,
    }
}

/// Random DAG schema: parents point only at earlier types, constraint sets
/// are random subsets (often empty, i.e. unconstrained).
pub fn random_schema(rng: &mut StdRng, max_types: usize, max_properties: usize) -> (OntologySchema, RawSchema) {
    let type_count = rng.random_range(1..=max_types);
    let property_count = rng.random_range(0..=max_properties);

    let mut types = Vec::with_capacity(type_count);
    for i in 0..type_count {
        let mut parents = Vec::new();
        if i > 0 {
            let parent_count = rng.random_range(0..=2.min(i));
            while parents.len() < parent_count {
                let parent = format!("t{}", rng.random_range(0..i));
                if !parents.contains(&parent) {
                    parents.push(parent);
                }
            }
        }
        types.push((format!("t{i}"), parents));
    }

    let random_type_set = |rng: &mut StdRng| -> BTreeSet<String> {
        if rng.random_bool(0.3) {
            return BTreeSet::new();
        }
        let size = rng.random_range(1..=3.min(type_count));
        let mut set = BTreeSet::new();
        while set.len() < size {
            set.insert(format!("t{}", rng.random_range(0..type_count)));
        }
        set
    };
    let mut properties = Vec::with_capacity(property_count);
    for i in 0..property_count {
        properties.push((format!("p{i}"), random_type_set(rng), random_type_set(rng)));
    }

    let raw = RawSchema { types, properties };
    let mut lines = Vec::new();
    for (id, parents) in &raw.types {
        lines.push(
            serde_json::json!({
                "kind": "type", "type_id": id, "label": format!("{id} label"),
                "aliases": [], "parents": parents,
            })
            .to_string(),
        );
    }
    for (id, subjects, objects) in &raw.properties {
        lines.push(
            serde_json::json!({
                "kind": "property", "property_id": id, "label": format!("{id} label"),
                "aliases": [], "datatype": "item",
                "allowed_subject_types": subjects, "allowed_object_types": objects,
            })
            .to_string(),
        );
    }
    let (schema, _) = load_schema(lines.join("\n").as_bytes()).unwrap();
    (schema, raw)
}

/// Random store over a random schema: entities typed from the schema (some
/// untyped), triplets mixing property and surface relations, aliases,
/// qualifiers, and provenance.
pub fn random_kg(rng: &mut StdRng, max_entities: usize) -> (KgStore, OntologySchema, RawSchema) {
    let (schema, raw) = random_schema(rng, 8, 6);
    let mut kg = KgStore::new(Arc::new(HashEmbedder::new()));

    let entity_count = rng.random_range(1..=max_entities);
    let mut ids: Vec<EntityId> = Vec::with_capacity(entity_count);
    for i in 0..entity_count {
        let type_id = if rng.random_bool(0.15) {
            ontokg::kg::untyped_type_id()
        } else {
            TypeId::new(format!("t{}", rng.random_range(0..raw.types.len())))
        };
        let id = kg.insert_entity(&format!("entity {i}"), &type_id).unwrap();
        if rng.random_bool(0.4) {
            kg.add_alias(id, &format!("alias {i}")).unwrap();
        }
        if rng.random_bool(0.15) {
            kg.add_alias(id, &format!("shared alias {}", rng.random_range(0..3))).unwrap();
        }
        ids.push(id);
    }

    let triplet_count = rng.random_range(0..=max_entities * 2);
    for i in 0..triplet_count {
        let subject = ids[rng.random_range(0..ids.len())];
        let object = ids[rng.random_range(0..ids.len())];
        let relation = if raw.properties.is_empty() || rng.random_bool(0.3) {
            Relation::surface(format!("surface relation {}", rng.random_range(0..4)))
        } else {
            let pid = &raw.properties[rng.random_range(0..raw.properties.len())].0;
            Relation::property(pid.clone(), format!("{pid} label"))
        };
        let qualifiers = if rng.random_bool(0.25) {
            vec![Qualifier {
                relation: "point in time".into(),
                object: format!("{}", 1990 + rng.random_range(0..30)),
            }]
        } else {
            vec![]
        };
        let provenance = vec![Provenance {
            document_id: format!("doc{}", rng.random_range(0..4)),
            start: i,
            end: i + 10,
        }];
        kg.insert_triplet(subject, relation, object, qualifiers, rng.random_bool(0.5), provenance)
            .unwrap();
    }
    (kg, schema, raw)
}

/// The five statistics recomputed with independent loops: degree by summing
/// per-entity incidences, the rest by scanning triplets per relation / pair.
pub fn brute_graph_stats(kg: &KgStore) -> (usize, usize, f64, f64, f64) {
    let entities: Vec<EntityId> = kg.entities().map(|e| e.id).collect();
    if entities.is_empty() {
        return (0, 0, 0.0, 0.0, 0.0);
    }

    let mut relation_names: BTreeSet<String> = BTreeSet::new();
    for triplet in kg.triplets() {
        relation_names.insert(triplet.relation.display_label().to_string());
    }

    let mut incidence_sum = 0usize;
    for entity in &entities {
        for triplet in kg.triplets() {
            if triplet.subject_id == *entity {
                incidence_sum += 1;
            }
            if triplet.object_id == *entity {
                incidence_sum += 1;
            }
        }
    }
    let avg_degree = incidence_sum as f64 / entities.len() as f64;

    let mut per_relation = Vec::new();
    for name in &relation_names {
        let mut incident: BTreeSet<EntityId> = BTreeSet::new();
        for triplet in kg.triplets() {
            if triplet.relation.display_label() == name {
                incident.insert(triplet.subject_id);
                incident.insert(triplet.object_id);
            }
        }
        per_relation.push(incident.len() as f64);
    }
    let unique_entities_per_relation = if per_relation.is_empty() {
        0.0
    } else {
        per_relation.iter().sum::<f64>() / per_relation.len() as f64
    };

    let mut pairs: BTreeSet<(EntityId, EntityId)> = BTreeSet::new();
    for triplet in kg.triplets() {
        let pair = if triplet.subject_id <= triplet.object_id {
            (triplet.subject_id, triplet.object_id)
        } else {
            (triplet.object_id, triplet.subject_id)
        };
        pairs.insert(pair);
    }
    let mut diversity_sum = 0.0;
    for (a, b) in &pairs {
        let mut names: BTreeSet<&str> = BTreeSet::new();
        for triplet in kg.triplets() {
            let pair = if triplet.subject_id <= triplet.object_id {
                (triplet.subject_id, triplet.object_id)
            } else {
                (triplet.object_id, triplet.subject_id)
            };
            if pair == (*a, *b) {
                names.insert(triplet.relation.display_label());
            }
        }
        diversity_sum += names.len() as f64;
    }
    let diversity =
        if pairs.is_empty() { 0.0 } else { diversity_sum / pairs.len() as f64 };

    (entities.len(), relation_names.len(), avg_degree, unique_entities_per_relation, diversity)
}

/// Distances by iterative edge relaxation (not BFS): relax every undirected
/// edge until a fixed point.
pub fn brute_distances(kg: &KgStore, sources: &BTreeSet<EntityId>) -> BTreeMap<EntityId, usize> {
    let mut dist: BTreeMap<EntityId, usize> = sources.iter().map(|s| (*s, 0)).collect();
    let mut changed = true;
    while changed {
        changed = false;
        for triplet in kg.triplets() {
            let (s, o) = (triplet.subject_id, triplet.object_id);
            if let Some(&ds) = dist.get(&s) {
                if dist.get(&o).is_none_or(|&d| d > ds + 1) {
                    dist.insert(o, ds + 1);
                    changed = true;
                }
            }
            if let Some(&d_o) = dist.get(&o) {
                if dist.get(&s).is_none_or(|&d| d > d_o + 1) {
                    dist.insert(s, d_o + 1);
                    changed = true;
                }
            }
        }
    }
    dist
}

/// Independently written normalization + bidirectional substring test.
pub fn brute_match(a: &str, b: &str, min_chars: usize) -> bool {
    fn norm(s: &str) -> String {
        let mut out = String::new();
        let mut last_space = true;
        for c in s.to_lowercase().chars() {
            if c.is_alphanumeric() {
                out.push(c);
                last_space = false;
            } else if c.is_whitespace() && !last_space {
                out.push(' ');
                last_space = true;
            }
        }
        out.trim_end().to_string()
    }
    let a = norm(a);
    let b = norm(b);
    if a.is_empty() || b.is_empty() {
        return false;
    }
    if a == b {
        return true;
    }
    let (short, long) = if a.chars().count() <= b.chars().count() { (&a, &b) } else { (&b, &a) };
    short.chars().count() >= min_chars && long.contains(short.as_str())
}

fn brute_matching_entities(kg: &KgStore, surface: &str, min_chars: usize) -> BTreeSet<EntityId> {
    kg.entities()
        .filter(|e| e.aliases.iter().any(|alias| brute_match(alias, surface, min_chars)))
        .map(|e| e.id)
        .collect()
}

/// Per-question coverage verdicts computed the long way around.
pub struct BruteCoverage {
    pub total_hits: usize,
    pub khop_hits: BTreeMap<usize, usize>,
}

pub fn brute_coverage(
    kg: &KgStore,
    records: &[QaDatasetRecord],
    hops: &[usize],
    min_chars: usize,
) -> BruteCoverage {
    let mut total_hits = 0;
    let mut khop_hits: BTreeMap<usize, usize> = hops.iter().map(|k| (*k, 0)).collect();
    for record in records {
        let mut answers: BTreeSet<EntityId> = BTreeSet::new();
        for gold in &record.answers {
            answers.append(&mut brute_matching_entities(kg, gold, min_chars));
        }
        if !answers.is_empty() {
            total_hits += 1;
        }
        let mut question_entities: BTreeSet<EntityId> = BTreeSet::new();
        for surface in record.question_entities.as_deref().unwrap_or(&[]) {
            question_entities.append(&mut brute_matching_entities(kg, surface, min_chars));
        }
        let dist = brute_distances(kg, &question_entities);
        for k in hops {
            if !question_entities.is_empty()
                && answers.iter().any(|e| dist.get(e).is_some_and(|d| *d <= *k))
            {
                *khop_hits.get_mut(k).unwrap() += 1;
            }
        }
    }
    BruteCoverage { total_hits, khop_hits }
}

pub fn brute_entailment(kg: &KgStore, raw: &RawSchema) -> (usize, usize) {
    let ancestors = brute_ancestors_all(raw);
    let mut aligned = 0;
    let total = kg.triplet_count();
    for triplet in kg.triplets() {
        if let Relation::Property { property_id, .. } = &triplet.relation {
            let s = &kg.entity(triplet.subject_id).unwrap().type_id;
            let o = &kg.entity(triplet.object_id).unwrap().type_id;
            if brute_aligned(raw, &ancestors, s.as_str(), property_id.as_str(), o.as_str()) {
                aligned += 1;
            }
        }
    }
    (aligned, total)
}

/// Synthetic QA records over a store: a mix of real labels, fragments, and
/// misses for both question entities and answers.
pub fn random_qa_records(
    rng: &mut StdRng,
    kg: &KgStore,
    count: usize,
) -> Vec<QaDatasetRecord> {
    let labels: Vec<String> = kg.entities().map(|e| e.canonical_label.clone()).collect();
    let pick_surface = |rng: &mut StdRng| -> String {
        if labels.is_empty() || rng.random_bool(0.2) {
            return format!("no such thing {}", rng.random_range(0..100));
        }
        let label = labels[rng.random_range(0..labels.len())].clone();
        if rng.random_bool(0.3) {
            // A fragment, to exercise the substring side of matching.
            label.split_whitespace().next().unwrap_or(&label).to_string()
        } else {
            label
        }
    };
    (0..count)
        .map(|i| {
            let question_entities: Vec<String> =
                (0..rng.random_range(1..=2)).map(|_| pick_surface(rng)).collect();
            let answers: Vec<String> =
                (0..rng.random_range(1..=2)).map(|_| pick_surface(rng)).collect();
            QaDatasetRecord {
                id: format!("q{i}"),
                question: format!("synthetic question {i}"),
                answers,
                question_entities: Some(question_entities),
            }
        })
        .collect()
}
