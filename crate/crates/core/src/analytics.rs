//! Graph quality metrics over a store snapshot: structural statistics,
//! answer coverage (total and k-hop), ontology entailment, and neighborhood
//! size profiles. Everything here is a pure function of its inputs, so two
//! runs over the same snapshot produce byte-identical reports.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::kg::{EntityId, KgStore};
use crate::ontology::OntologySchema;
use crate::qa::{normalize_answer, QaDatasetRecord};

#[derive(Debug, Error)]
pub enum AnalyticsError {
    #[error("record {0:?} carries no question entities, which coverage requires")]
    MissingQuestionEntities(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Minimum normalized length for the substring side of surface matching;
/// below it only exact equality counts, so one-letter fragments cannot match
/// everything.
pub const DEFAULT_MIN_MATCH_CHARS: usize = 3;

/// Hops reported by default in coverage tables.
pub const DEFAULT_HOP_LIST: [usize; 2] = [5, 10];

/// Normalized bidirectional substring test with a minimum-length guard.
pub fn surfaces_match(a: &str, b: &str, min_match_chars: usize) -> bool {
    let a = normalize_answer(a);
    let b = normalize_answer(b);
    if a.is_empty() || b.is_empty() {
        return false;
    }
    if a == b {
        return true;
    }
    let (shorter, longer) = if a.chars().count() <= b.chars().count() { (&a, &b) } else { (&b, &a) };
    shorter.chars().count() >= min_match_chars && longer.contains(shorter.as_str())
}

/// Entities whose label or any alias matches the surface.
fn matching_entities(kg: &KgStore, surface: &str, min_match_chars: usize) -> BTreeSet<EntityId> {
    kg.entities()
        .filter(|entity| {
            entity.aliases.iter().any(|alias| surfaces_match(alias, surface, min_match_chars))
        })
        .map(|entity| entity.id)
        .collect()
}

fn adjacency(kg: &KgStore) -> HashMap<EntityId, Vec<EntityId>> {
    let mut edges: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
    for triplet in kg.triplets() {
        edges.entry(triplet.subject_id).or_default().push(triplet.object_id);
        edges.entry(triplet.object_id).or_default().push(triplet.subject_id);
    }
    edges
}

/// Multi-source BFS distances over undirected edges; sources sit at 0.
fn distances(kg: &KgStore, sources: &BTreeSet<EntityId>) -> HashMap<EntityId, usize> {
    let edges = adjacency(kg);
    let mut dist: HashMap<EntityId, usize> = HashMap::new();
    let mut queue: VecDeque<EntityId> = VecDeque::new();
    for source in sources {
        dist.insert(*source, 0);
        queue.push_back(*source);
    }
    while let Some(node) = queue.pop_front() {
        let d = dist[&node];
        if let Some(neighbors) = edges.get(&node) {
            for neighbor in neighbors {
                if !dist.contains_key(neighbor) {
                    dist.insert(*neighbor, d + 1);
                    queue.push_back(*neighbor);
                }
            }
        }
    }
    dist
}

/// Structural statistics mirroring the size / density / diversity view of a
/// graph: entity and relation counts, multigraph average degree, how many
/// distinct entities each relation touches, and how many distinct relations
/// connect a connected entity pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub num_entities: usize,
    /// Distinct relation names (property labels and surface relations).
    pub num_relations: usize,
    /// 2 ·|triplets| / |entities| (triplet incidences, not distinct
    /// neighbors).
    pub avg_entity_degree: f64,
    /// Mean over relations of the number of distinct incident entities.
    pub unique_entities_per_relation: f64,
    /// Mean over connected unordered entity pairs of the number of distinct
    /// relations between them.
    pub relation_diversity_per_pair: f64,
}

pub fn graph_stats(kg: &KgStore) -> GraphStats {
    let num_entities = kg.entity_count();
    if num_entities == 0 {
        return GraphStats {
            num_entities: 0,
            num_relations: 0,
            avg_entity_degree: 0.0,
            unique_entities_per_relation: 0.0,
            relation_diversity_per_pair: 0.0,
        };
    }

    let mut entities_per_relation: BTreeMap<String, BTreeSet<EntityId>> = BTreeMap::new();
    let mut relations_per_pair: BTreeMap<(EntityId, EntityId), BTreeSet<String>> = BTreeMap::new();
    for triplet in kg.triplets() {
        let name = triplet.relation.display_label().to_string();
        let incident = entities_per_relation.entry(name.clone()).or_default();
        incident.insert(triplet.subject_id);
        incident.insert(triplet.object_id);
        let pair = if triplet.subject_id <= triplet.object_id {
            (triplet.subject_id, triplet.object_id)
        } else {
            (triplet.object_id, triplet.subject_id)
        };
        relations_per_pair.entry(pair).or_default().insert(name);
    }

    let num_relations = entities_per_relation.len();
    let avg_entity_degree = 2.0 * kg.triplet_count() as f64 / num_entities as f64;
    let unique_entities_per_relation = if num_relations == 0 {
        0.0
    } else {
        entities_per_relation.values().map(|s| s.len() as f64).sum::<f64>()
            / num_relations as f64
    };
    let relation_diversity_per_pair = if relations_per_pair.is_empty() {
        0.0
    } else {
        relations_per_pair.values().map(|s| s.len() as f64).sum::<f64>()
            / relations_per_pair.len() as f64
    };

    GraphStats {
        num_entities,
        num_relations,
        avg_entity_degree,
        unique_entities_per_relation,
        relation_diversity_per_pair,
    }
}

/// Per-question coverage verdicts.
#[derive(Debug, Clone, Serialize)]
pub struct QuestionCoverage {
    pub id: String,
    /// Some KG entity matches a gold answer.
    pub answer_in_kg: bool,
    /// Whether a matching answer entity lies within k hops of a matched
    /// question entity. Questions whose entities match nothing in the KG are
    /// unreachable: false at every k.
    pub within_hops: BTreeMap<usize, bool>,
    pub matched_question_entities: usize,
    pub matched_answer_entities: usize,
}

/// Aggregate coverage percentages (0–100).
#[derive(Debug, Clone, Serialize)]
pub struct CoverageReport {
    pub questions: usize,
    pub contains_answer_total: f64,
    pub contains_answer_khop: BTreeMap<usize, f64>,
    /// Populated when a schema was supplied alongside the snapshot.
    pub ontology_entailment: Option<f64>,
    pub per_question: Vec<QuestionCoverage>,
    /// The substring guard the matching ran with, kept in the report so
    /// alternative readings can be compared.
    pub min_match_chars: usize,
}

/// Coverage over a question set: whether each gold answer appears as a KG
/// entity at all, and whether it sits within each k-hop neighborhood of the
/// question's entities. Matching is normalized bidirectional substring; a
/// question counts as a hit if any of its gold aliases matches.
pub fn answer_coverage(
    kg: &KgStore,
    records: &[QaDatasetRecord],
    hop_list: &[usize],
    min_match_chars: usize,
) -> Result<CoverageReport, AnalyticsError> {
    let mut hops: Vec<usize> = hop_list.to_vec();
    hops.sort_unstable();
    hops.dedup();
    if hops.is_empty() {
        return Err(AnalyticsError::InvalidArgument("hop list must be non-empty".into()));
    }

    let mut per_question = Vec::with_capacity(records.len());
    for record in records {
        let question_surfaces = record
            .question_entities
            .as_ref()
            .ok_or_else(|| AnalyticsError::MissingQuestionEntities(record.id.clone()))?;

        let mut answer_entities: BTreeSet<EntityId> = BTreeSet::new();
        for gold in &record.answers {
            answer_entities.append(&mut matching_entities(kg, gold, min_match_chars));
        }
        let mut question_entities: BTreeSet<EntityId> = BTreeSet::new();
        for surface in question_surfaces {
            question_entities.append(&mut matching_entities(kg, surface, min_match_chars));
        }

        let dist = distances(kg, &question_entities);
        let within_hops: BTreeMap<usize, bool> = hops
            .iter()
            .map(|k| {
                let hit = !question_entities.is_empty()
                    && answer_entities.iter().any(|e| dist.get(e).is_some_and(|d| *d <= *k));
                (*k, hit)
            })
            .collect();

        per_question.push(QuestionCoverage {
            id: record.id.clone(),
            answer_in_kg: !answer_entities.is_empty(),
            within_hops,
            matched_question_entities: question_entities.len(),
            matched_answer_entities: answer_entities.len(),
        });
    }

    let questions = per_question.len();
    let percent = |hits: usize| {
        if questions == 0 {
            0.0
        } else {
            100.0 * hits as f64 / questions as f64
        }
    };
    let contains_answer_total =
        percent(per_question.iter().filter(|q| q.answer_in_kg).count());
    let contains_answer_khop: BTreeMap<usize, f64> = hops
        .iter()
        .map(|k| (*k, percent(per_question.iter().filter(|q| q.within_hops[k]).count())))
        .collect();

    // Typed invariants of the report: k-hop coverage is monotone in k and
    // never exceeds the total.
    let mut previous = 0.0;
    for (_, value) in &contains_answer_khop {
        debug_assert!(*value + 1e-9 >= previous);
        debug_assert!(*value <= contains_answer_total + 1e-9);
        previous = *value;
    }

    Ok(CoverageReport {
        questions,
        contains_answer_total,
        contains_answer_khop,
        ontology_entailment: None,
        per_question,
        min_match_chars,
    })
}

/// Bootstrap standard deviation of a percentage over per-question hit flags.
/// Seedable so reports are reproducible.
pub fn bootstrap_std(hits: &[bool], resamples: usize, seed: u64) -> f64 {
    if hits.is_empty() || resamples == 0 {
        return 0.0;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = hits.len();
    let mut values = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut count = 0usize;
        for _ in 0..n {
            if hits[rng.random_range(0..n)] {
                count += 1;
            }
        }
        values.push(100.0 * count as f64 / n as f64);
    }
    let mean = values.iter().sum::<f64>() / resamples as f64;
    let variance =
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / resamples as f64;
    variance.sqrt()
}

/// Entailment accounting. The percentage is recomputed from the schema
/// (stored aligned flags are never trusted); an empty graph reports 100.0 by
/// convention, with the zero denominator visible in `total`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntailmentReport {
    pub percentage: f64,
    pub aligned: usize,
    pub total: usize,
}

/// Percentage of stored triplets whose backbone re-verifies as aligned:
/// known property, known endpoint types, and domain/range satisfied. Surface
/// relations never entail.
pub fn ontology_entailment(kg: &KgStore, schema: &OntologySchema) -> EntailmentReport {
    let total = kg.triplet_count();
    if total == 0 {
        return EntailmentReport { percentage: 100.0, aligned: 0, total: 0 };
    }
    let mut aligned = 0usize;
    for triplet in kg.triplets() {
        let Some(property) = triplet.relation.property_id() else {
            continue;
        };
        let subject_type = &kg.entity(triplet.subject_id).expect("endpoints resolve").type_id;
        let object_type = &kg.entity(triplet.object_id).expect("endpoints resolve").type_id;
        if schema.check_alignment(subject_type, property, object_type).is_aligned() {
            aligned += 1;
        }
    }
    EntailmentReport { percentage: 100.0 * aligned as f64 / total as f64, aligned, total }
}

/// Relative neighborhood sizes around seed surfaces.
#[derive(Debug, Clone, Serialize)]
pub struct NeighborhoodProfile {
    /// k → |k-hop neighborhood entities| / |all entities|, for k in 1..=k_max.
    pub by_hop: BTreeMap<usize, f64>,
    /// Relative size of everything reachable from any matched seed.
    pub component: f64,
    pub matched_seeds: usize,
}

/// Relative k-hop neighborhood sizes (and the containing component's size)
/// around the entities matching `seed_surfaces`. Monotone non-decreasing in
/// k, and the component bounds every k-hop value from above.
pub fn neighborhood_profile(
    kg: &KgStore,
    seed_surfaces: &[String],
    k_max: usize,
    min_match_chars: usize,
) -> Result<NeighborhoodProfile, AnalyticsError> {
    if k_max == 0 {
        return Err(AnalyticsError::InvalidArgument("k_max must be at least 1".into()));
    }
    let mut seeds: BTreeSet<EntityId> = BTreeSet::new();
    for surface in seed_surfaces {
        seeds.append(&mut matching_entities(kg, surface, min_match_chars));
    }
    let total = kg.entity_count();
    if total == 0 || seeds.is_empty() {
        return Ok(NeighborhoodProfile {
            by_hop: (1..=k_max).map(|k| (k, 0.0)).collect(),
            component: 0.0,
            matched_seeds: 0,
        });
    }
    let dist = distances(kg, &seeds);
    let by_hop: BTreeMap<usize, f64> = (1..=k_max)
        .map(|k| {
            let reached = dist.values().filter(|d| **d <= k).count();
            (k, reached as f64 / total as f64)
        })
        .collect();
    let component = dist.len() as f64 / total as f64;
    Ok(NeighborhoodProfile { by_hop, component, matched_seeds: seeds.len() })
}

/// One named snapshot's metrics, as a row of a comparison table.
#[derive(Debug, Clone, Serialize)]
pub struct ReportRow {
    pub name: String,
    pub stats: GraphStats,
    pub coverage: Option<CoverageReport>,
}

/// A rendered comparison across snapshots (ablations, baselines).
#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Comparison {
    /// Plain-text table with aligned columns.
    pub fn to_text(&self) -> String {
        let mut widths: Vec<usize> = self.headers.iter().map(String::len).collect();
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                widths[i] = widths[i].max(cell.len());
            }
        }
        let render_line = |cells: &[String]| {
            cells
                .iter()
                .enumerate()
                .map(|(i, cell)| format!("{:width$}", cell, width = widths[i]))
                .collect::<Vec<String>>()
                .join("  ")
                .trim_end()
                .to_string()
        };
        let mut out = render_line(&self.headers);
        out.push('\n');
        out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&render_line(row));
            out.push('\n');
        }
        out
    }
}

/// Tabulate stats (and coverage, when present) for several snapshots.
/// Heterogeneous hop lists widen the table with blanks.
pub fn compare_reports(rows: &[ReportRow]) -> Result<Comparison, AnalyticsError> {
    if rows.is_empty() {
        return Err(AnalyticsError::InvalidArgument("at least one report required".into()));
    }
    let mut hops: BTreeSet<usize> = BTreeSet::new();
    let mut any_coverage = false;
    for row in rows {
        if let Some(coverage) = &row.coverage {
            any_coverage = true;
            hops.extend(coverage.contains_answer_khop.keys().copied());
        }
    }

    let mut headers = vec![
        "name".to_string(),
        "entities".to_string(),
        "relations".to_string(),
        "avg degree".to_string(),
        "unique e/r".to_string(),
        "r diversity/2e".to_string(),
    ];
    if any_coverage {
        headers.push("answer total %".to_string());
        for k in &hops {
            headers.push(format!("answer {k}-hop %"));
        }
        headers.push("entailment %".to_string());
    }

    let mut table = Vec::with_capacity(rows.len());
    for row in rows {
        let mut cells = vec![
            row.name.clone(),
            row.stats.num_entities.to_string(),
            row.stats.num_relations.to_string(),
            format!("{:.2}", row.stats.avg_entity_degree),
            format!("{:.2}", row.stats.unique_entities_per_relation),
            format!("{:.2}", row.stats.relation_diversity_per_pair),
        ];
        if any_coverage {
            match &row.coverage {
                Some(coverage) => {
                    cells.push(format!("{:.1}", coverage.contains_answer_total));
                    for k in &hops {
                        match coverage.contains_answer_khop.get(k) {
                            Some(value) => cells.push(format!("{value:.1}")),
                            None => cells.push(String::new()),
                        }
                    }
                    match coverage.ontology_entailment {
                        Some(value) => cells.push(format!("{value:.1}")),
                        None => cells.push(String::new()),
                    }
                }
                None => {
                    for _ in 0..(hops.len() + 2) {
                        cells.push(String::new());
                    }
                }
            }
        }
        table.push(cells);
    }
    Ok(Comparison { headers, rows: table })
}
