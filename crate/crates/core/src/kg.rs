//! The knowledge-graph store: canonical entities with alias sets, triplets
//! with qualifiers and alignment flags, neighborhood retrieval, and a
//! versioned snapshot format.
//!
//! The store is a single-process embedded structure (in-memory maps plus the
//! alias vector index) with a multi-reader / single-writer contract. Entity
//! identity is scoped by (canonical label, type id); two entities of
//! different types may share a label, and two entities may share an alias
//! surface, with retrieval left to disambiguate.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::fmt;
use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{Embedder, EmbedError, VectorIndex};
use crate::ontology::{PropertyId, TypeId};

/// Stable identifier of a stored entity. Ids are assigned sequentially and
/// may be renumbered by an import.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct EntityId(pub u64);

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

/// Sentinel type id for entities whose type never resolved against the
/// schema. Misaligned triplets can still be stored and stay linked.
pub fn untyped_type_id() -> TypeId {
    TypeId::new("untyped")
}

/// A canonical entity with every surface form observed for it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgEntity {
    pub id: EntityId,
    pub canonical_label: String,
    pub type_id: TypeId,
    pub aliases: BTreeSet<String>,
}

/// A stored relation: either an ontology property (with its display label)
/// or the raw extracted surface when no ontology-valid option was accepted.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(untagged)]
pub enum Relation {
    Property { property_id: PropertyId, label: String },
    Surface(String),
}

impl Relation {
    pub fn property(id: impl Into<String>, label: impl Into<String>) -> Self {
        Relation::Property { property_id: PropertyId::new(id), label: label.into() }
    }

    pub fn surface(text: impl Into<String>) -> Self {
        Relation::Surface(text.into())
    }

    /// Human-readable name: the property label, or the surface itself.
    pub fn display_label(&self) -> &str {
        match self {
            Relation::Property { label, .. } => label,
            Relation::Surface(text) => text,
        }
    }

    pub fn property_id(&self) -> Option<&PropertyId> {
        match self {
            Relation::Property { property_id, .. } => Some(property_id),
            Relation::Surface(_) => None,
        }
    }
}

/// Contextual (relation, object) annotation attached to a triplet. Never a
/// standalone fact.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
pub struct Qualifier {
    pub relation: String,
    pub object: String,
}

/// Where a triplet came from: document id plus the character span of the
/// chunk it was extracted from.
#[derive(
    Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize,
)]
pub struct Provenance {
    pub document_id: String,
    pub start: usize,
    pub end: usize,
}

/// A stored fact. Exact duplicates (same endpoints, relation, and
/// qualifiers) collapse into one triplet with merged provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KgTriplet {
    pub subject_id: EntityId,
    pub relation: Relation,
    pub object_id: EntityId,
    pub qualifiers: Vec<Qualifier>,
    pub aligned: bool,
    pub provenance: Vec<Provenance>,
}

/// A closed subgraph: every triplet's endpoints are present in `entities`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Subgraph {
    pub entities: BTreeMap<EntityId, KgEntity>,
    pub triplets: Vec<KgTriplet>,
}

impl Subgraph {
    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }
}

/// Whether an insert created a new triplet or merged into an existing one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InsertOutcome {
    Stored,
    Deduplicated,
}

/// An entity hit from alias search, deduplicated per entity with its best
/// alias score.
#[derive(Debug, Clone, PartialEq)]
pub struct EntityMatch {
    pub id: EntityId,
    pub score: f32,
}

#[derive(Debug, Error)]
pub enum KgError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("entity {0} not found")]
    NotFound(EntityId),
    #[error("triplet endpoint {0} does not resolve")]
    DanglingEndpoint(EntityId),
    #[error("snapshot line {line}: {message}")]
    Snapshot { line: usize, message: String },
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type TripletKey = (EntityId, Relation, EntityId, Vec<Qualifier>);

const SNAPSHOT_FORMAT: &str = "kg-snapshot";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SnapshotHeader {
    format: String,
    version: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum SnapshotRecord {
    #[serde(rename = "entity")]
    Entity { entity_id: u64, canonical_label: String, type_id: TypeId, aliases: BTreeSet<String> },
    #[serde(rename = "triplet")]
    Triplet {
        subject_id: u64,
        relation: Relation,
        object_id: u64,
        qualifiers: Vec<Qualifier>,
        aligned: bool,
        provenance: Vec<Provenance>,
    },
}

pub struct KgStore {
    entities: BTreeMap<EntityId, KgEntity>,
    identity: HashMap<(String, TypeId), EntityId>,
    triplets: Vec<KgTriplet>,
    triplet_slots: HashMap<TripletKey, usize>,
    alias_index: VectorIndex,
    next_id: u64,
}

impl KgStore {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self {
            entities: BTreeMap::new(),
            identity: HashMap::new(),
            triplets: Vec::new(),
            triplet_slots: HashMap::new(),
            alias_index: VectorIndex::new(embedder),
            next_id: 1,
        }
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn triplet_count(&self) -> usize {
        self.triplets.len()
    }

    pub fn entities(&self) -> impl Iterator<Item = &KgEntity> {
        self.entities.values()
    }

    pub fn triplets(&self) -> &[KgTriplet] {
        &self.triplets
    }

    pub fn entity(&self, id: EntityId) -> Option<&KgEntity> {
        self.entities.get(&id)
    }

    /// Number of alias-index entries, which equals the sum of alias set
    /// sizes across entities.
    pub fn alias_entry_count(&self) -> usize {
        self.alias_index.len()
    }

    /// Insert an entity, idempotently on (label, type). The canonical label
    /// doubles as the first alias and is indexed immediately.
    pub fn insert_entity(
        &mut self,
        label: &str,
        type_id: &TypeId,
    ) -> Result<EntityId, KgError> {
        if label.is_empty() {
            return Err(KgError::InvalidArgument("entity label must be non-empty".into()));
        }
        if let Some(&existing) = self.identity.get(&(label.to_string(), type_id.clone())) {
            return Ok(existing);
        }
        let id = EntityId(self.next_id);
        self.next_id += 1;
        let mut aliases = BTreeSet::new();
        aliases.insert(label.to_string());
        self.entities.insert(
            id,
            KgEntity {
                id,
                canonical_label: label.to_string(),
                type_id: type_id.clone(),
                aliases,
            },
        );
        self.identity.insert((label.to_string(), type_id.clone()), id);
        self.alias_index.upsert(&id.0.to_string(), &[label], Some(type_id.as_str()))?;
        Ok(id)
    }

    /// Record one more surface form for an entity. Adding an existing alias
    /// (including the canonical label) is a no-op. Returns the updated set.
    pub fn add_alias(
        &mut self,
        id: EntityId,
        surface: &str,
    ) -> Result<BTreeSet<String>, KgError> {
        if surface.is_empty() {
            return Err(KgError::InvalidArgument("alias must be non-empty".into()));
        }
        let entity = self.entities.get_mut(&id).ok_or(KgError::NotFound(id))?;
        if entity.aliases.insert(surface.to_string()) {
            let tag = entity.type_id.clone();
            self.alias_index.upsert(&id.0.to_string(), &[surface], Some(tag.as_str()))?;
        }
        Ok(self.entities[&id].aliases.clone())
    }

    /// Store a triplet, collapsing exact duplicates (same endpoints,
    /// relation, and qualifier sequence) into the existing one with merged
    /// provenance.
    pub fn insert_triplet(
        &mut self,
        subject_id: EntityId,
        relation: Relation,
        object_id: EntityId,
        qualifiers: Vec<Qualifier>,
        aligned: bool,
        provenance: Vec<Provenance>,
    ) -> Result<InsertOutcome, KgError> {
        if !self.entities.contains_key(&subject_id) {
            return Err(KgError::DanglingEndpoint(subject_id));
        }
        if !self.entities.contains_key(&object_id) {
            return Err(KgError::DanglingEndpoint(object_id));
        }
        let key = (subject_id, relation.clone(), object_id, qualifiers.clone());
        if let Some(&slot) = self.triplet_slots.get(&key) {
            let existing = &mut self.triplets[slot];
            for p in provenance {
                if !existing.provenance.contains(&p) {
                    existing.provenance.push(p);
                }
            }
            return Ok(InsertOutcome::Deduplicated);
        }
        self.triplet_slots.insert(key, self.triplets.len());
        self.triplets.push(KgTriplet {
            subject_id,
            relation,
            object_id,
            qualifiers,
            aligned,
            provenance,
        });
        Ok(InsertOutcome::Stored)
    }

    /// Breadth-first expansion over undirected triplet edges up to `k` hops
    /// from the seeds; unknown seeds are ignored with a warning. The result
    /// is the induced subgraph on the reached entities.
    pub fn neighborhood(&self, seeds: &[EntityId], k: usize) -> Subgraph {
        let mut frontier: VecDeque<(EntityId, usize)> = VecDeque::new();
        let mut reached: BTreeSet<EntityId> = BTreeSet::new();
        for seed in seeds {
            if self.entities.contains_key(seed) {
                if reached.insert(*seed) {
                    frontier.push_back((*seed, 0));
                }
            } else {
                log::warn!("neighborhood seed {seed} not in store; ignored");
            }
        }

        let mut adjacency: HashMap<EntityId, Vec<EntityId>> = HashMap::new();
        for triplet in &self.triplets {
            adjacency.entry(triplet.subject_id).or_default().push(triplet.object_id);
            adjacency.entry(triplet.object_id).or_default().push(triplet.subject_id);
        }

        while let Some((node, depth)) = frontier.pop_front() {
            if depth == k {
                continue;
            }
            if let Some(neighbors) = adjacency.get(&node) {
                for neighbor in neighbors {
                    if reached.insert(*neighbor) {
                        frontier.push_back((*neighbor, depth + 1));
                    }
                }
            }
        }

        let entities: BTreeMap<EntityId, KgEntity> =
            reached.iter().map(|id| (*id, self.entities[id].clone())).collect();
        let triplets: Vec<KgTriplet> = self
            .triplets
            .iter()
            .filter(|t| reached.contains(&t.subject_id) && reached.contains(&t.object_id))
            .cloned()
            .collect();
        Subgraph { entities, triplets }
    }

    /// Alias search over the store's index, deduplicated per entity keeping
    /// the best alias score. Filtered entities must carry one of the given
    /// type ids.
    pub fn find_entities_by_alias(
        &self,
        query: &str,
        k: usize,
        type_filter: Option<&HashSet<TypeId>>,
    ) -> Result<Vec<EntityMatch>, KgError> {
        let tag_filter: Option<HashSet<String>> =
            type_filter.map(|f| f.iter().map(|t| t.0.clone()).collect());
        if self.alias_index.is_empty() {
            if query.is_empty() {
                return Err(KgError::InvalidArgument("cannot search with an empty query".into()));
            }
            return Ok(Vec::new());
        }
        let hits = self.alias_index.top_k_by_key(query, k, tag_filter.as_ref())?;
        Ok(hits
            .into_iter()
            .map(|hit| EntityMatch {
                id: EntityId(hit.key.parse().expect("index keys are entity ids")),
                score: hit.score,
            })
            .collect())
    }

    /// Write the versioned snapshot: a header line, entities in ascending id
    /// order, then triplets in canonical order.
    pub fn export(&self, mut writer: impl Write) -> Result<(), KgError> {
        let header = SnapshotHeader { format: SNAPSHOT_FORMAT.into(), version: SNAPSHOT_VERSION };
        writeln!(writer, "{}", serde_json::to_string(&header).expect("serializable"))?;
        for entity in self.entities.values() {
            let record = SnapshotRecord::Entity {
                entity_id: entity.id.0,
                canonical_label: entity.canonical_label.clone(),
                type_id: entity.type_id.clone(),
                aliases: entity.aliases.clone(),
            };
            writeln!(writer, "{}", serde_json::to_string(&record).expect("serializable"))?;
        }
        let mut ordered: Vec<&KgTriplet> = self.triplets.iter().collect();
        ordered.sort_by_key(|t| {
            (t.subject_id, t.relation.clone(), t.object_id, t.qualifiers.clone())
        });
        for triplet in ordered {
            let mut provenance = triplet.provenance.clone();
            provenance.sort();
            let record = SnapshotRecord::Triplet {
                subject_id: triplet.subject_id.0,
                relation: triplet.relation.clone(),
                object_id: triplet.object_id.0,
                qualifiers: triplet.qualifiers.clone(),
                aligned: triplet.aligned,
                provenance,
            };
            writeln!(writer, "{}", serde_json::to_string(&record).expect("serializable"))?;
        }
        Ok(())
    }

    /// Read a snapshot into a fresh store. Entity ids are renumbered in file
    /// order; the result is isomorphic to the exported store.
    pub fn import(reader: impl BufRead, embedder: Arc<dyn Embedder>) -> Result<Self, KgError> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or(KgError::Snapshot { line: 1, message: "empty snapshot".into() })??;
        let header: SnapshotHeader = serde_json::from_str(&header_line)
            .map_err(|e| KgError::Snapshot { line: 1, message: e.to_string() })?;
        if header.format != SNAPSHOT_FORMAT {
            return Err(KgError::Snapshot {
                line: 1,
                message: format!("unknown format {:?}", header.format),
            });
        }
        if header.version != SNAPSHOT_VERSION {
            return Err(KgError::Snapshot {
                line: 1,
                message: format!(
                    "unsupported version {} (expected {})",
                    header.version, SNAPSHOT_VERSION
                ),
            });
        }

        let mut store = KgStore::new(embedder);
        let mut id_map: HashMap<u64, EntityId> = HashMap::new();
        for (index, line) in lines.enumerate() {
            let line_no = index + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: SnapshotRecord = serde_json::from_str(&line)
                .map_err(|e| KgError::Snapshot { line: line_no, message: e.to_string() })?;
            match record {
                SnapshotRecord::Entity { entity_id, canonical_label, type_id, aliases } => {
                    if store.identity.contains_key(&(canonical_label.clone(), type_id.clone())) {
                        return Err(KgError::Snapshot {
                            line: line_no,
                            message: format!(
                                "duplicate entity ({canonical_label:?}, {type_id})"
                            ),
                        });
                    }
                    let new_id = store.insert_entity(&canonical_label, &type_id)?;
                    for alias in aliases {
                        store.add_alias(new_id, &alias)?;
                    }
                    if id_map.insert(entity_id, new_id).is_some() {
                        return Err(KgError::Snapshot {
                            line: line_no,
                            message: format!("duplicate entity id {entity_id}"),
                        });
                    }
                }
                SnapshotRecord::Triplet {
                    subject_id,
                    relation,
                    object_id,
                    qualifiers,
                    aligned,
                    provenance,
                } => {
                    let subject = *id_map.get(&subject_id).ok_or(KgError::Snapshot {
                        line: line_no,
                        message: format!("triplet references unknown entity {subject_id}"),
                    })?;
                    let object = *id_map.get(&object_id).ok_or(KgError::Snapshot {
                        line: line_no,
                        message: format!("triplet references unknown entity {object_id}"),
                    })?;
                    store.insert_triplet(
                        subject, relation, object, qualifiers, aligned, provenance,
                    )?;
                }
            }
        }
        Ok(store)
    }

    /// Id-free canonical form for isomorphism comparison: entities as sorted
    /// (label, type, aliases) rows and triplets resolved to endpoint labels.
    pub fn canonical_form(&self) -> CanonicalKg {
        let mut entities: Vec<(String, TypeId, Vec<String>)> = self
            .entities
            .values()
            .map(|e| {
                (
                    e.canonical_label.clone(),
                    e.type_id.clone(),
                    e.aliases.iter().cloned().collect(),
                )
            })
            .collect();
        entities.sort();
        let endpoint = |id: EntityId| {
            let e = &self.entities[&id];
            (e.canonical_label.clone(), e.type_id.clone())
        };
        let mut triplets: Vec<CanonicalTriplet> = self
            .triplets
            .iter()
            .map(|t| {
                let mut provenance = t.provenance.clone();
                provenance.sort();
                CanonicalTriplet {
                    subject: endpoint(t.subject_id),
                    relation: t.relation.clone(),
                    object: endpoint(t.object_id),
                    qualifiers: t.qualifiers.clone(),
                    aligned: t.aligned,
                    provenance,
                }
            })
            .collect();
        triplets.sort();
        CanonicalKg { entities, triplets }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct CanonicalTriplet {
    pub subject: (String, TypeId),
    pub relation: Relation,
    pub object: (String, TypeId),
    pub qualifiers: Vec<Qualifier>,
    pub aligned: bool,
    pub provenance: Vec<Provenance>,
}

/// See [`KgStore::canonical_form`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CanonicalKg {
    pub entities: Vec<(String, TypeId, Vec<String>)>,
    pub triplets: Vec<CanonicalTriplet>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::HashEmbedder;

    fn store() -> KgStore {
        KgStore::new(Arc::new(HashEmbedder::new()))
    }

    fn human() -> TypeId {
        TypeId::from("Q5")
    }

    fn no_provenance() -> Vec<Provenance> {
        vec![]
    }

    #[test]
    fn insert_entity_is_idempotent_on_label_and_type() {
        let mut kg = store();
        let a = kg.insert_entity("Christopher Nolan", &human()).unwrap();
        let b = kg.insert_entity("Christopher Nolan", &human()).unwrap();
        assert_eq!(a, b);
        assert_eq!(kg.entity_count(), 1);

        // Same label under a different type is a different entity.
        let c = kg.insert_entity("Christopher Nolan", &TypeId::from("Q95074")).unwrap();
        assert_ne!(a, c);
        assert_eq!(kg.entity_count(), 2);
    }

    #[test]
    fn empty_label_rejected() {
        let mut kg = store();
        assert!(matches!(
            kg.insert_entity("", &human()),
            Err(KgError::InvalidArgument(_))
        ));
    }

    #[test]
    fn add_alias_grows_set_and_index() {
        let mut kg = store();
        let id = kg.insert_entity("Christopher Nolan", &human()).unwrap();
        let aliases = kg.add_alias(id, "Nolan").unwrap();
        assert_eq!(aliases, ["Christopher Nolan", "Nolan"].map(String::from).into());
        assert_eq!(kg.alias_entry_count(), 2);

        // Adding an existing alias (or the canonical label) changes nothing.
        kg.add_alias(id, "Nolan").unwrap();
        let unchanged = kg.add_alias(id, "Christopher Nolan").unwrap();
        assert_eq!(unchanged.len(), 2);
        assert_eq!(kg.alias_entry_count(), 2);
    }

    #[test]
    fn add_alias_to_unknown_entity_is_not_found() {
        let mut kg = store();
        assert!(matches!(kg.add_alias(EntityId(99), "x"), Err(KgError::NotFound(_))));
    }

    #[test]
    fn duplicate_triplets_collapse_with_merged_provenance() {
        let mut kg = store();
        let a = kg.insert_entity("Inception", &TypeId::from("Q11424")).unwrap();
        let b = kg.insert_entity("Christopher Nolan", &human()).unwrap();
        let relation = Relation::property("P57", "director");
        let p1 = Provenance { document_id: "d1".into(), start: 0, end: 10 };
        let p2 = Provenance { document_id: "d2".into(), start: 5, end: 25 };
        let first = kg
            .insert_triplet(a, relation.clone(), b, vec![], true, vec![p1.clone()])
            .unwrap();
        let second = kg
            .insert_triplet(a, relation.clone(), b, vec![], true, vec![p2.clone()])
            .unwrap();
        assert_eq!(first, InsertOutcome::Stored);
        assert_eq!(second, InsertOutcome::Deduplicated);
        assert_eq!(kg.triplet_count(), 1);
        assert_eq!(kg.triplets()[0].provenance, vec![p1, p2]);

        // Same backbone with different qualifiers is a distinct fact.
        let qualified = vec![Qualifier { relation: "point in time".into(), object: "2010".into() }];
        let third = kg.insert_triplet(a, relation, b, qualified, true, no_provenance()).unwrap();
        assert_eq!(third, InsertOutcome::Stored);
        assert_eq!(kg.triplet_count(), 2);
    }

    #[test]
    fn dangling_endpoints_rejected() {
        let mut kg = store();
        let a = kg.insert_entity("a", &human()).unwrap();
        assert!(matches!(
            kg.insert_triplet(
                a,
                Relation::surface("knows"),
                EntityId(42),
                vec![],
                false,
                no_provenance()
            ),
            Err(KgError::DanglingEndpoint(_))
        ));
    }

    fn path_graph() -> (KgStore, EntityId, EntityId, EntityId) {
        let mut kg = store();
        let t = TypeId::from("t");
        let a = kg.insert_entity("a", &t).unwrap();
        let b = kg.insert_entity("b", &t).unwrap();
        let c = kg.insert_entity("c", &t).unwrap();
        kg.insert_triplet(a, Relation::surface("r1"), b, vec![], false, no_provenance()).unwrap();
        kg.insert_triplet(b, Relation::surface("r2"), c, vec![], false, no_provenance()).unwrap();
        (kg, a, b, c)
    }

    #[test]
    fn neighborhood_zero_hops_is_seeds_only() {
        let (kg, a, _, _) = path_graph();
        let subgraph = kg.neighborhood(&[a], 0);
        assert_eq!(subgraph.entities.len(), 1);
        assert!(subgraph.triplets.is_empty());
    }

    #[test]
    fn neighborhood_one_hop_on_a_path() {
        let (kg, a, b, _) = path_graph();
        let subgraph = kg.neighborhood(&[a], 1);
        let ids: Vec<EntityId> = subgraph.entities.keys().copied().collect();
        assert_eq!(ids, vec![a, b]);
        assert_eq!(subgraph.triplets.len(), 1);
    }

    #[test]
    fn neighborhood_is_undirected_and_ignores_unknown_seeds() {
        let (kg, a, b, c) = path_graph();
        let subgraph = kg.neighborhood(&[c, EntityId(999)], 2);
        let ids: Vec<EntityId> = subgraph.entities.keys().copied().collect();
        assert_eq!(ids, vec![a, b, c]);
        assert_eq!(subgraph.triplets.len(), 2);
    }

    #[test]
    fn find_by_exact_alias_scores_one() {
        let mut kg = store();
        let nolan = kg.insert_entity("Christopher Nolan", &human()).unwrap();
        kg.add_alias(nolan, "Nolan").unwrap();
        kg.insert_entity("Steven Spielberg", &human()).unwrap();
        let hits = kg.find_entities_by_alias("Nolan", 5, None).unwrap();
        assert_eq!(hits[0].id, nolan);
        assert!((hits[0].score - 1.0).abs() < 1e-6);
        // Deduped per entity: two aliases, still one hit for the entity.
        assert_eq!(hits.iter().filter(|h| h.id == nolan).count(), 1);
    }

    #[test]
    fn type_filter_restricts_matches() {
        let mut kg = store();
        kg.insert_entity("Mercury", &TypeId::from("planet")).unwrap();
        let element = kg.insert_entity("Mercury", &TypeId::from("element")).unwrap();
        let filter: HashSet<TypeId> = [TypeId::from("element")].into();
        let hits = kg.find_entities_by_alias("Mercury", 5, Some(&filter)).unwrap();
        assert_eq!(hits.len(), 1);
        assert_eq!(hits[0].id, element);

        let none: HashSet<TypeId> = [TypeId::from("asteroid")].into();
        assert!(kg.find_entities_by_alias("Mercury", 5, Some(&none)).unwrap().is_empty());
    }

    #[test]
    fn export_import_round_trip_is_isomorphic_and_stable() {
        let mut kg = store();
        let a = kg.insert_entity("Inception", &TypeId::from("Q11424")).unwrap();
        let b = kg.insert_entity("Christopher Nolan", &human()).unwrap();
        kg.add_alias(b, "Nolan").unwrap();
        kg.insert_triplet(
            a,
            Relation::property("P57", "director"),
            b,
            vec![Qualifier { relation: "point in time".into(), object: "2010".into() }],
            true,
            vec![Provenance { document_id: "d1".into(), start: 0, end: 71 }],
        )
        .unwrap();

        let mut first = Vec::new();
        kg.export(&mut first).unwrap();
        let imported = KgStore::import(first.as_slice(), Arc::new(HashEmbedder::new())).unwrap();
        assert_eq!(imported.canonical_form(), kg.canonical_form());

        let mut second = Vec::new();
        imported.export(&mut second).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn empty_store_round_trips() {
        let kg = store();
        let mut bytes = Vec::new();
        kg.export(&mut bytes).unwrap();
        let imported = KgStore::import(bytes.as_slice(), Arc::new(HashEmbedder::new())).unwrap();
        assert_eq!(imported.entity_count(), 0);
        assert_eq!(imported.triplet_count(), 0);
    }

    #[test]
    fn import_rejects_bad_version_and_dangling_refs() {
        let bad_version = format!(
            "{}\n",
            serde_json::json!({"format": "kg-snapshot", "version": 99})
        );
        assert!(matches!(
            KgStore::import(bad_version.as_bytes(), Arc::new(HashEmbedder::new())),
            Err(KgError::Snapshot { line: 1, .. })
        ));

        let dangling = format!(
            "{}\n{}\n",
            serde_json::json!({"format": "kg-snapshot", "version": 1}),
            serde_json::json!({
                "kind": "triplet", "subject_id": 1, "relation": "knows",
                "object_id": 2, "qualifiers": [], "aligned": false, "provenance": []
            })
        );
        assert!(matches!(
            KgStore::import(dangling.as_bytes(), Arc::new(HashEmbedder::new())),
            Err(KgError::Snapshot { .. })
        ));
    }

    #[test]
    fn relation_snapshot_shapes() {
        let property = Relation::property("P57", "director");
        let surface = Relation::surface("directed");
        let p_json = serde_json::to_string(&property).unwrap();
        let s_json = serde_json::to_string(&surface).unwrap();
        assert!(p_json.contains("property_id"));
        assert_eq!(s_json, "\"directed\"");
        assert_eq!(serde_json::from_str::<Relation>(&p_json).unwrap(), property);
        assert_eq!(serde_json::from_str::<Relation>(&s_json).unwrap(), surface);
    }
}
