//! Text embedding backends and an exact top-k cosine-similarity index.
//!
//! Two embedders ship: [`HashEmbedder`], a deterministic offline backend that
//! folds hashed character 3-grams into a fixed number of buckets, and
//! [`RemoteEmbedder`], a client for the de-facto HTTP embeddings API shape.
//! [`VectorIndex`] performs an exact full scan, so rankings are reproducible
//! and can be checked against brute force.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors raised by embedding backends and the vector index.
#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dimension mismatch: index expects {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding backend transport failure (retryable): {0}")]
    Transport(String),
    #[error("index snapshot: {0}")]
    Snapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A text-embedding backend. Implementations must be deterministic for a
/// fixed backend identity and must return L2-normalized vectors.
pub trait Embedder: Send + Sync {
    /// Stable identity of the backend, used to key persisted caches and to
    /// guard index snapshots against being reopened with a different backend.
    fn id(&self) -> String;

    /// Output dimension of [`Embedder::embed`].
    fn dimension(&self) -> usize;

    /// Embed one text into an L2-normalized vector of `dimension()` values.
    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError>;
}

fn l2_normalize(values: &mut [f32]) {
    let norm: f64 = values.iter().map(|v| (*v as f64) * (*v as f64)).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in values.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
}

/// Cosine similarity of two same-length vectors, computed in f64 and clamped
/// to [-1, 1]. Inputs are expected to be normalized, so this is a dot product.
pub fn cosine(a: &[f32], b: &[f32]) -> f32 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
    dot.clamp(-1.0, 1.0) as f32
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash = FNV_OFFSET;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

/// Deterministic offline embedder: lowercased character 3-grams are hashed
/// (FNV-1a) into `dimension` count buckets and the result is L2-normalized.
/// Texts shorter than three characters contribute a single whole-text gram.
///
/// Surface overlap drives similarity, which is enough to make alias and
/// relation ranking behave plausibly in tests without any external model.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    dimension: usize,
}

impl HashEmbedder {
    pub const DEFAULT_DIMENSION: usize = 256;

    pub fn new() -> Self {
        Self { dimension: Self::DEFAULT_DIMENSION }
    }

    pub fn with_dimension(dimension: usize) -> Self {
        Self { dimension }
    }
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self::new()
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        format!("hash-3gram-{}", self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::InvalidArgument("cannot embed empty text".into()));
        }
        let lowered = text.to_lowercase();
        let chars: Vec<char> = lowered.chars().collect();
        let mut buckets = vec![0.0f32; self.dimension];
        let mut bump = |gram: &str| {
            let slot = (fnv1a(gram.as_bytes()) % self.dimension as u64) as usize;
            buckets[slot] += 1.0;
        };
        if chars.len() < 3 {
            bump(&lowered);
        } else {
            for window in chars.windows(3) {
                bump(&window.iter().collect::<String>());
            }
        }
        l2_normalize(&mut buckets);
        Ok(buckets)
    }
}

/// Configuration for [`RemoteEmbedder`].
#[derive(Debug, Clone)]
pub struct RemoteEmbedderConfig {
    /// Full URL of the embeddings endpoint.
    pub endpoint: String,
    pub model: String,
    /// Expected output dimension; responses of any other length are rejected.
    pub dimension: usize,
    /// Bearer token, if the endpoint requires one.
    pub api_token: Option<String>,
}

#[derive(Serialize)]
struct EmbeddingsRequest<'a> {
    model: &'a str,
    input: Vec<&'a str>,
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingsDatum>,
}

#[derive(Deserialize)]
struct EmbeddingsDatum {
    embedding: Vec<f32>,
}

/// HTTP embeddings client speaking the common `{"model", "input": [..]}` /
/// `{"data": [{"embedding": [..]}]}` wire shape. Responses are re-normalized
/// before use so the index invariant holds regardless of the provider.
pub struct RemoteEmbedder {
    config: RemoteEmbedderConfig,
    client: reqwest::blocking::Client,
}

impl RemoteEmbedder {
    pub fn new(config: RemoteEmbedderConfig) -> Self {
        Self { config, client: reqwest::blocking::Client::new() }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote-{}-{}", self.config.model, self.config.dimension)
    }

    fn dimension(&self) -> usize {
        self.config.dimension
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if text.is_empty() {
            return Err(EmbedError::InvalidArgument("cannot embed empty text".into()));
        }
        let body = EmbeddingsRequest { model: &self.config.model, input: vec![text] };
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.config.api_token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| EmbedError::Transport(e.to_string()))?;
        if !response.status().is_success() {
            return Err(EmbedError::Transport(format!(
                "embeddings endpoint returned {}",
                response.status()
            )));
        }
        let parsed: EmbeddingsResponse =
            response.json().map_err(|e| EmbedError::Transport(e.to_string()))?;
        let mut vector = parsed
            .data
            .into_iter()
            .next()
            .ok_or_else(|| EmbedError::Transport("embeddings response carried no data".into()))?
            .embedding;
        if vector.len() != self.config.dimension {
            return Err(EmbedError::DimensionMismatch {
                expected: self.config.dimension,
                actual: vector.len(),
            });
        }
        l2_normalize(&mut vector);
        Ok(vector)
    }
}

#[derive(Serialize, Deserialize)]
struct CacheRecord {
    backend: String,
    text: String,
    vector: Vec<f32>,
}

/// Wraps another embedder with an in-memory cache keyed by (backend id, text).
/// The cache can be persisted alongside an index so remote calls are not
/// re-billed across runs.
pub struct CachedEmbedder {
    inner: Arc<dyn Embedder>,
    cache: Mutex<HashMap<String, Vec<f32>>>,
}

impl CachedEmbedder {
    pub fn new(inner: Arc<dyn Embedder>) -> Self {
        Self { inner, cache: Mutex::new(HashMap::new()) }
    }

    /// Load cached vectors recorded for this wrapper's backend id; entries
    /// written by other backends are skipped.
    pub fn load_cache(&self, reader: impl BufRead) -> Result<usize, EmbedError> {
        let id = self.inner.id();
        let mut cache = self.cache.lock().unwrap();
        let mut loaded = 0;
        for line in reader.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord = serde_json::from_str(&line)
                .map_err(|e| EmbedError::Snapshot(format!("bad cache record: {e}")))?;
            if record.backend == id {
                cache.insert(record.text, record.vector);
                loaded += 1;
            }
        }
        Ok(loaded)
    }

    pub fn save_cache(&self, mut writer: impl Write) -> Result<(), EmbedError> {
        let id = self.inner.id();
        let cache = self.cache.lock().unwrap();
        let mut texts: Vec<&String> = cache.keys().collect();
        texts.sort();
        for text in texts {
            let record = CacheRecord {
                backend: id.clone(),
                text: text.clone(),
                vector: cache[text].clone(),
            };
            writeln!(writer, "{}", serde_json::to_string(&record).expect("serializable"))?;
        }
        Ok(())
    }
}

impl Embedder for CachedEmbedder {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn dimension(&self) -> usize {
        self.inner.dimension()
    }

    fn embed(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        if let Some(hit) = self.cache.lock().unwrap().get(text) {
            return Ok(hit.clone());
        }
        let vector = self.inner.embed(text)?;
        self.cache.lock().unwrap().insert(text.to_string(), vector.clone());
        Ok(vector)
    }
}

/// One indexed surface form.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IndexEntry {
    /// Opaque record id the surface form belongs to (a type id, property id,
    /// or entity id). Several entries may share a key.
    pub key: String,
    /// The indexed surface form.
    pub text: String,
    /// `embed(text)` at insertion time.
    pub vector: Vec<f32>,
    /// Optional partition label used by tag-filtered search.
    pub tag: Option<String>,
}

/// A scored search result.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchHit {
    pub key: String,
    pub text: String,
    pub score: f32,
}

const INDEX_SNAPSHOT_FORMAT: &str = "vector-index";
const INDEX_SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct IndexHeader {
    format: String,
    version: u32,
    backend: String,
    dimension: usize,
}

/// Exact top-k cosine index over (key, text) pairs.
///
/// Search is a full scan: at the alias-corpus scale this engine targets,
/// exactness is affordable and keeps every ranking test deterministic.
/// Readers may share the index concurrently; writers need exclusive access.
pub struct VectorIndex {
    embedder: Arc<dyn Embedder>,
    entries: Vec<IndexEntry>,
    slots: HashMap<(String, String), usize>,
}

impl VectorIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self { embedder, entries: Vec::new(), slots: HashMap::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    /// Insert one entry per distinct text; re-upserting an existing
    /// (key, text) pair overwrites its vector and tag instead of duplicating.
    /// Returns the number of entries written.
    pub fn upsert(
        &mut self,
        key: &str,
        texts: &[&str],
        tag: Option<&str>,
    ) -> Result<usize, EmbedError> {
        if texts.is_empty() {
            return Err(EmbedError::InvalidArgument("upsert requires at least one text".into()));
        }
        let mut written = 0;
        for text in texts {
            let vector = self.embedder.embed(text)?;
            if vector.len() != self.dimension() {
                return Err(EmbedError::DimensionMismatch {
                    expected: self.dimension(),
                    actual: vector.len(),
                });
            }
            let entry = IndexEntry {
                key: key.to_string(),
                text: text.to_string(),
                vector,
                tag: tag.map(str::to_string),
            };
            match self.slots.get(&(key.to_string(), text.to_string())) {
                Some(&slot) => self.entries[slot] = entry,
                None => {
                    self.slots.insert((key.to_string(), text.to_string()), self.entries.len());
                    self.entries.push(entry);
                }
            }
            written += 1;
        }
        Ok(written)
    }

    /// Exact top-k by descending cosine similarity. Entries pass the filter
    /// when it is absent or their tag is a member. Ties break by ascending
    /// key, then text.
    pub fn top_k(
        &self,
        query: &str,
        k: usize,
        tag_filter: Option<&HashSet<String>>,
    ) -> Result<Vec<SearchHit>, EmbedError> {
        if query.is_empty() {
            return Err(EmbedError::InvalidArgument("cannot search with an empty query".into()));
        }
        if k == 0 {
            return Err(EmbedError::InvalidArgument("k must be at least 1".into()));
        }
        let query_vector = self.embedder.embed(query)?;
        let mut hits: Vec<SearchHit> = self
            .entries
            .iter()
            .filter(|entry| match tag_filter {
                None => true,
                Some(filter) => entry.tag.as_ref().is_some_and(|tag| filter.contains(tag)),
            })
            .map(|entry| SearchHit {
                key: entry.key.clone(),
                text: entry.text.clone(),
                score: cosine(&query_vector, &entry.vector),
            })
            .collect();
        hits.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.key.cmp(&b.key))
                .then_with(|| a.text.cmp(&b.text))
        });
        hits.truncate(k);
        Ok(hits)
    }

    /// Write a versioned snapshot: one header line, then one entry per line
    /// in deterministic (key, text) order.
    pub fn save(&self, mut writer: impl Write) -> Result<(), EmbedError> {
        let header = IndexHeader {
            format: INDEX_SNAPSHOT_FORMAT.to_string(),
            version: INDEX_SNAPSHOT_VERSION,
            backend: self.embedder.id(),
            dimension: self.dimension(),
        };
        writeln!(writer, "{}", serde_json::to_string(&header).expect("serializable"))?;
        let mut order: Vec<&IndexEntry> = self.entries.iter().collect();
        order.sort_by(|a, b| a.key.cmp(&b.key).then_with(|| a.text.cmp(&b.text)));
        for entry in order {
            writeln!(writer, "{}", serde_json::to_string(entry).expect("serializable"))?;
        }
        Ok(())
    }

    /// Reopen a snapshot. The embedder must match the one the snapshot was
    /// written with, otherwise stored vectors and fresh queries would live in
    /// different spaces.
    pub fn load(reader: impl BufRead, embedder: Arc<dyn Embedder>) -> Result<Self, EmbedError> {
        let mut lines = reader.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| EmbedError::Snapshot("empty index snapshot".into()))??;
        let header: IndexHeader = serde_json::from_str(&header_line)
            .map_err(|e| EmbedError::Snapshot(format!("bad snapshot header: {e}")))?;
        if header.format != INDEX_SNAPSHOT_FORMAT {
            return Err(EmbedError::Snapshot(format!("unknown format {:?}", header.format)));
        }
        if header.version != INDEX_SNAPSHOT_VERSION {
            return Err(EmbedError::Snapshot(format!(
                "unsupported snapshot version {} (expected {})",
                header.version, INDEX_SNAPSHOT_VERSION
            )));
        }
        if header.backend != embedder.id() {
            return Err(EmbedError::Snapshot(format!(
                "snapshot was built with backend {:?} but {:?} was supplied",
                header.backend,
                embedder.id()
            )));
        }
        let mut index = Self::new(embedder);
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: IndexEntry = serde_json::from_str(&line)
                .map_err(|e| EmbedError::Snapshot(format!("bad index entry: {e}")))?;
            if entry.vector.len() != index.dimension() {
                return Err(EmbedError::DimensionMismatch {
                    expected: index.dimension(),
                    actual: entry.vector.len(),
                });
            }
            index.slots.insert((entry.key.clone(), entry.text.clone()), index.entries.len());
            index.entries.push(entry);
        }
        Ok(index)
    }

    /// Group hits by key keeping each key's best (score, text), ranked by
    /// descending score then ascending key. Used by callers that index many
    /// aliases per record but rank whole records.
    pub fn top_k_by_key(
        &self,
        query: &str,
        k: usize,
        tag_filter: Option<&HashSet<String>>,
    ) -> Result<Vec<SearchHit>, EmbedError> {
        if k == 0 {
            return Err(EmbedError::InvalidArgument("k must be at least 1".into()));
        }
        let all = self.top_k(query, self.entries.len().max(1), tag_filter)?;
        let mut best: BTreeMap<String, SearchHit> = BTreeMap::new();
        for hit in all {
            match best.get(&hit.key) {
                Some(existing) if existing.score >= hit.score => {}
                _ => {
                    best.insert(hit.key.clone(), hit);
                }
            }
        }
        let mut ranked: Vec<SearchHit> = best.into_values().collect();
        ranked.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.key.cmp(&b.key))
        });
        ranked.truncate(k);
        Ok(ranked)
    }
}
