//! Operator CLI: ontology compilation, KG construction runs, QA evaluation,
//! analytics, and usage reporting.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2 data error,
//! 3 backend error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;

use ontokg::analytics::{
    answer_coverage, bootstrap_std, compare_reports, graph_stats, neighborhood_profile,
    ontology_entailment, ReportRow, DEFAULT_HOP_LIST, DEFAULT_MIN_MATCH_CHARS,
};
use ontokg::config::{EmbedderChoice, LlmChoice, RunConfig, EMBED_TOKEN_ENV, LLM_TOKEN_ENV};
use ontokg::embed::{CachedEmbedder, Embedder, HashEmbedder, RemoteEmbedder, RemoteEmbedderConfig};
use ontokg::extract::{ChunkingConfig, Document, Pipeline, PipelineConfig};
use ontokg::kg::KgStore;
use ontokg::llm::{
    Gateway, GatewayConfig, LlmBackend, LlmError, LlmUsage, RemoteChat, RemoteChatConfig,
    ScriptedBackend, UsageReport,
};
use ontokg::ontology::{compile_schema, load_schema, OntologyIndex, OntologySchema};
use ontokg::qa::{score, QaConfig, QaDatasetRecord, QaSession};

#[derive(Parser)]
#[command(name = "ontokg", version, about = "Ontology-constrained KG construction and QA")]
struct Cli {
    /// Key = value config file; flags override its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Cap on internal worker count.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Convert raw schema dump rows into the compiled schema file format,
    /// keeping only factual datatypes.
    CompileOntology {
        /// Raw dump rows (newline-delimited records).
        #[arg(long)]
        raw: PathBuf,
        /// Where to write the compiled schema.
        #[arg(long)]
        out: PathBuf,
    },
    /// Construct a KG snapshot from a corpus.
    Build {
        #[arg(long)]
        ontology: Option<PathBuf>,
        /// Corpus file: one {"id", "text"} record per line.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Output directory for the snapshot, manifest, and reports.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extend an existing snapshot instead of starting empty.
        #[arg(long)]
        kg: Option<PathBuf>,
        /// LLM backend: remote or scripted.
        #[arg(long)]
        backend: Option<String>,
        /// Fixture file for the scripted backend.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        max_chunk_chars: Option<usize>,
        #[arg(long)]
        retry_budget: Option<u32>,
    },
    /// Answer a QA dataset using a KG snapshot as the only knowledge source.
    Qa {
        #[arg(long)]
        kg: PathBuf,
        /// Dataset: one {"id", "question", "answers"} record per line.
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        backend: Option<String>,
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Neighborhood radius per step.
        #[arg(long)]
        hop_k: Option<usize>,
        /// Print the per-question breakdown.
        #[arg(long)]
        details: bool,
    },
    /// Structural statistics for one or more snapshots.
    Stats {
        /// Snapshot paths; several make a comparison table.
        #[arg(long, required = true, num_args = 1..)]
        kg: Vec<PathBuf>,
        /// Emit machine-readable JSON instead of the table.
        #[arg(long)]
        json: bool,
    },
    /// Answer coverage of a snapshot against a QA dataset, with ontology
    /// entailment when a schema is supplied.
    Coverage {
        #[arg(long)]
        kg: PathBuf,
        /// Dataset records must carry "question_entities".
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Comma-separated hop list (default 5,10).
        #[arg(long)]
        hops: Option<String>,
        /// Bootstrap resamples for the std estimate (0 disables).
        #[arg(long, default_value_t = 1000)]
        bootstrap: usize,
        #[arg(long)]
        seed: Option<u64>,
        /// Also profile neighborhood sizes up to this many hops.
        #[arg(long)]
        profile: Option<usize>,
        #[arg(long)]
        json: bool,
        #[arg(long)]
        details: bool,
    },
    /// Usage report of a previous run directory.
    Usage {
        /// The --out directory of a build or qa run.
        #[arg(long)]
        run: PathBuf,
    },
}

/// Error kinds mapped onto the exit-code contract.
enum CliError {
    Usage(String),
    Data(anyhow::Error),
    Backend(anyhow::Error),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(message) => message.clone(),
            CliError::Data(error) | CliError::Backend(error) => format!("{error:#}"),
        }
    }
}

fn usage_err(message: impl Into<String>) -> CliError {
    CliError::Usage(message.into())
}

fn data_err(error: impl Into<anyhow::Error>) -> CliError {
    CliError::Data(error.into())
}

/// LLM-side failures that reflect the backend rather than the input data.
fn classify_llm(error: LlmError) -> CliError {
    match error {
        LlmError::Transport { .. } | LlmError::FixtureMiss { .. } => {
            CliError::Backend(error.into())
        }
        other => CliError::Data(other.into()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(error) => {
            // Help and version are successful exits; real parse failures are
            // usage errors under the exit-code contract.
            use clap::error::ErrorKind;
            if matches!(error.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{error}");
                return ExitCode::SUCCESS;
            }
            eprint!("{error}");
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(error) => {
            eprintln!("error: {}", error.message());
            ExitCode::from(error.code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let jobs_flag = cli.jobs;
    match cli.command {
        Command::CompileOntology { raw, out } => cmd_compile_ontology(&raw, &out),
        Command::Build {
            ontology,
            corpus,
            out,
            kg,
            backend,
            fixtures,
            endpoint,
            model,
            max_chunk_chars,
            retry_budget,
        } => {
            let mut overrides: Vec<(String, String)> = Vec::new();
            push_override(&mut overrides, "ontology", ontology.map(path_string));
            push_override(&mut overrides, "corpus", corpus.map(path_string));
            push_override(&mut overrides, "out", out.map(path_string));
            push_override(&mut overrides, "llm_backend", backend);
            push_override(&mut overrides, "llm_fixtures", fixtures.map(path_string));
            push_override(&mut overrides, "llm_endpoint", endpoint);
            push_override(&mut overrides, "llm_model", model);
            push_override(
                &mut overrides,
                "max_chunk_chars",
                max_chunk_chars.map(|v| v.to_string()),
            );
            push_override(&mut overrides, "retry_budget", retry_budget.map(|v| v.to_string()));
            push_override(&mut overrides, "jobs", jobs_flag.map(|v| v.to_string()));
            let config = RunConfig::resolve(cli.config.as_deref(), &overrides)
                .map_err(|e| usage_err(e.to_string()))?;
            cmd_build(&config, kg.as_deref())
        }
        Command::Qa { kg, dataset, out, backend, fixtures, endpoint, model, hop_k, details } => {
            let mut overrides: Vec<(String, String)> = Vec::new();
            push_override(&mut overrides, "llm_backend", backend);
            push_override(&mut overrides, "llm_fixtures", fixtures.map(path_string));
            push_override(&mut overrides, "llm_endpoint", endpoint);
            push_override(&mut overrides, "llm_model", model);
            push_override(&mut overrides, "hop_k", hop_k.map(|v| v.to_string()));
            push_override(&mut overrides, "out", out.map(path_string));
            push_override(&mut overrides, "jobs", jobs_flag.map(|v| v.to_string()));
            let config = RunConfig::resolve(cli.config.as_deref(), &overrides)
                .map_err(|e| usage_err(e.to_string()))?;
            cmd_qa(&config, &kg, &dataset, details)
        }
        Command::Stats { kg, json } => cmd_stats(&kg, json),
        Command::Coverage { kg, dataset, schema, hops, bootstrap, seed, profile, json, details } => {
            cmd_coverage(CoverageArgs {
                kg_path: &kg,
                dataset_path: &dataset,
                schema_path: schema.as_deref(),
                hops: hops.as_deref(),
                bootstrap,
                seed: seed.unwrap_or(0),
                profile,
                json,
                details,
            })
        }
        Command::Usage { run } => cmd_usage(&run),
    }
}

fn push_override(overrides: &mut Vec<(String, String)>, key: &str, value: Option<String>) {
    if let Some(value) = value {
        overrides.push((key.to_string(), value));
    }
}

fn path_string(path: PathBuf) -> String {
    path.to_string_lossy().into_owned()
}

fn open_reader(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| data_err(anyhow::anyhow!("cannot open {}: {e}", path.display())))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                data_err(anyhow::anyhow!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| data_err(anyhow::anyhow!("cannot create {}: {e}", path.display())))
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let reader = open_reader(path)?;
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line.map_err(data_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let record: T = serde_json::from_str(&line)
            .map_err(|e| data_err(anyhow::anyhow!("{} line {}: {e}", path.display(), index + 1)))?;
        records.push(record);
    }
    Ok(records)
}

fn load_schema_file(path: &Path) -> Result<OntologySchema, CliError> {
    let reader = open_reader(path)?;
    let (schema, report) = load_schema(reader).map_err(data_err)?;
    for warning in &report.warnings {
        log::warn!("{warning}");
    }
    Ok(schema)
}

/// The embedder a run uses. Remote embedders are wrapped in a cache so
/// re-runs do not re-bill identical texts; the cache handle is returned for
/// persistence next to the run's other artifacts.
fn make_embedder(config: &RunConfig) -> (Arc<dyn Embedder>, Option<Arc<CachedEmbedder>>) {
    match &config.embedder {
        EmbedderChoice::Hash => (Arc::new(HashEmbedder::new()), None),
        EmbedderChoice::Remote { endpoint, model, dimension } => {
            let remote = RemoteEmbedder::new(RemoteEmbedderConfig {
                endpoint: endpoint.clone(),
                model: model.clone(),
                dimension: *dimension,
                api_token: std::env::var(EMBED_TOKEN_ENV).ok(),
            });
            let cached = Arc::new(CachedEmbedder::new(Arc::new(remote)));
            (cached.clone(), Some(cached))
        }
    }
}

const EMBED_CACHE_FILE: &str = "embed-cache.jsonl";

fn load_embed_cache(cache: &Option<Arc<CachedEmbedder>>, out_dir: Option<&Path>) {
    if let (Some(cache), Some(out_dir)) = (cache, out_dir) {
        let path = out_dir.join(EMBED_CACHE_FILE);
        if let Ok(file) = File::open(&path) {
            if let Err(error) = cache.load_cache(BufReader::new(file)) {
                log::warn!("ignoring embedding cache {}: {error}", path.display());
            }
        }
    }
}

fn save_embed_cache(
    cache: &Option<Arc<CachedEmbedder>>,
    out_dir: Option<&Path>,
) -> Result<(), CliError> {
    if let (Some(cache), Some(out_dir)) = (cache, out_dir) {
        let mut writer = create_writer(&out_dir.join(EMBED_CACHE_FILE))?;
        cache.save_cache(&mut writer).map_err(data_err)?;
        writer.flush().map_err(data_err)?;
    }
    Ok(())
}

fn make_backend(config: &RunConfig) -> Result<Arc<dyn LlmBackend>, CliError> {
    match &config.llm {
        LlmChoice::Scripted { fixtures } => {
            let reader = open_reader(fixtures)?;
            Ok(Arc::new(ScriptedBackend::load(reader).map_err(data_err)?))
        }
        LlmChoice::Remote { endpoint, model } => Ok(Arc::new(RemoteChat::new(RemoteChatConfig {
            endpoint: endpoint.clone(),
            model: model.clone(),
            api_token: std::env::var(LLM_TOKEN_ENV).ok(),
            max_in_flight: config.llm_max_in_flight,
        }))),
    }
}

fn make_gateway(config: &RunConfig) -> Result<Gateway, CliError> {
    let backend = make_backend(config)?;
    let gateway_config = GatewayConfig {
        retry_budget: config.retry_budget,
        temperature: config.temperature,
        ..GatewayConfig::default()
    };
    Ok(Gateway::new(backend, gateway_config))
}

fn cmd_compile_ontology(raw: &Path, out: &Path) -> Result<(), CliError> {
    let reader = open_reader(raw)?;
    let mut buffer = Vec::new();
    let report = compile_schema(reader, &mut buffer).map_err(data_err)?;
    // Validate the compiled output before committing it to disk.
    let (_, load_report) = load_schema(buffer.as_slice()).map_err(data_err)?;
    let mut writer = create_writer(out)?;
    writer.write_all(&buffer).map_err(data_err)?;
    writer.flush().map_err(data_err)?;

    println!(
        "compiled {} types, kept {} properties, dropped {}",
        report.types_kept, report.properties_kept, report.properties_dropped
    );
    for (datatype, count) in &report.dropped_by_datatype {
        println!("  dropped {count} with datatype {datatype}");
    }
    for warning in &load_report.warnings {
        println!("  warning: {warning}");
    }
    Ok(())
}

#[derive(serde::Deserialize)]
struct DocRecord {
    id: String,
    text: String,
}

fn cmd_build(config: &RunConfig, kg_in: Option<&Path>) -> Result<(), CliError> {
    let ontology_path =
        config.ontology.as_deref().ok_or_else(|| usage_err("build requires --ontology"))?;
    let corpus_path =
        config.corpus.as_deref().ok_or_else(|| usage_err("build requires --corpus"))?;
    let out_dir = config.out.as_deref().ok_or_else(|| usage_err("build requires --out"))?;

    let schema = load_schema_file(ontology_path)?;
    let (embedder, embed_cache) = make_embedder(config);
    load_embed_cache(&embed_cache, Some(out_dir));
    let embedder_id = embedder.id();
    let index = OntologyIndex::build(&schema, embedder.clone()).map_err(data_err)?;
    let mut kg = match kg_in {
        Some(path) => KgStore::import(open_reader(path)?, embedder.clone()).map_err(data_err)?,
        None => KgStore::new(embedder.clone()),
    };

    let documents: Vec<DocRecord> = read_jsonl(corpus_path)?;
    let gateway = make_gateway(config)?;
    let pipeline_config = PipelineConfig {
        chunking: ChunkingConfig { max_chunk_chars: config.max_chunk_chars },
        unfiltered_link_fallback: config.unfiltered_link_fallback,
        min_link_score: config.min_score,
        ..PipelineConfig::default()
    };
    let pipeline = Pipeline::new(&schema, &index, embedder, &gateway, pipeline_config);

    let mut reports = Vec::with_capacity(documents.len());
    for record in &documents {
        let document = Document { id: record.id.clone(), text: record.text.clone() };
        let report = pipeline.process_document(&document, &mut kg).map_err(|e| match e {
            ontokg::extract::ExtractError::Llm(llm) => classify_llm(llm),
            other => data_err(other),
        })?;
        println!(
            "{}: {} candidates, {} stored, {} dropped",
            report.document_id,
            report.candidates,
            report.stored,
            report.dropped_total()
        );
        reports.push(report);
    }

    let snapshot_path = out_dir.join("kg.snapshot");
    let mut snapshot = create_writer(&snapshot_path)?;
    kg.export(&mut snapshot).map_err(data_err)?;
    snapshot.flush().map_err(data_err)?;

    let mut report_writer = create_writer(&out_dir.join("ingest-reports.jsonl"))?;
    for report in &reports {
        writeln!(report_writer, "{}", serde_json::to_string(report).map_err(data_err)?)
            .map_err(data_err)?;
    }
    report_writer.flush().map_err(data_err)?;

    let usage = gateway.usage_report();
    write_usage(out_dir, &usage)?;
    save_embed_cache(&embed_cache, Some(out_dir))?;

    let manifest = serde_json::json!({
        "command": "build",
        "ontology": ontology_path.to_string_lossy(),
        "corpus": corpus_path.to_string_lossy(),
        "documents": documents.iter().map(|d| d.id.clone()).collect::<Vec<String>>(),
        "chunking": { "max_chunk_chars": config.max_chunk_chars },
        "retry_budget": config.retry_budget,
        "temperature": config.temperature,
        "jobs": config.jobs,
        "llm_backend": gateway.backend_id(),
        "embedder": embedder_id,
        "artifacts": {
            "kg_snapshot": "kg.snapshot",
            "ingest_reports": "ingest-reports.jsonl",
            "usage": "usage.json",
        },
        "usage_total": usage.total,
    });
    let mut manifest_writer = create_writer(&out_dir.join("manifest.json"))?;
    writeln!(manifest_writer, "{}", serde_json::to_string_pretty(&manifest).map_err(data_err)?)
        .map_err(data_err)?;
    manifest_writer.flush().map_err(data_err)?;

    println!(
        "built {} entities, {} triplets -> {}",
        kg.entity_count(),
        kg.triplet_count(),
        snapshot_path.display()
    );
    Ok(())
}

fn write_usage(out_dir: &Path, usage: &UsageReport) -> Result<(), CliError> {
    let mut usage_writer = create_writer(&out_dir.join("usage.json"))?;
    writeln!(usage_writer, "{}", serde_json::to_string_pretty(usage).map_err(data_err)?)
        .map_err(data_err)?;
    usage_writer.flush().map_err(data_err)
}

fn cmd_qa(
    config: &RunConfig,
    kg_path: &Path,
    dataset_path: &Path,
    details: bool,
) -> Result<(), CliError> {
    let (embedder, embed_cache) = make_embedder(config);
    load_embed_cache(&embed_cache, config.out.as_deref());
    let kg = KgStore::import(open_reader(kg_path)?, embedder).map_err(data_err)?;
    let records: Vec<QaDatasetRecord> = read_jsonl(dataset_path)?;
    let gateway = make_gateway(config)?;
    let qa_config =
        QaConfig { hop_k: config.hop_k, min_link_score: config.min_score, ..QaConfig::default() };

    // Sessions are independent over a read-only store, so questions fan out
    // across up to `jobs` workers; results keep dataset order.
    let answered = answer_all(&kg, &gateway, &qa_config, &records, config.jobs.max(1))?;

    let mut traces = Vec::with_capacity(records.len());
    let mut em_sum = 0.0f64;
    let mut f1_sum = 0.0f64;
    for (record, trace) in records.iter().zip(answered) {
        let result = score(&trace.final_answer, &record.answers, &kg);
        em_sum += f64::from(u8::from(result.exact_match));
        f1_sum += result.f1;
        if details {
            println!(
                "{}: answer {:?} em {} f1 {:.4} steps {}{}",
                record.id,
                trace.final_answer,
                u8::from(result.exact_match),
                result.f1,
                trace.steps.len(),
                if trace.degraded { " (degraded)" } else { "" }
            );
        }
        traces.push((record, trace, result));
    }

    let questions = records.len();
    let (em_pct, f1_pct) = if questions == 0 {
        (0.0, 0.0)
    } else {
        (100.0 * em_sum / questions as f64, 100.0 * f1_sum / questions as f64)
    };
    println!("questions {questions}  EM {em_pct:.1}  F1 {f1_pct:.1}");

    if let Some(out_dir) = config.out.as_deref() {
        let mut trace_writer = create_writer(&out_dir.join("traces.jsonl"))?;
        for (record, trace, result) in &traces {
            let row = serde_json::json!({
                "id": record.id,
                "trace": trace,
                "exact_match": result.exact_match,
                "f1": result.f1,
            });
            writeln!(trace_writer, "{row}").map_err(data_err)?;
        }
        trace_writer.flush().map_err(data_err)?;
        write_usage(out_dir, &gateway.usage_report())?;

        let summary = serde_json::json!({
            "command": "qa",
            "kg": kg_path.to_string_lossy(),
            "dataset": dataset_path.to_string_lossy(),
            "questions": questions,
            "exact_match_pct": em_pct,
            "f1_pct": f1_pct,
            "hop_k": config.hop_k,
            "llm_backend": gateway.backend_id(),
        });
        let mut summary_writer = create_writer(&out_dir.join("qa-summary.json"))?;
        writeln!(summary_writer, "{}", serde_json::to_string_pretty(&summary).map_err(data_err)?)
            .map_err(data_err)?;
        summary_writer.flush().map_err(data_err)?;
        save_embed_cache(&embed_cache, Some(out_dir))?;
    }
    Ok(())
}

/// Answer every record, preserving dataset order, with at most `jobs`
/// concurrent sessions sharing one gateway.
fn answer_all(
    kg: &KgStore,
    gateway: &Gateway,
    qa_config: &QaConfig,
    records: &[QaDatasetRecord],
    jobs: usize,
) -> Result<Vec<ontokg::qa::QaTrace>, CliError> {
    let answer_one = |record: &QaDatasetRecord| {
        let session = QaSession::new(kg, gateway, qa_config.clone());
        session.answer(&record.question).map_err(|e| match e {
            ontokg::qa::QaError::Llm(llm) => classify_llm(llm),
            other => data_err(other),
        })
    };
    if jobs <= 1 || records.len() <= 1 {
        return records.iter().map(answer_one).collect();
    }
    let chunk_size = records.len().div_ceil(jobs);
    let chunk_results: Vec<Result<Vec<ontokg::qa::QaTrace>, CliError>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = records
                .chunks(chunk_size)
                .map(|chunk| scope.spawn(move || chunk.iter().map(answer_one).collect()))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
    let mut traces = Vec::with_capacity(records.len());
    for chunk in chunk_results {
        traces.extend(chunk?);
    }
    Ok(traces)
}

fn cmd_stats(snapshots: &[PathBuf], json: bool) -> Result<(), CliError> {
    let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::new());
    let mut rows = Vec::with_capacity(snapshots.len());
    for path in snapshots {
        let kg = KgStore::import(open_reader(path)?, embedder.clone()).map_err(data_err)?;
        rows.push(ReportRow {
            name: path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| path.display().to_string()),
            stats: graph_stats(&kg),
            coverage: None,
        });
    }
    if json {
        println!("{}", serde_json::to_string_pretty(&rows).map_err(data_err)?);
    } else {
        let comparison = compare_reports(&rows).map_err(data_err)?;
        print!("{}", comparison.to_text());
    }
    Ok(())
}

struct CoverageArgs<'a> {
    kg_path: &'a Path,
    dataset_path: &'a Path,
    schema_path: Option<&'a Path>,
    hops: Option<&'a str>,
    bootstrap: usize,
    seed: u64,
    profile: Option<usize>,
    json: bool,
    details: bool,
}

fn cmd_coverage(args: CoverageArgs<'_>) -> Result<(), CliError> {
    let embedder: Arc<dyn Embedder> = Arc::new(HashEmbedder::new());
    let kg = KgStore::import(open_reader(args.kg_path)?, embedder).map_err(data_err)?;
    let records: Vec<QaDatasetRecord> = read_jsonl(args.dataset_path)?;

    let hop_list: Vec<usize> = match args.hops {
        None => DEFAULT_HOP_LIST.to_vec(),
        Some(text) => text
            .split(',')
            .map(|h| {
                h.trim()
                    .parse::<usize>()
                    .map_err(|e| usage_err(format!("bad hop value {h:?}: {e}")))
            })
            .collect::<Result<Vec<usize>, CliError>>()?,
    };

    let mut report = answer_coverage(&kg, &records, &hop_list, DEFAULT_MIN_MATCH_CHARS)
        .map_err(data_err)?;
    if let Some(schema_path) = args.schema_path {
        let schema = load_schema_file(schema_path)?;
        report.ontology_entailment = Some(ontology_entailment(&kg, &schema).percentage);
    }

    if args.json {
        println!("{}", serde_json::to_string_pretty(&report).map_err(data_err)?);
    } else {
        let total_hits: Vec<bool> = report.per_question.iter().map(|q| q.answer_in_kg).collect();
        let std_total = bootstrap_std(&total_hits, args.bootstrap, args.seed);
        println!(
            "questions {}  contains-answer total {:.1}% (±{:.1})",
            report.questions, report.contains_answer_total, std_total
        );
        for (k, value) in &report.contains_answer_khop {
            let hits: Vec<bool> = report.per_question.iter().map(|q| q.within_hops[k]).collect();
            let std = bootstrap_std(&hits, args.bootstrap, args.seed);
            println!("  within {k} hops: {value:.1}% (±{std:.1})");
        }
        if let Some(entailment) = report.ontology_entailment {
            println!("  ontology entailment: {entailment:.1}%");
        }
        if args.details {
            for question in &report.per_question {
                println!(
                    "  {}: total {} hops {:?}",
                    question.id,
                    u8::from(question.answer_in_kg),
                    question.within_hops
                );
            }
        }
    }

    if let Some(k_max) = args.profile {
        let mut seeds: Vec<String> = Vec::new();
        for record in &records {
            if let Some(entities) = &record.question_entities {
                seeds.extend(entities.iter().cloned());
            }
        }
        let profile =
            neighborhood_profile(&kg, &seeds, k_max, DEFAULT_MIN_MATCH_CHARS).map_err(data_err)?;
        println!("neighborhood profile (relative sizes over {} seeds):", profile.matched_seeds);
        for (k, value) in &profile.by_hop {
            println!("  {k}-hop: {value:.3}");
        }
        println!("  component: {:.3}", profile.component);
    }
    Ok(())
}

fn cmd_usage(run_dir: &Path) -> Result<(), CliError> {
    let usage_path = run_dir.join("usage.json");
    if !usage_path.exists() {
        return Err(data_err(anyhow::anyhow!(
            "no usage report found under {} (unknown run)",
            run_dir.display()
        )));
    }
    let report: UsageReport =
        serde_json::from_reader(open_reader(&usage_path)?).map_err(data_err)?;
    let mut rows: BTreeMap<String, LlmUsage> = report.per_stage.clone();
    rows.insert("total".to_string(), report.total);
    println!("{:<24} {:>10} {:>12} {:>7}", "stage", "prompt", "completion", "calls");
    for (stage, usage) in &rows {
        println!(
            "{:<24} {:>10} {:>12} {:>7}",
            stage, usage.prompt_tokens, usage.completion_tokens, usage.calls
        );
    }
    Ok(())
}
