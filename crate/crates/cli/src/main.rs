//! tacmap: curate an ATT&CK snapshot, retrieve context, prompt a chat
//! backend (or the deterministic mock), extract predicted tactics, and score
//! everything with per-tactic and samples-average metrics.

mod config;
mod pipeline;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use config::RunConfig;
use pipeline::{prior_records, run_predict, PredictJob};
use tacmap_core::baseline::{self, TrainConfig};
use tacmap_core::corpus::{
    compute_stats, contains_tactic_name, curate_finetune_set, curate_procedures, parse_snapshot,
    read_snapshot_file, render_overlap_csv, tactic_overlap_matrix, LabeledDescription,
    ProcedureExample,
};
use tacmap_core::embedding::{EmbeddingProvider, FlatIndex, HashedBagEmbedder, RemoteEmbedder};
use tacmap_core::eval::{
    build_report, render_report_csv, render_report_markdown, score_sample, subgroup_split,
    EvalReport, MarkdownLayout, SampleResult, Subgroup,
};
use tacmap_core::extraction::{ModeTag, Prediction};
use tacmap_core::fixture::{build_fixture, write_fixture, FixtureSpec};
use tacmap_core::jsonl::{atomic_write, read_jsonl, write_jsonl};
use tacmap_core::llm::{
    ChatBackend, EchoTacticsMock, Journal, PromptVariant, RemoteChatBackend, ReplayBackend,
    DEFAULT_BASE_URL,
};
use tacmap_core::retrieval::{
    ContextAssembler, HttpFetcher, NoFetch, PageCache, PageFetcher, ProcedureLookup, RetrievalMode,
};

/// A bad invocation rather than a failed run; exits with code 2.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl std::error::Error for UsageError {}

fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(message.into()))
}

#[derive(Parser)]
#[command(name = "tacmap", version, about = "Map attack procedure descriptions to ATT&CK tactics")]
struct Cli {
    /// TOML run configuration; command-line flags override file values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse an enterprise snapshot and write the curated corpora.
    Ingest {
        /// Snapshot bundle (.json or .json.gz).
        #[arg(long)]
        snapshot: Option<PathBuf>,
        #[arg(long)]
        version_tag: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build and persist the cosine index over procedure texts.
    Index {
        /// procedures.jsonl from `ingest`.
        #[arg(long)]
        procedures: Option<PathBuf>,
        /// Output index file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// "deterministic" or "remote:<model>:<dimension>".
        #[arg(long)]
        provider: Option<String>,
    },
    /// Assemble context, prompt the backend, and persist predictions.
    Predict {
        #[arg(long)]
        procedures: Option<PathBuf>,
        /// Index file (similar-procedures mode only).
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        cache: Option<PathBuf>,
        /// prompt-only | exact-url | similar-procedures
        #[arg(long)]
        mode: Option<String>,
        /// specific-no-context | specific-with-context | generic-with-context
        #[arg(long)]
        variant: Option<String>,
        /// mock | replay | a remote chat model id
        #[arg(long)]
        backend: Option<String>,
        /// Journal to replay (backend = replay).
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Max in-flight backend requests.
        #[arg(long)]
        budget: Option<usize>,
        /// Fetch uncached pages over HTTP.
        #[arg(long)]
        live_fetch: bool,
        #[arg(long)]
        provider: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score a predictions file against gold tactic sets.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        procedures: Option<PathBuf>,
        /// Also emit matched/unmatched URL subgroup reports.
        #[arg(long)]
        split_by_url: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the multi-label baseline on descriptions and predict procedures.
    Baseline {
        #[arg(long)]
        descriptions: Option<PathBuf>,
        #[arg(long)]
        procedures: Option<PathBuf>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the synthetic demo corpus (bundle plus prefilled page cache).
    Fixture {
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of procedure sentences.
        #[arg(long)]
        procedures: Option<usize>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file_config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Ingest { snapshot, version_tag, out } => {
            let config = file_config.overlaid(RunConfig {
                snapshot,
                version_tag,
                out_dir: out,
                ..RunConfig::default()
            });
            cmd_ingest(&config)
        }
        Command::Index { procedures, out, provider } => {
            let config = file_config
                .overlaid(RunConfig { embedding_provider: provider, ..RunConfig::default() });
            cmd_index(&config, procedures, out)
        }
        Command::Predict {
            procedures,
            index,
            cache,
            mode,
            variant,
            backend,
            replay,
            budget,
            live_fetch,
            provider,
            out,
        } => {
            let config = file_config.overlaid(RunConfig {
                cache_dir: cache,
                embedding_provider: provider,
                mode,
                variant,
                backend,
                replay_journal: replay,
                budget,
                out_dir: out,
                live_fetch: if live_fetch { Some(true) } else { None },
                ..RunConfig::default()
            });
            config.validate().map_err(|e| usage(e.to_string()))?;
            cmd_predict(&config, procedures, index)
        }
        Command::Evaluate { predictions, procedures, split_by_url, out } => {
            let config = file_config.overlaid(RunConfig { out_dir: out, ..RunConfig::default() });
            cmd_evaluate(&config, predictions, procedures, split_by_url)
        }
        Command::Baseline {
            descriptions,
            procedures,
            batch_size,
            epochs,
            learning_rate,
            seed,
            out,
        } => {
            let config =
                file_config.overlaid(RunConfig { seed, out_dir: out, ..RunConfig::default() });
            cmd_baseline(&config, descriptions, procedures, batch_size, epochs, learning_rate)
        }
        Command::Fixture { out, procedures } => {
            let config = file_config.overlaid(RunConfig { out_dir: out, ..RunConfig::default() });
            cmd_fixture(&config, procedures)
        }
    }
}

fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| usage(format!("missing {what}; pass the flag or set it in --config")))
}

fn parse_mode(s: &str) -> Result<RetrievalMode> {
    match s {
        "prompt-only" => Ok(RetrievalMode::PromptOnly),
        "exact-url" => Ok(RetrievalMode::ExactUrl),
        "similar-procedures" => Ok(RetrievalMode::SimilarProcedures),
        other => Err(usage(format!(
            "unknown mode {other:?}; expected prompt-only, exact-url, or similar-procedures"
        ))),
    }
}

fn parse_variant(s: &str) -> Result<PromptVariant> {
    match s {
        "specific-no-context" => Ok(PromptVariant::SpecificNoContext),
        "specific-with-context" => Ok(PromptVariant::SpecificWithContext),
        "generic-with-context" => Ok(PromptVariant::GenericWithContext),
        other => Err(usage(format!(
            "unknown variant {other:?}; expected specific-no-context, specific-with-context, or generic-with-context"
        ))),
    }
}

fn build_provider(spec: Option<&str>, base_url: &str) -> Result<Box<dyn EmbeddingProvider>> {
    match spec.unwrap_or("deterministic") {
        "deterministic" => Ok(Box::new(HashedBagEmbedder::default())),
        other => {
            let mut parts = other.splitn(3, ':');
            if parts.next() != Some("remote") {
                return Err(usage(format!(
                    "unknown embedding provider {other:?}; expected \"deterministic\" or \"remote:<model>:<dimension>\""
                )));
            }
            let model = parts.next().ok_or_else(|| usage("remote provider needs a model"))?;
            let dimension: usize = parts
                .next()
                .unwrap_or("1536")
                .parse()
                .map_err(|_| usage("remote provider dimension must be a number"))?;
            let api_key = std::env::var(tacmap_core::llm::API_KEY_ENV)
                .map_err(|_| anyhow!("{} is not set", tacmap_core::llm::API_KEY_ENV))?;
            Ok(Box::new(RemoteEmbedder::new(base_url, &api_key, model, dimension)))
        }
    }
}

fn out_dir(config: &RunConfig) -> Result<PathBuf> {
    let dir = require(config.out_dir.clone(), "--out directory")?;
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    Ok(dir)
}

fn cmd_ingest(config: &RunConfig) -> Result<()> {
    let snapshot = require(config.snapshot.clone(), "--snapshot path")?;
    let out = out_dir(config)?;
    let version_tag = config.version_tag.clone().unwrap_or_else(|| "v14.1".to_string());

    let started = Instant::now();
    let bytes = read_snapshot_file(&snapshot)?;
    let corpus = parse_snapshot(&bytes, &version_tag)?;
    let descriptions = curate_finetune_set(&corpus)?;
    let procedures = curate_procedures(&corpus)?;
    let stats = compute_stats(&descriptions, &procedures);
    let overlap = tactic_overlap_matrix(&procedures);

    write_jsonl(&out.join("descriptions.jsonl"), &descriptions)?;
    write_jsonl(&out.join("procedures.jsonl"), &procedures)?;
    atomic_write(&out.join("overlap.csv"), render_overlap_csv(&overlap).as_bytes())?;
    config.echo(&out)?;

    println!(
        "ingested {} ({} tactics, {} techniques/sub-techniques) in {:.1}s",
        version_tag,
        corpus.n_tactics(),
        corpus.n_techniques(),
        started.elapsed().as_secs_f64()
    );
    println!("descriptions: {}", stats.n_descriptions);
    println!("procedures: {} (support total {})", stats.n_procedures, stats.support_total);
    Ok(())
}

fn cmd_index(config: &RunConfig, procedures: Option<PathBuf>, out: Option<PathBuf>) -> Result<()> {
    let procedures_path = require(procedures, "--procedures path")?;
    let out = require(out, "--out index file")?;
    let base_url = config.api_base_url.as_deref().unwrap_or(DEFAULT_BASE_URL);
    let provider = build_provider(config.embedding_provider.as_deref(), base_url)?;

    let procedures: Vec<ProcedureExample> = read_jsonl(&procedures_path)?;
    let items: Vec<(String, String)> =
        procedures.iter().map(|p| (p.procedure_id.clone(), p.text.clone())).collect();
    let index = FlatIndex::build(&items, provider.as_ref())?;
    index.save(&out)?;
    println!(
        "indexed {} procedures (dimension {}) -> {}",
        index.len(),
        index.dimension(),
        out.display()
    );
    Ok(())
}

fn build_backend(
    config: &RunConfig,
) -> Result<(Box<dyn ChatBackend>, String)> {
    let spec = config.backend.as_deref().unwrap_or("mock");
    match spec {
        "mock" => Ok((Box::new(EchoTacticsMock), "mock".to_string())),
        "replay" => {
            let journal = require(config.replay_journal.clone(), "--replay journal path")?;
            let backend = ReplayBackend::from_journal(&journal)?;
            Ok((Box::new(backend), "replay".to_string()))
        }
        model_id => {
            let base_url = config.api_base_url.as_deref().unwrap_or(DEFAULT_BASE_URL);
            let backend = RemoteChatBackend::from_env(base_url)?;
            Ok((Box::new(backend), model_id.to_string()))
        }
    }
}

fn cmd_predict(
    config: &RunConfig,
    procedures_path: Option<PathBuf>,
    index_path: Option<PathBuf>,
) -> Result<()> {
    let procedures_path = require(procedures_path, "--procedures path")?;
    let cache_dir = require(config.cache_dir.clone(), "--cache directory")?;
    let out = out_dir(config)?;
    let mode = parse_mode(config.mode.as_deref().unwrap_or("prompt-only"))?;
    let variant = match &config.variant {
        Some(v) => parse_variant(v)?,
        None => match mode {
            RetrievalMode::PromptOnly => PromptVariant::SpecificNoContext,
            _ => PromptVariant::SpecificWithContext,
        },
    };
    match (mode, variant.needs_context()) {
        (RetrievalMode::PromptOnly, true) => {
            return Err(usage("prompt-only mode cannot use a with-context variant"))
        }
        (RetrievalMode::ExactUrl | RetrievalMode::SimilarProcedures, false) => {
            return Err(usage("retrieval modes require a with-context variant"))
        }
        _ => {}
    }

    let procedures: Vec<ProcedureExample> = read_jsonl(&procedures_path)?;
    let base_url = config.api_base_url.as_deref().unwrap_or(DEFAULT_BASE_URL);
    let provider = build_provider(config.embedding_provider.as_deref(), base_url)?;
    let cache = PageCache::open(&cache_dir)?;
    let fetcher: Box<dyn PageFetcher> = if config.live_fetch == Some(true) {
        Box::new(HttpFetcher::default())
    } else {
        Box::new(NoFetch)
    };

    let index_loaded;
    let lookup;
    let mut assembler = ContextAssembler::new(provider.as_ref(), &cache, fetcher.as_ref());
    if mode == RetrievalMode::SimilarProcedures {
        let index_path = require(index_path, "--index path")?;
        index_loaded = FlatIndex::load(&index_path)?;
        if index_loaded.len() != procedures.len() {
            bail!(
                "index has {} entries but {} procedures were loaded; rebuild the index",
                index_loaded.len(),
                procedures.len()
            );
        }
        lookup = ProcedureLookup::new(&procedures);
        assembler = assembler.with_neighbors(&index_loaded, &lookup);
    }

    let (backend, model_id) = build_backend(config)?;
    let journal_path = out.join("journal.jsonl");
    let prior = prior_records(&journal_path, mode, variant)?;
    let journal = Journal::open(&journal_path)?;

    let job = PredictJob {
        procedures: &procedures,
        assembler,
        mode,
        variant,
        backend: backend.as_ref(),
        model_id,
        journal: &journal,
        prior,
        budget: config.budget.unwrap_or(4),
    };
    let started = Instant::now();
    let (predictions, stats) = run_predict(&job)?;
    write_jsonl(&out.join("predictions.jsonl"), &predictions)?;
    config.echo(&out)?;

    println!(
        "predicted {} procedures (mode={}, variant={}, backend={}) in {:.1}s",
        stats.total,
        mode.label(),
        variant.label(),
        config.backend.as_deref().unwrap_or("mock"),
        started.elapsed().as_secs_f64()
    );
    if stats.resumed > 0 {
        println!("resumed {} procedures from the journal", stats.resumed);
    }
    if stats.context_unavailable > 0 {
        println!("context unavailable for {} procedures", stats.context_unavailable);
    }
    Ok(())
}

fn score_predictions(
    predictions: &[Prediction],
    gold: &HashMap<&str, &ProcedureExample>,
) -> Result<Vec<SampleResult>> {
    predictions
        .iter()
        .map(|p| {
            let procedure = gold.get(p.procedure_id.as_str()).ok_or_else(|| {
                anyhow!("prediction for unknown procedure {}", p.procedure_id)
            })?;
            Ok(score_sample(&p.procedure_id, &procedure.gold_tactics, &p.predicted)?)
        })
        .collect()
}

fn write_report(out: &Path, stem: &str, report: &EvalReport) -> Result<()> {
    atomic_write(&out.join(format!("{stem}.csv")), render_report_csv(report).as_bytes())?;
    atomic_write(
        &out.join(format!("{stem}.md")),
        render_report_markdown(report, MarkdownLayout::Full).as_bytes(),
    )?;
    Ok(())
}

fn cmd_evaluate(
    config: &RunConfig,
    predictions_path: Option<PathBuf>,
    procedures_path: Option<PathBuf>,
    split_by_url: bool,
) -> Result<()> {
    let predictions_path = require(predictions_path, "--predictions path")?;
    let procedures_path = require(procedures_path, "--procedures path")?;
    let out = out_dir(config)?;

    let procedures: Vec<ProcedureExample> = read_jsonl(&procedures_path)?;
    let predictions: Vec<Prediction> = read_jsonl(&predictions_path)?;
    let gold: HashMap<&str, &ProcedureExample> =
        procedures.iter().map(|p| (p.procedure_id.as_str(), p)).collect();

    let results = score_predictions(&predictions, &gold)?;
    let report = build_report(&results, Subgroup::All)?;
    write_report(&out, "report", &report)?;
    println!(
        "samples-average P/R/F1 = {:.2}/{:.2}/{:.2} over {} procedures (support {})",
        report.samples_avg.precision,
        report.samples_avg.recall,
        report.samples_avg.f1,
        report.n_samples,
        report.total_support
    );

    if split_by_url {
        let (matched, unmatched) = subgroup_split(&predictions);
        println!(
            "subgroups: matched-url={} unmatched-url={} total={}",
            matched.len(),
            unmatched.len(),
            predictions.len()
        );
        for (subgroup, slice) in
            [(Subgroup::MatchedUrl, &matched), (Subgroup::UnmatchedUrl, &unmatched)]
        {
            if slice.is_empty() {
                println!("subgroup {} is empty; no report written", subgroup.label());
                continue;
            }
            let results = score_predictions(slice, &gold)?;
            let report = build_report(&results, subgroup)?;
            write_report(&out, &format!("report_{}", subgroup.label()), &report)?;
        }
    }
    config.echo(&out)?;

    let predicted_ids: HashSet<&str> =
        predictions.iter().map(|p| p.procedure_id.as_str()).collect();
    let missing = procedures.iter().filter(|p| !predicted_ids.contains(p.procedure_id.as_str())).count();
    if missing > 0 {
        bail!("{missing} procedures lacked a prediction");
    }
    Ok(())
}

fn cmd_baseline(
    config: &RunConfig,
    descriptions_path: Option<PathBuf>,
    procedures_path: Option<PathBuf>,
    batch_size: Option<usize>,
    epochs: Option<usize>,
    learning_rate: Option<f64>,
) -> Result<()> {
    let descriptions_path = require(descriptions_path, "--descriptions path")?;
    let procedures_path = require(procedures_path, "--procedures path")?;
    let out = out_dir(config)?;

    let descriptions: Vec<LabeledDescription> = read_jsonl(&descriptions_path)?;
    let procedures: Vec<ProcedureExample> = read_jsonl(&procedures_path)?;

    let defaults = TrainConfig::default();
    let train_config = TrainConfig {
        batch_size: batch_size.unwrap_or(defaults.batch_size),
        epochs: epochs.unwrap_or(defaults.epochs),
        learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
        seed: config.seed.unwrap_or(defaults.seed),
    };

    let started = Instant::now();
    let model = baseline::train(&descriptions, &train_config)?;
    let elapsed = started.elapsed();
    model.save(&out.join("model.bin"))?;

    let predictions: Vec<Prediction> = procedures
        .iter()
        .map(|p| Prediction {
            procedure_id: p.procedure_id.clone(),
            mode: ModeTag::Baseline,
            prompt_variant: None,
            predicted: baseline::predict(&model, &p.text),
            raw_response: String::new(),
            url_matched: false,
        })
        .collect();
    write_jsonl(&out.join("predictions.jsonl"), &predictions)?;

    let gold: HashMap<&str, &ProcedureExample> =
        procedures.iter().map(|p| (p.procedure_id.as_str(), p)).collect();
    let results = score_predictions(&predictions, &gold)?;
    let report = build_report(&results, Subgroup::All)?;
    write_report(&out, "report", &report)?;
    config.echo(&out)?;

    println!(
        "trained on {} descriptions in {:.1}s (vocabulary {}, subset accuracy on train {:.3})",
        descriptions.len(),
        elapsed.as_secs_f64(),
        model.vocabulary.len(),
        baseline::subset_accuracy(&model, &descriptions)
    );
    println!(
        "baseline samples-average P/R/F1 = {:.2}/{:.2}/{:.2} over {} procedures",
        report.samples_avg.precision,
        report.samples_avg.recall,
        report.samples_avg.f1,
        report.n_samples
    );
    Ok(())
}

fn cmd_fixture(config: &RunConfig, procedures: Option<usize>) -> Result<()> {
    let out = out_dir(config)?;
    let mut spec = FixtureSpec::default();
    if let Some(n) = procedures {
        spec.n_procedures = n;
    }
    let built = build_fixture(&spec);
    write_fixture(&built, &out)?;
    for p in &built.procedures {
        debug_assert!(!contains_tactic_name(&p.sentence));
    }
    println!(
        "fixture written: {} (bundle.json, pages/ with {} technique pages, {} procedure sentences)",
        out.display(),
        built.pages.len(),
        built.procedures.len()
    );
    Ok(())
}
