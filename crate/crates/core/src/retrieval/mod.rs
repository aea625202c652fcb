//! Context assembly for the three retrieval modes: prompt-only, exact
//! reference URL, and top-3 similar procedures.

mod cache;
mod chunk;

pub use cache::{html_to_text, url_digest, CacheError, FetchError, HttpFetcher, NoFetch, PageCache, PageFetcher};
pub use chunk::{chunk_text, select_top_chunks};

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ProcedureExample;
use crate::embedding::{EmbedError, EmbeddingProvider, FlatIndex, IndexError};

pub const DEFAULT_CHUNK_SIZE: usize = 8000;
pub const DEFAULT_CHUNK_OVERLAP: usize = 500;
pub const DEFAULT_TOP_CHUNKS: usize = 3;
pub const DEFAULT_TOP_NEIGHBORS: usize = 3;

/// Hard cap on injected context: three chunks of 8,000 characters.
pub const MAX_CONTEXT_CHARS: usize = DEFAULT_TOP_CHUNKS * DEFAULT_CHUNK_SIZE;

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error("similar-procedures mode requires a procedure index")]
    MissingNeighborConfig,
    #[error("index key {key} has no matching procedure")]
    InconsistentIndex { key: String },
}

/// How relevant context is gathered before prompting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    PromptOnly,
    ExactUrl,
    SimilarProcedures,
}

impl RetrievalMode {
    pub fn label(self) -> &'static str {
        match self {
            RetrievalMode::PromptOnly => "prompt-only",
            RetrievalMode::ExactUrl => "exact-url",
            RetrievalMode::SimilarProcedures => "similar-procedures",
        }
    }
}

/// A ranked slice of one source page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextChunk {
    pub source_url: String,
    pub start_offset: usize,
    pub text: String,
    pub rank_score: f64,
}

/// The retrieval product injected into prompts.
///
/// `unavailable` marks the case where candidate URLs existed but none could
/// be fetched; it is distinct from the intentionally empty prompt-only
/// context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssembledContext {
    pub mode: RetrievalMode,
    pub chunks: Vec<ContextChunk>,
    pub candidate_urls: Vec<String>,
    pub url_matched: bool,
    pub unavailable: bool,
}

impl AssembledContext {
    pub fn prompt_only() -> AssembledContext {
        AssembledContext {
            mode: RetrievalMode::PromptOnly,
            chunks: Vec::new(),
            candidate_urls: Vec::new(),
            url_matched: false,
            unavailable: false,
        }
    }

    /// Total characters of injected context.
    pub fn context_chars(&self) -> usize {
        self.chunks.iter().map(|c| c.text.chars().count()).sum()
    }
}

/// Borrowed id -> procedure map for resolving index hits.
pub struct ProcedureLookup<'a> {
    map: HashMap<&'a str, &'a ProcedureExample>,
}

impl<'a> ProcedureLookup<'a> {
    pub fn new(procedures: &'a [ProcedureExample]) -> ProcedureLookup<'a> {
        ProcedureLookup {
            map: procedures.iter().map(|p| (p.procedure_id.as_str(), p)).collect(),
        }
    }

    pub fn get(&self, id: &str) -> Option<&'a ProcedureExample> {
        self.map.get(id).copied()
    }
}

/// Top-k most similar procedures by cosine, excluding the query's own
/// procedure id. Neighbors on the same URL are permitted.
pub fn similar_procedures<'a>(
    query: &ProcedureExample,
    index: &FlatIndex,
    provider: &dyn EmbeddingProvider,
    lookup: &ProcedureLookup<'a>,
    k: usize,
) -> Result<Vec<&'a ProcedureExample>, RetrievalError> {
    let query_vec = provider.embed(&query.text)?;
    let exclude: BTreeSet<String> = BTreeSet::from([query.procedure_id.clone()]);
    let hits = index.top_k(&query_vec, k, &exclude)?;
    hits.into_iter()
        .map(|(key, _)| {
            lookup.get(&key).ok_or(RetrievalError::InconsistentIndex { key })
        })
        .collect()
}

/// Neighbor URLs in rank order, deduplicated preserving first occurrence,
/// capped at three.
pub fn collect_urls(neighbors: &[&ProcedureExample]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut urls = Vec::new();
    for n in neighbors {
        if seen.insert(n.url.as_str()) {
            urls.push(n.url.clone());
        }
        if urls.len() == 3 {
            break;
        }
    }
    urls
}

/// Everything `assemble_context` needs. `neighbor_index` is only consulted
/// in similar-procedures mode.
pub struct ContextAssembler<'a> {
    pub provider: &'a dyn EmbeddingProvider,
    pub cache: &'a PageCache,
    pub fetcher: &'a dyn PageFetcher,
    pub chunk_size: usize,
    pub chunk_overlap: usize,
    pub top_chunks: usize,
    pub top_neighbors: usize,
    pub neighbor_index: Option<(&'a FlatIndex, &'a ProcedureLookup<'a>)>,
}

impl<'a> ContextAssembler<'a> {
    pub fn new(
        provider: &'a dyn EmbeddingProvider,
        cache: &'a PageCache,
        fetcher: &'a dyn PageFetcher,
    ) -> ContextAssembler<'a> {
        ContextAssembler {
            provider,
            cache,
            fetcher,
            chunk_size: DEFAULT_CHUNK_SIZE,
            chunk_overlap: DEFAULT_CHUNK_OVERLAP,
            top_chunks: DEFAULT_TOP_CHUNKS,
            top_neighbors: DEFAULT_TOP_NEIGHBORS,
            neighbor_index: None,
        }
    }

    pub fn with_neighbors(
        mut self,
        index: &'a FlatIndex,
        lookup: &'a ProcedureLookup<'a>,
    ) -> ContextAssembler<'a> {
        self.neighbor_index = Some((index, lookup));
        self
    }

    /// Assemble the relevant context for one procedure under the given
    /// mode. Unfetchable candidate pages are skipped; if every candidate
    /// fails the context is flagged unavailable rather than failing the
    /// batch. The chunk store is rebuilt per procedure.
    pub fn assemble(
        &self,
        procedure: &ProcedureExample,
        mode: RetrievalMode,
    ) -> Result<AssembledContext, RetrievalError> {
        let candidate_urls = match mode {
            RetrievalMode::PromptOnly => return Ok(AssembledContext::prompt_only()),
            RetrievalMode::ExactUrl => vec![procedure.url.clone()],
            RetrievalMode::SimilarProcedures => {
                let (index, lookup) =
                    self.neighbor_index.ok_or(RetrievalError::MissingNeighborConfig)?;
                let neighbors =
                    similar_procedures(procedure, index, self.provider, lookup, self.top_neighbors)?;
                collect_urls(&neighbors)
            }
        };
        let url_matched = candidate_urls.iter().any(|u| *u == procedure.url);

        let mut pooled = Vec::new();
        let mut fetched_any = candidate_urls.is_empty();
        for url in &candidate_urls {
            match self.cache.fetch_page_text(url, self.fetcher) {
                Ok(page) => {
                    fetched_any = true;
                    pooled.extend(chunk_text(url, &page, self.chunk_size, self.chunk_overlap));
                }
                Err(_) => continue,
            }
        }
        if !fetched_any {
            return Ok(AssembledContext {
                mode,
                chunks: Vec::new(),
                candidate_urls,
                url_matched,
                unavailable: true,
            });
        }
        // ranking is global across the pooled chunks of all candidate urls
        let chunks = select_top_chunks(&procedure.text, pooled, self.provider, self.top_chunks)?;
        Ok(AssembledContext { mode, chunks, candidate_urls, url_matched, unavailable: false })
    }
}
