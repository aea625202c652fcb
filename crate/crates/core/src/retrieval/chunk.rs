//! Sliding-window character chunking and cosine chunk ranking.

use crate::embedding::{cosine, EmbedError, EmbeddingProvider};

use super::ContextChunk;

/// Split page text into chunks of at most `size` characters starting at
/// offsets 0, size-overlap, 2(size-overlap), ... A trailing window is
/// emitted only when it covers characters the previous chunk did not.
/// Offsets and lengths count Unicode scalar values, not bytes.
pub fn chunk_text(source_url: &str, page: &str, size: usize, overlap: usize) -> Vec<ContextChunk> {
    assert!(size > 0 && overlap < size, "chunking requires 0 <= overlap < size");
    let chars: Vec<char> = page.chars().collect();
    let step = size - overlap;
    let mut chunks = Vec::new();
    let mut start = 0usize;
    let mut covered_to = 0usize;
    while start < chars.len() {
        let end = (start + size).min(chars.len());
        if end <= covered_to {
            break;
        }
        chunks.push(ContextChunk {
            source_url: source_url.to_string(),
            start_offset: start,
            text: chars[start..end].iter().collect(),
            rank_score: 0.0,
        });
        covered_to = end;
        if end == chars.len() {
            break;
        }
        start += step;
    }
    chunks
}

/// Rank chunks by cosine similarity between the question and each chunk,
/// descending, ties broken by (source_url, start_offset); return the top
/// `k` with their scores filled in. Fewer than `k` chunks are all returned.
pub fn select_top_chunks(
    question: &str,
    chunks: Vec<ContextChunk>,
    provider: &dyn EmbeddingProvider,
    k: usize,
) -> Result<Vec<ContextChunk>, EmbedError> {
    let question_vec = provider.embed(question)?;
    let mut scored: Vec<ContextChunk> = chunks
        .into_iter()
        .map(|mut chunk| {
            let chunk_vec = provider.embed(&chunk.text)?;
            chunk.rank_score = cosine(&question_vec, &chunk_vec);
            Ok(chunk)
        })
        .collect::<Result<_, EmbedError>>()?;
    scored.sort_by(|a, b| {
        b.rank_score
            .partial_cmp(&a.rank_score)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.source_url.cmp(&b.source_url))
            .then_with(|| a.start_offset.cmp(&b.start_offset))
    });
    scored.truncate(k);
    Ok(scored)
}
