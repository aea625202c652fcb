//! The echo-tactics mock backend: answers with the canonical names of every
//! tactic appearing (whole-word, case-insensitive) in the prompt's Relevant
//! Context block, or "Unknown." when there is none. Deterministic by
//! construction, which makes offline pipeline runs bit-reproducible.

use std::time::Duration;

use crate::tactic::Tactic;
use crate::text::contains_phrase;

use super::{ChatBackend, LlmError, LlmRequest, LlmResponse, CONTEXT_MARKER};

const FINGERPRINT: &str = "mock-echo-tactics-v1";

/// Extract the Relevant Context block from a rendered prompt, if any.
fn context_block(prompt: &str) -> Option<&str> {
    let start = prompt.find(CONTEXT_MARKER)? + CONTEXT_MARKER.len();
    let rest = &prompt[start..];
    let end = rest.rfind("\n\nQuestion: Knowing that <<").unwrap_or(rest.len());
    Some(&rest[..end])
}

#[derive(Debug, Default)]
pub struct EchoTacticsMock;

impl ChatBackend for EchoTacticsMock {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let context = context_block(&request.prompt_text).unwrap_or("");
        let found: Vec<&str> = Tactic::ALL
            .iter()
            .filter(|t| contains_phrase(context, t.canonical_name(), false))
            .map(|t| t.canonical_name())
            .collect();
        let text = if found.is_empty() {
            "Unknown.".to_string()
        } else {
            format!("The adversary achieves: {}", found.join(", "))
        };
        Ok(LlmResponse {
            input_tokens: (request.prompt_text.chars().count() / 4) as u64,
            output_tokens: (text.chars().count() / 4) as u64,
            text,
            backend_fingerprint: FINGERPRINT.to_string(),
            latency: Duration::ZERO,
        })
    }
}
