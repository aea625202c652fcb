//! Prompt rendering and chat-completion backends.
//!
//! Three prompt variants are supported: the specific question without
//! context, the specific question over retrieved context, and the generic
//! open-ended question over retrieved context. Backends are pluggable:
//! remote OpenAI-compatible, the deterministic echo-tactics mock, and
//! journal replay.

mod journal;
mod mock;
mod remote;

pub use journal::{Journal, JournalRecord, ReplayBackend};
pub use mock::EchoTacticsMock;
pub use remote::{RemoteChatBackend, API_KEY_ENV, DEFAULT_BASE_URL};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::ProcedureExample;
use crate::retrieval::{AssembledContext, RetrievalMode};

/// Experiment-wide sampling contract: greedy decoding with a pinned seed.
pub const EXPERIMENT_TEMPERATURE: f64 = 0.0;
pub const EXPERIMENT_SEED: i64 = 1106;
pub const DEFAULT_MAX_RESPONSE_TOKENS: u32 = 512;
/// Pre-dispatch prompt budget in characters; three 8,000-character chunks
/// plus the question fit comfortably under a 16K-token window.
pub const DEFAULT_MAX_PROMPT_CHARS: usize = 64_000;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("{variant:?} requires retrieved context")]
    MissingContext { variant: PromptVariant },
    #[error("prompt of {chars} chars exceeds the {budget}-char budget")]
    OversizedPrompt { chars: usize, budget: usize },
    #[error("backend transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("no journal record for prompt digest {prompt_sha256}")]
    ReplayMiss { prompt_sha256: String },
    #[error("journal: {0}")]
    Journal(#[from] crate::jsonl::JsonlError),
    #[error("backend response unusable: {message}")]
    BadResponse { message: String },
    #[error("procedure {procedure_id}: {source}")]
    ForProcedure {
        procedure_id: String,
        #[source]
        source: Box<LlmError>,
    },
}

/// The three prompt templates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PromptVariant {
    SpecificNoContext,
    SpecificWithContext,
    GenericWithContext,
}

impl PromptVariant {
    pub fn label(self) -> &'static str {
        match self {
            PromptVariant::SpecificNoContext => "specific-no-context",
            PromptVariant::SpecificWithContext => "specific-with-context",
            PromptVariant::GenericWithContext => "generic-with-context",
        }
    }

    pub fn needs_context(self) -> bool {
        !matches!(self, PromptVariant::SpecificNoContext)
    }
}

const CONTEXT_PREAMBLE: &str =
    "You are a cybersecurity expert. Consider the relevant context provided below and answer the question.";
const SPECIFIC_QUESTION: &str =
    "what MITRE ATT&CK tactics will a cyber adversary achieve with this technique?";
const GENERIC_QUESTION: &str = "what will a cyber adversary achieve with this technique?";
const CERTAINTY_INSTRUCTION: &str =
    "Please only respond with the MITRE ATT&CK tactics you are certain about.";
/// Marker introducing the injected context inside rendered prompts; the
/// echo-tactics mock keys off it.
pub const CONTEXT_MARKER: &str = "Relevant Context: ";
const QUESTION_MARKER: &str = "\n\nQuestion: ";

fn joined_context(context: &AssembledContext) -> String {
    // chunks joined by blank lines, in rank order
    context.chunks.iter().map(|c| c.text.as_str()).collect::<Vec<_>>().join("\n\n")
}

/// Render one of the prompt templates for a procedure. Context is required
/// for the with-context variants; a prompt-only context does not qualify.
pub fn build_prompt(
    variant: PromptVariant,
    procedure: &ProcedureExample,
    context: Option<&AssembledContext>,
) -> Result<String, LlmError> {
    match variant {
        PromptVariant::SpecificNoContext => Ok(format!(
            "You are a cybersecurity expert.\n\nKnowing that <<{}>>, {SPECIFIC_QUESTION}\n\n{CERTAINTY_INSTRUCTION}",
            procedure.text
        )),
        PromptVariant::SpecificWithContext | PromptVariant::GenericWithContext => {
            let context = context
                .filter(|c| c.mode != RetrievalMode::PromptOnly)
                .ok_or(LlmError::MissingContext { variant })?;
            let question = match variant {
                PromptVariant::SpecificWithContext => SPECIFIC_QUESTION,
                _ => GENERIC_QUESTION,
            };
            let mut prompt = format!(
                "{CONTEXT_PREAMBLE}\n\n{CONTEXT_MARKER}{}{QUESTION_MARKER}Knowing that <<{}>>, {question}",
                joined_context(context),
                procedure.text,
            );
            if variant == PromptVariant::SpecificWithContext {
                prompt.push_str("\n\n");
                prompt.push_str(CERTAINTY_INSTRUCTION);
            }
            Ok(prompt)
        }
    }
}

/// One chat-completion request under the experiment contract.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmRequest {
    pub prompt_text: String,
    pub temperature: f64,
    pub seed: i64,
    pub model_id: String,
    pub max_response_tokens: u32,
}

impl LlmRequest {
    pub fn new(prompt_text: String, model_id: &str) -> LlmRequest {
        LlmRequest {
            prompt_text,
            temperature: EXPERIMENT_TEMPERATURE,
            seed: EXPERIMENT_SEED,
            model_id: model_id.to_string(),
            max_response_tokens: DEFAULT_MAX_RESPONSE_TOKENS,
        }
    }

    pub fn prompt_sha256(&self) -> String {
        hex::encode(Sha256::digest(self.prompt_text.as_bytes()))
    }
}

/// A backend's answer. Empty text means a recorded refusal, not an error.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmResponse {
    pub text: String,
    pub backend_fingerprint: String,
    pub latency: Duration,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// A chat-completion backend. Implementations are shareable across threads;
/// the caller bounds in-flight concurrency.
pub trait ChatBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError>;
}

/// Dispatch a request after the pre-dispatch size check.
pub fn query(
    backend: &dyn ChatBackend,
    request: &LlmRequest,
    max_prompt_chars: usize,
) -> Result<LlmResponse, LlmError> {
    let chars = request.prompt_text.chars().count();
    if chars > max_prompt_chars {
        return Err(LlmError::OversizedPrompt { chars, budget: max_prompt_chars });
    }
    backend.complete(request)
}

/// Identifies a request in the journal.
#[derive(Debug, Clone)]
pub struct RequestTag {
    pub procedure_id: String,
    pub mode: String,
    pub variant: String,
}

/// Backend plus journal: every dispatched request gets exactly one journal
/// record, and transport failures carry the procedure id.
pub struct LlmClient<'a> {
    backend: &'a dyn ChatBackend,
    journal: Option<&'a Journal>,
    max_prompt_chars: usize,
}

impl<'a> LlmClient<'a> {
    pub fn new(backend: &'a dyn ChatBackend, journal: Option<&'a Journal>) -> LlmClient<'a> {
        LlmClient { backend, journal, max_prompt_chars: DEFAULT_MAX_PROMPT_CHARS }
    }

    pub fn with_prompt_budget(mut self, max_prompt_chars: usize) -> LlmClient<'a> {
        self.max_prompt_chars = max_prompt_chars;
        self
    }

    pub fn query(&self, tag: &RequestTag, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let requested_at = chrono::Utc::now();
        let response = query(self.backend, request, self.max_prompt_chars).map_err(|e| {
            LlmError::ForProcedure { procedure_id: tag.procedure_id.clone(), source: Box::new(e) }
        })?;
        if let Some(journal) = self.journal {
            journal.append(&JournalRecord {
                procedure_id: tag.procedure_id.clone(),
                mode: tag.mode.clone(),
                variant: tag.variant.clone(),
                prompt_sha256: request.prompt_sha256(),
                response_text: response.text.clone(),
                backend_fingerprint: response.backend_fingerprint.clone(),
                input_tokens: response.input_tokens,
                output_tokens: response.output_tokens,
                latency_ms: response.latency.as_millis() as u64,
                requested_at: requested_at.to_rfc3339(),
                completed_at: chrono::Utc::now().to_rfc3339(),
            })?;
        }
        Ok(response)
    }
}
