//! Keyword extraction of predicted tactics from free-text model responses.
//!
//! A tactic is predicted iff its canonical name occurs as a case-insensitive
//! whole-phrase match (hyphens accepted for interior spaces), or one of its
//! registered shorthand aliases occurs as a whole word. Paraphrases are
//! deliberately not matched.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::llm::PromptVariant;
use crate::retrieval::RetrievalMode;
use crate::tactic::Tactic;
use crate::text::contains_phrase;

/// Extract the predicted tactic set from a response.
pub fn extract_tactics(response: &str) -> BTreeSet<Tactic> {
    Tactic::ALL
        .into_iter()
        .filter(|t| {
            contains_phrase(response, t.canonical_name(), true)
                || t.shorthand_aliases().iter().any(|alias| contains_phrase(response, alias, true))
        })
        .collect()
}

/// Which pipeline produced a prediction. The baseline classifier shares the
/// predictions schema with the LLM paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeTag {
    PromptOnly,
    ExactUrl,
    SimilarProcedures,
    Baseline,
}

impl From<RetrievalMode> for ModeTag {
    fn from(mode: RetrievalMode) -> ModeTag {
        match mode {
            RetrievalMode::PromptOnly => ModeTag::PromptOnly,
            RetrievalMode::ExactUrl => ModeTag::ExactUrl,
            RetrievalMode::SimilarProcedures => ModeTag::SimilarProcedures,
        }
    }
}

impl ModeTag {
    pub fn label(self) -> &'static str {
        match self {
            ModeTag::PromptOnly => "prompt-only",
            ModeTag::ExactUrl => "exact-url",
            ModeTag::SimilarProcedures => "similar-procedures",
            ModeTag::Baseline => "baseline",
        }
    }
}

/// One prediction for one procedure under one pipeline configuration; the
/// unit of `predictions.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub procedure_id: String,
    pub mode: ModeTag,
    pub prompt_variant: Option<PromptVariant>,
    pub predicted: BTreeSet<Tactic>,
    pub raw_response: String,
    pub url_matched: bool,
}
