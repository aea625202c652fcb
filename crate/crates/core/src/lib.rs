//! Core library for mapping ATT&CK procedure descriptions to tactics.
//!
//! The pipeline has four stages, each usable on its own:
//!
//! 1. [`corpus`] — ingest an ATT&CK enterprise bundle, curate the labeled
//!    description set and the filtered procedure set.
//! 2. [`embedding`] + [`retrieval`] — build a flat cosine index over
//!    procedures and assemble per-procedure context under one of three
//!    retrieval modes.
//! 3. [`llm`] + [`extraction`] — render prompts, query a chat backend
//!    (remote, mock, or journal replay), and pull predicted tactics out of
//!    the free-text responses.
//! 4. [`eval`] — per-sample and per-tactic precision/recall/F1 with
//!    samples-average aggregation and matched/unmatched URL subgroup splits.
//!
//! [`baseline`] is a self-contained multi-label linear classifier trained on
//! the curated descriptions, reported through the same evaluation path.

pub mod baseline;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod extraction;
pub mod fixture;
pub mod jsonl;
pub mod llm;
mod net;
pub mod retrieval;
pub mod tactic;
pub mod text;

pub use tactic::Tactic;
