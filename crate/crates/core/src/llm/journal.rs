//! Append-only request/response journal and the replay backend built on it.
//!
//! One JSON record per line. The journal is the resume point for
//! interrupted runs and the input for network-free replays.

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::jsonl::{read_jsonl, JsonlError};

use super::{ChatBackend, LlmError, LlmRequest, LlmResponse};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JournalRecord {
    pub procedure_id: String,
    pub mode: String,
    pub variant: String,
    pub prompt_sha256: String,
    pub response_text: String,
    pub backend_fingerprint: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub requested_at: String,
    pub completed_at: String,
}

/// Append-only journal; writes are serialized and flushed per record so an
/// interrupted run loses at most the in-flight request.
pub struct Journal {
    path: PathBuf,
    file: Mutex<File>,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Journal, JsonlError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| JsonlError::Io {
                path: path.display().to_string(),
                source: e,
            })?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| {
            JsonlError::Io { path: path.display().to_string(), source: e }
        })?;
        Ok(Journal { path: path.to_path_buf(), file: Mutex::new(file) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, record: &JournalRecord) -> Result<(), JsonlError> {
        let mut line = serde_json::to_vec(record).map_err(|e| JsonlError::Record {
            path: self.path.display().to_string(),
            line: 0,
            source: e,
        })?;
        line.push(b'\n');
        let mut file = self.file.lock().expect("journal lock");
        file.write_all(&line).map_err(|e| JsonlError::Io {
            path: self.path.display().to_string(),
            source: e,
        })?;
        file.flush().map_err(|e| JsonlError::Io {
            path: self.path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Vec<JournalRecord>, JsonlError> {
        read_jsonl(path)
    }

    /// Keys of already-recorded requests, for idempotent resume.
    pub fn completed_keys(path: &Path) -> Result<HashSet<(String, String, String)>, JsonlError> {
        if !path.exists() {
            return Ok(HashSet::new());
        }
        Ok(Journal::load(path)?
            .into_iter()
            .map(|r| (r.procedure_id, r.mode, r.variant))
            .collect())
    }
}

/// Serves recorded responses by prompt digest; never touches the network.
pub struct ReplayBackend {
    by_digest: HashMap<String, JournalRecord>,
}

impl ReplayBackend {
    pub fn from_journal(path: &Path) -> Result<ReplayBackend, JsonlError> {
        let records = Journal::load(path)?;
        let by_digest = records.into_iter().map(|r| (r.prompt_sha256.clone(), r)).collect();
        Ok(ReplayBackend { by_digest })
    }

    pub fn len(&self) -> usize {
        self.by_digest.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_digest.is_empty()
    }
}

impl ChatBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, request: &LlmRequest) -> Result<LlmResponse, LlmError> {
        let digest = request.prompt_sha256();
        let record = self
            .by_digest
            .get(&digest)
            .ok_or(LlmError::ReplayMiss { prompt_sha256: digest })?;
        Ok(LlmResponse {
            text: record.response_text.clone(),
            backend_fingerprint: record.backend_fingerprint.clone(),
            latency: Duration::from_millis(record.latency_ms),
            input_tokens: record.input_tokens,
            output_tokens: record.output_tokens,
        })
    }
}
