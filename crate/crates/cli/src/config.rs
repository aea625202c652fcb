//! Run configuration: optional TOML file merged under CLI flags, echoed as
//! JSON next to every run's outputs so reports are self-describing.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Every knob a run can set. Flags override file values; unset fields fall
/// back to defaults at the point of use.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub snapshot: Option<PathBuf>,
    pub version_tag: Option<String>,
    pub cache_dir: Option<PathBuf>,
    /// "deterministic" or "remote:<model>:<dimension>".
    pub embedding_provider: Option<String>,
    pub mode: Option<String>,
    pub variant: Option<String>,
    /// "mock", "replay", or a remote chat model id.
    pub backend: Option<String>,
    pub replay_journal: Option<PathBuf>,
    pub budget: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub live_fetch: Option<bool>,
    pub api_base_url: Option<String>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("bad config {}", path.display()))
    }

    /// Overlay `other` (CLI flags) on top of `self` (file values).
    pub fn overlaid(mut self, other: RunConfig) -> RunConfig {
        macro_rules! take {
            ($field:ident) => {
                if other.$field.is_some() {
                    self.$field = other.$field;
                }
            };
        }
        take!(snapshot);
        take!(version_tag);
        take!(cache_dir);
        take!(embedding_provider);
        take!(mode);
        take!(variant);
        take!(backend);
        take!(replay_journal);
        take!(budget);
        take!(out_dir);
        take!(seed);
        take!(live_fetch);
        take!(api_base_url);
        self
    }

    /// Replay runs must stay off the network entirely.
    pub fn validate(&self) -> Result<()> {
        let replaying = self.backend.as_deref() == Some("replay");
        if replaying {
            if self.live_fetch == Some(true) {
                bail!("replay mode forbids --live-fetch");
            }
            if matches!(&self.embedding_provider, Some(p) if p.starts_with("remote")) {
                bail!("replay mode forbids a remote embedding provider");
            }
        }
        Ok(())
    }

    /// Write the effective configuration next to the run's outputs.
    pub fn echo(&self, out_dir: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(self)?;
        tacmap_core::jsonl::atomic_write(&out_dir.join("run_config.json"), &bytes)
            .context("writing config echo")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = RunConfig {
            mode: Some("prompt-only".into()),
            budget: Some(2),
            ..RunConfig::default()
        };
        let flags = RunConfig { mode: Some("exact-url".into()), ..RunConfig::default() };
        let merged = file.overlaid(flags);
        assert_eq!(merged.mode.as_deref(), Some("exact-url"));
        assert_eq!(merged.budget, Some(2));
    }

    #[test]
    fn replay_forbids_network() {
        let config = RunConfig {
            backend: Some("replay".into()),
            live_fetch: Some(true),
            ..RunConfig::default()
        };
        assert!(config.validate().is_err());
        let ok = RunConfig { backend: Some("replay".into()), ..RunConfig::default() };
        assert!(ok.validate().is_ok());
    }

    #[test]
    fn toml_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "mode = \"exact-url\"\nbudget = 4\n").unwrap();
        let config = RunConfig::load(&path).unwrap();
        assert_eq!(config.mode.as_deref(), Some("exact-url"));
        assert_eq!(config.budget, Some(4));
        assert!(RunConfig::load(&dir.path().join("missing.toml")).is_err());
    }
}
