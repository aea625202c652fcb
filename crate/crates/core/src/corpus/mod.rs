//! ATT&CK corpus ingestion and curation.
//!
//! [`parse_snapshot`] ingests the machine-readable enterprise bundle for a
//! pinned release; [`curate_finetune_set`] and [`curate_procedures`] derive
//! the two evaluation corpora from it. Revoked and deprecated objects never
//! enter the corpus, and procedure sentences that name a tactic outright are
//! filtered to keep the prediction task honest.

mod stix;

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tactic::Tactic;
use crate::text::{contains_phrase, normalize_sentence};

use stix::{RawBundle, RawObject};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed bundle: {0}")]
    Json(#[from] serde_json::Error),
    #[error("bundle contains no objects")]
    EmptyBundle,
    #[error("cannot read snapshot {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("object {object_id}: {reason}")]
    InvalidObject { object_id: String, reason: String },
    #[error("object {object_id}: unknown kill-chain phase {kill_chain}/{phase}")]
    UnknownKillChainPhase { object_id: String, kill_chain: String, phase: String },
    #[error("technique {attack_id} has no tactic mappings")]
    NoTacticMapping { attack_id: String },
}

/// Whether a labeled description came from a tactic, technique, or
/// sub-technique page.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DescriptionKind {
    Tactic,
    Technique,
    Subtechnique,
}

/// One curated ATT&CK description with its gold tactic labels; the unit of
/// the fine-tuning corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledDescription {
    pub attack_id: String,
    pub name: String,
    pub kind: DescriptionKind,
    pub description_text: String,
    pub tactic_labels: BTreeSet<Tactic>,
    pub url: String,
}

/// One attack-procedure sentence with its gold tactic set and source URL;
/// the unit of evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcedureExample {
    pub procedure_id: String,
    pub actor_name: String,
    pub text: String,
    pub technique_attack_id: String,
    pub gold_tactics: BTreeSet<Tactic>,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_descriptions: u64,
    pub n_procedures: u64,
    pub support_total: u64,
    pub per_tactic_support: BTreeMap<Tactic, u64>,
}

#[derive(Debug, Clone)]
struct TacticEntry {
    tactic: Tactic,
    attack_id: String,
    name: String,
    description: String,
    url: String,
}

#[derive(Debug, Clone)]
struct TechniqueEntry {
    stix_id: String,
    attack_id: String,
    name: String,
    kind: DescriptionKind,
    description: String,
    tactics: BTreeSet<Tactic>,
    url: String,
}

#[derive(Debug, Clone)]
struct RawProcedure {
    relationship_id: String,
    actor_name: String,
    sentence: String,
    technique_stix_id: String,
}

/// Parsed, immutable view of one ATT&CK snapshot. Curations and statistics
/// are derived from this without re-reading the bundle.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub version_tag: String,
    tactics: Vec<TacticEntry>,
    techniques: Vec<TechniqueEntry>,
    procedures: Vec<RawProcedure>,
}

impl Corpus {
    pub fn n_tactics(&self) -> usize {
        self.tactics.len()
    }

    pub fn n_techniques(&self) -> usize {
        self.techniques.len()
    }

    pub fn n_procedure_sentences(&self) -> usize {
        self.procedures.len()
    }
}

fn require_name(obj: &RawObject) -> Result<String, CorpusError> {
    obj.name.clone().ok_or_else(|| CorpusError::InvalidObject {
        object_id: obj.id.clone(),
        reason: "missing name".into(),
    })
}

/// Ingest an ATT&CK enterprise bundle (raw JSON bytes, optionally gzipped by
/// the caller) into a [`Corpus`]. Tactics, techniques, and sub-techniques
/// are collected with their tactic mappings via kill-chain phases; every
/// `uses` relationship sentence from a group, software, or campaign to a
/// technique becomes a candidate procedure. Revoked and deprecated objects
/// are excluded, as are procedures that point at them.
pub fn parse_snapshot(raw_bundle: &[u8], version_tag: &str) -> Result<Corpus, CorpusError> {
    let bundle: RawBundle = serde_json::from_slice(raw_bundle)?;
    if bundle.objects.is_empty() {
        return Err(CorpusError::EmptyBundle);
    }

    let mut tactics: Vec<TacticEntry> = Vec::new();
    let mut techniques: Vec<TechniqueEntry> = Vec::new();
    // source objects that can carry procedure sentences
    let mut actor_names: HashMap<String, String> = HashMap::new();
    let mut relationships: Vec<&RawObject> = Vec::new();

    for obj in &bundle.objects {
        if obj.is_excluded() {
            continue;
        }
        match obj.object_type.as_str() {
            "x-mitre-tactic" => {
                let shortname = obj.x_mitre_shortname.clone().ok_or_else(|| {
                    CorpusError::InvalidObject {
                        object_id: obj.id.clone(),
                        reason: "tactic missing x_mitre_shortname".into(),
                    }
                })?;
                let tactic =
                    Tactic::from_slug(&shortname).ok_or_else(|| CorpusError::InvalidObject {
                        object_id: obj.id.clone(),
                        reason: format!("unknown tactic shortname {shortname:?}"),
                    })?;
                if tactics.iter().any(|t| t.tactic == tactic) {
                    return Err(CorpusError::InvalidObject {
                        object_id: obj.id.clone(),
                        reason: format!("duplicate tactic {shortname:?}"),
                    });
                }
                let reference = obj.attack_reference().ok_or_else(|| CorpusError::InvalidObject {
                    object_id: obj.id.clone(),
                    reason: "missing mitre-attack external reference".into(),
                })?;
                tactics.push(TacticEntry {
                    tactic,
                    attack_id: reference.external_id.clone().unwrap_or_default(),
                    name: require_name(obj)?,
                    description: obj.description.clone().unwrap_or_default(),
                    url: reference.url.clone().unwrap_or_default(),
                });
            }
            "attack-pattern" => {
                let reference = obj.attack_reference().ok_or_else(|| CorpusError::InvalidObject {
                    object_id: obj.id.clone(),
                    reason: "missing mitre-attack external reference".into(),
                })?;
                let attack_id = reference.external_id.clone().unwrap_or_default();
                let mut mapped = BTreeSet::new();
                for phase in obj.kill_chain_phases.as_deref().unwrap_or(&[]) {
                    if phase.kill_chain_name != "mitre-attack" {
                        return Err(CorpusError::UnknownKillChainPhase {
                            object_id: obj.id.clone(),
                            kill_chain: phase.kill_chain_name.clone(),
                            phase: phase.phase_name.clone(),
                        });
                    }
                    let tactic = Tactic::from_slug(&phase.phase_name).ok_or_else(|| {
                        CorpusError::UnknownKillChainPhase {
                            object_id: obj.id.clone(),
                            kill_chain: phase.kill_chain_name.clone(),
                            phase: phase.phase_name.clone(),
                        }
                    })?;
                    mapped.insert(tactic);
                }
                if mapped.is_empty() {
                    return Err(CorpusError::NoTacticMapping { attack_id });
                }
                let kind = if obj.x_mitre_is_subtechnique.unwrap_or(false) {
                    DescriptionKind::Subtechnique
                } else {
                    DescriptionKind::Technique
                };
                techniques.push(TechniqueEntry {
                    stix_id: obj.id.clone(),
                    attack_id,
                    name: require_name(obj)?,
                    kind,
                    description: obj.description.clone().unwrap_or_default(),
                    tactics: mapped,
                    url: reference.url.clone().unwrap_or_default(),
                });
            }
            "intrusion-set" | "malware" | "tool" | "campaign" => {
                actor_names.insert(obj.id.clone(), require_name(obj)?);
            }
            "relationship" => {
                if obj.relationship_type.as_deref() == Some("uses") {
                    relationships.push(obj);
                }
            }
            _ => {}
        }
    }

    let technique_ids: BTreeSet<&str> = techniques.iter().map(|t| t.stix_id.as_str()).collect();
    let mut procedures = Vec::new();
    for rel in relationships {
        let (Some(source), Some(target)) = (rel.source_ref.as_deref(), rel.target_ref.as_deref())
        else {
            continue;
        };
        let Some(description) = rel.description.as_deref() else {
            continue;
        };
        if description.trim().is_empty() {
            continue;
        }
        // Only sentences about group/software/campaign use of a live
        // technique are procedure examples.
        let Some(actor_name) = actor_names.get(source) else {
            continue;
        };
        if !technique_ids.contains(target) {
            continue;
        }
        procedures.push(RawProcedure {
            relationship_id: rel.id.clone(),
            actor_name: actor_name.clone(),
            sentence: description.to_string(),
            technique_stix_id: target.to_string(),
        });
    }

    Ok(Corpus { version_tag: version_tag.to_string(), tactics, techniques, procedures })
}

/// Read snapshot bytes from disk, transparently gunzipping when the file
/// carries the gzip magic.
pub fn read_snapshot_file(path: &std::path::Path) -> Result<Vec<u8>, CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.display().to_string(), source };
    let bytes = std::fs::read(path).map_err(io_err)?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        use std::io::Read;
        let mut decoder = flate2::read::GzDecoder::new(bytes.as_slice());
        let mut out = Vec::new();
        decoder.read_to_end(&mut out).map_err(io_err)?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

/// True iff any of the 14 canonical tactic names occurs in `text` as a
/// case-insensitive whole-phrase match. Shorthand aliases are not consulted.
pub fn contains_tactic_name(text: &str) -> bool {
    Tactic::ALL.iter().any(|t| contains_phrase(text, t.canonical_name(), false))
}

/// Curate the labeled description set: one entry per non-revoked tactic,
/// technique, and sub-technique, ordered by ATT&CK id. Multi-tactic
/// techniques carry all their tactics.
pub fn curate_finetune_set(corpus: &Corpus) -> Result<Vec<LabeledDescription>, CorpusError> {
    let mut out = Vec::with_capacity(corpus.tactics.len() + corpus.techniques.len());
    for t in &corpus.tactics {
        out.push(LabeledDescription {
            attack_id: t.attack_id.clone(),
            name: t.name.clone(),
            kind: DescriptionKind::Tactic,
            description_text: normalize_sentence(&t.description),
            tactic_labels: BTreeSet::from([t.tactic]),
            url: t.url.clone(),
        });
    }
    for t in &corpus.techniques {
        if t.tactics.is_empty() {
            return Err(CorpusError::NoTacticMapping { attack_id: t.attack_id.clone() });
        }
        out.push(LabeledDescription {
            attack_id: t.attack_id.clone(),
            name: t.name.clone(),
            kind: t.kind,
            description_text: normalize_sentence(&t.description),
            tactic_labels: t.tactics.clone(),
            url: t.url.clone(),
        });
    }
    out.sort_by(|a, b| a.attack_id.cmp(&b.attack_id));
    Ok(out)
}

fn procedure_id_for(relationship_id: &str) -> String {
    let digest = Sha256::digest(relationship_id.as_bytes());
    hex::encode(&digest[..8])
}

/// Curate the procedure evaluation set: every procedure sentence that does
/// not name a tactic outright, with gold tactics inherited from the target
/// technique. Ordered by procedure id.
pub fn curate_procedures(corpus: &Corpus) -> Result<Vec<ProcedureExample>, CorpusError> {
    let by_stix_id: HashMap<&str, &TechniqueEntry> =
        corpus.techniques.iter().map(|t| (t.stix_id.as_str(), t)).collect();
    let mut out = Vec::new();
    for p in &corpus.procedures {
        let technique = by_stix_id.get(p.technique_stix_id.as_str()).ok_or_else(|| {
            CorpusError::InvalidObject {
                object_id: p.relationship_id.clone(),
                reason: format!("dangling technique reference {}", p.technique_stix_id),
            }
        })?;
        let text = normalize_sentence(&p.sentence);
        if text.is_empty() || contains_tactic_name(&text) {
            continue;
        }
        out.push(ProcedureExample {
            procedure_id: procedure_id_for(&p.relationship_id),
            actor_name: p.actor_name.clone(),
            text,
            technique_attack_id: technique.attack_id.clone(),
            gold_tactics: technique.tactics.clone(),
            url: technique.url.clone(),
        });
    }
    out.sort_by(|a, b| {
        a.procedure_id.cmp(&b.procedure_id).then_with(|| a.text.cmp(&b.text))
    });
    Ok(out)
}

/// Pairwise tactic overlap counts over procedure gold sets, in
/// [`Tactic::ALL`] order. Cell (i, j) with i != j counts procedures whose
/// gold set contains both tactics; the diagonal counts procedures containing
/// the tactic at all.
pub fn tactic_overlap_matrix(procedures: &[ProcedureExample]) -> [[u64; 14]; 14] {
    let mut matrix = [[0u64; 14]; 14];
    for p in procedures {
        let indices: Vec<usize> = p.gold_tactics.iter().map(|t| t.index()).collect();
        for &i in &indices {
            for &j in &indices {
                matrix[i][j] += 1;
            }
        }
    }
    matrix
}

/// Render the overlap matrix as CSV: a header row of tactic slugs, then 14
/// rows of 14 counts.
pub fn render_overlap_csv(matrix: &[[u64; 14]; 14]) -> String {
    let mut out = String::new();
    let header: Vec<String> = Tactic::ALL.iter().map(|t| t.slug()).collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in matrix {
        let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Corpus-level counts used for report cross-checks.
pub fn compute_stats(
    descriptions: &[LabeledDescription],
    procedures: &[ProcedureExample],
) -> CorpusStats {
    let mut per_tactic_support: BTreeMap<Tactic, u64> =
        Tactic::ALL.iter().map(|t| (*t, 0)).collect();
    let mut support_total = 0u64;
    for p in procedures {
        for t in &p.gold_tactics {
            *per_tactic_support.get_mut(t).expect("all tactics present") += 1;
            support_total += 1;
        }
    }
    CorpusStats {
        n_descriptions: descriptions.len() as u64,
        n_procedures: procedures.len() as u64,
        support_total,
        per_tactic_support,
    }
}
