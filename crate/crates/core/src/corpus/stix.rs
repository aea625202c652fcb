//! Minimal view of an ATT&CK enterprise STIX bundle. Only the fields the
//! pipeline consumes are modeled; everything else is ignored.

use serde::Deserialize;

#[derive(Debug, Deserialize)]
pub struct RawBundle {
    #[serde(default)]
    pub objects: Vec<RawObject>,
}

#[derive(Debug, Deserialize)]
pub struct RawObject {
    #[serde(rename = "type")]
    pub object_type: String,
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub revoked: Option<bool>,
    #[serde(default)]
    pub x_mitre_deprecated: Option<bool>,
    #[serde(default)]
    pub x_mitre_is_subtechnique: Option<bool>,
    #[serde(default)]
    pub x_mitre_shortname: Option<String>,
    #[serde(default)]
    pub kill_chain_phases: Option<Vec<RawKillChainPhase>>,
    #[serde(default)]
    pub external_references: Option<Vec<RawExternalReference>>,
    #[serde(default)]
    pub relationship_type: Option<String>,
    #[serde(default)]
    pub source_ref: Option<String>,
    #[serde(default)]
    pub target_ref: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct RawKillChainPhase {
    #[serde(default)]
    pub kill_chain_name: String,
    #[serde(default)]
    pub phase_name: String,
}

#[derive(Debug, Deserialize)]
pub struct RawExternalReference {
    #[serde(default)]
    pub source_name: String,
    #[serde(default)]
    pub external_id: Option<String>,
    #[serde(default)]
    pub url: Option<String>,
}

impl RawObject {
    pub fn is_excluded(&self) -> bool {
        self.revoked.unwrap_or(false) || self.x_mitre_deprecated.unwrap_or(false)
    }

    /// The `mitre-attack` external reference carries the ATT&CK id and the
    /// public page URL.
    pub fn attack_reference(&self) -> Option<&RawExternalReference> {
        self.external_references
            .as_deref()
            .unwrap_or(&[])
            .iter()
            .find(|r| r.source_name == "mitre-attack")
    }
}
