//! The closed set of 14 enterprise ATT&CK tactics.

use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// One of the 14 enterprise ATT&CK tactics.
///
/// Variants are declared in kill-chain order; [`Tactic::TABLE_ORDER`] gives
/// the alphabetical ordering used by report tables. Serialized as the slug
/// (`"command-and-control"`), which is also the kill-chain phase name used
/// by the STIX bundle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Tactic {
    Reconnaissance,
    ResourceDevelopment,
    InitialAccess,
    Execution,
    Persistence,
    PrivilegeEscalation,
    DefenseEvasion,
    CredentialAccess,
    Discovery,
    LateralMovement,
    Collection,
    CommandAndControl,
    Exfiltration,
    Impact,
}

impl Tactic {
    /// All 14 tactics in kill-chain order.
    pub const ALL: [Tactic; 14] = [
        Tactic::Reconnaissance,
        Tactic::ResourceDevelopment,
        Tactic::InitialAccess,
        Tactic::Execution,
        Tactic::Persistence,
        Tactic::PrivilegeEscalation,
        Tactic::DefenseEvasion,
        Tactic::CredentialAccess,
        Tactic::Discovery,
        Tactic::LateralMovement,
        Tactic::Collection,
        Tactic::CommandAndControl,
        Tactic::Exfiltration,
        Tactic::Impact,
    ];

    /// Fixed row order for report tables (alphabetical by canonical name).
    pub const TABLE_ORDER: [Tactic; 14] = [
        Tactic::Collection,
        Tactic::CommandAndControl,
        Tactic::CredentialAccess,
        Tactic::DefenseEvasion,
        Tactic::Discovery,
        Tactic::Execution,
        Tactic::Exfiltration,
        Tactic::Impact,
        Tactic::InitialAccess,
        Tactic::LateralMovement,
        Tactic::Persistence,
        Tactic::PrivilegeEscalation,
        Tactic::Reconnaissance,
        Tactic::ResourceDevelopment,
    ];

    pub const COUNT: usize = 14;

    pub fn canonical_name(self) -> &'static str {
        match self {
            Tactic::Reconnaissance => "Reconnaissance",
            Tactic::ResourceDevelopment => "Resource Development",
            Tactic::InitialAccess => "Initial Access",
            Tactic::Execution => "Execution",
            Tactic::Persistence => "Persistence",
            Tactic::PrivilegeEscalation => "Privilege Escalation",
            Tactic::DefenseEvasion => "Defense Evasion",
            Tactic::CredentialAccess => "Credential Access",
            Tactic::Discovery => "Discovery",
            Tactic::LateralMovement => "Lateral Movement",
            Tactic::Collection => "Collection",
            Tactic::CommandAndControl => "Command and Control",
            Tactic::Exfiltration => "Exfiltration",
            Tactic::Impact => "Impact",
        }
    }

    /// Registered shorthand aliases recognized during response extraction.
    /// Exactly one ships: "C2" for Command and Control.
    pub fn shorthand_aliases(self) -> &'static [&'static str] {
        match self {
            Tactic::CommandAndControl => &["C2"],
            _ => &[],
        }
    }

    /// ATT&CK tactic id, e.g. `TA0005` for Defense Evasion.
    pub fn attack_id(self) -> &'static str {
        match self {
            Tactic::Reconnaissance => "TA0043",
            Tactic::ResourceDevelopment => "TA0042",
            Tactic::InitialAccess => "TA0001",
            Tactic::Execution => "TA0002",
            Tactic::Persistence => "TA0003",
            Tactic::PrivilegeEscalation => "TA0004",
            Tactic::DefenseEvasion => "TA0005",
            Tactic::CredentialAccess => "TA0006",
            Tactic::Discovery => "TA0007",
            Tactic::LateralMovement => "TA0008",
            Tactic::Collection => "TA0009",
            Tactic::CommandAndControl => "TA0011",
            Tactic::Exfiltration => "TA0010",
            Tactic::Impact => "TA0040",
        }
    }

    /// Lowercase hyphenated identifier, a pure function of the canonical
    /// name (lowercase, spaces to hyphens). Coincides with the kill-chain
    /// phase name in the STIX bundle.
    pub fn slug(self) -> String {
        self.canonical_name().to_lowercase().replace(' ', "-")
    }

    /// Resolve a slug / kill-chain phase name ("privilege-escalation").
    pub fn from_slug(slug: &str) -> Option<Tactic> {
        Tactic::ALL.into_iter().find(|t| t.slug() == slug)
    }

    /// Resolve a canonical name, case-insensitively.
    pub fn from_canonical_name(name: &str) -> Option<Tactic> {
        Tactic::ALL
            .into_iter()
            .find(|t| t.canonical_name().eq_ignore_ascii_case(name))
    }

    /// Position of this tactic within [`Tactic::ALL`].
    pub fn index(self) -> usize {
        Tactic::ALL.iter().position(|t| *t == self).expect("member of ALL")
    }
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.canonical_name())
    }
}

impl Serialize for Tactic {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.slug())
    }
}

impl<'de> Deserialize<'de> for Tactic {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Tactic::from_slug(&s).ok_or_else(|| D::Error::custom(format!("unknown tactic slug: {s}")))
    }
}
