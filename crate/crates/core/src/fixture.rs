//! Deterministic synthetic fixtures: a miniature enterprise bundle in the
//! snapshot schema plus matching technique pages whose bodies list their
//! tactic names. Tests and the demo pipeline run against these instead of a
//! full ATT&CK release.

use std::collections::BTreeSet;
use std::path::Path;

use serde_json::{json, Value};

use crate::retrieval::PageCache;
use crate::tactic::Tactic;

#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub n_procedures: usize,
    pub base_url: String,
    /// Add one extra sentence that names a tactic verbatim; the curation
    /// filter must drop it.
    pub include_tactic_naming_sentence: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            n_procedures: 50,
            base_url: "https://fixture.test".to_string(),
            include_tactic_naming_sentence: false,
        }
    }
}

/// One synthetic technique, its gold tactics, and the tactic names its page
/// lists (gold plus co-listed extras).
#[derive(Debug, Clone)]
pub struct FixtureTechnique {
    pub attack_id: String,
    pub name: String,
    pub url: String,
    pub is_subtechnique: bool,
    pub gold: BTreeSet<Tactic>,
    pub listed: BTreeSet<Tactic>,
    pub verb: &'static str,
    pub object: &'static str,
}

#[derive(Debug, Clone)]
pub struct FixtureProcedure {
    pub relationship_id: String,
    pub technique_index: usize,
    pub actor: String,
    pub sentence: String,
}

#[derive(Debug, Clone)]
pub struct BuiltFixture {
    pub bundle_json: Vec<u8>,
    pub techniques: Vec<FixtureTechnique>,
    pub procedures: Vec<FixtureProcedure>,
    /// (url, page text) pairs for the page cache.
    pub pages: Vec<(String, String)>,
}

fn set(tactics: &[Tactic]) -> BTreeSet<Tactic> {
    tactics.iter().copied().collect()
}

// (attack id, name, is_sub, gold, extra co-listed tactics, verb, object).
// Vocabulary is chosen so no sentence or page phrase collides with a tactic
// name as a whole word.
#[allow(clippy::type_complexity)]
fn technique_table() -> Vec<(&'static str, &'static str, bool, Vec<Tactic>, Vec<Tactic>, &'static str, &'static str)> {
    use Tactic::*;
    vec![
        ("T9001", "Startup Folder Hijack", false,
            vec![Persistence, PrivilegeEscalation, DefenseEvasion], vec![],
            "planted shortcuts in", "the startup folder"),
        ("T9001.001", "Logon Script Abuse", true,
            vec![Persistence, PrivilegeEscalation, DefenseEvasion], vec![Execution],
            "registered rogue", "logon scripts"),
        ("T9002", "Memory Scraping", false,
            vec![CredentialAccess], vec![DefenseEvasion],
            "scraped secrets from", "process memory"),
        ("T9002.001", "Keychain Theft", true,
            vec![CredentialAccess], vec![Discovery],
            "siphoned entries from", "the system keychain"),
        ("T9003", "Host Survey", false,
            vec![Discovery], vec![],
            "enumerated", "running services and shares"),
        ("T9004", "Script Proxy Launch", false,
            vec![Execution], vec![DefenseEvasion, Persistence],
            "launched payloads through", "signed script hosts"),
        ("T9005", "Archive Staging", false,
            vec![Collection, Exfiltration], vec![],
            "staged archives of", "harvested documents"),
        ("T9006", "Beacon Channel", false,
            vec![CommandAndControl], vec![Exfiltration],
            "tunneled beacon traffic over", "cloud storage endpoints"),
        ("T9007", "Poisoned Installer", false,
            vec![InitialAccess], vec![],
            "shipped trojanized", "installer packages"),
        ("T9008", "Remote Service Ride", false,
            vec![LateralMovement], vec![CredentialAccess],
            "rode admin shares to", "neighboring hosts"),
        ("T9009", "Disk Wipe", false,
            vec![Impact], vec![],
            "overwrote", "boot records"),
        ("T9010", "Infrastructure Staging", false,
            vec![Reconnaissance, ResourceDevelopment], vec![],
            "registered look-alike", "domains for later use"),
    ]
}

// How many procedure sentences each technique receives out of the default
// 50. Singletons guarantee some unmatched-URL retrievals.
const PROCEDURE_WEIGHTS: [usize; 12] = [8, 1, 7, 1, 6, 6, 5, 5, 4, 4, 1, 2];

const ACTORS: [(&str, &str); 6] = [
    ("intrusion-set", "Group Alpha"),
    ("intrusion-set", "Group Beta"),
    ("malware", "Sablewing"),
    ("malware", "Mossvine"),
    ("tool", "GrayKit"),
    ("campaign", "Operation Quartz"),
];

const SUFFIXES: [&str; 5] = [
    "across the estate",
    "on the beachhead host",
    "during the second stage",
    "over several weeks",
    "without touching disk",
];

fn page_text(technique: &FixtureTechnique) -> String {
    let listed: Vec<&str> = technique.listed.iter().map(|t| t.canonical_name()).collect();
    format!(
        "{id}: {name}\nTactics: {tactics}\nSummary: Adversaries have {verb} {object} to further \
         their operation.\nDetection: review audit logs and alert on anomalous use of {object}.\n",
        id = technique.attack_id,
        name = technique.name,
        tactics = listed.join(", "),
        verb = technique.verb,
        object = technique.object,
    )
}

fn tactic_objects(base_url: &str) -> Vec<Value> {
    Tactic::ALL
        .iter()
        .map(|t| {
            json!({
                "type": "x-mitre-tactic",
                "id": format!("x-mitre-tactic--fixture-{}", t.slug()),
                "name": t.canonical_name(),
                "description": format!("The adversary is working toward goal group {}.", t.attack_id()),
                "x_mitre_shortname": t.slug(),
                "external_references": [{
                    "source_name": "mitre-attack",
                    "external_id": t.attack_id(),
                    "url": format!("{base_url}/tactics/{}/", t.attack_id()),
                }]
            })
        })
        .collect()
}

/// Bundle holding only the 14 tactic objects.
pub fn tactics_only_bundle() -> Vec<u8> {
    let bundle = json!({
        "type": "bundle",
        "id": "bundle--fixture-tactics-only",
        "objects": tactic_objects("https://fixture.test"),
    });
    serde_json::to_vec(&bundle).expect("fixture bundle serializes")
}

/// Build the synthetic corpus: bundle JSON, technique pages, and the
/// expectation data (gold and listed tactic sets per technique) that
/// acceptance checks compute analytic scores from.
pub fn build_fixture(spec: &FixtureSpec) -> BuiltFixture {
    let table = technique_table();
    let techniques: Vec<FixtureTechnique> = table
        .iter()
        .map(|(id, name, is_sub, gold, extras, verb, object)| {
            let url = if *is_sub {
                let (parent, sub) = id.split_once('.').expect("sub-technique id");
                format!("{}/techniques/{}/{}/", spec.base_url, parent, sub)
            } else {
                format!("{}/techniques/{}/", spec.base_url, id)
            };
            let mut listed = set(gold);
            listed.extend(extras.iter().copied());
            FixtureTechnique {
                attack_id: id.to_string(),
                name: name.to_string(),
                url,
                is_subtechnique: *is_sub,
                gold: set(gold),
                listed,
                verb,
                object,
            }
        })
        .collect();

    let mut objects = tactic_objects(&spec.base_url);
    for t in &techniques {
        objects.push(json!({
            "type": "attack-pattern",
            "id": format!("attack-pattern--fixture-{}", t.attack_id.to_lowercase().replace('.', "-")),
            "name": t.name,
            "description": format!(
                "Adversaries may have {} {} to further their operation. (Citation: Fixture Report)",
                t.verb, t.object
            ),
            "x_mitre_is_subtechnique": t.is_subtechnique,
            "kill_chain_phases": t.gold.iter().map(|g| json!({
                "kill_chain_name": "mitre-attack",
                "phase_name": g.slug(),
            })).collect::<Vec<_>>(),
            "external_references": [{
                "source_name": "mitre-attack",
                "external_id": t.attack_id,
                "url": t.url,
            }]
        }));
    }
    for (kind, name) in ACTORS {
        objects.push(json!({
            "type": kind,
            "id": format!("{kind}--fixture-{}", name.to_lowercase().replace(' ', "-")),
            "name": name,
        }));
    }

    // Distribute sentences over techniques by weight, cycling when the
    // requested count differs from the default 50.
    let mut assignment: Vec<usize> = Vec::new();
    for (technique_index, weight) in PROCEDURE_WEIGHTS.iter().enumerate() {
        assignment.extend(std::iter::repeat(technique_index).take(*weight));
    }
    let mut procedures = Vec::with_capacity(spec.n_procedures);
    for i in 0..spec.n_procedures {
        let technique_index = assignment[i % assignment.len()];
        let technique = &techniques[technique_index];
        let (_, actor) = ACTORS[i % ACTORS.len()];
        let sentence = format!(
            "{} has {} {} {}.",
            actor,
            technique.verb,
            technique.object,
            SUFFIXES[i % SUFFIXES.len()]
        );
        let relationship_id = format!("relationship--fixture-{i:04}");
        objects.push(json!({
            "type": "relationship",
            "id": relationship_id,
            "relationship_type": "uses",
            "source_ref": format!(
                "{}--fixture-{}",
                ACTORS[i % ACTORS.len()].0,
                actor.to_lowercase().replace(' ', "-")
            ),
            "target_ref": format!(
                "attack-pattern--fixture-{}",
                technique.attack_id.to_lowercase().replace('.', "-")
            ),
            "description": format!("{sentence} (Citation: Fixture Intel {i})"),
        }));
        procedures.push(FixtureProcedure {
            relationship_id,
            technique_index,
            actor: actor.to_string(),
            sentence,
        });
    }

    if spec.include_tactic_naming_sentence {
        objects.push(json!({
            "type": "relationship",
            "id": "relationship--fixture-poisoned",
            "relationship_type": "uses",
            "source_ref": "intrusion-set--fixture-group-alpha",
            "target_ref": "attack-pattern--fixture-t9001",
            "description": "Group Alpha relied on Defense Evasion tricks to stay hidden.",
        }));
    }

    let bundle = json!({
        "type": "bundle",
        "id": "bundle--fixture-enterprise",
        "objects": objects,
    });

    let pages = techniques.iter().map(|t| (t.url.clone(), page_text(t))).collect();

    BuiltFixture {
        bundle_json: serde_json::to_vec_pretty(&bundle).expect("fixture bundle serializes"),
        techniques,
        procedures,
        pages,
    }
}

/// Write the fixture to disk: `bundle.json` plus a prefilled page cache
/// under `pages/`.
pub fn write_fixture(fixture: &BuiltFixture, dir: &Path) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("bundle.json"), &fixture.bundle_json)?;
    let cache = PageCache::open(&dir.join("pages")).map_err(std::io::Error::other)?;
    for (url, text) in &fixture.pages {
        cache.put(url, text).map_err(std::io::Error::other)?;
    }
    Ok(())
}
