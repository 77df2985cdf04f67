//! Bundled fixtures: the cyber-inability case, its full indicator
//! catalog (one document per claim group), four replayable change
//! scenarios with declared trigger timestamps, recovery scripts, the
//! gate configuration and a feed-mapping example.
//!
//! Everything is embedded so simulation and the acceptance suite need no
//! network or filesystem.

use serde::Deserialize;

use crate::argument::{self, SafetyCase};
use crate::engine::{self, CheckOutcome, RecoveryAction};
use crate::ingest::{self, Observation, ObservationStore};
use crate::spi::SpiCatalog;
use crate::Timestamp;

pub const CASE_DOC: &str = include_str!("../fixtures/case/cyber-inability.json");

/// Catalog documents, one per claim group.
pub const CATALOG_DOCS: &[(&str, &str)] = &[
    ("C1.1", include_str!("../fixtures/catalog/c1_1.json")),
    ("C2.1", include_str!("../fixtures/catalog/c2_1.json")),
    ("C2.2", include_str!("../fixtures/catalog/c2_2.json")),
    ("C2.x", include_str!("../fixtures/catalog/c2_x.json")),
    ("C3.1", include_str!("../fixtures/catalog/c3_1.json")),
    ("C3.2", include_str!("../fixtures/catalog/c3_2.json")),
    ("C3.3", include_str!("../fixtures/catalog/c3_3.json")),
    ("C3.n", include_str!("../fixtures/catalog/c3_n.json")),
    ("C3.x", include_str!("../fixtures/catalog/c3_x.json")),
    ("C4.1", include_str!("../fixtures/catalog/c4_1.json")),
    ("C4.2", include_str!("../fixtures/catalog/c4_2.json")),
    ("C4.x", include_str!("../fixtures/catalog/c4_x.json")),
    ("C5.1", include_str!("../fixtures/catalog/c5_1.json")),
    ("C5.2", include_str!("../fixtures/catalog/c5_2.json")),
    ("C5.x", include_str!("../fixtures/catalog/c5_x.json")),
    ("C6.1", include_str!("../fixtures/catalog/c6_1.json")),
    ("C6.2", include_str!("../fixtures/catalog/c6_2.json")),
    ("C6.3", include_str!("../fixtures/catalog/c6_3.json")),
    ("C6.n", include_str!("../fixtures/catalog/c6_n.json")),
    ("C6.x", include_str!("../fixtures/catalog/c6_x.json")),
    ("C7.1", include_str!("../fixtures/catalog/c7_1.json")),
    ("C7.x", include_str!("../fixtures/catalog/c7_x.json")),
    ("C8.1", include_str!("../fixtures/catalog/c8_1.json")),
    ("C8.2", include_str!("../fixtures/catalog/c8_2.json")),
    ("C8.x", include_str!("../fixtures/catalog/c8_x.json")),
];

/// Per-indicator example values with the breach status each must
/// evaluate to, used by the acceptance suite.
pub const CATALOG_EXAMPLE_ANNOTATIONS: &str =
    include_str!("../fixtures/catalog/example-annotations.jsonl");

pub const GATES_DOC: &str = include_str!("../fixtures/gates.json");
pub const CTI_MAPPINGS_DOC: &str = include_str!("../fixtures/feeds/cti-mappings.json");

#[derive(Debug, Clone, Copy)]
pub struct ScenarioFixture {
    pub name: &'static str,
    pub manifest: &'static str,
    pub observations_text: &'static str,
    pub recovery_text: Option<&'static str>,
}

pub const SCENARIOS: &[ScenarioFixture] = &[
    ScenarioFixture {
        name: "scenario-1",
        manifest: include_str!("../fixtures/scenarios/scenario-1/manifest.json"),
        observations_text: include_str!("../fixtures/scenarios/scenario-1/observations.jsonl"),
        recovery_text: None,
    },
    ScenarioFixture {
        name: "scenario-2",
        manifest: include_str!("../fixtures/scenarios/scenario-2/manifest.json"),
        observations_text: include_str!("../fixtures/scenarios/scenario-2/observations.jsonl"),
        recovery_text: Some(include_str!("../fixtures/recoveries/scenario-2.json")),
    },
    ScenarioFixture {
        name: "scenario-3",
        manifest: include_str!("../fixtures/scenarios/scenario-3/manifest.json"),
        observations_text: include_str!("../fixtures/scenarios/scenario-3/observations.jsonl"),
        recovery_text: None,
    },
    ScenarioFixture {
        name: "scenario-4",
        manifest: include_str!("../fixtures/scenarios/scenario-4/manifest.json"),
        observations_text: include_str!("../fixtures/scenarios/scenario-4/observations.jsonl"),
        recovery_text: Some(include_str!("../fixtures/recoveries/scenario-4.json")),
    },
];

#[derive(Deserialize)]
struct ScenarioManifest {
    #[allow(dead_code)]
    name: String,
    trigger: Timestamp,
    description: String,
}

impl ScenarioFixture {
    pub fn trigger_ts(&self) -> Timestamp {
        let manifest: ScenarioManifest =
            serde_json::from_str(self.manifest).expect("bundled manifest is valid");
        manifest.trigger
    }

    pub fn description(&self) -> String {
        let manifest: ScenarioManifest =
            serde_json::from_str(self.manifest).expect("bundled manifest is valid");
        manifest.description
    }

    pub fn observations(&self) -> Vec<Observation> {
        let (obs, issues) = ingest::parse_observations(self.observations_text);
        assert!(issues.is_empty(), "bundled observations are valid: {issues:?}");
        obs
    }

    pub fn recovery_actions(&self) -> Option<Vec<RecoveryAction>> {
        self.recovery_text.map(|text| {
            serde_json::from_str(text).expect("bundled recovery script is valid")
        })
    }
}

pub fn scenario_names() -> impl Iterator<Item = &'static str> {
    SCENARIOS.iter().map(|s| s.name)
}

pub fn scenario(name: &str) -> Option<&'static ScenarioFixture> {
    SCENARIOS.iter().find(|s| s.name == name)
}

/// The bundled cyber-inability case, parsed.
pub fn bundled_case() -> SafetyCase {
    argument::parse_case(CASE_DOC).expect("bundled case is valid")
}

/// The bundled catalog over all claim groups, parsed.
pub fn bundled_catalog() -> SpiCatalog {
    SpiCatalog::from_documents(CATALOG_DOCS.iter().map(|(_, doc)| *doc))
        .expect("bundled catalog is valid")
}

/// Replay one bundled scenario end to end: ingest its observations into
/// a fresh store and run the consistency check at its trigger timestamp.
pub fn scenario_check(name: &str) -> CheckOutcome {
    let fixture = scenario(name).unwrap_or_else(|| panic!("no bundled scenario named {name}"));
    let case = bundled_case();
    let catalog = bundled_catalog();
    let mut store = ObservationStore::default();
    ingest::ingest(&mut store, &fixture.observations());
    let trigger = fixture.trigger_ts();
    engine::check(&case, &catalog, &store, trigger, trigger, None)
        .expect("bundled scenario checks cleanly")
}
