//! The monitor -> check -> alert -> recover -> revalidate loop over a
//! workspace, shared by the CLI and the HTTP service. Each operation
//! mutates the in-memory state, appends its audit records and persists
//! before returning.

use serde::{Deserialize, Serialize};

use dscms_core::engine::{
    self, ImpactReport, RecoveryAction, RecoveryDiff, RevalidationReport,
};
use dscms_core::governance::{
    self, classify, digest, route, Actor, Alert, AuditEvent, GateDef, GateResult,
    InsightCategory, Severity,
};
use dscms_core::ingest::{self, IngestReceipt, ObservationLineIssue};
use dscms_core::spi::BreachEvent;
use dscms_core::{fixtures, Timestamp};

use crate::workspace::{Workspace, WorkspaceError, WorkspaceState};

#[derive(Debug, thiserror::Error)]
pub enum OpError {
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
    #[error("consistency check failed: {0}")]
    Impact(#[from] engine::ImpactError),
    #[error("recovery rejected: {0}")]
    Recovery(#[from] engine::RecoveryError),
    #[error("recovery cites case version {cited} but the workspace is at {current}")]
    VersionConflict { cited: u64, current: u64 },
    #[error("no bundled scenario named {0}")]
    UnknownScenario(String),
    #[error("malformed input: {0}")]
    Malformed(String),
}

/// Summary of one consistency check, alert routing included.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckSummary {
    pub at: Timestamp,
    pub events: Vec<BreachEvent>,
    pub report: ImpactReport,
    pub invalidated: Vec<String>,
    pub categories: Vec<InsightCategory>,
    pub severity: Severity,
    pub severity_label: String,
    pub alert: Option<Alert>,
    pub gates: Vec<GateResult>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub receipt: IngestReceipt,
    pub issues: Vec<ObservationLineIssue>,
    /// Present when the batch triggered an automated impact analysis.
    pub check: Option<CheckSummary>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateOutcome {
    pub scenario: String,
    pub description: String,
    pub trigger: Timestamp,
    pub receipt: IngestReceipt,
    pub check: CheckSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RecoveryOutcome {
    pub diff: RecoveryDiff,
    pub case_version: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RevalidationOutcome {
    pub at: Timestamp,
    pub revalidation: RevalidationReport,
    pub case_version: u64,
}

/// Load the workspace, or initialize it from the bundled case and
/// catalog when empty.
pub fn load_or_init(
    workspace: &Workspace,
    loaded_at: Option<Timestamp>,
) -> Result<WorkspaceState, WorkspaceError> {
    if workspace.exists() {
        return workspace.load();
    }
    let state = WorkspaceState::fresh(
        fixtures::bundled_case(),
        fixtures::bundled_catalog(),
        loaded_at.unwrap_or_else(chrono::Utc::now),
    );
    workspace.persist(&state)?;
    Ok(state)
}

pub fn gates_config(workspace: &Workspace) -> Vec<GateDef> {
    let override_path = workspace.dir().join("gates.json");
    if let Ok(text) = std::fs::read_to_string(override_path) {
        if let Ok(gates) = governance::parse_gates(&text) {
            return gates;
        }
    }
    governance::parse_gates(fixtures::GATES_DOC).expect("bundled gate config is valid")
}

/// The timestamp a check runs at when none is given: the newest
/// observation, so replayed feeds evaluate in their own time frame.
fn default_check_time(state: &WorkspaceState) -> Timestamp {
    state
        .store
        .spi_ids()
        .flat_map(|spi| state.store.for_spi(spi))
        .map(|o| o.ts)
        .max()
        .unwrap_or(state.loaded_at)
}

/// Run a consistency check at `at`, fold the result into the case
/// status bookkeeping, classify, route, audit and persist.
pub fn run_check(
    workspace: &Workspace,
    state: &mut WorkspaceState,
    at: Option<Timestamp>,
    actor: Actor,
) -> Result<CheckSummary, OpError> {
    let at = at.unwrap_or_else(|| default_check_time(state));
    let outcome = engine::check(
        &state.case,
        &state.catalog,
        &state.store,
        at,
        state.loaded_at,
        Some(&state.statuses),
    )?;
    state.case = engine::apply_report(&state.case, &outcome.report, &outcome.statuses);
    state.statuses = outcome.statuses;
    state.last_check_at = Some(at);

    let (categories, severity) = classify(&outcome.report, &state.case);
    let alert = route(severity, &categories, digest(&outcome.report));
    let gates = evaluate_gates(workspace, state);
    let gates_changed = gates != state.gates;
    state.gates = gates.clone();

    if outcome.report.is_empty() {
        state.open_recoveries.clear();
    } else {
        let ticket = format!("recovery-{}", &digest(&outcome.report)[..12]);
        if !state.open_recoveries.contains(&ticket) {
            state.open_recoveries.push(ticket);
        }
    }

    state.audit.append(
        at,
        actor.clone(),
        AuditEvent::Check,
        serde_json::json!({
            "at": at,
            "impact_digest": digest(&outcome.report),
            "direct": outcome.report.direct,
            "invalidated": outcome.report.invalidated(),
            "breach_events": outcome.events.len(),
        }),
    );
    if let Some(alert) = &alert {
        state.audit.append(
            at,
            actor.clone(),
            AuditEvent::Alert,
            serde_json::to_value(alert).expect("alert serializes"),
        );
    }
    if gates_changed {
        state.audit.append(
            at,
            actor,
            AuditEvent::Gate,
            serde_json::to_value(&gates).expect("gates serialize"),
        );
    }

    state.impact = Some(outcome.report.clone());
    state.alert = alert.clone();
    workspace.persist(state)?;

    Ok(CheckSummary {
        at,
        events: outcome.events,
        invalidated: outcome
            .report
            .invalidated()
            .iter()
            .map(|id| id.to_string())
            .collect(),
        report: outcome.report,
        categories: categories.into_iter().collect(),
        severity,
        severity_label: severity.to_string(),
        alert,
        gates,
    })
}

pub fn evaluate_gates(workspace: &Workspace, state: &WorkspaceState) -> Vec<GateResult> {
    let config = gates_config(workspace);
    config
        .iter()
        .map(|gate| {
            governance::evaluate_gate(
                &gate.id,
                &config,
                &state.case,
                &state.statuses,
                &state.open_recoveries,
            )
            .expect("configured gates resolve")
        })
        .collect()
}

/// Ingest an observation batch; accepted observations trigger an
/// automated impact analysis at the batch's newest timestamp.
pub fn run_ingest(
    workspace: &Workspace,
    state: &mut WorkspaceState,
    text: &str,
    actor: Actor,
) -> Result<IngestOutcome, OpError> {
    let (observations, issues) = ingest::parse_observations(text);
    let receipt = ingest::ingest(&mut state.store, &observations);
    let at = default_check_time(state);
    state.audit.append(
        at,
        actor.clone(),
        AuditEvent::Ingest,
        serde_json::json!({
            "accepted": receipt.accepted,
            "deduplicated": receipt.deduplicated,
            "rejected_lines": issues.len(),
        }),
    );
    let check = if receipt.evaluation_trigger {
        Some(run_check(workspace, state, Some(at), actor)?)
    } else {
        workspace.persist(state)?;
        None
    };
    Ok(IngestOutcome {
        receipt,
        issues,
        check,
    })
}

/// Replay a bundled scenario: ingest its observation file and check at
/// its declared trigger timestamp.
pub fn run_simulate(
    workspace: &Workspace,
    state: &mut WorkspaceState,
    name: &str,
    actor: Actor,
) -> Result<SimulateOutcome, OpError> {
    let fixture =
        fixtures::scenario(name).ok_or_else(|| OpError::UnknownScenario(name.to_string()))?;
    let trigger = fixture.trigger_ts();
    let receipt = ingest::ingest(&mut state.store, &fixture.observations());
    state.audit.append(
        trigger,
        actor.clone(),
        AuditEvent::Ingest,
        serde_json::json!({
            "scenario": name,
            "accepted": receipt.accepted,
            "deduplicated": receipt.deduplicated,
        }),
    );
    let check = run_check(workspace, state, Some(trigger), actor)?;
    Ok(SimulateOutcome {
        scenario: name.to_string(),
        description: fixture.description(),
        trigger,
        receipt,
        check,
    })
}

/// Apply a recovery batch atomically, guarding against a stale case
/// version cited by the caller.
pub fn run_recover(
    workspace: &Workspace,
    state: &mut WorkspaceState,
    actions: &[RecoveryAction],
    cited_version: Option<u64>,
    actor: Actor,
) -> Result<RecoveryOutcome, OpError> {
    if let Some(cited) = cited_version {
        if cited != state.case.version {
            return Err(OpError::VersionConflict {
                cited,
                current: state.case.version,
            });
        }
    }
    let (case, catalog, diff) = engine::apply_recovery(&state.case, &state.catalog, actions)?;
    state.case = case;
    state.catalog = catalog;
    let at = state.last_check_at.unwrap_or(state.loaded_at);
    state.audit.append(
        at,
        actor,
        AuditEvent::Recovery,
        serde_json::to_value(&diff).expect("diff serializes"),
    );
    workspace.persist(state)?;
    Ok(RecoveryOutcome {
        case_version: state.case.version,
        diff,
    })
}

/// Re-run the consistency check after a recovery; clean checks clear
/// open recovery tickets and flagged statuses.
pub fn run_revalidate(
    workspace: &Workspace,
    state: &mut WorkspaceState,
    actor: Actor,
) -> Result<RevalidationOutcome, OpError> {
    let at = state.last_check_at.unwrap_or_else(|| default_check_time(state));
    let summary = run_check(workspace, state, Some(at), actor)?;
    Ok(RevalidationOutcome {
        at,
        revalidation: RevalidationReport {
            clean: summary.report.is_empty(),
            residual: summary.report,
        },
        case_version: state.case.version,
    })
}

/// Governance report over the current snapshot.
pub fn build_report(
    workspace: &Workspace,
    state: &WorkspaceState,
) -> governance::GovernanceReport {
    let alerts: Vec<Alert> = state.alert.clone().into_iter().collect();
    let gates = evaluate_gates(workspace, state);
    governance::governance_report(&state.case, &state.statuses, &alerts, &gates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use dscms_core::argument::NodeId;

    fn setup() -> (tempfile::TempDir, Workspace, WorkspaceState) {
        let dir = tempfile::tempdir().unwrap();
        let ws = Workspace::at(dir.path());
        let state = load_or_init(&ws, Some("2025-03-01T00:00:00Z".parse().unwrap())).unwrap();
        (dir, ws, state)
    }

    #[test]
    fn simulate_equals_ingest_plus_check_at_trigger() {
        let (_k1, ws1, mut s1) = setup();
        let sim = run_simulate(&ws1, &mut s1, "scenario-2", Actor::System).unwrap();

        let (_k2, ws2, mut s2) = setup();
        let fixture = fixtures::scenario("scenario-2").unwrap();
        run_ingest(&ws2, &mut s2, fixture.observations_text, Actor::System).unwrap();
        let check = run_check(&ws2, &mut s2, Some(fixture.trigger_ts()), Actor::System).unwrap();

        assert_eq!(sim.check.report, check.report);
        assert_eq!(sim.check.severity, check.severity);
    }

    #[test]
    fn scenario_one_simulation_routes_highest() {
        let (_keep, ws, mut state) = setup();
        let sim = run_simulate(&ws, &mut state, "scenario-1", Actor::System).unwrap();
        assert_eq!(sim.check.severity_label, "highest");
        let expected: Vec<String> = ["C0", "C1.1", "C2.1", "C3.1"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(sim.check.invalidated, expected);
        assert!(sim.check.report.requires_argument_rebuild);
        let alert = sim.check.alert.unwrap();
        assert_eq!(alert.recipients.len(), 4);
        // exactly one audit record per alert
        let alerts_in_audit = state
            .audit
            .records
            .iter()
            .filter(|r| r.event == AuditEvent::Alert)
            .count();
        assert_eq!(alerts_in_audit, 1);
    }

    #[test]
    fn recover_and_revalidate_clear_scenario_two() {
        let (_keep, ws, mut state) = setup();
        run_simulate(&ws, &mut state, "scenario-2", Actor::System).unwrap();
        assert_eq!(
            state.case.node(&NodeId::from("C2.2")).unwrap().status,
            dscms_core::argument::NodeStatus::Invalidated
        );
        assert!(!state.open_recoveries.is_empty());
        let actions = fixtures::scenario("scenario-2")
            .unwrap()
            .recovery_actions()
            .unwrap();
        let recovered =
            run_recover(&ws, &mut state, &actions, Some(1), Actor::System).unwrap();
        assert_eq!(recovered.case_version, 2);
        let reval = run_revalidate(&ws, &mut state, Actor::System).unwrap();
        assert!(reval.revalidation.clean);
        assert!(state.open_recoveries.is_empty());
        assert_eq!(
            state.case.node(&NodeId::from("C1.1")).unwrap().status,
            dscms_core::argument::NodeStatus::Valid
        );
        assert!(state.audit.verify_chain().is_ok());
    }

    #[test]
    fn stale_version_citation_conflicts() {
        let (_keep, ws, mut state) = setup();
        let err = run_recover(&ws, &mut state, &[], Some(7), Actor::System).unwrap_err();
        assert!(matches!(err, OpError::VersionConflict { cited: 7, current: 1 }));
    }

    #[test]
    fn simulate_persists_and_reloads_the_same_report() {
        let (_keep, ws, mut state) = setup();
        let sim = run_simulate(&ws, &mut state, "scenario-2", Actor::System).unwrap();
        let reloaded = ws.load().unwrap();
        assert_eq!(reloaded.impact, Some(sim.check.report));
        assert_eq!(reloaded.case.version, state.case.version);
    }

    #[test]
    fn report_lists_requirements_and_headline() {
        let (_keep, ws, mut state) = setup();
        run_simulate(&ws, &mut state, "scenario-4", Actor::System).unwrap();
        let report = build_report(&ws, &state);
        assert_eq!(report.headline_severity, Severity::MediumLow);
        assert_eq!(report.requirements_traceability.len(), 9);
        assert!(report.gates.iter().all(|g| !g.passed));
    }
}
