//! Governance outputs: severity classification of impact reports,
//! role-routed alerts, lifecycle decision gates, the hash-chained audit
//! log and the governance report with its requirements-traceability
//! section.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::argument::{NodeId, NodeKind, NodeStatus, SafetyCase, SpiId};
use crate::engine::ImpactReport;
use crate::spi::SpiStatus;
use crate::Timestamp;

/// Node tags driving insight classification.
pub const TAG_CAPABILITY: &str = "capability-uplift-indicator";
pub const TAG_SYSTEMIC: &str = "systemic-threat-indicator";
pub const TAG_PROCESS: &str = "process-indicator";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsightCategory {
    CapabilityIncrease,
    SystemicImpact,
    InternalProcess,
}

impl InsightCategory {
    pub fn severity(self) -> Severity {
        match self {
            InsightCategory::CapabilityIncrease => Severity::Highest,
            InsightCategory::SystemicImpact => Severity::HighMedium,
            InsightCategory::InternalProcess => Severity::MediumLow,
        }
    }

    fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            TAG_CAPABILITY => Some(InsightCategory::CapabilityIncrease),
            TAG_SYSTEMIC => Some(InsightCategory::SystemicImpact),
            TAG_PROCESS => Some(InsightCategory::InternalProcess),
            _ => None,
        }
    }
}

/// Total order: `Highest > HighMedium > MediumLow > None`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    None,
    MediumLow,
    HighMedium,
    Highest,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Severity::None => "none",
            Severity::MediumLow => "medium/low",
            Severity::HighMedium => "high/medium",
            Severity::Highest => "highest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    ResponsibleScalingOfficer,
    ExecutiveLeadership,
    SafetyTeam,
    ExternalOversight,
}

impl Role {
    pub const ALL: [Role; 4] = [
        Role::ResponsibleScalingOfficer,
        Role::ExecutiveLeadership,
        Role::SafetyTeam,
        Role::ExternalOversight,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionCode {
    LogInReport,
    NotifyRsoCeo,
    FullCapabilityReevaluation,
    PauseTrainingOrDeployment,
    RspReevaluation,
    UpdateEvaluations,
}

/// A severity-routed notification. Recipients and required actions are a
/// pure function of severity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alert {
    pub severity: Severity,
    pub categories: BTreeSet<InsightCategory>,
    pub recipients: BTreeSet<Role>,
    pub required_actions: BTreeSet<ActionCode>,
    /// Digest of the impact report this alert was raised for.
    pub impact_digest: String,
    /// Free-form pointer into the deployment's scaling-level ladder; the
    /// ladder semantics live outside this engine.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asl_hint: Option<String>,
}

/// Derive insight categories from the tags of invalidated claims and the
/// overall severity as the maximum over triggered categories.
pub fn classify(report: &ImpactReport, case: &SafetyCase) -> (BTreeSet<InsightCategory>, Severity) {
    let mut categories = BTreeSet::new();
    for id in report.invalidated() {
        if let Some(node) = case.node(&id) {
            for tag in &node.tags {
                if let Some(cat) = InsightCategory::from_tag(tag) {
                    categories.insert(cat);
                }
            }
        }
    }
    let severity = categories
        .iter()
        .map(|c| c.severity())
        .max()
        .unwrap_or(Severity::None);
    (categories, severity)
}

/// Route a classified impact to its recipients and required actions.
/// `Severity::None` yields no alert.
pub fn route(
    severity: Severity,
    categories: &BTreeSet<InsightCategory>,
    impact_digest: String,
) -> Option<Alert> {
    let (recipients, required_actions): (BTreeSet<Role>, BTreeSet<ActionCode>) = match severity {
        Severity::None => return None,
        Severity::MediumLow => (
            [Role::SafetyTeam].into(),
            [ActionCode::UpdateEvaluations, ActionCode::LogInReport].into(),
        ),
        Severity::HighMedium => (
            [
                Role::ResponsibleScalingOfficer,
                Role::ExecutiveLeadership,
                Role::SafetyTeam,
            ]
            .into(),
            [
                ActionCode::NotifyRsoCeo,
                ActionCode::FullCapabilityReevaluation,
            ]
            .into(),
        ),
        Severity::Highest => (
            Role::ALL.into(),
            [
                ActionCode::PauseTrainingOrDeployment,
                ActionCode::RspReevaluation,
                ActionCode::FullCapabilityReevaluation,
                ActionCode::NotifyRsoCeo,
            ]
            .into(),
        ),
    };
    Some(Alert {
        severity,
        categories: categories.clone(),
        recipients,
        required_actions,
        impact_digest,
        asl_hint: None,
    })
}

/// Lifecycle gate configuration entry.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDef {
    pub id: String,
    pub stage: String,
}

pub fn parse_gates(doc: &str) -> Result<Vec<GateDef>, serde_json::Error> {
    serde_json::from_str(doc)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Blocker {
    InvalidatedClaim { id: NodeId },
    UnderReviewClaim { id: NodeId },
    StaleSpi { id: SpiId },
    OpenRecovery { id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub gate: String,
    pub passed: bool,
    pub blockers: Vec<Blocker>,
}

#[derive(Debug, thiserror::Error)]
#[error("unknown gate id: {0}")]
pub struct UnknownGate(pub String);

/// Evaluate one decision gate against the current snapshot. A gate never
/// passes while any claim is invalidated or under review, any indicator
/// is stale, or a recovery is still open.
pub fn evaluate_gate(
    gate: &str,
    gates: &[GateDef],
    case: &SafetyCase,
    statuses: &[SpiStatus],
    open_recoveries: &[String],
) -> Result<GateResult, UnknownGate> {
    let def = gates
        .iter()
        .find(|g| g.id == gate)
        .ok_or_else(|| UnknownGate(gate.to_string()))?;
    let mut blockers = Vec::new();
    for node in case.nodes() {
        if node.kind != NodeKind::Claim {
            continue;
        }
        match node.status {
            NodeStatus::Invalidated => blockers.push(Blocker::InvalidatedClaim {
                id: node.id.clone(),
            }),
            NodeStatus::UnderReview => blockers.push(Blocker::UnderReviewClaim {
                id: node.id.clone(),
            }),
            NodeStatus::Valid | NodeStatus::Stale => {}
        }
    }
    for status in statuses {
        if status.stale {
            blockers.push(Blocker::StaleSpi {
                id: status.spi.clone(),
            });
        }
    }
    for open in open_recoveries {
        blockers.push(Blocker::OpenRecovery { id: open.clone() });
    }
    blockers.sort();
    Ok(GateResult {
        gate: def.id.clone(),
        passed: blockers.is_empty(),
        blockers,
    })
}

/// Canonical content digest: sha-256 over the compact JSON form (object
/// keys sorted by construction).
pub fn digest<T: Serialize>(value: &T) -> String {
    let canonical = serde_json::to_string(value).expect("canonical serialization");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    System,
    Role(Role),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditEvent {
    Alert,
    Gate,
    Recovery,
    Ingest,
    Check,
}

/// One link of the audit chain. `prev_digest` commits to the full
/// preceding record (the log header for the first one).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub seq: u64,
    pub ts: Timestamp,
    pub actor: Actor,
    pub event: AuditEvent,
    pub payload: serde_json::Value,
    pub payload_digest: String,
    pub prev_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditHeader {
    pub algorithm: String,
    pub version: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditLog {
    pub header: AuditHeader,
    pub records: Vec<AuditRecord>,
}

impl Default for AuditLog {
    fn default() -> Self {
        AuditLog::new()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ChainFault {
    #[error("record at index {index}: payload digest mismatch")]
    PayloadMismatch { index: usize },
    #[error("record at index {index}: broken chain link")]
    BrokenLink { index: usize },
    #[error("record at index {index}: sequence gap (expected {expected}, found {found})")]
    SequenceGap {
        index: usize,
        expected: u64,
        found: u64,
    },
    #[error("malformed log: {0}")]
    Malformed(String),
}

impl AuditLog {
    pub fn new() -> Self {
        AuditLog {
            header: AuditHeader {
                algorithm: "sha-256".to_string(),
                version: 1,
            },
            records: Vec::new(),
        }
    }

    pub fn head_digest(&self) -> String {
        match self.records.last() {
            Some(record) => digest(record),
            None => digest(&self.header),
        }
    }

    pub fn append(
        &mut self,
        ts: Timestamp,
        actor: Actor,
        event: AuditEvent,
        payload: serde_json::Value,
    ) -> &AuditRecord {
        let record = AuditRecord {
            seq: self.records.len() as u64 + 1,
            ts,
            actor,
            event,
            payload_digest: digest(&payload),
            payload,
            prev_digest: self.head_digest(),
        };
        self.records.push(record);
        self.records.last().expect("just pushed")
    }

    /// Verify every link end to end: payload digests, previous-record
    /// digests and gapless sequence numbers. Reports the first bad index.
    pub fn verify_chain(&self) -> Result<(), ChainFault> {
        let mut prev = digest(&self.header);
        for (index, record) in self.records.iter().enumerate() {
            let expected_seq = index as u64 + 1;
            if record.seq != expected_seq {
                return Err(ChainFault::SequenceGap {
                    index,
                    expected: expected_seq,
                    found: record.seq,
                });
            }
            if digest(&record.payload) != record.payload_digest {
                return Err(ChainFault::PayloadMismatch { index });
            }
            if record.prev_digest != prev {
                return Err(ChainFault::BrokenLink { index });
            }
            prev = digest(record);
        }
        Ok(())
    }

    /// Line-delimited form: the header line followed by one record per
    /// line.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ChainFault> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header_line = lines
            .next()
            .ok_or_else(|| ChainFault::Malformed("empty log".to_string()))?;
        let header: AuditHeader = serde_json::from_str(header_line)
            .map_err(|e| ChainFault::Malformed(format!("bad header: {e}")))?;
        let mut records = Vec::new();
        for line in lines {
            let record: AuditRecord = serde_json::from_str(line)
                .map_err(|e| ChainFault::Malformed(format!("bad record: {e}")))?;
            records.push(record);
        }
        Ok(AuditLog { header, records })
    }
}

/// One row of the requirements register with the feature and test
/// exercising it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequirementTrace {
    pub id: String,
    pub feature: String,
    pub verified_by: String,
}

/// The requirements register: what the engine must do and where each
/// entry is exercised.
const REQUIREMENTS: &[(&str, &str, &str)] = &[
    (
        "REQ-001",
        "initial safety case authored and structurally validated at load",
        "argument::tests::bundled_case_parses_with_expected_claims",
    ),
    (
        "REQ-002",
        "case maintained across its lifecycle via versioned recoveries and persistence",
        "engine::tests::scenario_two_recovery_adds_claim_and_reinstates",
    ),
    (
        "REQ-005",
        "automated consistency checks over the argument graph",
        "acceptance::scenario_reproduction",
    ),
    (
        "REQ-017",
        "indicator catalog with thresholds and update frequencies",
        "acceptance::catalog_load",
    ),
    (
        "REQ-018",
        "breached indicators trigger argument re-evaluation",
        "spi::tests::breach_events_are_edge_triggered",
    ),
    (
        "REQ-019",
        "external data feeds mapped onto indicators",
        "ingest::tests::cti_record_maps_to_new_ttp_indicator",
    ),
    (
        "REQ-020",
        "new external data runs an automated impact analysis",
        "service::observations_trigger_check",
    ),
    (
        "REQ-023",
        "governance reporting interface (report command and GET /report)",
        "service::report_endpoint_is_deterministic",
    ),
    (
        "REQ-025",
        "token-scoped access control and tamper-evident audit trail",
        "acceptance::determinism_and_persistence",
    ),
];

pub fn requirements() -> Vec<RequirementTrace> {
    REQUIREMENTS
        .iter()
        .map(|(id, feature, verified_by)| RequirementTrace {
            id: id.to_string(),
            feature: feature.to_string(),
            verified_by: verified_by.to_string(),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimLine {
    pub id: NodeId,
    pub status: NodeStatus,
    pub tags: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiLine {
    pub id: SpiId,
    pub claim: NodeId,
    pub value: Option<f64>,
    pub breached: bool,
    pub stale: bool,
}

/// Deterministic snapshot document for humans and the dashboard.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GovernanceReport {
    pub case_id: String,
    pub case_version: u64,
    pub headline_severity: Severity,
    pub claims: Vec<ClaimLine>,
    pub spis: Vec<SpiLine>,
    pub alerts: Vec<Alert>,
    pub gates: Vec<GateResult>,
    pub requirements_traceability: Vec<RequirementTrace>,
}

impl GovernanceReport {
    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }
}

/// Assemble the governance report from one consistent snapshot.
pub fn governance_report(
    case: &SafetyCase,
    statuses: &[SpiStatus],
    alerts: &[Alert],
    gates: &[GateResult],
) -> GovernanceReport {
    let claims = case
        .nodes()
        .filter(|n| n.kind == NodeKind::Claim)
        .map(|n| ClaimLine {
            id: n.id.clone(),
            status: n.status,
            tags: n.tags.clone(),
        })
        .collect();
    let by_spi: BTreeMap<&SpiId, &SpiStatus> = statuses.iter().map(|s| (&s.spi, s)).collect();
    let spis = case
        .spi_attachments()
        .iter()
        .map(|(spi, claim)| {
            let status = by_spi.get(spi);
            SpiLine {
                id: spi.clone(),
                claim: claim.clone(),
                value: status.and_then(|s| s.value),
                breached: status.is_some_and(|s| s.breached),
                stale: status.is_some_and(|s| s.stale),
            }
        })
        .collect();
    let headline_severity = alerts
        .iter()
        .map(|a| a.severity)
        .max()
        .unwrap_or(Severity::None);
    GovernanceReport {
        case_id: case.case_id.clone(),
        case_version: case.version,
        headline_severity,
        claims,
        spis,
        alerts: alerts.to_vec(),
        gates: gates.to_vec(),
        requirements_traceability: requirements(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::apply_report;
    use crate::fixtures::{self, scenario_check};

    fn ts() -> Timestamp {
        "2025-03-01T00:00:00Z".parse().unwrap()
    }

    fn classify_scenario(name: &str) -> (BTreeSet<InsightCategory>, Severity) {
        let outcome = scenario_check(name);
        classify(&outcome.report, &fixtures::bundled_case())
    }

    #[test]
    fn scenario_classification_matrix() {
        use InsightCategory::*;
        let (cats, severity) = classify_scenario("scenario-1");
        assert_eq!(cats, [CapabilityIncrease, SystemicImpact].into());
        assert_eq!(severity, Severity::Highest);

        let (cats, severity) = classify_scenario("scenario-2");
        assert_eq!(cats, [SystemicImpact].into());
        assert_eq!(severity, Severity::HighMedium);

        let (cats, _) = classify_scenario("scenario-3");
        assert_eq!(cats, [CapabilityIncrease, SystemicImpact].into());

        let (cats, severity) = classify_scenario("scenario-4");
        assert_eq!(cats, [InternalProcess].into());
        assert_eq!(severity, Severity::MediumLow);
    }

    #[test]
    fn category_severity_labels() {
        assert_eq!(InsightCategory::CapabilityIncrease.severity(), Severity::Highest);
        assert_eq!(InsightCategory::SystemicImpact.severity(), Severity::HighMedium);
        assert_eq!(InsightCategory::InternalProcess.severity(), Severity::MediumLow);
        assert_eq!(Severity::Highest.to_string(), "highest");
        assert_eq!(Severity::HighMedium.to_string(), "high/medium");
        assert_eq!(Severity::MediumLow.to_string(), "medium/low");
    }

    #[test]
    fn empty_report_classifies_to_none() {
        let case = fixtures::bundled_case();
        let report = ImpactReport::empty(&case);
        let (cats, severity) = classify(&report, &case);
        assert!(cats.is_empty());
        assert_eq!(severity, Severity::None);
    }

    #[test]
    fn routing_matches_the_severity_ladder() {
        let cats = BTreeSet::new();
        let highest = route(Severity::Highest, &cats, "d".into()).unwrap();
        assert_eq!(highest.recipients, Role::ALL.into());
        assert!(highest
            .required_actions
            .contains(&ActionCode::PauseTrainingOrDeployment));
        assert!(highest.required_actions.contains(&ActionCode::NotifyRsoCeo));

        let high = route(Severity::HighMedium, &cats, "d".into()).unwrap();
        assert!(high.recipients.contains(&Role::ResponsibleScalingOfficer));
        assert!(high.recipients.contains(&Role::ExecutiveLeadership));
        assert!(!high.recipients.contains(&Role::ExternalOversight));
        assert!(high.required_actions.contains(&ActionCode::NotifyRsoCeo));
        assert!(!high
            .required_actions
            .contains(&ActionCode::PauseTrainingOrDeployment));

        let medium = route(Severity::MediumLow, &cats, "d".into()).unwrap();
        assert_eq!(medium.recipients, [Role::SafetyTeam].into());
        assert!(medium.required_actions.contains(&ActionCode::LogInReport));
        assert!(!medium
            .required_actions
            .contains(&ActionCode::PauseTrainingOrDeployment));

        assert!(route(Severity::None, &cats, "d".into()).is_none());
    }

    #[test]
    fn severity_is_monotone_in_the_invalidated_set() {
        // scenario 4 invalidates a process claim; the scenario 1 chain is a
        // superset situation carrying capability and systemic tags
        let (_, low) = classify_scenario("scenario-4");
        let (_, high) = classify_scenario("scenario-1");
        assert!(high > low);
    }

    #[test]
    fn clean_snapshot_passes_gates() {
        let case = fixtures::bundled_case();
        let gates = parse_gates(fixtures::GATES_DOC).unwrap();
        let result = evaluate_gate("G2", &gates, &case, &[], &[]).unwrap();
        assert!(result.passed);
        assert!(result.blockers.is_empty());
    }

    #[test]
    fn scenario_three_blocks_gates_with_the_invalidated_claim() {
        let outcome = scenario_check("scenario-3");
        let case = apply_report(
            &fixtures::bundled_case(),
            &outcome.report,
            &outcome.statuses,
        );
        let gates = parse_gates(fixtures::GATES_DOC).unwrap();
        let result = evaluate_gate("G3", &gates, &case, &[], &[]).unwrap();
        assert!(!result.passed);
        assert!(result.blockers.contains(&Blocker::InvalidatedClaim {
            id: NodeId::from("C6.3")
        }));
    }

    #[test]
    fn stale_spi_blocks_gates() {
        let case = fixtures::bundled_case();
        let gates = parse_gates(fixtures::GATES_DOC).unwrap();
        let stale = SpiStatus {
            spi: SpiId::from("C2.1-SPI-1"),
            value: Some(0.0),
            breached: false,
            stale: true,
            evaluated_at: ts(),
            contributing_observation_count: 0,
        };
        let result = evaluate_gate("G1", &gates, &case, &[stale], &[]).unwrap();
        assert!(!result.passed);
        assert!(result.blockers.contains(&Blocker::StaleSpi {
            id: SpiId::from("C2.1-SPI-1")
        }));
    }

    #[test]
    fn open_recovery_blocks_gates_and_unknown_gate_errors() {
        let case = fixtures::bundled_case();
        let gates = parse_gates(fixtures::GATES_DOC).unwrap();
        let result =
            evaluate_gate("G1", &gates, &case, &[], &["recovery-1".to_string()]).unwrap();
        assert!(!result.passed);
        assert!(evaluate_gate("G9", &gates, &case, &[], &[]).is_err());
    }

    #[test]
    fn audit_chain_appends_and_verifies() {
        let mut log = AuditLog::new();
        for i in 0..3 {
            log.append(
                ts(),
                Actor::System,
                AuditEvent::Check,
                serde_json::json!({"run": i}),
            );
        }
        assert!(log.verify_chain().is_ok());
        assert_eq!(log.records.len(), 3);
    }

    #[test]
    fn payload_tamper_is_detected_at_its_index() {
        let mut log = AuditLog::new();
        for i in 0..3 {
            log.append(
                ts(),
                Actor::System,
                AuditEvent::Ingest,
                serde_json::json!({"batch": i}),
            );
        }
        let mut text = log.to_jsonl();
        // flip one byte in record 2's payload on "disk"
        let pos = text.find("\"batch\":1").expect("payload present");
        text.replace_range(pos + 8..pos + 9, "7");
        let tampered = AuditLog::from_jsonl(&text).unwrap();
        match tampered.verify_chain() {
            Err(ChainFault::PayloadMismatch { index }) => assert_eq!(index, 1),
            other => panic!("expected payload mismatch at index 1, got {other:?}"),
        }
    }

    #[test]
    fn dropped_record_breaks_the_chain() {
        let mut log = AuditLog::new();
        for i in 0..3 {
            log.append(ts(), Actor::System, AuditEvent::Check, serde_json::json!(i));
        }
        log.records.remove(1);
        assert!(log.verify_chain().is_err());
    }

    #[test]
    fn empty_log_verifies() {
        assert!(AuditLog::new().verify_chain().is_ok());
    }

    #[test]
    fn digest_is_order_canonical() {
        // object keys serialize sorted, so construction order cannot leak
        // into digests
        let mut a = serde_json::Map::new();
        a.insert("x".into(), serde_json::json!(1));
        a.insert("a".into(), serde_json::json!(2));
        let mut b = serde_json::Map::new();
        b.insert("a".into(), serde_json::json!(2));
        b.insert("x".into(), serde_json::json!(1));
        assert_eq!(
            digest(&serde_json::Value::Object(a)),
            digest(&serde_json::Value::Object(b))
        );
    }

    #[test]
    fn governance_report_headline_and_determinism() {
        let outcome = scenario_check("scenario-1");
        let case = apply_report(
            &fixtures::bundled_case(),
            &outcome.report,
            &outcome.statuses,
        );
        let (categories, severity) = classify(&outcome.report, &case);
        let alert = route(severity, &categories, digest(&outcome.report)).unwrap();
        let report = governance_report(&case, &outcome.statuses, &[alert], &[]);
        assert_eq!(report.headline_severity, Severity::Highest);
        let top = report
            .claims
            .iter()
            .find(|c| c.id == NodeId::from("C0"))
            .unwrap();
        assert_eq!(top.status, NodeStatus::Invalidated);
        assert_eq!(report.to_canonical_json(), report.to_canonical_json());
        for req in [
            "REQ-001", "REQ-002", "REQ-005", "REQ-017", "REQ-018", "REQ-019", "REQ-020",
            "REQ-023", "REQ-025",
        ] {
            assert!(report.requirements_traceability.iter().any(|r| r.id == req));
        }
    }

    #[test]
    fn quiescent_report_has_no_alerts() {
        let case = fixtures::bundled_case();
        let report = governance_report(&case, &[], &[], &[]);
        assert!(report.alerts.is_empty());
        assert_eq!(report.headline_severity, Severity::None);
    }
}
