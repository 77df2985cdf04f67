//! The consistency check: map SPI breaches and artifact changes onto
//! directly impacted argumentation elements, propagate impact across
//! relationships per edge policy, report the impact area, apply recovery
//! actions and revalidate.
//!
//! [`propagate`] is the production worklist algorithm; [`oracle_impact`]
//! is a deliberately separate brute-force fixpoint used to demonstrate
//! that the worklist misses nothing (no false negatives) and invents
//! nothing (no false positives).

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::argument::{
    self, ArgNode, CaseIssue, NodeId, NodeStatus, PropagationPolicy, RelKind, Relationship,
    SafetyCase, SpiId,
};
use crate::ingest::ObservationStore;
use crate::spi::{self, BreachEvent, Comparator, SpiCatalog, SpiStatus, ThresholdSpec};
use crate::Timestamp;

/// What changed: breached indicators and/or changed development
/// artifacts (matched against node tags). At least one set is non-empty.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangeScenario {
    pub breached_spis: BTreeSet<SpiId>,
    pub changed_artifacts: BTreeSet<String>,
}

impl ChangeScenario {
    pub fn new(
        breached_spis: BTreeSet<SpiId>,
        changed_artifacts: BTreeSet<String>,
    ) -> Result<Self, EmptyScenario> {
        if breached_spis.is_empty() && changed_artifacts.is_empty() {
            return Err(EmptyScenario);
        }
        Ok(ChangeScenario {
            breached_spis,
            changed_artifacts,
        })
    }

    pub fn from_breaches(statuses: &[SpiStatus]) -> Option<Self> {
        let breached: BTreeSet<SpiId> = statuses
            .iter()
            .filter(|s| s.breached)
            .map(|s| s.spi.clone())
            .collect();
        if breached.is_empty() {
            None
        } else {
            Some(ChangeScenario {
                breached_spis: breached,
                changed_artifacts: BTreeSet::new(),
            })
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("a change scenario needs at least one breached spi or changed artifact")]
pub struct EmptyScenario;

#[derive(Debug, thiserror::Error)]
pub enum ImpactError {
    #[error("breached spi {0} is not attached to any node")]
    UnknownSpi(SpiId),
    #[error("changed artifact {0:?} is not tagged on any node")]
    UnknownArtifact(String),
}

/// One propagation rule application, recorded for the report trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceStep {
    pub from: NodeId,
    pub to: NodeId,
    pub rel: RelKind,
    pub policy: PropagationPolicy,
    /// The endpoint the rule acted on.
    pub target: NodeId,
    pub result_status: NodeStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatusTransition {
    pub old: NodeStatus,
    pub new: NodeStatus,
}

/// Direct and indirect impact of a change scenario on one case version.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImpactReport {
    pub case_id: String,
    pub case_version: u64,
    pub breached_spis: BTreeSet<SpiId>,
    pub changed_artifacts: BTreeSet<String>,
    pub direct: BTreeSet<NodeId>,
    pub indirect: BTreeSet<NodeId>,
    pub transitions: BTreeMap<NodeId, StatusTransition>,
    pub trace: Vec<TraceStep>,
    /// Set when the top claim invalidates: the whole argument basis no
    /// longer holds and a replacement argument must be authored.
    pub requires_argument_rebuild: bool,
}

impl ImpactReport {
    pub fn empty(case: &SafetyCase) -> Self {
        ImpactReport {
            case_id: case.case_id.clone(),
            case_version: case.version,
            breached_spis: BTreeSet::new(),
            changed_artifacts: BTreeSet::new(),
            direct: BTreeSet::new(),
            indirect: BTreeSet::new(),
            transitions: BTreeMap::new(),
            trace: Vec::new(),
            requires_argument_rebuild: false,
        }
    }

    /// direct ∪ indirect.
    pub fn impact_area(&self) -> BTreeSet<NodeId> {
        self.direct.union(&self.indirect).cloned().collect()
    }

    pub fn invalidated(&self) -> BTreeSet<NodeId> {
        self.transitions
            .iter()
            .filter(|(_, t)| t.new == NodeStatus::Invalidated)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.direct.is_empty() && self.indirect.is_empty()
    }

    pub fn to_canonical_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("impact report serializes");
        out.push('\n');
        out
    }
}

/// Nodes directly impacted: targets of breached-SPI attachments plus
/// nodes tagged with a changed artifact reference.
pub fn direct_impact(
    case: &SafetyCase,
    scenario: &ChangeScenario,
) -> Result<BTreeSet<NodeId>, ImpactError> {
    let mut direct = BTreeSet::new();
    for spi in &scenario.breached_spis {
        match case.spi_attachments().get(spi) {
            Some(node) => {
                direct.insert(node.clone());
            }
            None => return Err(ImpactError::UnknownSpi(spi.clone())),
        }
    }
    for artifact in &scenario.changed_artifacts {
        let tagged: Vec<NodeId> = case
            .nodes()
            .filter(|n| n.tags.contains(artifact))
            .map(|n| n.id.clone())
            .collect();
        if tagged.is_empty() {
            return Err(ImpactError::UnknownArtifact(artifact.clone()));
        }
        direct.extend(tagged);
    }
    Ok(direct)
}

fn breached_nodes(case: &SafetyCase, statuses: &[SpiStatus]) -> BTreeSet<NodeId> {
    let breached: BTreeSet<&SpiId> = statuses
        .iter()
        .filter(|s| s.breached)
        .map(|s| &s.spi)
        .collect();
    case.spi_attachments()
        .iter()
        .filter(|(spi, _)| breached.contains(spi))
        .map(|(_, node)| node.clone())
        .collect()
}

fn policy_target(
    policy: PropagationPolicy,
    endpoint_breached: bool,
) -> NodeStatus {
    match policy {
        PropagationPolicy::Invalidate => NodeStatus::Invalidated,
        PropagationPolicy::Flag => NodeStatus::UnderReview,
        PropagationPolicy::SpiGated => {
            if endpoint_breached {
                NodeStatus::Invalidated
            } else {
                NodeStatus::UnderReview
            }
        }
    }
}

/// Worklist propagation to fixpoint.
///
/// Every directly impacted node is invalidated, then each edge incident
/// to an invalidated node is applied once per direction: `invalidate`
/// invalidates the other endpoint, `flag` puts it under review
/// (terminal), `spi-gated` invalidates it only if one of its own
/// attached SPIs is breached. Statuses only ever escalate. The worklist
/// is processed in lexicographic node-id order so the trace is
/// reproducible; the resulting impact area is order-independent.
pub fn propagate(
    case: &SafetyCase,
    direct: &BTreeSet<NodeId>,
    statuses: &[SpiStatus],
) -> ImpactReport {
    let gate_open = breached_nodes(case, statuses);
    let mut status: BTreeMap<&NodeId, NodeStatus> = case
        .node_ids()
        .map(|id| (id, NodeStatus::Valid))
        .collect();
    for id in direct {
        if let Some(s) = status.get_mut(id) {
            *s = NodeStatus::Invalidated;
        }
    }

    let mut worklist: BTreeSet<&NodeId> = direct
        .iter()
        .filter(|id| status.contains_key(id))
        .collect();
    let mut applied: BTreeSet<(usize, &NodeId)> = BTreeSet::new();
    let mut trace = Vec::new();

    while let Some(node) = worklist.pop_first() {
        for (i, edge) in case.edges().iter().enumerate() {
            let other = if edge.from == *node {
                &edge.to
            } else if edge.to == *node {
                &edge.from
            } else {
                continue;
            };
            if !applied.insert((i, node)) {
                continue;
            }
            let target = policy_target(edge.policy, gate_open.contains(other));
            let current = *status.get(other).expect("edges validated against nodes");
            let escalated = target > current;
            if escalated {
                status.insert(other, target);
            }
            let result_status = *status.get(other).expect("endpoint tracked");
            trace.push(TraceStep {
                from: edge.from.clone(),
                to: edge.to.clone(),
                rel: edge.rel,
                policy: edge.policy,
                target: other.clone(),
                result_status,
            });
            if escalated && target == NodeStatus::Invalidated {
                worklist.insert(other);
            }
        }
    }

    let impacted: BTreeSet<NodeId> = status
        .iter()
        .filter(|(_, s)| **s != NodeStatus::Valid)
        .map(|(id, _)| (*id).clone())
        .collect();
    let indirect: BTreeSet<NodeId> = impacted.difference(direct).cloned().collect();
    let transitions: BTreeMap<NodeId, StatusTransition> = impacted
        .iter()
        .map(|id| {
            let old = case.node(id).map(|n| n.status).unwrap_or(NodeStatus::Valid);
            let new = *status.get(id).expect("impacted node tracked");
            (id.clone(), StatusTransition { old, new })
        })
        .collect();
    let requires_argument_rebuild = case
        .top_claim()
        .map(|top| {
            transitions
                .get(&top.id)
                .is_some_and(|t| t.new == NodeStatus::Invalidated)
        })
        .unwrap_or(false);

    ImpactReport {
        case_id: case.case_id.clone(),
        case_version: case.version,
        breached_spis: BTreeSet::new(),
        changed_artifacts: BTreeSet::new(),
        direct: direct.clone(),
        indirect,
        transitions,
        trace,
        requires_argument_rebuild,
    }
}

/// Everything one consistency check produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub statuses: Vec<SpiStatus>,
    pub events: Vec<BreachEvent>,
    pub report: ImpactReport,
}

/// Evaluate the catalog, derive the change scenario from breached
/// indicators, compute direct impact and propagate. Pure given its
/// inputs.
pub fn check(
    case: &SafetyCase,
    catalog: &SpiCatalog,
    store: &ObservationStore,
    now: Timestamp,
    catalog_loaded_at: Timestamp,
    previous: Option<&[SpiStatus]>,
) -> Result<CheckOutcome, ImpactError> {
    let (statuses, events) = spi::evaluate_all(catalog, store, now, catalog_loaded_at, previous);
    let report = match ChangeScenario::from_breaches(&statuses) {
        None => ImpactReport::empty(case),
        Some(scenario) => {
            let direct = direct_impact(case, &scenario)?;
            let mut report = propagate(case, &direct, &statuses);
            report.breached_spis = scenario.breached_spis;
            report.changed_artifacts = scenario.changed_artifacts;
            report
        }
    };
    Ok(CheckOutcome {
        statuses,
        events,
        report,
    })
}

/// Fold a check outcome back into the case's status bookkeeping.
///
/// Statuses are derived per check: everything starts valid, claims whose
/// attached indicators have all gone stale are marked stale, then the
/// report's transitions are applied on top. A clean check therefore
/// clears flags left over from earlier checks.
pub fn apply_report(
    case: &SafetyCase,
    report: &ImpactReport,
    statuses: &[SpiStatus],
) -> SafetyCase {
    let stale_spis: BTreeSet<&SpiId> = statuses
        .iter()
        .filter(|s| s.stale)
        .map(|s| &s.spi)
        .collect();
    let mut by_claim: BTreeMap<&NodeId, (usize, usize)> = BTreeMap::new();
    for (spi, claim) in case.spi_attachments() {
        let entry = by_claim.entry(claim).or_insert((0, 0));
        entry.0 += 1;
        if stale_spis.contains(spi) {
            entry.1 += 1;
        }
    }
    let mut new_statuses: BTreeMap<NodeId, NodeStatus> = case
        .node_ids()
        .map(|id| (id.clone(), NodeStatus::Valid))
        .collect();
    for (claim, (total, stale)) in by_claim {
        if total > 0 && total == stale {
            new_statuses.insert(claim.clone(), NodeStatus::Stale);
        }
    }
    for (id, t) in &report.transitions {
        new_statuses.insert(id.clone(), t.new);
    }
    case.with_statuses(&new_statuses)
}

/// An authored update recovering from change impact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RecoveryAction {
    AddNode { node: ArgNode },
    AddEdge { edge: Relationship },
    SetThreshold {
        spi: SpiId,
        threshold: ThresholdSpec,
        comparator: Comparator,
    },
    Reinstate { node_id: NodeId },
    AttachEvidence { claim_id: NodeId, evidence: ArgNode },
}

#[derive(Debug, thiserror::Error)]
pub enum RecoveryError {
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("node {0} does not exist")]
    UnknownNode(NodeId),
    #[error("spi {0} is not in the catalog")]
    UnknownSpi(SpiId),
    #[error("recovery would leave the case structurally invalid: {}",
        .0.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; "))]
    Structural(Vec<CaseIssue>),
}

/// Audit-ready description of one applied recovery batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryDiff {
    pub from_version: u64,
    pub to_version: u64,
    pub actions: Vec<RecoveryAction>,
}

/// Apply a recovery batch atomically: the result is a new case version
/// (and possibly updated catalog) passing structural validation, or an
/// error leaving the inputs untouched.
pub fn apply_recovery(
    case: &SafetyCase,
    catalog: &SpiCatalog,
    actions: &[RecoveryAction],
) -> Result<(SafetyCase, SpiCatalog, RecoveryDiff), RecoveryError> {
    let mut new_case = case.clone();
    let mut new_catalog = catalog.clone();
    for action in actions {
        match action {
            RecoveryAction::AddNode { node } => {
                if !new_case.insert_node(node.clone()) {
                    return Err(RecoveryError::DuplicateNode(node.id.clone()));
                }
            }
            RecoveryAction::AddEdge { edge } => {
                new_case.insert_edge(edge.clone());
            }
            RecoveryAction::SetThreshold {
                spi,
                threshold,
                comparator,
            } => {
                if !new_catalog.set_threshold(spi, *threshold, *comparator) {
                    return Err(RecoveryError::UnknownSpi(spi.clone()));
                }
            }
            RecoveryAction::Reinstate { node_id } => {
                if !new_case.set_status(node_id, NodeStatus::Valid) {
                    return Err(RecoveryError::UnknownNode(node_id.clone()));
                }
            }
            RecoveryAction::AttachEvidence { claim_id, evidence } => {
                if new_case.node(claim_id).is_none() {
                    return Err(RecoveryError::UnknownNode(claim_id.clone()));
                }
                if !new_case.insert_node(evidence.clone()) {
                    return Err(RecoveryError::DuplicateNode(evidence.id.clone()));
                }
                new_case.insert_edge(Relationship {
                    from: evidence.id.clone(),
                    to: claim_id.clone(),
                    rel: RelKind::Supports,
                    policy: PropagationPolicy::Invalidate,
                });
            }
        }
    }
    let violations = argument::validate_structure(&new_case);
    if !violations.is_empty() {
        return Err(RecoveryError::Structural(violations));
    }
    new_case.bump_version();
    let diff = RecoveryDiff {
        from_version: case.version,
        to_version: new_case.version,
        actions: actions.to_vec(),
    };
    Ok((new_case, new_catalog, diff))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RevalidationReport {
    pub clean: bool,
    pub residual: ImpactReport,
}

/// Re-run the consistency check after a recovery; clean when the impact
/// area comes back empty.
pub fn revalidate(
    case: &SafetyCase,
    catalog: &SpiCatalog,
    store: &ObservationStore,
    now: Timestamp,
    catalog_loaded_at: Timestamp,
) -> Result<RevalidationReport, ImpactError> {
    let outcome = check(case, catalog, store, now, catalog_loaded_at, None)?;
    Ok(RevalidationReport {
        clean: outcome.report.is_empty(),
        residual: outcome.report,
    })
}

/// Brute-force fixpoint: apply every edge rule in both directions over
/// and over until nothing changes. No worklist, no bookkeeping — the
/// independent reference for what the impact area must be.
pub fn oracle_impact(
    case: &SafetyCase,
    direct: &BTreeSet<NodeId>,
    statuses: &[SpiStatus],
) -> BTreeMap<NodeId, NodeStatus> {
    let gate_open = breached_nodes(case, statuses);
    let mut status: BTreeMap<NodeId, NodeStatus> = case
        .node_ids()
        .map(|id| (id.clone(), NodeStatus::Valid))
        .collect();
    for id in direct {
        if let Some(s) = status.get_mut(id) {
            *s = NodeStatus::Invalidated;
        }
    }
    loop {
        let mut changed = false;
        for edge in case.edges() {
            for (x, y) in [(&edge.from, &edge.to), (&edge.to, &edge.from)] {
                if status.get(x) != Some(&NodeStatus::Invalidated) {
                    continue;
                }
                let target = policy_target(edge.policy, gate_open.contains(y));
                let current = *status.get(y).expect("validated endpoints");
                if target > current {
                    status.insert(y.clone(), target);
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    status.retain(|_, s| *s != NodeStatus::Valid);
    status
}

/// Completeness/accuracy diff between the engine and the oracle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleDiff {
    /// Impacted per the oracle, missed by the engine.
    pub false_negatives: BTreeSet<NodeId>,
    /// Reported by the engine, not impacted per the oracle.
    pub false_positives: BTreeSet<NodeId>,
}

impl OracleDiff {
    pub fn is_clean(&self) -> bool {
        self.false_negatives.is_empty() && self.false_positives.is_empty()
    }
}

/// Run both routes over the same scenario and diff the impact areas.
pub fn oracle_compare(
    case: &SafetyCase,
    scenario: &ChangeScenario,
    statuses: &[SpiStatus],
) -> Result<OracleDiff, ImpactError> {
    let direct = direct_impact(case, scenario)?;
    let engine_area = propagate(case, &direct, statuses).impact_area();
    let oracle_area: BTreeSet<NodeId> = oracle_impact(case, &direct, statuses)
        .into_keys()
        .collect();
    Ok(OracleDiff {
        false_negatives: oracle_area.difference(&engine_area).cloned().collect(),
        false_positives: engine_area.difference(&oracle_area).cloned().collect(),
    })
}
