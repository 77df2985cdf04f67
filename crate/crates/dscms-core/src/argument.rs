//! The checkable safety-argument graph.
//!
//! A [`SafetyCase`] is a versioned graph of typed nodes (claims,
//! strategies, evidence, context, defeaters) connected by typed
//! relationships, with SPI attachments on claims. Parsing is
//! all-or-nothing: a document either yields a case satisfying every
//! structural invariant or the full list of problems found.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a node inside one case. Opaque; uniqueness is case-wide.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for NodeId {
    fn from(s: &str) -> Self {
        NodeId(s.to_string())
    }
}

/// Identifier of a safety performance indicator.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SpiId(pub String);

impl SpiId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SpiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SpiId {
    fn from(s: &str) -> Self {
        SpiId(s.to_string())
    }
}

/// Tag marking the single top-level claim.
pub const TAG_TOP: &str = "top";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Claim,
    Strategy,
    Evidence,
    Context,
    Defeater,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Claim => "claim",
            NodeKind::Strategy => "strategy",
            NodeKind::Evidence => "evidence",
            NodeKind::Context => "context",
            NodeKind::Defeater => "defeater",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "claim" => Some(NodeKind::Claim),
            "strategy" => Some(NodeKind::Strategy),
            "evidence" => Some(NodeKind::Evidence),
            "context" => Some(NodeKind::Context),
            "defeater" => Some(NodeKind::Defeater),
            _ => None,
        }
    }
}

/// Consistency status of a node. Owned by the consistency engine; this
/// module only validates the enumeration and round-trips it.
///
/// The variants are ordered so that a status never downgrades during
/// propagation: `Valid < Stale < UnderReview < Invalidated`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Valid,
    Stale,
    UnderReview,
    Invalidated,
}

impl NodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeStatus::Valid => "valid",
            NodeStatus::Stale => "stale",
            NodeStatus::UnderReview => "under-review",
            NodeStatus::Invalidated => "invalidated",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "valid" => Some(NodeStatus::Valid),
            "stale" => Some(NodeStatus::Stale),
            "under-review" => Some(NodeStatus::UnderReview),
            "invalidated" => Some(NodeStatus::Invalidated),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub text: String,
    #[serde(default)]
    pub tags: BTreeSet<String>,
    #[serde(default = "default_status")]
    pub status: NodeStatus,
}

fn default_status() -> NodeStatus {
    NodeStatus::Valid
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RelKind {
    Supports,
    InContextOf,
    Challenges,
}

impl RelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RelKind::Supports => "supports",
            RelKind::InContextOf => "in-context-of",
            RelKind::Challenges => "challenges",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "supports" => Some(RelKind::Supports),
            "in-context-of" => Some(RelKind::InContextOf),
            "challenges" => Some(RelKind::Challenges),
            _ => None,
        }
    }
}

/// How impact travels across a relationship during a consistency check.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationPolicy {
    /// The other endpoint is invalidated outright.
    Invalidate,
    /// The other endpoint is put under review; never re-propagated.
    Flag,
    /// The other endpoint is invalidated only if one of its own attached
    /// SPIs is breached, otherwise put under review.
    SpiGated,
}

impl PropagationPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            PropagationPolicy::Invalidate => "invalidate",
            PropagationPolicy::Flag => "flag",
            PropagationPolicy::SpiGated => "spi-gated",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "invalidate" => Some(PropagationPolicy::Invalidate),
            "flag" => Some(PropagationPolicy::Flag),
            "spi-gated" => Some(PropagationPolicy::SpiGated),
            _ => None,
        }
    }

    /// Default when a document omits the policy: evidence hard-propagates
    /// into the claim it backs, challenges invalidate their target, and
    /// everything else only flags the other endpoint for review.
    pub fn default_for(rel: RelKind, src_kind: NodeKind) -> Self {
        match (rel, src_kind) {
            (RelKind::Supports, NodeKind::Evidence) => PropagationPolicy::Invalidate,
            (RelKind::Challenges, _) => PropagationPolicy::Invalidate,
            _ => PropagationPolicy::Flag,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Relationship {
    pub from: NodeId,
    pub to: NodeId,
    pub rel: RelKind,
    pub policy: PropagationPolicy,
}

/// The versioned argument graph. Immutable after construction; the
/// consistency engine produces new values instead of mutating in place.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SafetyCase {
    pub case_id: String,
    pub version: u64,
    nodes: BTreeMap<NodeId, ArgNode>,
    edges: Vec<Relationship>,
    spi_attachments: BTreeMap<SpiId, NodeId>,
}

/// One problem found while parsing or validating a case document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseIssue {
    pub code: IssueCode,
    /// Offending node id, edge (`from -> to`) or attachment spi id.
    pub element: String,
    pub detail: String,
}

impl fmt::Display for CaseIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [{}]: {}", self.code.as_str(), self.element, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IssueCode {
    Malformed,
    DuplicateId,
    DanglingEdgeEndpoint,
    SelfEdge,
    UnknownKind,
    UnknownRelationship,
    UnknownPolicy,
    UnknownStatus,
    MissingTopClaim,
    MultipleTopClaims,
    TopNotClaim,
    CyclicSupportsGraph,
    BadChallengesSource,
    UnreachableFromTop,
    BadSpiAttachment,
    EmptyNodeId,
}

impl IssueCode {
    pub fn as_str(self) -> &'static str {
        match self {
            IssueCode::Malformed => "malformed",
            IssueCode::DuplicateId => "duplicate-id",
            IssueCode::DanglingEdgeEndpoint => "dangling-edge-endpoint",
            IssueCode::SelfEdge => "self-edge",
            IssueCode::UnknownKind => "unknown-kind",
            IssueCode::UnknownRelationship => "unknown-relationship",
            IssueCode::UnknownPolicy => "unknown-policy",
            IssueCode::UnknownStatus => "unknown-status",
            IssueCode::MissingTopClaim => "missing-top-claim",
            IssueCode::MultipleTopClaims => "multiple-top-claims",
            IssueCode::TopNotClaim => "top-not-claim",
            IssueCode::CyclicSupportsGraph => "cyclic-supports-graph",
            IssueCode::BadChallengesSource => "bad-challenges-source",
            IssueCode::UnreachableFromTop => "unreachable-from-top",
            IssueCode::BadSpiAttachment => "bad-spi-attachment",
            IssueCode::EmptyNodeId => "empty-node-id",
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("unknown node id: {0}")]
pub struct UnknownNode(pub NodeId);

// Raw document shape; enums are kept as strings so that every problem can
// be reported against its element instead of failing on the first one.
#[derive(Deserialize)]
struct CaseDoc {
    case_id: String,
    version: u64,
    nodes: Vec<NodeDoc>,
    #[serde(default)]
    edges: Vec<EdgeDoc>,
    #[serde(default)]
    spi_attachments: Vec<AttachmentDoc>,
}

#[derive(Deserialize)]
struct NodeDoc {
    id: String,
    kind: String,
    text: String,
    #[serde(default)]
    tags: Vec<String>,
    status: Option<String>,
}

#[derive(Deserialize)]
struct EdgeDoc {
    from: String,
    to: String,
    rel: String,
    policy: Option<String>,
}

#[derive(Deserialize)]
struct AttachmentDoc {
    spi_id: String,
    claim_id: String,
}

// Serialized shape: the same field names with every value spelled out.
#[derive(Serialize)]
struct CaseDocOut<'a> {
    case_id: &'a str,
    version: u64,
    nodes: Vec<NodeDocOut<'a>>,
    edges: Vec<EdgeDocOut<'a>>,
    spi_attachments: Vec<AttachmentDocOut<'a>>,
}

#[derive(Serialize)]
struct NodeDocOut<'a> {
    id: &'a str,
    kind: &'a str,
    text: &'a str,
    tags: &'a BTreeSet<String>,
    status: &'a str,
}

#[derive(Serialize)]
struct EdgeDocOut<'a> {
    from: &'a str,
    to: &'a str,
    rel: &'a str,
    policy: &'a str,
}

#[derive(Serialize)]
struct AttachmentDocOut<'a> {
    spi_id: &'a str,
    claim_id: &'a str,
}

/// Parse a case document. All-or-nothing: either the resulting case
/// satisfies every invariant or the complete list of issues is returned.
pub fn parse_case(document: &str) -> Result<SafetyCase, Vec<CaseIssue>> {
    let doc: CaseDoc = serde_json::from_str(document).map_err(|e| {
        vec![CaseIssue {
            code: IssueCode::Malformed,
            element: "document".to_string(),
            detail: e.to_string(),
        }]
    })?;

    let mut issues = Vec::new();
    let mut nodes: BTreeMap<NodeId, ArgNode> = BTreeMap::new();

    for n in &doc.nodes {
        if n.id.is_empty() {
            issues.push(CaseIssue {
                code: IssueCode::EmptyNodeId,
                element: "<empty>".to_string(),
                detail: "node id must be non-empty".to_string(),
            });
            continue;
        }
        let id = NodeId(n.id.clone());
        let kind = match NodeKind::parse(&n.kind) {
            Some(k) => k,
            None => {
                issues.push(CaseIssue {
                    code: IssueCode::UnknownKind,
                    element: n.id.clone(),
                    detail: format!("unknown node kind {:?}", n.kind),
                });
                continue;
            }
        };
        let status = match n.status.as_deref() {
            None => NodeStatus::Valid,
            Some(s) => match NodeStatus::parse(s) {
                Some(st) => st,
                None => {
                    issues.push(CaseIssue {
                        code: IssueCode::UnknownStatus,
                        element: n.id.clone(),
                        detail: format!("unknown node status {s:?}"),
                    });
                    continue;
                }
            },
        };
        let node = ArgNode {
            id: id.clone(),
            kind,
            text: n.text.clone(),
            tags: n.tags.iter().cloned().collect(),
            status,
        };
        if nodes.insert(id, node).is_some() {
            issues.push(CaseIssue {
                code: IssueCode::DuplicateId,
                element: n.id.clone(),
                detail: "node id used more than once".to_string(),
            });
        }
    }

    let mut edges = Vec::new();
    for e in &doc.edges {
        let element = format!("{} -> {}", e.from, e.to);
        let rel = match RelKind::parse(&e.rel) {
            Some(r) => r,
            None => {
                issues.push(CaseIssue {
                    code: IssueCode::UnknownRelationship,
                    element,
                    detail: format!("unknown relationship {:?}", e.rel),
                });
                continue;
            }
        };
        let src_kind = match nodes.get(&NodeId(e.from.clone())) {
            Some(n) => n.kind,
            None => {
                issues.push(CaseIssue {
                    code: IssueCode::DanglingEdgeEndpoint,
                    element,
                    detail: format!("edge source {:?} does not exist", e.from),
                });
                continue;
            }
        };
        if !nodes.contains_key(&NodeId(e.to.clone())) {
            issues.push(CaseIssue {
                code: IssueCode::DanglingEdgeEndpoint,
                element,
                detail: format!("edge target {:?} does not exist", e.to),
            });
            continue;
        }
        let policy = match e.policy.as_deref() {
            None => PropagationPolicy::default_for(rel, src_kind),
            Some(p) => match PropagationPolicy::parse(p) {
                Some(pp) => pp,
                None => {
                    issues.push(CaseIssue {
                        code: IssueCode::UnknownPolicy,
                        element,
                        detail: format!("unknown propagation policy {p:?}"),
                    });
                    continue;
                }
            },
        };
        edges.push(Relationship {
            from: NodeId(e.from.clone()),
            to: NodeId(e.to.clone()),
            rel,
            policy,
        });
    }
    edges.sort();

    let mut spi_attachments = BTreeMap::new();
    for a in &doc.spi_attachments {
        if spi_attachments
            .insert(SpiId(a.spi_id.clone()), NodeId(a.claim_id.clone()))
            .is_some()
        {
            issues.push(CaseIssue {
                code: IssueCode::DuplicateId,
                element: a.spi_id.clone(),
                detail: "spi attached more than once".to_string(),
            });
        }
    }

    let case = SafetyCase {
        case_id: doc.case_id,
        version: doc.version,
        nodes,
        edges,
        spi_attachments,
    };
    issues.extend(validate_structure(&case));
    if issues.is_empty() {
        Ok(case)
    } else {
        Err(issues)
    }
}

/// Check every structural invariant of a case. Violations are data, not
/// failures; an empty list means `parse_case` would accept the
/// serialized form.
pub fn validate_structure(case: &SafetyCase) -> Vec<CaseIssue> {
    let mut issues = Vec::new();

    let tops: Vec<&ArgNode> = case
        .nodes
        .values()
        .filter(|n| n.tags.contains(TAG_TOP))
        .collect();
    match tops.as_slice() {
        [] => issues.push(CaseIssue {
            code: IssueCode::MissingTopClaim,
            element: "case".to_string(),
            detail: "no node carries the top tag".to_string(),
        }),
        [top] => {
            if top.kind != NodeKind::Claim {
                issues.push(CaseIssue {
                    code: IssueCode::TopNotClaim,
                    element: top.id.to_string(),
                    detail: format!("top node has kind {}", top.kind.as_str()),
                });
            }
        }
        many => issues.push(CaseIssue {
            code: IssueCode::MultipleTopClaims,
            element: many.iter().map(|n| n.id.as_str()).collect::<Vec<_>>().join(", "),
            detail: "more than one node carries the top tag".to_string(),
        }),
    }

    for e in &case.edges {
        let element = format!("{} -> {}", e.from, e.to);
        if e.from == e.to {
            issues.push(CaseIssue {
                code: IssueCode::SelfEdge,
                element: element.clone(),
                detail: "edge endpoints must differ".to_string(),
            });
        }
        for end in [&e.from, &e.to] {
            if !case.nodes.contains_key(end) {
                issues.push(CaseIssue {
                    code: IssueCode::DanglingEdgeEndpoint,
                    element: element.clone(),
                    detail: format!("endpoint {end:?} does not exist"),
                });
            }
        }
        if e.rel == RelKind::Challenges {
            if let Some(src) = case.nodes.get(&e.from) {
                if src.kind != NodeKind::Defeater {
                    issues.push(CaseIssue {
                        code: IssueCode::BadChallengesSource,
                        element: element.clone(),
                        detail: format!("challenges edge from a {}", src.kind.as_str()),
                    });
                }
            }
        }
    }

    if let Some(cycle) = supports_cycle(case) {
        issues.push(CaseIssue {
            code: IssueCode::CyclicSupportsGraph,
            element: cycle.iter().map(NodeId::as_str).collect::<Vec<_>>().join(", "),
            detail: "supports subgraph must be acyclic".to_string(),
        });
    } else if let [top] = tops.as_slice() {
        // Reachability is only meaningful on an acyclic supports graph
        // with a unique top.
        let reaches_top = supports_reachable_set(case, &top.id);
        for node in case.nodes.values() {
            if node.kind == NodeKind::Claim && node.id != top.id && !reaches_top.contains(&node.id)
            {
                issues.push(CaseIssue {
                    code: IssueCode::UnreachableFromTop,
                    element: node.id.to_string(),
                    detail: "claim has no supports path to the top claim".to_string(),
                });
            }
        }
    }

    for (spi, claim) in &case.spi_attachments {
        match case.nodes.get(claim) {
            None => issues.push(CaseIssue {
                code: IssueCode::BadSpiAttachment,
                element: spi.to_string(),
                detail: format!("attachment references missing node {claim:?}"),
            }),
            Some(n) if n.kind != NodeKind::Claim => issues.push(CaseIssue {
                code: IssueCode::BadSpiAttachment,
                element: spi.to_string(),
                detail: format!("attachment references a {} node", n.kind.as_str()),
            }),
            Some(_) => {}
        }
    }

    issues
}

/// Nodes whose supports path eventually reaches `top` (children, grand
/// children, ...), excluding `top` itself.
fn supports_reachable_set(case: &SafetyCase, top: &NodeId) -> BTreeSet<NodeId> {
    let mut children: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for e in &case.edges {
        if e.rel == RelKind::Supports {
            children.entry(&e.to).or_default().push(&e.from);
        }
    }
    let mut seen = BTreeSet::new();
    let mut queue = VecDeque::from([top]);
    while let Some(id) = queue.pop_front() {
        for child in children.get(id).into_iter().flatten() {
            if seen.insert((*child).clone()) {
                queue.push_back(*child);
            }
        }
    }
    seen
}

/// One cycle witness over the supports subgraph, if any.
fn supports_cycle(case: &SafetyCase) -> Option<Vec<NodeId>> {
    // Kahn's algorithm; whatever survives elimination sits on a cycle.
    let mut out_degree: BTreeMap<&NodeId, usize> = BTreeMap::new();
    let mut incoming: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for id in case.nodes.keys() {
        out_degree.insert(id, 0);
    }
    for e in &case.edges {
        if e.rel == RelKind::Supports && case.nodes.contains_key(&e.from) && case.nodes.contains_key(&e.to) {
            *out_degree.entry(&e.from).or_insert(0) += 1;
            incoming.entry(&e.to).or_default().push(&e.from);
        }
    }
    let mut ready: VecDeque<&NodeId> = out_degree
        .iter()
        .filter(|(_, d)| **d == 0)
        .map(|(id, _)| *id)
        .collect();
    let mut remaining = out_degree.len();
    while let Some(id) = ready.pop_front() {
        remaining -= 1;
        for child in incoming.get(id).into_iter().flatten() {
            let d = out_degree.get_mut(child).expect("child tracked");
            *d -= 1;
            if *d == 0 {
                ready.push_back(*child);
            }
        }
    }
    if remaining == 0 {
        return None;
    }
    let cycle: Vec<NodeId> = out_degree
        .iter()
        .filter(|(_, d)| **d > 0)
        .map(|(id, _)| (*id).clone())
        .collect();
    Some(cycle)
}

impl SafetyCase {
    pub fn node(&self, id: &NodeId) -> Option<&ArgNode> {
        self.nodes.get(id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &ArgNode> {
        self.nodes.values()
    }

    pub fn node_ids(&self) -> impl Iterator<Item = &NodeId> {
        self.nodes.keys()
    }

    pub fn edges(&self) -> &[Relationship] {
        &self.edges
    }

    pub fn spi_attachments(&self) -> &BTreeMap<SpiId, NodeId> {
        &self.spi_attachments
    }

    pub fn top_claim(&self) -> Option<&ArgNode> {
        self.nodes.values().find(|n| n.tags.contains(TAG_TOP))
    }

    /// Claims with no claim, strategy or evidence arguing under them.
    pub fn leaf_claims(&self) -> Vec<&ArgNode> {
        let mut supported: BTreeSet<&NodeId> = BTreeSet::new();
        for e in &self.edges {
            if e.rel == RelKind::Supports {
                supported.insert(&e.to);
            }
        }
        self.nodes
            .values()
            .filter(|n| n.kind == NodeKind::Claim && !supported.contains(&n.id))
            .collect()
    }

    /// Evidence nodes directly supporting `id`.
    pub fn supporting_evidence(&self, id: &NodeId) -> Vec<&ArgNode> {
        self.edges
            .iter()
            .filter(|e| e.rel == RelKind::Supports && &e.to == id)
            .filter_map(|e| self.nodes.get(&e.from))
            .filter(|n| n.kind == NodeKind::Evidence)
            .collect()
    }

    /// Rebuild the same case with a different status map. Ids absent from
    /// `statuses` keep their current status.
    pub fn with_statuses(&self, statuses: &BTreeMap<NodeId, NodeStatus>) -> SafetyCase {
        let mut out = self.clone();
        for (id, node) in out.nodes.iter_mut() {
            if let Some(s) = statuses.get(id) {
                node.status = *s;
            }
        }
        out
    }

    /// Copy of this case with every node status reset to valid.
    pub fn with_all_valid(&self) -> SafetyCase {
        let mut out = self.clone();
        for node in out.nodes.values_mut() {
            node.status = NodeStatus::Valid;
        }
        out
    }

    pub(crate) fn insert_node(&mut self, node: ArgNode) -> bool {
        if self.nodes.contains_key(&node.id) {
            return false;
        }
        self.nodes.insert(node.id.clone(), node);
        true
    }

    pub(crate) fn insert_edge(&mut self, edge: Relationship) {
        self.edges.push(edge);
        self.edges.sort();
    }

    pub(crate) fn set_status(&mut self, id: &NodeId, status: NodeStatus) -> bool {
        match self.nodes.get_mut(id) {
            Some(n) => {
                n.status = status;
                true
            }
            None => false,
        }
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }
}

/// All nodes reachable from `id` over supports edges child-to-parent,
/// topologically ordered ending at the top claim. Never contains `id`.
pub fn ancestors(case: &SafetyCase, id: &NodeId) -> Result<Vec<NodeId>, UnknownNode> {
    if !case.nodes.contains_key(id) {
        return Err(UnknownNode(id.clone()));
    }
    let mut parents: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
    for e in &case.edges {
        if e.rel == RelKind::Supports {
            parents.entry(&e.from).or_default().insert(&e.to);
        }
    }
    let mut set: BTreeSet<&NodeId> = BTreeSet::new();
    let mut queue = VecDeque::from([id]);
    while let Some(cur) = queue.pop_front() {
        for p in parents.get(cur).into_iter().flatten() {
            if *p != id && set.insert(*p) {
                queue.push_back(*p);
            }
        }
    }
    // Kahn over the induced subgraph: a node is emitted once every
    // ancestor-set child pointing at it has been emitted, so children
    // precede parents and the top claim comes last. Lexicographic
    // tie-break keeps the order reproducible.
    let mut order = Vec::with_capacity(set.len());
    let mut emitted: BTreeSet<&NodeId> = BTreeSet::new();
    emitted.insert(id);
    while order.len() < set.len() {
        let next = set
            .iter()
            .copied()
            .find(|n| {
                !emitted.contains(*n)
                    && emitted_covers(&parents, &emitted, &set, id, n)
            })
            .expect("acyclic ancestor graph always has a ready node");
        emitted.insert(next);
        order.push(next.clone());
    }
    Ok(order)
}

fn emitted_covers(
    parents: &BTreeMap<&NodeId, BTreeSet<&NodeId>>,
    emitted: &BTreeSet<&NodeId>,
    set: &BTreeSet<&NodeId>,
    start: &NodeId,
    candidate: &NodeId,
) -> bool {
    // Every in-set child (or the start node) that lists `candidate` as a
    // parent must already be emitted.
    [start]
        .into_iter()
        .chain(set.iter().copied())
        .filter(|child| parents.get(*child).is_some_and(|ps| ps.contains(candidate)))
        .all(|child| emitted.contains(child))
}

/// Canonical serialization: stable ordering, byte-deterministic, and
/// `parse_case(serialize_case(c))` structurally equals `c`.
pub fn serialize_case(case: &SafetyCase) -> String {
    let doc = CaseDocOut {
        case_id: &case.case_id,
        version: case.version,
        nodes: case
            .nodes
            .values()
            .map(|n| NodeDocOut {
                id: n.id.as_str(),
                kind: n.kind.as_str(),
                text: &n.text,
                tags: &n.tags,
                status: n.status.as_str(),
            })
            .collect(),
        edges: case
            .edges
            .iter()
            .map(|e| EdgeDocOut {
                from: e.from.as_str(),
                to: e.to.as_str(),
                rel: e.rel.as_str(),
                policy: e.policy.as_str(),
            })
            .collect(),
        spi_attachments: case
            .spi_attachments
            .iter()
            .map(|(spi, claim)| AttachmentDocOut {
                spi_id: spi.as_str(),
                claim_id: claim.as_str(),
            })
            .collect(),
    };
    let mut out = serde_json::to_string_pretty(&doc).expect("case serialization cannot fail");
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn mini_case(extra_edges: &[(&str, &str, &str, &str)]) -> String {
        let mut edges = vec![serde_json::json!({
            "from": "C1", "to": "C0", "rel": "supports", "policy": "flag"
        })];
        for (f, t, r, p) in extra_edges {
            edges.push(serde_json::json!({"from": f, "to": t, "rel": r, "policy": p}));
        }
        serde_json::json!({
            "case_id": "mini",
            "version": 1,
            "nodes": [
                {"id": "C0", "kind": "claim", "text": "top", "tags": ["top"]},
                {"id": "C1", "kind": "claim", "text": "child", "tags": []},
            ],
            "edges": edges,
            "spi_attachments": []
        })
        .to_string()
    }

    #[test]
    fn bundled_case_parses_with_expected_claims() {
        let case = fixtures::bundled_case();
        for id in [
            "C0", "C1.1", "C2.1", "C2.2", "C2.x", "C3.1", "C3.2", "C3.3", "C3.n", "C3.x",
            "C4.1", "C4.2", "C4.x", "C5.1", "C5.2", "C5.x", "C6.1", "C6.2", "C6.3", "C6.n",
            "C6.x", "C7.1", "C7.x", "C8.1", "C8.2", "C8.x",
        ] {
            let node = case.node(&NodeId::from(id)).unwrap_or_else(|| panic!("missing {id}"));
            assert_eq!(node.kind, NodeKind::Claim);
            assert_eq!(node.status, NodeStatus::Valid);
        }
        assert_eq!(case.version, 1);
        assert_eq!(case.top_claim().unwrap().id, NodeId::from("C0"));
    }

    #[test]
    fn bundled_case_has_no_violations() {
        let case = fixtures::bundled_case();
        assert_eq!(validate_structure(&case), vec![]);
    }

    #[test]
    fn empty_document_is_missing_top_claim() {
        let doc = r#"{"case_id": "empty", "version": 1, "nodes": [], "edges": [], "spi_attachments": []}"#;
        let errs = parse_case(doc).unwrap_err();
        assert!(errs.iter().any(|e| e.code == IssueCode::MissingTopClaim));
    }

    #[test]
    fn two_node_supports_cycle_is_rejected() {
        let doc = mini_case(&[("C0", "C1", "supports", "flag")]);
        let errs = parse_case(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.code == IssueCode::CyclicSupportsGraph));
    }

    #[test]
    fn duplicate_node_id_is_rejected() {
        let doc = serde_json::json!({
            "case_id": "dup", "version": 1,
            "nodes": [
                {"id": "C0", "kind": "claim", "text": "top", "tags": ["top"]},
                {"id": "C0", "kind": "claim", "text": "again", "tags": []},
            ],
            "edges": [], "spi_attachments": []
        })
        .to_string();
        let errs = parse_case(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.code == IssueCode::DuplicateId && e.element == "C0"));
    }

    #[test]
    fn dangling_edge_endpoint_is_rejected() {
        let doc = mini_case(&[("C1", "CX", "supports", "flag")]);
        let errs = parse_case(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.code == IssueCode::DanglingEdgeEndpoint));
    }

    #[test]
    fn unknown_kind_and_policy_are_rejected_with_locations() {
        let doc = serde_json::json!({
            "case_id": "bad", "version": 1,
            "nodes": [
                {"id": "C0", "kind": "claim", "text": "top", "tags": ["top"]},
                {"id": "C1", "kind": "goal", "text": "stranger", "tags": []},
            ],
            "edges": [{"from": "C0", "to": "C0", "rel": "supports", "policy": "explode"}],
            "spi_attachments": []
        })
        .to_string();
        let errs = parse_case(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.code == IssueCode::UnknownKind && e.element == "C1"));
        assert!(errs.iter().any(|e| e.code == IssueCode::UnknownPolicy));
    }

    #[test]
    fn challenges_from_claim_is_flagged() {
        let doc = mini_case(&[("C1", "C0", "challenges", "invalidate")]);
        let errs = parse_case(&doc).unwrap_err();
        assert!(errs.iter().any(|e| e.code == IssueCode::BadChallengesSource));
    }

    #[test]
    fn claim_without_path_to_top_is_flagged() {
        let doc = serde_json::json!({
            "case_id": "floating", "version": 1,
            "nodes": [
                {"id": "C0", "kind": "claim", "text": "top", "tags": ["top"]},
                {"id": "C9.9", "kind": "claim", "text": "floating", "tags": []},
            ],
            "edges": [], "spi_attachments": []
        })
        .to_string();
        let errs = parse_case(&doc).unwrap_err();
        assert!(errs
            .iter()
            .any(|e| e.code == IssueCode::UnreachableFromTop && e.element == "C9.9"));
    }

    #[test]
    fn omitted_policy_defaults_by_edge_shape() {
        let doc = serde_json::json!({
            "case_id": "defaults", "version": 1,
            "nodes": [
                {"id": "C0", "kind": "claim", "text": "top", "tags": ["top"]},
                {"id": "C1", "kind": "claim", "text": "child", "tags": []},
                {"id": "E1", "kind": "evidence", "text": "proof", "tags": []},
            ],
            "edges": [
                {"from": "C1", "to": "C0", "rel": "supports"},
                {"from": "E1", "to": "C1", "rel": "supports"},
            ],
            "spi_attachments": []
        })
        .to_string();
        let case = parse_case(&doc).unwrap();
        let policy_of = |from: &str| {
            case.edges()
                .iter()
                .find(|e| e.from == NodeId::from(from))
                .unwrap()
                .policy
        };
        assert_eq!(policy_of("C1"), PropagationPolicy::Flag);
        assert_eq!(policy_of("E1"), PropagationPolicy::Invalidate);
    }

    #[test]
    fn ancestors_of_c3_1_walk_to_top() {
        let case = fixtures::bundled_case();
        let order = ancestors(&case, &NodeId::from("C3.1")).unwrap();
        assert_eq!(
            order,
            vec![NodeId::from("C2.1"), NodeId::from("C1.1"), NodeId::from("C0")]
        );
    }

    #[test]
    fn ancestors_of_top_is_empty() {
        let case = fixtures::bundled_case();
        assert_eq!(ancestors(&case, &NodeId::from("C0")).unwrap(), vec![]);
    }

    #[test]
    fn ancestors_of_unknown_id_errors() {
        let case = fixtures::bundled_case();
        assert!(ancestors(&case, &NodeId::from("C404")).is_err());
    }

    #[test]
    fn ancestors_with_multiple_parents_end_at_top() {
        let case = fixtures::bundled_case();
        let order = ancestors(&case, &NodeId::from("C5.1")).unwrap();
        assert_eq!(order.last(), Some(&NodeId::from("C0")));
        assert!(order.contains(&NodeId::from("C4.1")));
        assert!(order.contains(&NodeId::from("C4.2")));
        // children precede parents
        let pos = |id: &str| order.iter().position(|n| n == &NodeId::from(id)).unwrap();
        assert!(pos("C4.1") < pos("C3.1"));
        assert!(pos("C4.2") < pos("C3.1"));
        assert!(pos("C3.1") < pos("C2.1"));
    }

    #[test]
    fn serialization_round_trips_byte_identically() {
        let case = fixtures::bundled_case();
        let once = serialize_case(&case);
        let reparsed = parse_case(&once).unwrap();
        assert_eq!(reparsed, case);
        let twice = serialize_case(&reparsed);
        assert_eq!(once, twice);
    }

    #[test]
    fn serialization_is_deterministic() {
        let case = fixtures::bundled_case();
        assert_eq!(serialize_case(&case), serialize_case(&case));
    }

    #[test]
    fn version_and_status_survive_round_trip() {
        let mut case = fixtures::bundled_case();
        case.bump_version();
        case.set_status(&NodeId::from("C2.2"), NodeStatus::Invalidated);
        let text = serialize_case(&case);
        assert!(text.contains("\"version\": 2"));
        let reparsed = parse_case(&text).unwrap();
        assert_eq!(reparsed.version, 2);
        assert_eq!(
            reparsed.node(&NodeId::from("C2.2")).unwrap().status,
            NodeStatus::Invalidated
        );
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        // Random well-formed case: node 0 is the top claim and every
        // later claim supports at least one earlier one.
        fn arb_case() -> impl Strategy<Value = SafetyCase> {
            (2usize..20, any::<u64>()).prop_flat_map(|(n, seed)| {
                let parents: Vec<_> = (1..n).map(move |i| 0..i).collect();
                parents.prop_map(move |parent_of| {
                    let mut rng = seed;
                    let mut nodes = Vec::new();
                    let mut edges = Vec::new();
                    for i in 0..n {
                        let tags: Vec<String> =
                            if i == 0 { vec!["top".into()] } else { vec![] };
                        nodes.push(serde_json::json!({
                            "id": format!("N{i}"),
                            "kind": "claim",
                            "text": format!("claim {i}"),
                            "tags": tags,
                        }));
                    }
                    for (i, p) in parent_of.iter().enumerate() {
                        let policies = ["invalidate", "flag", "spi-gated"];
                        rng = rng.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                        let policy = policies[(rng >> 33) as usize % 3];
                        edges.push(serde_json::json!({
                            "from": format!("N{}", i + 1),
                            "to": format!("N{p}"),
                            "rel": "supports",
                            "policy": policy,
                        }));
                    }
                    let doc = serde_json::json!({
                        "case_id": "prop",
                        "version": 1,
                        "nodes": nodes,
                        "edges": edges,
                        "spi_attachments": [],
                    });
                    parse_case(&doc.to_string()).expect("constructed case is valid")
                })
            })
        }

        proptest! {
            #[test]
            fn parse_serialize_is_identity(case in arb_case()) {
                let text = serialize_case(&case);
                let reparsed = parse_case(&text).unwrap();
                prop_assert_eq!(&reparsed, &case);
                prop_assert_eq!(serialize_case(&reparsed), text);
            }

            #[test]
            fn ancestors_exclude_self_and_stay_in_case(case in arb_case()) {
                for id in case.node_ids() {
                    let anc = ancestors(&case, id).unwrap();
                    prop_assert!(!anc.contains(id));
                    prop_assert!(anc.len() < case.node_ids().count());
                    for a in &anc {
                        prop_assert!(case.node(a).is_some());
                    }
                    if !anc.is_empty() {
                        prop_assert_eq!(anc.last().unwrap(), &NodeId::from("N0"));
                    }
                }
            }

            #[test]
            fn validate_structure_empty_on_parsed_cases(case in arb_case()) {
                prop_assert_eq!(validate_structure(&case), vec![]);
            }
        }
    }
}
