//! Observation ingestion: line-delimited feeds, raw-record mapping and
//! the append-only, deduplicating observation store.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::argument::SpiId;
use crate::spi::{EvidenceSource, SpiCatalog};
use crate::Timestamp;

/// One timestamped metric datum attributed to an evidence source and an
/// indicator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Observation {
    pub spi: SpiId,
    pub ts: Timestamp,
    pub value: f64,
    pub source: EvidenceSource,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

// Whole-record ordering (and therefore equality) so the store can hold
// observations as a set: duplicates collapse and batch order is
// irrelevant.
impl PartialEq for Observation {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Observation {}

impl PartialOrd for Observation {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Observation {
    fn cmp(&self, other: &Self) -> Ordering {
        self.ts
            .cmp(&other.ts)
            .then_with(|| self.spi.cmp(&other.spi))
            .then_with(|| self.value.total_cmp(&other.value))
            .then_with(|| self.source.cmp(&other.source))
            .then_with(|| self.meta.cmp(&other.meta))
    }
}

/// Append-only, time-indexed observation collection with per-SPI
/// retrieval. Content-equal records are stored once.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationStore {
    by_spi: BTreeMap<SpiId, BTreeSet<Observation>>,
}

impl ObservationStore {
    /// Observations for one indicator, ascending by timestamp.
    pub fn for_spi(&self, id: &SpiId) -> Vec<Observation> {
        self.by_spi
            .get(id)
            .map(|set| set.iter().cloned().collect())
            .unwrap_or_default()
    }

    pub fn len(&self) -> usize {
        self.by_spi.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.by_spi.is_empty()
    }

    pub fn spi_ids(&self) -> impl Iterator<Item = &SpiId> {
        self.by_spi.keys()
    }

    /// Line-delimited serialization of the whole store, deterministic.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for set in self.by_spi.values() {
            for obs in set {
                out.push_str(&serde_json::to_string(obs).expect("observation serializes"));
                out.push('\n');
            }
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, ObservationLineIssue> {
        let (observations, issues) = parse_observations(text);
        if let Some(issue) = issues.into_iter().next() {
            return Err(issue);
        }
        let mut store = ObservationStore::default();
        ingest(&mut store, &observations);
        Ok(store)
    }
}

/// Problem with one line of an observation feed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationLineIssue {
    pub line: usize,
    pub detail: String,
}

#[derive(Deserialize)]
struct ObservationDoc {
    ts: String,
    spi: String,
    value: f64,
    source: String,
    #[serde(default)]
    meta: BTreeMap<String, String>,
}

/// Parse a line-delimited observation feed. Bad lines are reported with
/// their 1-based line number and never abort the batch.
pub fn parse_observations(text: &str) -> (Vec<Observation>, Vec<ObservationLineIssue>) {
    let mut observations = Vec::new();
    let mut issues = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let doc: ObservationDoc = match serde_json::from_str(line) {
            Ok(d) => d,
            Err(e) => {
                issues.push(ObservationLineIssue {
                    line: line_no,
                    detail: format!("malformed record: {e}"),
                });
                continue;
            }
        };
        let ts: Timestamp = match doc.ts.parse::<chrono::DateTime<chrono::FixedOffset>>() {
            Ok(t) => t.with_timezone(&chrono::Utc),
            Err(e) => {
                issues.push(ObservationLineIssue {
                    line: line_no,
                    detail: format!("bad timestamp {:?}: {e}", doc.ts),
                });
                continue;
            }
        };
        let source: EvidenceSource =
            match serde_json::from_value(serde_json::Value::String(doc.source.clone())) {
                Ok(s) => s,
                Err(_) => {
                    issues.push(ObservationLineIssue {
                        line: line_no,
                        detail: format!("unknown evidence source {:?}", doc.source),
                    });
                    continue;
                }
            };
        if !doc.value.is_finite() {
            issues.push(ObservationLineIssue {
                line: line_no,
                detail: "value is not finite".to_string(),
            });
            continue;
        }
        observations.push(Observation {
            spi: SpiId(doc.spi),
            ts,
            value: doc.value,
            source,
            meta: doc.meta,
        });
    }
    (observations, issues)
}

/// Routes one class of raw feed records onto a target indicator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedMapping {
    pub source: EvidenceSource,
    /// Field/value pairs a record must carry exactly for this mapping.
    #[serde(rename = "match")]
    pub match_fields: BTreeMap<String, serde_json::Value>,
    pub target_spi: SpiId,
    /// Field holding the observation value; absent means each record
    /// counts as one event.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value_field: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MappingIssue {
    pub mapping: usize,
    pub detail: String,
}

/// Mappings must target indicators the catalog defines.
pub fn validate_mappings(mappings: &[FeedMapping], catalog: &SpiCatalog) -> Vec<MappingIssue> {
    mappings
        .iter()
        .enumerate()
        .filter(|(_, m)| catalog.get(&m.target_spi).is_none())
        .map(|(i, m)| MappingIssue {
            mapping: i,
            detail: format!("target spi {} is not in the catalog", m.target_spi),
        })
        .collect()
}

/// Result of mapping a raw-record batch: one observation per (record,
/// matching mapping) pair, and the indexes of records nothing matched.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedOutcome {
    pub observations: Vec<Observation>,
    pub unmatched: Vec<usize>,
}

/// Map raw feed records to observations. A record may feed several
/// indicators; records matched by nothing are reported, not dropped
/// silently. Records without a parseable `ts` field fall back to
/// `received_at`.
pub fn map_feed(
    records: &[serde_json::Value],
    mappings: &[FeedMapping],
    received_at: Timestamp,
) -> FeedOutcome {
    let mut observations = Vec::new();
    let mut unmatched = Vec::new();
    for (i, record) in records.iter().enumerate() {
        let mut matched = false;
        for mapping in mappings {
            if !mapping
                .match_fields
                .iter()
                .all(|(field, expect)| record.get(field) == Some(expect))
            {
                continue;
            }
            let value = match &mapping.value_field {
                None => 1.0,
                Some(field) => match record.get(field).and_then(serde_json::Value::as_f64) {
                    Some(v) if v.is_finite() => v,
                    _ => continue,
                },
            };
            let ts = record
                .get("ts")
                .and_then(serde_json::Value::as_str)
                .and_then(|s| s.parse::<chrono::DateTime<chrono::FixedOffset>>().ok())
                .map(|t| t.with_timezone(&chrono::Utc))
                .unwrap_or(received_at);
            let meta = record
                .as_object()
                .map(|obj| {
                    obj.iter()
                        .filter(|(k, _)| k.as_str() != "ts")
                        .filter_map(|(k, v)| match v {
                            serde_json::Value::String(s) => Some((k.clone(), s.clone())),
                            serde_json::Value::Number(n) => Some((k.clone(), n.to_string())),
                            serde_json::Value::Bool(b) => Some((k.clone(), b.to_string())),
                            _ => None,
                        })
                        .collect()
                })
                .unwrap_or_default();
            observations.push(Observation {
                spi: mapping.target_spi.clone(),
                ts,
                value,
                source: mapping.source,
                meta,
            });
            matched = true;
        }
        if !matched {
            unmatched.push(i);
        }
    }
    FeedOutcome {
        observations,
        unmatched,
    }
}

/// Receipt for one ingestion batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReceipt {
    pub accepted: u64,
    pub deduplicated: u64,
    /// True when at least one observation was accepted, signalling the
    /// embedding service to run a consistency check.
    pub evaluation_trigger: bool,
}

/// Append a batch to the store. Records already present count as
/// deduplicated and do not trigger re-evaluation.
pub fn ingest(store: &mut ObservationStore, observations: &[Observation]) -> IngestReceipt {
    let mut accepted = 0;
    let mut deduplicated = 0;
    for obs in observations {
        let fresh = store
            .by_spi
            .entry(obs.spi.clone())
            .or_default()
            .insert(obs.clone());
        if fresh {
            accepted += 1;
        } else {
            deduplicated += 1;
        }
    }
    IngestReceipt {
        accepted,
        deduplicated,
        evaluation_trigger: accepted > 0,
    }
}
