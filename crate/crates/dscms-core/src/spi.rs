//! Safety performance indicators: catalog, windowed evaluation,
//! breach detection, staleness, prioritization scoring and the
//! leading/lagging gap report.
//!
//! Evaluation is a pure function of `(definition, observations, now)`;
//! breach events are edge-triggered against an explicitly passed
//! previous snapshot so there is no hidden state anywhere.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::Duration;
use serde::{Deserialize, Serialize};

use crate::argument::{NodeId, NodeKind, SafetyCase, SpiId};
use crate::ingest::{Observation, ObservationStore};
use crate::Timestamp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Unit {
    Count,
    Currency,
    Percent,
    Days,
    Qualitative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IndicatorKind {
    Leading,
    Lagging,
}

/// Where the evidence feeding an indicator comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvidenceSource {
    Incidents,
    NearMisses,
    CyberThreatIntelligence,
    ResearchInsights,
    IndustryBodies,
    InternalEvaluations,
    ScalingLaws,
    ExternalEvaluations,
}

/// How observations inside the window collapse into one value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Number of observations in the window.
    CountWindow,
    /// Sum of observation values in the window.
    SumWindow,
    /// Mean of observation values in the window.
    MeanWindow,
    /// Value of the newest observation in the window.
    Latest,
    /// Percent change of the window sum against the preceding window.
    MomPercentChange,
    /// Mean of per-event delays (in days) carried as observation values.
    MeanDeltaDays,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Gte,
    Gt,
    Lte,
    Lt,
}

impl Comparator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Gte => value >= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Lte => value <= threshold,
            Comparator::Lt => value < threshold,
        }
    }
}

/// Either a numeric breach threshold or a trend-only marker. Trend-only
/// indicators never breach; they exist to be watched.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSpec {
    Numeric(f64),
    TrendOnly,
}

impl Serialize for ThresholdSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            ThresholdSpec::Numeric(v) => serializer.serialize_f64(*v),
            ThresholdSpec::TrendOnly => serializer.serialize_str("trend_only"),
        }
    }
}

impl<'de> Deserialize<'de> for ThresholdSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let value = serde_json::Value::deserialize(deserializer)?;
        match &value {
            serde_json::Value::Number(n) => n
                .as_f64()
                .map(ThresholdSpec::Numeric)
                .ok_or_else(|| serde::de::Error::custom("threshold is not a finite number")),
            serde_json::Value::String(s) if s == "trend_only" => Ok(ThresholdSpec::TrendOnly),
            other => Err(serde::de::Error::custom(format!(
                "threshold must be a number or \"trend_only\", got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiDef {
    pub id: SpiId,
    pub claim: NodeId,
    pub title: String,
    pub unit: Unit,
    pub kind: IndicatorKind,
    pub evidence_source: EvidenceSource,
    pub aggregation: Aggregation,
    pub window_days: u32,
    pub comparator: Comparator,
    pub threshold: ThresholdSpec,
    pub update_frequency_days: u32,
}

/// Result of evaluating one indicator at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpiStatus {
    pub spi: SpiId,
    pub value: Option<f64>,
    pub breached: bool,
    pub stale: bool,
    pub evaluated_at: Timestamp,
    pub contributing_observation_count: u64,
}

/// Emitted when an indicator transitions into breach.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreachEvent {
    pub spi: SpiId,
    pub at: Timestamp,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogIssue {
    pub code: CatalogIssueCode,
    pub element: String,
    pub detail: String,
}

impl fmt::Display for CatalogIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} [{}]: {}", self.code, self.element, self.detail)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CatalogIssueCode {
    Malformed,
    DuplicateSpiId,
    BadWindow,
    BadUpdateFrequency,
}

/// The indicator catalog; definitions keyed and iterated by id.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SpiCatalog {
    spis: BTreeMap<SpiId, SpiDef>,
}

impl SpiCatalog {
    /// Load a catalog from one or more documents, each a list of
    /// definitions (one file per claim group in the bundled fixture).
    pub fn from_documents<'a>(docs: impl IntoIterator<Item = &'a str>) -> Result<Self, Vec<CatalogIssue>> {
        let mut issues = Vec::new();
        let mut spis = BTreeMap::new();
        for (i, doc) in docs.into_iter().enumerate() {
            let defs: Vec<SpiDef> = match serde_json::from_str(doc) {
                Ok(d) => d,
                Err(e) => {
                    issues.push(CatalogIssue {
                        code: CatalogIssueCode::Malformed,
                        element: format!("document {i}"),
                        detail: e.to_string(),
                    });
                    continue;
                }
            };
            for def in defs {
                if def.window_days < 1 {
                    issues.push(CatalogIssue {
                        code: CatalogIssueCode::BadWindow,
                        element: def.id.to_string(),
                        detail: "window_days must be at least 1".to_string(),
                    });
                    continue;
                }
                if def.update_frequency_days < 1 {
                    issues.push(CatalogIssue {
                        code: CatalogIssueCode::BadUpdateFrequency,
                        element: def.id.to_string(),
                        detail: "update_frequency_days must be at least 1".to_string(),
                    });
                    continue;
                }
                let id = def.id.clone();
                if spis.insert(id.clone(), def).is_some() {
                    issues.push(CatalogIssue {
                        code: CatalogIssueCode::DuplicateSpiId,
                        element: id.to_string(),
                        detail: "spi id defined more than once".to_string(),
                    });
                }
            }
        }
        if issues.is_empty() {
            Ok(SpiCatalog { spis })
        } else {
            Err(issues)
        }
    }

    pub fn get(&self, id: &SpiId) -> Option<&SpiDef> {
        self.spis.get(id)
    }

    pub fn defs(&self) -> impl Iterator<Item = &SpiDef> {
        self.spis.values()
    }

    pub fn len(&self) -> usize {
        self.spis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spis.is_empty()
    }

    pub fn set_threshold(
        &mut self,
        id: &SpiId,
        threshold: ThresholdSpec,
        comparator: Comparator,
    ) -> bool {
        match self.spis.get_mut(id) {
            Some(def) => {
                def.threshold = threshold;
                def.comparator = comparator;
                true
            }
            None => false,
        }
    }
}

/// Warnings from cross-checking a catalog against a case.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceWarning {
    pub code: TraceWarningCode,
    pub element: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceWarningCode {
    UntracedLeaf,
    DanglingSpiClaim,
}

/// One warning per leaf claim with neither an attached SPI nor supporting
/// evidence, and one per catalog entry naming a claim the case does not
/// have.
pub fn validate_traceability(case: &SafetyCase, catalog: &SpiCatalog) -> Vec<TraceWarning> {
    let mut warnings = Vec::new();
    let attached_claims: BTreeSet<&NodeId> = case.spi_attachments().values().collect();
    for leaf in case.leaf_claims() {
        let has_spi = attached_claims.contains(&leaf.id)
            || catalog.defs().any(|d| d.claim == leaf.id);
        if !has_spi && case.supporting_evidence(&leaf.id).is_empty() {
            warnings.push(TraceWarning {
                code: TraceWarningCode::UntracedLeaf,
                element: leaf.id.to_string(),
            });
        }
    }
    for def in catalog.defs() {
        match case.node(&def.claim) {
            Some(n) if n.kind == NodeKind::Claim => {}
            _ => warnings.push(TraceWarning {
                code: TraceWarningCode::DanglingSpiClaim,
                element: def.id.to_string(),
            }),
        }
    }
    warnings
}

fn window_start(now: Timestamp, days: u32) -> Timestamp {
    now - Duration::days(i64::from(days))
}

fn in_window(ts: Timestamp, start: Timestamp, end: Timestamp) -> bool {
    ts >= start && ts < end
}

/// Percent change of the window sum against the preceding window of the
/// same length; absent when the preceding window sums to zero.
pub fn mom_percent_change(obs: &[Observation], now: Timestamp, window_days: u32) -> Option<f64> {
    let mid = window_start(now, window_days);
    let start = window_start(mid, window_days);
    let current: f64 = obs
        .iter()
        .filter(|o| in_window(o.ts, mid, now))
        .map(|o| o.value)
        .sum();
    let previous: f64 = obs
        .iter()
        .filter(|o| in_window(o.ts, start, mid))
        .map(|o| o.value)
        .sum();
    if previous == 0.0 {
        None
    } else {
        Some(100.0 * (current - previous) / previous)
    }
}

/// Evaluate one indicator over its observations at `now`.
///
/// `catalog_loaded_at` anchors the staleness rule for indicators that
/// have never received an observation.
pub fn evaluate(
    def: &SpiDef,
    obs: &[Observation],
    now: Timestamp,
    catalog_loaded_at: Timestamp,
) -> SpiStatus {
    debug_assert!(obs.windows(2).all(|w| w[0].ts <= w[1].ts), "observations sorted by ts");
    let start = window_start(now, def.window_days);
    let in_win: Vec<&Observation> = obs.iter().filter(|o| in_window(o.ts, start, now)).collect();

    let (value, contributing) = match def.aggregation {
        Aggregation::CountWindow => {
            // A windowed count of an observed stream is zero, not unknown;
            // with no history at all there is nothing to count yet.
            let v = if obs.is_empty() { None } else { Some(in_win.len() as f64) };
            (v, in_win.len() as u64)
        }
        Aggregation::SumWindow => {
            let v = if obs.is_empty() {
                None
            } else {
                Some(in_win.iter().map(|o| o.value).sum())
            };
            (v, in_win.len() as u64)
        }
        Aggregation::MeanWindow | Aggregation::MeanDeltaDays => {
            let v = if in_win.is_empty() {
                None
            } else {
                Some(in_win.iter().map(|o| o.value).sum::<f64>() / in_win.len() as f64)
            };
            (v, in_win.len() as u64)
        }
        Aggregation::Latest => (in_win.last().map(|o| o.value), in_win.len() as u64),
        Aggregation::MomPercentChange => {
            let mid = start;
            let prev_start = window_start(mid, def.window_days);
            let considered = obs
                .iter()
                .filter(|o| in_window(o.ts, prev_start, now))
                .count() as u64;
            (mom_percent_change(obs, now, def.window_days), considered)
        }
    };

    let breached = match (value, def.threshold) {
        (Some(v), ThresholdSpec::Numeric(t)) => def.comparator.holds(v, t),
        _ => false,
    };

    let newest = obs.last().map(|o| o.ts).unwrap_or(catalog_loaded_at);
    let stale = newest < now - Duration::days(i64::from(def.update_frequency_days));

    SpiStatus {
        spi: def.id.clone(),
        value,
        breached,
        stale,
        evaluated_at: now,
        contributing_observation_count: contributing,
    }
}

/// Evaluate the whole catalog. Returns one status per indicator, ordered
/// by id, plus one event per indicator transitioning into breach
/// relative to `previous` (all current breaches when `previous` is
/// `None`).
pub fn evaluate_all(
    catalog: &SpiCatalog,
    store: &ObservationStore,
    now: Timestamp,
    catalog_loaded_at: Timestamp,
    previous: Option<&[SpiStatus]>,
) -> (Vec<SpiStatus>, Vec<BreachEvent>) {
    let prev_breached: BTreeSet<&SpiId> = previous
        .into_iter()
        .flatten()
        .filter(|s| s.breached)
        .map(|s| &s.spi)
        .collect();
    let mut statuses = Vec::with_capacity(catalog.len());
    let mut events = Vec::new();
    for def in catalog.defs() {
        let obs = store.for_spi(&def.id);
        let status = evaluate(def, &obs, now, catalog_loaded_at);
        if status.breached && !prev_breached.contains(&def.id) {
            if let (Some(value), ThresholdSpec::Numeric(threshold)) = (status.value, def.threshold)
            {
                events.push(BreachEvent {
                    spi: def.id.clone(),
                    at: now,
                    value,
                    threshold,
                });
            }
        }
        statuses.push(status);
    }
    (statuses, events)
}

/// Scores in 0..=5 over the six prioritization dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrioritizationScore {
    pub relevance: u8,
    pub claim_importance: u8,
    pub proactive: u8,
    pub measurability: u8,
    pub timeliness: u8,
    pub implementation_feasibility: u8,
}

#[derive(Debug, thiserror::Error)]
#[error("prioritization dimension {dimension} out of range: {value} (must be 0..=5)")]
pub struct OutOfRange {
    pub dimension: &'static str,
    pub value: u8,
}

/// Overall ratings: significance for safety is the mean of the first
/// three dimensions, feasibility of monitoring the mean of the last
/// three.
pub fn prioritize(score: &PrioritizationScore) -> Result<(f64, f64), OutOfRange> {
    let dims = [
        ("relevance", score.relevance),
        ("claim_importance", score.claim_importance),
        ("proactive", score.proactive),
        ("measurability", score.measurability),
        ("timeliness", score.timeliness),
        ("implementation_feasibility", score.implementation_feasibility),
    ];
    for (dimension, value) in dims {
        if value > 5 {
            return Err(OutOfRange { dimension, value });
        }
    }
    let significance =
        f64::from(score.relevance) + f64::from(score.claim_importance) + f64::from(score.proactive);
    let feasibility = f64::from(score.measurability)
        + f64::from(score.timeliness)
        + f64::from(score.implementation_feasibility);
    Ok((significance / 3.0, feasibility / 3.0))
}

/// Difference between what a lagging indicator measured and what its
/// leading counterpart anticipated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapReport {
    pub gap: Option<f64>,
    pub comparable: bool,
}

pub fn leading_lagging_gap(
    leading: (&SpiDef, &SpiStatus),
    lagging: (&SpiDef, &SpiStatus),
) -> GapReport {
    let comparable = leading.0.unit == lagging.0.unit;
    let gap = match (comparable, leading.1.value, lagging.1.value) {
        (true, Some(lead), Some(lag)) => Some(lag - lead),
        _ => None,
    };
    GapReport { gap, comparable }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::ingest;
    use chrono::TimeZone;

    fn ts(s: &str) -> Timestamp {
        s.parse().unwrap()
    }

    fn obs_at(spi: &str, when: &str, value: f64) -> Observation {
        Observation {
            spi: SpiId::from(spi),
            ts: ts(when),
            value,
            source: EvidenceSource::Incidents,
            meta: BTreeMap::new(),
        }
    }

    fn now() -> Timestamp {
        chrono::Utc.with_ymd_and_hms(2025, 3, 1, 0, 0, 0).unwrap()
    }

    fn def(aggregation: Aggregation, comparator: Comparator, threshold: ThresholdSpec) -> SpiDef {
        SpiDef {
            id: SpiId::from("T-SPI-1"),
            claim: NodeId::from("C0"),
            title: "test".to_string(),
            unit: Unit::Count,
            kind: IndicatorKind::Lagging,
            evidence_source: EvidenceSource::Incidents,
            aggregation,
            window_days: 30,
            comparator,
            threshold,
            update_frequency_days: 30,
        }
    }

    #[test]
    fn mttd_example_breaches() {
        // mean delay of 10 days against a 7 day tolerance
        let d = def(Aggregation::MeanDeltaDays, Comparator::Gt, ThresholdSpec::Numeric(7.0));
        let obs = vec![obs_at("T-SPI-1", "2025-02-20T00:00:00Z", 10.0)];
        let status = evaluate(&d, &obs, now(), now());
        assert_eq!(status.value, Some(10.0));
        assert!(status.breached);
        assert!(!status.stale);
    }

    #[test]
    fn empty_window_yields_absent_value_and_no_breach() {
        let d = def(Aggregation::MeanWindow, Comparator::Gte, ThresholdSpec::Numeric(0.0));
        let status = evaluate(&d, &[], now(), now());
        assert_eq!(status.value, None);
        assert!(!status.breached);
        assert_eq!(status.contributing_observation_count, 0);
    }

    #[test]
    fn count_over_history_outside_window_is_zero() {
        let d = def(Aggregation::CountWindow, Comparator::Gt, ThresholdSpec::Numeric(0.0));
        let obs = vec![obs_at("T-SPI-1", "2024-11-01T00:00:00Z", 1.0)];
        let status = evaluate(&d, &obs, now(), now());
        assert_eq!(status.value, Some(0.0));
        assert!(!status.breached);
        assert_eq!(status.contributing_observation_count, 0);
    }

    #[test]
    fn month_on_month_plus_thirty_percent_breaches() {
        let d = def(
            Aggregation::MomPercentChange,
            Comparator::Gte,
            ThresholdSpec::Numeric(10.0),
        );
        let obs = vec![
            obs_at("T-SPI-1", "2025-01-15T00:00:00Z", 100_000.0),
            obs_at("T-SPI-1", "2025-02-15T00:00:00Z", 130_000.0),
        ];
        let status = evaluate(&d, &obs, now(), now());
        assert_eq!(status.value, Some(30.0));
        assert!(status.breached);
    }

    #[test]
    fn mom_percent_change_examples() {
        let prev = obs_at("T-SPI-1", "2025-01-15T00:00:00Z", 10.0);
        let up = vec![prev.clone(), obs_at("T-SPI-1", "2025-02-15T00:00:00Z", 13.0)];
        let down = vec![prev, obs_at("T-SPI-1", "2025-02-15T00:00:00Z", 8.0)];
        let zero_prev = vec![obs_at("T-SPI-1", "2025-02-15T00:00:00Z", 5.0)];
        assert!((mom_percent_change(&up, now(), 30).unwrap() - 30.0).abs() < 1e-9);
        assert!((mom_percent_change(&down, now(), 30).unwrap() - -20.0).abs() < 1e-9);
        assert_eq!(mom_percent_change(&zero_prev, now(), 30), None);
    }

    #[test]
    fn trend_only_never_breaches() {
        let d = def(Aggregation::CountWindow, Comparator::Gte, ThresholdSpec::TrendOnly);
        let obs = vec![obs_at("T-SPI-1", "2025-02-20T00:00:00Z", 100.0)];
        let status = evaluate(&d, &obs, now(), now());
        assert_eq!(status.value, Some(1.0));
        assert!(!status.breached);
    }

    #[test]
    fn staleness_follows_update_frequency() {
        let d = def(Aggregation::CountWindow, Comparator::Gte, ThresholdSpec::Numeric(99.0));
        // newest observation 40 days old, update frequency 30 days
        let obs = vec![obs_at("T-SPI-1", "2025-01-20T00:00:00Z", 1.0)];
        let status = evaluate(&d, &obs, now(), now());
        assert!(status.stale);
        // with no observations the catalog load time anchors freshness
        let fresh = evaluate(&d, &[], now(), now());
        assert!(!fresh.stale);
        let old_load = evaluate(&d, &[], now(), ts("2024-12-01T00:00:00Z"));
        assert!(old_load.stale);
    }

    #[test]
    fn evaluate_is_pure() {
        let d = def(Aggregation::SumWindow, Comparator::Gte, ThresholdSpec::Numeric(5.0));
        let obs = vec![obs_at("T-SPI-1", "2025-02-20T00:00:00Z", 10.0)];
        assert_eq!(evaluate(&d, &obs, now(), now()), evaluate(&d, &obs, now(), now()));
    }

    #[test]
    fn scenario_one_breaches_exactly_the_documented_set() {
        let catalog = fixtures::bundled_catalog();
        let scenario = fixtures::scenario("scenario-1").unwrap();
        let mut store = ObservationStore::default();
        ingest::ingest(&mut store, &scenario.observations());
        let trigger = scenario.trigger_ts();
        let (_, events) = evaluate_all(&catalog, &store, trigger, trigger, None);
        let breached: BTreeSet<String> = events.iter().map(|e| e.spi.to_string()).collect();
        let expected: BTreeSet<String> = [
            "C1.1-SPI-2", "C1.1-SPI-5", "C2.1-SPI-2", "C2.1-SPI-5", "C3.1-SPI-2", "C3.1-SPI-5",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(breached, expected);
    }

    #[test]
    fn empty_store_yields_absent_values_and_no_events() {
        let catalog = fixtures::bundled_catalog();
        let store = ObservationStore::default();
        let (statuses, events) = evaluate_all(&catalog, &store, now(), now(), None);
        assert_eq!(statuses.len(), catalog.len());
        assert!(statuses.iter().all(|s| s.value.is_none() && !s.breached));
        assert!(events.is_empty());
    }

    #[test]
    fn breach_events_are_edge_triggered() {
        let catalog = fixtures::bundled_catalog();
        let scenario = fixtures::scenario("scenario-4").unwrap();
        let mut store = ObservationStore::default();
        ingest::ingest(&mut store, &scenario.observations());
        let trigger = scenario.trigger_ts();
        let (statuses, events) = evaluate_all(&catalog, &store, trigger, trigger, None);
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].spi, SpiId::from("C5.1-SPI-4"));
        let (_, again) = evaluate_all(&catalog, &store, trigger, trigger, Some(&statuses));
        assert!(again.is_empty());
    }

    #[test]
    fn prioritize_examples() {
        let p = |r, c, pr, m, t, i| PrioritizationScore {
            relevance: r,
            claim_importance: c,
            proactive: pr,
            measurability: m,
            timeliness: t,
            implementation_feasibility: i,
        };
        assert_eq!(prioritize(&p(5, 5, 5, 0, 0, 0)).unwrap(), (5.0, 0.0));
        let (sig, feas) = prioritize(&p(5, 3, 0, 5, 3, 0)).unwrap();
        assert!((sig - 8.0 / 3.0).abs() < 1e-9);
        assert!((feas - 8.0 / 3.0).abs() < 1e-9);
        assert_eq!((sig * 100.0).round() / 100.0, 2.67);
        assert_eq!(prioritize(&p(3, 3, 3, 3, 3, 3)).unwrap(), (3.0, 3.0));
        assert!(prioritize(&p(6, 0, 0, 0, 0, 0)).is_err());
    }

    #[test]
    fn gap_report_examples() {
        let lead_def = def(Aggregation::Latest, Comparator::Gte, ThresholdSpec::Numeric(9.0));
        let mut lag_def = lead_def.clone();
        lag_def.kind = IndicatorKind::Lagging;
        let status = |v: Option<f64>| SpiStatus {
            spi: SpiId::from("T-SPI-1"),
            value: v,
            breached: false,
            stale: false,
            evaluated_at: now(),
            contributing_observation_count: 1,
        };
        let report = leading_lagging_gap((&lead_def, &status(Some(3.0))), (&lag_def, &status(Some(5.0))));
        assert_eq!(report, GapReport { gap: Some(2.0), comparable: true });

        let mut percent_def = lag_def.clone();
        percent_def.unit = Unit::Percent;
        let mismatched =
            leading_lagging_gap((&lead_def, &status(Some(3.0))), (&percent_def, &status(Some(5.0))));
        assert_eq!(mismatched, GapReport { gap: None, comparable: false });

        let absent = leading_lagging_gap((&lead_def, &status(Some(3.0))), (&lag_def, &status(None)));
        assert_eq!(absent, GapReport { gap: None, comparable: true });
    }

    #[test]
    fn full_catalog_loads_and_traces_cleanly() {
        let case = fixtures::bundled_case();
        let catalog = fixtures::bundled_catalog();
        assert_eq!(catalog.len(), 161);
        let warnings = validate_traceability(&case, &catalog);
        assert_eq!(warnings, vec![]);
    }

    #[test]
    fn traceability_flags_untraced_leaf_and_dangling_claim() {
        let doc = serde_json::json!({
            "case_id": "trace", "version": 1,
            "nodes": [
                {"id": "C0", "kind": "claim", "text": "top", "tags": ["top"]},
                {"id": "C9.9", "kind": "claim", "text": "bare leaf", "tags": []},
            ],
            "edges": [{"from": "C9.9", "to": "C0", "rel": "supports"}],
            "spi_attachments": []
        })
        .to_string();
        let case = crate::argument::parse_case(&doc).unwrap();
        let catalog_doc = serde_json::json!([{
            "id": "X-SPI-1", "claim": "Cxx", "title": "dangling", "unit": "count",
            "kind": "lagging", "evidence_source": "incidents", "aggregation": "count_window",
            "window_days": 30, "comparator": "gte", "threshold": 1, "update_frequency_days": 30
        }])
        .to_string();
        let catalog = SpiCatalog::from_documents([catalog_doc.as_str()]).unwrap();
        let warnings = validate_traceability(&case, &catalog);
        assert!(warnings.iter().any(
            |w| w.code == TraceWarningCode::UntracedLeaf && w.element == "C9.9"
        ));
        assert!(warnings.iter().any(
            |w| w.code == TraceWarningCode::DanglingSpiClaim && w.element == "X-SPI-1"
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Raising the aggregated value never un-breaches a gte/gt
            // indicator (and symmetrically for lte/lt).
            #[test]
            fn breach_monotone_in_value(
                base in -1e6f64..1e6,
                bump in 0f64..1e6,
                threshold in -1e6f64..1e6,
            ) {
                for (cmp, increasing) in [
                    (Comparator::Gte, true),
                    (Comparator::Gt, true),
                    (Comparator::Lte, false),
                    (Comparator::Lt, false),
                ] {
                    let lo = cmp.holds(base, threshold);
                    let hi = cmp.holds(base + bump, threshold);
                    if increasing {
                        prop_assert!(!lo || hi);
                    } else {
                        prop_assert!(!hi || lo);
                    }
                }
            }

            #[test]
            fn trend_only_never_breaches_any_value(value in -1e9f64..1e9) {
                let d = def(Aggregation::Latest, Comparator::Gte, ThresholdSpec::TrendOnly);
                let obs = vec![obs_at("T-SPI-1", "2025-02-20T00:00:00Z", value)];
                prop_assert!(!evaluate(&d, &obs, now(), now()).breached);
            }

            #[test]
            fn prioritize_outputs_bounded(
                r in 0u8..=5, c in 0u8..=5, p in 0u8..=5,
                m in 0u8..=5, t in 0u8..=5, i in 0u8..=5,
            ) {
                let (sig, feas) = prioritize(&PrioritizationScore {
                    relevance: r, claim_importance: c, proactive: p,
                    measurability: m, timeliness: t, implementation_feasibility: i,
                }).unwrap();
                prop_assert!((0.0..=5.0).contains(&sig));
                prop_assert!((0.0..=5.0).contains(&feas));
            }
        }
    }
}
