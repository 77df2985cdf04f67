//! On-disk workspace: crash-safe snapshot generations plus the
//! observation and audit files.
//!
//! Every persist writes a complete new snapshot via write-then-rename;
//! load walks generations newest-first and falls back past anything
//! truncated or tampered, so an interrupted persist yields either the
//! previous or the new complete state, never a torn one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use dscms_core::argument::SafetyCase;
use dscms_core::engine::ImpactReport;
use dscms_core::governance::{digest, Alert, AuditLog, GateResult};
use dscms_core::ingest::ObservationStore;
use dscms_core::spi::{SpiCatalog, SpiStatus};
use dscms_core::Timestamp;

pub const OBSERVATIONS_FILE: &str = "observations.jsonl";
pub const AUDIT_FILE: &str = "audit.log";
const SNAPSHOT_DIR: &str = "snapshots";
const KEEP_GENERATIONS: usize = 3;

/// Everything the engine needs from one consistent case version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotBody {
    pub case: SafetyCase,
    pub catalog: SpiCatalog,
    pub loaded_at: Timestamp,
    pub last_check_at: Option<Timestamp>,
    pub statuses: Vec<SpiStatus>,
    pub impact: Option<ImpactReport>,
    pub alert: Option<Alert>,
    pub gates: Vec<GateResult>,
    pub open_recoveries: Vec<String>,
    pub audit_head: String,
    pub observation_count: u64,
    /// Store reference: the observations file backing this snapshot.
    pub observations_file: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotFile {
    digest: String,
    body: SnapshotBody,
}

/// The live state the service mutates; [`Workspace::persist`] writes it
/// out as a snapshot.
#[derive(Debug, Clone)]
pub struct WorkspaceState {
    pub case: SafetyCase,
    pub catalog: SpiCatalog,
    pub store: ObservationStore,
    pub loaded_at: Timestamp,
    pub last_check_at: Option<Timestamp>,
    pub statuses: Vec<SpiStatus>,
    pub impact: Option<ImpactReport>,
    pub alert: Option<Alert>,
    pub gates: Vec<GateResult>,
    pub open_recoveries: Vec<String>,
    pub audit: AuditLog,
}

impl WorkspaceState {
    pub fn fresh(case: SafetyCase, catalog: SpiCatalog, loaded_at: Timestamp) -> Self {
        WorkspaceState {
            case,
            catalog,
            store: ObservationStore::default(),
            loaded_at,
            last_check_at: None,
            statuses: Vec::new(),
            impact: None,
            alert: None,
            gates: Vec::new(),
            open_recoveries: Vec::new(),
            audit: AuditLog::new(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum WorkspaceError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("no loadable snapshot in {0}")]
    NoSnapshot(PathBuf),
    #[error("audit log unreadable: {0}")]
    Audit(#[from] dscms_core::governance::ChainFault),
    #[error("observations unreadable: line {line}: {detail}")]
    Observations { line: usize, detail: String },
}

pub struct Workspace {
    dir: PathBuf,
}

impl Workspace {
    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Workspace { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn exists(&self) -> bool {
        self.snapshot_dir().is_dir()
    }

    fn snapshot_dir(&self) -> PathBuf {
        self.dir.join(SNAPSHOT_DIR)
    }

    fn snapshot_path(&self, generation: u64) -> PathBuf {
        self.snapshot_dir().join(format!("snapshot-{generation:06}.json"))
    }

    fn generations(&self) -> Vec<u64> {
        let mut gens: Vec<u64> = fs::read_dir(self.snapshot_dir())
            .into_iter()
            .flatten()
            .flatten()
            .filter_map(|entry| {
                let name = entry.file_name().to_string_lossy().into_owned();
                name.strip_prefix("snapshot-")?
                    .strip_suffix(".json")?
                    .parse()
                    .ok()
            })
            .collect();
        gens.sort_unstable();
        gens
    }

    fn write_atomic(&self, path: &Path, contents: &str) -> Result<(), WorkspaceError> {
        let tmp = path.with_extension("tmp");
        let io = |source| WorkspaceError::Io {
            path: path.to_path_buf(),
            source,
        };
        fs::write(&tmp, contents).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)?;
        Ok(())
    }

    /// Write the full state: observations, audit log and a new snapshot
    /// generation.
    pub fn persist(&self, state: &WorkspaceState) -> Result<(), WorkspaceError> {
        fs::create_dir_all(self.snapshot_dir()).map_err(|source| WorkspaceError::Io {
            path: self.snapshot_dir(),
            source,
        })?;
        self.write_atomic(&self.dir.join(OBSERVATIONS_FILE), &state.store.to_jsonl())?;
        self.write_atomic(&self.dir.join(AUDIT_FILE), &state.audit.to_jsonl())?;

        let body = SnapshotBody {
            case: state.case.clone(),
            catalog: state.catalog.clone(),
            loaded_at: state.loaded_at,
            last_check_at: state.last_check_at,
            statuses: state.statuses.clone(),
            impact: state.impact.clone(),
            alert: state.alert.clone(),
            gates: state.gates.clone(),
            open_recoveries: state.open_recoveries.clone(),
            audit_head: state.audit.head_digest(),
            observation_count: state.store.len() as u64,
            observations_file: OBSERVATIONS_FILE.to_string(),
        };
        let file = SnapshotFile {
            digest: digest(&body),
            body,
        };
        let text = serde_json::to_string_pretty(&file).expect("snapshot serializes");
        let next = self.generations().last().copied().unwrap_or(0) + 1;
        self.write_atomic(&self.snapshot_path(next), &text)?;

        let gens = self.generations();
        if gens.len() > KEEP_GENERATIONS {
            for stale in &gens[..gens.len() - KEEP_GENERATIONS] {
                let _ = fs::remove_file(self.snapshot_path(*stale));
            }
        }
        Ok(())
    }

    /// Load the newest verifiable snapshot, falling back across
    /// generations past anything truncated or digest-mismatched.
    pub fn load(&self) -> Result<WorkspaceState, WorkspaceError> {
        let mut body: Option<SnapshotBody> = None;
        for generation in self.generations().into_iter().rev() {
            let path = self.snapshot_path(generation);
            let Ok(text) = fs::read_to_string(&path) else {
                continue;
            };
            let Ok(file) = serde_json::from_str::<SnapshotFile>(&text) else {
                continue;
            };
            if digest(&file.body) == file.digest {
                body = Some(file.body);
                break;
            }
        }
        let body = body.ok_or_else(|| WorkspaceError::NoSnapshot(self.dir.clone()))?;

        let store = match fs::read_to_string(self.dir.join(OBSERVATIONS_FILE)) {
            Ok(text) => ObservationStore::from_jsonl(&text).map_err(|issue| {
                WorkspaceError::Observations {
                    line: issue.line,
                    detail: issue.detail,
                }
            })?,
            Err(_) => ObservationStore::default(),
        };
        let audit = match fs::read_to_string(self.dir.join(AUDIT_FILE)) {
            Ok(text) => {
                let log = AuditLog::from_jsonl(&text)?;
                log.verify_chain()?;
                log
            }
            Err(_) => AuditLog::new(),
        };

        Ok(WorkspaceState {
            case: body.case,
            catalog: body.catalog,
            store,
            loaded_at: body.loaded_at,
            last_check_at: body.last_check_at,
            statuses: body.statuses,
            impact: body.impact,
            alert: body.alert,
            gates: body.gates,
            open_recoveries: body.open_recoveries,
            audit,
        })
    }

    /// Truncate the newest snapshot file (test hook for the fallback
    /// discipline).
    pub fn newest_snapshot_path(&self) -> Option<PathBuf> {
        self.generations().last().map(|g| self.snapshot_path(*g))
    }
}
