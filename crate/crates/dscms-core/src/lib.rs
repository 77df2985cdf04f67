//! Dynamic safety case management engine.
//!
//! The crate keeps a machine-checkable safety-argument graph, evaluates
//! safety performance indicators (SPIs) over ingested observation feeds,
//! computes how SPI breaches and artifact changes impact the argument,
//! and drives the governance loop: severity classification, alert
//! routing, decision gates, recovery actions and revalidation.
//!
//! Everything in here is pure over immutable snapshots; persistence,
//! the CLI and the HTTP service live in the `dscms` crate.

pub mod argument;
pub mod engine;
pub mod fixtures;
pub mod governance;
pub mod ingest;
pub mod spi;

/// UTC timestamp used throughout the engine.
pub type Timestamp = chrono::DateTime<chrono::Utc>;
