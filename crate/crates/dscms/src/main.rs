//! `dscms` — dynamic safety case management from the command line.
//!
//! Stateful subcommands operate on a workspace directory (the
//! `--workspace` flag, the `DSCMS_WORKSPACE` environment variable, or
//! `./workspace`), initializing it from the bundled cyber-inability
//! case and catalog on first use.

mod ops;
mod server;
mod workspace;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dscms_core::argument::{parse_case, serialize_case};
use dscms_core::engine::RecoveryAction;
use dscms_core::governance::Actor;
use dscms_core::spi::{validate_traceability, SpiCatalog};
use dscms_core::Timestamp;

use ops::OpError;
use workspace::Workspace;

#[derive(Parser)]
#[command(name = "dscms", version, about = "dynamic safety case management")]
struct Cli {
    /// Workspace directory (overrides DSCMS_WORKSPACE).
    #[arg(long, global = true)]
    workspace: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Structurally validate a case document and catalog; exit 0 iff clean.
    Validate {
        /// Case document path.
        case: PathBuf,
        /// Catalog files, or a directory of them.
        catalog: Vec<PathBuf>,
    },
    /// Ingest a line-delimited observation file and run the triggered check.
    Ingest { observations: PathBuf },
    /// Run a consistency check and print the impact report.
    Check {
        /// Evaluation timestamp (defaults to the newest observation).
        #[arg(long)]
        at: Option<Timestamp>,
    },
    /// Replay a bundled scenario end to end and print report and alert.
    Simulate { scenario: String },
    /// Apply a recovery action file atomically, then revalidate.
    Recover {
        actions: PathBuf,
        /// Case version the actions were authored against.
        #[arg(long)]
        expect_version: Option<u64>,
    },
    /// Print the governance report for the current snapshot.
    Report,
    /// Serve the governance API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:7971")]
        addr: std::net::SocketAddr,
        #[arg(long)]
        token_file: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let dir = cli
        .workspace
        .or_else(|| std::env::var_os("DSCMS_WORKSPACE").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("workspace"));
    match run(cli.command, Workspace::at(dir)) {
        Ok(code) => code,
        Err(err) => {
            fail(&err);
            ExitCode::FAILURE
        }
    }
}

/// Machine-readable error record on stderr.
fn fail(err: &dyn std::fmt::Display) {
    eprintln!(
        "{}",
        serde_json::json!({"error": "command-failed", "detail": err.to_string()})
    );
}

fn run(command: Command, workspace: Workspace) -> Result<ExitCode, anyhow::Error> {
    match command {
        Command::Validate { case, catalog } => validate(&case, &catalog),
        Command::Ingest { observations } => {
            let text = std::fs::read_to_string(&observations)?;
            let mut state = ops::load_or_init(&workspace, None)?;
            let outcome = ops::run_ingest(&workspace, &mut state, &text, Actor::System)?;
            for issue in &outcome.issues {
                eprintln!("{}", serde_json::to_string(issue)?);
            }
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { at } => {
            let mut state = ops::load_or_init(&workspace, None)?;
            let summary = ops::run_check(&workspace, &mut state, at, Actor::System)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Simulate { scenario } => {
            // fresh workspaces anchor catalog freshness at the scenario
            // trigger so replays are reproducible
            let loaded_at = dscms_core::fixtures::scenario(&scenario)
                .ok_or_else(|| OpError::UnknownScenario(scenario.clone()))?
                .trigger_ts();
            let mut state = ops::load_or_init(&workspace, Some(loaded_at))?;
            let outcome = ops::run_simulate(&workspace, &mut state, &scenario, Actor::System)?;
            println!("{}", serde_json::to_string_pretty(&outcome)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Recover {
            actions,
            expect_version,
        } => {
            let text = std::fs::read_to_string(&actions)?;
            let actions: Vec<RecoveryAction> =
                serde_json::from_str(&text).map_err(|e| OpError::Malformed(e.to_string()))?;
            let mut state = ops::load_or_init(&workspace, None)?;
            let recovery =
                ops::run_recover(&workspace, &mut state, &actions, expect_version, Actor::System)?;
            let revalidation = ops::run_revalidate(&workspace, &mut state, Actor::System)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "recovery": recovery,
                    "revalidation": revalidation,
                }))?
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Report => {
            let state = ops::load_or_init(&workspace, None)?;
            print!("{}", ops::build_report(&workspace, &state).to_canonical_json());
            Ok(ExitCode::SUCCESS)
        }
        Command::Serve { addr, token_file } => {
            let doc = std::fs::read_to_string(&token_file)?;
            let auth = server::AuthConfig::from_document(&doc)?;
            let state = ops::load_or_init(&workspace, None)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(server::serve(workspace, state, auth, addr))?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn validate(case_path: &PathBuf, catalog_paths: &[PathBuf]) -> Result<ExitCode, anyhow::Error> {
    let case_text = std::fs::read_to_string(case_path)?;
    let mut clean = true;

    let case = match parse_case(&case_text) {
        Ok(case) => Some(case),
        Err(issues) => {
            for issue in issues {
                eprintln!("{}", serde_json::to_string(&issue)?);
            }
            clean = false;
            None
        }
    };

    let mut catalog_docs = Vec::new();
    for path in expand_catalog_paths(catalog_paths)? {
        catalog_docs.push(std::fs::read_to_string(&path)?);
    }
    let catalog = match SpiCatalog::from_documents(catalog_docs.iter().map(String::as_str)) {
        Ok(catalog) => Some(catalog),
        Err(issues) => {
            for issue in issues {
                eprintln!("{}", serde_json::to_string(&issue)?);
            }
            clean = false;
            None
        }
    };

    let mut warning_count = 0;
    if let (Some(case), Some(catalog)) = (&case, &catalog) {
        let warnings = validate_traceability(case, catalog);
        warning_count = warnings.len();
        for warning in &warnings {
            eprintln!("{}", serde_json::to_string(warning)?);
            clean = false;
        }
        // canonical echo keeps `validate` usable as a formatter
        let _ = serialize_case(case);
    }

    println!(
        "{}",
        serde_json::json!({
            "case": case_path.display().to_string(),
            "structure": if case.is_some() { "ok" } else { "invalid" },
            "catalog": if catalog.is_some() { "ok" } else { "invalid" },
            "spis": catalog.as_ref().map(SpiCatalog::len).unwrap_or(0),
            "traceability_warnings": warning_count,
        })
    );
    Ok(if clean {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}

fn expand_catalog_paths(paths: &[PathBuf]) -> Result<Vec<PathBuf>, std::io::Error> {
    let mut out = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|ext| ext == "json"))
                .collect();
            entries.sort();
            out.extend(entries);
        } else {
            out.push(path.clone());
        }
    }
    Ok(out)
}
