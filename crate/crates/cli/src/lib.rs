//! Experiment driver for the ZSAQ workspace: strict TOML configuration,
//! deterministic sweeps with resumable entries, binary checkpoints, and the
//! five workflows (`zsaq`, `ablation`, `theory-sc`, `theory-pl`,
//! `landscape`). The binary is a thin argument layer over this library, so
//! tests can call every workflow in process.

pub mod checkpoint;
pub mod config;
pub mod error;
pub mod landscape;
pub mod runner;
pub mod theory_run;
pub mod zsaq_run;

pub use checkpoint::{Checkpoint, NetRecord, StudentRecord};
pub use config::{RunConfig, Workflow};
pub use error::{CliError, Result};
pub use landscape::cmd_landscape;
pub use runner::{build_entries, run_entries, EntryRecord, SweepEntry};
pub use theory_run::cmd_theory;
pub use zsaq_run::{cmd_ablation, cmd_zsaq};
