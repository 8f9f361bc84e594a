//! Sweep expansion and the parallel entry runner.
//!
//! A run is a cross-product over the sweep axes (iteration count T, batch
//! size M, width b, master seed, and — for distillation — the student step
//! size grid). Each entry gets its own subdirectory and a JSON record
//! embedding the config hash, which is what makes `--resume` safe: a
//! finished entry is skipped only when its recorded hash matches the
//! present configuration, and a mismatch is a hard error rather than a
//! silent mix of two experiments.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

/// One resolved point of the sweep cross-product.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepEntry {
    /// Position in the fixed expansion order (T outermost, then M, b, seed,
    /// and the step-size grid innermost).
    pub index: usize,
    pub iters: usize,
    pub batch: usize,
    pub bits: u8,
    pub seed: u64,
    pub eta_omega: f64,
    /// Index into the step-size grid when one is in play; names the entry
    /// directory's `_e` suffix.
    pub eta_index: Option<usize>,
}

impl SweepEntry {
    /// Directory name, stable across runs of the same configuration.
    pub fn dir_name(&self) -> String {
        match self.eta_index {
            Some(e) => format!(
                "T{}_M{}_b{}_s{}_e{}",
                self.iters, self.batch, self.bits, self.seed, e
            ),
            None => format!("T{}_M{}_b{}_s{}", self.iters, self.batch, self.bits, self.seed),
        }
    }
}

/// Expands the sweep axes against the base optimizer settings. Empty axes
/// fall back to the single base value; `use_eta_grid` adds the distillation
/// step-size grid as the innermost axis.
pub fn build_entries(cfg: &RunConfig, use_eta_grid: bool) -> Result<Vec<SweepEntry>> {
    let ts = if cfg.sweep.t.is_empty() { vec![cfg.opt.iters] } else { cfg.sweep.t.clone() };
    let ms = if cfg.sweep.m.is_empty() { vec![cfg.opt.batch] } else { cfg.sweep.m.clone() };
    let bs = if cfg.sweep.b.is_empty() { vec![cfg.opt.bits] } else { cfg.sweep.b.clone() };
    let seeds = if cfg.sweep.seeds.is_empty() { vec![cfg.seed] } else { cfg.sweep.seeds.clone() };
    let etas: Vec<(Option<usize>, f64)> = if use_eta_grid && !cfg.zsaq.eta_grid.is_empty() {
        cfg.zsaq.eta_grid.iter().enumerate().map(|(i, &e)| (Some(i), e)).collect()
    } else {
        vec![(None, cfg.opt.eta_omega)]
    };

    let total = ts.len() * ms.len() * bs.len() * seeds.len() * etas.len();
    if total > cfg.sweep.cap {
        return Err(CliError::Config(format!(
            "sweep expands to {total} entries, over the cap of {} (raise sweep.cap to allow this)",
            cfg.sweep.cap
        )));
    }

    let mut entries = Vec::with_capacity(total);
    let mut index = 0;
    for &iters in &ts {
        for &batch in &ms {
            for &bits in &bs {
                for &seed in &seeds {
                    for &(eta_index, eta_omega) in &etas {
                        entries.push(SweepEntry {
                            index,
                            iters,
                            batch,
                            bits,
                            seed,
                            eta_omega,
                            eta_index,
                        });
                        index += 1;
                    }
                }
            }
        }
    }
    Ok(entries)
}

/// The per-entry JSON record: the entry's coordinates, the config hash, and
/// the workflow-specific summary flattened alongside.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntryRecord<S> {
    pub config_hash: String,
    pub iters: usize,
    pub batch: usize,
    pub bits: u8,
    pub seed: u64,
    pub eta_omega: f64,
    #[serde(flatten)]
    pub summary: S,
}

/// Runs every entry (in parallel when `jobs` allows), returning records in
/// expansion order. Failed entries leave no directory behind, so a rerun
/// retries them; `resume` keeps finished entries whose hash matches.
pub fn run_entries<S, F>(
    cfg: &RunConfig,
    out: &Path,
    entries: &[SweepEntry],
    jobs: Option<usize>,
    resume: bool,
    run_one: F,
) -> Result<Vec<EntryRecord<S>>>
where
    S: Serialize + DeserializeOwned + Send,
    F: Fn(&SweepEntry, &Path) -> Result<S> + Sync,
{
    std::fs::create_dir_all(out).map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    let hash = cfg.hash_hex();

    let work = |entry: &SweepEntry| -> Result<EntryRecord<S>> {
        let dir = out.join(entry.dir_name());
        if dir.exists() {
            if resume {
                match read_entry_record::<S>(&dir) {
                    Ok(record) if record.config_hash == hash => return Ok(record),
                    Ok(record) => {
                        return Err(CliError::Config(format!(
                            "refusing to resume {}: recorded config hash {} does not match {}",
                            dir.display(),
                            record.config_hash,
                            hash
                        )))
                    }
                    // Unreadable or partial record: redo the entry.
                    Err(_) => {}
                }
            }
            std::fs::remove_dir_all(&dir)
                .map_err(|e| CliError::io(format!("clearing {}", dir.display()), e))?;
        }
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::io(format!("creating {}", dir.display()), e))?;
        let summary = match run_one(entry, &dir) {
            Ok(s) => s,
            Err(e) => {
                let _ = std::fs::remove_dir_all(&dir);
                return Err(e);
            }
        };
        let record = EntryRecord {
            config_hash: hash.clone(),
            iters: entry.iters,
            batch: entry.batch,
            bits: entry.bits,
            seed: entry.seed,
            eta_omega: entry.eta_omega,
            summary,
        };
        write_json(&dir.join("entry.json"), &record)?;
        Ok(record)
    };

    let results: Vec<Result<EntryRecord<S>>> = match jobs {
        Some(n) if n >= 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
            pool.install(|| entries.par_iter().map(&work).collect())
        }
        Some(_) => return Err(CliError::Config("--jobs must be at least 1".into())),
        None => entries.par_iter().map(&work).collect(),
    };

    let mut records = Vec::with_capacity(results.len());
    for r in results {
        records.push(r?);
    }
    Ok(records)
}

fn read_entry_record<S: DeserializeOwned>(dir: &Path) -> Result<EntryRecord<S>> {
    let path = dir.join("entry.json");
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("parsing {}: {e}", path.display())))
}

/// Serializes pretty JSON with a trailing newline.
pub fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("serializing {}: {e}", path.display())))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Writes text, creating parent directories as needed.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(format!("creating {}", parent.display()), e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Resolves the output directory: the flag wins, then the config, then a
/// per-workflow default under `runs/`.
pub fn resolve_out(cfg: &RunConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.out.clone())
        .unwrap_or_else(|| PathBuf::from("runs").join(cfg.workflow.name()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Workflow;

    #[test]
    fn expansion_order_is_t_m_b_seed_eta() {
        let mut cfg = RunConfig::defaults(Workflow::Zsaq);
        cfg.sweep.t = vec![10, 20];
        cfg.sweep.seeds = vec![1, 2];
        cfg.zsaq.eta_grid = vec![0.1, 0.2];
        let entries = build_entries(&cfg, true).unwrap();
        assert_eq!(entries.len(), 8);
        assert_eq!(entries[0].dir_name(), "T10_M32_b4_s1_e0");
        assert_eq!(entries[1].dir_name(), "T10_M32_b4_s1_e1");
        assert_eq!(entries[2].dir_name(), "T10_M32_b4_s2_e0");
        assert_eq!(entries[4].dir_name(), "T20_M32_b4_s1_e0");
        assert_eq!(entries[7].index, 7);
    }

    #[test]
    fn empty_axes_fall_back_to_base_values() {
        let mut cfg = RunConfig::defaults(Workflow::TheorySc);
        cfg.seed = 9;
        let entries = build_entries(&cfg, false).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].iters, cfg.opt.iters);
        assert_eq!(entries[0].seed, 9);
        assert_eq!(entries[0].eta_index, None);
        assert_eq!(entries[0].dir_name(), "T500_M32_b4_s9");
    }

    #[test]
    fn the_cap_refuses_oversized_sweeps() {
        let mut cfg = RunConfig::defaults(Workflow::TheorySc);
        cfg.sweep.t = (1..=200).collect();
        cfg.sweep.seeds = (0..200).collect();
        let err = build_entries(&cfg, false).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        cfg.sweep.cap = 50_000;
        assert_eq!(build_entries(&cfg, false).unwrap().len(), 40_000);
    }

    #[test]
    fn resume_skips_matching_entries_and_rejects_mismatches() {
        #[derive(Debug, Clone, Serialize, serde::Deserialize, PartialEq)]
        struct Tiny {
            value: f64,
        }
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::defaults(Workflow::TheorySc);
        cfg.sweep.seeds = vec![0, 1];
        let entries = build_entries(&cfg, false).unwrap();

        use std::sync::atomic::{AtomicUsize, Ordering};
        let calls = AtomicUsize::new(0);
        let run = |entry: &SweepEntry, _dir: &Path| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(Tiny { value: entry.seed as f64 })
        };

        let first = run_entries(&cfg, tmp.path(), &entries, Some(1), false, run).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        let second = run_entries(&cfg, tmp.path(), &entries, Some(1), true, run).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2, "resume must not rerun finished entries");
        assert_eq!(first[1].summary, second[1].summary);

        cfg.seed = 77; // changes the hash but not the entry directories
        cfg.sweep.seeds = vec![0, 1];
        let entries = build_entries(&cfg, false).unwrap();
        let err = run_entries(&cfg, tmp.path(), &entries, Some(1), true, run).unwrap_err();
        assert_eq!(err.exit_code(), 2, "hash mismatch on resume is a config error: {err}");
    }

    #[test]
    fn failed_entries_leave_no_directory() {
        #[derive(Debug, Clone, Serialize, serde::Deserialize)]
        struct Tiny {}
        let tmp = tempfile::tempdir().unwrap();
        let cfg = RunConfig::defaults(Workflow::TheorySc);
        let entries = build_entries(&cfg, false).unwrap();
        let run = |_e: &SweepEntry, dir: &Path| -> Result<Tiny> {
            std::fs::write(dir.join("partial.csv"), "x").unwrap();
            Err(CliError::Runtime("synthetic failure".into()))
        };
        let err = run_entries(&cfg, tmp.path(), &entries, Some(1), false, run).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(!tmp.path().join(entries[0].dir_name()).exists());
    }
}
