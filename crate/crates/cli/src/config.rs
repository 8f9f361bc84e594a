//! Strict TOML run configuration and the canonical config hash.
//!
//! The file is one document with nested sections; any key the schema does
//! not know is a hard error, so a typo can never silently fall back to a
//! default. Every artifact a run emits embeds the SHA-256 of the resolved
//! configuration (output directory excluded — where results land does not
//! change what they are).

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// The five workflows the driver runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Workflow {
    Zsaq,
    Ablation,
    TheorySc,
    TheoryPl,
    Landscape,
}

impl Workflow {
    pub fn name(self) -> &'static str {
        match self {
            Workflow::Zsaq => "zsaq",
            Workflow::Ablation => "ablation",
            Workflow::TheorySc => "theory-sc",
            Workflow::TheoryPl => "theory-pl",
            Workflow::Landscape => "landscape",
        }
    }
}

impl fmt::Display for Workflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Network sizes shared by the teacher, student, and generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetConfig {
    /// Generator input width (Gaussian noise dimension).
    pub noise_dim: usize,
    /// Per-token embedding width produced by the generator.
    pub embed_dim: usize,
    /// Tokens per generated input; the classifier consumes the flattened
    /// `seq_len * embed_dim` vector.
    pub seq_len: usize,
    /// Hidden width of all three MLPs.
    pub hidden: usize,
    /// Class count of the teacher/student heads.
    pub output_dim: usize,
    /// Whether the generator carries the trainable per-token adapter.
    pub adapter: bool,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            noise_dim: 16,
            embed_dim: 16,
            seq_len: 8,
            hidden: 64,
            output_dim: 8,
            adapter: true,
        }
    }
}

impl NetConfig {
    /// Flattened classifier input width.
    pub fn input_dim(&self) -> usize {
        self.seq_len * self.embed_dim
    }
}

/// Teacher pretraining on the synthetic blobs task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TeacherConfig {
    /// Training points (balanced across classes).
    pub train_points: usize,
    /// Per-coordinate Gaussian spread around each class mean.
    pub spread: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    /// Training stops once this train accuracy is reached; never reaching it
    /// is a runtime error.
    pub target_acc: f64,
    /// Load the teacher from this checkpoint instead of training one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        TeacherConfig {
            train_points: 4096,
            spread: 0.3,
            lr: 20.0,
            epochs: 200,
            batch: 128,
            target_acc: 0.95,
            checkpoint: None,
        }
    }
}

/// Base optimizer settings; sweep axes override iters/batch/bits per entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptConfig {
    pub eta_omega: f64,
    pub eta_theta: f64,
    /// SAM perturbation radius; 0 disables the perturbation.
    pub beta: f64,
    /// Iteration count T.
    pub iters: usize,
    /// Batch size M per gradient estimate.
    pub batch: usize,
    /// Quantization width b of the student.
    pub bits: u8,
    /// Euclidean-ball constraint on the generator parameters, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta_radius: Option<f64>,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            eta_omega: 3e-3,
            eta_theta: 5e-2,
            beta: 1e-2,
            iters: 500,
            batch: 32,
            bits: 4,
            theta_radius: None,
        }
    }
}

/// Distillation-workflow extras.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZsaqConfig {
    /// Held-out probe inputs per seed (generator-independent Gaussians).
    pub probe: usize,
    /// Student learning rates to grid-search; the summary reports every run
    /// plus the best. Empty means "just [opt] eta_omega".
    pub eta_grid: Vec<f64>,
}

impl Default for ZsaqConfig {
    fn default() -> Self {
        ZsaqConfig {
            probe: 1024,
            eta_grid: vec![1e-3, 3e-3, 1e-2],
        }
    }
}

/// Step-size rule for theory runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Schedule {
    /// Bound-compliant steps: η_ω = min(1/(128κ²l), √(M(Φ₀−Φ*)/(132Tκ⁴lσ²))),
    /// η_θ = 64κ²η_ω.
    Theorem,
    /// Rate-measurement steps: η_ω = c₀/√T, η_θ = 1/(2l).
    Sqrt,
}

/// Synthetic-minimax workflow settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheoryConfig {
    /// Per-coordinate noise standard deviation of the stochastic oracle.
    pub sigma: f64,
    /// ω₀ coordinates are drawn uniformly from this closed interval.
    pub omega0_low: f64,
    pub omega0_high: f64,
    pub schedule: Schedule,
    /// √T-schedule constant (η_ω = c0/√T).
    pub c0: f64,
    /// Potential-function weight α in V = Φ + α(Φ − f).
    pub alpha: f64,
    /// PL-toy sizes (ignored by the strongly-concave toy).
    pub d_omega: usize,
    pub d_theta: usize,
    pub rank_deficiency: usize,
    /// Sample budget for the side-by-side constant estimation.
    pub constant_samples: usize,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        TheoryConfig {
            sigma: 1.0,
            omega0_low: 0.4,
            omega0_high: 0.7,
            schedule: Schedule::Theorem,
            c0: 0.2,
            alpha: 1.0 / 16.0,
            d_omega: 3,
            d_theta: 4,
            rank_deficiency: 2,
            constant_samples: 2000,
        }
    }
}

/// Loss-landscape interpolation between two checkpoints of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LandscapeConfig {
    /// Checkpoint before tuning (the PTQ state).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub before: Option<PathBuf>,
    /// Checkpoint after tuning.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub after: Option<PathBuf>,
    /// Grid points on α ∈ [−1, 1]; odd so the α = 0 endpoint is present.
    pub points: usize,
    /// Held-out probe inputs.
    pub probe: usize,
}

impl Default for LandscapeConfig {
    fn default() -> Self {
        LandscapeConfig {
            before: None,
            after: None,
            points: 41,
            probe: 1024,
        }
    }
}

/// Sweep axes; empty lists mean "the single value from [opt] / the seed".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    /// Iteration counts.
    #[serde(rename = "T")]
    pub t: Vec<usize>,
    /// Batch sizes.
    #[serde(rename = "M")]
    pub m: Vec<usize>,
    /// Quantization widths.
    #[serde(rename = "b")]
    pub b: Vec<u8>,
    /// Master seeds.
    pub seeds: Vec<u64>,
    /// Hard cap on the cross-product size; raise to run bigger sweeps.
    pub cap: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            t: Vec::new(),
            m: Vec::new(),
            b: Vec::new(),
            seeds: Vec::new(),
            cap: 10_000,
        }
    }
}

/// The resolved run configuration every workflow consumes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub workflow: Workflow,
    #[serde(default)]
    pub seed: u64,
    /// Output directory; `--out` overrides, and the hash ignores it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub opt: OptConfig,
    #[serde(default)]
    pub zsaq: ZsaqConfig,
    #[serde(default)]
    pub theory: TheoryConfig,
    #[serde(default)]
    pub landscape: LandscapeConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

impl RunConfig {
    /// A defaults-only configuration for the given workflow.
    pub fn defaults(workflow: Workflow) -> Self {
        RunConfig {
            workflow,
            seed: 0,
            out: None,
            net: NetConfig::default(),
            teacher: TeacherConfig::default(),
            opt: OptConfig::default(),
            zsaq: ZsaqConfig::default(),
            theory: TheoryConfig::default(),
            landscape: LandscapeConfig::default(),
            sweep: SweepConfig::default(),
        }
    }

    /// Parses a TOML document. A `workflow` key in the file must agree with
    /// the subcommand; when absent, the subcommand fills it in.
    pub fn from_toml(text: &str, workflow: Workflow) -> Result<Self> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        if !table.contains_key("workflow") {
            table.insert(
                "workflow".to_string(),
                toml::Value::String(workflow.name().to_string()),
            );
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| CliError::Config(format!("config parse: {e}")))?;
        if cfg.workflow != workflow {
            return Err(CliError::Config(format!(
                "config declares workflow \"{}\" but the subcommand is \"{}\"",
                cfg.workflow, workflow
            )));
        }
        Ok(cfg)
    }

    /// Loads a file, or defaults when no path is given.
    pub fn load(path: Option<&Path>, workflow: Workflow) -> Result<Self> {
        match path {
            None => Ok(Self::defaults(workflow)),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::io(format!("reading config {}", p.display()), e))?;
                Self::from_toml(&text, workflow)
            }
        }
    }

    /// Full validation; runs before any compute so bad values exit with the
    /// config status rather than failing mid-run.
    pub fn validate(&self) -> Result<()> {
        fn positive(name: &str, x: f64) -> Result<()> {
            if !(x.is_finite() && x > 0.0) {
                return Err(CliError::Config(format!("{name} must be finite and > 0, got {x}")));
            }
            Ok(())
        }
        fn at_least(name: &str, x: usize, min: usize) -> Result<()> {
            if x < min {
                return Err(CliError::Config(format!("{name} must be >= {min}, got {x}")));
            }
            Ok(())
        }
        fn bits_ok(name: &str, b: u8) -> Result<()> {
            if !(2..=32).contains(&b) {
                return Err(CliError::Config(format!("{name} must be in 2..=32, got {b}")));
            }
            Ok(())
        }

        at_least("net.noise_dim", self.net.noise_dim, 1)?;
        at_least("net.embed_dim", self.net.embed_dim, 1)?;
        at_least("net.seq_len", self.net.seq_len, 1)?;
        at_least("net.hidden", self.net.hidden, 1)?;
        at_least("net.output_dim", self.net.output_dim, 2)?;

        at_least("teacher.train_points", self.teacher.train_points, self.net.output_dim)?;
        positive("teacher.spread", self.teacher.spread)?;
        positive("teacher.lr", self.teacher.lr)?;
        at_least("teacher.epochs", self.teacher.epochs, 1)?;
        at_least("teacher.batch", self.teacher.batch, 1)?;
        if !(self.teacher.target_acc > 0.0 && self.teacher.target_acc <= 1.0) {
            return Err(CliError::Config(format!(
                "teacher.target_acc must be in (0, 1], got {}",
                self.teacher.target_acc
            )));
        }

        positive("opt.eta_omega", self.opt.eta_omega)?;
        positive("opt.eta_theta", self.opt.eta_theta)?;
        if !(self.opt.beta.is_finite() && self.opt.beta >= 0.0) {
            return Err(CliError::Config(format!(
                "opt.beta must be finite and >= 0, got {}",
                self.opt.beta
            )));
        }
        at_least("opt.iters", self.opt.iters, 1)?;
        at_least("opt.batch", self.opt.batch, 1)?;
        bits_ok("opt.bits", self.opt.bits)?;
        if let Some(r) = self.opt.theta_radius {
            positive("opt.theta_radius", r)?;
        }

        at_least("zsaq.probe", self.zsaq.probe, 1)?;
        for (i, &eta) in self.zsaq.eta_grid.iter().enumerate() {
            positive(&format!("zsaq.eta_grid[{i}]"), eta)?;
        }

        if !(self.theory.sigma.is_finite() && self.theory.sigma >= 0.0) {
            return Err(CliError::Config(format!(
                "theory.sigma must be finite and >= 0, got {}",
                self.theory.sigma
            )));
        }
        if !(self.theory.omega0_low.is_finite()
            && self.theory.omega0_high.is_finite()
            && self.theory.omega0_low < self.theory.omega0_high)
        {
            return Err(CliError::Config(format!(
                "theory.omega0_low/high must satisfy low < high, got [{}, {}]",
                self.theory.omega0_low, self.theory.omega0_high
            )));
        }
        positive("theory.c0", self.theory.c0)?;
        positive("theory.alpha", self.theory.alpha)?;
        at_least("theory.d_omega", self.theory.d_omega, 1)?;
        at_least("theory.d_theta", self.theory.d_theta, 1)?;
        if self.theory.rank_deficiency >= self.theory.d_theta {
            return Err(CliError::Config(format!(
                "theory.rank_deficiency must leave an active direction: {} >= d_theta {}",
                self.theory.rank_deficiency, self.theory.d_theta
            )));
        }
        at_least("theory.constant_samples", self.theory.constant_samples, 2)?;

        if self.workflow == Workflow::Landscape {
            if self.landscape.before.is_none() || self.landscape.after.is_none() {
                return Err(CliError::Config(
                    "landscape needs both landscape.before and landscape.after checkpoints".into(),
                ));
            }
            if self.landscape.points < 3 || self.landscape.points % 2 == 0 {
                return Err(CliError::Config(format!(
                    "landscape.points must be odd and >= 3 so the grid contains α = 0, got {}",
                    self.landscape.points
                )));
            }
            at_least("landscape.probe", self.landscape.probe, 1)?;
        }

        at_least("sweep.cap", self.sweep.cap, 1)?;
        for (i, &b) in self.sweep.b.iter().enumerate() {
            bits_ok(&format!("sweep.b[{i}]"), b)?;
        }
        for (i, &t) in self.sweep.t.iter().enumerate() {
            at_least(&format!("sweep.T[{i}]"), t, 1)?;
        }
        for (i, &m) in self.sweep.m.iter().enumerate() {
            at_least(&format!("sweep.M[{i}]"), m, 1)?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, output directory excluded.
    pub fn hash_bytes(&self) -> [u8; 32] {
        let mut canon = self.clone();
        canon.out = None;
        let json = serde_json::to_string(&canon).expect("config serializes to JSON");
        let digest = Sha256::digest(json.as_bytes());
        digest.into()
    }

    /// The hash as lowercase hex, the form JSON summaries embed.
    pub fn hash_hex(&self) -> String {
        hex(&self.hash_bytes())
    }
}

/// Lowercase hex of arbitrary bytes.
pub fn hex(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        use std::fmt::Write;
        write!(s, "{b:02x}").expect("writing to a String cannot fail");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected_at_every_level() {
        let top = "workflow = \"zsaq\"\nbogus = 1\n";
        assert!(matches!(
            RunConfig::from_toml(top, Workflow::Zsaq),
            Err(CliError::Config(_))
        ));
        let nested = "[opt]\neta_omege = 0.1\n";
        let err = RunConfig::from_toml(nested, Workflow::Zsaq).unwrap_err();
        assert!(err.to_string().contains("eta_omege"), "{err}");
    }

    #[test]
    fn workflow_mismatch_is_a_config_error() {
        let text = "workflow = \"ablation\"\n";
        assert!(RunConfig::from_toml(text, Workflow::Zsaq).is_err());
        assert!(RunConfig::from_toml(text, Workflow::Ablation).is_ok());
    }

    #[test]
    fn defaults_fill_missing_sections_and_pass_validation() {
        let cfg = RunConfig::from_toml("", Workflow::Zsaq).unwrap();
        assert_eq!(cfg.net.hidden, 64);
        assert_eq!(cfg.opt.iters, 500);
        assert_eq!(cfg.zsaq.eta_grid, vec![1e-3, 3e-3, 1e-2]);
        cfg.validate().unwrap();
    }

    #[test]
    fn hash_ignores_out_but_tracks_seed() {
        let mut a = RunConfig::defaults(Workflow::Zsaq);
        let mut b = a.clone();
        b.out = Some(PathBuf::from("elsewhere"));
        assert_eq!(a.hash_hex(), b.hash_hex());
        a.seed = 1;
        assert_ne!(a.hash_hex(), b.hash_hex());
    }

    #[test]
    fn landscape_validation_requires_paths_and_an_odd_grid() {
        let mut cfg = RunConfig::defaults(Workflow::Landscape);
        assert!(cfg.validate().is_err());
        cfg.landscape.before = Some(PathBuf::from("a.bin"));
        cfg.landscape.after = Some(PathBuf::from("b.bin"));
        cfg.validate().unwrap();
        cfg.landscape.points = 40;
        assert!(cfg.validate().is_err());
    }
}
