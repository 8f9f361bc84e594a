//! The distillation workflows: `zsaq` (full pipeline with a step-size grid)
//! and `ablation` (the four optimizer variants on identical setups).
//!
//! Per master seed the driver builds one teacher bundle — blobs data, a
//! pretrained (or checkpoint-loaded) teacher, its train accuracy — shared by
//! every sweep entry with that seed. Per entry it initializes the generator
//! and the PTQ student from keyed streams, runs the game, and writes the
//! iterate log plus before/after checkpoints. Everything derives from
//! `(config, seed)`, so identical invocations produce identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use zsaq_core::distill::{make_probe, run_zsaq, ZsaqOutcome, ZsaqSetup};
use zsaq_core::models::{GenDims, GeneratorNet, MlpDims, StudentNet, TeacherNet};
use zsaq_core::pretrain::{accuracy, make_blobs, train_teacher, Blobs, TeacherTrainConfig};
use zsaq_core::rng::{stream, Domain};
use zsaq_core::samsga::{Ablation, SamSgaConfig};
use zsaq_core::ParamVector;

use crate::checkpoint::{Checkpoint, NetRecord, StudentRecord};
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::runner::{build_entries, run_entries, resolve_out, write_json, write_text, SweepEntry};

/// Classifier sizes from the configuration.
pub fn teacher_dims(cfg: &RunConfig) -> MlpDims {
    MlpDims {
        input: cfg.net.input_dim(),
        hidden: cfg.net.hidden,
        output: cfg.net.output_dim,
    }
}

/// Generator sizes from the configuration.
pub fn gen_dims(cfg: &RunConfig) -> GenDims {
    GenDims {
        noise: cfg.net.noise_dim,
        hidden: cfg.net.hidden,
        seq: cfg.net.seq_len,
        embed: cfg.net.embed_dim,
        adapter: cfg.net.adapter,
    }
}

/// Everything seed-scoped that entries share.
pub struct TeacherBundle {
    pub teacher: TeacherNet<f64>,
    pub acc: f64,
    pub blobs: Blobs<f64>,
}

/// Builds (or loads) the teacher for one seed.
fn prepare_teacher(cfg: &RunConfig, seed: u64) -> Result<TeacherBundle> {
    let dims = teacher_dims(cfg);
    let blobs = make_blobs::<f64>(
        dims.input,
        cfg.net.output_dim,
        cfg.teacher.train_points,
        cfg.teacher.spread,
        seed,
    )?;
    match &cfg.teacher.checkpoint {
        Some(path) => {
            let ck = Checkpoint::load(path)?;
            let net = ck.net("teacher").ok_or_else(|| {
                CliError::Config(format!("{} has no \"teacher\" net", path.display()))
            })?;
            if net.shapes != dims.shapes() {
                return Err(CliError::Config(format!(
                    "teacher checkpoint {} was built for shapes {:?}, the configuration needs {:?}",
                    path.display(),
                    net.shapes,
                    dims.shapes()
                )));
            }
            let teacher = TeacherNet { dims, params: net.params.clone() };
            let acc = accuracy(&teacher.probs(&blobs.x)?, &blobs.labels);
            Ok(TeacherBundle { teacher, acc, blobs })
        }
        None => {
            let train_cfg = TeacherTrainConfig {
                lr: cfg.teacher.lr,
                epochs: cfg.teacher.epochs,
                batch: cfg.teacher.batch,
                target_acc: cfg.teacher.target_acc,
            };
            let (teacher, acc) = train_teacher(&dims, &blobs, &train_cfg, seed)?;
            Ok(TeacherBundle { teacher, acc, blobs })
        }
    }
}

/// One bundle per distinct seed, built in parallel.
pub fn prepare_teachers(
    cfg: &RunConfig,
    entries: &[SweepEntry],
) -> Result<HashMap<u64, Arc<TeacherBundle>>> {
    let mut seeds: Vec<u64> = entries.iter().map(|e| e.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let bundles: Vec<Result<(u64, Arc<TeacherBundle>)>> = seeds
        .par_iter()
        .map(|&seed| prepare_teacher(cfg, seed).map(|b| (seed, Arc::new(b))))
        .collect();
    let mut map = HashMap::new();
    for b in bundles {
        let (seed, bundle) = b?;
        map.insert(seed, bundle);
    }
    Ok(map)
}

/// The six reported metrics of one finished run.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GapMetrics {
    pub ptq_gap: f64,
    pub final_gap: f64,
    pub heldout_gap: f64,
    pub teacher_acc: f64,
    pub student_acc_ptq: f64,
    pub student_acc_final: f64,
}

impl From<&ZsaqOutcome<f64>> for GapMetrics {
    fn from(o: &ZsaqOutcome<f64>) -> Self {
        GapMetrics {
            ptq_gap: o.ptq_gap,
            final_gap: o.final_gap,
            heldout_gap: o.heldout_gap,
            teacher_acc: o.teacher_acc,
            student_acc_ptq: o.student_acc_ptq,
            student_acc_final: o.student_acc_final,
        }
    }
}

/// Runs one game variant for one entry, returning the outcome and the states
/// the checkpoints capture.
fn run_variant(
    cfg: &RunConfig,
    bundle: &TeacherBundle,
    entry: &SweepEntry,
    ablation: Ablation,
) -> Result<(ZsaqOutcome<f64>, StudentNet<f64>, GeneratorNet<f64>)> {
    let gd = gen_dims(cfg);
    let generator =
        GeneratorNet::init(gd, &mut stream(entry.seed, Domain::GeneratorInit, 0, 0));
    let student0 = StudentNet::from_ptq(&bundle.teacher, entry.bits)?;
    let probe = make_probe(entry.seed, cfg.zsaq.probe, bundle.teacher.dims.input);
    let setup = ZsaqSetup {
        teacher: bundle.teacher.clone(),
        teacher_acc: bundle.acc,
        generator: generator.clone(),
        student0: student0.clone(),
        probe,
        train_x: bundle.blobs.x.clone(),
        train_labels: bundle.blobs.labels.clone(),
    };
    let sam_cfg = SamSgaConfig {
        eta_omega: entry.eta_omega,
        eta_theta: cfg.opt.eta_theta,
        beta: cfg.opt.beta,
        iters: entry.iters,
        batch: entry.batch,
        bits: entry.bits,
        seed: entry.seed,
        ablation,
        theta_radius: cfg.opt.theta_radius,
        record_trajectory: false,
    };
    let outcome = run_zsaq(&setup, &sam_cfg)?;
    Ok((outcome, student0, generator))
}

fn write_iterates(path: &Path, outcome: &ZsaqOutcome<f64>) -> Result<()> {
    let mut buf = Vec::new();
    outcome
        .run
        .log
        .write_csv(&mut buf)
        .map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;
    std::fs::write(path, buf).map_err(|e| CliError::io(format!("writing {}", path.display()), e))
}

/// Checkpoint of the PTQ state (before tuning) or the final state.
fn make_checkpoint(
    cfg: &RunConfig,
    teacher: &TeacherNet<f64>,
    latent: ParamVector<f64>,
    quant: zsaq_core::QuantizedVector<f64>,
    gen_params: ParamVector<f64>,
) -> Checkpoint {
    let gd = gen_dims(cfg);
    Checkpoint {
        config_hash: cfg.hash_bytes(),
        nets: vec![
            NetRecord::new("teacher", teacher.dims.shapes(), teacher.params.clone()),
            NetRecord::new("student_latent", teacher.dims.shapes(), latent),
            NetRecord::new("generator", gd.shapes(), gen_params),
        ],
        student: Some(StudentRecord { quant }),
    }
}

/// The `zsaq` workflow: full-variant runs over the sweep (step-size grid
/// included), with per-entry iterate logs and before/after checkpoints.
pub fn cmd_zsaq(
    cfg: &RunConfig,
    out_flag: Option<&Path>,
    jobs: Option<usize>,
    resume: bool,
) -> Result<()> {
    cfg.validate()?;
    let out = resolve_out(cfg, out_flag);
    let entries = build_entries(cfg, true)?;
    let teachers = prepare_teachers(cfg, &entries)?;

    let records = run_entries(cfg, &out, &entries, jobs, resume, |entry, dir| {
        let bundle = &teachers[&entry.seed];
        let (outcome, student0, generator) = run_variant(cfg, bundle, entry, Ablation::Full)?;
        write_iterates(&dir.join("iterates.csv"), &outcome)?;
        make_checkpoint(
            cfg,
            &bundle.teacher,
            student0.latent.clone(),
            student0.quant.clone(),
            generator.params.clone(),
        )
        .save(&dir.join("checkpoint_ptq.bin"))?;
        make_checkpoint(
            cfg,
            &bundle.teacher,
            ParamVector::new(outcome.run.final_latent.clone()),
            outcome.run.final_quant.clone(),
            ParamVector::new(outcome.run.final_theta.clone()),
        )
        .save(&dir.join("checkpoint_final.bin"))?;
        Ok(GapMetrics::from(&outcome))
    })?;

    // Top-level summary: every entry, the mean, and the best entry's metrics
    // pinned at the top level.
    #[derive(Serialize)]
    struct EntryRow<'a> {
        dir: String,
        #[serde(flatten)]
        record: &'a crate::runner::EntryRecord<GapMetrics>,
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        config_hash: String,
        workflow: &'a str,
        ptq_gap: f64,
        final_gap: f64,
        heldout_gap: f64,
        teacher_acc: f64,
        student_acc_ptq: f64,
        student_acc_final: f64,
        best_entry: String,
        mean_heldout_gap: f64,
        entries: Vec<EntryRow<'a>>,
    }

    let best = records
        .iter()
        .zip(&entries)
        .min_by(|a, b| {
            a.0.summary
                .heldout_gap
                .partial_cmp(&b.0.summary.heldout_gap)
                .expect("gaps are finite")
        })
        .expect("at least one entry");
    let mean_heldout =
        records.iter().map(|r| r.summary.heldout_gap).sum::<f64>() / records.len() as f64;
    let summary = Summary {
        config_hash: cfg.hash_hex(),
        workflow: cfg.workflow.name(),
        ptq_gap: best.0.summary.ptq_gap,
        final_gap: best.0.summary.final_gap,
        heldout_gap: best.0.summary.heldout_gap,
        teacher_acc: best.0.summary.teacher_acc,
        student_acc_ptq: best.0.summary.student_acc_ptq,
        student_acc_final: best.0.summary.student_acc_final,
        best_entry: best.1.dir_name(),
        mean_heldout_gap: mean_heldout,
        entries: records
            .iter()
            .zip(&entries)
            .map(|(record, entry)| EntryRow { dir: entry.dir_name(), record })
            .collect(),
    };
    write_json(&out.join("summary.json"), &summary)
}

/// Per-variant metrics of one ablation entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationSummary {
    pub full: GapMetrics,
    pub no_sam: GapMetrics,
    pub no_sga: GapMetrics,
    pub neither: GapMetrics,
}

impl AblationSummary {
    pub fn get(&self, variant: Ablation) -> &GapMetrics {
        match variant {
            Ablation::Full => &self.full,
            Ablation::NoSam => &self.no_sam,
            Ablation::NoSga => &self.no_sga,
            Ablation::Neither => &self.neither,
        }
    }
}

/// Stable lowercase variant names used in file names and CSV rows.
pub fn variant_name(v: Ablation) -> &'static str {
    match v {
        Ablation::Full => "full",
        Ablation::NoSam => "no_sam",
        Ablation::NoSga => "no_sga",
        Ablation::Neither => "neither",
    }
}

pub const VARIANTS: [Ablation; 4] =
    [Ablation::Full, Ablation::NoSam, Ablation::NoSga, Ablation::Neither];

/// The `ablation` workflow: all four variants per entry on identical
/// teacher/generator/student states, plus a cross-entry comparison table.
pub fn cmd_ablation(
    cfg: &RunConfig,
    out_flag: Option<&Path>,
    jobs: Option<usize>,
    resume: bool,
) -> Result<()> {
    cfg.validate()?;
    let out = resolve_out(cfg, out_flag);
    let entries = build_entries(cfg, false)?;
    let teachers = prepare_teachers(cfg, &entries)?;

    let records = run_entries(cfg, &out, &entries, jobs, resume, |entry, dir| {
        let bundle = &teachers[&entry.seed];
        let mut metrics = Vec::with_capacity(4);
        for variant in VARIANTS {
            let (outcome, _, _) = run_variant(cfg, bundle, entry, variant)?;
            let name = format!("iterates_{}.csv", variant_name(variant));
            write_iterates(&dir.join(name), &outcome)?;
            metrics.push(GapMetrics::from(&outcome));
        }
        Ok(AblationSummary {
            full: metrics[0],
            no_sam: metrics[1],
            no_sga: metrics[2],
            neither: metrics[3],
        })
    })?;

    // One row per (variant, entry), variants outermost, entries in sweep
    // order within each variant.
    let mut csv = String::from(
        "variant,seed,iters,batch,bits,eta_omega,ptq_gap,final_gap,heldout_gap,teacher_acc,student_acc_ptq,student_acc_final\n",
    );
    for variant in VARIANTS {
        for record in &records {
            let m = record.summary.get(variant);
            writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{},{},{}",
                variant_name(variant),
                record.seed,
                record.iters,
                record.batch,
                record.bits,
                record.eta_omega,
                m.ptq_gap,
                m.final_gap,
                m.heldout_gap,
                m.teacher_acc,
                m.student_acc_ptq,
                m.student_acc_final
            )
            .expect("writing to a String cannot fail");
        }
    }
    write_text(&out.join("ablation.csv"), &csv)?;

    #[derive(Serialize)]
    struct VariantMeans {
        mean_ptq_gap: f64,
        mean_heldout_gap: f64,
        mean_student_acc_final: f64,
    }
    #[derive(Serialize)]
    struct Summary {
        config_hash: String,
        workflow: &'static str,
        entries: usize,
        full: VariantMeans,
        no_sam: VariantMeans,
        no_sga: VariantMeans,
        neither: VariantMeans,
    }
    let means = |variant: Ablation| {
        let n = records.len() as f64;
        VariantMeans {
            mean_ptq_gap: records.iter().map(|r| r.summary.get(variant).ptq_gap).sum::<f64>() / n,
            mean_heldout_gap: records
                .iter()
                .map(|r| r.summary.get(variant).heldout_gap)
                .sum::<f64>()
                / n,
            mean_student_acc_final: records
                .iter()
                .map(|r| r.summary.get(variant).student_acc_final)
                .sum::<f64>()
                / n,
        }
    };
    let summary = Summary {
        config_hash: cfg.hash_hex(),
        workflow: cfg.workflow.name(),
        entries: records.len(),
        full: means(Ablation::Full),
        no_sam: means(Ablation::NoSam),
        no_sga: means(Ablation::NoSga),
        neither: means(Ablation::Neither),
    };
    write_json(&out.join("summary.json"), &summary)
}
