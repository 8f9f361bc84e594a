//! The `landscape` workflow: held-out loss along the line through two
//! student states of one run.
//!
//! Given checkpoints before and after tuning, the student weights are
//! dequantized and evaluated at w(α) = w_after + α·(w_after − w_before) for
//! α on a symmetric grid over [−1, 1]. The grid has odd length, so α = 0 —
//! exactly the after-state — is always a grid point, which pins the curve to
//! the run's own held-out loss. The two checkpoints must come from the same
//! configuration and carry the same teacher; anything else would plot a
//! line between unrelated coordinate systems.

use std::path::Path;

use serde::Serialize;

use zsaq_core::distill::{gap_on_inputs, make_probe};
use zsaq_core::models::{interpolate_params, MlpDims, TeacherNet};
use zsaq_core::quant::dequantize;
use zsaq_core::ParamVector;

use crate::checkpoint::Checkpoint;
use crate::config::{hex, RunConfig};
use crate::error::{CliError, Result};
use crate::runner::{resolve_out, write_json, write_text};

/// Reconstructs the teacher from a checkpoint's `teacher` net.
fn teacher_from(ck: &Checkpoint, path: &Path) -> Result<TeacherNet<f64>> {
    let net = ck
        .net("teacher")
        .ok_or_else(|| CliError::Config(format!("{} has no \"teacher\" net", path.display())))?;
    let shapes = &net.shapes;
    if shapes.len() != 4 || shapes[0].len() != 2 || shapes[2].len() != 2 {
        return Err(CliError::Config(format!(
            "{}: teacher shapes {:?} are not a two-layer MLP",
            path.display(),
            shapes
        )));
    }
    let dims = MlpDims {
        input: shapes[0][0],
        hidden: shapes[0][1],
        output: shapes[2][1],
    };
    if dims.shapes() != *shapes {
        return Err(CliError::Config(format!(
            "{}: teacher shapes {:?} are internally inconsistent",
            path.display(),
            shapes
        )));
    }
    Ok(TeacherNet { dims, params: net.params.clone() })
}

/// Runs the landscape scan end to end.
pub fn cmd_landscape(cfg: &RunConfig, out_flag: Option<&Path>) -> Result<()> {
    cfg.validate()?;
    let out = resolve_out(cfg, out_flag);
    let before_path = cfg.landscape.before.as_ref().expect("validated");
    let after_path = cfg.landscape.after.as_ref().expect("validated");
    let before = Checkpoint::load(before_path)?;
    let after = Checkpoint::load(after_path)?;

    if before.config_hash != after.config_hash {
        return Err(CliError::Config(format!(
            "checkpoints come from different configurations ({} vs {})",
            hex(&before.config_hash),
            hex(&after.config_hash)
        )));
    }
    let teacher = teacher_from(&after, after_path)?;
    let teacher_b = teacher_from(&before, before_path)?;
    if teacher_b.dims != teacher.dims || teacher_b.params != teacher.params {
        return Err(CliError::Config(
            "checkpoints carry different teachers; the scan needs two states of one run".into(),
        ));
    }

    let quant_b = &before
        .student
        .as_ref()
        .ok_or_else(|| {
            CliError::Config(format!("{} has no student record", before_path.display()))
        })?
        .quant;
    let quant_a = &after
        .student
        .as_ref()
        .ok_or_else(|| {
            CliError::Config(format!("{} has no student record", after_path.display()))
        })?
        .quant;
    if quant_b.scheme != quant_a.scheme {
        return Err(CliError::Config(format!(
            "student schemes differ ({} bits, scale {} vs {} bits, scale {})",
            quant_b.scheme.bits(),
            quant_b.scheme.scale(),
            quant_a.scheme.bits(),
            quant_a.scheme.scale()
        )));
    }
    if quant_b.codes.len() != quant_a.codes.len()
        || quant_a.codes.len() != teacher.dims.param_count()
    {
        return Err(CliError::Config(format!(
            "student sizes disagree: {} and {} codes for a {}-parameter classifier",
            quant_b.codes.len(),
            quant_a.codes.len(),
            teacher.dims.param_count()
        )));
    }

    let w_before = ParamVector::new(dequantize(quant_b));
    let w_after = ParamVector::new(dequantize(quant_a));
    let probe = make_probe::<f64>(cfg.seed, cfg.landscape.probe, teacher.dims.input);

    let points = cfg.landscape.points;
    let mut rows = Vec::with_capacity(points);
    for k in 0..points {
        // Integer midpoint makes α = 0 exact: 2k = points−1 there.
        let alpha = -1.0 + 2.0 * k as f64 / (points - 1) as f64;
        let w = interpolate_params(&w_before, &w_after, alpha)?;
        let loss = gap_on_inputs(&teacher, &w, &probe)?;
        rows.push((alpha, loss));
    }

    let mut csv = String::from("alpha,loss\n");
    for &(alpha, loss) in &rows {
        use std::fmt::Write;
        writeln!(csv, "{alpha},{loss}").expect("writing to a String cannot fail");
    }
    std::fs::create_dir_all(&out)
        .map_err(|e| CliError::io(format!("creating {}", out.display()), e))?;
    write_text(&out.join("landscape.csv"), &csv)?;

    #[derive(Serialize)]
    struct Summary {
        config_hash: String,
        workflow: &'static str,
        checkpoint_hash: String,
        before: String,
        after: String,
        points: usize,
        probe: usize,
        loss_at_zero: f64,
        min_alpha: f64,
        min_loss: f64,
    }
    let (min_alpha, min_loss) = rows
        .iter()
        .copied()
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("losses are finite"))
        .expect("grid is non-empty");
    let loss_at_zero = rows[(points - 1) / 2].1;
    let summary = Summary {
        config_hash: cfg.hash_hex(),
        workflow: cfg.workflow.name(),
        checkpoint_hash: hex(&after.config_hash),
        before: before_path.display().to_string(),
        after: after_path.display().to_string(),
        points,
        probe: cfg.landscape.probe,
        loss_at_zero,
        min_alpha,
        min_loss,
    };
    write_json(&out.join("summary.json"), &summary)
}
