//! The theory workflows: `theory-sc` (strongly concave sine toy) and
//! `theory-pl` (singular PL toy).
//!
//! Each sweep entry runs SAM-SGA on the noisy oracle from a fresh ω₀,
//! records the full trajectory, and reports the exact primal-gradient trace
//! ‖∇Φ(ω̂_t)‖² with its running average, the potential V_t, the convergence
//! bound evaluated with the declared constants, and the same bound with
//! constants estimated from samples — side by side, so inflated estimates
//! are visible rather than hidden. The aggregate groups entries by (M, b),
//! averages across seeds per T, and fits the log-log decay exponent over
//! the T axis.

use std::path::Path;

use serde::{Deserialize, Serialize};

use zsaq_core::quant::{fit_scale, quantize_dequantize};
use zsaq_core::rng::{stream, Domain};
use zsaq_core::samsga::{run_sam_sga, Ablation, SamSgaConfig};
use zsaq_core::theory::{
    d_delta_sq, estimate_constants, fit_loglog_slope, noise_allowance, phi_gradient_trace,
    pl_condition_check, pl_theorem_steps, potential_trace, running_average, sqrt_schedule_steps,
    terminal_average, theorem_rhs, violation_fraction, EstimatedConstants, MinimaxOracle,
    NoisyMinimax, PlToy, ScToy, TheoremSteps,
};
use rand::Rng;

use crate::config::{RunConfig, Schedule, Workflow};
use crate::error::{CliError, Result};
use crate::runner::{build_entries, run_entries, resolve_out, write_json, SweepEntry};

/// Which synthetic problem a workflow runs.
fn build_oracle(cfg: &RunConfig) -> Result<Box<dyn MinimaxOracle<f64> + Send + Sync>> {
    match cfg.workflow {
        Workflow::TheorySc => Ok(Box::new(ScToy { sigma: cfg.theory.sigma })),
        Workflow::TheoryPl => Ok(Box::new(PlToy::new(
            cfg.theory.d_omega,
            cfg.theory.d_theta,
            cfg.theory.rank_deficiency,
            cfg.theory.sigma,
            cfg.seed,
        )?)),
        other => Err(CliError::Config(format!("{other} is not a theory workflow"))),
    }
}

/// Per-entry convergence statistics recorded in `entry.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TheorySummary {
    /// (1/T)Σ_t ‖∇Φ(ω̂_t)‖² — the bound's left-hand side for this seed.
    pub avg_grad_phi_sq: f64,
    /// Mean over the last 10% of iterates.
    pub terminal_avg: f64,
    /// Bound right-hand side with the declared constants.
    pub theorem_rhs: f64,
    /// Same bound with sampled constant estimates.
    pub theorem_rhs_estimated: f64,
    /// The quantization floor d·Δ² of this entry's fitted grid.
    pub floor_d_delta_sq: f64,
    /// Φ(ω̂₀) − Φ*.
    pub phi0_minus_star: f64,
    /// Grid grain Δ fitted from ω₀.
    pub delta: f64,
    /// Step sizes the schedule actually produced.
    pub eta_omega_used: f64,
    pub eta_theta_used: f64,
    pub beta_used: f64,
    /// Per-step slack the potential-decrease check allows.
    pub noise_allowance: f64,
    /// Fraction of steps where V_{t+1} − V_t exceeded the allowance.
    pub v_violation_fraction: f64,
}

/// Runs one entry and writes its `report.csv` trace.
fn run_theory_entry(
    cfg: &RunConfig,
    oracle: &dyn MinimaxOracle<f64>,
    entry: &SweepEntry,
    dir: &Path,
) -> Result<TheorySummary> {
    let consts = oracle.constants();
    let dw = oracle.omega_dim();

    let mut rng = stream(entry.seed, Domain::OmegaInit, 0, 0);
    let omega0: Vec<f64> = (0..dw)
        .map(|_| rng.gen_range(cfg.theory.omega0_low..cfg.theory.omega0_high))
        .collect();
    let theta0 = vec![0.0; oracle.theta_dim()];

    // The theorem schedule needs Φ(ω̂₀), so fit the same grid the optimizer
    // will fit and project ω₀ onto it up front.
    let scheme = fit_scale(&omega0, entry.bits)?;
    let omega_hat0 = quantize_dequantize(&omega0, &scheme)?;
    let phi0_minus_star = oracle.phi(&omega_hat0) - consts.phi_star;

    let steps: TheoremSteps = match cfg.theory.schedule {
        Schedule::Theorem => pl_theorem_steps(
            consts.l,
            consts.mu,
            phi0_minus_star,
            consts.sigma2,
            entry.batch,
            entry.iters,
        ),
        Schedule::Sqrt => sqrt_schedule_steps(consts.l, cfg.theory.c0, entry.iters),
    };

    let sam_cfg = SamSgaConfig {
        eta_omega: steps.eta_omega,
        eta_theta: steps.eta_theta,
        beta: steps.beta,
        iters: entry.iters,
        batch: entry.batch,
        bits: entry.bits,
        seed: entry.seed,
        ablation: Ablation::Full,
        theta_radius: consts.theta_radius,
        record_trajectory: true,
    };
    let problem = NoisyMinimax::new(oracle);
    let run = run_sam_sga(&problem, &sam_cfg, &omega0, &theta0)?;
    let traj = run.trajectory.as_ref().expect("trajectory was requested");

    // Statistics over the visited iterates ω̂_1 … ω̂_T.
    let omega_hats: Vec<Vec<f64>> = traj[1..].iter().map(|p| p.omega_hat.clone()).collect();
    let thetas: Vec<Vec<f64>> = traj[1..].iter().map(|p| p.theta.clone()).collect();
    let grad_sq = phi_gradient_trace(oracle, &omega_hats);
    let run_avg = running_average(&grad_sq);
    let v_trace = potential_trace(oracle, &omega_hats, &thetas, cfg.theory.alpha);

    let mut csv = String::from("iter,grad_phi_sq,running_avg,v_t\n");
    for t in 0..grad_sq.len() {
        use std::fmt::Write;
        writeln!(csv, "{},{},{},{}", t + 1, grad_sq[t], run_avg[t], v_trace[t])
            .expect("writing to a String cannot fail");
    }
    let path = dir.join("report.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::io(format!("writing {}", path.display()), e))?;

    let delta = run.scheme.grain();
    let est = estimate_constants(oracle, cfg.theory.constant_samples, cfg.seed);
    let allowance = noise_allowance(
        steps.eta_omega,
        steps.eta_theta,
        consts.kappa,
        consts.l,
        consts.sigma2,
        entry.batch,
        dw,
        delta,
    );
    Ok(TheorySummary {
        avg_grad_phi_sq: *run_avg.last().expect("at least one iterate"),
        terminal_avg: terminal_average(&grad_sq),
        theorem_rhs: theorem_rhs(
            phi0_minus_star,
            consts.kappa,
            consts.l,
            consts.sigma2,
            entry.batch,
            entry.iters,
            steps.eta_omega,
            dw,
            delta,
        ),
        theorem_rhs_estimated: theorem_rhs(
            phi0_minus_star,
            est.kappa_hat.unwrap_or(consts.kappa),
            est.l_hat,
            est.sigma2_hat,
            entry.batch,
            entry.iters,
            steps.eta_omega,
            dw,
            delta,
        ),
        floor_d_delta_sq: d_delta_sq(dw, delta),
        phi0_minus_star,
        delta,
        eta_omega_used: steps.eta_omega,
        eta_theta_used: steps.eta_theta,
        beta_used: steps.beta,
        noise_allowance: allowance,
        v_violation_fraction: violation_fraction(&v_trace, allowance),
    })
}

/// Seed-averaged statistics at one T within a (M, b) group.
#[derive(Debug, Serialize)]
struct PerT {
    iters: usize,
    seeds: usize,
    mean_avg_grad_phi_sq: f64,
    mean_terminal_avg: f64,
    mean_theorem_rhs: f64,
    mean_theorem_rhs_estimated: f64,
    mean_floor_d_delta_sq: f64,
    mean_phi0_minus_star: f64,
    mean_v_violation_fraction: f64,
}

/// One (batch, bits) group of the sweep, with its fitted decay exponent.
#[derive(Debug, Serialize)]
struct Group {
    batch: usize,
    bits: u8,
    /// Slope of log mean-avg-‖∇Φ‖² against log T (needs ≥ 2 distinct T).
    fitted_exponent: Option<f64>,
    per_t: Vec<PerT>,
}

/// Runs a theory workflow end to end.
pub fn cmd_theory(
    cfg: &RunConfig,
    out_flag: Option<&Path>,
    jobs: Option<usize>,
    resume: bool,
) -> Result<()> {
    cfg.validate()?;
    let out = resolve_out(cfg, out_flag);
    let oracle = build_oracle(cfg)?;
    let entries = build_entries(cfg, false)?;

    let records = run_entries(cfg, &out, &entries, jobs, resume, |entry, dir| {
        run_theory_entry(cfg, oracle.as_ref(), entry, dir)
    })?;

    // Group by (batch, bits) in order of first appearance; average per T.
    let mut groups: Vec<((usize, u8), Vec<&crate::runner::EntryRecord<TheorySummary>>)> =
        Vec::new();
    for record in &records {
        let key = (record.batch, record.bits);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, members)) => members.push(record),
            None => groups.push((key, vec![record])),
        }
    }

    let mut group_rows = Vec::with_capacity(groups.len());
    for ((batch, bits), members) in &groups {
        let mut ts: Vec<usize> = members.iter().map(|r| r.iters).collect();
        ts.sort_unstable();
        ts.dedup();
        let per_t: Vec<PerT> = ts
            .iter()
            .map(|&t| {
                let at_t: Vec<&&crate::runner::EntryRecord<TheorySummary>> =
                    members.iter().filter(|r| r.iters == t).collect();
                let n = at_t.len() as f64;
                let mean = |f: &dyn Fn(&TheorySummary) -> f64| {
                    at_t.iter().map(|r| f(&r.summary)).sum::<f64>() / n
                };
                PerT {
                    iters: t,
                    seeds: at_t.len(),
                    mean_avg_grad_phi_sq: mean(&|s| s.avg_grad_phi_sq),
                    mean_terminal_avg: mean(&|s| s.terminal_avg),
                    mean_theorem_rhs: mean(&|s| s.theorem_rhs),
                    mean_theorem_rhs_estimated: mean(&|s| s.theorem_rhs_estimated),
                    mean_floor_d_delta_sq: mean(&|s| s.floor_d_delta_sq),
                    mean_phi0_minus_star: mean(&|s| s.phi0_minus_star),
                    mean_v_violation_fraction: mean(&|s| s.v_violation_fraction),
                }
            })
            .collect();
        let fitted_exponent = if per_t.len() >= 2 {
            let pts: Vec<(f64, f64)> = per_t
                .iter()
                .map(|row| (row.iters as f64, row.mean_avg_grad_phi_sq))
                .collect();
            let slope = fit_loglog_slope(&pts);
            slope.is_finite().then_some(slope)
        } else {
            None
        };
        group_rows.push(Group { batch: *batch, bits: *bits, fitted_exponent, per_t });
    }

    let consts = oracle.constants();
    let est: EstimatedConstants =
        estimate_constants(oracle.as_ref(), cfg.theory.constant_samples, cfg.seed);
    let pl = pl_condition_check(oracle.as_ref(), consts.mu, cfg.theory.constant_samples, cfg.seed);

    #[derive(Serialize)]
    struct DeclaredOut {
        l: f64,
        mu: f64,
        sigma2: f64,
        kappa: f64,
    }
    #[derive(Serialize)]
    struct EstimatedOut {
        l_hat: f64,
        mu_hat: Option<f64>,
        sigma2_hat: f64,
        kappa_hat: Option<f64>,
    }
    #[derive(Serialize)]
    struct PlOut {
        samples: usize,
        degenerate: usize,
        violations: usize,
        min_ratio: Option<f64>,
    }
    #[derive(Serialize)]
    struct Summary {
        config_hash: String,
        workflow: &'static str,
        fitted_exponent: Option<f64>,
        theorem_rhs: f64,
        theorem_rhs_estimated: f64,
        terminal_avg: f64,
        avg_grad_phi_sq: f64,
        floor_d_delta_sq: f64,
        constants: DeclaredOut,
        constants_estimated: EstimatedOut,
        pl_check: PlOut,
        groups: Vec<Group>,
    }

    // Headline numbers come from the first group's largest T.
    let first = &group_rows[0];
    let head = first
        .per_t
        .iter()
        .max_by_key(|row| row.iters)
        .expect("every group has at least one T");
    let summary = Summary {
        config_hash: cfg.hash_hex(),
        workflow: cfg.workflow.name(),
        fitted_exponent: first.fitted_exponent,
        theorem_rhs: head.mean_theorem_rhs,
        theorem_rhs_estimated: head.mean_theorem_rhs_estimated,
        terminal_avg: head.mean_terminal_avg,
        avg_grad_phi_sq: head.mean_avg_grad_phi_sq,
        floor_d_delta_sq: head.mean_floor_d_delta_sq,
        constants: DeclaredOut {
            l: consts.l,
            mu: consts.mu,
            sigma2: consts.sigma2,
            kappa: consts.kappa,
        },
        constants_estimated: EstimatedOut {
            l_hat: est.l_hat,
            mu_hat: est.mu_hat,
            sigma2_hat: est.sigma2_hat,
            kappa_hat: est.kappa_hat,
        },
        pl_check: PlOut {
            samples: pl.samples,
            degenerate: pl.degenerate,
            violations: pl.violations,
            min_ratio: pl.min_ratio,
        },
        groups: group_rows,
    };
    write_json(&out.join("summary.json"), &summary)
}
