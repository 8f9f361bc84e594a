//! SAM-SGA: sharpness-aware minimization alternating with stochastic
//! gradient ascent, under quantize-after-update.
//!
//! One iteration of [`run_sam_sga`] on the game min_ω max_θ f(ω, θ):
//!
//! 1. **Student (descent) phase.** At the dequantized iterate ω̂_t, draw a
//!    batch and compute g₁ = ∇_ω f. Form the sharpness probe
//!    ε* = β·g₁/‖g₁‖₂ (the maximizer of ⟨g₁, ε⟩ over the β-ball), re-evaluate
//!    the same batch at ω̂_t + ε*, and step the latent weights
//!    ω_{t+1} = ω̂_t − η_ω·g₂. The step starts from ω̂_t, not from a kept
//!    latent copy: quantization error never accumulates silently, which is
//!    exactly the regime the O(dΔ²) convergence floor describes.
//! 2. **Requantize.** ω̂_{t+1} = Q(ω_{t+1}) under the scale fitted once at
//!    initialization.
//! 3. **Generator (ascent) phase.** On a fresh batch, θ_{t+1} =
//!    Π_Θ(θ_t + η_θ·∇_θ f(ω̂_t, θ_t)), evaluated at the *pre-update* student
//!    ω̂_t — the two players move simultaneously off the same state.
//!
//! The reported iterate is drawn uniformly from {ω̂_1, …, ω̂_T}, matching the
//! guarantee "E‖∇Φ(ω̂)‖² ≤ RHS" for a uniformly chosen iterate.

use rand::Rng;

use crate::error::{CoreError, Result};
use crate::quant::{dequantize, fit_scale, quantize, QuantScheme, QuantizedVector};
use crate::real::{lit, norm, Real};
use crate::rng::{stream, Domain};

/// Which player a stochastic sample is drawn for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Student,
    Generator,
}

/// Identifies one batch draw: `(seed, iteration, phase)`. Problems derive
/// per-sample streams from it, so both evaluations of the student phase (the
/// clean one and the perturbed one) see the same batch, while the generator
/// phase sees a fresh one.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleKey {
    pub seed: u64,
    pub iteration: u64,
    pub phase: Phase,
}

impl SampleKey {
    /// The random stream for sample `index` of this batch.
    pub fn stream(&self, index: u64) -> rand_chacha::ChaCha8Rng {
        let domain = match self.phase {
            Phase::Student => Domain::StudentBatch,
            Phase::Generator => Domain::GeneratorBatch,
        };
        stream(self.seed, domain, self.iteration, index)
    }
}

/// A stochastic minimax objective f(ω, θ) exposing batch-averaged values and
/// block gradients.
pub trait MinimaxProblem<T: Real> {
    fn omega_dim(&self) -> usize;
    fn theta_dim(&self) -> usize;

    /// Batch-averaged stochastic (f, ∇_ω f) at `(omega, theta)`. The same
    /// key must reproduce the same batch.
    fn value_grad_omega(
        &self,
        omega: &[T],
        theta: &[T],
        key: SampleKey,
        batch: usize,
    ) -> Result<(T, Vec<T>)>;

    /// Batch-averaged stochastic (f, ∇_θ f) at `(omega, theta)`.
    fn value_grad_theta(
        &self,
        omega: &[T],
        theta: &[T],
        key: SampleKey,
        batch: usize,
    ) -> Result<(T, Vec<T>)>;
}

/// The sharpness probe ε* = β·g/‖g‖₂ — the ascent direction that maximizes
/// ⟨g, ε⟩ over ‖ε‖₂ ≤ β. Returns zero when β = 0 or when ‖g‖₂ ≤ 1e-12
/// (below that, the direction g/‖g‖ is numerically meaningless).
pub fn sam_perturbation<T: Real>(grad: &[T], beta: T) -> Vec<T> {
    let n = norm(grad);
    if beta <= T::zero() || n <= lit::<T>(1e-12) {
        return vec![T::zero(); grad.len()];
    }
    let c = beta / n;
    grad.iter().map(|&g| g * c).collect()
}

/// Projects `theta` onto the centered Euclidean ball of the given radius.
pub fn project_ball<T: Real>(theta: &mut [T], radius: T) {
    let n = norm(theta);
    if n > radius {
        let c = radius / n;
        for t in theta.iter_mut() {
            *t *= c;
        }
    }
}

/// Ablation switches for the two players.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Ablation {
    /// SAM on the student, SGA on the generator.
    Full,
    /// Plain SGD on the student (β forced to 0), SGA on the generator.
    NoSam,
    /// SAM on the student, generator frozen.
    NoSga,
    /// Nothing moves: both players frozen (the PTQ baseline with logging).
    Neither,
}

impl Ablation {
    pub fn sam_enabled(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoSga)
    }

    pub fn student_enabled(self) -> bool {
        !matches!(self, Ablation::Neither)
    }

    pub fn generator_enabled(self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoSam)
    }

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::NoSam => "no_sam",
            Ablation::NoSga => "no_sga",
            Ablation::Neither => "neither",
        }
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Hyperparameters of one SAM-SGA run.
#[derive(Debug, Clone, PartialEq)]
pub struct SamSgaConfig<T: Real = f64> {
    /// Student (descent) step size η_ω.
    pub eta_omega: T,
    /// Generator (ascent) step size η_θ.
    pub eta_theta: T,
    /// Sharpness ball radius β.
    pub beta: T,
    /// Number of iterations T.
    pub iters: usize,
    /// Batch size M per gradient estimate.
    pub batch: usize,
    /// Quantizer bit width b.
    pub bits: u8,
    /// Master seed; every stream in the run derives from it.
    pub seed: u64,
    pub ablation: Ablation,
    /// Optional Euclidean ball constraint for θ.
    pub theta_radius: Option<T>,
    /// Record (ω̂_t, ω_t, θ_t) per iteration (needed by the theory lab).
    pub record_trajectory: bool,
}

impl<T: Real> SamSgaConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let finite_nonneg =
            |x: T, what: &str| -> Result<()> {
                if x.is_finite() && x >= T::zero() {
                    Ok(())
                } else {
                    Err(CoreError::Invalid(format!(
                        "{what} must be finite and >= 0, got {x}"
                    )))
                }
            };
        finite_nonneg(self.eta_omega, "eta_omega")?;
        finite_nonneg(self.eta_theta, "eta_theta")?;
        finite_nonneg(self.beta, "beta")?;
        if self.iters == 0 {
            return Err(CoreError::Invalid("iters must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(CoreError::Invalid("batch must be >= 1".into()));
        }
        if !(2..=32).contains(&self.bits) {
            return Err(CoreError::BadBits { bits: self.bits });
        }
        if let Some(r) = self.theta_radius {
            if !(r.is_finite() && r > T::zero()) {
                return Err(CoreError::Invalid(format!(
                    "theta_radius must be finite and > 0, got {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-iteration measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateRow<T: Real = f64> {
    pub iter: usize,
    /// The student's objective: batch loss at the perturbed point
    /// (ω̂_t + ε*, θ_t), student batch. Equals the clean loss when ε* = 0.
    pub student_loss: T,
    /// The generator's objective as a *loss* (it descends −f): the negated
    /// batch loss at (ω̂_t, θ_t), generator batch. Rises toward 0 as the
    /// student closes the gap.
    pub generator_loss: T,
    /// Norm of the applied student gradient g₂ (at ω̂_t + ε*).
    pub grad_norm_omega: T,
    /// Norm of the generator gradient at (ω̂_t, θ_t).
    pub grad_norm_theta: T,
    /// ‖ε*‖₂ — exactly 0 or β.
    pub eps_norm: T,
    /// ‖ω̂_{t+1} − ω_{t+1}‖₂, the live quantization error.
    pub quant_error: T,
}

/// One row per iteration, in order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterateLog<T: Real = f64> {
    pub rows: Vec<IterateRow<T>>,
}

impl<T: Real> IterateLog<T> {
    /// Writes the log as CSV with a fixed header.
    pub fn write_csv(&self, w: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(
            w,
            "iter,student_loss,generator_loss,grad_norm_omega,grad_norm_theta,eps_norm,quant_error"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.iter,
                fmt_f64(r.student_loss),
                fmt_f64(r.generator_loss),
                fmt_f64(r.grad_norm_omega),
                fmt_f64(r.grad_norm_theta),
                fmt_f64(r.eps_norm),
                fmt_f64(r.quant_error),
            )?;
        }
        Ok(())
    }
}

fn fmt_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// State snapshot entering an iteration (plus one final snapshot).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint<T: Real = f64> {
    /// Dequantized iterate ω̂_t.
    pub omega_hat: Vec<T>,
    /// Latent (pre-quantization) iterate ω_t.
    pub omega_latent: Vec<T>,
    /// Generator parameters θ_t.
    pub theta: Vec<T>,
}

/// Everything a finished run exposes.
#[derive(Debug, Clone)]
pub struct RunResult<T: Real = f64> {
    /// The scale fitted once at initialization and used throughout.
    pub scheme: QuantScheme<T>,
    pub final_quant: QuantizedVector<T>,
    pub final_latent: Vec<T>,
    pub final_theta: Vec<T>,
    pub log: IterateLog<T>,
    /// 1-based index of the uniformly drawn reported iterate ω̂_{t*}.
    pub uniform_index: u64,
    /// The reported iterate ω̂_{t*}, t* ~ U{1..T}.
    pub uniform_quant: QuantizedVector<T>,
    /// `iters + 1` snapshots (entering t = 0..T−1, plus the final state);
    /// present iff `record_trajectory` was set.
    pub trajectory: Option<Vec<TrajectoryPoint<T>>>,
}

/// Runs SAM-SGA from `omega0`/`theta0` under `cfg`.
pub fn run_sam_sga<T: Real, P: MinimaxProblem<T> + ?Sized>(
    problem: &P,
    cfg: &SamSgaConfig<T>,
    omega0: &[T],
    theta0: &[T],
) -> Result<RunResult<T>> {
    cfg.validate()?;
    if omega0.len() != problem.omega_dim() {
        return Err(CoreError::DimMismatch {
            op: "run_sam_sga",
            detail: format!(
                "omega0 has dim {}, problem wants {}",
                omega0.len(),
                problem.omega_dim()
            ),
        });
    }
    if theta0.len() != problem.theta_dim() {
        return Err(CoreError::DimMismatch {
            op: "run_sam_sga",
            detail: format!(
                "theta0 has dim {}, problem wants {}",
                theta0.len(),
                problem.theta_dim()
            ),
        });
    }

    let scheme = fit_scale(omega0, cfg.bits)?;
    let mut latent = omega0.to_vec();
    let mut quant = quantize(&latent, &scheme)?;
    let mut theta = theta0.to_vec();
    if let Some(r) = cfg.theta_radius {
        project_ball(&mut theta, r);
    }

    // Reported iterate: t* ~ U{1..T}, ω̂_{t*} is the state after step t*.
    let t_star: u64 = stream(cfg.seed, Domain::UniformIterate, 0, 0).gen_range(0..cfg.iters as u64) + 1;
    let mut uniform_quant = quant.clone();

    let beta_eff = if cfg.ablation.sam_enabled() {
        cfg.beta
    } else {
        T::zero()
    };

    let mut rows = Vec::with_capacity(cfg.iters);
    let mut trajectory = cfg.record_trajectory.then(Vec::new);

    for t in 0..cfg.iters {
        let omega_hat = dequantize(&quant);
        if let Some(traj) = trajectory.as_mut() {
            traj.push(TrajectoryPoint {
                omega_hat: omega_hat.clone(),
                omega_latent: latent.clone(),
                theta: theta.clone(),
            });
        }

        // --- Student phase: two looks at the same batch. ---
        let key_s = SampleKey {
            seed: cfg.seed,
            iteration: t as u64,
            phase: Phase::Student,
        };
        let (v1, g1) = problem.value_grad_omega(&omega_hat, &theta, key_s, cfg.batch)?;
        let eps = sam_perturbation(&g1, beta_eff);
        let eps_norm = norm(&eps);
        let (v2, g2) = if eps_norm > T::zero() {
            let perturbed: Vec<T> = omega_hat.iter().zip(&eps).map(|(&w, &e)| w + e).collect();
            problem.value_grad_omega(&perturbed, &theta, key_s, cfg.batch)?
        } else {
            (v1, g1.clone())
        };
        if cfg.ablation.student_enabled() {
            latent = omega_hat
                .iter()
                .zip(&g2)
                .map(|(&w, &g)| w - cfg.eta_omega * g)
                .collect();
            quant = quantize(&latent, &scheme)?;
        }
        if (t as u64 + 1) == t_star {
            uniform_quant = quant.clone();
        }

        // --- Generator phase: fresh batch, pre-update student ω̂_t. ---
        let key_g = SampleKey {
            seed: cfg.seed,
            iteration: t as u64,
            phase: Phase::Generator,
        };
        let (gv, gtheta) = problem.value_grad_theta(&omega_hat, &theta, key_g, cfg.batch)?;
        if cfg.ablation.generator_enabled() {
            for (th, &g) in theta.iter_mut().zip(&gtheta) {
                *th += cfg.eta_theta * g;
            }
            if let Some(r) = cfg.theta_radius {
                project_ball(&mut theta, r);
            }
        }

        let deq = dequantize(&quant);
        let qerr: T = norm(
            &deq.iter()
                .zip(&latent)
                .map(|(&a, &b)| a - b)
                .collect::<Vec<_>>(),
        );
        rows.push(IterateRow {
            iter: t,
            student_loss: v2,
            generator_loss: -gv,
            grad_norm_omega: norm(&g2),
            grad_norm_theta: norm(&gtheta),
            eps_norm,
            quant_error: qerr,
        });
    }

    if let Some(traj) = trajectory.as_mut() {
        traj.push(TrajectoryPoint {
            omega_hat: dequantize(&quant),
            omega_latent: latent.clone(),
            theta: theta.clone(),
        });
    }

    Ok(RunResult {
        scheme,
        final_quant: quant,
        final_latent: latent,
        final_theta: theta,
        log: IterateLog { rows },
        uniform_index: t_star,
        uniform_quant,
        trajectory,
    })
}
