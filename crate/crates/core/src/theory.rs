//! Synthetic minimax problems with closed-form envelopes, for validating the
//! optimizer's convergence theory.
//!
//! Both toys expose the primal function Φ(ω) = max_θ f(ω, θ) and its gradient
//! in closed form, so a finished run can be scored against the guarantee
//!
//! ```text
//! (1/T) Σ_t E‖∇Φ(ω̂_t)‖²  ≤  2·√((Φ(ω̂₀) − Φ*)·κ⁴σ²/(M·T)) + C(η_ω)·d·Δ²
//! ```
//!
//! with C(η) = 64κ²l² + 272/η² — the constant produced by telescoping the
//! per-step descent inequality of the potential V_t = Φ(ω̂_t) +
//! (1/16)(Φ(ω̂_t) − f(ω̂_t, θ_t)) and dividing through by η_ω/16. The floor
//! term never vanishes: it is the price of projecting every iterate onto a
//! grid with grain Δ, and shrinks quadratically as bits are added.
//!
//! * [`ScToy`] — f(ω, θ) = sin(ω)·θ − θ²/2 on θ ∈ [−2, 2]: 1-strongly
//!   concave inner problem, Φ(ω) = sin²(ω)/2.
//! * [`PlToy`] — f(ω, θ) = ωᵀBθ − ‖Aθ‖²/2 with singular diagonal A and
//!   range-compatible B: concave but *not* strongly concave, satisfying only
//!   the PL inequality ‖∇_θ f‖² ≥ 2μ·(Φ(ω) − f) with μ = min nonzero a_j².
//!
//! Stochasticity is added by [`NoisyMinimax`]: a per-sample linear term
//! ⟨ξ_ω, ω⟩ + ⟨ξ_θ, θ⟩ with ξ ~ N(0, σ_n²I), giving unbiased gradients with
//! total variance σ² = σ_n²·(d_ω + d_θ) — the σ² the bounds speak about.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CoreError, Result};
use crate::real::{dot, lit, norm, norm_sq, Real};
use crate::rng::{stream, Domain};
use crate::samsga::{project_ball, MinimaxProblem, SampleKey};

/// Constants a problem declares about itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeclaredConstants<T: Real = f64> {
    /// Smoothness constant l (an upper bound on the block Lipschitz
    /// constants of the gradients).
    pub l: T,
    /// PL / strong-concavity constant μ of the inner problem.
    pub mu: T,
    /// Total gradient-noise variance σ² = E‖G − ∇f‖² of a single sample.
    pub sigma2: T,
    /// Condition number κ = l/μ.
    pub kappa: T,
    /// Constraint radius of θ, if the problem has one.
    pub theta_radius: Option<T>,
    /// min_ω Φ(ω), used in Φ(ω̂₀) − Φ*.
    pub phi_star: T,
}

/// A minimax problem with closed-form inner maximizer and primal function.
pub trait MinimaxOracle<T: Real> {
    fn omega_dim(&self) -> usize;
    fn theta_dim(&self) -> usize;

    /// Exact f(ω, θ).
    fn value(&self, omega: &[T], theta: &[T]) -> T;
    /// Exact ∇_ω f.
    fn grad_omega(&self, omega: &[T], theta: &[T]) -> Vec<T>;
    /// Exact ∇_θ f.
    fn grad_theta(&self, omega: &[T], theta: &[T]) -> Vec<T>;

    /// Closed-form argmax_θ f(ω, θ).
    fn theta_star(&self, omega: &[T]) -> Vec<T>;
    /// Closed-form Φ(ω) = max_θ f(ω, θ).
    fn phi(&self, omega: &[T]) -> T;
    /// Closed-form ∇Φ(ω).
    fn grad_phi(&self, omega: &[T]) -> Vec<T>;

    fn constants(&self) -> DeclaredConstants<T>;
    /// Per-coordinate noise standard deviation σ_n of the stochastic oracle.
    fn noise_sigma(&self) -> T;
}

// ---------------------------------------------------------------------------
// Strongly concave toy
// ---------------------------------------------------------------------------

/// f(ω, θ) = sin(ω)·θ − θ²/2 with θ constrained to [−2, 2].
///
/// θ*(ω) = sin(ω) (always interior), Φ(ω) = sin²(ω)/2, ∇Φ = sin·cos.
/// Declared constants: l = 2 (|f_ωω| = |θ·sin ω| ≤ 2 on the constraint set,
/// |f_θθ| = 1, |f_ωθ| ≤ 1), μ = 1, κ = 2, Φ* = 0.
#[derive(Debug, Clone, Copy)]
pub struct ScToy<T: Real = f64> {
    /// Per-coordinate noise standard deviation of the stochastic oracle.
    pub sigma: T,
}

impl<T: Real> MinimaxOracle<T> for ScToy<T> {
    fn omega_dim(&self) -> usize {
        1
    }
    fn theta_dim(&self) -> usize {
        1
    }
    fn value(&self, omega: &[T], theta: &[T]) -> T {
        omega[0].sin() * theta[0] - theta[0] * theta[0] / lit::<T>(2.0)
    }
    fn grad_omega(&self, omega: &[T], theta: &[T]) -> Vec<T> {
        vec![omega[0].cos() * theta[0]]
    }
    fn grad_theta(&self, omega: &[T], theta: &[T]) -> Vec<T> {
        vec![omega[0].sin() - theta[0]]
    }
    fn theta_star(&self, omega: &[T]) -> Vec<T> {
        vec![omega[0].sin()]
    }
    fn phi(&self, omega: &[T]) -> T {
        let s = omega[0].sin();
        s * s / lit::<T>(2.0)
    }
    fn grad_phi(&self, omega: &[T]) -> Vec<T> {
        vec![omega[0].sin() * omega[0].cos()]
    }
    fn constants(&self) -> DeclaredConstants<T> {
        DeclaredConstants {
            l: lit(2.0),
            mu: T::one(),
            sigma2: lit::<T>(2.0) * self.sigma * self.sigma,
            kappa: lit(2.0),
            theta_radius: Some(lit(2.0)),
            phi_star: T::zero(),
        }
    }
    fn noise_sigma(&self) -> T {
        self.sigma
    }
}

// ---------------------------------------------------------------------------
// PL (singular) toy
// ---------------------------------------------------------------------------

/// f(ω, θ) = ωᵀBθ − ‖Aθ‖²/2 with A = diag(a), some a_j = 0, and every
/// column of B that meets a zero a_j identically zero (the range condition
/// Bᵀω ∈ range(AᵀA) for all ω).
///
/// The inner problem is concave but not strongly concave; it satisfies the
/// PL inequality with μ = min nonzero a_j². Closed forms:
/// θ*(ω) = (AᵀA)⁺Bᵀω, Φ(ω) = ½·ωᵀB(AᵀA)⁺Bᵀω, ∇Φ(ω) = B·θ*(ω).
#[derive(Debug, Clone)]
pub struct PlToy<T: Real = f64> {
    /// Diagonal of A, length `d_theta`; zeros make the problem singular.
    a_diag: Vec<T>,
    /// B, row-major `d_omega × d_theta`.
    b: Vec<T>,
    d_omega: usize,
    sigma: T,
}

impl<T: Real> PlToy<T> {
    /// Random instance: the first `d_theta − rank_deficiency` diagonal
    /// entries of A are drawn from U(0.7, 1.3) and the matching B columns
    /// from U(−1, 1); the remaining columns are zero.
    pub fn new(
        d_omega: usize,
        d_theta: usize,
        rank_deficiency: usize,
        sigma: T,
        seed: u64,
    ) -> Result<Self> {
        if rank_deficiency >= d_theta {
            return Err(CoreError::Invalid(format!(
                "rank deficiency {rank_deficiency} leaves no active direction out of {d_theta}"
            )));
        }
        let rank = d_theta - rank_deficiency;
        let mut rng = stream(seed, Domain::ProblemInit, 0, 0);
        let mut a_diag = vec![T::zero(); d_theta];
        for a in a_diag.iter_mut().take(rank) {
            *a = lit(rng.gen_range(0.7..1.3));
        }
        let mut b = vec![T::zero(); d_omega * d_theta];
        for i in 0..d_omega {
            for j in 0..rank {
                b[i * d_theta + j] = lit(rng.gen_range(-1.0..1.0));
            }
        }
        Self::from_parts(a_diag, b, d_omega, sigma)
    }

    /// Builds from explicit parts, rejecting any B column that escapes
    /// range(AᵀA).
    pub fn from_parts(a_diag: Vec<T>, b: Vec<T>, d_omega: usize, sigma: T) -> Result<Self> {
        let d_theta = a_diag.len();
        if b.len() != d_omega * d_theta {
            return Err(CoreError::DimMismatch {
                op: "PlToy::from_parts",
                detail: format!("B has {} entries, want {}", b.len(), d_omega * d_theta),
            });
        }
        for j in 0..d_theta {
            if a_diag[j] == T::zero() {
                for i in 0..d_omega {
                    if b[i * d_theta + j] != T::zero() {
                        return Err(CoreError::Invalid(format!(
                            "B column {j} is outside range(AᵀA): a_{j} = 0 but B[{i},{j}] != 0"
                        )));
                    }
                }
            }
        }
        if !a_diag.iter().any(|&a| a != T::zero()) {
            return Err(CoreError::Invalid("A must have at least one nonzero diagonal entry".into()));
        }
        Ok(Self {
            a_diag,
            b,
            d_omega,
            sigma,
        })
    }

    fn d_theta(&self) -> usize {
        self.a_diag.len()
    }

    /// Bᵀω.
    fn bt_omega(&self, omega: &[T]) -> Vec<T> {
        let dt = self.d_theta();
        let mut out = vec![T::zero(); dt];
        for i in 0..self.d_omega {
            let wi = omega[i];
            for j in 0..dt {
                out[j] += self.b[i * dt + j] * wi;
            }
        }
        out
    }

    /// Bθ.
    fn b_theta(&self, theta: &[T]) -> Vec<T> {
        let dt = self.d_theta();
        let mut out = vec![T::zero(); self.d_omega];
        for i in 0..self.d_omega {
            out[i] = dot(&self.b[i * dt..(i + 1) * dt], theta);
        }
        out
    }
}

impl<T: Real> MinimaxOracle<T> for PlToy<T> {
    fn omega_dim(&self) -> usize {
        self.d_omega
    }
    fn theta_dim(&self) -> usize {
        self.d_theta()
    }
    fn value(&self, omega: &[T], theta: &[T]) -> T {
        let half = lit::<T>(0.5);
        let bilinear = dot(&self.bt_omega(omega), theta);
        let quad: T = self
            .a_diag
            .iter()
            .zip(theta)
            .map(|(&a, &t)| a * a * t * t)
            .sum();
        bilinear - half * quad
    }
    fn grad_omega(&self, _omega: &[T], theta: &[T]) -> Vec<T> {
        self.b_theta(theta)
    }
    fn grad_theta(&self, omega: &[T], theta: &[T]) -> Vec<T> {
        self.bt_omega(omega)
            .into_iter()
            .zip(self.a_diag.iter().zip(theta))
            .map(|(bt, (&a, &t))| bt - a * a * t)
            .collect()
    }
    fn theta_star(&self, omega: &[T]) -> Vec<T> {
        self.bt_omega(omega)
            .into_iter()
            .zip(&self.a_diag)
            .map(|(bt, &a)| if a == T::zero() { T::zero() } else { bt / (a * a) })
            .collect()
    }
    fn phi(&self, omega: &[T]) -> T {
        let half = lit::<T>(0.5);
        let bt = self.bt_omega(omega);
        let s: T = bt
            .iter()
            .zip(&self.a_diag)
            .map(|(&x, &a)| if a == T::zero() { T::zero() } else { x * x / (a * a) })
            .sum();
        half * s
    }
    fn grad_phi(&self, omega: &[T]) -> Vec<T> {
        self.b_theta(&self.theta_star(omega))
    }
    fn constants(&self) -> DeclaredConstants<T> {
        let mu = self
            .a_diag
            .iter()
            .filter(|&&a| a != T::zero())
            .map(|&a| a * a)
            .fold(T::infinity(), T::min);
        let a_max = self
            .a_diag
            .iter()
            .map(|&a| a * a)
            .fold(T::zero(), T::max);
        // ‖B‖₂ ≤ ‖B‖_F is a valid (if loose) cross-smoothness bound.
        let b_frob = norm(&self.b);
        let l = T::max(a_max, b_frob).max(T::one());
        DeclaredConstants {
            l,
            mu,
            sigma2: lit::<T>((self.d_omega + self.d_theta()) as f64) * self.sigma * self.sigma,
            kappa: l / mu,
            theta_radius: None,
            phi_star: T::zero(),
        }
    }
    fn noise_sigma(&self) -> T {
        self.sigma
    }
}

// ---------------------------------------------------------------------------
// Stochastic adapter
// ---------------------------------------------------------------------------

/// Wraps an oracle as a stochastic [`MinimaxProblem`]: each sample adds a
/// random linear term ⟨ξ_ω, ω⟩ + ⟨ξ_θ, θ⟩, ξ ~ N(0, σ_n²I), so gradients
/// are unbiased with per-sample total variance σ_n²(d_ω + d_θ).
#[derive(Debug, Clone, Copy)]
pub struct NoisyMinimax<'a, O: ?Sized> {
    pub oracle: &'a O,
}

impl<'a, O: ?Sized> NoisyMinimax<'a, O> {
    pub fn new(oracle: &'a O) -> Self {
        Self { oracle }
    }
}

/// Batch-mean noise vectors (ξ̄_ω, ξ̄_θ) for a key.
fn oracle_batch_noise<T: Real, O: MinimaxOracle<T> + ?Sized>(
    oracle: &O,
    key: SampleKey,
    m: usize,
) -> (Vec<T>, Vec<T>) {
    let (dw, dt) = (oracle.omega_dim(), oracle.theta_dim());
    let sigma = oracle.noise_sigma();
    let mut xi_w = vec![T::zero(); dw];
    let mut xi_t = vec![T::zero(); dt];
    if sigma > T::zero() {
        for i in 0..m {
            let mut rng = key.stream(i as u64);
            for x in xi_w.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += sigma * lit::<T>(z);
            }
            for x in xi_t.iter_mut() {
                let z: f64 = rng.sample(StandardNormal);
                *x += sigma * lit::<T>(z);
            }
        }
        let inv_m = T::one() / lit::<T>(m as f64);
        xi_w.iter_mut().for_each(|x| *x *= inv_m);
        xi_t.iter_mut().for_each(|x| *x *= inv_m);
    }
    (xi_w, xi_t)
}


impl<T: Real, O: MinimaxOracle<T> + ?Sized> MinimaxProblem<T> for NoisyMinimax<'_, O> {
    fn omega_dim(&self) -> usize {
        self.oracle.omega_dim()
    }
    fn theta_dim(&self) -> usize {
        self.oracle.theta_dim()
    }
    fn value_grad_omega(
        &self,
        omega: &[T],
        theta: &[T],
        key: SampleKey,
        batch: usize,
    ) -> Result<(T, Vec<T>)> {
        let (xi_w, xi_t) = oracle_batch_noise(self.oracle, key, batch);
        let v = self.oracle.value(omega, theta) + dot(&xi_w, omega) + dot(&xi_t, theta);
        let mut g = self.oracle.grad_omega(omega, theta);
        for (gi, &x) in g.iter_mut().zip(&xi_w) {
            *gi += x;
        }
        Ok((v, g))
    }
    fn value_grad_theta(
        &self,
        omega: &[T],
        theta: &[T],
        key: SampleKey,
        batch: usize,
    ) -> Result<(T, Vec<T>)> {
        let (xi_w, xi_t) = oracle_batch_noise(self.oracle, key, batch);
        let v = self.oracle.value(omega, theta) + dot(&xi_w, omega) + dot(&xi_t, theta);
        let mut g = self.oracle.grad_theta(omega, theta);
        for (gi, &x) in g.iter_mut().zip(&xi_t) {
            *gi += x;
        }
        Ok((v, g))
    }
}

// ---------------------------------------------------------------------------
// Condition checks and constant estimation
// ---------------------------------------------------------------------------

/// Outcome of sampling the PL inequality ‖∇_θ f‖² ≥ 2μ(Φ(ω) − f(ω, θ)).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlCheckReport {
    /// Points sampled.
    pub samples: usize,
    /// Points skipped because Φ − f was numerically zero (θ at the max).
    pub degenerate: usize,
    /// Points where the inequality failed (beyond a 1e-5 relative slack).
    pub violations: usize,
    /// min over checked points of ‖∇_θ f‖² / (2(Φ − f)) — an empirical μ.
    pub min_ratio: Option<f64>,
}

/// Samples random (ω, θ) and checks the PL inequality for the given μ.
///
/// ω ~ N(0, I); θ ~ N(0, I), or uniform in the constraint box when the
/// problem declares a radius.
pub fn pl_condition_check<T: Real, O: MinimaxOracle<T> + ?Sized>(
    oracle: &O,
    mu: T,
    samples: usize,
    seed: u64,
) -> PlCheckReport {
    let radius = oracle.constants().theta_radius;
    let mut degenerate = 0;
    let mut violations = 0;
    let mut min_ratio = f64::INFINITY;
    for k in 0..samples {
        let mut rng = stream(seed, Domain::ConstantProbe, 0, k as u64);
        let omega: Vec<T> = (0..oracle.omega_dim())
            .map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        let mut theta: Vec<T> = match radius {
            Some(r) => {
                let rf = r.to_f64().unwrap_or(1.0);
                (0..oracle.theta_dim())
                    .map(|_| lit::<T>(rng.gen_range(-rf..rf)))
                    .collect()
            }
            None => (0..oracle.theta_dim())
                .map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
                .collect(),
        };
        if let Some(r) = radius {
            project_ball(&mut theta, r);
        }
        let gap = oracle.phi(&omega) - oracle.value(&omega, &theta);
        let denom = lit::<T>(2.0) * gap;
        if denom <= lit::<T>(1e-10) {
            degenerate += 1;
            continue;
        }
        let ratio = norm_sq(&oracle.grad_theta(&omega, &theta)) / denom;
        let r64 = ratio.to_f64().unwrap_or(f64::NAN);
        if r64 < min_ratio {
            min_ratio = r64;
        }
        // Slack for algebraically tight cases (ratio == μ): Φ − f cancels
        // catastrophically near θ*(ω), and at the 1e-10 denominator cutoff
        // last-bit noise can depress the ratio by up to ~4e-6 relative.
        if ratio < mu * lit::<T>(1.0 - 1e-5) {
            violations += 1;
        }
    }
    PlCheckReport {
        samples,
        degenerate,
        violations,
        min_ratio: min_ratio.is_finite().then_some(min_ratio),
    }
}

/// Empirical problem constants, measured by sampling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedConstants {
    /// max over sampled pairs of the gradient difference quotient.
    pub l_hat: f64,
    /// min observed PL ratio (None if every sampled point was degenerate).
    pub mu_hat: Option<f64>,
    /// max over sampled points of the single-sample E‖G − ∇f‖².
    pub sigma2_hat: f64,
    /// l_hat / mu_hat.
    pub kappa_hat: Option<f64>,
}

/// Estimates (l, μ, σ², κ) by sampling difference quotients, PL ratios, and
/// the stochastic oracle's deviation from the exact gradients.
pub fn estimate_constants<T: Real, O: MinimaxOracle<T> + ?Sized>(
    oracle: &O,
    samples: usize,
    seed: u64,
) -> EstimatedConstants {
    let (dw, dt) = (oracle.omega_dim(), oracle.theta_dim());
    let gauss = |rng: &mut rand_chacha::ChaCha8Rng, d: usize| -> Vec<T> {
        (0..d)
            .map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
            .collect()
    };

    // Block-Lipschitz difference quotients.
    let mut l_hat = 0.0f64;
    for k in 0..samples {
        let mut rng = stream(seed, Domain::ConstantProbe, 1, k as u64);
        let w1 = gauss(&mut rng, dw);
        let w2 = gauss(&mut rng, dw);
        let t0 = gauss(&mut rng, dt);
        let t1 = gauss(&mut rng, dt);
        let dw_norm = norm(&sub(&w1, &w2));
        if dw_norm > lit::<T>(1e-9) {
            let dg = norm(&sub(
                &oracle.grad_omega(&w1, &t0),
                &oracle.grad_omega(&w2, &t0),
            ));
            l_hat = l_hat.max((dg / dw_norm).to_f64().unwrap_or(0.0));
        }
        let dt_norm = norm(&sub(&t0, &t1));
        if dt_norm > lit::<T>(1e-9) {
            let dg = norm(&sub(
                &oracle.grad_theta(&w1, &t0),
                &oracle.grad_theta(&w1, &t1),
            ));
            l_hat = l_hat.max((dg / dt_norm).to_f64().unwrap_or(0.0));
        }
    }

    // Empirical μ from the PL ratio sweep (μ argument only sets the
    // violation threshold, not the measured minimum).
    let pl = pl_condition_check(oracle, T::zero(), samples, seed);
    let mu_hat = pl.min_ratio;

    // Single-sample gradient noise at a few anchor points.
    let noisy = NoisyMinimax::new(oracle);
    let mut sigma2_hat = 0.0f64;
    let anchors = 4usize.min(samples.max(1));
    let draws = 64usize;
    for a in 0..anchors {
        let mut rng = stream(seed, Domain::ConstantProbe, 2, a as u64);
        let w = gauss(&mut rng, dw);
        let t = gauss(&mut rng, dt);
        let gw = oracle.grad_omega(&w, &t);
        let gt = oracle.grad_theta(&w, &t);
        let mut acc = 0.0f64;
        for j in 0..draws {
            let key = SampleKey {
                seed: seed ^ 0x5eed_c0de,
                iteration: (a * draws + j) as u64,
                phase: crate::samsga::Phase::Student,
            };
            let (_, got_w) = noisy.value_grad_omega(&w, &t, key, 1).expect("noisy oracle");
            let (_, got_t) = noisy.value_grad_theta(&w, &t, key, 1).expect("noisy oracle");
            let dev = norm_sq(&sub(&got_w, &gw)) + norm_sq(&sub(&got_t, &gt));
            acc += dev.to_f64().unwrap_or(0.0);
        }
        sigma2_hat = sigma2_hat.max(acc / draws as f64);
    }

    EstimatedConstants {
        l_hat,
        mu_hat,
        sigma2_hat,
        kappa_hat: mu_hat.map(|m| l_hat / m),
    }
}

fn sub<T: Real>(a: &[T], b: &[T]) -> Vec<T> {
    a.iter().zip(b).map(|(&x, &y)| x - y).collect()
}

/// Maximizes f(ω, ·) by exact gradient ascent with step 1/l until
/// ‖∇_θ f‖ ≤ tol; errors out at `max_iters`.
pub fn solve_inner_max<T: Real, O: MinimaxOracle<T> + ?Sized>(
    oracle: &O,
    omega: &[T],
    tol: T,
    max_iters: usize,
) -> Result<Vec<T>> {
    let consts = oracle.constants();
    let step = T::one() / consts.l;
    let mut theta = vec![T::zero(); oracle.theta_dim()];
    let mut residual = T::infinity();
    for _ in 0..max_iters {
        let g = oracle.grad_theta(omega, &theta);
        residual = norm(&g);
        if residual <= tol {
            return Ok(theta);
        }
        for (t, &gi) in theta.iter_mut().zip(&g) {
            *t += step * gi;
        }
        if let Some(r) = consts.theta_radius {
            project_ball(&mut theta, r);
        }
    }
    Err(CoreError::NoConvergence {
        what: "solve_inner_max",
        cap: max_iters,
        residual: residual.to_f64().unwrap_or(f64::NAN),
    })
}

// ---------------------------------------------------------------------------
// Run scoring: traces, bounds, schedules
// ---------------------------------------------------------------------------

/// ‖∇Φ(ω̂_t)‖² per iterate.
pub fn phi_gradient_trace<T: Real, O: MinimaxOracle<T> + ?Sized>(
    oracle: &O,
    omegas: &[Vec<T>],
) -> Vec<T> {
    omegas
        .iter()
        .map(|w| norm_sq(&oracle.grad_phi(w)))
        .collect()
}

/// Prefix means: out[t] = mean(xs[0..=t]).
pub fn running_average<T: Real>(xs: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = T::zero();
    for (t, &x) in xs.iter().enumerate() {
        acc += x;
        out.push(acc / lit::<T>((t + 1) as f64));
    }
    out
}

/// Mean of the last max(1, ⌈10%⌉) entries — the "terminal plateau" a run
/// settles at, robust to early-transient behavior.
pub fn terminal_average<T: Real>(xs: &[T]) -> T {
    if xs.is_empty() {
        return T::zero();
    }
    let tail = (xs.len() + 9) / 10;
    let slice = &xs[xs.len() - tail..];
    slice.iter().cloned().sum::<T>() / lit::<T>(slice.len() as f64)
}

/// The descent potential V_t = Φ(ω̂_t) + α·(Φ(ω̂_t) − f(ω̂_t, θ_t)) per
/// iterate (α = 1/16 in the analysis).
pub fn potential_trace<T: Real, O: MinimaxOracle<T> + ?Sized>(
    oracle: &O,
    omegas: &[Vec<T>],
    thetas: &[Vec<T>],
    alpha: T,
) -> Vec<T> {
    omegas
        .iter()
        .zip(thetas)
        .map(|(w, t)| {
            let phi = oracle.phi(w);
            phi + alpha * (phi - oracle.value(w, t))
        })
        .collect()
}

/// Per-step increase the analysis tolerates in expectation:
/// (η_ω κ⁴/64)·σ²/M + (l²η_θ/16 + 17/η_ω)·d·Δ².
pub fn noise_allowance<T: Real>(
    eta_omega: T,
    eta_theta: T,
    kappa: T,
    l: T,
    sigma2: T,
    batch: usize,
    d: usize,
    delta: T,
) -> T {
    let k4 = kappa * kappa * kappa * kappa;
    let noise = eta_omega * k4 / lit::<T>(64.0) * sigma2 / lit::<T>(batch as f64);
    let grid = (l * l * eta_theta / lit::<T>(16.0) + lit::<T>(17.0) / eta_omega)
        * lit::<T>(d as f64)
        * delta
        * delta;
    noise + grid
}

/// Fraction of steps whose potential increase exceeds the allowance.
pub fn violation_fraction<T: Real>(v_trace: &[T], allowance: T) -> f64 {
    if v_trace.len() < 2 {
        return 0.0;
    }
    let n = v_trace.len() - 1;
    let bad = v_trace
        .windows(2)
        .filter(|w| w[1] - w[0] > allowance)
        .count();
    bad as f64 / n as f64
}

/// The convergence guarantee's right-hand side:
/// 2·√((Φ₀ − Φ*)κ⁴σ²/(M·T)) + (64κ²l² + 272/η_ω²)·d·Δ².
#[allow(clippy::too_many_arguments)]
pub fn theorem_rhs<T: Real>(
    phi0_minus_star: T,
    kappa: T,
    l: T,
    sigma2: T,
    batch: usize,
    iters: usize,
    eta_omega: T,
    d: usize,
    delta: T,
) -> T {
    let k4 = kappa * kappa * kappa * kappa;
    let transient = lit::<T>(2.0)
        * (phi0_minus_star.max(T::zero()) * k4 * sigma2
            / lit::<T>((batch * iters) as f64))
        .sqrt();
    let c = lit::<T>(64.0) * kappa * kappa * l * l
        + lit::<T>(272.0) / (eta_omega * eta_omega);
    transient + c * lit::<T>(d as f64) * delta * delta
}

/// The bare quantization floor d·Δ² the bounds scale with.
pub fn d_delta_sq<T: Real>(d: usize, delta: T) -> T {
    lit::<T>(d as f64) * delta * delta
}

/// Step sizes produced by a schedule rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoremSteps<T: Real = f64> {
    pub eta_omega: T,
    pub eta_theta: T,
    pub beta: T,
}

/// β small enough for every regime in the analysis:
/// β ≤ η_θ/(2l) and β ≤ 1/(140l).
pub fn default_beta<T: Real>(eta_theta: T, l: T) -> T {
    T::min(eta_theta / (lit::<T>(2.0) * l), T::one() / (lit::<T>(140.0) * l))
}

/// The PL-regime schedule: η_ω = min(1/(128κ²l), √(M(Φ₀−Φ*)/(132·T·κ⁴·l·σ²))),
/// η_θ = 64κ²η_ω.
pub fn pl_theorem_steps<T: Real>(
    l: T,
    mu: T,
    phi0_minus_star: T,
    sigma2: T,
    batch: usize,
    iters: usize,
) -> TheoremSteps<T> {
    let kappa = l / mu;
    let k2 = kappa * kappa;
    let cap = T::one() / (lit::<T>(128.0) * k2 * l);
    let eta_omega = if sigma2 > T::zero() {
        let arg = lit::<T>(batch as f64) * phi0_minus_star.max(T::zero())
            / (lit::<T>(132.0) * lit::<T>(iters as f64) * k2 * k2 * l * sigma2);
        T::min(cap, arg.sqrt())
    } else {
        cap
    };
    let eta_theta = lit::<T>(64.0) * k2 * eta_omega;
    TheoremSteps {
        eta_omega,
        eta_theta,
        beta: default_beta(eta_theta, l),
    }
}

/// The strongly-concave-regime schedule used for rate measurements:
/// η_ω = c₀/√T (no cap — the point is to watch the 1/√T envelope),
/// η_θ = 1/(2l).
pub fn sqrt_schedule_steps<T: Real>(l: T, c0: T, iters: usize) -> TheoremSteps<T> {
    let eta_theta = T::one() / (lit::<T>(2.0) * l);
    TheoremSteps {
        eta_omega: c0 / lit::<T>(iters as f64).sqrt(),
        eta_theta,
        beta: default_beta(eta_theta, l),
    }
}

/// Least-squares slope of log y against log x. Points with non-positive
/// coordinates are skipped.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if logs.len() < 2 {
        return f64::NAN;
    }
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in logs {
        num += (x - mx) * (y - my);
        den += (x - mx) * (x - mx);
    }
    num / den
}
