//! Statistical contracts of the synthetic minimax oracles: unbiased noise,
//! variance within the declared σ², the PL inequality at the constructed μ,
//! the 1-Lipschitz inner maximizer of the sine toy, and the σ²/M batch
//! scaling of the optimizer's terminal plateau.

use rand::Rng;
use zsaq_core::rng::{stream, Domain};
use zsaq_core::samsga::{run_sam_sga, Ablation, MinimaxProblem, Phase, SamSgaConfig, SampleKey};
use zsaq_core::theory::{
    phi_gradient_trace, pl_condition_check, sqrt_schedule_steps, terminal_average,
    MinimaxOracle, NoisyMinimax, PlToy, ScToy,
};

fn random_point(oracle: &impl MinimaxOracle<f64>, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, Domain::ConstantProbe, 9, 0);
    let omega = (0..oracle.omega_dim())
        .map(|_| rng.gen_range(-1.5..1.5))
        .collect();
    let theta = (0..oracle.theta_dim())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    (omega, theta)
}

/// Mean of n single-sample stochastic gradients must approach the exact
/// gradient at the 4-standard-error level, and the per-block scatter must
/// stay within the declared total variance σ².
fn check_unbiased_and_bounded(oracle: &(impl MinimaxOracle<f64> + Sync), label: &str) {
    let noisy = NoisyMinimax::new(oracle);
    let sigma_n = oracle.noise_sigma();
    let declared_sigma2 = oracle.constants().sigma2;
    let n = 100_000usize;
    for point in 0..20u64 {
        let (omega, theta) = random_point(oracle, point);
        let exact_w = oracle.grad_omega(&omega, &theta);
        let exact_t = oracle.grad_theta(&omega, &theta);
        let mut mean_w = vec![0.0; exact_w.len()];
        let mut mean_t = vec![0.0; exact_t.len()];
        let mut scatter_w = 0.0;
        let mut scatter_t = 0.0;
        for s in 0..n {
            let key = SampleKey {
                seed: point,
                iteration: s as u64,
                phase: Phase::Student,
            };
            let (_, gw) = noisy.value_grad_omega(&omega, &theta, key, 1).unwrap();
            let (_, gt) = noisy.value_grad_theta(&omega, &theta, key, 1).unwrap();
            for (m, &g) in mean_w.iter_mut().zip(&gw) {
                *m += g;
            }
            for (m, &g) in mean_t.iter_mut().zip(&gt) {
                *m += g;
            }
            scatter_w += gw
                .iter()
                .zip(&exact_w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            scatter_t += gt
                .iter()
                .zip(&exact_t)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        let tol = 4.0 * sigma_n / (n as f64).sqrt();
        for (i, (&m, &e)) in mean_w.iter().zip(&exact_w).enumerate() {
            let dev = (m / n as f64 - e).abs();
            assert!(
                dev <= tol,
                "{label}: ω-gradient coordinate {i} biased by {dev:.2e} (> {tol:.2e}) at point {point}"
            );
        }
        for (i, (&m, &e)) in mean_t.iter().zip(&exact_t).enumerate() {
            let dev = (m / n as f64 - e).abs();
            assert!(
                dev <= tol,
                "{label}: θ-gradient coordinate {i} biased by {dev:.2e} (> {tol:.2e}) at point {point}"
            );
        }
        // Each block's single-sample variance sits under the declared total.
        assert!(scatter_w / n as f64 <= declared_sigma2 * 1.05);
        assert!(scatter_t / n as f64 <= declared_sigma2 * 1.05);
    }
}

#[test]
fn stochastic_gradients_are_unbiased_with_bounded_variance() {
    check_unbiased_and_bounded(&ScToy::<f64> { sigma: 0.5 }, "sc-toy");
    let pl = PlToy::<f64>::new(3, 4, 2, 0.5, 11).unwrap();
    check_unbiased_and_bounded(&pl, "pl-toy");
}

#[test]
fn pl_inequality_holds_at_mu_and_fails_at_ten_mu() {
    let sc = ScToy::<f64> { sigma: 0.0 };
    let mu = sc.constants().mu;
    let report = pl_condition_check(&sc, mu, 10_000, 3);
    assert_eq!(report.violations, 0, "sc-toy violated PL at μ: {report:?}");
    assert!(pl_condition_check(&sc, 10.0 * mu, 10_000, 3).violations > 0);

    let pl = PlToy::<f64>::new(3, 4, 2, 0.0, 11).unwrap();
    let mu = pl.constants().mu;
    let report = pl_condition_check(&pl, mu, 10_000, 3);
    assert_eq!(report.violations, 0, "pl-toy violated PL at μ: {report:?}");
    assert!(pl_condition_check(&pl, 10.0 * mu, 10_000, 3).violations > 0);
}

#[test]
fn sine_toy_inner_maximizer_is_one_lipschitz() {
    let sc = ScToy::<f64> { sigma: 0.0 };
    let mut rng = stream(21, Domain::ConstantProbe, 1, 0);
    for _ in 0..10_000 {
        let w1 = rng.gen_range(-6.0..6.0);
        let w2 = rng.gen_range(-6.0..6.0);
        let t1 = sc.theta_star(&[w1])[0];
        let t2 = sc.theta_star(&[w2])[0];
        assert!((t1 - t2).abs() <= (w1 - w2).abs() + 1e-12);
    }
}

/// Terminal plateau of ‖∇Φ‖² must fall as the batch size grows — the σ²/M
/// dependence of the convergence bound's noise term.
#[test]
fn terminal_gradient_plateau_decreases_with_batch_size() {
    let oracle = ScToy::<f64> { sigma: 1.0 };
    let noisy = NoisyMinimax::new(&oracle);
    let consts = oracle.constants();
    let iters = 2_000usize;
    let steps = sqrt_schedule_steps(consts.l, 0.5, iters);
    let mut plateaus = Vec::new();
    for batch in [1usize, 4, 16] {
        let mut acc = 0.0;
        for seed in 0..8u64 {
            let omega0 = vec![stream(seed, Domain::OmegaInit, 0, 0).gen_range(0.4..0.7)];
            let cfg = SamSgaConfig {
                eta_omega: steps.eta_omega,
                eta_theta: steps.eta_theta,
                beta: steps.beta,
                iters,
                batch,
                bits: 16,
                seed,
                ablation: Ablation::Full,
                theta_radius: consts.theta_radius,
                record_trajectory: true,
            };
            let run = run_sam_sga(&noisy, &cfg, &omega0, &[0.0]).unwrap();
            let traj = run.trajectory.as_ref().unwrap();
            let omegas: Vec<Vec<f64>> = traj[1..].iter().map(|p| p.omega_hat.clone()).collect();
            let trace = phi_gradient_trace(&oracle, &omegas);
            acc += terminal_average(&trace);
        }
        plateaus.push(acc / 8.0);
    }
    println!("terminal ‖∇Φ‖² by batch 1/4/16: {plateaus:?}");
    assert!(
        plateaus[2] < plateaus[1] && plateaus[1] < plateaus[0],
        "plateau should fall with batch size, got {plateaus:?}"
    );
    // And the end-to-end drop should reflect a real variance reduction.
    assert!(plateaus[2] < plateaus[0] * 0.5);
}
