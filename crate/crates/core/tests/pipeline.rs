//! End-to-end checks that chain the simulator, the solvers and the analysis layer.

use domino_core::analysis::{balance_residuals, compare};
use domino_core::exact::{solve_general, solve_inverse_power, solve_inverse_power_adaptive};
use domino_core::sim::{measure, run, run_ensemble, SimConfig, SimStats};
use domino_core::{derived_quantities, InversePowerCase, ModelParams, MuRule};

fn mean_and_stderr(values: &[f64], batches: usize) -> (f64, f64) {
    let size = values.len() / batches;
    let means: Vec<f64> = values.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (b - 1.0);
    (mean, (var / b).sqrt())
}

fn theta_half_run(seed: u64) -> SimStats {
    let params = ModelParams::inverse_power(400, 0.5, 0.5, seed).unwrap();
    run(&params, 4_000_000, 400_000, 40).unwrap()
}

#[test]
fn stationary_halves_agree() {
    let stats = theta_half_run(11);
    let (first, second) = stats.density_trace.split_at(stats.density_trace.len() / 2);
    let (m1, s1) = mean_and_stderr(first, 16);
    let (m2, s2) = mean_and_stderr(second, 16);
    let combined = (s1 * s1 + s2 * s2).sqrt();
    assert!((m1 - m2).abs() < 3.0 * combined, "halves {m1} and {m2}, combined stderr {combined}");
}

#[test]
fn avalanche_counts_follow_hit_rates() {
    let stats = theta_half_run(12);
    let emp = measure(&stats).unwrap();
    let post_burn_in = (stats.config.steps - stats.config.burn_in) as f64;
    let n = stats.params.lattice_size() as f64;
    for i in 1..=6 {
        let n_hat = emp.n_hat[i - 1];
        let expected = post_burn_in * n_hat * i as f64 / n * stats.params.mu_of(i);
        let observed = stats.avalanche_hist[i - 1] as f64;
        let rel_se = (1.0 / observed + (emp.stderr[i - 1] / n_hat).powi(2)).sqrt();
        let rel = observed / expected - 1.0;
        assert!(rel.abs() < 4.0 * rel_se, "size {i}: observed {observed}, expected {expected:.1}");
    }
    let total: u64 = stats.avalanche_hist.iter().sum();
    assert_eq!(total, stats.events.avalanches);
}

#[test]
fn exact_aggregate_laws_hold_in_simulation() {
    let stats = theta_half_run(13);
    let emp = measure(&stats).unwrap();
    let d = derived_quantities(&InversePowerCase::new(0.5, 400).unwrap());
    let n_total: f64 = emp.n_hat.iter().sum();
    assert!((emp.rho_hat - d.rho).abs() / d.rho < 0.02, "rho {} vs {}", emp.rho_hat, d.rho);
    assert!((n_total - d.n_total).abs() / d.n_total < 0.02, "n {n_total} vs {}", d.n_total);
    assert!((emp.rho_hat - stats.mean_density()).abs() < 1e-12);
}

#[test]
fn stderr_shrinks_like_root_two_when_samples_double() {
    let config = SimConfig::new(600_000, 100_000, 20);
    let mut ratios = Vec::new();
    for seed in [1u64, 2, 3] {
        let params = ModelParams::inverse_power(300, 0.5, 0.5, seed).unwrap();
        let small = measure(&run_ensemble(&params, &config, 4, None).unwrap()).unwrap();
        let large = measure(&run_ensemble(&params.with_seed(seed + 100), &config, 8, None).unwrap()).unwrap();
        assert_eq!(large.samples, 2 * small.samples);
        for i in 0..5 {
            ratios.push(small.stderr[i] / large.stderr[i]);
        }
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    let root_two = std::f64::consts::SQRT_2;
    assert!((mean / root_two - 1.0).abs() < 0.2, "mean stderr ratio {mean}");
}

#[test]
fn wrong_theory_is_rejected() {
    let params = ModelParams::inverse_power(1000, 0.1, 0.5, 5).unwrap();
    let stats = run(&params, 3_000_000, 1_000_000, 100).unwrap();
    let emp = measure(&stats).unwrap();
    let wrong = solve_inverse_power_adaptive(&InversePowerCase::new(1.0, 1000).unwrap()).unwrap();
    let report = compare(&wrong, &emp).unwrap();
    assert!(report.chi_square_per_dof() > 10.0, "chi2/dof {}", report.chi_square_per_dof());
}

#[test]
fn balance_improves_with_truncation_length() {
    let case = InversePowerCase::new(0.2, 1000).unwrap();
    let params = ModelParams::inverse_power(1000, 0.5, 0.2, 0).unwrap();
    let residuals: Vec<f64> = [10, 20, 40, 80, 160]
        .iter()
        .map(|&i_max| balance_residuals(&solve_inverse_power(&case, i_max).unwrap(), &params).r_n.abs())
        .collect();
    assert!(residuals.windows(2).all(|w| w[1] < w[0]), "{residuals:?}");
}

#[test]
fn general_solver_handles_constant_rule() {
    let params = ModelParams::new(500, 0.4, MuRule::Constant { mu: 0.05 }, 0).unwrap();
    let sol = solve_general(&params, 60, 1e-12, 500).unwrap();
    assert!(sol.balance.r_n.abs() < 1e-8 && sol.balance.r_rho.abs() < 1e-8, "{:?}", sol.balance);
    assert!(sol.distribution.counts.iter().all(|&x| x.is_finite() && x >= 0.0));
}
