//! Cross-validation of the stationary theory.

use std::fmt;
use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::exact::ClusterDistribution;
use crate::params::ModelParams;
use crate::sim::EmpiricalDistribution;

/// Minimum expected count `n_i * samples` for a size to enter the chi-square.
pub const CHI_SQUARE_MIN_EXPECTED: f64 = 10.0;

/// Default lower end of the tail-exponent fit window.
pub const DEFAULT_FIT_FROM: usize = 50;

/// Relative residuals of the two balance laws
///
/// * `(1 - rho) N - 2n = sum (mu_i / nu) n_i i`
/// * `nu (1 - rho) = (1/N) sum mu_i n_i i^2`
///
/// each given as `(lhs - rhs) / |lhs|` (raw difference when `lhs = 0`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceResiduals {
    pub r_n: f64,
    pub r_rho: f64,
}

pub fn balance_residuals(dist: &ClusterDistribution, params: &ModelParams) -> BalanceResiduals {
    let lattice = dist.lattice_size as f64;
    let nu = params.nu();
    let rule = params.mu_rule();
    let rho = dist.derived.rho;
    let n = dist.derived.n_total;

    let (mut rhs_n, mut rhs_rho) = (0.0, 0.0);
    for (k, &count) in dist.counts.iter().enumerate() {
        let i = (k + 1) as f64;
        let mu = rule.raw(k + 1);
        rhs_n += mu / nu * count * i;
        rhs_rho += mu * count * i * i;
    }
    rhs_rho /= lattice;

    let relative = |lhs: f64, rhs: f64| {
        let diff = lhs - rhs;
        if lhs != 0.0 {
            diff / lhs.abs()
        } else {
            diff
        }
    };
    BalanceResiduals {
        r_n: relative((1.0 - rho) * lattice - 2.0 * n, rhs_n),
        r_rho: relative(nu * (1.0 - rho), rhs_rho),
    }
}

/// Least-squares exponent `p` of `n_{i+1} ~ i^(-p)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    /// Half-width of the 95% confidence interval of the slope.
    pub half_width: f64,
    pub points: usize,
}

/// Fits `log n_{i+1}` against `log i` for `i` in `range`; `counts[k] = n_{k+1}`.
pub fn fit_tail_exponent(counts: &[f64], range: RangeInclusive<usize>) -> Result<TailFit> {
    let (from, to) = (*range.start(), *range.end());
    if from < 1 || to < from {
        return Err(Error::Domain(format!("invalid fit range {from}..={to}")));
    }
    if counts.len() < to + 1 {
        return Err(Error::Domain(format!(
            "fit range {from}..={to} needs n_{} but the sequence stops at n_{}",
            to + 1,
            counts.len()
        )));
    }
    let mut xs = Vec::with_capacity(to - from + 1);
    let mut ys = Vec::with_capacity(to - from + 1);
    for i in from..=to {
        let v = counts[i];
        if !(v > 0.0) {
            return Err(Error::Domain(format!("n_{} = {v} is not positive", i + 1)));
        }
        xs.push((i as f64).ln());
        ys.push(v.ln());
    }
    if xs.len() < 3 {
        return Err(Error::Domain("tail fit needs at least three points".into()));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let se = (sse / (k - 2.0) / sxx).sqrt();
    let t = StudentsT::new(0.0, 1.0, k - 2.0).map(|d| d.inverse_cdf(0.975)).unwrap_or(1.96);
    Ok(TailFit { exponent: -slope, half_width: t * se, points: xs.len() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub i: usize,
    pub theory: f64,
    pub empirical: f64,
    pub stderr: f64,
    /// `(empirical - theory) / stderr`; absent when `stderr = 0`.
    pub z_score: Option<f64>,
    pub included: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    #[serde(rename = "N")]
    pub lattice_size: usize,
    pub per_i: Vec<ComparisonRow>,
    pub chi_square: f64,
    pub dof: usize,
    pub min_expected_count: f64,
    pub theory_rho: f64,
    pub empirical_rho: f64,
    pub empirical_rho_stderr: f64,
    /// Balance residuals of the theory (inverse-power theory only).
    pub balance: Option<BalanceResiduals>,
    /// Tail exponent fitted on the empirical counts of the included sizes.
    pub tail_exponent: Option<TailFit>,
}

impl ComparisonReport {
    pub fn chi_square_per_dof(&self) -> f64 {
        self.chi_square / self.dof as f64
    }
}

/// Compares a theoretical distribution with a measured one.
///
/// Sizes whose expected count over all samples is below
/// [`CHI_SQUARE_MIN_EXPECTED`], or whose standard error is zero, are reported
/// but excluded from the chi-square.
pub fn compare(theory: &ClusterDistribution, empirical: &EmpiricalDistribution) -> Result<ComparisonReport> {
    if theory.lattice_size != empirical.lattice_size {
        return Err(Error::Incompatible(format!(
            "theory has N={} but simulation has N={}",
            theory.lattice_size, empirical.lattice_size
        )));
    }
    let overlap = theory.i_max().min(empirical.n_hat.len());
    if overlap == 0 {
        return Err(Error::Incompatible("theory and simulation share no cluster sizes".into()));
    }
    let samples = empirical.samples as f64;
    let mut per_i = Vec::with_capacity(overlap);
    let (mut chi_square, mut dof) = (0.0, 0);
    for i in 1..=overlap {
        let n = theory.n(i);
        let n_hat = empirical.n_hat[i - 1];
        let se = empirical.stderr[i - 1];
        let z_score = (se > 0.0).then(|| (n_hat - n) / se);
        let included = z_score.is_some() && n * samples >= CHI_SQUARE_MIN_EXPECTED;
        if let (true, Some(z)) = (included, z_score) {
            chi_square += z * z;
            dof += 1;
        }
        per_i.push(ComparisonRow { i, theory: n, empirical: n_hat, stderr: se, z_score, included });
    }

    let balance = theory
        .theta
        .and_then(|theta| ModelParams::inverse_power(theory.lattice_size, 1.0, theta, 0).ok())
        .map(|p| balance_residuals(theory, &p));

    let last_included = per_i.iter().rev().find(|r| r.included).map(|r| r.i);
    let tail_exponent =
        last_included.filter(|&last| last >= 5).and_then(|last| fit_tail_exponent(&empirical.n_hat, 1..=last - 1).ok());

    Ok(ComparisonReport {
        lattice_size: theory.lattice_size,
        per_i,
        chi_square,
        dof,
        min_expected_count: CHI_SQUARE_MIN_EXPECTED,
        theory_rho: theory.derived.rho,
        empirical_rho: empirical.rho_hat,
        empirical_rho_stderr: empirical.rho_stderr,
        balance,
        tail_exponent,
    })
}

impl fmt::Display for ComparisonReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "N = {}", self.lattice_size)?;
        writeln!(
            f,
            "density: theory {:.6}  simulation {:.6} +- {:.6}",
            self.theory_rho, self.empirical_rho, self.empirical_rho_stderr
        )?;
        writeln!(f, "{:>6} {:>14} {:>14} {:>12} {:>9}  chi2", "i", "theory", "simulation", "stderr", "z")?;
        for row in &self.per_i {
            let z = row.z_score.map_or_else(|| "-".to_string(), |z| format!("{z:.3}"));
            writeln!(
                f,
                "{:>6} {:>14.6e} {:>14.6e} {:>12.4e} {:>9}  {}",
                row.i,
                row.theory,
                row.empirical,
                row.stderr,
                z,
                if row.included { "*" } else { "" }
            )?;
        }
        writeln!(
            f,
            "chi-square {:.3} over {} sizes (expected count >= {}), per dof {:.4}",
            self.chi_square,
            self.dof,
            self.min_expected_count,
            self.chi_square_per_dof()
        )?;
        if let Some(b) = self.balance {
            writeln!(f, "balance residuals: r_n {:.3e}  r_rho {:.3e}", b.r_n, b.r_rho)?;
        }
        if let Some(t) = self.tail_exponent {
            writeln!(f, "empirical tail exponent {:.4} +- {:.4} ({} points)", t.exponent, t.half_width, t.points)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{solve_inverse_power, solve_inverse_power_adaptive};
    use crate::params::{DerivedQuantities, InversePowerCase};
    use crate::series::limit_form_sequence;

    fn params(theta: f64, n: usize) -> ModelParams {
        ModelParams::inverse_power(n, 0.5, theta, 0).unwrap()
    }

    #[test]
    fn inverse_power_solution_balances() {
        let case = InversePowerCase::new(1.0, 1000).unwrap();
        let d = solve_inverse_power_adaptive(&case).unwrap();
        let r = balance_residuals(&d, &params(1.0, 1000));
        assert!(r.r_n.abs() < 1e-8 && r.r_rho.abs() < 1e-8, "{r:?}");
    }

    #[test]
    fn degenerate_input_is_finite() {
        let d = ClusterDistribution {
            lattice_size: 10,
            theta: None,
            derived: DerivedQuantities { rho: 1.0, n_total: 0.0, n1_empty: 0.0 },
            counts: vec![0.0; 5],
        };
        let r = balance_residuals(&d, &params(1.0, 10));
        assert!(r.r_n.is_finite() && r.r_rho.is_finite());
    }

    #[test]
    fn truncation_increases_residual() {
        let case = InversePowerCase::new(0.2, 1000).unwrap();
        let p = params(0.2, 1000);
        let long = balance_residuals(&solve_inverse_power(&case, 60).unwrap(), &p);
        let short = balance_residuals(&solve_inverse_power(&case, 10).unwrap(), &p);
        assert!(short.r_n.abs() > long.r_n.abs());
        assert!(short.r_rho.abs() > long.r_rho.abs());
    }

    #[test]
    fn residuals_shrink_with_truncation_order() {
        let case = InversePowerCase::new(1.0, 1000).unwrap();
        let p = params(1.0, 1000);
        let rs: Vec<f64> = [5, 10, 20, 40, 80]
            .iter()
            .map(|&m| balance_residuals(&solve_inverse_power(&case, m).unwrap(), &p).r_n.abs())
            .collect();
        assert!(rs.windows(2).all(|w| w[1] < w[0]), "{rs:?}");
    }

    #[test]
    fn exact_power_law_fit() {
        let counts: Vec<f64> = (1..=101).map(|i| ((i - 1).max(1) as f64).powi(-2)).collect();
        let fit = fit_tail_exponent(&counts, 2..=100).unwrap();
        assert!((fit.exponent - 2.0).abs() < 1e-10);
        assert!(fit.half_width < 1e-8);
    }

    #[test]
    fn fit_rejects_bad_input() {
        let counts = vec![1.0, 0.5, 0.0, 0.1, 0.05];
        assert!(fit_tail_exponent(&counts, 1..=3).is_err());
        assert!(fit_tail_exponent(&counts, 1..=10).is_err());
        assert!(fit_tail_exponent(&counts, 3..=2).is_err());
    }

    #[test]
    fn geometric_factor_steepens_the_fit() {
        // n_{i+1} = C i^-p g^i
        let make = |g: f64| -> Vec<f64> {
            (0..=201).map(|k| if k == 0 { 1.0 } else { 3.0 * (k as f64).powf(-1.5) * g.powi(k as i32) }).collect()
        };
        let exact = fit_tail_exponent(&make(1.0), 50..=200).unwrap();
        assert!((exact.exponent - 1.5).abs() < 1e-10);
        let steeper = fit_tail_exponent(&make(0.99), 50..=200).unwrap();
        assert!(steeper.exponent > 1.5 + 0.1);
    }

    #[test]
    fn limit_form_tail_is_three_halves() {
        let counts = limit_form_sequence(201, 1.0);
        let fit = fit_tail_exponent(&counts, 50..=200).unwrap();
        assert!((fit.exponent - 1.5).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn finite_theta_tail_is_steeper() {
        let case = InversePowerCase::new(1.0, 1000).unwrap();
        let d = solve_inverse_power(&case, 60).unwrap();
        let fit = fit_tail_exponent(&d.counts, 20..=50).unwrap();
        assert!(fit.exponent > 1.5, "{fit:?}");
    }

    #[test]
    fn self_comparison_is_perfect() {
        let case = InversePowerCase::new(1.0, 100).unwrap();
        let d = solve_inverse_power(&case, 20).unwrap();
        let emp = EmpiricalDistribution {
            lattice_size: 100,
            samples: 1000,
            n_hat: d.counts.clone(),
            stderr: vec![0.1; 20],
            rho_hat: d.derived.rho,
            rho_stderr: 0.0,
            n1_empty_hat: d.derived.n1_empty,
        };
        let report = compare(&d, &emp).unwrap();
        assert_eq!(report.chi_square, 0.0);
        assert!(report.dof > 0);
        assert!(report.per_i.iter().all(|r| r.z_score == Some(0.0)));
        assert!(report.to_string().contains("chi-square"));
    }

    #[test]
    fn compare_validates_inputs() {
        let case = InversePowerCase::new(1.0, 100).unwrap();
        let d = solve_inverse_power(&case, 20).unwrap();
        let mut emp = EmpiricalDistribution {
            lattice_size: 99,
            samples: 10,
            n_hat: vec![1.0],
            stderr: vec![0.1],
            rho_hat: 0.5,
            rho_stderr: 0.0,
            n1_empty_hat: 0.0,
        };
        assert!(matches!(compare(&d, &emp), Err(Error::Incompatible(_))));
        emp.lattice_size = 100;
        emp.n_hat.clear();
        emp.stderr.clear();
        assert!(matches!(compare(&d, &emp), Err(Error::Incompatible(_))));
    }
}
