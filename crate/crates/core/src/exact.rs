//! Stationary cluster-size distribution.
//!
//! The general stationary system expresses `n_1`, `n_2`, `n_i` through the
//! aggregates `n`, `rho` and `n_1^0`, which are themselves sums over the
//! distribution. For `mu_i = delta / i` the aggregates are known in closed form
//! and the system collapses to a convolution recurrence
//! ([`solve_inverse_power`]); the substitution `c_i = beta / alpha^(i+1) n_{i+1}`
//! ([`n_to_c`]) turns that recurrence into the Motzkin form. For other rules
//! [`solve_general`] iterates the implicit system to a fixed point.

use serde::{Deserialize, Serialize};

use crate::analysis::{balance_residuals, BalanceResiduals};
use crate::error::{Error, Result};
use crate::params::{derived_quantities, DerivedQuantities, InversePowerCase, ModelParams, MuRule};
use crate::series::CoeffSequence;

/// Relative tail mass of `sum i n_i` targeted by the adaptive truncation.
pub const ADAPTIVE_TAIL_TOL: f64 = 1e-9;
/// Hard cap for the adaptive truncation order.
pub const MAX_ADAPTIVE_I_MAX: usize = 20_000;
/// Relaxation of the fallback update in the general fixed-point solver.
pub const DEFAULT_DAMPING: f64 = 0.5;

const MAX_WORKING_LEN: usize = 1 << 15;

/// Expected number of occupied clusters of each length, `n_1 ..= n_{i_max}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterDistribution {
    #[serde(rename = "N")]
    pub lattice_size: usize,
    /// `delta / nu` when the distribution belongs to the inverse-power family.
    pub theta: Option<f64>,
    /// Aggregates the sequence was solved against.
    pub derived: DerivedQuantities,
    /// `counts[i - 1] = n_i`.
    pub counts: Vec<f64>,
}

impl ClusterDistribution {
    pub fn i_max(&self) -> usize {
        self.counts.len()
    }

    /// `n_i` for `i >= 1`, zero beyond the truncation.
    pub fn n(&self, i: usize) -> f64 {
        assert!(i >= 1, "cluster sizes start at 1");
        self.counts.get(i - 1).copied().unwrap_or(0.0)
    }

    /// `sum n_i` over the retained sizes.
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// `sum i n_i` over the retained sizes.
    pub fn first_moment(&self) -> f64 {
        self.counts.iter().enumerate().map(|(k, &v)| (k + 1) as f64 * v).sum()
    }

    pub fn truncated(&self, i_max: usize) -> Self {
        let mut out = self.clone();
        out.counts.truncate(i_max);
        out
    }
}

/// Convolution `sum_{k=1}^{len} seq[k-1] * seq[len-k]` over the first `len`
/// entries, i.e. `sum n_k n_{len+1-k}`.
fn self_convolution(seq: &[f64], len: usize) -> f64 {
    let half = len / 2;
    let mut acc = 0.0;
    for k in 0..half {
        acc += seq[k] * seq[len - 1 - k];
    }
    acc *= 2.0;
    if len % 2 == 1 {
        acc += seq[half] * seq[half];
    }
    acc
}

struct InversePowerCoefficients {
    n1: f64,
    alpha: f64,
    quad: f64,
}

impl InversePowerCoefficients {
    fn new(case: &InversePowerCase) -> Self {
        let t = case.theta();
        let n_theta = case.n_theta();
        let n1 = n_theta / ((t + 1.0) * (t + 2.0) * (t + 2.0)) * (t + 2.0 / (2.0 * t + 3.0));
        let alpha = 2.0 / (t + 2.0) * ((2.0 * t + 1.0) / (2.0 * t + 3.0));
        let quad = 2.0 / n_theta * ((t + 1.0) / (2.0 * t + 3.0));
        Self { n1, alpha, quad }
    }

    /// Appends `n_{len+1}` to a sequence holding `n_1 ..= n_len`.
    fn push_next(&self, seq: &mut Vec<f64>) -> Result<()> {
        let value = match seq.len() {
            0 => self.n1,
            1 => self.alpha * seq[0],
            i => self.alpha * seq[i - 1] + self.quad * self_convolution(seq, i - 1),
        };
        if !value.is_finite() {
            return Err(Error::NonFinite { index: seq.len() + 1 });
        }
        seq.push(value);
        Ok(())
    }
}

/// `n_1 ..= n_{i_max}` of the inverse-power case:
///
/// * `n_1 = N theta / ((theta+1)(theta+2)^2) (theta + 2/(2 theta + 3))`
/// * `n_2 = alpha n_1`
/// * `n_{i+1} = alpha n_i + 2/(N theta) (theta+1)/(2 theta+3) sum_{k=1}^{i-1} n_k n_{i-k}`
///
/// with `alpha = 2/(theta+2) (2 theta+1)/(2 theta+3)`.
pub fn solve_inverse_power(case: &InversePowerCase, i_max: usize) -> Result<ClusterDistribution> {
    if i_max == 0 {
        return Err(Error::Domain("i_max must be at least 1".into()));
    }
    let coeffs = InversePowerCoefficients::new(case);
    let mut seq = Vec::with_capacity(i_max);
    while seq.len() < i_max {
        coeffs.push_next(&mut seq)?;
    }
    Ok(inverse_power_distribution(case, seq))
}

/// [`solve_inverse_power`] with the truncation chosen so that the estimated
/// geometric tail of `sum i n_i` is below `ADAPTIVE_TAIL_TOL * rho N`, capped
/// at [`MAX_ADAPTIVE_I_MAX`].
pub fn solve_inverse_power_adaptive(case: &InversePowerCase) -> Result<ClusterDistribution> {
    let coeffs = InversePowerCoefficients::new(case);
    let derived = derived_quantities(case);
    let target = ADAPTIVE_TAIL_TOL * derived.rho * case.lattice_size() as f64;
    let mut seq = Vec::with_capacity(256);
    while seq.len() < MAX_ADAPTIVE_I_MAX {
        coeffs.push_next(&mut seq)?;
        if seq.len() >= 16 && geometric_tail_first_moment(&seq) < target {
            break;
        }
    }
    Ok(inverse_power_distribution(case, seq))
}

fn inverse_power_distribution(case: &InversePowerCase, counts: Vec<f64>) -> ClusterDistribution {
    ClusterDistribution {
        lattice_size: case.lattice_size(),
        theta: Some(case.theta()),
        derived: derived_quantities(case),
        counts,
    }
}

/// Estimated `sum_{j > L} j n_j` assuming `n_j` continues geometrically with
/// the last observed ratio. Infinite when the sequence is not decaying.
fn geometric_tail_first_moment(seq: &[f64]) -> f64 {
    let len = seq.len();
    if len < 2 {
        return f64::INFINITY;
    }
    let last = seq[len - 1];
    if last == 0.0 {
        return 0.0;
    }
    let r = last / seq[len - 2];
    if !(r < 1.0) {
        return f64::INFINITY;
    }
    let l = len as f64;
    last * r * ((l + 1.0) - l * r) / ((1.0 - r) * (1.0 - r))
}

/// Constants of the substitution `c_i = beta / alpha^(i+1) n_{i+1}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformConstants {
    pub alpha: f64,
    pub beta: f64,
}

/// `alpha(theta) = 2/(theta+2) (2 theta+1)/(2 theta+3)`; defined for
/// `theta >= 0` with `alpha(0) = 1/3`.
pub fn transform_alpha(theta: f64) -> f64 {
    2.0 / (theta + 2.0) * ((2.0 * theta + 1.0) / (2.0 * theta + 3.0))
}

pub fn transform_constants(case: &InversePowerCase) -> TransformConstants {
    let t = case.theta();
    TransformConstants { alpha: transform_alpha(t), beta: (t + 1.0) * (t + 2.0) / (case.n_theta() * (2.0 * t + 1.0)) }
}

fn alpha_power(alpha: f64, exp: usize) -> Result<f64> {
    let p = alpha.powi(exp as i32);
    if !p.is_normal() {
        return Err(Error::NonFinite { index: exp - 1 });
    }
    Ok(p)
}

/// `c_i = beta / alpha^(i+1) n_{i+1}` for `i = 0 .. i_max - 1`.
pub fn n_to_c(dist: &ClusterDistribution, tc: &TransformConstants) -> Result<CoeffSequence> {
    let mut c = Vec::with_capacity(dist.counts.len());
    for (i, &n) in dist.counts.iter().enumerate() {
        let value = tc.beta * n / alpha_power(tc.alpha, i + 1)?;
        if !value.is_finite() {
            return Err(Error::NonFinite { index: i });
        }
        c.push(value);
    }
    Ok(CoeffSequence::Float64(c))
}

/// Inverse of [`n_to_c`]: `n_{i+1} = alpha^(i+1) / beta c_i`.
pub fn c_to_n(c: &CoeffSequence, tc: &TransformConstants) -> Result<Vec<f64>> {
    c.to_f64()
        .iter()
        .enumerate()
        .map(|(i, &ci)| {
            let value = alpha_power(tc.alpha, i + 1)? / tc.beta * ci;
            if value.is_finite() {
                Ok(value)
            } else {
                Err(Error::NonFinite { index: i })
            }
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GeneralOptions {
    /// Convergence threshold on successive sequences, in max-norm relative
    /// to `max(1, max_i n_i)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation used when a Newton step cannot be taken.
    pub damping: f64,
    /// Warm start; its counts and aggregates seed the iteration.
    pub initial: Option<ClusterDistribution>,
}

impl GeneralOptions {
    pub fn new(tol: f64, max_iter: usize) -> Self {
        Self { tol, max_iter, damping: DEFAULT_DAMPING, initial: None }
    }
}

#[derive(Clone, Debug)]
pub struct GeneralSolution {
    /// Solution truncated to the requested `i_max`.
    pub distribution: ClusterDistribution,
    pub iterations: usize,
    /// Last max-norm change between successive sequences.
    pub residual: f64,
    /// Internal truncation used for the aggregate sums.
    pub working_len: usize,
    /// Balance-law residuals of the full working sequence.
    pub balance: BalanceResiduals,
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Aggregates([f64; 3]);

impl Aggregates {
    fn new(n: f64, rho: f64, n1_empty: f64) -> Self {
        Self([n, rho, n1_empty])
    }

    fn from_derived(d: &DerivedQuantities) -> Self {
        Self::new(d.n_total, d.rho, d.n1_empty)
    }

    fn derived(self) -> DerivedQuantities {
        let [n_total, rho, n1_empty] = self.0;
        DerivedQuantities { rho, n_total, n1_empty }
    }

    /// Componentwise relative size of `delta` against `self`.
    fn relative_norm(self, delta: [f64; 3]) -> f64 {
        (0..3).map(|k| delta[k].abs() / self.0[k].abs().max(f64::MIN_POSITIVE)).fold(0.0, f64::max)
    }

    fn plus(self, delta: [f64; 3], scale: f64) -> Self {
        Self(std::array::from_fn(|k| self.0[k] + scale * delta[k]))
    }
}

struct GeneralSystem {
    lattice: f64,
    nu: f64,
    rule: MuRule,
}

impl GeneralSystem {
    fn rate(&self, i: usize) -> f64 {
        self.rule.raw(i) / self.nu
    }

    /// Evaluates the stationary equations for `n_1 ..= n_len` at fixed
    /// aggregates.
    fn sequence(&self, agg: Aggregates, len: usize) -> Result<Vec<f64>> {
        let [n, rho, n1_empty] = agg.0;
        let split = 1.0 - n1_empty / n;
        let quad = n1_empty / (n * n);
        let mut seq: Vec<f64> = Vec::with_capacity(len);
        let n1 = ((1.0 - rho) * self.lattice - 2.0 * n + n1_empty) / (self.rate(1) + 2.0);
        seq.push(n1);
        for i in 2..=len {
            let conv = if i >= 3 { self_convolution(&seq, i - 2) } else { 0.0 };
            let value = (2.0 * seq[i - 2] * split + quad * conv) / (self.rate(i) * i as f64 + 2.0);
            seq.push(value);
        }
        for (k, &v) in seq.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { index: k + 1 });
            }
            if v < 0.0 {
                return Err(Error::NegativeCount { index: k + 1, value: v });
            }
        }
        Ok(seq)
    }

    fn aggregates(&self, seq: &[f64]) -> Aggregates {
        let mut n = 0.0;
        let mut moment = 0.0;
        let mut weighted = 0.0;
        for (k, &v) in seq.iter().enumerate() {
            let i = k + 1;
            n += v;
            moment += i as f64 * v;
            weighted += self.rate(i) * i as f64 * v;
        }
        Aggregates::new(n, moment / self.lattice, 2.0 * n / (3.0 + 2.0 * weighted / n))
    }

    /// `map(x) - x` where `map` sends trial aggregates to the aggregates of
    /// the sequence they generate.
    fn defect(&self, agg: Aggregates, len: usize) -> Result<(Vec<f64>, [f64; 3])> {
        let seq = self.sequence(agg, len)?;
        let image = self.aggregates(&seq);
        Ok((seq, std::array::from_fn(|k| image.0[k] - agg.0[k])))
    }

    /// Newton direction for the defect, with a forward-difference Jacobian.
    fn newton_direction(&self, agg: Aggregates, defect: [f64; 3], len: usize) -> Option<[f64; 3]> {
        let mut jac = [[0.0; 3]; 3];
        for k in 0..3 {
            let h = 1e-7 * agg.0[k].abs().max(1e-12);
            let mut column = None;
            for step in [h, -h] {
                let mut shifted = agg;
                shifted.0[k] += step;
                if let Ok((_, d)) = self.defect(shifted, len) {
                    column = Some(std::array::from_fn::<f64, 3, _>(|r| (d[r] - defect[r]) / step));
                    break;
                }
            }
            let column = column?;
            for r in 0..3 {
                jac[r][k] = column[r];
            }
        }
        solve3(jac, std::array::from_fn(|r| -defect[r]))
    }

    /// Starting aggregates: inverse-power closed forms at an effective theta
    /// averaged from `mu_i i / nu` with geometric weights.
    fn initial_guess(&self, lattice: usize) -> Aggregates {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 1..=32 {
            let w = 0.5f64.powi(i as i32);
            num += w * self.rate(i) * i as f64;
            den += w;
        }
        let theta = num / den;
        let case = InversePowerCase::new(theta, lattice).or_else(|_| InversePowerCase::new(1.0, lattice));
        Aggregates::from_derived(&derived_quantities(&case.expect("lattice size already validated")))
    }
}

/// Gaussian elimination with partial pivoting.
fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col] == 0.0 || !a[pivot][col].is_finite() {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for row in (0..3).rev() {
        let tail: f64 = (row + 1..3).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fixed-point solution of the general stationary system.
///
/// Trial aggregates `(n, rho, n_1^0)` give a sequence through the
/// stationary equations and the sequence gives new aggregates. The map is
/// strongly expanding near its fixed point for small `mu / nu`, so the
/// aggregates are updated by Newton steps on `map(x) - x` with backtracking,
/// falling back to a damped update when no Newton step is acceptable.
/// Iteration stops when successive sequences agree to `tol`. The aggregate
/// sums run over an internal truncation that grows until their geometric
/// tail is negligible, so the result does not depend on `i_max`.
pub fn solve_general(params: &ModelParams, i_max: usize, tol: f64, max_iter: usize) -> Result<GeneralSolution> {
    solve_general_with(params, i_max, &GeneralOptions::new(tol, max_iter))
}

pub fn solve_general_with(params: &ModelParams, i_max: usize, opts: &GeneralOptions) -> Result<GeneralSolution> {
    if i_max == 0 {
        return Err(Error::Domain("i_max must be at least 1".into()));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::Domain(format!("tolerance {} must be positive", opts.tol)));
    }
    if !(opts.damping > 0.0 && opts.damping <= 1.0) {
        return Err(Error::Domain(format!("damping {} must lie in (0, 1]", opts.damping)));
    }
    let lattice = params.lattice_size();
    let system = GeneralSystem { lattice: lattice as f64, nu: params.nu(), rule: params.mu_rule() };

    let (mut agg, mut prev, mut len) = match &opts.initial {
        Some(init) => {
            if init.lattice_size != lattice {
                return Err(Error::Incompatible(format!(
                    "initial guess has N={}, parameters have N={lattice}",
                    init.lattice_size
                )));
            }
            (Aggregates::from_derived(&init.derived), Some(init.counts.clone()), i_max.max(init.i_max()).max(32))
        }
        None => (system.initial_guess(lattice), None, i_max.max(32)),
    };
    let tail_tol = (opts.tol * 1e-2).max(1e-15);
    let mut residual = f64::INFINITY;

    for iteration in 1..=opts.max_iter {
        let (seq, defect) = system.defect(agg, len)?;
        residual = match &prev {
            Some(p) => {
                let overlap = p.len().min(seq.len());
                let scale = seq.iter().fold(1.0f64, |m, &v| m.max(v));
                seq[..overlap].iter().zip(&p[..overlap]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale
            }
            None => f64::INFINITY,
        };
        if residual < opts.tol {
            let moment: f64 = seq.iter().enumerate().map(|(k, v)| (k + 1) as f64 * v).sum();
            if geometric_tail_first_moment(&seq) <= tail_tol * moment || len >= MAX_WORKING_LEN {
                let full = ClusterDistribution {
                    lattice_size: lattice,
                    theta: params.theta(),
                    derived: agg.plus(defect, 1.0).derived(),
                    counts: seq,
                };
                let balance = balance_residuals(&full, params);
                return Ok(GeneralSolution {
                    distribution: full.truncated(i_max),
                    iterations: iteration,
                    residual,
                    working_len: len,
                    balance,
                });
            }
            len = (len * 2).min(MAX_WORKING_LEN);
            prev = None;
            continue;
        }

        let current = agg.relative_norm(defect);
        let mut next = None;
        if let Some(dir) = system.newton_direction(agg, defect, len) {
            let mut scale = 1.0;
            while scale > 1e-6 {
                let trial = agg.plus(dir, scale);
                if let Ok((_, d)) = system.defect(trial, len) {
                    if trial.relative_norm(d) < current || current == 0.0 {
                        next = Some(trial);
                        break;
                    }
                }
                scale *= 0.5;
            }
        }
        agg = next.unwrap_or_else(|| agg.plus(defect, opts.damping));
        prev = Some(seq);
    }
    Err(Error::NotConverged { iterations: opts.max_iter, residual })
}
