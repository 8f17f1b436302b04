//! Motzkin-form recurrence and its generating function.
//!
//! The transformed coefficients `c_m` satisfy
//! `c_{m+2} = c_{m+1} + sum_{k=0}^{m} c_k c_{m-k}`. With `c_0 = c_1 = 1` they
//! are the Motzkin numbers. Three routes compute them:
//!
//! * [`run_recurrence`], the ground truth;
//! * [`gf_coeffs`], expanding the generating function
//!   `C(z) = ((1 - z) - sqrt(1 - 2z + (1 - 4c_0) z^2 + 4(c_0 - c_1) z^3)) / (2 z^2)`;
//! * [`closed_form_c`], the explicit binomial sum valid for `c_0 = c_1`.
//!
//! Every routine is generic over [`Scalar`], so the same code runs in `f64`
//! and in exact rational arithmetic.

mod power_series;
mod scalar;

use std::sync::OnceLock;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use power_series::PowerSeries;
pub use scalar::{rational_from_decimal, rational_from_string, rational_to_string, Scalar};

/// Index up to which [`asymptotic_ni`] uses exact Motzkin numbers.
pub const ASYMPTOTIC_CROSSOVER: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Float64,
    ExactRational,
}

/// Coefficients `c_0 ..= c_m_max` in one of the two arithmetic modes.
#[derive(Clone, Debug, PartialEq)]
pub enum CoeffSequence {
    Float64(Vec<f64>),
    ExactRational(Vec<BigRational>),
}

impl CoeffSequence {
    pub fn mode(&self) -> Mode {
        match self {
            CoeffSequence::Float64(_) => Mode::Float64,
            CoeffSequence::ExactRational(_) => Mode::ExactRational,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            CoeffSequence::Float64(c) => c.len(),
            CoeffSequence::ExactRational(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            CoeffSequence::Float64(c) => c.clone(),
            CoeffSequence::ExactRational(c) => c.iter().map(Scalar::to_f64).collect(),
        }
    }

    /// Text form of each coefficient: shortest round-trip decimal for floats,
    /// exact integer or `p/q` for rationals.
    pub fn to_strings(&self) -> Vec<String> {
        match self {
            CoeffSequence::Float64(c) => c.iter().map(|v| format!("{v:?}")).collect(),
            CoeffSequence::ExactRational(c) => c.iter().map(rational_to_string).collect(),
        }
    }
}

/// Initial data `c_0 = c_1` of the inverse-power case; `theta = 0` gives 1.
pub fn c_initial(theta: f64) -> f64 {
    if theta.is_infinite() {
        return 0.25;
    }
    (1.0 + 1.5 * theta + theta * theta) / (1.0 + 4.0 * theta + 4.0 * theta * theta)
}

pub fn c_initial_exact(theta: &BigRational) -> BigRational {
    let one = BigRational::from_integer(1.into());
    let t2 = theta * theta;
    let num = &one + theta * BigRational::new(3.into(), 2.into()) + &t2;
    let den = &one + theta * BigRational::from_integer(4.into()) + t2 * BigRational::from_integer(4.into());
    num / den
}

/// Runs the recurrence from `c_0, c_1`, returning `c_0 ..= c_{m_max}`.
pub fn run_recurrence<T: Scalar>(c0: T, c1: T, m_max: usize) -> Result<Vec<T>> {
    let mut c = Vec::with_capacity(m_max + 1);
    c.push(c0);
    if m_max >= 1 {
        c.push(c1);
    }
    for next in 2..=m_max {
        let m = next - 2;
        let conv = T::sum((0..=m).map(|k| c[k].clone() * c[m - k].clone()));
        let value = c[next - 1].clone() + conv;
        if !value.is_finite() {
            return Err(Error::Overflow { index: next });
        }
        c.push(value);
    }
    Ok(c)
}

/// [`run_recurrence`] dispatched on `mode`. In exact mode the float inputs are
/// converted to the rationals they represent exactly.
pub fn run_recurrence_mode(c0: f64, c1: f64, m_max: usize, mode: Mode) -> Result<CoeffSequence> {
    match mode {
        Mode::Float64 => Ok(CoeffSequence::Float64(run_recurrence(c0, c1, m_max)?)),
        Mode::ExactRational => {
            let to_q =
                |v: f64| BigRational::from_float(v).ok_or_else(|| Error::Domain(format!("{v} is not a finite value")));
            Ok(CoeffSequence::ExactRational(run_recurrence(to_q(c0)?, to_q(c1)?, m_max)?))
        }
    }
}

/// Coefficients `c_0 ..= c_order` read off the generating function.
pub fn gf_coeffs<T: Scalar>(c0: T, c1: T, order: usize) -> Result<Vec<T>> {
    let four = T::from_i64(4);
    let work = order + 2;
    let radicand =
        PowerSeries::new(vec![T::one(), T::from_i64(-2), T::one() - four.clone() * c0.clone(), four * (c0 - c1)], work);
    let root = radicand.sqrt()?;
    let one_minus_z = PowerSeries::new(vec![T::one(), -T::one()], work);
    let numerator = &one_minus_z - &root;
    let scale = numerator.coeffs().iter().map(|c| c.to_f64().abs()).fold(0.0, f64::max);
    for k in 0..2 {
        if !numerator.coeff(k).negligible(scale) {
            return Err(Error::Inconsistent(format!(
                "generating-function numerator has non-zero z^{k} coefficient {:?}",
                numerator.coeff(k)
            )));
        }
    }
    let half = T::from_ratio(1, 2);
    Ok(numerator.div_z_pow(2)?.scale(&half).into_coeffs())
}

/// Generalised binomial coefficient `a (a-1) ... (a-n+1) / n!`.
pub fn binomial<T: Scalar>(a: &T, n: usize) -> T {
    let mut acc = T::one();
    for i in 0..n {
        let i = i as i64;
        acc = acc * (a.clone() - T::from_i64(i)) / T::from_i64(i + 1);
    }
    acc
}

/// Closed-form coefficient for `c_0 = c_1`:
///
/// `c_m = 1/2 sum_{j=0}^{floor((m+2)/2)} k^j / ((m-j+2) 2^{m-j}) * C(2(m-j)+1, m-j+1) * C(m-j+2, j)`
///
/// with `k = 2 c_0 - 1/2`. The sum holds for `m >= 1`; `m = 0` returns `c_0`.
/// Terms are added in increasing `j` (compensated in `f64`).
pub fn closed_form_c<T: Scalar>(m: usize, c0: &T) -> T {
    if m == 0 {
        return c0.clone();
    }
    let k = T::from_i64(2) * c0.clone() - T::from_ratio(1, 2);
    let mut k_pow = T::one();
    let mut terms = Vec::with_capacity(m / 2 + 2);
    for j in 0..=(m + 2) / 2 {
        let r = m - j;
        let denom = T::from_bigint(&(BigInt::from(r + 2) << r));
        let b1 = binomial(&T::from_i64(2 * r as i64 + 1), r + 1);
        let b2 = binomial(&T::from_i64(r as i64 + 2), j);
        terms.push(k_pow.clone() / denom * b1 * b2);
        k_pow = k_pow * k.clone();
    }
    T::sum(terms) * T::from_ratio(1, 2)
}

/// Motzkin numbers `M_0 ..= M_{m_max}`.
pub fn motzkin_numbers(m_max: usize) -> Vec<BigUint> {
    let mut m: Vec<BigUint> = Vec::with_capacity(m_max + 1);
    for n in 0..=m_max {
        let value = if n < 2 {
            BigUint::from(1u32)
        } else {
            let j = n - 2;
            let mut conv = BigUint::zero();
            for k in 0..=j {
                conv += &m[k] * &m[j - k];
            }
            &m[n - 1] + conv
        };
        m.push(value);
    }
    m
}

fn motzkin_table() -> &'static [BigUint] {
    static TABLE: OnceLock<Vec<BigUint>> = OnceLock::new();
    TABLE.get_or_init(|| motzkin_numbers(ASYMPTOTIC_CROSSOVER))
}

/// `sqrt(3 / (4 pi)) * 3^(i+1) / i^(3/2)`. Overflows to infinity past `i ~ 640`.
pub fn motzkin_asymptotic(i: usize) -> f64 {
    let i = i as f64;
    (3.0 / (4.0 * std::f64::consts::PI)).sqrt() * 3f64.powf(i + 1.0) / i.powf(1.5)
}

/// Small-theta limit `n_i -> N theta (1/3)^i M_{i-1}`.
///
/// Uses exact Motzkin numbers below [`ASYMPTOTIC_CROSSOVER`] and the
/// Motzkin asymptotic from there on, where the powers of three cancel:
/// `n_i ~ N theta sqrt(3 / (4 pi)) (i-1)^(-3/2)`.
pub fn asymptotic_ni(i: usize, n_theta: f64) -> f64 {
    assert!(i >= 2, "asymptotic_ni needs i >= 2");
    if i < ASYMPTOTIC_CROSSOVER {
        n_theta * motzkin_over_power_of_three(&motzkin_table()[i - 1], i)
    } else {
        n_theta * (3.0 / (4.0 * std::f64::consts::PI)).sqrt() / ((i - 1) as f64).powf(1.5)
    }
}

/// Small-theta limit form `N theta (1/3)^i M_{i-1}` for `i = 1 ..= i_max`,
/// using exact Motzkin numbers throughout.
pub fn limit_form_sequence(i_max: usize, n_theta: f64) -> Vec<f64> {
    let motzkin = motzkin_numbers(i_max.saturating_sub(1));
    (1..=i_max).map(|i| n_theta * motzkin_over_power_of_three(&motzkin[i - 1], i)).collect()
}

fn motzkin_over_power_of_three(m: &BigUint, i: usize) -> f64 {
    let ratio = BigRational::new(BigInt::from(m.clone()), BigInt::from(num_traits::pow(BigUint::from(3u32), i)));
    Scalar::to_f64(&ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use num_traits::ToPrimitive;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    const MOTZKIN_HEAD: [u64; 11] = [1, 1, 2, 4, 9, 21, 51, 127, 323, 835, 2188];

    #[test]
    fn c_initial_values() {
        assert_eq!(c_initial(0.0), 1.0);
        assert_relative_eq!(c_initial(1.0), 7.0 / 18.0, max_relative = 1e-15);
        assert_relative_eq!(c_initial(1e9), 0.25, max_relative = 1e-8);
        assert_eq!(c_initial(f64::INFINITY), 0.25);
        assert_eq!(c_initial_exact(&q(1, 1)), q(7, 18));
        assert_eq!(c_initial_exact(&q(0, 1)), q(1, 1));
    }

    #[test]
    fn recurrence_gives_motzkin_numbers() {
        let c = run_recurrence(q(1, 1), q(1, 1), 10).unwrap();
        let expected: Vec<_> = MOTZKIN_HEAD.iter().map(|&v| q(v as i64, 1)).collect();
        assert_eq!(c, expected);
    }

    #[test]
    fn recurrence_single_step_by_hand() {
        let c0 = q(7, 18);
        let c = run_recurrence(c0.clone(), c0, 3).unwrap();
        assert_eq!(c[2], q(175, 324));
        assert_eq!(c.len(), 4);
    }

    #[test]
    fn recurrence_zero_fixed_point() {
        assert!(run_recurrence(0.0, 0.0, 5).unwrap().iter().all(|&v| v == 0.0));
        let exact = run_recurrence_mode(0.0, 0.0, 5, Mode::ExactRational).unwrap();
        assert!(exact.to_f64().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn recurrence_overflow_names_index() {
        match run_recurrence(1e150, 1e150, 20) {
            Err(Error::Overflow { index }) => assert!(index >= 2 && index <= 20),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn recurrence_short_lengths() {
        assert_eq!(run_recurrence(1.0, 1.0, 0).unwrap(), vec![1.0]);
        assert_eq!(run_recurrence(1.0, 2.0, 1).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn gf_reproduces_motzkin_exactly() {
        let c = gf_coeffs(q(1, 1), q(1, 1), 10).unwrap();
        let expected: Vec<_> = MOTZKIN_HEAD.iter().map(|&v| q(v as i64, 1)).collect();
        assert_eq!(c, expected);
    }

    #[test]
    fn gf_general_radicand_matches_recurrence() {
        let oracle = run_recurrence(q(1, 1), q(2, 1), 20).unwrap();
        assert_eq!(gf_coeffs(q(1, 1), q(2, 1), 20).unwrap(), oracle);
        let oracle = run_recurrence(1.0, 2.0, 20).unwrap();
        let got = gf_coeffs(1.0, 2.0, 20).unwrap();
        for (a, b) in got.iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn gf_float_matches_recurrence_at_theta_one() {
        let c0 = c_initial(1.0);
        let oracle = run_recurrence(c0, c0, 30).unwrap();
        let got = gf_coeffs(c0, c0, 30).unwrap();
        assert_eq!(got.len(), 31);
        for (a, b) in got.iter().zip(&oracle) {
            assert_relative_eq!(*a, *b, max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_form_hand_values() {
        assert_eq!(closed_form_c(1, &q(1, 1)), q(1, 1));
        assert_eq!(closed_form_c(2, &q(1, 1)), q(2, 1));
        assert_eq!(closed_form_c(0, &q(7, 18)), q(7, 18));
        assert_relative_eq!(closed_form_c(1, &1.0), 1.0, max_relative = 1e-15);
    }

    #[test]
    fn closed_form_matches_recurrence_exactly() {
        for c0 in [q(1, 1), q(7, 18), q(1, 2), q(1, 4)] {
            let oracle = run_recurrence(c0.clone(), c0.clone(), 30).unwrap();
            for (m, expected) in oracle.iter().enumerate() {
                assert_eq!(&closed_form_c(m, &c0), expected, "m={m}");
            }
        }
    }

    #[test]
    fn closed_form_float_matches_recurrence() {
        for theta in [0.25, 1.0, 4.0] {
            let c0 = c_initial(theta);
            let oracle = run_recurrence(c0, c0, 40).unwrap();
            for m in 1..=40 {
                assert_relative_eq!(closed_form_c(m, &c0), oracle[m], max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn generalized_binomial_identities() {
        assert_eq!(binomial(&2.5, 0), 1.0);
        assert_eq!(binomial(&q(3, 1), 5), q(0, 1));
        assert_eq!(binomial(&q(1, 2), 2), q(-1, 8));
        assert_eq!(binomial(&q(-1, 1), 3), q(-1, 1));
        assert_eq!(binomial(&q(7, 1), 3), q(35, 1));
    }

    proptest::proptest! {
        #[test]
        fn pascal_rule_for_real_upper_index(a in -20.0f64..20.0, n in 1usize..15) {
            let lhs = binomial(&a, n);
            let rhs = binomial(&(a - 1.0), n) + binomial(&(a - 1.0), n - 1);
            proptest::prop_assert!((lhs - rhs).abs() <= 1e-9 * lhs.abs().max(1.0));
        }

        #[test]
        fn positivity_propagates(c0 in 1e-3f64..2.0, c1 in 1e-3f64..2.0) {
            let c = run_recurrence(c0, c1, 40).unwrap();
            proptest::prop_assert!(c.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn motzkin_numbers_match_recurrence() {
        let m = motzkin_numbers(60);
        let exact = run_recurrence(q(1, 1), q(1, 1), 60).unwrap();
        for (a, b) in m.iter().zip(&exact) {
            assert!(b.is_integer());
            assert_eq!(BigInt::from(a.clone()), b.to_integer());
        }
    }

    #[test]
    fn motzkin_asymptotic_values() {
        // sqrt(3/(4 pi)) = 0.48860251190291992..., reference values from a
        // 40-digit evaluation of the formula
        let s = 0.488_602_511_902_919_9_f64;
        assert_relative_eq!(motzkin_asymptotic(1), 9.0 * s, max_relative = 1e-14);
        assert_relative_eq!(motzkin_asymptotic(1), 4.397_422_607_126_279, max_relative = 1e-14);
        assert_relative_eq!(motzkin_asymptotic(10), 2_737.092_642_632_078_6, max_relative = 1e-14);
    }

    #[test]
    fn motzkin_asymptotic_ratio_converges_like_one_over_i() {
        // asymptotic / exact = 1 + 39/(16 i) + O(1/i^2)
        let m = motzkin_numbers(400);
        let ratio = |i: usize| motzkin_asymptotic(i) / m[i].to_f64().unwrap();
        assert_relative_eq!(ratio(10), 1.250_956_418_021_973_8, max_relative = 1e-12);
        assert_relative_eq!(ratio(200), 1.012_205_887_730_448_8, max_relative = 1e-12);
        let mut last = f64::INFINITY;
        for i in (50..=400).step_by(50) {
            let r = ratio(i);
            assert!(r > 1.0 && r < last);
            assert!(((r - 1.0) * i as f64 - 39.0 / 16.0).abs() < 0.05);
            last = r;
        }
        assert!(ratio(250) - 1.0 < 0.01);
    }

    #[test]
    fn asymptotic_ni_forms() {
        assert_relative_eq!(asymptotic_ni(3, 1.0), 2.0 / 27.0, max_relative = 1e-15);
        for i in [2, 10, 63, 64, 150] {
            assert_relative_eq!(asymptotic_ni(i, 2.5), 2.0 * asymptotic_ni(i, 1.25), max_relative = 1e-15);
        }
        // the asymptotic branch starts within its 1/i accuracy of the exact form
        let exact = limit_form_sequence(70, 1.0);
        assert_relative_eq!(exact[62], asymptotic_ni(63, 1.0), max_relative = 1e-14);
        for i in [64, 70] {
            let rel = asymptotic_ni(i, 1.0) / exact[i - 1] - 1.0;
            assert!(rel > 0.0 && rel < 2.5 / (i - 1) as f64, "i={i} rel={rel}");
        }
    }

    #[test]
    fn growth_rate_tends_to_three() {
        // c_{m+1}/c_m = 3 - 9/(2m) + O(1/m^2): monotone approach from below
        let c = run_recurrence(1.0, 1.0, 601).unwrap();
        let rate = |m: usize| c[m + 1] / c[m];
        let mut last = 0.0;
        for m in (50..=600).step_by(50) {
            assert!(rate(m) > last && rate(m) < 3.0);
            last = rate(m);
        }
        assert!((3.0 - rate(200)) * 200.0 > 4.0 && (3.0 - rate(200)) * 200.0 < 4.5);
        assert!(3.0 - rate(500) < 0.01);
    }
}
