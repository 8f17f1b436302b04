use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Coefficient field shared by the float and exact-rational pipelines.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + PartialOrd
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_ratio(num: i64, den: i64) -> Self;

    fn from_bigint(v: &BigInt) -> Self;

    fn to_f64(&self) -> f64;

    fn is_finite(&self) -> bool;

    /// Whether `self` is zero up to rounding, relative to `scale`.
    fn negligible(&self, scale: f64) -> bool;

    fn sum<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        terms.into_iter().fold(Self::zero(), |acc, t| acc + t)
    }

    fn from_i64(v: i64) -> Self {
        Self::from_ratio(v, 1)
    }
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_bigint(v: &BigInt) -> Self {
        v.to_f64().unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }

    fn negligible(&self, scale: f64) -> bool {
        self.abs() <= 1e-12 * scale.abs().max(1.0)
    }

    /// Neumaier-compensated summation.
    fn sum<I: IntoIterator<Item = Self>>(terms: I) -> Self {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for t in terms {
            let s = sum + t;
            if sum.abs() >= t.abs() {
                comp += (sum - s) + t;
            } else {
                comp += (t - s) + sum;
            }
            sum = s;
        }
        sum + comp
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_bigint(v: &BigInt) -> Self {
        BigRational::from_integer(v.clone())
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn is_finite(&self) -> bool {
        true
    }

    fn negligible(&self, _scale: f64) -> bool {
        self.is_zero()
    }
}

/// Exact rational from a decimal literal such as `"0.25"`, `"-3"` or `"1e-2"`.
pub fn rational_from_decimal(text: &str) -> Option<BigRational> {
    let text = text.trim();
    let (mantissa, exponent) = match text.find(['e', 'E']) {
        Some(pos) => (&text[..pos], text[pos + 1..].parse::<i32>().ok()?),
        None => (text, 0),
    };
    let (negative, digits) = match mantissa.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let all_digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if all_digits.is_empty() { BigInt::zero() } else { all_digits.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = BigRational::from_integer(numer);
    if scale >= 0 {
        value *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        value /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Some(if negative { -value } else { value })
}

/// Decimal text for an exact value: an integer, or `p/q` when not integral.
pub fn rational_to_string(v: &BigRational) -> String {
    if v.is_integer() {
        v.to_integer().to_string()
    } else {
        format!("{}/{}", v.numer(), v.denom())
    }
}

/// Parse the output of [`rational_to_string`].
pub fn rational_from_string(text: &str) -> Option<BigRational> {
    match text.split_once('/') {
        Some((p, q)) => {
            let q: BigInt = q.trim().parse().ok()?;
            if q.is_zero() {
                return None;
            }
            Some(BigRational::new(p.trim().parse().ok()?, q))
        }
        None => Some(BigRational::from_integer(text.trim().parse().ok()?)),
    }
}

pub(crate) fn abs_f64<T: Scalar>(v: &T) -> f64 {
    v.to_f64().abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing() {
        let r = |p: i64, q: i64| BigRational::new(p.into(), q.into());
        assert_eq!(rational_from_decimal("0.25"), Some(r(1, 4)));
        assert_eq!(rational_from_decimal("0.1"), Some(r(1, 10)));
        assert_eq!(rational_from_decimal("-3"), Some(r(-3, 1)));
        assert_eq!(rational_from_decimal("1e-2"), Some(r(1, 100)));
        assert_eq!(rational_from_decimal("2.5E1"), Some(r(25, 1)));
        assert_eq!(rational_from_decimal(".5"), Some(r(1, 2)));
        assert_eq!(rational_from_decimal("abc"), None);
        assert_eq!(rational_from_decimal(""), None);
    }

    #[test]
    fn rational_text_round_trip() {
        let v = BigRational::new(175.into(), 324.into());
        assert_eq!(rational_to_string(&v), "175/324");
        assert_eq!(rational_from_string("175/324"), Some(v));
        assert_eq!(rational_to_string(&BigRational::from_integer(2188.into())), "2188");
        assert_eq!(rational_from_string("1/0"), None);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let terms = [1e16, 1.0, -1e16, 1.0];
        assert_eq!(<f64 as Scalar>::sum(terms), 2.0);
    }
}
