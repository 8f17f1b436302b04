//! Truncated formal power series in one variable.
//!
//! A series of order `k` keeps the coefficients of `z^0 ..= z^k`. Every
//! operation produces coefficients that are exact up to that order: terms of
//! higher degree are dropped, never folded back.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

use super::scalar::{abs_f64, Scalar};

#[derive(Clone, Debug, PartialEq)]
pub struct PowerSeries<T> {
    coeffs: Vec<T>,
}

impl<T: Scalar> PowerSeries<T> {
    /// Series of the given order; missing coefficients are zero and extra
    /// ones are truncated.
    pub fn new(mut coeffs: Vec<T>, order: usize) -> Self {
        coeffs.resize(order + 1, T::zero());
        Self { coeffs }
    }

    pub fn constant(value: T, order: usize) -> Self {
        Self::new(vec![value], order)
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[T] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<T> {
        self.coeffs
    }

    pub fn coeff(&self, k: usize) -> T {
        self.coeffs.get(k).cloned().unwrap_or_else(T::zero)
    }

    pub fn scale(&self, factor: &T) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c.clone() * factor.clone()).collect() }
    }

    /// Multiply by `z^k`, keeping the order.
    pub fn shift(&self, k: usize) -> Self {
        let order = self.order();
        let mut coeffs = vec![T::zero(); k.min(order + 1)];
        coeffs.extend(self.coeffs.iter().take((order + 1).saturating_sub(k)).cloned());
        Self { coeffs }
    }

    /// Exact division by `z^k`. The `k` lowest coefficients must vanish; the
    /// result has order `order - k`.
    pub fn div_z_pow(&self, k: usize) -> Result<Self> {
        if k > self.order() {
            return Err(Error::Domain(format!("cannot divide an order-{} series by z^{k}", self.order())));
        }
        let scale = self.coeffs.iter().map(abs_f64).fold(0.0, f64::max);
        for (j, c) in self.coeffs[..k].iter().enumerate() {
            if !c.negligible(scale) {
                return Err(Error::Inconsistent(format!("coefficient of z^{j} is {c:?}, not divisible by z^{k}")));
            }
        }
        Ok(Self { coeffs: self.coeffs[k..].to_vec() })
    }

    /// Square root of a series with unit constant term.
    ///
    /// Solves `t * t = s` coefficient by coefficient:
    /// `t_n = (s_n - sum_{k=1}^{n-1} t_k t_{n-k}) / 2`, which is exact in
    /// rational arithmetic.
    pub fn sqrt(&self) -> Result<Self> {
        if self.coeffs[0] != T::one() {
            return Err(Error::Domain(format!("series square root needs constant term 1, got {:?}", self.coeffs[0])));
        }
        let two = T::from_i64(2);
        let mut t: Vec<T> = Vec::with_capacity(self.coeffs.len());
        t.push(T::one());
        for n in 1..self.coeffs.len() {
            let conv = T::sum((1..n).map(|k| t[k].clone() * t[n - k].clone()));
            t.push((self.coeffs[n].clone() - conv) / two.clone());
        }
        Ok(Self { coeffs: t })
    }

    fn common_order(&self, other: &Self) -> usize {
        self.order().min(other.order())
    }
}

impl<T: Scalar> Add for &PowerSeries<T> {
    type Output = PowerSeries<T>;

    fn add(self, rhs: Self) -> PowerSeries<T> {
        let order = self.common_order(rhs);
        PowerSeries { coeffs: (0..=order).map(|k| self.coeffs[k].clone() + rhs.coeffs[k].clone()).collect() }
    }
}

impl<T: Scalar> Sub for &PowerSeries<T> {
    type Output = PowerSeries<T>;

    fn sub(self, rhs: Self) -> PowerSeries<T> {
        let order = self.common_order(rhs);
        PowerSeries { coeffs: (0..=order).map(|k| self.coeffs[k].clone() - rhs.coeffs[k].clone()).collect() }
    }
}

impl<T: Scalar> Mul for &PowerSeries<T> {
    type Output = PowerSeries<T>;

    fn mul(self, rhs: Self) -> PowerSeries<T> {
        let order = self.common_order(rhs);
        let coeffs =
            (0..=order).map(|n| T::sum((0..=n).map(|k| self.coeffs[k].clone() * rhs.coeffs[n - k].clone()))).collect();
        PowerSeries { coeffs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use proptest::prelude::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(p.into(), d.into())
    }

    #[test]
    fn sqrt_of_one_is_one() {
        let s = PowerSeries::constant(1.0, 8);
        assert_eq!(s.sqrt().unwrap(), s);
    }

    #[test]
    fn sqrt_rejects_non_unit_constant() {
        let s = PowerSeries::new(vec![4.0, 1.0], 4);
        assert!(matches!(s.sqrt(), Err(Error::Domain(_))));
        let z = PowerSeries::new(vec![0.0, 1.0], 4);
        assert!(z.sqrt().is_err());
    }

    #[test]
    fn exact_sqrt_of_motzkin_radicand() {
        // 1 - 2z - 3z^2
        let s = PowerSeries::new(vec![q(1, 1), q(-2, 1), q(-3, 1)], 12);
        let t = s.sqrt().unwrap();
        assert_eq!(&t * &t, s);
        let head: Vec<_> = t.coeffs()[..5].to_vec();
        assert_eq!(head, vec![q(1, 1), q(-1, 1), q(-2, 1), q(-2, 1), q(-4, 1)]);
    }

    #[test]
    fn shift_and_divide() {
        let s = PowerSeries::new(vec![1.0, 2.0, 3.0], 4);
        let up = s.shift(2);
        assert_eq!(up.coeffs(), &[0.0, 0.0, 1.0, 2.0, 3.0]);
        let down = up.div_z_pow(2).unwrap();
        assert_eq!(down.coeffs(), &[1.0, 2.0, 3.0]);
        assert!(matches!(s.div_z_pow(1), Err(Error::Inconsistent(_))));
        assert!(s.div_z_pow(9).is_err());
    }

    #[test]
    fn mul_truncates_without_touching_low_orders() {
        let a = PowerSeries::new(vec![1.0, 1.0], 3);
        let b = &(&a * &a) * &a;
        assert_eq!(b.coeffs(), &[1.0, 3.0, 3.0, 1.0]);
        let c = &b * &b; // (1+z)^6 truncated at z^3
        assert_eq!(c.coeffs(), &[1.0, 6.0, 15.0, 20.0]);
        let d = &c - &c;
        assert!(d.coeffs().iter().all(|&x| x == 0.0));
        assert_eq!((&a + &a).scale(&0.5), a);
    }

    proptest! {
        #[test]
        fn sqrt_squares_back(tail in proptest::collection::vec(-2.0f64..2.0, 32)) {
            let mut coeffs = vec![1.0];
            coeffs.extend(tail);
            let s = PowerSeries::new(coeffs, 32);
            let t = s.sqrt().unwrap();
            let back = &t * &t;
            let scale = t.coeffs().iter().map(|c| c.abs()).fold(1.0, f64::max);
            for (x, y) in back.coeffs().iter().zip(s.coeffs()) {
                prop_assert!((x - y).abs() <= 1e-9 * scale * scale);
            }
        }
    }
}
