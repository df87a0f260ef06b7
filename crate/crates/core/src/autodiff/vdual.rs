//! Fixed-width forward-mode duals for residual assembly.
//!
//! The residual evaluators are written once, generically over [`Scalar`].
//! Instantiated at `f64` they report residual values; instantiated at
//! [`VDual`] with one slot per jet component and unknown coefficient they
//! also report every partial derivative the training backward pass needs.
//! Residual algebra only ever multiplies, adds, and rescales by constants,
//! so the trait stays that small.

use std::ops::{Add, Mul, Neg, Sub};

pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    /// Multiply by a constant.
    fn scale(self, k: f64) -> Self;
    /// Add a constant.
    fn shift(self, k: f64) -> Self;
    fn value(&self) -> f64;
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn shift(self, k: f64) -> Self {
        self + k
    }
    fn value(&self) -> f64 {
        *self
    }
}

/// Value plus derivatives with respect to `N` fixed independents.
#[derive(Clone, Copy, Debug)]
pub struct VDual<const N: usize> {
    pub v: f64,
    pub d: [f64; N],
}

impl<const N: usize> VDual<N> {
    pub fn constant(v: f64) -> Self {
        VDual { v, d: [0.0; N] }
    }

    /// Independent `slot` with seed derivative `dv` (the chain factor of the
    /// quantity it stands for).
    pub fn seeded(v: f64, slot: usize, dv: f64) -> Self {
        let mut d = [0.0; N];
        d[slot] = dv;
        VDual { v, d }
    }
}

impl<const N: usize> Add for VDual<N> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] += rhs.d[i];
        }
        VDual { v: self.v + rhs.v, d }
    }
}

impl<const N: usize> Sub for VDual<N> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        let mut d = self.d;
        for i in 0..N {
            d[i] -= rhs.d[i];
        }
        VDual { v: self.v - rhs.v, d }
    }
}

impl<const N: usize> Mul for VDual<N> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; N];
        for i in 0..N {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        VDual { v: self.v * rhs.v, d }
    }
}

impl<const N: usize> Neg for VDual<N> {
    type Output = Self;
    fn neg(self) -> Self {
        VDual { v: -self.v, d: self.d.map(|x| -x) }
    }
}

impl<const N: usize> Scalar for VDual<N> {
    fn from_f64(v: f64) -> Self {
        Self::constant(v)
    }
    fn scale(self, k: f64) -> Self {
        VDual { v: self.v * k, d: self.d.map(|x| x * k) }
    }
    fn shift(self, k: f64) -> Self {
        VDual { v: self.v + k, d: self.d }
    }
    fn value(&self) -> f64 {
        self.v
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn product_rule_and_seeding() {
        let a = VDual::<3>::seeded(2.0, 0, 1.0);
        let b = VDual::<3>::seeded(5.0, 1, 1.0);
        let p = a * b;
        assert_eq!(p.v, 10.0);
        assert_eq!(p.d, [5.0, 2.0, 0.0]);

        // scaled seed: d(a)/d(underlying) = 3
        let c = VDual::<3>::seeded(2.0, 2, 3.0);
        let q = c * c;
        assert_abs_diff_eq!(q.d[2], 2.0 * 2.0 * 3.0, epsilon = 1e-15);
    }

    #[test]
    fn affine_combination() {
        let a = VDual::<2>::seeded(1.5, 0, 1.0);
        let b = VDual::<2>::seeded(-0.5, 1, 1.0);
        let f = (a.scale(2.0) - b).shift(7.0) + (-a);
        assert_abs_diff_eq!(f.v, 2.0 * 1.5 + 0.5 + 7.0 - 1.5, epsilon = 1e-15);
        assert_eq!(f.d, [1.0, -1.0]);
    }
}
