//! Scalar jets: value, gradient, and diagonal second derivatives.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// A scalar together with its first derivatives with respect to up to four
/// inputs and its diagonal second derivatives with respect to the first
/// three (spatial) inputs.
///
/// Mixed second partials are never tracked: every term in the equations is a
/// pure `d/dt`, `d/dx_i`, or `d2/dx_i2`, and the diagonal chain rule
/// `h(f)_ii = h''(f) f_i^2 + h'(f) f_ii` closes on exactly this data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: [f64; 4],
    pub second: [f64; 3],
}

impl Jet2 {
    pub const fn constant(value: f64) -> Self {
        Jet2 { value, grad: [0.0; 4], second: [0.0; 3] }
    }

    /// Seed input variable `i` (derivative one, curvature zero).
    pub fn variable(value: f64, i: usize) -> Self {
        let mut grad = [0.0; 4];
        grad[i] = 1.0;
        Jet2 { value, grad, second: [0.0; 3] }
    }

    pub fn scale(self, k: f64) -> Self {
        Jet2 {
            value: self.value * k,
            grad: self.grad.map(|g| g * k),
            second: self.second.map(|s| s * k),
        }
    }

    /// Chain rule through a unary map given `h(v)`, `h'(v)`, `h''(v)`.
    fn unary(self, h: f64, dh: f64, ddh: f64) -> Self {
        let mut second = [0.0; 3];
        for i in 0..3 {
            second[i] = ddh * self.grad[i] * self.grad[i] + dh * self.second[i];
        }
        Jet2 { value: h, grad: self.grad.map(|g| dh * g), second }
    }

    pub fn tanh(self) -> Self {
        let h = self.value.tanh();
        let g = 1.0 - h * h;
        self.unary(h, g, -2.0 * h * g)
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.unary(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.unary(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.value.exp();
        self.unary(e, e, e)
    }

    pub fn recip(self) -> Self {
        let inv = 1.0 / self.value;
        self.unary(inv, -inv * inv, 2.0 * inv * inv * inv)
    }
}

impl Add for Jet2 {
    type Output = Jet2;
    fn add(self, rhs: Jet2) -> Jet2 {
        let mut out = self;
        out.value += rhs.value;
        for i in 0..4 {
            out.grad[i] += rhs.grad[i];
        }
        for i in 0..3 {
            out.second[i] += rhs.second[i];
        }
        out
    }
}

impl Sub for Jet2 {
    type Output = Jet2;
    fn sub(self, rhs: Jet2) -> Jet2 {
        self + (-rhs)
    }
}

impl Neg for Jet2 {
    type Output = Jet2;
    fn neg(self) -> Jet2 {
        self.scale(-1.0)
    }
}

impl Mul for Jet2 {
    type Output = Jet2;
    fn mul(self, rhs: Jet2) -> Jet2 {
        let mut grad = [0.0; 4];
        for i in 0..4 {
            grad[i] = self.grad[i] * rhs.value + self.value * rhs.grad[i];
        }
        let mut second = [0.0; 3];
        for i in 0..3 {
            second[i] = self.second[i] * rhs.value
                + 2.0 * self.grad[i] * rhs.grad[i]
                + self.value * rhs.second[i];
        }
        Jet2 { value: self.value * rhs.value, grad, second }
    }
}

impl Div for Jet2 {
    type Output = Jet2;
    fn div(self, rhs: Jet2) -> Jet2 {
        self * rhs.recip()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_jet(rng: &mut ChaCha8Rng) -> Jet2 {
        Jet2 {
            value: rng.random_range(-2.0..2.0),
            grad: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
            second: std::array::from_fn(|_| rng.random_range(-2.0..2.0)),
        }
    }

    #[test]
    fn constants_have_zero_derivatives() {
        let c = Jet2::constant(3.5);
        assert_eq!(c.grad, [0.0; 4]);
        assert_eq!(c.second, [0.0; 3]);
        let t = c.tanh();
        assert_eq!(t.grad, [0.0; 4]);
        assert_eq!(t.second, [0.0; 3]);
    }

    #[test]
    fn linear_neuron_example() {
        // u(x) = 2x + 1 at x = 0.3
        let x = Jet2::variable(0.3, 0);
        let u = x.scale(2.0) + Jet2::constant(1.0);
        assert_abs_diff_eq!(u.value, 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(u.grad[0], 2.0, epsilon = 1e-15);
        assert_eq!(u.second[0], 0.0);
    }

    #[test]
    fn tanh_at_origin() {
        let x = Jet2::variable(0.0, 0);
        let u = x.tanh();
        assert_eq!(u.value, 0.0);
        assert_eq!(u.grad[0], 1.0);
        assert_eq!(u.second[0], 0.0);
    }

    #[test]
    fn affine_functions_have_exactly_zero_curvature() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let x = Jet2::variable(rng.random_range(-1.0..1.0), 0);
            let y = Jet2::variable(rng.random_range(-1.0..1.0), 1);
            let f = x.scale(rng.random_range(-3.0..3.0))
                + y.scale(rng.random_range(-3.0..3.0))
                + Jet2::constant(rng.random_range(-3.0..3.0));
            assert_eq!(f.second, [0.0; 3]);
        }
    }

    /// Linearity and product rule on randomized jets, 1000 trials each.
    #[test]
    fn linearity_and_product_rule_randomized() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..1000 {
            let f = random_jet(&mut rng);
            let g = random_jet(&mut rng);
            let (a, b) = (rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));

            let lin = f.scale(a) + g.scale(b);
            let prod = f * g;
            for i in 0..4 {
                assert_abs_diff_eq!(lin.grad[i], a * f.grad[i] + b * g.grad[i], epsilon = 1e-10);
                assert_abs_diff_eq!(
                    prod.grad[i],
                    f.grad[i] * g.value + f.value * g.grad[i],
                    epsilon = 1e-10
                );
            }
            for i in 0..3 {
                assert_abs_diff_eq!(
                    lin.second[i],
                    a * f.second[i] + b * g.second[i],
                    epsilon = 1e-10
                );
                assert_abs_diff_eq!(
                    prod.second[i],
                    f.second[i] * g.value + 2.0 * f.grad[i] * g.grad[i] + f.value * g.second[i],
                    epsilon = 1e-10
                );
            }
        }
    }

    proptest! {
        /// d/dx and d2/dx2 of sin(a x) * exp(b x) match the closed forms.
        #[test]
        fn chain_rule_against_closed_form(
            x in -1.5f64..1.5,
            a in -2.0f64..2.0,
            b in -1.0f64..1.0,
        ) {
            let xj = Jet2::variable(x, 0);
            let f = xj.scale(a).sin() * xj.scale(b).exp();
            let e = (b * x).exp();
            let val = (a * x).sin() * e;
            let d1 = e * (a * (a * x).cos() + b * (a * x).sin());
            let d2 = e * ((b * b - a * a) * (a * x).sin() + 2.0 * a * b * (a * x).cos());
            prop_assert!((f.value - val).abs() <= 1e-12);
            prop_assert!((f.grad[0] - d1).abs() <= 1e-10);
            prop_assert!((f.second[0] - d2).abs() <= 1e-9);
        }
    }
}
