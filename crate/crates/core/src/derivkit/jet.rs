//! Second-order spatial jets.
//!
//! A [`Jet2`] carries a value, the two first spatial derivatives and the two
//! pure second derivatives. Arithmetic propagates every slot by exact
//! second-order calculus rules, so evaluating a program on seeded jets yields
//! the exact derivatives of the program output with respect to x and y.
//!
//! No mixed ∂xy slot is carried: the residual operators only ever need
//! gradients and Laplacians, including the expanded form of
//! variable-coefficient diffusion κ′(T)∇T·∇f + κ(T)Δf.

use super::scalar::Scalar;
use super::DerivError;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Value plus (∂x, ∂y, ∂xx, ∂yy) slots, generic over the scalar type.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Jet2<S = f64> {
    pub val: S,
    pub dx: S,
    pub dy: S,
    pub dxx: S,
    pub dyy: S,
}

impl<S: Scalar> Jet2<S> {
    pub fn from_slots(val: S, dx: S, dy: S, dxx: S, dyy: S) -> Self {
        Jet2 { val, dx, dy, dxx, dyy }
    }

    /// Scale every slot by a plain constant.
    pub fn scale(self, c: f64) -> Self {
        Jet2 {
            val: self.val * c,
            dx: self.dx * c,
            dy: self.dy * c,
            dxx: self.dxx * c,
            dyy: self.dyy * c,
        }
    }

    /// Laplacian slot combination ∂xx + ∂yy.
    pub fn laplacian(&self) -> S {
        self.dxx + self.dyy
    }
}

impl Jet2<f64> {
    /// Seed the x coordinate at a point: (x0, 1, 0, 0, 0).
    pub fn var_x(x0: f64) -> Self {
        Jet2 { val: x0, dx: 1.0, dy: 0.0, dxx: 0.0, dyy: 0.0 }
    }

    /// Seed the y coordinate at a point: (y0, 0, 1, 0, 0).
    pub fn var_y(y0: f64) -> Self {
        Jet2 { val: y0, dx: 0.0, dy: 1.0, dxx: 0.0, dyy: 0.0 }
    }

    /// A spatial constant: all derivative slots zero.
    pub fn constant(c: f64) -> Self {
        Jet2 { val: c, dx: 0.0, dy: 0.0, dxx: 0.0, dyy: 0.0 }
    }

    pub fn zero() -> Self {
        Jet2::constant(0.0)
    }

    /// Compose with a scalar function given its first and second derivative
    /// at the jet value: (f∘a).dxx = f″·a.dx² + f′·a.dxx.
    fn compose(self, f: f64, df: f64, ddf: f64) -> Self {
        Jet2 {
            val: f,
            dx: df * self.dx,
            dy: df * self.dy,
            dxx: ddf * self.dx * self.dx + df * self.dxx,
            dyy: ddf * self.dy * self.dy + df * self.dyy,
        }
    }

    pub fn tanh(self) -> Self {
        let t = self.val.tanh();
        let dt = 1.0 - t * t;
        self.compose(t, dt, -2.0 * t * dt)
    }

    pub fn sigmoid(self) -> Self {
        let s = 1.0 / (1.0 + (-self.val).exp());
        let ds = s * (1.0 - s);
        self.compose(s, ds, ds * (1.0 - 2.0 * s))
    }

    pub fn sin(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.compose(s, c, -s)
    }

    pub fn cos(self) -> Self {
        let (s, c) = self.val.sin_cos();
        self.compose(c, -s, -c)
    }

    pub fn exp(self) -> Self {
        let e = self.val.exp();
        self.compose(e, e, e)
    }

    pub fn square(self) -> Self {
        self * self
    }

    /// Checked division; a zero-valued divisor is a domain error.
    pub fn try_div(self, rhs: Self) -> Result<Self, DerivError> {
        if rhs.val == 0.0 {
            return Err(DerivError::DivisionByZero);
        }
        Ok(self * rhs.recip())
    }

    /// Reciprocal 1/b with exact slot propagation.
    fn recip(self) -> Self {
        let b = self.val;
        let inv = 1.0 / b;
        let inv2 = inv * inv;
        let inv3 = inv2 * inv;
        Jet2 {
            val: inv,
            dx: -self.dx * inv2,
            dy: -self.dy * inv2,
            dxx: 2.0 * self.dx * self.dx * inv3 - self.dxx * inv2,
            dyy: 2.0 * self.dy * self.dy * inv3 - self.dyy * inv2,
        }
    }
}

impl<S: Scalar> Add for Jet2<S> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Jet2 {
            val: self.val + rhs.val,
            dx: self.dx + rhs.dx,
            dy: self.dy + rhs.dy,
            dxx: self.dxx + rhs.dxx,
            dyy: self.dyy + rhs.dyy,
        }
    }
}

impl<S: Scalar> Sub for Jet2<S> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Jet2 {
            val: self.val - rhs.val,
            dx: self.dx - rhs.dx,
            dy: self.dy - rhs.dy,
            dxx: self.dxx - rhs.dxx,
            dyy: self.dyy - rhs.dyy,
        }
    }
}

impl<S: Scalar> Neg for Jet2<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Jet2 {
            val: -self.val,
            dx: -self.dx,
            dy: -self.dy,
            dxx: -self.dxx,
            dyy: -self.dyy,
        }
    }
}

impl<S: Scalar> Mul for Jet2<S> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Jet2 {
            val: self.val * rhs.val,
            dx: self.dx * rhs.val + self.val * rhs.dx,
            dy: self.dy * rhs.val + self.val * rhs.dy,
            dxx: self.dxx * rhs.val + self.dx * rhs.dx * 2.0 + self.val * rhs.dxx,
            dyy: self.dyy * rhs.val + self.dy * rhs.dy * 2.0 + self.val * rhs.dyy,
        }
    }
}

impl Div for Jet2<f64> {
    type Output = Self;
    /// Panics on a zero-valued divisor; use [`Jet2::try_div`] to handle the
    /// domain error explicitly.
    fn div(self, rhs: Self) -> Self {
        self.try_div(rhs).expect("jet division by zero value")
    }
}

impl<S: Scalar> Mul<f64> for Jet2<S> {
    type Output = Self;
    fn mul(self, c: f64) -> Self {
        self.scale(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jet(val: f64, dx: f64, dy: f64, dxx: f64, dyy: f64) -> Jet2 {
        Jet2 { val, dx, dy, dxx, dyy }
    }

    #[test]
    fn seeding() {
        assert_eq!(Jet2::var_x(2.0), jet(2.0, 1.0, 0.0, 0.0, 0.0));
        assert_eq!(Jet2::var_y(-1.5), jet(-1.5, 0.0, 1.0, 0.0, 0.0));
    }

    #[test]
    fn x_squared_has_second_derivative_two() {
        let x = Jet2::var_x(2.0);
        assert_eq!(x * x, jet(4.0, 4.0, 0.0, 2.0, 0.0));
    }

    #[test]
    fn additive_identity() {
        let a = jet(1.3, -0.2, 0.7, 2.0, -4.0);
        assert_eq!(a + Jet2::zero(), a);
    }

    #[test]
    fn product_rule_hand_case() {
        // a(x) and b(x) with matching polynomial reconstructions: slot-by-slot
        // product rule gives (3, 7, 0, 7, 0).
        let a = jet(1.0, 2.0, 0.0, 1.0, 0.0);
        let b = jet(3.0, 1.0, 0.0, 0.0, 0.0);
        assert_eq!(a * b, jet(3.0, 7.0, 0.0, 7.0, 0.0));
    }

    #[test]
    fn division_by_zero_value_is_domain_error() {
        let a = jet(1.0, 0.0, 0.0, 0.0, 0.0);
        let b = jet(0.0, 1.0, 0.0, 0.0, 0.0);
        assert_eq!(a.try_div(b), Err(DerivError::DivisionByZero));
    }

    #[test]
    fn division_inverts_multiplication() {
        let a = jet(1.7, -0.3, 0.9, 0.4, -1.1);
        let b = jet(0.8, 0.5, -0.2, 1.3, 0.6);
        let q = (a * b) / b;
        for (got, want) in [
            (q.val, a.val),
            (q.dx, a.dx),
            (q.dy, a.dy),
            (q.dxx, a.dxx),
            (q.dyy, a.dyy),
        ] {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn unary_trivial_points() {
        let x = Jet2::var_x(0.0);
        assert_eq!(x.tanh(), jet(0.0, 1.0, 0.0, 0.0, 0.0));

        let s = Jet2::var_x(0.0).sigmoid();
        assert!((s.val - 0.5).abs() < 1e-15);
        assert!((s.dx - 0.25).abs() < 1e-15);
        assert_eq!((s.dy, s.dxx, s.dyy), (0.0, 0.0, 0.0));

        let h = Jet2::var_x(std::f64::consts::FRAC_PI_2).sin();
        assert!((h.val - 1.0).abs() < 1e-15);
        assert!(h.dx.abs() < 1e-15);
        assert!((h.dxx + 1.0).abs() < 1e-15);
        assert_eq!((h.dy, h.dyy), (0.0, 0.0));
    }

    /// Central finite differences of a plain-real function as an oracle.
    fn fd_check<F: Fn(f64, f64) -> f64>(
        f: F,
        jet_out: Jet2,
        x0: f64,
        y0: f64,
        tol1: f64,
        tol2: f64,
    ) {
        let h = 1e-4;
        let dx = (f(x0 + h, y0) - f(x0 - h, y0)) / (2.0 * h);
        let dy = (f(x0, y0 + h) - f(x0, y0 - h)) / (2.0 * h);
        let dxx = (f(x0 + h, y0) - 2.0 * f(x0, y0) + f(x0 - h, y0)) / (h * h);
        let dyy = (f(x0, y0 + h) - 2.0 * f(x0, y0) + f(x0, y0 - h)) / (h * h);
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1.0);
        assert!(rel(jet_out.dx, dx) < tol1, "dx {} vs {}", jet_out.dx, dx);
        assert!(rel(jet_out.dy, dy) < tol1, "dy {} vs {}", jet_out.dy, dy);
        assert!(rel(jet_out.dxx, dxx) < tol2, "dxx {} vs {}", jet_out.dxx, dxx);
        assert!(rel(jet_out.dyy, dyy) < tol2, "dyy {} vs {}", jet_out.dyy, dyy);
    }

    #[test]
    fn random_compositions_match_finite_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let a: f64 = rng.gen_range(-1.5..1.5);
            let b: f64 = rng.gen_range(-1.5..1.5);
            let c: f64 = rng.gen_range(-0.8..0.8);
            let x0: f64 = rng.gen_range(-1.0..1.0);
            let y0: f64 = rng.gen_range(-1.0..1.0);
            let f = |x: f64, y: f64| {
                ((a * x + b * y).sin() * (c * x).exp() + (x * y).tanh()).cos()
                    + 1.0 / (1.0 + (-(x - y)).exp())
            };
            let g = |x: Jet2, y: Jet2| {
                ((x.scale(a) + y.scale(b)).sin() * x.scale(c).exp() + (x * y).tanh()).cos()
                    + (x - y).sigmoid()
            };
            let out = g(Jet2::var_x(x0), Jet2::var_y(y0));
            assert!((out.val - f(x0, y0)).abs() < 1e-12);
            fd_check(f, out, x0, y0, 1e-5, 1e-3);
        }
    }

    #[test]
    fn cubic_polynomials_are_exact() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            // f = c0 + c1 x + c2 y + c3 x^2 + c4 x y + c5 y^2 + c6 x^3 + c7 x^2 y + c8 x y^2 + c9 y^3
            let c: Vec<f64> = (0..10).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let x0: f64 = rng.gen_range(-2.0..2.0);
            let y0: f64 = rng.gen_range(-2.0..2.0);
            let x = Jet2::var_x(x0);
            let y = Jet2::var_y(y0);
            let f = Jet2::constant(c[0])
                + x.scale(c[1])
                + y.scale(c[2])
                + (x * x).scale(c[3])
                + (x * y).scale(c[4])
                + (y * y).scale(c[5])
                + (x * x * x).scale(c[6])
                + (x * x * y).scale(c[7])
                + (x * y * y).scale(c[8])
                + (y * y * y).scale(c[9]);
            let dx = c[1] + 2.0 * c[3] * x0 + c[4] * y0 + 3.0 * c[6] * x0 * x0
                + 2.0 * c[7] * x0 * y0
                + c[8] * y0 * y0;
            let dy = c[2] + c[4] * x0 + 2.0 * c[5] * y0 + c[7] * x0 * x0
                + 2.0 * c[8] * x0 * y0
                + 3.0 * c[9] * y0 * y0;
            let dxx = 2.0 * c[3] + 6.0 * c[6] * x0 + 2.0 * c[7] * y0;
            let dyy = 2.0 * c[5] + 2.0 * c[8] * x0 + 6.0 * c[9] * y0;
            let ulp = |v: f64| 1e-12 * v.abs().max(1.0);
            assert!((f.dx - dx).abs() <= ulp(dx));
            assert!((f.dy - dy).abs() <= ulp(dy));
            assert!((f.dxx - dxx).abs() <= ulp(dxx));
            assert!((f.dyy - dyy).abs() <= ulp(dyy));
        }
    }
}
