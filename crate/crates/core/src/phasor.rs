//! Complex phasor arithmetic over the generic scalar.
//!
//! `num_complex` requires `Float` for the transcendental methods, which clashes
//! with the `RealField` bound used everywhere else, so the handful of complex
//! operations the models need live here. A dq phasor `d + jq` maps to the real
//! 2x2 block [[d, -q], [q, d]] acting on stacked (d, q) coordinates.

use nalgebra::DMatrix;

use crate::scalar::Scalar;

/// A dq-frame phasor: `re` is the d component, `im` the q component.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Phasor<T> {
    pub re: T,
    pub im: T,
}

impl<T: Scalar> Phasor<T> {
    pub fn new(re: T, im: T) -> Self {
        Self { re, im }
    }

    pub fn zero() -> Self {
        Self::new(T::zero(), T::zero())
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sqr(self) -> T {
        self.re * self.re + self.im * self.im
    }

    pub fn abs(self) -> T {
        self.norm_sqr().sqrt()
    }

    /// Complex exponential.
    pub fn exp(self) -> Self {
        let m = self.re.exp();
        Self::new(m * self.im.cos(), m * self.im.sin())
    }

    pub fn scale(self, s: T) -> Self {
        Self::new(self.re * s, self.im * s)
    }

    /// Real 2x2 block representation [[re, -im], [im, re]].
    pub fn to_block(self) -> DMatrix<T> {
        DMatrix::from_row_slice(2, 2, &[self.re, -self.im, self.im, self.re])
    }

    /// Writes the 2x2 block representation at (row, col) of `m`.
    pub fn write_block(self, m: &mut DMatrix<T>, row: usize, col: usize) {
        m[(row, col)] = self.re;
        m[(row, col + 1)] = -self.im;
        m[(row + 1, col)] = self.im;
        m[(row + 1, col + 1)] = self.re;
    }
}

impl<T: Scalar> std::ops::Add for Phasor<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl<T: Scalar> std::ops::Sub for Phasor<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl<T: Scalar> std::ops::Mul for Phasor<T> {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

impl<T: Scalar> std::ops::Div for Phasor<T> {
    type Output = Self;
    fn div(self, rhs: Self) -> Self {
        let d = rhs.norm_sqr();
        Self::new(
            (self.re * rhs.re + self.im * rhs.im) / d,
            (self.im * rhs.re - self.re * rhs.im) / d,
        )
    }
}

impl<T: Scalar> std::ops::Neg for Phasor<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.im)
    }
}

/// `(exp(z) - 1) / z`, with the series fallback near zero so the pure
/// integrator limit stays exact.
pub fn phi1<T: Scalar>(z: Phasor<T>) -> Phasor<T> {
    let tiny = crate::scalar::from_f64::<T>(1e-8);
    if z.abs() < tiny {
        let half = crate::scalar::from_f64::<T>(0.5);
        let sixth = crate::scalar::from_f64::<T>(1.0 / 6.0);
        // 1 + z/2 + z^2/6
        let one = Phasor::new(T::one(), T::zero());
        one + z.scale(half) + (z * z).scale(sixth)
    } else {
        let one = Phasor::new(T::one(), T::zero());
        (z.exp() - one) / z
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn division_and_multiplication_invert() {
        let a = Phasor::new(3.0, -2.0);
        let b = Phasor::new(0.5, 1.7);
        let c = (a / b) * b;
        assert_relative_eq!(c.re, a.re, epsilon = 1e-12);
        assert_relative_eq!(c.im, a.im, epsilon = 1e-12);
    }

    #[test]
    fn exp_matches_euler() {
        let z = Phasor::new(0.0, std::f64::consts::PI);
        let e = z.exp();
        assert_relative_eq!(e.re, -1.0, epsilon = 1e-12);
        assert_relative_eq!(e.im, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn phi1_limit_is_one() {
        let z = Phasor::new(1e-12_f64, 0.0);
        let p = phi1(z);
        assert_relative_eq!(p.re, 1.0, epsilon = 1e-10);
        assert_relative_eq!(p.im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn block_representation_multiplies_like_complex() {
        let a = Phasor::new(0.3, -1.2);
        let b = Phasor::new(2.0, 0.7);
        let ab = a * b;
        let block = a.to_block() * b.to_block();
        assert_relative_eq!(block[(0, 0)], ab.re, epsilon = 1e-12);
        assert_relative_eq!(block[(1, 0)], ab.im, epsilon = 1e-12);
    }
}
