//! Scalar abstraction used by the numerical kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive};

/// Floating-point scalar that the preference and likelihood kernels are generic over.
///
/// Beyond [`Float`] this only adds the log-gamma function, which `num-traits`
/// does not provide.
pub trait Real: Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static {
    fn lgamma(self) -> Self;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    #[inline]
    fn of_u64(x: u64) -> Self {
        Self::from_u64(x).expect("u64 is representable")
    }
}

impl Real for f64 {
    #[inline]
    fn lgamma(self) -> Self {
        libm::lgamma(self)
    }
}

impl Real for f32 {
    #[inline]
    fn lgamma(self) -> Self {
        libm::lgammaf(self)
    }
}

/// Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy)]
pub struct CompensatedSum<T> {
    sum: T,
    carry: T,
}

impl<T: Real> Default for CompensatedSum<T> {
    fn default() -> Self {
        Self { sum: T::zero(), carry: T::zero() }
    }
}

impl<T: Real> CompensatedSum<T> {
    #[inline]
    pub fn add(&mut self, x: T) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry = self.carry + ((self.sum - t) + x);
        } else {
            self.carry = self.carry + ((x - t) + self.sum);
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> T {
        self.sum + self.carry
    }
}

/// `ln(n!)` for a count.
#[inline]
pub fn ln_factorial<T: Real>(n: u64) -> T {
    (T::of_u64(n) + T::one()).lgamma()
}
