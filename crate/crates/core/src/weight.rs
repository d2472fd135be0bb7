//! Numeric type used for cover costs and cascade masses.
//!
//! Production code runs on `f64`. Tests instantiate the same algorithms with
//! exact rationals to compare against literal reference computations.

use std::fmt::Debug;

pub trait Weight: Clone + PartialOrd + Debug + Send + Sync {
    fn zero() -> Self;
    fn add(&self, other: &Self) -> Self;
    fn times(&self, n: u128) -> Self;
    fn divide(&self, n: u128) -> Self;
    /// `2^(-level * exponent)`.
    fn dyadic_power(level: u32, exponent: f64) -> Self;
    fn to_f64(&self) -> f64;

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }
}

impl Weight for f64 {
    fn zero() -> Self {
        0.0
    }

    fn add(&self, other: &Self) -> Self {
        self + other
    }

    fn times(&self, n: u128) -> Self {
        self * n as f64
    }

    fn divide(&self, n: u128) -> Self {
        self / n as f64
    }

    fn dyadic_power(level: u32, exponent: f64) -> Self {
        (-(level as f64) * exponent).exp2()
    }

    fn to_f64(&self) -> f64 {
        *self
    }
}
