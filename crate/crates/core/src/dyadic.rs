//! Exact dyadic time steps.
//!
//! Discretization step lengths are always of the form `num / 2^k`. Keeping
//! them as exact rationals instead of floats makes step bookkeeping associative:
//! composing 2^m kernels of step 2^-m yields a step of exactly 1, not
//! 0.9999999999999998.

use std::fmt;

/// A positive dyadic rational `num / 2^log2_den`, kept in lowest terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dyadic {
    num: u64,
    log2_den: u32,
}

impl Dyadic {
    /// `num / 2^log2_den`, reduced. `num` must be positive.
    pub fn new(num: u64, log2_den: u32) -> Self {
        assert!(num > 0, "dyadic step must be positive");
        let mut d = Dyadic { num, log2_den };
        while d.log2_den > 0 && d.num % 2 == 0 {
            d.num /= 2;
            d.log2_den -= 1;
        }
        d
    }

    /// The unit step 1.
    pub fn one() -> Self {
        Dyadic { num: 1, log2_den: 0 }
    }

    /// The step `2^-m` of discretization level `m`.
    pub fn level_step(m: u32) -> Self {
        Dyadic { num: 1, log2_den: m }
    }

    pub fn is_one(self) -> bool {
        self.num == 1 && self.log2_den == 0
    }

    /// Exact sum of two steps.
    pub fn add(self, other: Dyadic) -> Dyadic {
        let den = self.log2_den.max(other.log2_den);
        let a = self.num << (den - self.log2_den);
        let b = other.num << (den - other.log2_den);
        Dyadic::new(a + b, den)
    }

    /// Exact `n`-fold sum.
    pub fn times(self, n: u64) -> Dyadic {
        assert!(n > 0, "dyadic step multiple must be positive");
        Dyadic::new(self.num.checked_mul(n).expect("dyadic overflow"), self.log2_den)
    }

    /// Value as f64. Exact for every step this crate constructs.
    pub fn as_f64(self) -> f64 {
        self.num as f64 * (2f64).powi(-(self.log2_den as i32))
    }

    /// How many steps of this length make exactly one unit of time, for
    /// steps of the form `2^-m`.
    pub fn steps_per_unit(self) -> crate::error::Result<u64> {
        if self.num != 1 || self.log2_den >= 64 {
            return Err(crate::error::CoreError::Domain {
                detail: format!("step {self} does not divide the unit interval"),
            });
        }
        Ok(1u64 << self.log2_den)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log2_den == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.log2_den)
        }
    }
}
