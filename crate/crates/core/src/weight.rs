//! Lyapunov weights, weighted norms, and the span seminorm.
//!
//! The span seminorm `max g - min g` is the natural gauge for relative
//! fixed-point iteration: it ignores additive constants, which is exactly the
//! degree of freedom the long-run value function is defined up to. The
//! V-weighted norms measure functions and signed measures against a weight
//! `V >= 1`, so unbounded test functions stay comparable.

use crate::error::{CoreError, Result};
use crate::space::StateSpace;

/// A weight function `V >= 1` on a finite state space.
#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovWeight {
    space: StateSpace,
    values: Vec<f64>,
}

impl LyapunovWeight {
    pub fn new(space: StateSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(CoreError::DimensionMismatch {
                context: "weight values",
                expected: space.len(),
                got: values.len(),
            });
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() || *v < 1.0 {
                return Err(CoreError::InvalidWeight {
                    index: i,
                    value: *v,
                });
            }
        }
        Ok(LyapunovWeight { space, values })
    }

    /// The flat weight `V = 1`, under which V-norms reduce to sup and total
    /// variation norms.
    pub fn constant_one(space: StateSpace) -> Self {
        let values = vec![1.0; space.len()];
        LyapunovWeight { space, values }
    }

    /// Builds `V(x) = f(x)` from the space's embedding, clamping up to 1.
    pub fn from_embedding(space: StateSpace, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let points = space.embedding().ok_or_else(|| CoreError::Configuration {
            detail: "weight from embedding needs an embedded space".into(),
        })?;
        let values: Vec<f64> = points.iter().map(|p| f(p).max(1.0)).collect();
        LyapunovWeight::new(space.clone(), values)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }
}

/// A function paired with the weight it is measured against.
#[derive(Debug, Clone)]
pub struct WeightedFn<'a> {
    pub values: Vec<f64>,
    pub weight: &'a LyapunovWeight,
}

impl<'a> WeightedFn<'a> {
    pub fn new(values: Vec<f64>, weight: &'a LyapunovWeight) -> Result<Self> {
        if values.len() != weight.values().len() {
            return Err(CoreError::DimensionMismatch {
                context: "weighted function values",
                expected: weight.values().len(),
                got: values.len(),
            });
        }
        Ok(WeightedFn { values, weight })
    }

    pub fn v_norm(&self) -> f64 {
        v_norm_fn(&self.values, self.weight)
    }
}

/// `sup_x |f(x)| / V(x)`.
pub fn v_norm_fn(f: &[f64], v: &LyapunovWeight) -> f64 {
    f.iter()
        .zip(v.values())
        .map(|(fi, vi)| fi.abs() / vi)
        .fold(0.0, f64::max)
}

/// V-norm of the signed measure `nu1 - nu2`: `sum_x V(x) |nu1(x) - nu2(x)|`.
/// With `V = 1` this is twice the total-variation distance for probability
/// measures.
pub fn v_norm_measure_diff(nu1: &[f64], nu2: &[f64], v: &LyapunovWeight) -> Result<f64> {
    let n = v.values().len();
    if nu1.len() != n || nu2.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "measure difference",
            expected: n,
            got: if nu1.len() != n { nu1.len() } else { nu2.len() },
        });
    }
    Ok(nu1
        .iter()
        .zip(nu2)
        .zip(v.values())
        .map(|((a, b), vi)| vi * (a - b).abs())
        .sum())
}

/// `max g - min g`, the seminorm that quotients out additive constants.
pub fn span_seminorm(g: &[f64]) -> f64 {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in g {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if g.is_empty() {
        0.0
    } else {
        hi - lo
    }
}
