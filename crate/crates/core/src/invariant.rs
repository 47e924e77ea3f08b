//! Invariant distributions of finite-state kernels.
//!
//! Two independent routes compute the same object:
//!
//! * a dense linear solve of `mu K = mu`, `sum mu = 1` (one balance equation
//!   replaced by the normalization), and
//! * plain power iteration `mu <- mu K` from the uniform start.
//!
//! The linear solve is the primary route; power iteration is the fallback and
//! doubles as the detector for chains without a usable invariant
//! distribution, which surface as non-convergence within the iteration cap.
//! A reducible chain whose pieces happen to balance symmetrically can still
//! slip through both routes; the ergodicity audit is the component that
//! catches those structurally.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoreError, Result};
use crate::kernel::TransitionKernel;
use crate::space::StateSpace;

/// `mu K` must return to `mu` within this L1 distance for a result to be
/// accepted, whichever route produced it.
pub const INVARIANT_RESIDUAL_TOL: f64 = 1e-10;

/// L1 stopping tolerance for the power-iteration route.
pub const POWER_ITERATION_TOL: f64 = 1e-12;

pub const POWER_ITERATION_MAX_SWEEPS: usize = 1_000_000;

/// A probability distribution fixed by a kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct InvariantMeasure {
    space: StateSpace,
    weights: Vec<f64>,
}

impl InvariantMeasure {
    fn from_raw(space: StateSpace, mut weights: Vec<f64>) -> Result<Self> {
        for (i, w) in weights.iter_mut().enumerate() {
            if !w.is_finite() {
                return Err(CoreError::Ergodicity {
                    detail: format!("candidate invariant weight {i} is not finite"),
                });
            }
            if *w < 0.0 {
                if *w < -1e-10 {
                    return Err(CoreError::MeasureNegativeEntry {
                        index: i,
                        value: *w,
                    });
                }
                *w = 0.0;
            }
        }
        let sum: f64 = weights.iter().sum();
        if !(sum.is_finite() && sum > 0.0) {
            return Err(CoreError::MeasureNotNormalized { sum });
        }
        for w in &mut weights {
            *w /= sum;
        }
        Ok(InvariantMeasure { space, weights })
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    /// `sum_x mu(x) f(x)`.
    pub fn expectation(&self, f: &[f64]) -> Result<f64> {
        if f.len() != self.weights.len() {
            return Err(CoreError::DimensionMismatch {
                context: "expectation argument",
                expected: self.weights.len(),
                got: f.len(),
            });
        }
        Ok(self.weights.iter().zip(f).map(|(m, v)| m * v).sum())
    }
}

fn residual_l1(k: &TransitionKernel, mu: &[f64]) -> f64 {
    let pushed = k.apply_measure(mu).expect("dimensions checked upstream");
    pushed.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum()
}

/// Invariant distribution by dense linear solve alone.
pub fn invariant_measure_dense(k: &TransitionKernel) -> Result<InvariantMeasure> {
    let n = k.len();
    // Rows 0..n-1: balance equations (K^T - I) mu = 0; row n-1 replaced by
    // the normalization sum mu = 1.
    let a = DMatrix::from_fn(n, n, |r, c| {
        if r == n - 1 {
            1.0
        } else {
            k.entry(c, r) - if r == c { 1.0 } else { 0.0 }
        }
    });
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let solution = a.lu().solve(&b).ok_or_else(|| CoreError::Ergodicity {
        detail: "balance equations are singular (invariant distribution not unique)".into(),
    })?;
    let mu = InvariantMeasure::from_raw(k.space().clone(), solution.iter().copied().collect())?;
    let res = residual_l1(k, mu.weights());
    if res > INVARIANT_RESIDUAL_TOL {
        return Err(CoreError::Ergodicity {
            detail: format!("linear-solve candidate has residual {res:.3e}"),
        });
    }
    Ok(mu)
}

/// Invariant distribution by power iteration alone.
pub fn invariant_measure_power(k: &TransitionKernel) -> Result<InvariantMeasure> {
    let n = k.len();
    let mut mu = vec![1.0 / n as f64; n];
    for _sweep in 0..POWER_ITERATION_MAX_SWEEPS {
        let next = k.apply_measure(&mu)?;
        let change: f64 = next.iter().zip(&mu).map(|(a, b)| (a - b).abs()).sum();
        mu = next;
        if change <= POWER_ITERATION_TOL {
            let out = InvariantMeasure::from_raw(k.space().clone(), mu)?;
            let res = residual_l1(k, out.weights());
            if res > INVARIANT_RESIDUAL_TOL {
                return Err(CoreError::Ergodicity {
                    detail: format!("power iteration settled with residual {res:.3e}"),
                });
            }
            return Ok(out);
        }
    }
    Err(CoreError::Ergodicity {
        detail: format!(
            "power iteration did not converge in {POWER_ITERATION_MAX_SWEEPS} sweeps; \
             the chain appears reducible or periodic"
        ),
    })
}

/// Invariant distribution of `k`: dense solve first, power iteration as the
/// fallback when the solve is singular or produces a defective candidate.
pub fn invariant_measure(k: &TransitionKernel) -> Result<InvariantMeasure> {
    match invariant_measure_dense(k) {
        Ok(mu) => Ok(mu),
        Err(_) => invariant_measure_power(k),
    }
}
