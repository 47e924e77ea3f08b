//! Row-stochastic transition kernels on finite state spaces.
//!
//! A `TransitionKernel` is a validated stochastic matrix tagged with the exact
//! time step it advances. Two contraction coefficients are computed directly
//! from the matrix:
//!
//! ```text
//! delta = max_{x,x'} (1/2) sum_y |P(x,y) - P(x',y)|          (total variation)
//! rho   = max_{x,x'} sum_y V(y)|P(x,y) - P(x',y)| / (V(x) + V(x'))
//! ```
//!
//! `delta < 1` certifies uniform geometric mixing; `rho < 1` is the
//! V-weighted analogue that also controls unbounded test functions.

use crate::dyadic::Dyadic;
use crate::error::{CoreError, Result};
use crate::space::StateSpace;
use crate::weight::LyapunovWeight;

/// Row sums within this distance of 1 are accepted as-is.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Row sums off by less than this are silently renormalized; anything worse
/// is rejected as a malformed kernel rather than patched.
pub const ROW_SUM_RENORMALIZE_LIMIT: f64 = 1e-9;

/// A row-stochastic matrix advancing one exact dyadic time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionKernel {
    space: StateSpace,
    /// Row-major `n x n` entries; row `x` is the distribution of the next state.
    rows: Vec<f64>,
    step: Dyadic,
}

impl TransitionKernel {
    /// Validates and builds a kernel from row-major entries.
    pub fn new(space: StateSpace, mut rows: Vec<f64>, step: Dyadic) -> Result<Self> {
        let n = space.len();
        if rows.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                context: "kernel entries",
                expected: n * n,
                got: rows.len(),
            });
        }
        for x in 0..n {
            let row = &mut rows[x * n..(x + 1) * n];
            for (y, p) in row.iter_mut().enumerate() {
                if !p.is_finite() || *p < -ROW_SUM_TOLERANCE || *p > 1.0 + ROW_SUM_RENORMALIZE_LIMIT
                {
                    return Err(CoreError::KernelEntryRange {
                        row: x,
                        col: y,
                        value: *p,
                    });
                }
                if *p < 0.0 {
                    *p = 0.0;
                }
            }
            let sum: f64 = row.iter().sum();
            let deviation = (sum - 1.0).abs();
            if deviation > ROW_SUM_TOLERANCE {
                if deviation < ROW_SUM_RENORMALIZE_LIMIT {
                    for p in row.iter_mut() {
                        *p /= sum;
                    }
                } else {
                    return Err(CoreError::KernelRowSum { row: x, sum });
                }
            }
        }
        Ok(TransitionKernel { space, rows, step })
    }

    /// The kernel with uniform rows (every state jumps to a uniform state).
    pub fn uniform(space: StateSpace, step: Dyadic) -> Self {
        let n = space.len();
        let rows = vec![1.0 / n as f64; n * n];
        TransitionKernel { space, rows, step }
    }

    pub fn identity(space: StateSpace, step: Dyadic) -> Self {
        let n = space.len();
        let mut rows = vec![0.0; n * n];
        for x in 0..n {
            rows[x * n + x] = 1.0;
        }
        TransitionKernel { space, rows, step }
    }

    /// Euler substep kernel `I + h Q` of a rate matrix `Q` at level `m`
    /// (`h = 2^-m`). Requires off-diagonal rates nonnegative, rows of `Q`
    /// summing to zero, and `h` small enough to keep the diagonal nonnegative.
    pub fn from_rate_matrix(space: StateSpace, q_rows: &[f64], m: u32) -> Result<Self> {
        let n = space.len();
        if q_rows.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                context: "rate matrix entries",
                expected: n * n,
                got: q_rows.len(),
            });
        }
        let h = Dyadic::level_step(m).as_f64();
        let mut rows = vec![0.0; n * n];
        for x in 0..n {
            let row_sum: f64 = q_rows[x * n..(x + 1) * n].iter().sum();
            if row_sum.abs() > 1e-9 {
                return Err(CoreError::Configuration {
                    detail: format!("rate matrix row {x} sums to {row_sum:e}, not 0"),
                });
            }
            for y in 0..n {
                let q = q_rows[x * n + y];
                if x != y && q < 0.0 {
                    return Err(CoreError::Configuration {
                        detail: format!("negative off-diagonal rate at ({x},{y}): {q}"),
                    });
                }
                rows[x * n + y] = if x == y { 1.0 + h * q } else { h * q };
            }
            if rows[x * n + x] < 0.0 {
                return Err(CoreError::Configuration {
                    detail: format!(
                        "level {m} too coarse for rate {} at state {x}; need 2^-m <= {}",
                        q_rows[x * n + x],
                        -1.0 / q_rows[x * n + x]
                    ),
                });
            }
        }
        TransitionKernel::new(space, rows, Dyadic::level_step(m))
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn step(&self) -> Dyadic {
        self.step
    }

    pub fn row(&self, x: usize) -> &[f64] {
        let n = self.len();
        &self.rows[x * n..(x + 1) * n]
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.rows[x * self.len() + y]
    }

    pub fn entries(&self) -> &[f64] {
        &self.rows
    }

    /// `(Kf)(x) = sum_y K(x,y) f(y)`: expectation of `f` one step ahead.
    pub fn apply_fn(&self, f: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if f.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "apply_fn argument",
                expected: n,
                got: f.len(),
            });
        }
        Ok((0..n)
            .map(|x| self.row(x).iter().zip(f).map(|(p, v)| p * v).sum())
            .collect())
    }

    /// `(mu K)(y) = sum_x mu(x) K(x,y)`: one-step pushforward of a measure.
    pub fn apply_measure(&self, mu: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if mu.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "apply_measure argument",
                expected: n,
                got: mu.len(),
            });
        }
        let mut out = vec![0.0; n];
        for x in 0..n {
            let w = mu[x];
            if w != 0.0 {
                for (y, p) in self.row(x).iter().enumerate() {
                    out[y] += w * p;
                }
            }
        }
        Ok(out)
    }

    /// Chapman-Kolmogorov product: first `self`, then `other`.
    /// Steps add exactly.
    pub fn compose(&self, other: &TransitionKernel) -> Result<TransitionKernel> {
        if self.space != other.space {
            return Err(CoreError::SpaceMismatch {
                context: "kernel composition",
            });
        }
        let n = self.len();
        let mut rows = vec![0.0; n * n];
        for x in 0..n {
            for k in 0..n {
                let p = self.entry(x, k);
                if p != 0.0 {
                    let other_row = other.row(k);
                    let out_row = &mut rows[x * n..(x + 1) * n];
                    for (y, q) in other_row.iter().enumerate() {
                        out_row[y] += p * q;
                    }
                }
            }
        }
        TransitionKernel::new(self.space.clone(), rows, self.step.add(other.step))
    }

    /// `n`-step kernel by repeated squaring-free composition (`n` small here).
    pub fn pow(&self, n: u64) -> Result<TransitionKernel> {
        if n == 0 {
            return Ok(TransitionKernel::identity(self.space.clone(), self.step));
        }
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.compose(self)?;
        }
        Ok(acc)
    }

    /// Total-variation contraction coefficient over all row pairs.
    /// Equals 0 when all rows coincide and 1 when two rows have disjoint
    /// support. An empty or singleton space gives 0.
    pub fn dobrushin_delta(&self) -> f64 {
        let n = self.len();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for xp in (x + 1)..n {
                let tv: f64 = self
                    .row(x)
                    .iter()
                    .zip(self.row(xp))
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>()
                    / 2.0;
                worst = worst.max(tv);
            }
        }
        worst
    }

    /// V-weighted contraction coefficient over all row pairs. Coincides with
    /// `dobrushin_delta` when `V` is identically 1.
    pub fn kartashov_rho(&self, v: &LyapunovWeight) -> Result<f64> {
        if v.space() != &self.space {
            return Err(CoreError::SpaceMismatch {
                context: "weighted contraction coefficient",
            });
        }
        let n = self.len();
        let mut worst: f64 = 0.0;
        for x in 0..n {
            for xp in (x + 1)..n {
                let num: f64 = self
                    .row(x)
                    .iter()
                    .zip(self.row(xp))
                    .zip(v.values())
                    .map(|((a, b), vy)| vy * (a - b).abs())
                    .sum();
                worst = worst.max(num / (v.value(x) + v.value(xp)));
            }
        }
        Ok(worst)
    }

    /// Samples the successor of `x` by inverse CDF from one uniform draw.
    /// The final state absorbs any leftover rounding mass.
    pub fn sample_next(&self, x: usize, u: f64) -> usize {
        let row = self.row(x);
        let mut acc = 0.0;
        for (y, p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return y;
            }
        }
        row.len() - 1
    }
}
