//! Parametrized chain families for stability experiments.
//!
//! A stability experiment evaluates a long-run functional along a sequence
//! of models approaching a limit model and checks that the values follow.
//! For finite chains the sequence is realized as a line segment in kernel
//! space: `K(theta) = base + theta * direction`, evaluated at
//! `theta_n = theta_star (1 - 1/n)` against the limit `theta_star`.
//!
//! Convergence of the values is only meaningful when the ergodicity
//! constants hold uniformly along the sequence, so the family carries a
//! gate that measures the worst contraction and comparability constants
//! over a set of kernels and refuses to certify when they degrade.

use crate::dyadic::Dyadic;
use crate::error::{CoreError, Result};
use crate::kernel::TransitionKernel;
use crate::space::StateSpace;

/// A line segment of substep kernels at a fixed level, with a fixed
/// per-state reward.
#[derive(Debug, Clone)]
pub struct ScalarChainFamily {
    space: StateSpace,
    base_rows: Vec<f64>,
    direction_rows: Vec<f64>,
    level_m: u32,
    rewards: Vec<f64>,
}

impl ScalarChainFamily {
    /// `base_rows` must be a valid substep kernel at `theta = 0`;
    /// `direction_rows` must have zero row sums so stochasticity is
    /// preserved along the segment. Both endpoints are validated here.
    pub fn new(
        space: StateSpace,
        base_rows: Vec<f64>,
        direction_rows: Vec<f64>,
        level_m: u32,
        rewards: Vec<f64>,
    ) -> Result<Self> {
        let n = space.len();
        if base_rows.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                context: "family base rows",
                expected: n * n,
                got: base_rows.len(),
            });
        }
        if direction_rows.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                context: "family direction rows",
                expected: n * n,
                got: direction_rows.len(),
            });
        }
        if rewards.len() != n {
            return Err(CoreError::DimensionMismatch {
                context: "family rewards",
                expected: n,
                got: rewards.len(),
            });
        }
        for x in 0..n {
            let row_sum: f64 = direction_rows[x * n..(x + 1) * n].iter().sum();
            if row_sum.abs() > 1e-12 {
                return Err(CoreError::Configuration {
                    detail: format!(
                        "direction row {x} sums to {row_sum}; \
                         perturbations must preserve row sums"
                    ),
                });
            }
        }
        let family = ScalarChainFamily {
            space,
            base_rows,
            direction_rows,
            level_m,
            rewards,
        };
        family.kernel_at(0.0)?;
        family.kernel_at(1.0)?;
        Ok(family)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn level_m(&self) -> u32 {
        self.level_m
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// The substep kernel at parameter `theta`.
    pub fn kernel_at(&self, theta: f64) -> Result<TransitionKernel> {
        if !theta.is_finite() {
            return Err(CoreError::Configuration {
                detail: format!("family parameter must be finite, got {theta}"),
            });
        }
        let rows: Vec<f64> = self
            .base_rows
            .iter()
            .zip(&self.direction_rows)
            .map(|(b, d)| b + theta * d)
            .collect();
        TransitionKernel::new(self.space.clone(), rows, Dyadic::level_step(self.level_m))
    }
}

/// `theta_n = theta_star (1 - 1/n)`: the approach sequence used by the
/// stability sweeps.
pub fn approach_parameter(theta_star: f64, n: u64) -> f64 {
    theta_star * (1.0 - 1.0 / n as f64)
}

/// Worst-case ergodicity constants over a set of kernels.
#[derive(Debug, Clone, Copy)]
pub struct StabilityGate {
    pub max_delta: f64,
    pub max_equiv_ratio: f64,
}

impl StabilityGate {
    /// Measures the gate over unit-time kernels; each substep kernel is
    /// raised to its one-unit power first.
    pub fn measure(substeps: &[TransitionKernel]) -> Result<StabilityGate> {
        if substeps.is_empty() {
            return Err(CoreError::Configuration {
                detail: "stability gate needs at least one kernel".into(),
            });
        }
        let mut max_delta = 0.0f64;
        let mut max_equiv_ratio = 0.0f64;
        for substep in substeps {
            let unit = substep.pow(substep.step().steps_per_unit()?)?;
            max_delta = max_delta.max(unit.dobrushin_delta());
            let n = unit.len();
            for x in 0..n {
                for x_other in 0..n {
                    if x == x_other {
                        continue;
                    }
                    for y in 0..n {
                        let num = unit.entry(x, y);
                        let den = unit.entry(x_other, y);
                        if num == 0.0 && den == 0.0 {
                            continue;
                        }
                        max_equiv_ratio = if den == 0.0 {
                            f64::INFINITY
                        } else {
                            max_equiv_ratio.max(num / den)
                        };
                    }
                }
            }
        }
        Ok(StabilityGate {
            max_delta,
            max_equiv_ratio,
        })
    }

    /// Errors unless the measured constants certify uniform ergodicity of
    /// the whole set.
    pub fn ensure_certifies(&self) -> Result<()> {
        if self.max_delta >= 1.0 {
            return Err(CoreError::Ergodicity {
                detail: format!(
                    "family fails the uniform contraction gate: \
                     worst Dobrushin coefficient is {}",
                    self.max_delta
                ),
            });
        }
        if !self.max_equiv_ratio.is_finite() {
            return Err(CoreError::Ergodicity {
                detail: "family fails the uniform comparability gate: \
                         some state pair has non-equivalent one-unit laws"
                    .into(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state_family() -> ScalarChainFamily {
        let space = StateSpace::from_labels(vec!["lo", "hi"]).unwrap();
        ScalarChainFamily::new(
            space,
            vec![0.9, 0.1, 0.2, 0.8],
            vec![-0.001, 0.001, 0.001, -0.001],
            0,
            vec![0.0, 1.0],
        )
        .unwrap()
    }

    #[test]
    fn kernels_along_the_segment_interpolate_entries() {
        let family = two_state_family();
        let k = family.kernel_at(0.5).unwrap();
        assert!((k.entry(0, 0) - 0.8995).abs() < 1e-15);
        assert!((k.entry(1, 0) - 0.2005).abs() < 1e-15);
    }

    #[test]
    fn row_sum_breaking_directions_are_rejected() {
        let space = StateSpace::from_labels(vec!["a", "b"]).unwrap();
        let result = ScalarChainFamily::new(
            space,
            vec![0.9, 0.1, 0.2, 0.8],
            vec![0.001, 0.001, 0.0, 0.0],
            0,
            vec![0.0, 1.0],
        );
        assert!(matches!(result, Err(CoreError::Configuration { .. })));
    }

    #[test]
    fn approach_sequence_tends_to_the_limit() {
        let theta_star = 1.0;
        assert_eq!(approach_parameter(theta_star, 1), 0.0);
        let late = approach_parameter(theta_star, 10_000);
        assert!((theta_star - late - 1e-4).abs() < 1e-16);
    }

    #[test]
    fn gate_passes_mixing_families_and_rejects_disconnected_ones() {
        let family = two_state_family();
        let kernels = vec![
            family.kernel_at(0.0).unwrap(),
            family.kernel_at(1.0).unwrap(),
        ];
        let gate = StabilityGate::measure(&kernels).unwrap();
        assert!(gate.max_delta < 1.0);
        assert!(gate.max_equiv_ratio.is_finite());
        gate.ensure_certifies().unwrap();

        let space = StateSpace::from_labels(vec!["a", "b"]).unwrap();
        let frozen = TransitionKernel::new(
            space,
            vec![1.0, 0.0, 0.0, 1.0],
            Dyadic::one(),
        )
        .unwrap();
        let gate = StabilityGate::measure(&[frozen]).unwrap();
        assert!(gate.ensure_certifies().is_err());
    }
}
