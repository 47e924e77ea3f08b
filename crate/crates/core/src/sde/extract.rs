//! Finite-chain extraction from a continuous model.
//!
//! `empirical_unit_kernel` compresses the discretized diffusion into a
//! Markov chain on a grid: simulate one unit of time from every node, project
//! the endpoint to the nearest node, count. `unit_reward_aggregate` estimates
//! the expected reward collected over one unit of time,
//!
//! ```text
//! C_m(x) = E_x [ sum_{i < 2^m} 2^-m c(X_{i 2^-m}, u(X_{i 2^-m})) ]
//! ```
//!
//! which is the per-unit reward the averaged functionals are built from.
//!
//! Every sample draws from the stream addressed by
//! `(seed, tag, state_index, replicate_index)`, so estimates are independent
//! of evaluation order and thread count.

use rayon::prelude::*;

use crate::dyadic::Dyadic;
use crate::error::{CoreError, Result};
use crate::kernel::TransitionKernel;
use crate::reward::{RewardBound, RewardFunction};
use crate::rng::{stream, tags};
use crate::sde::model::{DiscretizationLevel, MarkovControl, SdeModel};
use crate::sde::simulate::{simulate, SamplePath};
use crate::space::StateSpace;

/// A Monte Carlo estimate with its standard error across replicates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: u64,
}

fn mean_and_se(values: &[f64]) -> AggregateEstimate {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    AggregateEstimate {
        mean,
        std_error: (var / n).sqrt(),
        samples: values.len() as u64,
    }
}

fn check_grid(model: &SdeModel, grid: &StateSpace) -> Result<()> {
    let points = grid.embedding().ok_or_else(|| CoreError::Configuration {
        detail: "kernel extraction needs an embedded grid".into(),
    })?;
    for (i, p) in points.iter().enumerate() {
        if p.len() != model.dim {
            return Err(CoreError::DimensionMismatch {
                context: "grid node dimension",
                expected: model.dim,
                got: p.len(),
            });
        }
        if !model.domain.contains(p) {
            return Err(CoreError::Domain {
                detail: format!("grid node {} = {p:?} lies outside the model domain", i),
            });
        }
    }
    Ok(())
}

/// Reward accumulated by a path over its control grid:
/// `sum_k h * c(X_kh, a_k)` with the recorded frozen controls.
/// Returns the sum and the largest `|c|` seen.
pub(crate) fn path_reward_sum(path: &SamplePath, reward: &RewardFunction) -> Result<(f64, f64)> {
    let h = path.level.h();
    let mut total = 0.0;
    let mut max_abs: f64 = 0.0;
    for k in 0..path.control_steps() {
        let c = reward.at_point(path.state_at_control_step(k), &path.controls_applied[k])?;
        max_abs = max_abs.max(c.abs());
        total += h * c;
    }
    Ok((total, max_abs))
}

pub(crate) fn enforce_sup_bound(bound: RewardBound, max_abs: f64) -> Result<()> {
    if let RewardBound::Sup(_) = bound {
        if !bound.permits(max_abs, 1.0) {
            return Err(CoreError::BoundViolation {
                detail: format!("|c| reached {max_abs:.6e}, beyond the declared {bound:?}"),
            });
        }
    }
    Ok(())
}

/// Estimates the one-unit-time transition kernel of the discretized model on
/// `grid` by endpoint projection. Rows are exactly stochastic: each is a
/// vector of counts divided by `samples_per_state`.
pub fn empirical_unit_kernel(
    model: &SdeModel,
    control: &MarkovControl,
    grid: &StateSpace,
    level: DiscretizationLevel,
    samples_per_state: u64,
    seed: u64,
) -> Result<TransitionKernel> {
    check_grid(model, grid)?;
    if samples_per_state == 0 {
        return Err(CoreError::Configuration {
            detail: "samples_per_state must be positive".into(),
        });
    }
    let n = grid.len();
    let rows: Result<Vec<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let x0 = grid.point(s).expect("grid checked to be embedded");
            let mut counts = vec![0u64; n];
            for r in 0..samples_per_state {
                let mut rng = stream(seed, &[tags::KERNEL, s as u64, r]);
                let path = simulate(model, control, level, x0, 1.0, &mut rng)?;
                let y = grid.nearest_node(path.endpoint())?;
                counts[y] += 1;
            }
            Ok(counts
                .into_iter()
                .map(|c| c as f64 / samples_per_state as f64)
                .collect())
        })
        .collect();
    let entries: Vec<f64> = rows?.into_iter().flatten().collect();
    TransitionKernel::new(grid.clone(), entries, Dyadic::one())
}

/// Monte Carlo estimate of the one-unit reward aggregate `C_m(x0)`.
pub fn unit_reward_aggregate(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    level: DiscretizationLevel,
    x0: &[f64],
    samples: u64,
    seed: u64,
) -> Result<AggregateEstimate> {
    aggregate_at(model, control, reward, level, x0, samples, seed, u64::MAX)
}

/// `C_m` estimated at every grid node; entry `s` uses the streams
/// `(seed, AGGREGATE, s, replicate)`.
pub fn aggregate_on_grid(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    grid: &StateSpace,
    level: DiscretizationLevel,
    samples_per_state: u64,
    seed: u64,
) -> Result<Vec<AggregateEstimate>> {
    check_grid(model, grid)?;
    (0..grid.len())
        .into_par_iter()
        .map(|s| {
            let x0 = grid.point(s).expect("grid checked to be embedded");
            aggregate_at(
                model,
                control,
                reward,
                level,
                x0,
                samples_per_state,
                seed,
                s as u64,
            )
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn aggregate_at(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    level: DiscretizationLevel,
    x0: &[f64],
    samples: u64,
    seed: u64,
    state_id: u64,
) -> Result<AggregateEstimate> {
    if samples == 0 {
        return Err(CoreError::Configuration {
            detail: "samples must be positive".into(),
        });
    }
    let mut sums = Vec::with_capacity(samples as usize);
    let mut worst: f64 = 0.0;
    for r in 0..samples {
        let mut rng = stream(seed, &[tags::AGGREGATE, state_id, r]);
        let path = simulate(model, control, level, x0, 1.0, &mut rng)?;
        let (total, max_abs) = path_reward_sum(&path, reward)?;
        worst = worst.max(max_abs);
        sums.push(total);
    }
    enforce_sup_bound(reward.bound(), worst)?;
    Ok(mean_and_se(&sums))
}
