//! Average reward per unit time.
//!
//! On a finite chain with substep kernel `P` at level `m` and per-state
//! reward `c`, the level-`m` average reward is
//!
//! ```text
//! J = mu(C),    C(x) = sum_{i < 2^m} h (P^i c)(x),    h = 2^-m,
//! ```
//!
//! with `mu` invariant for the unit kernel `P^(2^m)`. Since `mu` is then
//! also invariant for `P` itself, `J` equals `mu(c)` directly; the code
//! computes the `C` route and tests pin the identity, because the two sides
//! come from different pieces of machinery.
//!
//! The Monte Carlo route averages the reward along simulated paths, drops a
//! burn-in prefix, and reports the spread across independent replicates as
//! the standard error. A lag-one autocorrelation diagnostic flags runs
//! whose horizon is too short for within-path averaging to settle.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::dyadic::Dyadic;
use crate::error::{CoreError, Result};
use crate::family::{approach_parameter, ScalarChainFamily, StabilityGate};
use crate::invariant::{invariant_measure, InvariantMeasure};
use crate::kernel::TransitionKernel;
use crate::reward::RewardFunction;
use crate::rng::{derive_seed, stream, tags, uniform_01};
use crate::sde::{
    aggregate_on_grid, empirical_unit_kernel, DiscretizationLevel, MarkovControl, SdeModel,
};
use crate::sde::extract::{enforce_sup_bound, path_reward_sum};
use crate::sde::simulate::simulate;
use crate::space::StateSpace;

/// Fraction of each path discarded before time-averaging.
pub const BURN_IN_FRACTION: f64 = 0.2;

/// Lag-one autocorrelation above which a Monte Carlo average is flagged as
/// too slowly mixing for its horizon.
pub const AUTOCORR_WARNING_THRESHOLD: f64 = 0.99;

/// Average reward evaluated exactly through the invariant distribution.
#[derive(Debug, Clone)]
pub struct ExactAverage {
    pub value: f64,
    pub measure: InvariantMeasure,
}

/// `J = mu(aggregate)` for a unit-time kernel and a per-state aggregated
/// reward over one unit of time.
pub fn average_reward_exact(unit: &TransitionKernel, aggregate: &[f64]) -> Result<ExactAverage> {
    if !unit.step().is_one() {
        return Err(CoreError::Configuration {
            detail: format!("exact average needs a unit-time kernel, got step {}", unit.step()),
        });
    }
    let measure = invariant_measure(unit)?;
    let value = measure.expectation(aggregate)?;
    Ok(ExactAverage { value, measure })
}

/// The aggregated reward `C(x) = sum_{i < 2^m} h (P^i c)(x)` of one unit of
/// time under the substep kernel.
pub fn aggregate_exact(substep: &TransitionKernel, c_u: &[f64], m: u32) -> Result<Vec<f64>> {
    if substep.step() != Dyadic::level_step(m) {
        return Err(CoreError::Configuration {
            detail: format!(
                "substep kernel advances {} but level {m} requires 2^-{m}",
                substep.step()
            ),
        });
    }
    if c_u.len() != substep.len() {
        return Err(CoreError::DimensionMismatch {
            context: "aggregate reward vector",
            expected: substep.len(),
            got: c_u.len(),
        });
    }
    let h = substep.step().as_f64();
    let steps = 1u64 << m;
    let mut iterate = c_u.to_vec();
    let mut aggregate = vec![0.0; c_u.len()];
    for i in 0..steps {
        for (a, f) in aggregate.iter_mut().zip(&iterate) {
            *a += h * f;
        }
        if i + 1 < steps {
            iterate = substep.apply_fn(&iterate)?;
        }
    }
    Ok(aggregate)
}

/// Exact level-`m` average reward of a substep chain, through the
/// aggregated-reward route.
pub fn average_reward_exact_chain(
    substep: &TransitionKernel,
    c_u: &[f64],
    m: u32,
) -> Result<ExactAverage> {
    let aggregate = aggregate_exact(substep, c_u, m)?;
    let unit = substep.pow(1u64 << m)?;
    average_reward_exact(&unit, &aggregate)
}

/// Monte Carlo estimate of the average reward.
#[derive(Debug, Clone)]
pub struct AvgMcResult {
    pub value: f64,
    /// Standard error of the mean across independent replicates.
    pub std_error: f64,
    pub replicates: u64,
    /// Lag-one autocorrelation of the post-burn-in reward series, averaged
    /// across replicates.
    pub autocorr_lag1: f64,
    pub slow_mixing_warning: bool,
}

fn lag1_autocorr(series: &[f64]) -> f64 {
    if series.len() < 3 {
        return 0.0;
    }
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let var: f64 = series.iter().map(|z| (z - mean) * (z - mean)).sum();
    if var <= 0.0 {
        return 0.0;
    }
    let cov: f64 = series
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    cov / var
}

fn finish_avg_mc(per_replicate: Vec<(f64, f64)>) -> AvgMcResult {
    let r = per_replicate.len() as f64;
    let mean = per_replicate.iter().map(|(j, _)| j).sum::<f64>() / r;
    let var = per_replicate
        .iter()
        .map(|(j, _)| (j - mean) * (j - mean))
        .sum::<f64>()
        / (r - 1.0);
    let autocorr = per_replicate.iter().map(|(_, a)| a).sum::<f64>() / r;
    AvgMcResult {
        value: mean,
        std_error: (var / r).sqrt(),
        replicates: per_replicate.len() as u64,
        autocorr_lag1: autocorr,
        slow_mixing_warning: autocorr > AUTOCORR_WARNING_THRESHOLD,
    }
}

fn burn_in_count(len: usize) -> usize {
    ((len as f64) * BURN_IN_FRACTION).ceil() as usize
}

/// Time-average of the reward along simulated paths of the discretized
/// model, one independent stream per replicate.
#[allow(clippy::too_many_arguments)]
pub fn average_reward_mc(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    replicates: u64,
    seed: u64,
) -> Result<AvgMcResult> {
    if replicates < 2 {
        return Err(CoreError::Configuration {
            detail: "average_reward_mc needs at least 2 replicates".into(),
        });
    }
    let results: Result<Vec<(f64, f64, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tags::AVG_MC, r]);
            let path = simulate(model, control, level, x0, horizon, &mut rng)?;
            let (_, max_abs) = path_reward_sum(&path, reward)?;
            let mut series = Vec::with_capacity(path.control_steps());
            for k in 0..path.control_steps() {
                let x = path.state_at_control_step(k);
                let a = &path.controls_applied[k];
                series.push(reward.at_point(x, a)?);
            }
            let kept = &series[burn_in_count(series.len())..];
            if kept.is_empty() {
                return Err(CoreError::Configuration {
                    detail: "horizon too short: burn-in consumed every step".into(),
                });
            }
            let j = kept.iter().sum::<f64>() / kept.len() as f64;
            Ok((j, lag1_autocorr(kept), max_abs))
        })
        .collect();
    let results = results?;
    let worst = results.iter().map(|(_, _, m)| *m).fold(0.0f64, f64::max);
    enforce_sup_bound(reward.bound(), worst)?;
    Ok(finish_avg_mc(
        results.into_iter().map(|(j, a, _)| (j, a)).collect(),
    ))
}

/// Same estimator on a finite chain simulated from its substep kernel.
#[allow(clippy::too_many_arguments)]
pub fn average_reward_mc_chain(
    substep: &TransitionKernel,
    c_u: &[f64],
    m: u32,
    x0: usize,
    horizon_units: u64,
    replicates: u64,
    seed: u64,
) -> Result<AvgMcResult> {
    if replicates < 2 {
        return Err(CoreError::Configuration {
            detail: "average_reward_mc_chain needs at least 2 replicates".into(),
        });
    }
    let n = substep.len();
    if c_u.len() != n || x0 >= n {
        return Err(CoreError::DimensionMismatch {
            context: "chain average estimate",
            expected: n,
            got: c_u.len().max(x0 + 1),
        });
    }
    let steps = horizon_units
        .checked_mul(1u64 << m)
        .ok_or_else(|| CoreError::Configuration {
            detail: "chain horizon overflows the step counter".into(),
        })?;
    if steps < 5 {
        return Err(CoreError::Configuration {
            detail: "horizon too short for burn-in plus averaging".into(),
        });
    }
    let per_replicate: Vec<(f64, f64)> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tags::AVG_CHAIN_MC, r]);
            let mut x = x0;
            let mut series = Vec::with_capacity(steps as usize);
            for _ in 0..steps {
                series.push(c_u[x]);
                x = substep.sample_next(x, uniform_01(&mut rng));
            }
            let kept = &series[burn_in_count(series.len())..];
            let j = kept.iter().sum::<f64>() / kept.len() as f64;
            (j, lag1_autocorr(kept))
        })
        .collect();
    Ok(finish_avg_mc(per_replicate))
}

/// One level of a convergence sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepPoint {
    pub level_m: u32,
    pub value: f64,
    /// Absent for exact (noise-free) evaluations.
    pub std_error: Option<f64>,
}

/// Exact level sweep over substep chains.
pub fn avg_convergence_sweep_exact_chain(
    levels: &BTreeMap<u32, TransitionKernel>,
    c_u: &[f64],
) -> Result<Vec<SweepPoint>> {
    levels
        .iter()
        .map(|(&m, substep)| {
            let exact = average_reward_exact_chain(substep, c_u, m)?;
            Ok(SweepPoint {
                level_m: m,
                value: exact.value,
                std_error: None,
            })
        })
        .collect()
}

/// Level sweep through empirical kernels and aggregated rewards on a grid.
/// The whole chain-building pipeline is replicated `outer_replicates` times
/// per level so the reported error bar covers kernel noise and aggregate
/// noise together.
#[allow(clippy::too_many_arguments)]
pub fn avg_convergence_sweep_empirical(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    grid: &StateSpace,
    m_list: &[u32],
    inner_substeps: u32,
    samples_per_state: u64,
    outer_replicates: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if outer_replicates < 2 {
        return Err(CoreError::Configuration {
            detail: "empirical sweep needs at least 2 outer replicates".into(),
        });
    }
    m_list
        .iter()
        .map(|&m| {
            let level = DiscretizationLevel::with_inner(m, inner_substeps)?;
            let estimates: Result<Vec<f64>> = (0..outer_replicates)
                .map(|rep| {
                    let rep_seed = derive_seed(seed, &[m as u64, rep]);
                    let kernel = empirical_unit_kernel(
                        model,
                        control,
                        grid,
                        level,
                        samples_per_state,
                        rep_seed,
                    )?;
                    let aggregate =
                        aggregate_on_grid(model, control, reward, grid, level, samples_per_state, rep_seed)?;
                    let values: Vec<f64> = aggregate.iter().map(|a| a.mean).collect();
                    Ok(average_reward_exact(&kernel, &values)?.value)
                })
                .collect();
            let estimates = estimates?;
            let r = estimates.len() as f64;
            let mean = estimates.iter().sum::<f64>() / r;
            let var = estimates.iter().map(|j| (j - mean) * (j - mean)).sum::<f64>() / (r - 1.0);
            Ok(SweepPoint {
                level_m: m,
                value: mean,
                std_error: Some((var / r).sqrt()),
            })
        })
        .collect()
}

/// Level sweep through path time-averages.
#[allow(clippy::too_many_arguments)]
pub fn avg_convergence_sweep_mc(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    m_list: &[u32],
    inner_substeps: u32,
    x0: &[f64],
    horizon: f64,
    replicates: u64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    m_list
        .iter()
        .map(|&m| {
            let level = DiscretizationLevel::with_inner(m, inner_substeps)?;
            let mc = average_reward_mc(
                model,
                control,
                reward,
                level,
                x0,
                horizon,
                replicates,
                derive_seed(seed, &[m as u64]),
            )?;
            Ok(SweepPoint {
                level_m: m,
                value: mc.value,
                std_error: Some(mc.std_error),
            })
        })
        .collect()
}

/// One point of a stability sweep.
#[derive(Debug, Clone, Copy)]
pub struct StabilityRow {
    pub n: u64,
    pub value: f64,
    pub std_error: Option<f64>,
}

/// A stability sweep: values along the approach sequence plus the limit.
#[derive(Debug, Clone)]
pub struct StabilityReport {
    pub rows: Vec<StabilityRow>,
    pub limit_value: f64,
    pub limit_std_error: Option<f64>,
    /// `|value at the largest n - limit value|`.
    pub final_gap: f64,
    pub gate: Option<StabilityGate>,
}

/// Exact average reward along `theta_n = theta_star (1 - 1/n)`, gated on
/// uniform ergodicity of the whole kernel segment.
pub fn avg_stability_exact_chain(
    family: &ScalarChainFamily,
    theta_star: f64,
    n_list: &[u64],
) -> Result<StabilityReport> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) || n_list[0] == 0 {
        return Err(CoreError::Configuration {
            detail: "n_list must be strictly increasing and start at n >= 1".into(),
        });
    }
    let mut kernels = Vec::with_capacity(n_list.len() + 1);
    for &n in n_list {
        kernels.push(family.kernel_at(approach_parameter(theta_star, n))?);
    }
    let limit_kernel = family.kernel_at(theta_star)?;
    kernels.push(limit_kernel.clone());
    let gate = StabilityGate::measure(&kernels)?;
    gate.ensure_certifies()?;

    let m = family.level_m();
    let mut rows = Vec::with_capacity(n_list.len());
    for (&n, kernel) in n_list.iter().zip(&kernels) {
        let exact = average_reward_exact_chain(kernel, family.rewards(), m)?;
        rows.push(StabilityRow {
            n,
            value: exact.value,
            std_error: None,
        });
    }
    let limit_value = average_reward_exact_chain(&limit_kernel, family.rewards(), m)?.value;
    let final_gap = (rows.last().expect("nonempty").value - limit_value).abs();
    Ok(StabilityReport {
        rows,
        limit_value,
        limit_std_error: None,
        final_gap,
        gate: Some(gate),
    })
}

/// Monte Carlo average reward along a sequence of controls approaching a
/// limit control.
#[allow(clippy::too_many_arguments)]
pub fn avg_stability_mc(
    model: &SdeModel,
    reward: &RewardFunction,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    replicates: u64,
    seed: u64,
    controls: &[(u64, MarkovControl)],
    limit_control: &MarkovControl,
) -> Result<StabilityReport> {
    if controls.is_empty() {
        return Err(CoreError::Configuration {
            detail: "stability sweep needs at least one approaching control".into(),
        });
    }
    let mut rows = Vec::with_capacity(controls.len());
    for (n, control) in controls {
        let mc = average_reward_mc(
            model,
            control,
            reward,
            level,
            x0,
            horizon,
            replicates,
            derive_seed(seed, &[*n]),
        )?;
        rows.push(StabilityRow {
            n: *n,
            value: mc.value,
            std_error: Some(mc.std_error),
        });
    }
    let limit = average_reward_mc(
        model,
        limit_control,
        reward,
        level,
        x0,
        horizon,
        replicates,
        derive_seed(seed, &[u64::MAX]),
    )?;
    let final_gap = (rows.last().expect("nonempty").value - limit.value).abs();
    Ok(StabilityReport {
        rows,
        limit_value: limit.value,
        limit_std_error: Some(limit.std_error),
        final_gap,
        gate: None,
    })
}
