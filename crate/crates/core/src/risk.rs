//! Risk-sensitive long-run value via multiplicative fixed points.
//!
//! For a finite chain with substep kernel `P` (step `h = 2^-m`), per-state
//! reward `c` and risk parameter `alpha != 0`, the tilted kernel over one
//! unit of time is the interleaved product
//!
//! ```text
//! M = (D P)^{2^m},    D = diag(exp(alpha h c(x)))
//! ```
//!
//! so that `(M f)(x) = E_x[ exp(alpha * sum_{i<2^m} h c(X_i)) f(X_1) ]`: the
//! reward weight is collected at each pre-transition state and the endpoint
//! `X_1` is not weighted. Everything downstream is a statement about `M`:
//!
//! * the long-run value `lambda` solves the multiplicative fixed-point
//!   equation `Psi w = w + lambda`, where
//!   `(Psi g)(x) = (1/alpha) ln sum_y M(x,y) exp(alpha g(y))`;
//! * `exp(alpha * lambda)` is the Perron eigenvalue of `M`, which a separate
//!   power iteration estimates as an independent oracle;
//! * finite-horizon estimates `(1/(alpha k)) ln (M^k 1)(x)` approach `lambda`
//!   at rate `2 ||w||_span / k`.
//!
//! `Psi` is evaluated in the log domain with max-shift stabilization, and the
//! solver iterates relative values `g <- Psi g - (Psi g)(x_ref)`, so only
//! span differences matter and no exponential ever overflows.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{CoreError, Result};
use crate::family::{approach_parameter, ScalarChainFamily, StabilityGate};
use crate::kernel::TransitionKernel;
use crate::reward::RewardFunction;
use crate::rng::{derive_seed, stream, tags, uniform_01};
use crate::sde::extract::{enforce_sup_bound, path_reward_sum};
use crate::sde::model::{DiscretizationLevel, MarkovControl, SdeModel};
use crate::sde::simulate::simulate;
use crate::space::StateSpace;
use crate::weight::span_seminorm;

/// Span-residual tolerance for the fixed-point solver.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-10;

/// Iteration cap for the fixed-point solver.
pub const DEFAULT_SOLVER_MAX_ITERATIONS: usize = 100_000;

/// Convergence tolerance of the Perron power iteration (L1 change of the
/// normalized eigenvector and relative change of the eigenvalue estimate).
pub const PERRON_TOL: f64 = 1e-13;

pub const PERRON_MAX_ITERATIONS: usize = 500_000;

/// Effective-sample-size threshold below which a Monte Carlo risk estimate
/// is flagged as weight-collapsed.
pub const ESS_WARNING_THRESHOLD: f64 = 10.0;

/// Parameters of the risk-sensitive solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskParams {
    pub alpha: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Reference state pinning the additive gauge; value functions are
    /// reported with `w(x_ref) = 0`.
    pub x_ref: usize,
}

impl RiskParams {
    pub fn new(alpha: f64) -> Result<Self> {
        if !alpha.is_finite() || alpha == 0.0 {
            return Err(CoreError::Configuration {
                detail: format!("alpha must be finite and nonzero, got {alpha}"),
            });
        }
        Ok(RiskParams {
            alpha,
            tolerance: DEFAULT_SOLVER_TOL,
            max_iterations: DEFAULT_SOLVER_MAX_ITERATIONS,
            x_ref: 0,
        })
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_x_ref(mut self, x_ref: usize) -> Self {
        self.x_ref = x_ref;
        self
    }
}

/// The nonnegative matrix `M` scaled as `exp(log_scale) * entries` to keep
/// stored entries in a safe floating range.
#[derive(Debug, Clone)]
pub struct TiltedKernel {
    space: StateSpace,
    entries: Vec<f64>,
    log_entries: Vec<f64>,
    log_scale: f64,
    pub alpha: f64,
    pub level_m: u32,
}

impl TiltedKernel {
    fn from_scaled(
        space: StateSpace,
        entries: Vec<f64>,
        log_scale: f64,
        alpha: f64,
        level_m: u32,
    ) -> Result<Self> {
        let n = space.len();
        if entries.len() != n * n {
            return Err(CoreError::DimensionMismatch {
                context: "tilted kernel entries",
                expected: n * n,
                got: entries.len(),
            });
        }
        for (i, e) in entries.iter().enumerate() {
            if !e.is_finite() || *e < 0.0 {
                return Err(CoreError::Configuration {
                    detail: format!(
                        "tilted kernel entry ({},{}) = {e} is negative or non-finite",
                        i / n,
                        i % n
                    ),
                });
            }
        }
        for x in 0..n {
            let row_sum: f64 = entries[x * n..(x + 1) * n].iter().sum();
            if row_sum <= 0.0 {
                return Err(CoreError::Configuration {
                    detail: format!("tilted kernel row {x} has zero mass"),
                });
            }
        }
        let log_entries = entries.iter().map(|e| e.ln()).collect();
        Ok(TiltedKernel {
            space,
            entries,
            log_entries,
            log_scale,
            alpha,
            level_m,
        })
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

    /// Entry of the true (unscaled) matrix.
    pub fn actual_entry(&self, x: usize, y: usize) -> f64 {
        self.entries[x * self.len() + y] * self.log_scale.exp()
    }

    /// Row sums of the true matrix: `E_x exp(alpha * unit reward)`.
    pub fn actual_row_sums(&self) -> Vec<f64> {
        let n = self.len();
        let scale = self.log_scale.exp();
        (0..n)
            .map(|x| self.entries[x * n..(x + 1) * n].iter().sum::<f64>() * scale)
            .collect()
    }
}

/// Exact tilted kernel from a substep kernel at level `m` and per-state
/// rewards, by squaring the interleaved one-substep factor `D P`.
pub fn build_tilted_kernel(
    substep: &TransitionKernel,
    c_u: &[f64],
    alpha: f64,
    m: u32,
) -> Result<TiltedKernel> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(CoreError::Configuration {
            detail: format!("alpha must be finite and nonzero, got {alpha}"),
        });
    }
    let n = substep.len();
    if c_u.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "tilted kernel reward vector",
            expected: n,
            got: c_u.len(),
        });
    }
    if substep.step() != crate::dyadic::Dyadic::level_step(m) {
        return Err(CoreError::Configuration {
            detail: format!(
                "substep kernel advances {} but level {m} requires 2^-{m}",
                substep.step()
            ),
        });
    }
    let h = substep.step().as_f64();

    // One substep factor: (D P)(x, y) = exp(alpha h c(x)) P(x, y).
    let mut entries: Vec<f64> = (0..n * n)
        .map(|i| (alpha * h * c_u[i / n]).exp() * substep.entries()[i])
        .collect();
    let mut log_scale = normalize_by_max(&mut entries);

    // M = (D P)^(2^m) by m squarings, renormalizing each time.
    let mut scratch = vec![0.0; n * n];
    for _ in 0..m {
        matrix_square(&entries, &mut scratch, n);
        std::mem::swap(&mut entries, &mut scratch);
        log_scale = 2.0 * log_scale + normalize_by_max(&mut entries);
    }
    TiltedKernel::from_scaled(substep.space().clone(), entries, log_scale, alpha, m)
}

fn normalize_by_max(entries: &mut [f64]) -> f64 {
    let max = entries.iter().fold(0.0f64, |a, &b| a.max(b));
    if max > 0.0 && max.is_finite() {
        for e in entries.iter_mut() {
            *e /= max;
        }
        max.ln()
    } else {
        0.0
    }
}

fn matrix_square(a: &[f64], out: &mut [f64], n: usize) {
    out.fill(0.0);
    for x in 0..n {
        for k in 0..n {
            let v = a[x * n + k];
            if v != 0.0 {
                let row_k = &a[k * n..(k + 1) * n];
                let out_row = &mut out[x * n..(x + 1) * n];
                for (y, w) in row_k.iter().enumerate() {
                    out_row[y] += v * w;
                }
            }
        }
    }
}

/// Monte Carlo tilted kernel on a grid: entry `(x, y)` estimates
/// `E_x[ exp(alpha * unit reward) ; X_1 near y ]` from `samples_per_state`
/// simulated unit blocks per node.
#[allow(clippy::too_many_arguments)]
pub fn build_tilted_kernel_mc(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    grid: &StateSpace,
    level: DiscretizationLevel,
    alpha: f64,
    samples_per_state: u64,
    seed: u64,
) -> Result<TiltedKernel> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(CoreError::Configuration {
            detail: format!("alpha must be finite and nonzero, got {alpha}"),
        });
    }
    if samples_per_state == 0 {
        return Err(CoreError::Configuration {
            detail: "samples_per_state must be positive".into(),
        });
    }
    let n = grid.len();
    // First pass: per-state lists of (endpoint node, log weight).
    let per_state: Result<Vec<Vec<(usize, f64)>>> = (0..n)
        .into_par_iter()
        .map(|s| {
            let x0 = grid.point(s).ok_or_else(|| CoreError::Configuration {
                detail: "tilted extraction needs an embedded grid".into(),
            })?;
            let mut draws = Vec::with_capacity(samples_per_state as usize);
            let mut worst: f64 = 0.0;
            for r in 0..samples_per_state {
                let mut rng = stream(seed, &[tags::TILTED, s as u64, r]);
                let path = simulate(model, control, level, x0, 1.0, &mut rng)?;
                let (sum, max_abs) = path_reward_sum(&path, reward)?;
                worst = worst.max(max_abs);
                let y = grid.nearest_node(path.endpoint())?;
                draws.push((y, alpha * sum));
            }
            enforce_sup_bound(reward.bound(), worst)?;
            Ok(draws)
        })
        .collect();
    let per_state = per_state?;

    let shift = per_state
        .iter()
        .flatten()
        .map(|(_, lw)| *lw)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut entries = vec![0.0; n * n];
    for (s, draws) in per_state.iter().enumerate() {
        for (y, lw) in draws {
            entries[s * n + y] += (lw - shift).exp() / samples_per_state as f64;
        }
    }
    TiltedKernel::from_scaled(grid.clone(), entries, shift, alpha, level.m)
}

/// One application of the log-domain Bellman-type operator:
/// `(Psi g)(x) = (1/alpha) ln sum_y M(x,y) exp(alpha g(y))`.
pub fn psi_apply(tilted: &TiltedKernel, g: &[f64]) -> Result<Vec<f64>> {
    let n = tilted.len();
    if g.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "psi argument",
            expected: n,
            got: g.len(),
        });
    }
    let alpha = tilted.alpha;
    let mut out = vec![0.0; n];
    for x in 0..n {
        let row_log = &tilted.log_entries[x * n..(x + 1) * n];
        let mut max_t = f64::NEG_INFINITY;
        for (y, lm) in row_log.iter().enumerate() {
            if lm.is_finite() {
                max_t = max_t.max(lm + alpha * g[y]);
            }
        }
        let mut acc = 0.0;
        for (y, lm) in row_log.iter().enumerate() {
            if lm.is_finite() {
                acc += (lm + alpha * g[y] - max_t).exp();
            }
        }
        out[x] = (tilted.log_scale + max_t + acc.ln()) / alpha;
    }
    Ok(out)
}

/// Solution of the multiplicative fixed-point equation.
#[derive(Debug, Clone)]
pub struct PoissonSolution {
    /// Relative value function, gauged to `w(x_ref) = 0`.
    pub w: Vec<f64>,
    /// Long-run risk-sensitive value per unit time.
    pub lambda: f64,
    pub iterations: usize,
    /// Final sup-norm residual `max_x |Psi w - w - lambda|`.
    pub residual: f64,
    pub span_w: f64,
    /// Geometric-mean per-sweep span contraction over the last sweeps, when
    /// more than one sweep was needed.
    pub contraction_estimate: Option<f64>,
    pub alpha: f64,
    pub x_ref: usize,
}

/// Relative value iteration `g <- Psi g - (Psi g)(x_ref)` until the span of
/// `Psi g - g` falls below tolerance.
pub fn solve_poisson(tilted: &TiltedKernel, params: &RiskParams) -> Result<PoissonSolution> {
    let n = tilted.len();
    if params.x_ref >= n {
        return Err(CoreError::Configuration {
            detail: format!("x_ref = {} out of range for {n} states", params.x_ref),
        });
    }
    if params.alpha != tilted.alpha {
        return Err(CoreError::Configuration {
            detail: format!(
                "params.alpha = {} does not match the kernel's alpha = {}",
                params.alpha, tilted.alpha
            ),
        });
    }
    let mut g = vec![0.0; n];
    let mut last_span: Option<f64> = None;
    let mut ratios: Vec<f64> = Vec::new();
    for sweep in 1..=params.max_iterations {
        let psi = psi_apply(tilted, &g)?;
        let diff: Vec<f64> = psi.iter().zip(&g).map(|(p, gi)| p - gi).collect();
        let resid = span_seminorm(&diff);
        if !resid.is_finite() {
            return Err(CoreError::NonConvergence {
                iterations: sweep,
                residual: resid,
                contraction: f64::NAN,
            });
        }
        if let Some(prev) = last_span {
            if prev > 0.0 {
                ratios.push(resid / prev);
                if ratios.len() > 20 {
                    ratios.remove(0);
                }
            }
        }
        last_span = Some(resid);
        if resid <= params.tolerance {
            let lambda = diff[params.x_ref];
            let residual = diff
                .iter()
                .map(|d| (d - lambda).abs())
                .fold(0.0f64, f64::max);
            return Ok(PoissonSolution {
                span_w: span_seminorm(&g),
                w: g,
                lambda,
                iterations: sweep,
                residual,
                contraction_estimate: contraction_from(&ratios),
                alpha: params.alpha,
                x_ref: params.x_ref,
            });
        }
        let anchor = psi[params.x_ref];
        g = psi.into_iter().map(|p| p - anchor).collect();
    }
    Err(CoreError::NonConvergence {
        iterations: params.max_iterations,
        residual: last_span.unwrap_or(f64::NAN),
        contraction: contraction_from(&ratios).unwrap_or(f64::NAN),
    })
}

fn contraction_from(ratios: &[f64]) -> Option<f64> {
    if ratios.is_empty() {
        return None;
    }
    let log_mean = ratios.iter().map(|r| r.max(1e-300).ln()).sum::<f64>() / ratios.len() as f64;
    Some(log_mean.exp())
}

/// Independent route to `lambda`: power iteration for the Perron eigenvalue
/// of `M`, in the linear domain with L1 normalization. Starts from a
/// deliberately non-uniform vector so that periodic structure shows up as
/// non-convergence instead of a spurious fixed point.
pub fn perron_oracle(tilted: &TiltedKernel) -> Result<f64> {
    let n = tilted.len();
    let mut v: Vec<f64> = (0..n).map(|i| (i + 1) as f64).collect();
    let norm: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut rho_prev = f64::NAN;
    for sweep in 1..=PERRON_MAX_ITERATIONS {
        let mut next = vec![0.0; n];
        for x in 0..n {
            let row = &tilted.entries[x * n..(x + 1) * n];
            next[x] = row.iter().zip(&v).map(|(m, vi)| m * vi).sum();
        }
        let rho: f64 = next.iter().sum();
        if !(rho.is_finite() && rho > 0.0) {
            return Err(CoreError::OracleFailure {
                detail: format!("power iterate lost mass at sweep {sweep} (rho = {rho})"),
            });
        }
        next.iter_mut().for_each(|x| *x /= rho);
        let vec_change: f64 = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
        let rho_change = (rho - rho_prev).abs();
        v = next;
        rho_prev = rho;
        if vec_change <= PERRON_TOL && rho_change <= PERRON_TOL * rho.max(1.0) {
            return Ok((tilted.log_scale + rho.ln()) / tilted.alpha);
        }
    }
    Err(CoreError::OracleFailure {
        detail: format!(
            "power iteration did not converge in {PERRON_MAX_ITERATIONS} sweeps; \
             the tilted chain appears periodic or gapless"
        ),
    })
}

/// One row of the finite-horizon comparison.
#[derive(Debug, Clone, Copy)]
pub struct HorizonGapRow {
    pub k: u64,
    /// `max_x |(1/(alpha k)) ln (M^k 1)(x) - lambda|`.
    pub max_gap: f64,
    /// `2 ||w||_span / k`.
    pub bound: f64,
    pub holds: bool,
}

/// Compares finite-horizon estimates against `lambda` and the span bound.
/// `k_list` must be increasing.
pub fn finite_horizon_gap(
    tilted: &TiltedKernel,
    solution: &PoissonSolution,
    k_list: &[u64],
) -> Result<Vec<HorizonGapRow>> {
    let n = tilted.len();
    if solution.w.len() != n {
        return Err(CoreError::DimensionMismatch {
            context: "finite-horizon solution",
            expected: n,
            got: solution.w.len(),
        });
    }
    if k_list.is_empty() || k_list.windows(2).any(|w| w[0] >= w[1]) || k_list[0] == 0 {
        return Err(CoreError::Configuration {
            detail: "k_list must be strictly increasing and start at k >= 1".into(),
        });
    }
    let alpha = tilted.alpha;
    let mut y = vec![1.0; n];
    let mut acc_log = 0.0;
    let mut rows = Vec::with_capacity(k_list.len());
    let mut next_idx = 0;
    for k in 1..=*k_list.last().expect("nonempty") {
        let mut z = vec![0.0; n];
        for x in 0..n {
            let row = &tilted.entries[x * n..(x + 1) * n];
            z[x] = row.iter().zip(&y).map(|(m, yi)| m * yi).sum();
        }
        let max = z.iter().fold(0.0f64, |a, &b| a.max(b));
        if !(max.is_finite() && max > 0.0) {
            return Err(CoreError::OracleFailure {
                detail: format!("matrix power lost mass at k = {k}"),
            });
        }
        z.iter_mut().for_each(|v| *v /= max);
        acc_log += max.ln();
        y = z;
        if k == k_list[next_idx] {
            let kf = k as f64;
            let max_gap = y
                .iter()
                .map(|yi| {
                    let log_mk1 = kf * tilted.log_scale + acc_log + yi.ln();
                    (log_mk1 / (alpha * kf) - solution.lambda).abs()
                })
                .fold(0.0f64, f64::max);
            let bound = 2.0 * solution.span_w / kf;
            rows.push(HorizonGapRow {
                k,
                max_gap,
                bound,
                holds: max_gap <= bound + 1e-12,
            });
            next_idx += 1;
            if next_idx == k_list.len() {
                break;
            }
        }
    }
    Ok(rows)
}

/// Monte Carlo estimate of the risk-sensitive value from simulated paths.
#[derive(Debug, Clone)]
pub struct RiskMcResult {
    pub value: f64,
    /// Bootstrap standard error over replicates.
    pub std_error: f64,
    /// Effective sample size of the exponential weights.
    pub ess: f64,
    pub ess_warning: bool,
    pub replicates: u64,
}

fn risk_estimate_from_log_weights(log_weights: &[f64], alpha: f64, horizon: f64) -> f64 {
    let n = log_weights.len() as f64;
    let max = log_weights.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let sum: f64 = log_weights.iter().map(|lw| (lw - max).exp()).sum();
    (max + (sum / n).ln()) / (alpha * horizon)
}

fn finish_risk_mc(
    log_weights: Vec<f64>,
    alpha: f64,
    horizon: f64,
    seed: u64,
) -> RiskMcResult {
    let replicates = log_weights.len() as u64;
    let value = risk_estimate_from_log_weights(&log_weights, alpha, horizon);
    let max = log_weights.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let (mut w_sum, mut w2_sum) = (0.0, 0.0);
    for lw in &log_weights {
        let w = (lw - max).exp();
        w_sum += w;
        w2_sum += w * w;
    }
    let ess = w_sum * w_sum / w2_sum;

    // Deterministic bootstrap over replicate indices.
    let b_count = 200;
    let mut boot = Vec::with_capacity(b_count);
    for b in 0..b_count {
        let mut rng = stream(seed, &[tags::BOOTSTRAP, b as u64]);
        let resample: Vec<f64> = (0..log_weights.len())
            .map(|_| {
                let idx = (uniform_01(&mut rng) * log_weights.len() as f64) as usize;
                log_weights[idx.min(log_weights.len() - 1)]
            })
            .collect();
        boot.push(risk_estimate_from_log_weights(&resample, alpha, horizon));
    }
    let boot_mean = boot.iter().sum::<f64>() / b_count as f64;
    let boot_var =
        boot.iter().map(|v| (v - boot_mean) * (v - boot_mean)).sum::<f64>() / (b_count - 1) as f64;

    RiskMcResult {
        value,
        std_error: boot_var.sqrt(),
        ess,
        ess_warning: ess < ESS_WARNING_THRESHOLD,
        replicates,
    }
}

/// Simulation estimate `(1/(alpha T)) ln (1/R) sum_r exp(alpha S_r)` with
/// `S_r` the reward integral of replicate `r` on the discretized model.
#[allow(clippy::too_many_arguments)]
pub fn risk_mc(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    alpha: f64,
    replicates: u64,
    seed: u64,
) -> Result<RiskMcResult> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(CoreError::Configuration {
            detail: format!("alpha must be finite and nonzero, got {alpha}"),
        });
    }
    if replicates < 2 {
        return Err(CoreError::Configuration {
            detail: "risk_mc needs at least 2 replicates".into(),
        });
    }
    let draws: Result<Vec<(f64, f64)>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tags::RISK_MC, r]);
            let path = simulate(model, control, level, x0, horizon, &mut rng)?;
            path_reward_sum(&path, reward)
        })
        .collect();
    let mut worst: f64 = 0.0;
    let mut log_weights = Vec::with_capacity(replicates as usize);
    for (sum, max_abs) in draws? {
        worst = worst.max(max_abs);
        log_weights.push(alpha * sum);
    }
    enforce_sup_bound(reward.bound(), worst)?;
    Ok(finish_risk_mc(log_weights, alpha, horizon, seed))
}

/// Same estimator on a finite chain simulated from its substep kernel.
#[allow(clippy::too_many_arguments)]
pub fn risk_mc_chain(
    substep: &TransitionKernel,
    c_u: &[f64],
    m: u32,
    x0: usize,
    horizon_units: u64,
    alpha: f64,
    replicates: u64,
    seed: u64,
) -> Result<RiskMcResult> {
    if alpha == 0.0 || !alpha.is_finite() {
        return Err(CoreError::Configuration {
            detail: format!("alpha must be finite and nonzero, got {alpha}"),
        });
    }
    if replicates < 2 {
        return Err(CoreError::Configuration {
            detail: "risk_mc_chain needs at least 2 replicates".into(),
        });
    }
    let n = substep.len();
    if c_u.len() != n || x0 >= n {
        return Err(CoreError::DimensionMismatch {
            context: "chain risk estimate",
            expected: n,
            got: c_u.len().max(x0 + 1),
        });
    }
    let h = crate::dyadic::Dyadic::level_step(m).as_f64();
    let steps = horizon_units * (1u64 << m);
    let log_weights: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream(seed, &[tags::CHAIN_MC, r]);
            let mut x = x0;
            let mut sum = 0.0;
            for _ in 0..steps {
                sum += h * c_u[x];
                x = substep.sample_next(x, uniform_01(&mut rng));
            }
            alpha * sum
        })
        .collect();
    Ok(finish_risk_mc(log_weights, alpha, horizon_units as f64, seed))
}

/// One row of a risk sweep: the solve at one sweep point, with the
/// independent oracle alongside.
#[derive(Debug, Clone)]
pub struct RiskSweepRow {
    /// Level `m` for convergence sweeps, index `n` for stability sweeps.
    pub sweep_var: u64,
    pub lambda: f64,
    pub span_w: f64,
    pub iterations: usize,
    pub residual: f64,
    pub oracle_lambda: f64,
    pub oracle_gap: f64,
}

fn solve_row(tilted: &TiltedKernel, params: &RiskParams, sweep_var: u64) -> Result<RiskSweepRow> {
    let solution = solve_poisson(tilted, params)?;
    let oracle = perron_oracle(tilted)?;
    Ok(RiskSweepRow {
        sweep_var,
        lambda: solution.lambda,
        span_w: solution.span_w,
        iterations: solution.iterations,
        residual: solution.residual,
        oracle_lambda: oracle,
        oracle_gap: (solution.lambda - oracle).abs(),
    })
}

/// Level sweep over exact substep chains: one solve per `(m, kernel)`.
pub fn risk_convergence_sweep_exact(
    levels: &BTreeMap<u32, TransitionKernel>,
    c_u: &[f64],
    params: &RiskParams,
) -> Result<Vec<RiskSweepRow>> {
    levels
        .iter()
        .map(|(m, substep)| {
            let tilted = build_tilted_kernel(substep, c_u, params.alpha, *m)?;
            solve_row(&tilted, params, *m as u64)
        })
        .collect()
}

/// Level sweep with Monte Carlo tilted kernels extracted from the model.
#[allow(clippy::too_many_arguments)]
pub fn risk_convergence_sweep_mc(
    model: &SdeModel,
    control: &MarkovControl,
    reward: &RewardFunction,
    grid: &StateSpace,
    m_list: &[u32],
    inner_substeps: u32,
    samples_per_state: u64,
    seed: u64,
    params: &RiskParams,
) -> Result<Vec<RiskSweepRow>> {
    m_list
        .iter()
        .map(|&m| {
            let level = DiscretizationLevel::with_inner(m, inner_substeps)?;
            let tilted = build_tilted_kernel_mc(
                model,
                control,
                reward,
                grid,
                level,
                params.alpha,
                samples_per_state,
                // Separate the per-level extractions without correlating them.
                derive_seed(seed, &[m as u64]),
            )?;
            solve_row(&tilted, params, m as u64)
        })
        .collect()
}

/// Stability sweep along `theta_n = theta_star (1 - 1/n)`.
#[derive(Debug, Clone)]
pub struct RiskStabilityReport {
    /// One solve per `n`, `sweep_var = n`.
    pub rows: Vec<RiskSweepRow>,
    pub limit: RiskSweepRow,
    /// `|lambda at the largest n - limit lambda|`.
    pub final_gap: f64,
    pub gate: StabilityGate,
}

/// Exact risk-sensitive value along the approach sequence of a kernel
/// family, gated on uniform ergodicity of the whole segment.
pub fn risk_stability_exact_chain(
    family: &ScalarChainFamily,
    theta_star: f64,
    n_list: &[u64],
    params: &RiskParams,
) -> Result<RiskStabilityReport> {
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
        let tilted = build_tilted_kernel(kernel, family.rewards(), params.alpha, m)?;
        rows.push(solve_row(&tilted, params, n)?);
    }
    let limit_tilted = build_tilted_kernel(&limit_kernel, family.rewards(), params.alpha, m)?;
    let limit = solve_row(&limit_tilted, params, 0)?;
    let final_gap = (rows.last().expect("nonempty").lambda - limit.lambda).abs();
    Ok(RiskStabilityReport {
        rows,
        limit,
        final_gap,
        gate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::Dyadic;
    use crate::space::StateSpace;

    fn two_state_substep() -> TransitionKernel {
        let space = StateSpace::from_labels(vec!["s0", "s1"]).unwrap();
        TransitionKernel::new(space, vec![0.9, 0.1, 0.2, 0.8], Dyadic::one()).unwrap()
    }

    /// Quadratic-formula eigenvalue of the 2x2 tilted matrix: a third route,
    /// independent of both the fixed-point solver and the power iteration.
    fn two_state_lambda_oracle(p: [[f64; 2]; 2], c: [f64; 2], alpha: f64) -> f64 {
        let a = (alpha * c[0]).exp() * p[0][0];
        let b = (alpha * c[0]).exp() * p[0][1];
        let cc = (alpha * c[1]).exp() * p[1][0];
        let d = (alpha * c[1]).exp() * p[1][1];
        let trace = a + d;
        let det = a * d - b * cc;
        let rho = (trace + (trace * trace - 4.0 * det).sqrt()) / 2.0;
        rho.ln() / alpha
    }

    #[test]
    fn level_zero_tilted_entries_are_weighted_rows() {
        let k = two_state_substep();
        let c = [0.0, 1.0];
        let alpha = -1.0;
        let m = build_tilted_kernel(&k, &c, alpha, 0).unwrap();
        let e = (-1.0f64).exp();
        let expected = [0.9, 0.1, 0.2 * e, 0.8 * e];
        for x in 0..2 {
            for y in 0..2 {
                let got = m.actual_entry(x, y);
                let want = expected[x * 2 + y];
                assert!((got - want).abs() < 1e-14, "entry ({x},{y}): {got} vs {want}");
            }
        }
    }

    #[test]
    fn alpha_sign_symmetry() {
        // Negating alpha and the reward together leaves the matrix unchanged.
        let k = two_state_substep();
        let c = [0.3, 1.2];
        let neg_c = [-0.3, -1.2];
        let a = build_tilted_kernel(&k, &c, 0.7, 0).unwrap();
        let b = build_tilted_kernel(&k, &neg_c, -0.7, 0).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!((a.actual_entry(x, y) - b.actual_entry(x, y)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_reward_tilted_kernel_is_the_plain_kernel() {
        let k = two_state_substep();
        let m = build_tilted_kernel(&k, &[0.0, 0.0], 1.0, 0).unwrap();
        for x in 0..2 {
            for y in 0..2 {
                assert!((m.actual_entry(x, y) - k.entry(x, y)).abs() < 1e-15);
            }
        }
        for s in m.actual_row_sums() {
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn psi_at_zero_recovers_log_row_masses() {
        let k = two_state_substep();
        let m = build_tilted_kernel(&k, &[0.0, 1.0], -1.0, 0).unwrap();
        let psi0 = psi_apply(&m, &[0.0, 0.0]).unwrap();
        // Row masses are 1 and e^-1, so Psi 0 = (0, 1) at alpha = -1.
        assert!(psi0[0].abs() < 1e-14, "got {}", psi0[0]);
        assert!((psi0[1] - 1.0).abs() < 1e-14, "got {}", psi0[1]);
    }

    #[test]
    fn solver_and_oracles_agree_on_two_state_chain() {
        let k = two_state_substep();
        let c = [0.0, 1.0];
        let alpha = -1.0;
        let tilted = build_tilted_kernel(&k, &c, alpha, 0).unwrap();
        let params = RiskParams::new(alpha).unwrap().with_tolerance(1e-12);
        let sol = solve_poisson(&tilted, &params).unwrap();
        let power = perron_oracle(&tilted).unwrap();
        let quadratic = two_state_lambda_oracle([[0.9, 0.1], [0.2, 0.8]], c, alpha);
        assert!(
            (sol.lambda - quadratic).abs() < 1e-10,
            "solver {} vs quadratic root {}",
            sol.lambda,
            quadratic
        );
        assert!((power - quadratic).abs() < 1e-10);
        assert!(sol.residual <= 1e-11);
        assert_eq!(sol.w[sol.x_ref], 0.0);
    }

    #[test]
    fn x_ref_choice_does_not_move_lambda() {
        let space = StateSpace::from_labels(vec!["a", "b", "c"]).unwrap();
        let k = TransitionKernel::new(
            space,
            vec![0.6, 0.3, 0.1, 0.2, 0.5, 0.3, 0.3, 0.3, 0.4],
            Dyadic::one(),
        )
        .unwrap();
        let c = [0.5, -0.2, 1.0];
        let tilted = build_tilted_kernel(&k, &c, 0.8, 0).unwrap();
        let l0 = solve_poisson(&tilted, &RiskParams::new(0.8).unwrap().with_x_ref(0))
            .unwrap()
            .lambda;
        let l2 = solve_poisson(&tilted, &RiskParams::new(0.8).unwrap().with_x_ref(2))
            .unwrap()
            .lambda;
        assert!((l0 - l2).abs() < 1e-9, "{l0} vs {l2}");
    }

    #[test]
    fn periodic_tilt_is_reported_by_the_oracle() {
        let space = StateSpace::from_labels(vec!["a", "b"]).unwrap();
        let k =
            TransitionKernel::new(space, vec![0.0, 1.0, 1.0, 0.0], Dyadic::one()).unwrap();
        let tilted = build_tilted_kernel(&k, &[0.0, 0.0], 1.0, 0).unwrap();
        assert!(matches!(
            perron_oracle(&tilted),
            Err(CoreError::OracleFailure { .. })
        ));
    }

    #[test]
    fn finite_horizon_gap_shrinks_within_bound() {
        let k = two_state_substep();
        let tilted = build_tilted_kernel(&k, &[0.0, 1.0], -1.0, 0).unwrap();
        let params = RiskParams::new(-1.0).unwrap().with_tolerance(1e-12);
        let sol = solve_poisson(&tilted, &params).unwrap();
        let rows = finite_horizon_gap(&tilted, &sol, &[1, 2, 4, 8, 16, 32, 64]).unwrap();
        assert_eq!(rows.len(), 7);
        for row in &rows {
            assert!(row.holds, "bound fails at k = {}: {row:?}", row.k);
        }
        let first = rows.first().unwrap().max_gap;
        let last = rows.last().unwrap().max_gap;
        assert!(last < first, "gap should shrink: {first} -> {last}");
    }

    #[test]
    fn deeper_levels_converge_toward_each_other() {
        // Substep chains I + 2^-m Q of a fixed rate matrix: lambda^(m) is
        // Cauchy in m with geometrically shrinking increments.
        let space = StateSpace::from_labels(vec!["a", "b"]).unwrap();
        let q = vec![-0.8, 0.8, 0.5, -0.5];
        let c = [0.0, 1.0];
        let mut levels = BTreeMap::new();
        for m in 0..=6 {
            levels.insert(
                m,
                TransitionKernel::from_rate_matrix(space.clone(), &q, m).unwrap(),
            );
        }
        let params = RiskParams::new(-1.0).unwrap().with_tolerance(1e-12);
        let rows = risk_convergence_sweep_exact(&levels, &c, &params).unwrap();
        let lambdas: Vec<f64> = rows.iter().map(|r| r.lambda).collect();
        for w in lambdas.windows(3) {
            let d0 = (w[0] - w[1]).abs();
            let d1 = (w[1] - w[2]).abs();
            assert!(d1 < d0, "increments must shrink: {d0} then {d1}");
        }
        for row in &rows {
            assert!(row.oracle_gap < 1e-9, "oracle gap {} at m={}", row.oracle_gap, row.sweep_var);
        }
    }

    #[test]
    fn stability_lambdas_approach_the_limit() {
        let space = StateSpace::from_labels(vec!["lo", "hi"]).unwrap();
        let family = ScalarChainFamily::new(
            space,
            vec![0.9, 0.1, 0.2, 0.8],
            vec![-0.001, 0.001, 0.001, -0.001],
            0,
            vec![0.0, 1.0],
        )
        .unwrap();
        let params = RiskParams::new(-1.0).unwrap();
        let report =
            risk_stability_exact_chain(&family, 1.0, &[1, 10, 100, 1000, 10_000], &params)
                .unwrap();
        let gaps: Vec<f64> = report
            .rows
            .iter()
            .map(|r| (r.lambda - report.limit.lambda).abs())
            .collect();
        for w in gaps.windows(2) {
            assert!(w[1] < w[0], "gaps must shrink: {gaps:?}");
        }
        assert!(report.final_gap < 1e-6, "final gap {}", report.final_gap);
        assert!(report.gate.max_delta < 1.0);
    }

    #[test]
    fn chain_mc_matches_exact_lambda_within_error() {
        let k = two_state_substep();
        let c = [0.0, 1.0];
        let alpha = -0.5;
        let tilted = build_tilted_kernel(&k, &c, alpha, 0).unwrap();
        let sol = solve_poisson(&tilted, &RiskParams::new(alpha).unwrap()).unwrap();
        // The estimator targets the finite-horizon value, so the comparison
        // gets both the sampling error and the 2 span(w) / T horizon bias.
        let horizon = 20u64;
        let mc = risk_mc_chain(&k, &c, 0, 0, horizon, alpha, 4000, 2718).unwrap();
        let tolerance = 3.0 * mc.std_error + 2.0 * sol.span_w / horizon as f64;
        assert!(
            (mc.value - sol.lambda).abs() <= tolerance,
            "mc {} vs exact {} (tolerance {tolerance})",
            mc.value,
            sol.lambda
        );
        assert!(!mc.ess_warning, "ess collapsed: {}", mc.ess);
    }
}
