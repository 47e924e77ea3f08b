//! Empirical certification of ergodicity across discretization levels.
//!
//! Convergence of long-run values along the dyadic levels rests on chain
//! properties that must hold uniformly in the level. This module measures
//! those properties on a family of unit-time kernels `{K_m}` and reports a
//! certificate:
//!
//! * `delta`: worst Dobrushin coefficient over the family; `< 1` certifies
//!   uniform contraction in total variation.
//! * `rho`: worst weighted contraction coefficient with respect to a
//!   Lyapunov weight `V`; `< 1` certifies geometric ergodicity in the
//!   `V`-weighted norm with level-independent constants.
//! * `equiv_ratio`: worst ratio `K_m^k(x,y) / K_m^k(x',y)` over states and
//!   levels; finiteness certifies that `k`-step distributions from different
//!   starts are mutually comparable, with a named witness when they are not.
//! * `drift_bound`: `sup_m sup_x (K_m V)(x) / V(x)`, with the per-state
//!   profile kept so a failure can be localized.
//!
//! The certificate is a falsifier: it can only show that the checked
//! constants hold on this family at these levels.

use std::collections::BTreeMap;

use crate::error::{CoreError, Result};
use crate::invariant::invariant_measure;
use crate::kernel::TransitionKernel;
use crate::risk::TiltedKernel;
use crate::space::StateSpace;
use crate::weight::{v_norm_measure_diff, LyapunovWeight};

/// Slack applied when comparing a measured quantity against a bound that it
/// should satisfy exactly in real arithmetic.
pub const BOUND_SLACK: f64 = 1e-12;

/// Unit-time kernels indexed by dyadic level, with an optional designated
/// limit kernel.
#[derive(Debug, Clone)]
pub struct KernelFamily {
    space: StateSpace,
    kernels: BTreeMap<u32, TransitionKernel>,
    limit: Option<TransitionKernel>,
}

impl KernelFamily {
    pub fn new(kernels: BTreeMap<u32, TransitionKernel>) -> Result<Self> {
        let space = match kernels.values().next() {
            Some(k) => k.space().clone(),
            None => {
                return Err(CoreError::Configuration {
                    detail: "kernel family must contain at least one level".into(),
                })
            }
        };
        for (m, k) in &kernels {
            if k.space() != &space {
                return Err(CoreError::SpaceMismatch {
                    context: "kernel family levels",
                });
            }
            if !k.step().is_one() {
                return Err(CoreError::Configuration {
                    detail: format!(
                        "family member at level {m} advances {} instead of one unit",
                        k.step()
                    ),
                });
            }
        }
        Ok(KernelFamily {
            space,
            kernels,
            limit: None,
        })
    }

    /// Attaches the kernel the levels are expected to approach.
    pub fn with_limit(mut self, limit: TransitionKernel) -> Result<Self> {
        if limit.space() != &self.space {
            return Err(CoreError::SpaceMismatch {
                context: "kernel family limit",
            });
        }
        if !limit.step().is_one() {
            return Err(CoreError::Configuration {
                detail: format!("limit kernel advances {} instead of one unit", limit.step()),
            });
        }
        self.limit = Some(limit);
        Ok(self)
    }

    /// Family of unit kernels `(I + 2^-m Q)^(2^m)` for a rate matrix `Q`,
    /// one per requested level.
    pub fn from_rate_matrix(space: StateSpace, q_rows: &[f64], m_list: &[u32]) -> Result<Self> {
        let mut kernels = BTreeMap::new();
        for &m in m_list {
            let substep = TransitionKernel::from_rate_matrix(space.clone(), q_rows, m)?;
            kernels.insert(m, substep.pow(1u64 << m)?);
        }
        KernelFamily::new(kernels)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.kernels.keys().copied()
    }

    pub fn kernel(&self, m: u32) -> Option<&TransitionKernel> {
        self.kernels.get(&m)
    }

    pub fn limit(&self) -> Option<&TransitionKernel> {
        self.limit.as_ref()
    }

    pub fn len(&self) -> usize {
        self.kernels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kernels.is_empty()
    }
}

/// A `k`-step comparability failure: mass reachable from `x` but not from
/// `x_prime`.
#[derive(Debug, Clone)]
pub struct EquivalenceViolation {
    pub level_m: u32,
    pub from: usize,
    pub from_other: usize,
    pub target: usize,
}

/// Measured ergodicity constants of a kernel family.
#[derive(Debug, Clone)]
pub struct ErgodicityCertificate {
    /// Worst Dobrushin coefficient over the family.
    pub delta: f64,
    /// Worst `V`-weighted contraction coefficient over the family.
    pub rho: f64,
    /// Steps used for the comparability check.
    pub equiv_steps: u64,
    /// Worst `k`-step density ratio over the family; infinite on violation.
    pub equiv_ratio: f64,
    pub equiv_violation: Option<EquivalenceViolation>,
    /// `sup_m sup_x (K_m V)(x) / V(x)`.
    pub drift_bound: f64,
    /// Per-state drift profile `x -> sup_m (K_m V)(x) / V(x)`.
    pub drift_profile: Vec<f64>,
    pub uniform_contraction: bool,
    pub weighted_contraction: bool,
    pub equivalence_bounded: bool,
    pub drift_bounded: bool,
}

impl ErgodicityCertificate {
    /// True when every checked constant is within its certifying range.
    pub fn passed(&self) -> bool {
        self.uniform_contraction
            && self.weighted_contraction
            && self.equivalence_bounded
            && self.drift_bounded
    }
}

/// Measures contraction, comparability and drift constants uniformly over
/// the family. `equiv_steps` is the step count `k` of the comparability
/// check and must be at least 1.
pub fn audit(
    family: &KernelFamily,
    weight: &LyapunovWeight,
    equiv_steps: u64,
) -> Result<ErgodicityCertificate> {
    if weight.space() != family.space() {
        return Err(CoreError::SpaceMismatch {
            context: "audit weight",
        });
    }
    if equiv_steps == 0 {
        return Err(CoreError::Configuration {
            detail: "equiv_steps must be at least 1".into(),
        });
    }
    let n = family.space().len();
    let mut delta = 0.0f64;
    let mut rho = 0.0f64;
    let mut equiv_ratio = 0.0f64;
    let mut equiv_violation = None;
    let mut drift_profile = vec![0.0f64; n];

    for (&m, kernel) in &family.kernels {
        delta = delta.max(kernel.dobrushin_delta());
        rho = rho.max(kernel.kartashov_rho(weight)?);

        let stepped = kernel.pow(equiv_steps)?;
        for x in 0..n {
            for x_other in 0..n {
                if x == x_other {
                    continue;
                }
                for y in 0..n {
                    let num = stepped.entry(x, y);
                    let den = stepped.entry(x_other, y);
                    if num == 0.0 && den == 0.0 {
                        continue;
                    }
                    if den == 0.0 {
                        equiv_ratio = f64::INFINITY;
                        if equiv_violation.is_none() {
                            equiv_violation = Some(EquivalenceViolation {
                                level_m: m,
                                from: x,
                                from_other: x_other,
                                target: y,
                            });
                        }
                    } else {
                        equiv_ratio = equiv_ratio.max(num / den);
                    }
                }
            }
        }

        let kv = kernel.apply_fn(weight.values())?;
        for x in 0..n {
            drift_profile[x] = drift_profile[x].max(kv[x] / weight.values()[x]);
        }
    }

    let drift_bound = drift_profile.iter().fold(0.0f64, |a, &b| a.max(b));
    Ok(ErgodicityCertificate {
        delta,
        rho,
        equiv_steps,
        equiv_ratio,
        equiv_violation,
        drift_bound,
        drift_profile,
        uniform_contraction: delta < 1.0,
        weighted_contraction: rho < 1.0,
        equivalence_bounded: equiv_ratio.is_finite(),
        drift_bounded: drift_bound.is_finite(),
    })
}

/// One measured distance between a level and the limit proxy.
#[derive(Debug, Clone, Copy)]
pub struct GapRow {
    pub level_m: u32,
    /// Composition horizon `j` (unit steps).
    pub horizon: u64,
    pub state: usize,
    /// `V`-weighted distance between `K_m^j(state, .)` and the limit's
    /// `j`-step distribution from the same state.
    pub gap: f64,
}

/// Level-versus-limit distances and their monotonicity in `m`.
#[derive(Debug, Clone)]
pub struct ConvergenceGaps {
    pub rows: Vec<GapRow>,
    /// Level used as the limit: `None` when a designated limit kernel was
    /// attached, otherwise the deepest level, which then contributes no rows.
    pub proxy_level: Option<u32>,
    /// Count of `(horizon, state)` slots where a deeper level is farther
    /// from the limit than a shallower one (beyond slack).
    pub monotonicity_violations: usize,
}

/// Distances `|| K_m^j(x, .) - K^j(x, .) ||_V` for every level, horizon
/// `j = 1..=horizons` and state. Falls back to the deepest level as the
/// limit when none was designated.
pub fn kernel_convergence_gap(
    family: &KernelFamily,
    weight: &LyapunovWeight,
    horizons: u64,
) -> Result<ConvergenceGaps> {
    if weight.space() != family.space() {
        return Err(CoreError::SpaceMismatch {
            context: "convergence gap weight",
        });
    }
    if horizons == 0 {
        return Err(CoreError::Configuration {
            detail: "horizons must be at least 1".into(),
        });
    }
    let (limit_kernel, proxy_level) = match family.limit() {
        Some(k) => (k.clone(), None),
        None => {
            let deepest = *family.kernels.keys().next_back().expect("nonempty family");
            if family.len() < 2 {
                return Err(CoreError::Configuration {
                    detail: "need a designated limit or at least two levels".into(),
                });
            }
            (family.kernels[&deepest].clone(), Some(deepest))
        }
    };
    let n = family.space().len();
    let mut rows = Vec::new();
    let mut limit_power = limit_kernel.clone();
    for j in 1..=horizons {
        if j > 1 {
            limit_power = limit_power.compose(&limit_kernel)?;
        }
        for (&m, kernel) in &family.kernels {
            if proxy_level == Some(m) {
                continue;
            }
            let level_power = kernel.pow(j)?;
            for x in 0..n {
                let gap =
                    v_norm_measure_diff(level_power.row(x), limit_power.row(x), weight)?;
                rows.push(GapRow {
                    level_m: m,
                    horizon: j,
                    state: x,
                    gap,
                });
            }
        }
    }

    let mut monotonicity_violations = 0;
    let levels: Vec<u32> = family
        .kernels
        .keys()
        .copied()
        .filter(|m| proxy_level != Some(*m))
        .collect();
    for j in 1..=horizons {
        for x in 0..n {
            let series: Vec<f64> = levels
                .iter()
                .map(|m| {
                    rows.iter()
                        .find(|r| r.level_m == *m && r.horizon == j && r.state == x)
                        .expect("row filled above")
                        .gap
                })
                .collect();
            for w in series.windows(2) {
                if w[1] > w[0] + BOUND_SLACK {
                    monotonicity_violations += 1;
                }
            }
        }
    }

    Ok(ConvergenceGaps {
        rows,
        proxy_level,
        monotonicity_violations,
    })
}

/// One horizon of the geometric decay comparison.
#[derive(Debug, Clone, Copy)]
pub struct BoundRow {
    pub n: u64,
    /// `max_x || K^n(x, .) - mu ||_V / V(x)`.
    pub max_lhs: f64,
    /// `rho^n (1 + (K V(x_star) + rho V(x_star)) / (1 - rho))`.
    pub rhs: f64,
    pub holds: bool,
}

/// Geometric decay certificate for a single kernel.
#[derive(Debug, Clone)]
pub struct GeometricBoundReport {
    pub rho: f64,
    pub x_star: usize,
    pub rows: Vec<BoundRow>,
    pub all_hold: bool,
}

/// Checks the explicit geometric bound
///
/// ```text
/// || K^n(x, .) - mu ||_V / V(x)  <=  rho^n [ 1 + (K V(x*) + rho V(x*)) / (1 - rho) ]
/// ```
///
/// for `n = 1..=n_max` and every start `x`, where `rho` is the measured
/// weighted contraction coefficient and `mu` the invariant distribution.
/// Fails with an ergodicity error when `rho >= 1`, since the bound then
/// certifies nothing.
pub fn verify_geometric_bound(
    kernel: &TransitionKernel,
    weight: &LyapunovWeight,
    x_star: usize,
    n_max: u64,
) -> Result<GeometricBoundReport> {
    if weight.space() != kernel.space() {
        return Err(CoreError::SpaceMismatch {
            context: "geometric bound weight",
        });
    }
    let n_states = kernel.len();
    if x_star >= n_states {
        return Err(CoreError::Configuration {
            detail: format!("x_star = {x_star} out of range for {n_states} states"),
        });
    }
    if n_max == 0 {
        return Err(CoreError::Configuration {
            detail: "n_max must be at least 1".into(),
        });
    }
    let rho = kernel.kartashov_rho(weight)?;
    if rho >= 1.0 {
        return Err(CoreError::Ergodicity {
            detail: format!(
                "weighted contraction coefficient rho = {rho} is not below one; \
                 the geometric bound is vacuous for this kernel and weight"
            ),
        });
    }
    let mu = invariant_measure(kernel)?;
    let kv = kernel.apply_fn(weight.values())?;
    let v_star = weight.values()[x_star];
    let constant = 1.0 + (kv[x_star] + rho * v_star) / (1.0 - rho);

    let mut rows = Vec::with_capacity(n_max as usize);
    let mut power = kernel.clone();
    for step in 1..=n_max {
        if step > 1 {
            power = power.compose(kernel)?;
        }
        let mut max_lhs = 0.0f64;
        for x in 0..n_states {
            let dist = v_norm_measure_diff(power.row(x), mu.weights(), weight)?;
            max_lhs = max_lhs.max(dist / weight.values()[x]);
        }
        let rhs = rho.powi(step as i32) * constant;
        rows.push(BoundRow {
            n: step,
            max_lhs,
            rhs,
            holds: max_lhs <= rhs + BOUND_SLACK,
        });
    }
    let all_hold = rows.iter().all(|r| r.holds);
    Ok(GeometricBoundReport {
        rho,
        x_star,
        rows,
        all_hold,
    })
}

/// One measured distance between tilted kernels at consecutive depth.
#[derive(Debug, Clone, Copy)]
pub struct TiltedGapRow {
    pub level_m: u32,
    pub state: usize,
    /// Total variation of the row difference between the level's tilted
    /// kernel and the reference, on the true (unscaled) matrices.
    pub gap: f64,
}

/// Row-wise L1 distances between each tilted kernel and a reference tilted
/// kernel (typically the deepest level). All kernels must share the space
/// and the risk parameter.
pub fn tilted_variation_gap(
    levels: &BTreeMap<u32, TiltedKernel>,
    reference: &TiltedKernel,
) -> Result<Vec<TiltedGapRow>> {
    let n = reference.len();
    let mut rows = Vec::new();
    for (&m, tilted) in levels {
        if tilted.space() != reference.space() {
            return Err(CoreError::SpaceMismatch {
                context: "tilted kernel comparison",
            });
        }
        if tilted.alpha != reference.alpha {
            return Err(CoreError::Configuration {
                detail: format!(
                    "tilted kernels disagree on alpha: {} vs {}",
                    tilted.alpha, reference.alpha
                ),
            });
        }
        for x in 0..n {
            let gap: f64 = (0..n)
                .map(|y| (tilted.actual_entry(x, y) - reference.actual_entry(x, y)).abs())
                .sum();
            rows.push(TiltedGapRow {
                level_m: m,
                state: x,
                gap,
            });
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dyadic::Dyadic;
    use crate::risk::build_tilted_kernel;

    fn space2() -> StateSpace {
        StateSpace::from_labels(vec!["a", "b"]).unwrap()
    }

    fn unit(rows: Vec<f64>) -> TransitionKernel {
        TransitionKernel::new(space2(), rows, Dyadic::one()).unwrap()
    }

    #[test]
    fn certificate_constants_on_a_two_state_chain() {
        let mut kernels = BTreeMap::new();
        kernels.insert(0, unit(vec![0.9, 0.1, 0.2, 0.8]));
        let family = KernelFamily::new(kernels).unwrap();
        let v = LyapunovWeight::constant_one(space2());
        let cert = audit(&family, &v, 1).unwrap();

        assert!((cert.delta - 0.7).abs() < 1e-15);
        assert!((cert.rho - 0.7).abs() < 1e-15);
        // Worst one-step density ratio: 0.8 / 0.1 = 8.
        assert!((cert.equiv_ratio - 8.0).abs() < 1e-12);
        assert!((cert.drift_bound - 1.0).abs() < 1e-15);
        assert!(cert.passed());
    }

    #[test]
    fn disconnected_chain_fails_contraction_and_comparability() {
        let mut kernels = BTreeMap::new();
        kernels.insert(0, unit(vec![1.0, 0.0, 0.0, 1.0]));
        let family = KernelFamily::new(kernels).unwrap();
        let v = LyapunovWeight::constant_one(space2());
        let cert = audit(&family, &v, 3).unwrap();

        assert_eq!(cert.delta, 1.0);
        assert!(!cert.uniform_contraction);
        assert!(!cert.equivalence_bounded);
        let violation = cert.equiv_violation.as_ref().expect("witness expected");
        assert_eq!(
            (violation.from, violation.from_other, violation.target),
            (0, 1, 0)
        );
        assert!(!cert.passed());
    }

    #[test]
    fn uniform_rows_contract_in_one_step() {
        let mut kernels = BTreeMap::new();
        kernels.insert(0, unit(vec![0.5, 0.5, 0.5, 0.5]));
        let family = KernelFamily::new(kernels).unwrap();
        let v = LyapunovWeight::constant_one(space2());
        let cert = audit(&family, &v, 1).unwrap();
        assert_eq!(cert.delta, 0.0);
        assert!((cert.equiv_ratio - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rate_matrix_family_gaps_shrink_with_level() {
        let q = vec![-0.8, 0.8, 0.5, -0.5];
        let family =
            KernelFamily::from_rate_matrix(space2(), &q, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
        let v = LyapunovWeight::constant_one(space2());
        let gaps = kernel_convergence_gap(&family, &v, 2).unwrap();
        assert_eq!(gaps.proxy_level, Some(6));
        let worst_at = |m: u32| {
            gaps.rows
                .iter()
                .filter(|r| r.level_m == m && r.horizon == 1)
                .map(|r| r.gap)
                .fold(0.0f64, f64::max)
        };
        // Euler composition error decays like 2^-m at unit horizon.
        for m in 0..5 {
            let ratio = worst_at(m + 1) / worst_at(m);
            assert!(
                ratio < 0.7,
                "level {} -> {}: gap ratio {ratio} not near 1/2",
                m,
                m + 1
            );
        }
        // At horizon 2 the coarsest kernel lands closer to the limit than
        // level 1 (its one-step overshoot partly cancels when squared); the
        // counter must surface those crossings rather than hide them.
        assert_eq!(gaps.monotonicity_violations, 2);
        let one_step_only = kernel_convergence_gap(&family, &v, 1).unwrap();
        assert_eq!(one_step_only.monotonicity_violations, 0);
    }

    #[test]
    fn geometric_bound_holds_on_a_mixing_chain() {
        let k = unit(vec![0.9, 0.1, 0.2, 0.8]);
        let v = LyapunovWeight::constant_one(space2());
        let report = verify_geometric_bound(&k, &v, 0, 20).unwrap();
        assert!((report.rho - 0.7).abs() < 1e-15);
        assert!(report.all_hold);
        // Decay is genuinely geometric, not just bounded.
        let first = report.rows.first().unwrap().max_lhs;
        let last = report.rows.last().unwrap().max_lhs;
        assert!(last < first * 1e-2);
    }

    #[test]
    fn geometric_bound_rejects_non_contracting_kernels() {
        let k = unit(vec![0.0, 1.0, 1.0, 0.0]);
        let v = LyapunovWeight::constant_one(space2());
        assert!(matches!(
            verify_geometric_bound(&k, &v, 0, 5),
            Err(CoreError::Ergodicity { .. })
        ));
    }

    #[test]
    fn tilted_gaps_shrink_with_level() {
        let q = vec![-0.8, 0.8, 0.5, -0.5];
        let c = [0.0, 1.0];
        let mut tilted = BTreeMap::new();
        for m in 0..=6u32 {
            let substep = TransitionKernel::from_rate_matrix(space2(), &q, m).unwrap();
            tilted.insert(m, build_tilted_kernel(&substep, &c, -1.0, m).unwrap());
        }
        let reference = tilted.remove(&6).unwrap();
        let rows = tilted_variation_gap(&tilted, &reference).unwrap();
        let worst_at = |m: u32| {
            rows.iter()
                .filter(|r| r.level_m == m)
                .map(|r| r.gap)
                .fold(0.0f64, f64::max)
        };
        for m in 0..5 {
            assert!(
                worst_at(m + 1) < worst_at(m),
                "tilted gap must shrink from level {m}"
            );
        }
    }
}
