//! Running reward (cost) functions `c(x, a)` with declared bounds.
//!
//! Rewards are evaluated either at embedded points (along simulated paths) or
//! by state index (on finite chains). The declared bound is not trusted: the
//! evaluators that integrate a reward spot-check it at every queried point
//! and fail loudly on violation, since every certificate constant downstream
//! scales with it.

use std::sync::Arc;

use crate::error::{CoreError, Result};
use crate::space::StateSpace;

/// Declared size of a reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardBound {
    /// `|c(x,a)| <= value` everywhere.
    Sup(f64),
    /// `|c(x,a)| <= constant * V(x)` for the Lyapunov weight in scope.
    VDominated(f64),
}

impl RewardBound {
    /// Whether an observed `|c|` at a point with weight `v` is admissible.
    /// `v` is 1 wherever no weight applies. A small relative slack absorbs
    /// rounding in the evaluation itself.
    pub fn permits(self, c_abs: f64, v: f64) -> bool {
        match self {
            RewardBound::Sup(b) => c_abs <= b * (1.0 + 1e-9) + 1e-12,
            RewardBound::VDominated(k) => c_abs <= k * v * (1.0 + 1e-9) + 1e-12,
        }
    }
}

#[derive(Clone)]
enum RewardKind {
    /// Closure of the embedded point and the control point.
    Point(Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>),
    /// Per-state values on a fixed space; control-independent.
    Table(Vec<f64>),
}

/// A running reward together with its declared bound.
#[derive(Clone)]
pub struct RewardFunction {
    kind: RewardKind,
    bound: RewardBound,
}

impl std::fmt::Debug for RewardFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match &self.kind {
            RewardKind::Point(_) => "point-fn".to_string(),
            RewardKind::Table(v) => format!("table[{}]", v.len()),
        };
        f.debug_struct("RewardFunction")
            .field("kind", &kind)
            .field("bound", &self.bound)
            .finish()
    }
}

impl RewardFunction {
    /// The constant reward `c = c0`.
    pub fn constant(c0: f64) -> Self {
        RewardFunction {
            kind: RewardKind::Point(Arc::new(move |_, _| c0)),
            bound: RewardBound::Sup(c0.abs()),
        }
    }

    /// `c(x, a) = x[index]`. Unbounded on unbounded domains, so the default
    /// declaration is an infinite sup bound; tighten it with [`with_bound`]
    /// when the domain is compact.
    ///
    /// [`with_bound`]: RewardFunction::with_bound
    pub fn coordinate(index: usize) -> Self {
        RewardFunction {
            kind: RewardKind::Point(Arc::new(move |x, _| x[index])),
            bound: RewardBound::Sup(f64::INFINITY),
        }
    }

    /// `c(x, a) = |x|^2`.
    pub fn quadratic() -> Self {
        RewardFunction {
            kind: RewardKind::Point(Arc::new(|x: &[f64], _: &[f64]| {
                x.iter().map(|c| c * c).sum()
            })),
            bound: RewardBound::Sup(f64::INFINITY),
        }
    }

    /// Per-state values on a finite space.
    pub fn table(values: Vec<f64>) -> Self {
        let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        RewardFunction {
            kind: RewardKind::Table(values),
            bound: RewardBound::Sup(sup),
        }
    }

    /// Arbitrary reward with an explicit declaration.
    pub fn from_fn(
        f: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        bound: RewardBound,
    ) -> Self {
        RewardFunction {
            kind: RewardKind::Point(Arc::new(f)),
            bound,
        }
    }

    pub fn with_bound(mut self, bound: RewardBound) -> Self {
        self.bound = bound;
        self
    }

    pub fn bound(&self) -> RewardBound {
        self.bound
    }

    /// Evaluate at an embedded point. Table rewards have no meaning off
    /// their space and are rejected.
    pub fn at_point(&self, x: &[f64], a: &[f64]) -> Result<f64> {
        match &self.kind {
            RewardKind::Point(f) => Ok(f(x, a)),
            RewardKind::Table(_) => Err(CoreError::Configuration {
                detail: "table reward evaluated at a raw point; evaluate by state instead".into(),
            }),
        }
    }

    /// Evaluate at state `index` of `space` under control `a`.
    pub fn at_state(&self, space: &StateSpace, index: usize, a: &[f64]) -> Result<f64> {
        match &self.kind {
            RewardKind::Table(values) => {
                if values.len() != space.len() {
                    return Err(CoreError::DimensionMismatch {
                        context: "table reward",
                        expected: space.len(),
                        got: values.len(),
                    });
                }
                Ok(values[index])
            }
            RewardKind::Point(f) => {
                let x = space.point(index).ok_or_else(|| CoreError::Configuration {
                    detail: "point reward on a space without embedding".into(),
                })?;
                Ok(f(x, a))
            }
        }
    }

    /// The per-state vector `c(x, u(x))`, with `u` supplied by state index.
    /// Every queried value is checked against the declared bound.
    pub fn values_under(
        &self,
        space: &StateSpace,
        control_of_state: impl Fn(usize) -> Vec<f64>,
    ) -> Result<Vec<f64>> {
        (0..space.len())
            .map(|i| {
                let a = control_of_state(i);
                let c = self.at_state(space, i, &a)?;
                if !self.bound.permits(c.abs(), 1.0) {
                    if let RewardBound::Sup(_) = self.bound {
                        return Err(CoreError::BoundViolation {
                            detail: format!(
                                "|c| = {:.6e} at state {} exceeds declared {:?}",
                                c.abs(),
                                space.label(i),
                                self.bound
                            ),
                        });
                    }
                }
                Ok(c)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_shapes() {
        let c = RewardFunction::coordinate(0);
        assert_eq!(c.at_point(&[2.5], &[]).unwrap(), 2.5);
        let q = RewardFunction::quadratic();
        assert_eq!(q.at_point(&[3.0, 4.0], &[]).unwrap(), 25.0);
        let k = RewardFunction::constant(1.5);
        assert_eq!(k.at_point(&[9.0], &[7.0]).unwrap(), 1.5);
    }

    #[test]
    fn table_reward_by_state() {
        let space = StateSpace::from_labels(vec!["a", "b"]).unwrap();
        let c = RewardFunction::table(vec![0.0, 1.0]);
        assert_eq!(c.at_state(&space, 1, &[]).unwrap(), 1.0);
        assert!(c.at_point(&[0.0], &[]).is_err());
    }

    #[test]
    fn sup_bound_violation_is_detected() {
        let space = StateSpace::grid_1d(0.0, 10.0, 11).unwrap();
        let c = RewardFunction::coordinate(0).with_bound(RewardBound::Sup(5.0));
        let err = c.values_under(&space, |_| vec![]);
        assert!(matches!(err, Err(CoreError::BoundViolation { .. })));
    }

    #[test]
    fn bound_permits_with_slack() {
        assert!(RewardBound::Sup(1.0).permits(1.0, 1.0));
        assert!(RewardBound::Sup(1.0).permits(1.0 + 1e-12, 1.0));
        assert!(!RewardBound::Sup(1.0).permits(1.1, 1.0));
        assert!(RewardBound::VDominated(2.0).permits(5.0, 3.0));
        assert!(!RewardBound::VDominated(2.0).permits(7.0, 3.0));
    }
}
