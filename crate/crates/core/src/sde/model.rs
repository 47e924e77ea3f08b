//! Controlled diffusion models and Markov controls.
//!
//! A model is the data of `dX_t = b(X_t, a) dt + sigma(X_t) dW_t` on a
//! domain, with a declared linear-growth constant. Controls are stationary
//! Markov: a measurable map from the state to a control point, held constant
//! over each discretization interval by the simulator.

use std::sync::Arc;

use crate::dyadic::Dyadic;
use crate::error::{CoreError, Result};

/// Where the process lives.
#[derive(Debug, Clone, PartialEq)]
pub enum Domain {
    /// All of R^d.
    Unbounded,
    /// An axis-aligned box with reflecting boundary.
    Rect { lo: Vec<f64>, hi: Vec<f64> },
}

impl Domain {
    pub fn rect(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(CoreError::DimensionMismatch {
                context: "domain box",
                expected: lo.len(),
                got: hi.len(),
            });
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !(l < h) || !l.is_finite() || !h.is_finite() {
                return Err(CoreError::Domain {
                    detail: format!("box side [{l}, {h}] is empty or infinite"),
                });
            }
        }
        Ok(Domain::Rect { lo, hi })
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            Domain::Unbounded => true,
            Domain::Rect { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(xi, (l, h))| *xi >= l - 1e-12 && *xi <= h + 1e-12),
        }
    }
}

type DriftFn = Arc<dyn Fn(&[f64], &[f64], &mut [f64]) + Send + Sync>;
type DiffusionFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A controlled SDE with drift `b(x, a)` and state-dependent diffusion
/// `sigma(x)` (row-major `d x d`).
#[derive(Clone)]
pub struct SdeModel {
    pub name: String,
    pub dim: usize,
    drift: DriftFn,
    diffusion: DiffusionFn,
    pub domain: Domain,
    /// Declared constant `K` with `|b(x,a)|^2 + |sigma(x)|_F^2 <= K (1 + |x|^2)`
    /// over the intended control range.
    pub growth_bound: f64,
    /// Whether `sigma sigma^T` is declared uniformly positive definite.
    pub nondegenerate: bool,
}

impl std::fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("growth_bound", &self.growth_bound)
            .field("nondegenerate", &self.nondegenerate)
            .finish()
    }
}

impl SdeModel {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        drift: impl Fn(&[f64], &[f64], &mut [f64]) + Send + Sync + 'static,
        diffusion: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
        domain: Domain,
        growth_bound: f64,
        nondegenerate: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(CoreError::Configuration {
                detail: "model dimension must be positive".into(),
            });
        }
        if let Domain::Rect { lo, .. } = &domain {
            if lo.len() != dim {
                return Err(CoreError::DimensionMismatch {
                    context: "model domain",
                    expected: dim,
                    got: lo.len(),
                });
            }
        }
        Ok(SdeModel {
            name: name.into(),
            dim,
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            domain,
            growth_bound,
            nondegenerate,
        })
    }

    pub fn drift_into(&self, x: &[f64], a: &[f64], out: &mut [f64]) {
        (self.drift)(x, a, out);
    }

    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out);
    }

    /// Checks the declared growth bound and (if declared nondegenerate) the
    /// positive-definiteness of `sigma sigma^T` at the given points.
    pub fn spot_check(&self, points: &[Vec<f64>], controls: &[Vec<f64>]) -> Result<()> {
        let d = self.dim;
        let mut b = vec![0.0; d];
        let mut s = vec![0.0; d * d];
        for x in points {
            for a in controls {
                self.drift_into(x, a, &mut b);
                self.diffusion_into(x, &mut s);
                let b2: f64 = b.iter().map(|v| v * v).sum();
                let s2: f64 = s.iter().map(|v| v * v).sum();
                let x2: f64 = x.iter().map(|v| v * v).sum();
                if b2 + s2 > self.growth_bound * (1.0 + x2) * (1.0 + 1e-9) {
                    return Err(CoreError::BoundViolation {
                        detail: format!(
                            "growth bound {} violated at x={x:?}, a={a:?}: |b|^2+|sigma|^2 = {}",
                            self.growth_bound,
                            b2 + s2
                        ),
                    });
                }
            }
            if self.nondegenerate {
                self.diffusion_into(x, &mut s);
                let gram = nalgebra::DMatrix::from_row_slice(d, d, &s);
                let gram = &gram * gram.transpose();
                if nalgebra::Cholesky::new(gram).is_none() {
                    return Err(CoreError::Configuration {
                        detail: format!(
                            "diffusion declared nondegenerate but sigma sigma^T is not positive \
                             definite at x={x:?}"
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}

/// A stationary Markov control `u(x)`.
#[derive(Clone)]
pub struct MarkovControl {
    map: Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
    pub control_dim: usize,
    pub description: String,
}

impl std::fmt::Debug for MarkovControl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "MarkovControl({})", self.description)
    }
}

impl MarkovControl {
    /// The constant control `u(x) = a0`.
    pub fn constant(a0: Vec<f64>) -> Self {
        let dim = a0.len();
        let desc = format!("constant {a0:?}");
        MarkovControl {
            map: Arc::new(move |_| a0.clone()),
            control_dim: dim,
            description: desc,
        }
    }

    pub fn from_fn(
        control_dim: usize,
        description: impl Into<String>,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        MarkovControl {
            map: Arc::new(f),
            control_dim,
            description: description.into(),
        }
    }

    pub fn at(&self, x: &[f64]) -> Vec<f64> {
        (self.map)(x)
    }
}

/// Dyadic discretization level: control intervals of length `h = 2^-m`, each
/// integrated with `inner_substeps` Euler steps of length `h / inner_substeps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiscretizationLevel {
    pub m: u32,
    pub inner_substeps: u32,
}

/// Default Euler refinement inside one control interval. Fixed rather than
/// m-dependent so that refining `m` isolates the control-discretization
/// error; set `inner_substeps = 1` to study the bare level-`m` scheme.
pub const DEFAULT_INNER_SUBSTEPS: u32 = 16;

impl DiscretizationLevel {
    pub fn new(m: u32) -> Self {
        DiscretizationLevel {
            m,
            inner_substeps: DEFAULT_INNER_SUBSTEPS,
        }
    }

    pub fn with_inner(m: u32, inner_substeps: u32) -> Result<Self> {
        if inner_substeps == 0 {
            return Err(CoreError::Configuration {
                detail: "inner_substeps must be at least 1".into(),
            });
        }
        if m > 40 {
            return Err(CoreError::Configuration {
                detail: format!("level m = {m} is out of the supported range 0..=40"),
            });
        }
        Ok(DiscretizationLevel { m, inner_substeps })
    }

    /// Control interval length `2^-m`, exact.
    pub fn h(&self) -> f64 {
        self.step().as_f64()
    }

    pub fn step(&self) -> Dyadic {
        Dyadic::level_step(self.m)
    }

    /// Euler step length inside a control interval.
    pub fn dt(&self) -> f64 {
        self.h() / self.inner_substeps as f64
    }

    /// Control intervals per unit time.
    pub fn steps_per_unit(&self) -> u64 {
        1u64 << self.m
    }
}

/// Built-in models by registry name.
///
/// * `ou`: `dX = (a - X) dt + sigma dW` on R, one-dimensional control.
/// * `reflected-bm`: `dX = sigma dW` reflected in `[lo, hi]`; the control
///   does not enter the dynamics.
/// * `reflected-ou`: `dX = (a - X) dt + sigma dW` reflected in `[lo, hi]`.
pub fn by_name(name: &str, sigma: f64, lo: Option<f64>, hi: Option<f64>) -> Result<SdeModel> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(CoreError::Configuration {
            detail: format!("sigma must be positive, got {sigma}"),
        });
    }
    let bounds = || -> Result<(f64, f64)> {
        match (lo, hi) {
            (Some(l), Some(h)) => Ok((l, h)),
            _ => Err(CoreError::Configuration {
                detail: format!("model {name:?} needs lo and hi bounds"),
            }),
        }
    };
    match name {
        "ou" => SdeModel::new(
            "ou",
            1,
            |x, a, out| out[0] = a[0] - x[0],
            move |_, out| out[0] = sigma,
            Domain::Unbounded,
            // |a - x|^2 + sigma^2 <= (2 + 2a^2 + sigma^2)(1 + x^2); sized for |a| <= 4.
            34.0 + sigma * sigma,
            true,
        ),
        "reflected-bm" => {
            let (l, h) = bounds()?;
            SdeModel::new(
                "reflected-bm",
                1,
                |_, _, out| out[0] = 0.0,
                move |_, out| out[0] = sigma,
                Domain::rect(vec![l], vec![h])?,
                1.0 + sigma * sigma,
                true,
            )
        }
        "reflected-ou" => {
            let (l, h) = bounds()?;
            SdeModel::new(
                "reflected-ou",
                1,
                |x, a, out| out[0] = a[0] - x[0],
                move |_, out| out[0] = sigma,
                Domain::rect(vec![l], vec![h])?,
                34.0 + sigma * sigma,
                true,
            )
        }
        other => Err(CoreError::Configuration {
            detail: format!(
                "unknown model {other:?}; known models: ou, reflected-bm, reflected-ou"
            ),
        }),
    }
}
