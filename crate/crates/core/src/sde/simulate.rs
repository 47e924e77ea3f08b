//! Euler-Maruyama simulation under piecewise-constant Markov controls.
//!
//! The control is sampled at the start of each interval `[kh, (k+1)h)` and
//! frozen there; the state itself keeps moving through the inner Euler steps.
//! Reflection at box boundaries is realized by coordinatewise folding, which
//! maps each Euler increment back into the box through the reflection group
//! of the interval. Folding commutes with symmetric increments, so it leaves
//! the uniform law of driftless reflected motion exactly invariant.

use rand_chacha::ChaCha8Rng;

use crate::error::{CoreError, Result};
use crate::rng::standard_normal;
use crate::sde::model::{DiscretizationLevel, Domain, MarkovControl, SdeModel};

/// States whose sup-norm exceeds this are treated as numerical blow-up.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// A simulated trajectory on the inner Euler grid.
#[derive(Debug, Clone)]
pub struct SamplePath {
    /// `t_i = i * dt`, from 0 to the horizon inclusive.
    pub times: Vec<f64>,
    /// State at each inner grid time; `states[0]` is the start.
    pub states: Vec<Vec<f64>>,
    /// Control point held on each control interval, one entry per interval.
    pub controls_applied: Vec<Vec<f64>>,
    pub level: DiscretizationLevel,
}

impl SamplePath {
    /// Number of control intervals.
    pub fn control_steps(&self) -> usize {
        self.controls_applied.len()
    }

    /// State at the start of control interval `k` (time `k * h`).
    pub fn state_at_control_step(&self, k: usize) -> &[f64] {
        &self.states[k * self.level.inner_substeps as usize]
    }

    /// Final state.
    pub fn endpoint(&self) -> &[f64] {
        self.states.last().expect("paths are never empty")
    }
}

fn checked_steps(horizon: f64, level: DiscretizationLevel) -> Result<u64> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(CoreError::Configuration {
            detail: format!("horizon must be positive, got {horizon}"),
        });
    }
    let raw = horizon * level.steps_per_unit() as f64;
    let steps = raw.round();
    if (raw - steps).abs() > 1e-9 || steps < 1.0 {
        return Err(CoreError::Configuration {
            detail: format!(
                "horizon {horizon} is not a whole number of control intervals at level {}",
                level.m
            ),
        });
    }
    Ok(steps as u64)
}

/// Folds `x` into `[lo, hi]` through repeated boundary reflection.
fn fold(x: f64, lo: f64, hi: f64) -> f64 {
    let width = hi - lo;
    let period = 2.0 * width;
    let mut y = (x - lo) % period;
    if y < 0.0 {
        y += period;
    }
    if y > width {
        y = period - y;
    }
    lo + y
}

fn run(
    model: &SdeModel,
    control: &MarkovControl,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    rng: &mut ChaCha8Rng,
    reflect: Option<(&[f64], &[f64])>,
) -> Result<SamplePath> {
    let d = model.dim;
    if x0.len() != d {
        return Err(CoreError::DimensionMismatch {
            context: "initial state",
            expected: d,
            got: x0.len(),
        });
    }
    if !model.domain.contains(x0) {
        return Err(CoreError::Domain {
            detail: format!("initial state {x0:?} lies outside the model domain"),
        });
    }
    let steps = checked_steps(horizon, level)?;
    let inner = level.inner_substeps as usize;
    let dt = level.dt();
    let sqrt_dt = dt.sqrt();

    let total = steps as usize * inner;
    let mut times = Vec::with_capacity(total + 1);
    let mut states = Vec::with_capacity(total + 1);
    let mut controls_applied = Vec::with_capacity(steps as usize);

    let mut x = x0.to_vec();
    times.push(0.0);
    states.push(x.clone());

    let mut drift = vec![0.0; d];
    let mut sigma = vec![0.0; d * d];
    let mut noise = vec![0.0; d];

    for k in 0..steps {
        let a = control.at(&x);
        controls_applied.push(a.clone());
        for j in 0..inner {
            model.drift_into(&x, &a, &mut drift);
            model.diffusion_into(&x, &mut sigma);
            for z in noise.iter_mut() {
                *z = standard_normal(rng);
            }
            for i in 0..d {
                let diffusion_term: f64 = (0..d).map(|l| sigma[i * d + l] * noise[l]).sum();
                x[i] += drift[i] * dt + diffusion_term * sqrt_dt;
            }
            if let Some((lo, hi)) = reflect {
                for i in 0..d {
                    x[i] = fold(x[i], lo[i], hi[i]);
                }
            }
            let t = ((k as usize * inner + j + 1) as f64) * dt;
            if x.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_LIMIT) {
                return Err(CoreError::Divergence {
                    time: t,
                    detail: format!("state = {x:?}"),
                });
            }
            times.push(t);
            states.push(x.clone());
        }
    }

    Ok(SamplePath {
        times,
        states,
        controls_applied,
        level,
    })
}

/// Simulates the discretized process without boundary handling. The path may
/// leave a box domain; use [`simulate_reflected_path`] for reflecting models.
pub fn simulate_path(
    model: &SdeModel,
    control: &MarkovControl,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SamplePath> {
    run(model, control, level, x0, horizon, rng, None)
}

/// Simulates with coordinatewise folding into the model's box after every
/// inner Euler step. Requires a box domain.
pub fn simulate_reflected_path(
    model: &SdeModel,
    control: &MarkovControl,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SamplePath> {
    match &model.domain {
        Domain::Rect { lo, hi } => {
            let (lo, hi) = (lo.clone(), hi.clone());
            run(model, control, level, x0, horizon, rng, Some((&lo, &hi)))
        }
        Domain::Unbounded => Err(CoreError::Domain {
            detail: "reflected simulation needs a box domain".into(),
        }),
    }
}

/// Dispatches on the domain: box domains reflect, unbounded domains do not.
pub fn simulate(
    model: &SdeModel,
    control: &MarkovControl,
    level: DiscretizationLevel,
    x0: &[f64],
    horizon: f64,
    rng: &mut ChaCha8Rng,
) -> Result<SamplePath> {
    match &model.domain {
        Domain::Rect { .. } => simulate_reflected_path(model, control, level, x0, horizon, rng),
        Domain::Unbounded => simulate_path(model, control, level, x0, horizon, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sde::model::by_name;

    #[test]
    fn fold_reflects_into_interval() {
        assert_eq!(fold(0.3, 0.0, 1.0), 0.3);
        assert!((fold(1.2, 0.0, 1.0) - 0.8).abs() < 1e-15);
        assert!((fold(-0.2, 0.0, 1.0) - 0.2).abs() < 1e-15);
        // Two full periods plus a bit.
        assert!((fold(4.3, 0.0, 1.0) - 0.3).abs() < 1e-12);
        // Off-origin interval.
        assert!((fold(2.7, 1.0, 2.0) - 1.3).abs() < 1e-15);
    }

    #[test]
    fn path_shape_matches_level() {
        let model = by_name("ou", 1.0, None, None).unwrap();
        let control = MarkovControl::constant(vec![0.5]);
        let level = DiscretizationLevel::with_inner(2, 4).unwrap();
        let mut rng = stream(1, &[0]);
        let path = simulate_path(&model, &control, level, &[0.0], 3.0, &mut rng).unwrap();
        // 3 units * 4 intervals/unit = 12 control steps, 48 inner steps.
        assert_eq!(path.control_steps(), 12);
        assert_eq!(path.states.len(), 49);
        assert_eq!(path.times.len(), 49);
        assert!((path.times[48] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn control_is_frozen_per_interval_and_refreshed_between() {
        let model = by_name("ou", 1.0, None, None).unwrap();
        // A state-dependent control: u(x) = x rounded to the interval start.
        let control = MarkovControl::from_fn(1, "identity", |x| vec![x[0]]);
        let level = DiscretizationLevel::with_inner(1, 8).unwrap();
        let mut rng = stream(7, &[]);
        let path = simulate_path(&model, &control, level, &[0.4], 2.0, &mut rng).unwrap();
        for k in 0..path.control_steps() {
            let frozen = &path.controls_applied[k];
            let at_start = path.state_at_control_step(k);
            assert_eq!(frozen[0], at_start[0], "control must equal u(X_kh)");
        }
    }

    #[test]
    fn reflected_path_stays_inside_box() {
        let model = by_name("reflected-bm", 1.0, Some(0.0), Some(1.0)).unwrap();
        let control = MarkovControl::constant(vec![]);
        let level = DiscretizationLevel::new(2);
        let mut rng = stream(11, &[3]);
        let path =
            simulate_reflected_path(&model, &control, level, &[0.5], 50.0, &mut rng).unwrap();
        for s in &path.states {
            assert!((0.0..=1.0).contains(&s[0]), "escaped the box: {}", s[0]);
        }
    }

    #[test]
    fn same_stream_gives_identical_paths() {
        let model = by_name("ou", 1.0, None, None).unwrap();
        let control = MarkovControl::constant(vec![0.8]);
        let level = DiscretizationLevel::new(3);
        let a = simulate_path(&model, &control, level, &[0.1], 5.0, &mut stream(5, &[1, 2]))
            .unwrap();
        let b = simulate_path(&model, &control, level, &[0.1], 5.0, &mut stream(5, &[1, 2]))
            .unwrap();
        assert_eq!(a.states, b.states);
    }

    #[test]
    fn drift_blowup_is_reported_as_divergence() {
        let model = SdeModel::new(
            "explosive",
            1,
            |x, _, out| out[0] = x[0] * x[0] * x[0],
            |_, out| out[0] = 0.0,
            Domain::Unbounded,
            f64::INFINITY,
            false,
        )
        .unwrap();
        let control = MarkovControl::constant(vec![]);
        let level = DiscretizationLevel::new(0);
        let mut rng = stream(1, &[]);
        let err = simulate_path(&model, &control, level, &[4.0], 10.0, &mut rng);
        assert!(matches!(err, Err(CoreError::Divergence { .. })));
    }

    #[test]
    fn fractional_horizon_is_rejected() {
        let model = by_name("ou", 1.0, None, None).unwrap();
        let control = MarkovControl::constant(vec![0.0]);
        let level = DiscretizationLevel::new(1);
        let mut rng = stream(1, &[]);
        let err = simulate_path(&model, &control, level, &[0.0], 0.75, &mut rng);
        assert!(err.is_err());
    }
}
