//! Typed run configuration.
//!
//! Configs are TOML with four sections: `[model]` picks the process,
//! `[grid]`/`[reward]`/`[lyapunov]` describe the evaluation setup for
//! diffusion models, and `[run]` holds sweep parameters. Unknown keys are
//! rejected so a typo cannot silently fall back to a default.

use serde::Deserialize;

use longrun_core::dyadic::Dyadic;
use longrun_core::error::{CoreError, Result};
use longrun_core::family::ScalarChainFamily;
use longrun_core::kernel::TransitionKernel;
use longrun_core::reward::{RewardBound, RewardFunction};
use longrun_core::sde::{by_name, MarkovControl, SdeModel};
use longrun_core::space::StateSpace;
use longrun_core::weight::LyapunovWeight;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub reward: Option<RewardConfig>,
    #[serde(default)]
    pub lyapunov: Option<LyapunovConfig>,
    #[serde(default)]
    pub run: RunConfig,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "ou", "reflected-bm", "reflected-ou", "chain" or "ctmc".
    pub kind: String,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub lo: Option<f64>,
    #[serde(default)]
    pub hi: Option<f64>,
    /// Constant control vector for diffusion models.
    #[serde(default)]
    pub control: Option<Vec<f64>>,
    /// Chain and rate-matrix models: state labels, row-major entries.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub rows: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub rates: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub rewards: Option<Vec<f64>>,
    /// Discretization level of the `rows` substep kernel.
    #[serde(default)]
    pub level: Option<u32>,
    #[serde(default)]
    pub family: Option<FamilyConfig>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyConfig {
    pub direction: Vec<Vec<f64>>,
    pub theta_star: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    /// "quadratic", "coordinate" or "constant".
    pub kind: String,
    #[serde(default)]
    pub index: Option<usize>,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub sup_bound: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LyapunovConfig {
    /// "constant", "quadratic" or "explicit".
    pub kind: String,
    #[serde(default)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// "exact" or "mc"; diffusion models only ("exact" builds empirical
    /// chains on the grid, "mc" averages along paths).
    #[serde(default)]
    pub mode: Option<String>,
    #[serde(default)]
    pub levels: Option<Vec<u32>>,
    #[serde(default)]
    pub inner_substeps: Option<u32>,
    #[serde(default)]
    pub samples_per_state: Option<u64>,
    #[serde(default)]
    pub replicates: Option<u64>,
    #[serde(default)]
    pub outer_replicates: Option<u64>,
    #[serde(default)]
    pub horizon: Option<f64>,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub stability_n: Option<Vec<u64>>,
    #[serde(default)]
    pub equiv_steps: Option<u64>,
    #[serde(default)]
    pub gap_horizons: Option<u64>,
    #[serde(default)]
    pub x_star: Option<String>,
    #[serde(default)]
    pub bound_horizon: Option<u64>,
}

fn config_error(detail: String) -> CoreError {
    CoreError::Configuration { detail }
}

pub fn load(path: &std::path::Path) -> Result<Config> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| config_error(format!("cannot read {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Ou,
    ReflectedBm,
    ReflectedOu,
    Chain,
    Ctmc,
}

impl ModelKind {
    pub fn parse(kind: &str) -> Result<ModelKind> {
        match kind {
            "ou" => Ok(ModelKind::Ou),
            "reflected-bm" => Ok(ModelKind::ReflectedBm),
            "reflected-ou" => Ok(ModelKind::ReflectedOu),
            "chain" => Ok(ModelKind::Chain),
            "ctmc" => Ok(ModelKind::Ctmc),
            other => Err(config_error(format!(
                "unknown model kind {other:?}; expected ou, reflected-bm, reflected-ou, chain or ctmc"
            ))),
        }
    }

    pub fn is_diffusion(self) -> bool {
        matches!(
            self,
            ModelKind::Ou | ModelKind::ReflectedBm | ModelKind::ReflectedOu
        )
    }
}

impl ModelConfig {
    pub fn kind(&self) -> Result<ModelKind> {
        ModelKind::parse(&self.kind)
    }

    pub fn diffusion(&self) -> Result<(SdeModel, MarkovControl)> {
        let sigma = self.sigma.unwrap_or(1.0);
        let model = by_name(&self.kind, sigma, self.lo, self.hi)?;
        let control = MarkovControl::constant(self.control.clone().unwrap_or_default());
        Ok((model, control))
    }

    fn labels(&self) -> Result<Vec<String>> {
        self.labels
            .clone()
            .ok_or_else(|| config_error("chain models need model.labels".into()))
    }

    fn flatten_square(&self, rows: &[Vec<f64>], what: &str, n: usize) -> Result<Vec<f64>> {
        if rows.len() != n || rows.iter().any(|r| r.len() != n) {
            return Err(config_error(format!(
                "model.{what} must be a {n}x{n} matrix matching model.labels"
            )));
        }
        Ok(rows.iter().flatten().copied().collect())
    }

    pub fn chain_space(&self) -> Result<StateSpace> {
        StateSpace::from_labels(self.labels()?)
    }

    /// The substep kernel of a "chain" model, at its declared level.
    pub fn chain_kernel(&self) -> Result<(TransitionKernel, Vec<f64>, u32)> {
        let space = self.chain_space()?;
        let n = space.len();
        let rows = self
            .rows
            .as_ref()
            .ok_or_else(|| config_error("chain models need model.rows".into()))?;
        let flat = self.flatten_square(rows, "rows", n)?;
        let level = self.level.unwrap_or(0);
        let kernel = TransitionKernel::new(space, flat, Dyadic::level_step(level))?;
        let rewards = self.state_rewards(n)?;
        Ok((kernel, rewards, level))
    }

    /// The rate matrix of a "ctmc" model, row-major.
    pub fn rate_rows(&self) -> Result<(StateSpace, Vec<f64>, Vec<f64>)> {
        let space = self.chain_space()?;
        let n = space.len();
        let rates = self
            .rates
            .as_ref()
            .ok_or_else(|| config_error("ctmc models need model.rates".into()))?;
        let flat = self.flatten_square(rates, "rates", n)?;
        let rewards = self.state_rewards(n)?;
        Ok((space, flat, rewards))
    }

    pub fn state_rewards(&self, n: usize) -> Result<Vec<f64>> {
        let rewards = self
            .rewards
            .clone()
            .ok_or_else(|| config_error("finite-state models need model.rewards".into()))?;
        if rewards.len() != n {
            return Err(config_error(format!(
                "model.rewards has {} entries for {n} states",
                rewards.len()
            )));
        }
        Ok(rewards)
    }

    /// The stability family of a "chain" model with a `[model.family]`
    /// section.
    pub fn chain_family(&self) -> Result<(ScalarChainFamily, f64)> {
        let family = self
            .family
            .as_ref()
            .ok_or_else(|| config_error("stability sweeps need a [model.family] section".into()))?;
        let space = self.chain_space()?;
        let n = space.len();
        let rows = self
            .rows
            .as_ref()
            .ok_or_else(|| config_error("chain models need model.rows".into()))?;
        let base = self.flatten_square(rows, "rows", n)?;
        let direction = self.flatten_square(&family.direction, "family.direction", n)?;
        let rewards = self.state_rewards(n)?;
        let chain_family =
            ScalarChainFamily::new(space, base, direction, self.level.unwrap_or(0), rewards)?;
        Ok((chain_family, family.theta_star))
    }
}

impl Config {
    pub fn grid_space(&self) -> Result<StateSpace> {
        let grid = self
            .grid
            .as_ref()
            .ok_or_else(|| config_error("this run needs a [grid] section".into()))?;
        StateSpace::grid_1d(grid.lo, grid.hi, grid.points)
    }

    pub fn diffusion_reward(&self) -> Result<RewardFunction> {
        let reward = self
            .reward
            .as_ref()
            .ok_or_else(|| config_error("diffusion models need a [reward] section".into()))?;
        let base = match reward.kind.as_str() {
            "quadratic" => RewardFunction::quadratic(),
            "coordinate" => RewardFunction::coordinate(reward.index.unwrap_or(0)),
            "constant" => RewardFunction::constant(reward.value.ok_or_else(|| {
                config_error("constant rewards need reward.value".into())
            })?),
            other => {
                return Err(config_error(format!(
                    "unknown reward kind {other:?}; expected quadratic, coordinate or constant"
                )))
            }
        };
        Ok(match reward.sup_bound {
            Some(bound) => base.with_bound(RewardBound::Sup(bound)),
            None => base,
        })
    }

    pub fn weight_for(&self, space: &StateSpace) -> Result<LyapunovWeight> {
        match &self.lyapunov {
            None => Ok(LyapunovWeight::constant_one(space.clone())),
            Some(cfg) => match cfg.kind.as_str() {
                "constant" => Ok(LyapunovWeight::constant_one(space.clone())),
                "quadratic" => LyapunovWeight::from_embedding(space.clone(), |p| {
                    1.0 + p.iter().map(|x| x * x).sum::<f64>()
                }),
                "explicit" => {
                    let values = cfg.values.clone().ok_or_else(|| {
                        config_error("explicit weights need lyapunov.values".into())
                    })?;
                    LyapunovWeight::new(space.clone(), values)
                }
                other => Err(config_error(format!(
                    "unknown lyapunov kind {other:?}; expected constant, quadratic or explicit"
                ))),
            },
        }
    }

    pub fn levels(&self) -> Vec<u32> {
        self.run.levels.clone().unwrap_or_else(|| vec![0, 1, 2, 3])
    }

    pub fn x0_point(&self) -> Result<Vec<f64>> {
        self.run
            .x0
            .clone()
            .ok_or_else(|| config_error("path sampling needs run.x0".into()))
    }
}
