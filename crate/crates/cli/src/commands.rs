//! Command implementations. Each writes CSVs into the run directory and
//! prints a short deterministic summary on stdout.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use longrun_core::audit::{audit, kernel_convergence_gap, verify_geometric_bound, KernelFamily};
use longrun_core::avg::{
    avg_convergence_sweep_empirical, avg_convergence_sweep_exact_chain, avg_convergence_sweep_mc,
    avg_stability_exact_chain, avg_stability_mc, average_reward_exact_chain, SweepPoint,
};
use longrun_core::csv_io::{fmt_f64, write_measure_csv};
use longrun_core::error::{CoreError, Result};
use longrun_core::kernel::TransitionKernel;
use longrun_core::risk::{
    risk_convergence_sweep_exact, risk_convergence_sweep_mc, risk_stability_exact_chain,
    RiskParams,
};
use longrun_core::rng::derive_seed;
use longrun_core::sde::{
    empirical_unit_kernel, DiscretizationLevel, MarkovControl, DEFAULT_INNER_SUBSTEPS,
};
use longrun_core::space::StateSpace;

use crate::config::{Config, ModelKind};
use crate::output;

fn config_error(detail: String) -> CoreError {
    CoreError::Configuration { detail }
}

struct RunDefaults {
    inner_substeps: u32,
    samples_per_state: u64,
    replicates: u64,
    outer_replicates: u64,
    horizon: f64,
    equiv_steps: u64,
    gap_horizons: u64,
    bound_horizon: u64,
}

fn defaults(cfg: &Config) -> RunDefaults {
    RunDefaults {
        inner_substeps: cfg.run.inner_substeps.unwrap_or(DEFAULT_INNER_SUBSTEPS),
        samples_per_state: cfg.run.samples_per_state.unwrap_or(4000),
        replicates: cfg.run.replicates.unwrap_or(64),
        outer_replicates: cfg.run.outer_replicates.unwrap_or(8),
        horizon: cfg.run.horizon.unwrap_or(100.0),
        equiv_steps: cfg.run.equiv_steps.unwrap_or(1),
        gap_horizons: cfg.run.gap_horizons.unwrap_or(8),
        bound_horizon: cfg.run.bound_horizon.unwrap_or(20),
    }
}

fn resolve_x_star(cfg: &Config, space: &StateSpace) -> Result<usize> {
    match &cfg.run.x_star {
        None => Ok(0),
        Some(label) => space
            .index_of(label)
            .ok_or_else(|| config_error(format!("run.x_star {label:?} is not a state label"))),
    }
}

/// The substep kernels of a finite-state model, one per requested level.
fn chain_levels(cfg: &Config) -> Result<(BTreeMap<u32, TransitionKernel>, Vec<f64>)> {
    match cfg.model.kind()? {
        ModelKind::Chain => {
            let (substep, rewards, level) = cfg.model.chain_kernel()?;
            Ok((BTreeMap::from([(level, substep)]), rewards))
        }
        ModelKind::Ctmc => {
            let (space, q_rows, rewards) = cfg.model.rate_rows()?;
            let mut levels = BTreeMap::new();
            for &m in &cfg.levels() {
                levels.insert(
                    m,
                    TransitionKernel::from_rate_matrix(space.clone(), &q_rows, m)?,
                );
            }
            Ok((levels, rewards))
        }
        _ => Err(config_error(
            "this code path only handles finite-state models".into(),
        )),
    }
}

fn build_family(cfg: &Config, seed: u64, d: &RunDefaults) -> Result<KernelFamily> {
    match cfg.model.kind()? {
        ModelKind::Ctmc => {
            let (space, q_rows, _) = cfg.model.rate_rows()?;
            KernelFamily::from_rate_matrix(space, &q_rows, &cfg.levels())
        }
        ModelKind::Chain => {
            let (substep, _, level) = cfg.model.chain_kernel()?;
            let unit = substep.pow(1u64 << level)?;
            KernelFamily::new(BTreeMap::from([(level, unit)]))
        }
        kind if kind.is_diffusion() => {
            let (model, control) = cfg.model.diffusion()?;
            let grid = cfg.grid_space()?;
            let mut kernels = BTreeMap::new();
            for &m in &cfg.levels() {
                let level = DiscretizationLevel::with_inner(m, d.inner_substeps)?;
                let kernel = empirical_unit_kernel(
                    &model,
                    &control,
                    &grid,
                    level,
                    d.samples_per_state,
                    derive_seed(seed, &[m as u64]),
                )?;
                kernels.insert(m, kernel);
            }
            KernelFamily::new(kernels)
        }
        _ => unreachable!(),
    }
}

pub fn run_audit(cfg: &Config, seed: u64, out: &Path) -> Result<()> {
    let d = defaults(cfg);
    let family = build_family(cfg, seed, &d)?;
    let weight = cfg.weight_for(family.space())?;

    let cert = audit(&family, &weight, d.equiv_steps)?;
    output::write_certificate(&out.join("certificate.csv"), &cert)?;
    output::write_drift_profile(
        &out.join("drift_profile.csv"),
        family.space(),
        &cert.drift_profile,
    )?;
    println!(
        "audit: delta={} rho={} equiv_ratio={} drift_bound={} pass={}",
        fmt_f64(cert.delta),
        fmt_f64(cert.rho),
        fmt_f64(cert.equiv_ratio),
        fmt_f64(cert.drift_bound),
        cert.passed()
    );
    if let Some(witness) = &cert.equiv_violation {
        println!(
            "audit: equivalence violated at level {} from states {}/{} to {}",
            witness.level_m, witness.from, witness.from_other, witness.target
        );
    }

    if family.len() >= 2 || family.limit().is_some() {
        let gaps = kernel_convergence_gap(&family, &weight, d.gap_horizons)?;
        output::write_convergence_gaps(&out.join("convergence_gaps.csv"), family.space(), &gaps)?;
        println!(
            "audit: convergence gaps across {} rows, monotonicity violations {}",
            gaps.rows.len(),
            gaps.monotonicity_violations
        );
    }

    if cert.rho < 1.0 {
        let deepest = family
            .levels()
            .max()
            .and_then(|m| family.kernel(m))
            .expect("family is never empty");
        let x_star = resolve_x_star(cfg, family.space())?;
        let bound = verify_geometric_bound(deepest, &weight, x_star, d.bound_horizon)?;
        output::write_geometric_bound(&out.join("geometric_bound.csv"), &bound)?;
        println!("audit: geometric bound holds={}", bound.all_hold);
    }
    Ok(())
}

fn approach_controls(base: &[f64], n_list: &[u64]) -> Vec<(u64, MarkovControl)> {
    n_list
        .iter()
        .map(|&n| {
            let scale = 1.0 - 1.0 / n as f64;
            let a: Vec<f64> = base.iter().map(|c| c * scale).collect();
            (n, MarkovControl::constant(a))
        })
        .collect()
}

pub fn run_avg(cfg: &Config, seed: u64, out: &Path) -> Result<()> {
    let d = defaults(cfg);
    let kind = cfg.model.kind()?;
    let path = out.join("avg.csv");

    if let Some(n_list) = cfg.run.stability_n.clone() {
        let report = match kind {
            ModelKind::Chain => {
                let (family, theta_star) = cfg.model.chain_family()?;
                avg_stability_exact_chain(&family, theta_star, &n_list)?
            }
            k if k.is_diffusion() => {
                let (model, base_control) = cfg.model.diffusion()?;
                let reward = cfg.diffusion_reward()?;
                let m = cfg.levels().first().copied().unwrap_or(0);
                let level = DiscretizationLevel::with_inner(m, d.inner_substeps)?;
                let base = cfg.model.control.clone().unwrap_or_default();
                let controls = approach_controls(&base, &n_list);
                avg_stability_mc(
                    &model,
                    &reward,
                    level,
                    &cfg.x0_point()?,
                    d.horizon,
                    d.replicates,
                    seed,
                    &controls,
                    &base_control,
                )?
            }
            _ => {
                return Err(config_error(
                    "stability sweeps need a chain family or a diffusion model".into(),
                ))
            }
        };
        output::write_avg_stability(&path, &report, seed)?;
        println!(
            "avg stability: limit={} final_gap={}",
            fmt_f64(report.limit_value),
            fmt_f64(report.final_gap)
        );
        return Ok(());
    }

    let (points, method) = match kind {
        ModelKind::Chain | ModelKind::Ctmc => {
            let (levels, rewards) = chain_levels(cfg)?;
            let points = avg_convergence_sweep_exact_chain(&levels, &rewards)?;
            let (&deepest_m, deepest) = levels.iter().next_back().expect("at least one level");
            let exact = average_reward_exact_chain(deepest, &rewards, deepest_m)?;
            let mut w = BufWriter::new(File::create(out.join("measure.csv"))?);
            write_measure_csv(&mut w, &exact.measure)?;
            (points, "exact")
        }
        k if k.is_diffusion() => {
            let (model, control) = cfg.model.diffusion()?;
            let reward = cfg.diffusion_reward()?;
            let m_list = cfg.levels();
            match cfg.run.mode.as_deref().unwrap_or("exact") {
                "exact" => {
                    let grid = cfg.grid_space()?;
                    let points = avg_convergence_sweep_empirical(
                        &model,
                        &control,
                        &reward,
                        &grid,
                        &m_list,
                        d.inner_substeps,
                        d.samples_per_state,
                        d.outer_replicates,
                        seed,
                    )?;
                    (points, "empirical")
                }
                "mc" => {
                    let points = avg_convergence_sweep_mc(
                        &model,
                        &control,
                        &reward,
                        &m_list,
                        d.inner_substeps,
                        &cfg.x0_point()?,
                        d.horizon,
                        d.replicates,
                        seed,
                    )?;
                    (points, "mc")
                }
                other => {
                    return Err(config_error(format!(
                        "unknown run mode {other:?}; expected exact or mc"
                    )))
                }
            }
        }
        _ => unreachable!(),
    };
    output::write_avg_sweep(&path, &points, method, seed)?;
    report_sweep(&points, method);
    Ok(())
}

fn report_sweep(points: &[SweepPoint], method: &str) {
    if let Some(last) = points.last() {
        match last.std_error {
            Some(se) => println!(
                "avg ({method}): value={} std_error={} at level {}",
                fmt_f64(last.value),
                fmt_f64(se),
                last.level_m
            ),
            None => println!(
                "avg ({method}): value={} at level {}",
                fmt_f64(last.value),
                last.level_m
            ),
        }
    }
}

pub fn run_risk(cfg: &Config, seed: u64, out: &Path, params: &RiskParams) -> Result<()> {
    let d = defaults(cfg);
    let kind = cfg.model.kind()?;
    let path = out.join("risk.csv");

    if let Some(n_list) = cfg.run.stability_n.clone() {
        if kind != ModelKind::Chain {
            return Err(config_error(
                "risk stability sweeps need a chain model with a family section".into(),
            ));
        }
        let (family, theta_star) = cfg.model.chain_family()?;
        let report = risk_stability_exact_chain(&family, theta_star, &n_list, params)?;
        output::write_risk_stability(&path, &report, seed)?;
        println!(
            "risk stability: limit_lambda={} final_gap={}",
            fmt_f64(report.limit.lambda),
            fmt_f64(report.final_gap)
        );
        return Ok(());
    }

    let rows = match kind {
        ModelKind::Chain | ModelKind::Ctmc => {
            let (levels, rewards) = chain_levels(cfg)?;
            risk_convergence_sweep_exact(&levels, &rewards, params)?
        }
        k if k.is_diffusion() => {
            let (model, control) = cfg.model.diffusion()?;
            let reward = cfg.diffusion_reward()?;
            let grid = cfg.grid_space()?;
            risk_convergence_sweep_mc(
                &model,
                &control,
                &reward,
                &grid,
                &cfg.levels(),
                d.inner_substeps,
                d.samples_per_state,
                seed,
                params,
            )?
        }
        _ => unreachable!(),
    };
    output::write_risk_sweep(&path, &rows, seed)?;
    if let Some(last) = rows.last() {
        println!(
            "risk: lambda={} oracle_gap={} at sweep_var {}",
            fmt_f64(last.lambda),
            fmt_f64(last.oracle_gap),
            last.sweep_var
        );
    }
    Ok(())
}
