//! CSV writers for the run directory. Floats are written with
//! [`fmt_f64`] so files round-trip bit-exactly and identical runs produce
//! identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use longrun_core::audit::{ConvergenceGaps, ErgodicityCertificate, GeometricBoundReport};
use longrun_core::avg::{StabilityReport, SweepPoint};
use longrun_core::csv_io::{csv_field, fmt_f64};
use longrun_core::error::Result;
use longrun_core::risk::{RiskStabilityReport, RiskSweepRow};
use longrun_core::space::StateSpace;

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn opt_f64(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

pub fn write_avg_sweep(path: &Path, points: &[SweepPoint], method: &str, seed: u64) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "sweep_var,value,std_error,method,seed")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{seed}",
            p.level_m,
            fmt_f64(p.value),
            opt_f64(p.std_error),
            csv_field(method),
        )?;
    }
    Ok(())
}

pub fn write_avg_stability(path: &Path, report: &StabilityReport, seed: u64) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "sweep_var,value,std_error,method,seed")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},stability,{seed}",
            row.n,
            fmt_f64(row.value),
            opt_f64(row.std_error),
        )?;
    }
    writeln!(
        w,
        "limit,{},{},stability,{seed}",
        fmt_f64(report.limit_value),
        opt_f64(report.limit_std_error),
    )?;
    Ok(())
}

fn write_risk_row<W: Write>(w: &mut W, label: &str, row: &RiskSweepRow, seed: u64) -> Result<()> {
    writeln!(
        w,
        "{label},{},{},{},{},{},{},{seed}",
        fmt_f64(row.lambda),
        fmt_f64(row.span_w),
        row.iterations,
        fmt_f64(row.residual),
        fmt_f64(row.oracle_lambda),
        fmt_f64(row.oracle_gap),
    )?;
    Ok(())
}

const RISK_HEADER: &str = "sweep_var,lambda,span_w,iterations,residual,oracle_lambda,oracle_gap,seed";

pub fn write_risk_sweep(path: &Path, rows: &[RiskSweepRow], seed: u64) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{RISK_HEADER}")?;
    for row in rows {
        write_risk_row(&mut w, &row.sweep_var.to_string(), row, seed)?;
    }
    Ok(())
}

pub fn write_risk_stability(path: &Path, report: &RiskStabilityReport, seed: u64) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{RISK_HEADER}")?;
    for row in &report.rows {
        write_risk_row(&mut w, &row.sweep_var.to_string(), row, seed)?;
    }
    write_risk_row(&mut w, "limit", &report.limit, seed)
}

fn bool_field(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

pub fn write_certificate(path: &Path, cert: &ErgodicityCertificate) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "name,value,threshold,pass")?;
    writeln!(
        w,
        "dobrushin_delta,{},1,{}",
        fmt_f64(cert.delta),
        bool_field(cert.uniform_contraction)
    )?;
    writeln!(
        w,
        "weighted_rho,{},1,{}",
        fmt_f64(cert.rho),
        bool_field(cert.weighted_contraction)
    )?;
    writeln!(
        w,
        "equivalence_ratio_{}step,{},inf,{}",
        cert.equiv_steps,
        fmt_f64(cert.equiv_ratio),
        bool_field(cert.equivalence_bounded)
    )?;
    writeln!(
        w,
        "drift_bound,{},inf,{}",
        fmt_f64(cert.drift_bound),
        bool_field(cert.drift_bounded)
    )?;
    Ok(())
}

pub fn write_drift_profile(
    path: &Path,
    space: &StateSpace,
    profile: &[f64],
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "state,drift_ratio")?;
    for (i, ratio) in profile.iter().enumerate() {
        writeln!(w, "{},{}", csv_field(space.label(i)), fmt_f64(*ratio))?;
    }
    Ok(())
}

pub fn write_convergence_gaps(
    path: &Path,
    space: &StateSpace,
    gaps: &ConvergenceGaps,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "level_m,horizon,state,gap,reference")?;
    let reference = match gaps.proxy_level {
        Some(m) => format!("proxy:{m}"),
        None => "designated".to_string(),
    };
    for row in &gaps.rows {
        writeln!(
            w,
            "{},{},{},{},{reference}",
            row.level_m,
            row.horizon,
            csv_field(space.label(row.state)),
            fmt_f64(row.gap),
        )?;
    }
    Ok(())
}

pub fn write_geometric_bound(path: &Path, report: &GeometricBoundReport) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "n,max_lhs,rhs,holds")?;
    for row in &report.rows {
        writeln!(
            w,
            "{},{},{},{}",
            row.n,
            fmt_f64(row.max_lhs),
            fmt_f64(row.rhs),
            bool_field(row.holds)
        )?;
    }
    Ok(())
}
