//! Output formats: field snapshots, the energy ledger, per-step solver
//! statistics and verification reports. Floats are written with 17
//! significant digits so files are byte-identical across identical runs.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{KwcError, Result};
use crate::grid::{Grid, ScalarField};
use crate::stepper::EnergyLedger;
use crate::verification::{ComparisonReport, DependenceReport, RefineAxis, RefinementTable};

fn f(v: f64) -> String {
    format!("{v:.16e}")
}

/// Snapshot text: a four-line header followed by one value per line in
/// row-major order (last axis fastest).
///
/// ```text
/// dim 2
/// cells 4 3
/// lengths 1.0000000000000000e0 1.0000000000000000e0
/// time 5.0000000000000000e-1
/// ```
pub fn format_snapshot(field: &ScalarField, time: f64) -> String {
    let g = field.grid();
    let mut s = String::new();
    writeln!(s, "dim {}", g.dim()).unwrap();
    let cells: Vec<String> = g.cells().iter().map(|c| c.to_string()).collect();
    writeln!(s, "cells {}", cells.join(" ")).unwrap();
    let lengths: Vec<String> = g.lengths().iter().map(|l| f(*l)).collect();
    writeln!(s, "lengths {}", lengths.join(" ")).unwrap();
    writeln!(s, "time {}", f(time)).unwrap();
    for v in field.values() {
        writeln!(s, "{}", f(*v)).unwrap();
    }
    s
}

fn header<'a>(
    lines: &mut impl Iterator<Item = (usize, &'a str)>,
    key: &str,
) -> Result<(usize, Vec<&'a str>)> {
    let (n, line) = lines.next().ok_or_else(|| KwcError::Parse {
        line: 0,
        message: format!("missing `{key}` header"),
    })?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(KwcError::Parse {
            line: n,
            message: format!("expected `{key}` header"),
        });
    }
    Ok((n, parts.collect()))
}

fn num<T: std::str::FromStr>(s: &str, line: usize) -> Result<T> {
    s.parse().map_err(|_| KwcError::Parse {
        line,
        message: format!("cannot parse `{s}`"),
    })
}

pub fn parse_snapshot(text: &str) -> Result<(ScalarField, f64)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let (n, d) = header(&mut lines, "dim")?;
    let dim: usize = num(d.first().copied().unwrap_or(""), n)?;
    let (n, c) = header(&mut lines, "cells")?;
    let cells = c
        .iter()
        .map(|s| num(s, n))
        .collect::<Result<Vec<usize>>>()?;
    let (n, l) = header(&mut lines, "lengths")?;
    let lengths = l.iter().map(|s| num(s, n)).collect::<Result<Vec<f64>>>()?;
    let (n, t) = header(&mut lines, "time")?;
    let time: f64 = num(t.first().copied().unwrap_or(""), n)?;
    let grid = Grid::new(dim, &cells, &lengths)?;
    let values = lines
        .map(|(n, l)| num(l, n))
        .collect::<Result<Vec<f64>>>()?;
    Ok((ScalarField::from_values(&grid, values)?, time))
}

pub fn write_snapshot(path: &Path, field: &ScalarField, time: f64) -> Result<()> {
    Ok(fs::write(path, format_snapshot(field, time))?)
}

pub fn read_snapshot(path: &Path) -> Result<(ScalarField, f64)> {
    parse_snapshot(&fs::read_to_string(path)?)
}

pub const LEDGER_HEADER: &str = "time,F_eps,d_eta_H,d_eta_grad,d_theta_H,d_theta_grad,forcing_u,forcing_v,slack,theta_iters,eta_fp_iters,eta_newton_iters";

/// One row per time step, preceded by the initial energy at `t = 0`
/// (dissipation and iteration columns zero).
pub fn format_ledger(ledger: &EnergyLedger) -> String {
    let mut s = String::from(LEDGER_HEADER);
    s.push('\n');
    let z = f(0.0);
    writeln!(
        s,
        "{z},{},{z},{z},{z},{z},{z},{z},{z},0,0,0",
        f(ledger.initial_f_eps)
    )
    .unwrap();
    for r in &ledger.rows {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            f(r.time),
            f(r.f_eps),
            f(r.d_eta_h),
            f(r.d_eta_grad),
            f(r.d_theta_h),
            f(r.d_theta_grad),
            f(r.forcing_u),
            f(r.forcing_v),
            f(r.slack),
            r.theta_report.iterations,
            r.eta_report.fixed_point_iterations,
            r.eta_report.newton.iterations
        )
        .unwrap();
    }
    s
}

pub const SOLVER_HEADER: &str = "step,stage,iterations,residual,backtracks,fallback";

/// Per-step solver statistics, two rows (θ then η) per step.
pub fn format_solver_stats(ledger: &EnergyLedger) -> String {
    let mut s = String::from(SOLVER_HEADER);
    s.push('\n');
    for r in &ledger.rows {
        let t = &r.theta_report;
        writeln!(
            s,
            "{},theta,{},{},{},{}",
            r.step,
            t.iterations,
            f(t.final_residual_norm),
            t.line_search_backtracks,
            t.used_fallback
        )
        .unwrap();
        let e = &r.eta_report.newton;
        writeln!(
            s,
            "{},eta,{},{},{},{}",
            r.step,
            e.iterations,
            f(e.final_residual_norm),
            e.line_search_backtracks,
            e.used_fallback
        )
        .unwrap();
    }
    s
}

pub fn format_dependence(report: &DependenceReport) -> String {
    let mut s = String::from("time,J\n");
    for (t, j) in report.times.iter().zip(&report.j_values) {
        writeln!(s, "{},{}", f(*t), f(*j)).unwrap();
    }
    s
}

pub fn format_comparison(report: &ComparisonReport) -> String {
    let mut s = String::from("time,excess_V2,bound\n");
    let bound = if report.ordered {
        0.0
    } else {
        report.c9 * report.initial_excess
    };
    for (t, e) in report.times.iter().zip(&report.excess) {
        writeln!(s, "{},{},{}", f(*t), f(*e), f(bound)).unwrap();
    }
    s
}

pub fn format_refinement(table: &RefinementTable) -> String {
    let name = match table.axis {
        Some(RefineAxis::Eps) => "eps",
        _ => "tau",
    };
    let mut s = format!("{name},F_eps_T,eta_diff,theta_diff,energy_diff,eta_order,theta_order\n");
    let opt = |v: Option<&f64>| v.map_or(String::new(), |x| f(*x));
    for (k, (lvl, e)) in table
        .levels
        .iter()
        .zip(&table.terminal_energies)
        .enumerate()
    {
        // differences are attached to the finer level of each pair
        let d = k.checked_sub(1);
        let o = k.checked_sub(2);
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            f(*lvl),
            f(*e),
            opt(d.and_then(|i| table.eta_diffs.get(i))),
            opt(d.and_then(|i| table.theta_diffs.get(i))),
            opt(d.and_then(|i| table.energy_diffs.get(i))),
            opt(o.and_then(|i| table.eta_orders.get(i))),
            opt(o.and_then(|i| table.theta_orders.get(i)))
        )
        .unwrap();
    }
    s
}
