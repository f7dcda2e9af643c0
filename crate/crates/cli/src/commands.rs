use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use kwc::config::{parse_config, Lcg64, Resolved, RunConfig};
use kwc::grid::norm_v;
use kwc::io::{
    format_comparison, format_dependence, format_ledger, format_refinement, format_solver_stats,
    write_snapshot,
};
use kwc::solvers::{oracle_minimize_dense, solve_eta_step, solve_theta_step, Upsilon, UpsilonStar};
use kwc::stepper::{check_energy_inequality, max_stable_tau};
use kwc::verification::{
    comparison_experiment, continuous_dependence_experiment, linfty_confinement_check,
    refinement_study, Problem, RefineAxis, LINFTY_TOL,
};
use kwc::{default_model, Grid, KwcError, Run, ScalarField, SchemeParams};
use rayon::prelude::*;

use crate::{Experiment, EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, OUTPUT_ROOT_ENV};

fn verdict(pass: bool, what: &str) -> u8 {
    println!("{} {what}", if pass { "PASS" } else { "FAIL" });
    if pass {
        EXIT_PASS
    } else {
        EXIT_FAIL
    }
}

fn load(path: &Path) -> Result<(RunConfig, Resolved), u8> {
    let cfg = parse_config(path).map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_CONFIG
    })?;
    let resolved = cfg.resolve().map_err(|e| {
        eprintln!("{}: {e}", path.display());
        EXIT_CONFIG
    })?;
    Ok((cfg, resolved))
}

/// `output.dir`, re-rooted under `$KWC_OUTPUT_ROOT` when that is set.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) => {
            let rel: PathBuf = cfg
                .output
                .dir
                .components()
                .filter(|c| matches!(c, std::path::Component::Normal(_)))
                .collect();
            PathBuf::from(root).join(rel)
        }
        None => cfg.output.dir.clone(),
    }
}

fn io_fail(dir: &Path, e: impl std::fmt::Display) -> u8 {
    eprintln!("cannot write to {}: {e}", dir.display());
    EXIT_FAIL
}

fn write_run(dir: &Path, cfg: &RunConfig, resolved: &Resolved, run: &Run) -> Result<(), KwcError> {
    fs::create_dir_all(dir)?;
    let mut effective = cfg.clone();
    effective.set_tau(kwc::config::Auto::Value(resolved.problem.params.tau));
    effective.truncation = kwc::config::Auto::Value(resolved.problem.fns.m());
    fs::write(dir.join("config.cfg"), effective.serialize())?;
    if cfg.output.ledger {
        fs::write(dir.join("ledger.csv"), format_ledger(&run.ledger))?;
        fs::write(dir.join("solver.csv"), format_solver_stats(&run.ledger))?;
    }
    let cadence = cfg.output.cadence;
    if cadence > 0 {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        let last = run.trajectory.len() - 1;
        for s in &run.trajectory.states {
            if s.step_index % cadence == 0 || s.step_index == last {
                write_snapshot(
                    &snaps.join(format!("eta_{:06}.txt", s.step_index)),
                    &s.eta,
                    s.time,
                )?;
                write_snapshot(
                    &snaps.join(format!("theta_{:06}.txt", s.step_index)),
                    &s.theta,
                    s.time,
                )?;
            }
        }
    }
    Ok(())
}

/// March and write outputs; returns the run and whether the energy check passed.
fn run_and_write(dir: &Path, cfg: &RunConfig, resolved: &Resolved) -> (Option<Run>, u8) {
    let p = &resolved.problem;
    let outcome = kwc::run(&p.eta0, &p.theta0, &p.forcing(), &p.fns, &p.params);
    let (run, error) = match outcome {
        Ok(run) => (run, None),
        Err(f) => (f.partial, Some(f.error)),
    };
    if let Err(e) = write_run(dir, cfg, resolved, &run) {
        return (None, io_fail(dir, e));
    }
    if let Some(e) = error {
        eprintln!("{e}");
        println!(
            "FAIL run stopped after {} of {} steps",
            run.ledger.rows.len(),
            p.forcing().steps()
        );
        return (Some(run), EXIT_FAIL);
    }
    (Some(run), EXIT_PASS)
}

pub fn cmd_run(config: &Path) -> u8 {
    let (cfg, resolved) = match load(config) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let dir = output_dir(&cfg);
    let (run, code) = run_and_write(&dir, &cfg, &resolved);
    let Some(run) = run.filter(|_| code == EXIT_PASS) else {
        return code;
    };
    let p = &resolved.problem.params;
    println!(
        "{} steps, tau = {}, M = {}, F_eps {:.10e} -> {:.10e}; output in {}",
        run.ledger.rows.len(),
        p.tau,
        resolved.problem.fns.m(),
        run.ledger.initial_f_eps,
        run.ledger
            .rows
            .last()
            .map_or(run.ledger.initial_f_eps, |r| r.f_eps),
        dir.display()
    );
    match check_energy_inequality(&run.ledger) {
        Ok(c) => verdict(
            c.passed,
            &format!(
                "energy inequality: worst slack {:.3e} at step {}",
                c.worst_slack, c.worst_step
            ),
        ),
        Err(_) => verdict(true, "energy inequality: no steps"),
    }
}

fn solver_error(e: KwcError) -> u8 {
    eprintln!("{e}");
    match e {
        KwcError::Config(_) | KwcError::Validation(_) | KwcError::Parse { .. } => EXIT_CONFIG,
        _ => EXIT_FAIL,
    }
}

pub fn cmd_verify(config: &Path, experiment: Experiment, levels: usize) -> u8 {
    let (cfg, resolved) = match load(config) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let name = match experiment {
        Experiment::Energy => "energy",
        Experiment::Dependence => "dependence",
        Experiment::Comparison => "comparison",
        Experiment::Linfty => "linfty",
        Experiment::RefineTau => "refine-tau",
        Experiment::RefineEps => "refine-eps",
    };
    let dir = output_dir(&cfg).join(format!("verify-{name}"));
    if let Err(e) = fs::create_dir_all(&dir) {
        return io_fail(&dir, e);
    }
    let result = match experiment {
        Experiment::Energy | Experiment::Linfty => {
            let (run, code) = run_and_write(&dir, &cfg, &resolved);
            match run.filter(|_| code == EXIT_PASS) {
                None => return code,
                Some(run) if experiment == Experiment::Energy => {
                    check_energy_inequality(&run.ledger).map(|c| {
                        verdict(
                            c.passed,
                            &format!(
                                "energy: worst slack {:.3e} at step {} (tolerance -{:.3e})",
                                c.worst_slack, c.worst_step, c.tolerance
                            ),
                        )
                    })
                }
                Some(run) => {
                    let m = resolved.problem.fns.m();
                    let over = linfty_confinement_check(&run.trajectory, m);
                    Ok(verdict(
                        over <= LINFTY_TOL,
                        &format!("linfty: max(|eta| - M) = {over:.3e} with M = {m}"),
                    ))
                }
            }
        }
        Experiment::Dependence => verify_dependence(&dir, &resolved.problem),
        Experiment::Comparison => verify_comparison(&dir, &resolved.problem),
        Experiment::RefineTau | Experiment::RefineEps => {
            let axis = if experiment == Experiment::RefineTau {
                RefineAxis::Tau
            } else {
                RefineAxis::Eps
            };
            refinement_study(&resolved.problem, axis, levels).and_then(|t| {
                fs::write(dir.join("refinement.csv"), format_refinement(&t))?;
                let pass = match axis {
                    RefineAxis::Tau => {
                        !t.eta_orders.is_empty()
                            && t.eta_orders
                                .iter()
                                .chain(&t.theta_orders)
                                .all(|&o| o >= 0.7)
                    }
                    RefineAxis::Eps => {
                        t.energy_diffs.len() >= 2 && t.energy_diffs.windows(2).all(|w| w[1] < w[0])
                    }
                };
                Ok(verdict(
                    pass,
                    &format!(
                        "{name}: levels {}, eta orders {}, theta orders {}, energy differences {}",
                        list(&t.levels),
                        list(&t.eta_orders),
                        list(&t.theta_orders),
                        list(&t.energy_diffs)
                    ),
                ))
            })
        }
    };
    result.unwrap_or_else(solver_error)
}

fn list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", items.join(", "))
}

fn clamp_field(z: &ScalarField, m: f64) -> ScalarField {
    z.map(|x| x.clamp(-m, m))
}

fn verify_dependence(dir: &Path, base: &Problem) -> Result<u8, KwcError> {
    let same = continuous_dependence_experiment(base, &base.clone())?;
    let j_zero = same.j_values.iter().all(|&j| j == 0.0);
    let grid = *base.eta0.grid();
    let m = base.fns.m();
    let phi = ScalarField::from_fn(&grid, |x| 0.5 * (2.0 * PI * x[0]).cos());
    let mut ratios = Vec::new();
    for delta in [1e-2, 1e-3, 1e-4] {
        let mut pert = base.clone();
        pert.eta0.axpy(delta, &phi);
        pert.eta0 = clamp_field(&pert.eta0, m);
        let r = continuous_dependence_experiment(base, &pert)?;
        fs::write(
            dir.join(format!("dependence_{delta:e}.csv")),
            format_dependence(&r),
        )?;
        println!(
            "delta = {delta:e}: max J = {:.6e}, ratio = {:.6e}",
            r.j_values.iter().cloned().fold(0.0, f64::max),
            r.empirical_ratio
        );
        ratios.push(r.empirical_ratio);
    }
    let hi = ratios.iter().cloned().fold(0.0, f64::max);
    let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
    let finite = ratios.iter().all(|r| r.is_finite() && *r > 0.0);
    Ok(verdict(
        j_zero && finite && hi / lo < 10.0,
        &format!(
            "dependence: J == 0 for identical inputs: {j_zero}; ratio spread {:.3}",
            hi / lo
        ),
    ))
}

fn verify_comparison(dir: &Path, base: &Problem) -> Result<u8, KwcError> {
    let reference = base.run()?.trajectory;
    let forcing = base.forcing();
    let m = base.fns.m();
    let grid = *base.eta0.grid();
    let low = clamp_field(&base.eta0.map(|x| x - 0.2), m);
    let bump = ScalarField::from_fn(&grid, |x| 0.2 * (6.0 * PI * x[0]).sin());
    let crossing = clamp_field(&base.eta0.add(&bump), m);
    let ordered = comparison_experiment(
        &low,
        &base.eta0,
        &reference,
        &forcing,
        &base.fns,
        &base.params,
    )?;
    let crossed = comparison_experiment(
        &crossing,
        &base.eta0,
        &reference,
        &forcing,
        &base.fns,
        &base.params,
    )?;
    fs::write(
        dir.join("comparison_ordered.csv"),
        format_comparison(&ordered),
    )?;
    fs::write(
        dir.join("comparison_crossing.csv"),
        format_comparison(&crossed),
    )?;
    let worst_ordered = ordered.excess.iter().map(|e| e.sqrt()).fold(0.0, f64::max);
    Ok(verdict(
        ordered.passed && crossed.passed,
        &format!(
            "comparison: ordered max |[eta1 - eta2]+|_V = {worst_ordered:.3e}; crossing margin {:.3e} (C9 = {:.4e})",
            crossed.worst_margin, crossed.c9
        ),
    ))
}

fn sweep_dir_name(axis: &str, value: &str) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| {
                if c.is_ascii_alphanumeric() || c == '.' || c == '-' {
                    c
                } else {
                    '_'
                }
            })
            .collect::<String>()
    };
    format!("{}={}", clean(axis), clean(value))
}

pub fn cmd_sweep(config: &Path, axis: &str, values: &[String], jobs: usize) -> u8 {
    let (cfg, _) = match load(config) {
        Ok(x) => x,
        Err(code) => return code,
    };
    let mut points = Vec::new();
    for v in values {
        let point = cfg.with_override(axis, v.trim()).and_then(|c| {
            let r = c.resolve()?;
            Ok((c, r))
        });
        match point {
            Ok((c, r)) => points.push((v.trim().to_string(), c, r)),
            Err(e) => {
                eprintln!("{axis} = {v}: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    let root = output_dir(&cfg);
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_FAIL;
        }
    };
    let results: Vec<(u8, String)> = pool.install(|| {
        points
            .par_iter()
            .map(|(v, c, r)| {
                let dir = root.join(sweep_dir_name(axis, v));
                let (run, code) = run_and_write(&dir, c, r);
                let row = match (&run, code) {
                    (Some(run), EXIT_PASS) => {
                        let check = check_energy_inequality(&run.ledger).ok();
                        let final_f = run
                            .ledger
                            .rows
                            .last()
                            .map_or(run.ledger.initial_f_eps, |r| r.f_eps);
                        let passed = check.is_none_or(|c| c.passed);
                        let slack = check.map_or(0.0, |c| c.worst_slack);
                        (
                            if passed { EXIT_PASS } else { EXIT_FAIL },
                            format!(
                                "{v},{},{final_f:.16e},{slack:.16e},{}",
                                run.ledger.rows.len(),
                                if passed { "pass" } else { "fail" }
                            ),
                        )
                    }
                    (run, _) => (
                        EXIT_FAIL,
                        format!(
                            "{v},{},,,failed",
                            run.as_ref().map_or(0, |r| r.ledger.rows.len())
                        ),
                    ),
                };
                row
            })
            .collect()
    });
    let mut csv = String::from("value,steps,F_eps_final,worst_slack,status\n");
    let mut failed = 0;
    for (code, line) in &results {
        csv.push_str(line);
        csv.push('\n');
        if *code != EXIT_PASS {
            failed += 1;
        }
    }
    if let Err(e) = fs::create_dir_all(&root).and_then(|_| fs::write(root.join("sweep.csv"), &csv))
    {
        return io_fail(&root, e);
    }
    verdict(
        failed == 0,
        &format!(
            "sweep over {axis}: {}/{} points passed",
            results.len() - failed,
            results.len()
        ),
    )
}

fn lcg_field(grid: &Grid, rng: &mut Lcg64, lo: f64, hi: f64) -> ScalarField {
    let v = (0..grid.num_cells())
        .map(|_| lo + (hi - lo) * rng.next_f64())
        .collect();
    ScalarField::from_values(grid, v).expect("sized from grid")
}

/// Picard iteration with the dense minimizer inside every sweep.
fn oracle_eta_step(
    eta0: &ScalarField,
    theta: &ScalarField,
    u: &ScalarField,
    fns: &kwc::ModelFns,
    p: &SchemeParams,
) -> Result<ScalarField, KwcError> {
    let mut eta = eta0.clone();
    for _ in 0..500 {
        let obj = Upsilon::new(&eta, eta0, theta, u, fns, p)?;
        let next = oracle_minimize_dense(&obj, &eta, 1e-10)?;
        let inc = norm_v(&next.sub(&eta));
        eta = next;
        if inc <= 1e-12 {
            return Ok(eta);
        }
    }
    Err(KwcError::Oracle("outer iteration did not settle".into()))
}

pub fn cmd_oracle_test(size: usize, seed: u64, cases: usize) -> u8 {
    let grid = match Grid::line(size, 1.0) {
        Ok(g) => g,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let fns = match default_model().truncated(2.0) {
        Ok(f) => f,
        Err(e) => return solver_error(e),
    };
    let mut p = SchemeParams::default();
    let (_, tau0) = max_stable_tau(&fns, p.mu);
    p.tau = 0.5 * tau0;
    let mut rng = Lcg64::new(seed);
    let mut matches = 0;
    let mut worst: f64 = 0.0;
    for k in 0..cases {
        let eta0 = lcg_field(&grid, &mut rng, -1.0, 1.0);
        let theta0 = lcg_field(&grid, &mut rng, -1.0, 1.0);
        let u = lcg_field(&grid, &mut rng, -0.5, 0.5);
        let v = lcg_field(&grid, &mut rng, -0.5, 0.5);
        let case = || -> Result<f64, KwcError> {
            let (theta, _) = solve_theta_step(&eta0, &theta0, &v, &fns, &p)?;
            let obj = UpsilonStar::new(&eta0, &theta0, &v, &fns, &p)?;
            let theta_ref = oracle_minimize_dense(&obj, &theta0, 1e-10)?;
            let (eta, _) = solve_eta_step(&eta0, &theta, &u, &fns, &p)?;
            let eta_ref = oracle_eta_step(&eta0, &theta, &u, &fns, &p)?;
            Ok(theta
                .sub(&theta_ref)
                .max_abs()
                .max(eta.sub(&eta_ref).max_abs()))
        };
        match case() {
            Ok(err) => {
                worst = worst.max(err);
                if err <= 1e-7 {
                    matches += 1;
                } else {
                    println!("case {k}: mismatch {err:.3e}");
                }
            }
            Err(e) => println!("case {k}: {e}"),
        }
    }
    verdict(
        matches == cases,
        &format!("oracle-test: {matches}/{cases} matches within 1e-7 (worst {worst:.3e})"),
    )
}
