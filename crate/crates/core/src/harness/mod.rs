//! Experiment orchestration: configuration, seeded ensembles, the
//! micro-vs-macro comparison at desk scale, persistence, and plot-data
//! emission.

pub mod compare;
pub mod config;
pub mod ensemble;
pub mod plotdata;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::coarse;
use crate::error::{Error, Result};
use crate::gibbs;
use crate::kmc::RunOptions;
use crate::scaling::{make_plan, ScalingPlan};
use crate::sch::SchParams;
use crate::spectral;

pub use compare::{compare_cell, CompareRow, ComparisonReport};
pub use config::{ExperimentConfig, InitKind, RunKind};
pub use ensemble::{
    initial_condition, macro_mode_matrix, micro_mode_matrix, run_macro_ensemble,
    run_micro_ensemble,
};

/// Writes a CSV file from a header and row-building closure.
pub fn write_csv<P: AsRef<Path>>(
    path: P,
    header: &str,
    rows: impl IntoIterator<Item = String>,
) -> Result<()> {
    let mut text = String::with_capacity(4096);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Run manifest: everything needed to regenerate the artifacts byte for
/// byte (no timestamps by design).
pub fn write_manifest(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    let mut m = String::new();
    let _ = writeln!(m, "config_sha256 = {}", cfg.hash());
    let _ = writeln!(m, "version = {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "seed = {}", cfg.seed);
    let _ = writeln!(m, "replicas = {}", cfg.replicas);
    fs::write(dir.join("manifest.txt"), m)?;
    fs::write(dir.join("config.txt"), cfg.to_text())?;
    Ok(())
}

fn plan_for(cfg: &ExperimentConfig, point: (f64, usize)) -> Result<ScalingPlan> {
    make_plan(
        cfg.profile,
        point.0,
        point.1,
        cfg.lambda,
        cfg.sigma_star_sq,
        cfg.beta,
        cfg.plan_mode,
    )
}

/// Matched macroscopic parameters for a plan: the fourth-order coefficient
/// and noise intensity come from the plan; the second-order coefficient uses
/// the micro-calibrated value (`a_eff`), the cubic one the theorem mapping.
pub fn matched_sch_params(plan: &ScalingPlan, cfg: &ExperimentConfig) -> SchParams {
    SchParams {
        nu: plan.nu_eff.max(1e-12),
        a: plan.a_eff,
        chi: plan.targets.chi,
        sigma_star: plan.targets.sigma_star_sq.sqrt(),
        k_max: cfg.spde_k_max,
        dt: cfg.spde_dt,
        t_end: cfg.schedule.last().copied().unwrap_or(0.1),
        mass: 0.0,
    }
}

/// Runs one experiment to completion, writing all artifacts under the
/// configured output directory. Returns the artifact directory.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<PathBuf> {
    cfg.validate()?;
    let dir = PathBuf::from(&cfg.out_dir);
    fs::create_dir_all(&dir)?;
    write_manifest(&dir, cfg)?;
    match cfg.run_kind {
        RunKind::Simulate => simulate_run(cfg, &dir)?,
        RunKind::Spde => spde_run(cfg, &dir)?,
        RunKind::Oracle => oracle_run(cfg, &dir)?,
        RunKind::Compare => {
            let report = compare_run(cfg, &dir)?;
            let _ = report;
        }
        RunKind::SymbolAudit => symbol_audit_run(cfg, &dir)?,
    }
    Ok(dir)
}

fn simulate_run(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    for &point in &cfg.points {
        let plan = plan_for(cfg, point)?;
        let opts = RunOptions {
            event_cap: cfg.event_cap,
            ..RunOptions::default()
        };
        let trajs = run_micro_ensemble(
            &plan,
            &cfg.init,
            cfg.spde_k_max,
            &cfg.schedule,
            cfg.replicas,
            cfg.seed,
            &opts,
        )?;
        for (traj, _) in &trajs {
            // field series, one file per replica, named by seed and replica
            let path = dir.join(format!(
                "field_gamma{}_seed{}_replica{}.csv",
                plan.gamma, traj.seed, traj.replica
            ));
            let mut rows = Vec::new();
            for s in &traj.samples {
                for (i, &h) in s.smoothed.iter().enumerate() {
                    rows.push(format!("{},{},{}", s.t_macro, i, h / plan.delta));
                }
            }
            write_csv(path, "t_macro,site_index,x_gamma", rows)?;
            let path = dir.join(format!(
                "observables_gamma{}_seed{}_replica{}.csv",
                plan.gamma, traj.seed, traj.replica
            ));
            let mut rows = Vec::new();
            for s in &traj.samples {
                let f = coarse::coarse_field_from_smoothed(&s.smoothed, s.t_macro, &plan);
                rows.push(format!("{},mass,{}", s.t_macro, f.mass));
                rows.push(format!("{},total_mag,{}", s.t_macro, s.total_mag));
            }
            write_csv(path, "t_macro,observable_name,value", rows)?;
        }
        // conservation assertions for the whole ensemble
        for (traj, _) in &trajs {
            let m0 = traj.samples[0].total_mag;
            for s in &traj.samples {
                if s.total_mag != m0 {
                    return Err(Error::BadConfig {
                        path: "conservation".into(),
                        reason: "magnetization drifted".into(),
                    });
                }
            }
        }
    }
    Ok(())
}

fn spde_run(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let plan = plan_for(cfg, cfg.points[0])?;
    let params = matched_sch_params(&plan, cfg);
    let x0s: Vec<spectral::SpectralField> = (0..cfg.replicas)
        .map(|r| initial_condition(&cfg.init, &plan, cfg.spde_k_max, cfg.seed, r).map(|p| p.1))
        .collect::<Result<_>>()?;
    let paths = run_macro_ensemble(&params, &x0s, cfg.seed, &cfg.schedule)?;
    for (r, path) in paths.iter().enumerate() {
        let file = dir.join(format!("spde_seed{}_replica{}.csv", cfg.seed, r));
        let mut rows = Vec::new();
        for (ti, x) in path.times.iter().zip(&path.x_hats) {
            for (k, c) in x.modes() {
                rows.push(format!("{},{},{},{}", ti, k, c.re, c.im));
            }
        }
        write_csv(file, "t,k,re,im", rows)?;
        let file = dir.join(format!("spde_diag_seed{}_replica{}.csv", cfg.seed, r));
        let rows = path.diagnostics.iter().map(|d| {
            format!(
                "{},{},{},{},{}",
                d.t,
                d.mass,
                d.hm1_sq.sqrt(),
                d.h1_sq.sqrt(),
                d.l4
            )
        });
        write_csv(file, "t,mass,hm1,h1,l4", rows)?;
    }
    Ok(())
}

fn oracle_run(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let plan = plan_for(cfg, cfg.points[0])?;
    let mut rows = Vec::new();
    for big_l in 1..=cfg.oracle_l_max {
        for &m in &gibbs::magnetization_mesh(big_l) {
            let phi = gibbs::phi(big_l, m, &plan.kernel, cfg.beta, gibbs::Observable::D0Sq)?;
            let closed = gibbs::d0sq_closed_form(big_l, m);
            let mu = gibbs::enumerate_block(big_l, m, &plan.kernel, cfg.beta, gibbs::MeasureKind::Canonical)?;
            let nu = gibbs::enumerate_block(big_l, m, &plan.kernel, cfg.beta, gibbs::MeasureKind::Auxiliary)?;
            let tv = gibbs::tv_distance(&mu, &nu)?;
            rows.push(format!("{big_l},{m},{phi},{closed},{tv}"));
        }
    }
    write_csv(
        dir.join("phi_table.csv"),
        "L,m,phi_enumerated,phi_closed_form,tv_bound",
        rows,
    )?;
    Ok(())
}

fn symbol_audit_run(cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let mut rows = Vec::new();
    for &(_, n_half) in &cfg.points {
        let eps = 1.0 / (2 * n_half + 1) as f64;
        let (c, big_c, cons) = spectral::symbol_check(eps, 16);
        rows.push(format!("{eps},{c},{big_c},{cons}"));
    }
    write_csv(dir.join("symbols.csv"), "eps,c_lower,c_upper,c_consistency", rows)?;
    let eps_list: Vec<f64> = cfg
        .points
        .iter()
        .map(|&(_, n)| 1.0 / (2 * n + 1) as f64)
        .collect();
    let rep = spectral::semigroup_estimates(&eps_list, 1.0, 0.2, 8);
    let rows = rep
        .symbol_convergence
        .iter()
        .map(|(e, v)| format!("{e},{v},{},{}", rep.block_integral_constant, rep.increment_constant));
    write_csv(
        dir.join("semigroup.csv"),
        "eps,symbol_gap,block_constant,increment_constant",
        rows,
    )?;
    Ok(())
}

/// The compare pipeline: matched ensembles per sweep point, the macro-macro
/// self-test first, then the cell table and the trend check.
pub fn compare_run(cfg: &ExperimentConfig, dir: &Path) -> Result<ComparisonReport> {
    if cfg.replicas < 32 {
        return Err(Error::EnsembleTooSmall {
            got: cfg.replicas as usize,
            need: 32,
        });
    }
    let sample_times: Vec<f64> = cfg.schedule.iter().copied().filter(|&t| t > 0.0).collect();
    let mut report = ComparisonReport::default();
    let mut self_report = ComparisonReport::default();
    for &point in &cfg.points {
        let plan = plan_for(cfg, point)?;
        let params = matched_sch_params(&plan, cfg);
        let opts = RunOptions {
            event_cap: cfg.event_cap,
            ..RunOptions::default()
        };
        let trajs = run_micro_ensemble(
            &plan,
            &cfg.init,
            cfg.spde_k_max,
            &cfg.schedule,
            cfg.replicas,
            cfg.seed,
            &opts,
        )?;
        let x0s: Vec<spectral::SpectralField> = trajs.iter().map(|(_, x0)| x0.clone()).collect();
        let macro_paths = run_macro_ensemble(&params, &x0s, cfg.seed.wrapping_add(1), &cfg.schedule)?;
        // macro-vs-macro self test: same params and initial fields, fresh seeds
        let macro_paths_b =
            run_macro_ensemble(&params, &x0s, cfg.seed.wrapping_add(2), &cfg.schedule)?;
        for &t in &sample_times {
            let t_index = cfg
                .schedule
                .iter()
                .position(|&s| (s - t).abs() < 1e-12)
                .expect("schedule contains sample time");
            let micro = micro_mode_matrix(&trajs, &plan, t_index, &cfg.modes)?;
            let mac = macro_mode_matrix(&macro_paths, t, &cfg.modes);
            let mac_b = macro_mode_matrix(&macro_paths_b, t, &cfg.modes);
            for (mi, &k) in cfg.modes.iter().enumerate() {
                report.rows.push(compare_cell(
                    plan.gamma,
                    k,
                    t,
                    &micro[mi],
                    &mac[mi],
                    cfg.seed ^ (k as u64) ^ t.to_bits(),
                ));
                self_report.rows.push(compare_cell(
                    plan.gamma,
                    k,
                    t,
                    &mac[mi],
                    &mac_b[mi],
                    cfg.seed ^ (k as u64) ^ t.to_bits() ^ 0xff,
                ));
            }
        }
    }
    let rows = report.rows.iter().map(|r| {
        format!(
            "{},e{},{},{},{},{},{},{},{},{}",
            r.gamma,
            r.mode,
            r.t,
            r.mean_gap,
            r.mean_gap_ci,
            r.second_gap,
            r.second_gap_ci,
            r.ks,
            r.n_micro,
            r.n_macro
        )
    });
    write_csv(
        dir.join("comparison.csv"),
        "gamma,phi,t,mean_gap,mean_gap_ci,second_gap,second_gap_ci,ks,n_micro,n_macro",
        rows,
    )?;
    let rows = self_report.rows.iter().map(|r| {
        format!(
            "{},e{},{},{},{},{},{}",
            r.gamma, r.mode, r.t, r.mean_gap, r.mean_gap_ci, r.second_gap, r.second_gap_ci
        )
    });
    write_csv(
        dir.join("self_test.csv"),
        "gamma,phi,t,mean_gap,mean_gap_ci,second_gap,second_gap_ci",
        rows,
    )?;
    // gamma trend table
    let mut gammas: Vec<f64> = cfg.points.iter().map(|p| p.0).collect();
    gammas.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let frac = report.trend_fraction(&gammas);
    write_csv(
        dir.join("trend.csv"),
        "metric,value",
        [
            format!("nonincreasing_fraction,{frac}"),
            format!("self_test_within_ci,{}", self_report.within_ci_of_zero()),
        ],
    )?;
    Ok(report)
}
