//! Seeded ensembles on both sides of the comparison: replicas share nothing,
//! run in parallel, and are reduced single-threaded in replica order.

use num_complex::Complex64;
use rand::prelude::*;
use rayon::prelude::*;

use crate::error::Result;
use crate::harness::config::InitKind;
use crate::kmc::{self, replica_rng, RunOptions, Trajectory};
use crate::lattice::SpinConfig;
use crate::scaling::ScalingPlan;
use crate::sch::{self, NoiseMode, SchParams, SchPath};
use crate::spectral::{dft, SpectralField};

/// Builds the thread pool honoring the `KKS_WORKERS` override.
pub fn thread_pool() -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("KKS_WORKERS") {
        if let Ok(n) = v.parse::<usize>() {
            b = b.num_threads(n.max(1));
        }
    }
    b.build().expect("thread pool")
}

/// Draws an initial configuration and the matched low-pass initial field for
/// the macroscopic side. The torus field is the band-limited part of the
/// sampled lattice field, so both ensembles start from the same object.
pub fn initial_condition(
    kind: &InitKind,
    plan: &ScalingPlan,
    k_max_macro: usize,
    seed: u64,
    replica: u64,
) -> Result<(SpinConfig, SpectralField)> {
    // separate stream namespace from the dynamics RNG
    let mut rng = replica_rng(seed ^ 0x9e37_79b9_7f4a_7c15, replica);
    let n = plan.sites;
    let spins: Vec<i8> = match kind {
        InitKind::Bernoulli { mean } => {
            let p_up = (1.0 + mean.clamp(-1.0, 1.0)) / 2.0;
            (0..n)
                .map(|_| if rng.gen::<f64>() < p_up { 1 } else { -1 })
                .collect()
        }
        InitKind::Modulated { amplitude, mode } | InitKind::ModulatedField { x_amplitude: amplitude, mode } => {
            let amp = if matches!(kind, InitKind::ModulatedField { .. }) {
                amplitude * plan.delta
            } else {
                *amplitude
            };
            (0..n)
                .map(|i| {
                    let x = i as f64 / n as f64;
                    let m = (amp * (2.0 * std::f64::consts::PI * *mode as f64 * x).cos())
                        .clamp(-1.0, 1.0);
                    if rng.gen::<f64>() < (1.0 + m) / 2.0 {
                        1
                    } else {
                        -1
                    }
                })
                .collect()
        }
        InitKind::Checkerboard => (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect(),
    };
    let cfg = SpinConfig::new(spins, &plan.kernel)?;
    let x_field: Vec<f64> = cfg
        .smoothed_field()
        .iter()
        .map(|&h| h / plan.delta)
        .collect();
    let full = dft(&x_field)?;
    let mut x0 = SpectralField::zero(k_max_macro.min(full.k_max));
    for k in -(x0.k_max as i64)..=(x0.k_max as i64) {
        *x0.coeff_mut(k) = full.coeff(k);
    }
    Ok((cfg, x0))
}

/// Runs a microscopic ensemble; replica `r` uses RNG stream `r` of the seed.
pub fn run_micro_ensemble(
    plan: &ScalingPlan,
    init: &InitKind,
    k_max_macro: usize,
    schedule: &[f64],
    replicas: u64,
    seed: u64,
    opts: &RunOptions,
) -> Result<Vec<(Trajectory, SpectralField)>> {
    let pool = thread_pool();
    pool.install(|| {
        (0..replicas)
            .into_par_iter()
            .map(|r| {
                let (cfg, x0) = initial_condition(init, plan, k_max_macro, seed, r)?;
                let traj = kmc::run(plan, cfg, schedule, seed, r, opts, &mut [])?;
                Ok((traj, x0))
            })
            .collect()
    })
}

/// Runs a macroscopic ensemble from per-replica initial fields.
pub fn run_macro_ensemble(
    params: &SchParams,
    x0s: &[SpectralField],
    seed: u64,
    sample_times: &[f64],
) -> Result<Vec<SchPath>> {
    let sample_every = 1usize;
    let pool = thread_pool();
    pool.install(|| {
        x0s.par_iter()
            .enumerate()
            .map(|(r, x0)| {
                let mut p = params.clone();
                p.t_end = sample_times.last().copied().unwrap_or(p.t_end);
                sch::solve(p, x0.clone(), seed, r as u64, NoiseMode::ExactOu, sample_every)
            })
            .collect()
    })
}

/// Spectral coefficient of the sampled coarse field at macro time index
/// `t_index` and mode `k`.
pub fn micro_mode_sample(
    traj: &Trajectory,
    plan: &ScalingPlan,
    t_index: usize,
    k: i64,
) -> Result<Complex64> {
    let sample = &traj.samples[t_index];
    let x: Vec<f64> = sample.smoothed.iter().map(|&h| h / plan.delta).collect();
    let f = dft(&x)?;
    Ok(f.coeff(k))
}

/// All requested modes of all replicas at one sample index.
pub fn micro_mode_matrix(
    trajs: &[(Trajectory, SpectralField)],
    plan: &ScalingPlan,
    t_index: usize,
    modes: &[i64],
) -> Result<Vec<Vec<Complex64>>> {
    let mut out = vec![Vec::with_capacity(trajs.len()); modes.len()];
    for (traj, _) in trajs {
        let sample = &traj.samples[t_index];
        let x: Vec<f64> = sample.smoothed.iter().map(|&h| h / plan.delta).collect();
        let f = dft(&x)?;
        for (mi, &k) in modes.iter().enumerate() {
            out[mi].push(f.coeff(k));
        }
    }
    Ok(out)
}

/// Macro-side mode samples at the path index closest to `t`.
pub fn macro_mode_matrix(paths: &[SchPath], t: f64, modes: &[i64]) -> Vec<Vec<Complex64>> {
    let mut out = vec![Vec::with_capacity(paths.len()); modes.len()];
    for path in paths {
        let idx = path
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| {
                (a.1 - t).abs().partial_cmp(&(b.1 - t).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap_or(0);
        for (mi, &k) in modes.iter().enumerate() {
            out[mi].push(path.x_hats[idx].coeff(k));
        }
    }
    out
}

/// Lag-1 cross-correlation between consecutive replicas' series; independent
/// replicas should stay within `4/sqrt(len)`.
pub fn adjacent_replica_correlation(series: &[Vec<f64>]) -> f64 {
    let mut worst: f64 = 0.0;
    for pair in series.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let n = a.len().min(b.len());
        if n < 3 {
            continue;
        }
        let ma = a[..n].iter().sum::<f64>() / n as f64;
        let mb = b[..n].iter().sum::<f64>() / n as f64;
        let mut cov = 0.0;
        let mut va = 0.0;
        let mut vb = 0.0;
        for i in 0..n - 1 {
            cov += (a[i] - ma) * (b[i + 1] - mb);
            va += (a[i] - ma) * (a[i] - ma);
            vb += (b[i + 1] - mb) * (b[i + 1] - mb);
        }
        if va > 0.0 && vb > 0.0 {
            worst = worst.max((cov / (va.sqrt() * vb.sqrt())).abs());
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::Profile;
    use crate::scaling::{make_plan, PlanMode};

    fn plan() -> ScalingPlan {
        make_plan(Profile::Gaussian, 0.2, 32, 1.0, 1.0, 0.0, PlanMode::RatioLocked).unwrap()
    }

    #[test]
    fn bernoulli_zero_mass_small() {
        let p = plan();
        let (cfg, x0) = initial_condition(&InitKind::Bernoulli { mean: 0.0 }, &p, 8, 3, 0).unwrap();
        assert!((cfg.total_mag() as f64).abs() < 4.0 * (p.sites as f64).sqrt());
        // X0 mean energy small compared to its scale 1/delta
        assert!(x0.coeff(0).norm() * p.delta < 0.5);
    }

    #[test]
    fn modulated_blocks_track_profile() {
        let p = make_plan(Profile::Gaussian, 0.1, 512, 1.0, 1.0, 0.0, PlanMode::RatioLocked).unwrap();
        let amp = 0.5;
        let (cfg, _) = initial_condition(
            &InitKind::Modulated { amplitude: amp, mode: 1 },
            &p,
            8,
            7,
            0,
        )
        .unwrap();
        let ell = 32usize;
        let n = p.sites;
        let mut worst: f64 = 0.0;
        for x in (0..n).step_by(64) {
            let m = crate::coarse::block_average(&cfg, x, ell).unwrap();
            let target = amp * (2.0 * std::f64::consts::PI * x as f64 / n as f64).cos();
            worst = worst.max((m - target).abs());
        }
        // window bias O(ell/n) plus sampling noise O(1/sqrt(ell))
        let bound = amp * ell as f64 / n as f64 + 4.0 / (2.0 * ell as f64 + 1.0).sqrt();
        assert!(worst < bound + 0.1, "worst {worst}, bound {bound}");
    }

    #[test]
    fn checkerboard_field_nearly_vanishes() {
        let p = plan();
        let (cfg, x0) = initial_condition(&InitKind::Checkerboard, &p, 8, 1, 0).unwrap();
        // Kac smoothing kills the alternating mode except at the odd-size seam
        let interior_max = (1..cfg.sites() - 1)
            .filter(|i| (*i as i64 - 0).unsigned_abs() as usize > p.kernel.half_support + 1)
            .map(|i| cfg.smoothed(i).abs())
            .fold(0.0f64, f64::max);
        assert!(interior_max < 2.0 * p.kernel.weights()[0], "{interior_max}");
        let _ = x0;
    }

    #[test]
    fn ensembles_are_deterministic() {
        let p = plan();
        let sched = vec![0.0, 1e-4];
        let a = run_micro_ensemble(
            &p,
            &InitKind::Bernoulli { mean: 0.0 },
            8,
            &sched,
            3,
            42,
            &RunOptions::default(),
        )
        .unwrap();
        let b = run_micro_ensemble(
            &p,
            &InitKind::Bernoulli { mean: 0.0 },
            8,
            &sched,
            3,
            42,
            &RunOptions::default(),
        )
        .unwrap();
        for ((ta, _), (tb, _)) in a.iter().zip(&b) {
            assert_eq!(ta.n_events, tb.n_events);
            assert_eq!(ta.samples.last().unwrap().spins, tb.samples.last().unwrap().spins);
        }
    }

    #[test]
    fn correlation_of_independent_series_is_small() {
        use rand::prelude::*;
        let mut series = Vec::new();
        for r in 0..6u64 {
            let mut rng = replica_rng(5, r);
            series.push((0..400).map(|_| rng.gen::<f64>() - 0.5).collect::<Vec<_>>());
        }
        let worst = adjacent_replica_correlation(&series);
        assert!(worst < 4.0 / (400.0f64).sqrt(), "worst {worst}");
    }
}
