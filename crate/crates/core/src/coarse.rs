//! Coarse-grained field, block averages, and the replacement residual
//! estimators that measure how well a fast local observable is captured by
//! its block-equilibrium average.

use crate::error::{Error, Result};
use crate::gibbs;
use crate::kernel::KacKernel;
use crate::kmc::Trajectory;
use crate::lattice::SpinConfig;
use crate::scaling::ScalingPlan;

/// Rescaled Kac field at one sample time.
#[derive(Debug, Clone)]
pub struct FieldSample {
    pub t_macro: f64,
    /// `X(eps i) = h(i) / delta`.
    pub values: Vec<f64>,
    /// Lattice mass `<X, 1> = eps sum_i X_i`.
    pub mass: f64,
}

/// Builds the rescaled field from a configuration.
pub fn coarse_field(cfg: &SpinConfig, plan: &ScalingPlan) -> FieldSample {
    let values: Vec<f64> = cfg
        .smoothed_field()
        .iter()
        .map(|&h| h / plan.delta)
        .collect();
    let mass = plan.eps * values.iter().sum::<f64>();
    FieldSample {
        t_macro: 0.0,
        values,
        mass,
    }
}

/// Same, from a stored smoothed-field snapshot.
pub fn coarse_field_from_smoothed(smoothed: &[f64], t_macro: f64, plan: &ScalingPlan) -> FieldSample {
    let values: Vec<f64> = smoothed.iter().map(|&h| h / plan.delta).collect();
    let mass = plan.eps * values.iter().sum::<f64>();
    FieldSample {
        t_macro,
        values,
        mass,
    }
}

impl FieldSample {
    /// Max absolute forward difference quotient `|X_{i+1} - X_i| / eps`.
    pub fn grad_sup(&self, eps: f64) -> f64 {
        let n = self.values.len();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let j = if i + 1 == n { 0 } else { i + 1 };
            worst = worst.max((self.values[j] - self.values[i]).abs() / eps);
        }
        worst
    }
}

/// Exact lattice bound for the field gradient: the smoothed field moves by at
/// most the total variation of the kernel weights between neighbouring
/// sites, so `||grad X||_inf <= V / (delta eps)` with
/// `V = sum_z |kappa(z-1) - kappa(z)|` (of order `gamma`).
pub fn kernel_total_variation(kernel: &KacKernel) -> f64 {
    let n = kernel.sites as i64;
    let mut v = 0.0;
    for z in 0..n {
        v += (kernel.weight(z - 1) - kernel.weight(z)).abs();
    }
    v
}

/// Block average `m_x^ell = (2 ell + 1)^{-1} sum_{|y| <= ell} sigma_{x+y}`.
pub fn block_average(cfg: &SpinConfig, x: usize, ell: usize) -> Result<f64> {
    block_average_spins(cfg.spins(), x, ell)
}

pub fn block_average_spins(spins: &[i8], x: usize, ell: usize) -> Result<f64> {
    let n = spins.len();
    if 2 * ell + 1 > n {
        return Err(Error::WindowTooLarge { ell, sites: n });
    }
    let mut s = 0i64;
    for y in -(ell as i64)..=(ell as i64) {
        let idx = (x as i64 + y).rem_euclid(n as i64) as usize;
        s += spins[idx] as i64;
    }
    Ok(s as f64 / (2 * ell + 1) as f64)
}

/// All block averages at once (sliding window, O(n)).
pub fn block_averages(spins: &[i8], ell: usize) -> Result<Vec<f64>> {
    let n = spins.len();
    if 2 * ell + 1 > n {
        return Err(Error::WindowTooLarge { ell, sites: n });
    }
    let w = (2 * ell + 1) as f64;
    let mut out = vec![0.0; n];
    let mut acc: i64 = 0;
    for y in -(ell as i64)..=(ell as i64) {
        acc += spins[y.rem_euclid(n as i64) as usize] as i64;
    }
    out[0] = acc as f64 / w;
    for x in 1..n {
        let leaving = (x as i64 - 1 - ell as i64).rem_euclid(n as i64) as usize;
        let entering = (x as i64 + ell as i64).rem_euclid(n as i64) as usize;
        acc += (spins[entering] - spins[leaving]) as i64;
        out[x] = acc as f64 / w;
    }
    Ok(out)
}

/// Mean and standard error across replicas.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
    pub n_samples: usize,
}

impl Estimate {
    pub fn from_values(values: &[f64]) -> Estimate {
        let n = values.len().max(1);
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0)
        } else {
            0.0
        };
        Estimate {
            value: mean,
            stderr: (var / n as f64).sqrt(),
            n_samples: n,
        }
    }
}

/// The three replacement residuals at block scales `(ell, L)`.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    pub ell: usize,
    pub big_l: usize,
    pub gamma: f64,
    /// `| (1/T) int (1/n) sum_x J (d_x^2 - Phi_ell(m_x^ell)) dt |` per replica.
    pub one_block: Estimate,
    /// Same with `m_x^ell - m_x^L`.
    pub two_block: Estimate,
    /// Kac-weighted square deviation of block averages from their kernel mean.
    pub kac_reg: Estimate,
}

/// Local-equilibrium average used for the one-block residual: exact block
/// enumeration when the block is small enough, otherwise the closed form
/// (exact at infinite temperature).
#[derive(Debug, Clone)]
pub struct PhiTable {
    pub ell: usize,
    /// phi indexed by the number of up spins in the block.
    values: Vec<f64>,
}

impl PhiTable {
    pub fn build(ell: usize, kernel: &KacKernel, beta: f64) -> Result<PhiTable> {
        let sites = 2 * ell + 1;
        let mut values = Vec::with_capacity(sites + 1);
        for ups in 0..=sites {
            let spin_sum = 2 * ups as i64 - sites as i64;
            let m = spin_sum as f64 / sites as f64;
            let v = if beta == 0.0 || sites > gibbs::ENUMERATION_CAP {
                gibbs::d0sq_closed_form(ell, m)
            } else {
                gibbs::phi(ell, m, kernel, beta, gibbs::Observable::D0Sq)?
            };
            values.push(v);
        }
        Ok(PhiTable { ell, values })
    }

    /// Looks up phi for a block with the given spin sum.
    #[inline]
    pub fn get(&self, spin_sum: i64) -> f64 {
        let sites = 2 * self.ell + 1;
        let ups = ((spin_sum + sites as i64) / 2) as usize;
        self.values[ups]
    }
}

/// Monte Carlo estimates of the three time-averaged weighted residuals.
///
/// `j_fn` is the macroscopic weight evaluated at `x / n` on the unit torus;
/// the integrals are Riemann sums over the trajectory's sample schedule.
pub fn replacement_residuals(
    trajs: &[Trajectory],
    plan: &ScalingPlan,
    j_fn: &dyn Fn(f64) -> f64,
    ell: usize,
    big_l: usize,
) -> Result<ResidualReport> {
    let n = plan.sites;
    if big_l >= n / 4 {
        return Err(Error::ScaleSeparation {
            ell,
            big_l,
            sites: n,
        });
    }
    if ell > big_l {
        return Err(Error::ScaleSeparation {
            ell,
            big_l,
            sites: n,
        });
    }
    let phi_table = PhiTable::build(ell, &plan.kernel, plan.beta)?;
    let jw: Vec<f64> = (0..n).map(|x| j_fn(x as f64 / n as f64)).collect();
    let jw_abs: Vec<f64> = jw.iter().map(|v| v.abs()).collect();

    let mut one = Vec::new();
    let mut two = Vec::new();
    let mut kac = Vec::new();
    for traj in trajs {
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut s3 = 0.0;
        let mut count = 0usize;
        for sample in &traj.samples {
            let spins = &sample.spins;
            let m_ell = block_averages(spins, ell)?;
            let m_big = block_averages(spins, big_l)?;
            let sites = 2 * ell as i64 + 1;
            let mut w1 = 0.0;
            let mut w2 = 0.0;
            for x in 0..n {
                let x1 = if x + 1 == n { 0 } else { x + 1 };
                let d = (spins[x] - spins[x1]) as f64;
                let spin_sum = (m_ell[x] * sites as f64).round() as i64;
                w1 += jw[x] * (d * d - phi_table.get(spin_sum));
                w2 += jw[x] * (m_ell[x] - m_big[x]);
            }
            // kernel-weighted mean of the big-block averages and its spread
            let smoothed_m = plan.kernel.smooth(&m_big);
            let mut w3 = 0.0;
            for x in 0..n {
                let mut acc = 0.0;
                let w = plan.kernel.half_support as i64;
                for z in -w..=w {
                    let zz = (x as i64 + z).rem_euclid(n as i64) as usize;
                    let dev = m_big[zz] - smoothed_m[x];
                    acc += plan.kernel.weight(z) * dev * dev;
                }
                w3 += jw_abs[x] * acc;
            }
            s1 += w1 / n as f64;
            s2 += w2 / n as f64;
            s3 += w3 / n as f64;
            count += 1;
        }
        let c = count.max(1) as f64;
        one.push((s1 / c).abs());
        two.push((s2 / c).abs());
        kac.push(s3 / c);
    }
    Ok(ResidualReport {
        ell,
        big_l,
        gamma: plan.gamma,
        one_block: Estimate::from_values(&one),
        two_block: Estimate::from_values(&two),
        kac_reg: Estimate::from_values(&kac),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{build_kernel, Profile};
    use crate::kmc::Sample;
    use crate::scaling::{make_plan, PlanMode};

    fn plan(gamma: f64, n_half: usize) -> ScalingPlan {
        make_plan(Profile::Gaussian, gamma, n_half, 1.0, 1.0, 0.0, PlanMode::RatioLocked).unwrap()
    }

    #[test]
    fn constant_field_mass() {
        let p = plan(0.2, 16);
        let cfg = SpinConfig::new(vec![1; p.sites], &p.kernel).unwrap();
        let f = coarse_field(&cfg, &p);
        for v in &f.values {
            assert!((v - 1.0 / p.delta).abs() < 1e-12);
        }
        assert!((f.mass - p.eps * p.sites as f64 / p.delta).abs() < 1e-12);
    }

    #[test]
    fn mass_matches_magnetization() {
        let p = plan(0.2, 16);
        // M = 0 sector: mass exactly zero
        let spins: Vec<i8> = (0..p.sites)
            .map(|i| if i < p.sites / 2 { 1 } else { -1 })
            .collect();
        let spins = {
            let mut s = spins;
            s[p.sites - 1] = if p.sites % 2 == 1 { -1 } else { 1 };
            s
        };
        let m: i64 = spins.iter().map(|&x| x as i64).sum();
        let cfg = SpinConfig::new(spins, &p.kernel).unwrap();
        let f = coarse_field(&cfg, &p);
        assert!(
            (f.mass - p.eps / p.delta * m as f64).abs() < 1e-12,
            "mass {} vs (eps/delta) M = {}",
            f.mass,
            p.eps / p.delta * m as f64
        );
    }

    #[test]
    fn gradient_bound_from_kernel_variation() {
        let p = plan(0.1, 64);
        let mut rng = crate::kmc::replica_rng(5, 0);
        let cfg = crate::kmc::uniform_sector_config(p.sites, 1, &p.kernel, &mut rng).unwrap();
        let f = coarse_field(&cfg, &p);
        let v = kernel_total_variation(&p.kernel);
        assert!(f.grad_sup(p.eps) <= v / (p.delta * p.eps) + 1e-12);
        // the constant in front of gamma/(delta eps) is O(1)
        assert!(v / p.gamma < 2.0 * p.kernel.profile.sup_norm() + 1.0);
    }

    #[test]
    fn block_average_basics() {
        let k = build_kernel(Profile::Gaussian, 0.2, 8).unwrap();
        let n = 17;
        let all_up = SpinConfig::new(vec![1; n], &k).unwrap();
        assert_eq!(block_average(&all_up, 3, 2).unwrap(), 1.0);
        // alternating: center parity decides the sign of 1/(2l+1)
        let alt: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let cfg = SpinConfig::new(alt, &k).unwrap();
        let b = block_average(&cfg, 4, 1).unwrap();
        assert!((b + 1.0 / 3.0).abs() < 1e-15);
        let b = block_average(&cfg, 5, 1).unwrap();
        assert!((b - 1.0 / 3.0).abs() < 1e-15);
        // full window returns M / n
        let m: i64 = cfg.spins().iter().map(|&s| s as i64).sum();
        assert!((block_average(&cfg, 0, 8).unwrap() - m as f64 / n as f64).abs() < 1e-15);
        assert!(block_average(&cfg, 0, 9).is_err());
    }

    #[test]
    fn sliding_block_averages_match_direct() {
        let k = build_kernel(Profile::Gaussian, 0.2, 10).unwrap();
        let mut rng = crate::kmc::replica_rng(2, 0);
        let cfg = crate::kmc::uniform_sector_config(21, 1, &k, &mut rng).unwrap();
        for ell in [1usize, 3, 7] {
            let fast = block_averages(cfg.spins(), ell).unwrap();
            for x in 0..21 {
                assert!((fast[x] - block_average(&cfg, x, ell).unwrap()).abs() < 1e-13);
            }
        }
    }

    fn frozen_traj(spins: Vec<i8>, p: &ScalingPlan, times: usize) -> Trajectory {
        let cfg = SpinConfig::new(spins, &p.kernel).unwrap();
        let samples: Vec<Sample> = (0..times)
            .map(|i| Sample {
                t_macro: i as f64,
                smoothed: cfg.smoothed_field().to_vec(),
                spins: cfg.spins().to_vec(),
                total_mag: cfg.total_mag(),
                currents: None,
            })
            .collect();
        Trajectory {
            seed: 0,
            replica: 0,
            t_end_macro: times as f64,
            n_events: 0,
            samples,
            events: None,
        }
    }

    #[test]
    fn frozen_all_up_residuals_vanish() {
        let p = plan(0.2, 32);
        let trajs = vec![frozen_traj(vec![1; p.sites], &p, 3)];
        let rep = replacement_residuals(&trajs, &p, &|_| 1.0, 2, 4).unwrap();
        assert_eq!(rep.one_block.value, 0.0);
        assert_eq!(rep.two_block.value, 0.0);
        assert_eq!(rep.kac_reg.value, 0.0);
    }

    #[test]
    fn equal_scales_two_block_zero() {
        let p = plan(0.2, 32);
        let mut rng = crate::kmc::replica_rng(7, 0);
        let cfg = crate::kmc::uniform_sector_config(p.sites, 1, &p.kernel, &mut rng).unwrap();
        let trajs = vec![frozen_traj(cfg.spins().to_vec(), &p, 2)];
        let rep = replacement_residuals(&trajs, &p, &|_| 1.0, 3, 3).unwrap();
        assert_eq!(rep.two_block.value, 0.0);
    }

    #[test]
    fn scale_separation_enforced() {
        let p = plan(0.2, 16);
        let trajs = vec![frozen_traj(vec![1; p.sites], &p, 1)];
        assert!(replacement_residuals(&trajs, &p, &|_| 1.0, 2, p.sites / 4).is_err());
    }
}
