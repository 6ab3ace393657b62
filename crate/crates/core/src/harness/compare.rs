//! Distribution comparison between the microscopic and macroscopic mode
//! ensembles: moment gaps with bootstrap confidence intervals, a
//! Kolmogorov-Smirnov distance on standardized samples, and the trend table
//! across a kernel-range sweep.

use num_complex::Complex64;
use rand::prelude::*;

use crate::kmc::replica_rng;

/// One `(gamma, phi, t)` cell of the comparison.
#[derive(Debug, Clone)]
pub struct CompareRow {
    pub gamma: f64,
    pub mode: i64,
    pub t: f64,
    /// `|E micro - E macro|` of the complex mode samples.
    pub mean_gap: f64,
    pub mean_gap_ci: f64,
    /// `|E |micro|^2 - E |macro|^2|`.
    pub second_gap: f64,
    pub second_gap_ci: f64,
    /// Two-sample KS distance of the standardized real parts.
    pub ks: f64,
    pub n_micro: usize,
    pub n_macro: usize,
}

fn mean_c(v: &[Complex64]) -> Complex64 {
    v.iter().sum::<Complex64>() / v.len().max(1) as f64
}

fn second_moment(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len().max(1) as f64
}

/// Two-sample KS distance after per-sample standardization.
pub fn ks_standardized(a: &[Complex64], b: &[Complex64]) -> f64 {
    let std_re = |v: &[Complex64]| -> Vec<f64> {
        let xs: Vec<f64> = v.iter().map(|c| c.re).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0).max(1.0);
        let sd = var.sqrt().max(1e-300);
        xs.iter().map(|x| (x - m) / sd).collect()
    };
    let mut xa = std_re(a);
    let mut xb = std_re(b);
    xa.sort_by(|p, q| p.partial_cmp(q).unwrap());
    xb.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let mut i = 0usize;
    let mut j = 0usize;
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        if xa[i] <= xb[j] {
            i += 1;
        } else {
            j += 1;
        }
        let fa = i as f64 / xa.len() as f64;
        let fb = j as f64 / xb.len() as f64;
        d = d.max((fa - fb).abs());
    }
    d
}

/// Bootstrap standard deviation of a gap statistic over replica resampling.
fn bootstrap_gap_sd(
    micro: &[Complex64],
    macro_: &[Complex64],
    stat: &dyn Fn(&[Complex64], &[Complex64]) -> f64,
    resamples: usize,
    seed: u64,
) -> f64 {
    let mut rng = replica_rng(seed, 0xb00);
    let mut vals = Vec::with_capacity(resamples);
    let mut ma = Vec::with_capacity(micro.len());
    let mut mb = Vec::with_capacity(macro_.len());
    for _ in 0..resamples {
        ma.clear();
        mb.clear();
        for _ in 0..micro.len() {
            ma.push(micro[rng.gen_range(0..micro.len())]);
        }
        for _ in 0..macro_.len() {
            mb.push(macro_[rng.gen_range(0..macro_.len())]);
        }
        vals.push(stat(&ma, &mb));
    }
    let m = vals.iter().sum::<f64>() / vals.len() as f64;
    (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vals.len() as f64 - 1.0)).sqrt()
}

/// Builds one comparison cell from matched samples.
pub fn compare_cell(
    gamma: f64,
    mode: i64,
    t: f64,
    micro: &[Complex64],
    macro_: &[Complex64],
    seed: u64,
) -> CompareRow {
    let mean_stat =
        |a: &[Complex64], b: &[Complex64]| -> f64 { (mean_c(a) - mean_c(b)).norm() };
    let second_stat =
        |a: &[Complex64], b: &[Complex64]| -> f64 { (second_moment(a) - second_moment(b)).abs() };
    let resamples = 200;
    CompareRow {
        gamma,
        mode,
        t,
        mean_gap: mean_stat(micro, macro_),
        mean_gap_ci: 1.96 * bootstrap_gap_sd(micro, macro_, &mean_stat, resamples, seed),
        second_gap: second_stat(micro, macro_),
        second_gap_ci: 1.96 * bootstrap_gap_sd(micro, macro_, &second_stat, resamples, seed ^ 1),
        ks: ks_standardized(micro, macro_),
        n_micro: micro.len(),
        n_macro: macro_.len(),
    }
}

/// Full comparison report: all cells, gamma-major order.
#[derive(Debug, Clone, Default)]
pub struct ComparisonReport {
    pub rows: Vec<CompareRow>,
}

impl ComparisonReport {
    /// Fraction of `(mode, t)` cells whose second-moment gap is nonincreasing
    /// at every step of the gamma sweep (largest gamma first), within the
    /// bootstrap slack.
    pub fn trend_fraction(&self, gammas_desc: &[f64]) -> f64 {
        let mut cells: Vec<(i64, f64)> = self
            .rows
            .iter()
            .map(|r| (r.mode, r.t))
            .collect();
        cells.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cells.dedup();
        if cells.is_empty() || gammas_desc.len() < 2 {
            return 1.0;
        }
        let mut good = 0usize;
        let mut total = 0usize;
        for (mode, t) in cells {
            let rows: Vec<&CompareRow> = gammas_desc
                .iter()
                .filter_map(|&g| {
                    self.rows.iter().find(|r| {
                        r.mode == mode && (r.t - t).abs() < 1e-12 && (r.gamma - g).abs() < 1e-12
                    })
                })
                .collect();
            for w in rows.windows(2) {
                // both moment gaps count, each nonincreasing within the
                // combined CI slack
                total += 2;
                if w[1].mean_gap <= w[0].mean_gap + w[0].mean_gap_ci + w[1].mean_gap_ci {
                    good += 1;
                }
                if w[1].second_gap <= w[0].second_gap + w[0].second_gap_ci + w[1].second_gap_ci {
                    good += 1;
                }
            }
        }
        if total == 0 {
            1.0
        } else {
            good as f64 / total as f64
        }
    }

    /// True when every cell's gaps sit within CI of zero (macro-vs-macro
    /// self-test).
    pub fn within_ci_of_zero(&self) -> bool {
        self.rows
            .iter()
            .all(|r| r.mean_gap <= r.mean_gap_ci.max(1e-12) && r.second_gap <= r.second_gap_ci.max(1e-12))
    }
}
