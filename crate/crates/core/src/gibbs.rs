//! Exact small-system statistical mechanics by enumeration: block Gibbs
//! measures on canonical sectors, local-equilibrium averages, Dirichlet
//! forms, Fisher information, relative entropy, and the closed forms for the
//! squared bond difference under the uniform sector measure.
//!
//! Blocks are open segments `{-ell, ..., ell}` of the big lattice (stored
//! `0..=2 ell`), interacting through the same renormalized kernel weights as
//! the full model. Enumeration is the point: everything here is exact up to
//! floating-point rounding.

use crate::error::{Error, Result};
use crate::kernel::KacKernel;
use crate::kmc::enumerate_fixed_weight;
use crate::lattice::heat_bath;

/// Largest block (in sites) we are willing to enumerate.
pub const ENUMERATION_CAP: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeasureKind {
    /// `exp(-beta H_blk)` restricted to a fixed-magnetization sector.
    Canonical,
    /// `exp(-beta H_blk)` over all block configurations.
    GrandCanonical,
    /// Uniform on the sector (the canonical measure of the trivial energy).
    Auxiliary,
}

/// Observables supported by the local-equilibrium average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `(eta_c - eta_{c+1})^2` on the central-right bond of the block.
    D0Sq,
    /// `eta_c * eta_{c+1}` on the same bond.
    CentralPair,
}

impl Observable {
    fn eval(&self, eta: &[i8]) -> f64 {
        let c = eta.len() / 2;
        match self {
            Observable::D0Sq => {
                let d = (eta[c] - eta[c + 1]) as f64;
                d * d
            }
            Observable::CentralPair => (eta[c] as f64) * (eta[c + 1] as f64),
        }
    }
}

/// An exactly enumerated probability measure on block configurations.
#[derive(Debug, Clone)]
pub struct BlockMeasure {
    pub ell: usize,
    pub kind: MeasureKind,
    /// Block magnetization (canonical/auxiliary kinds only).
    pub m: Option<f64>,
    pub states: Vec<Vec<i8>>,
    pub weights: Vec<f64>,
    /// Partition function before normalization.
    pub z: f64,
}

/// Block Hamiltonian `-1/2 sum_{u,v} kappa(u-v) eta_u eta_v` over the open
/// block (no wrap: offsets are plain integer differences, small against the
/// kernel's parent lattice).
pub fn block_hamiltonian(eta: &[i8], kernel: &KacKernel) -> f64 {
    let s = eta.len();
    let mut acc = 0.0;
    for u in 0..s {
        for v in 0..s {
            acc += kernel.weight(u as i64 - v as i64) * (eta[u] * eta[v]) as f64;
        }
    }
    -0.5 * acc
}

fn sector_spin_sum(ell: usize, m: f64) -> Result<i64> {
    let sites = 2 * ell + 1;
    let target = m * sites as f64;
    let spin_sum = target.round() as i64;
    if (target - spin_sum as f64).abs() > 1e-9
        || spin_sum.abs() > sites as i64
        || (spin_sum + sites as i64) % 2 != 0
    {
        return Err(Error::EmptySector {
            sites,
            spin_sum,
        });
    }
    Ok(spin_sum)
}

/// Enumerates a block measure. For canonical/auxiliary kinds `m` must lie in
/// the magnetization mesh `{-1, -1 + 2/(2l+1), ..., 1}`.
pub fn enumerate_block(
    ell: usize,
    m: f64,
    kernel: &KacKernel,
    beta: f64,
    kind: MeasureKind,
) -> Result<BlockMeasure> {
    let sites = 2 * ell + 1;
    if sites > ENUMERATION_CAP {
        return Err(Error::SectorTooLarge(sites));
    }
    let (states, m_stored) = match kind {
        MeasureKind::GrandCanonical => {
            let mut all = Vec::with_capacity(1 << sites);
            for ups in 0..=sites {
                all.extend(enumerate_fixed_weight(sites, ups));
            }
            (all, None)
        }
        _ => {
            let spin_sum = sector_spin_sum(ell, m)?;
            let ups = ((spin_sum + sites as i64) / 2) as usize;
            (enumerate_fixed_weight(sites, ups), Some(m))
        }
    };
    let weights: Vec<f64> = match kind {
        MeasureKind::Auxiliary => vec![1.0; states.len()],
        _ => states
            .iter()
            .map(|eta| (-beta * block_hamiltonian(eta, kernel)).exp())
            .collect(),
    };
    let z: f64 = weights.iter().sum();
    let weights = weights.iter().map(|w| w / z).collect();
    Ok(BlockMeasure {
        ell,
        kind,
        m: m_stored,
        states,
        weights,
        z,
    })
}

impl BlockMeasure {
    pub fn expectation(&self, f: &dyn Fn(&[i8]) -> f64) -> f64 {
        self.states
            .iter()
            .zip(&self.weights)
            .map(|(eta, w)| w * f(eta))
            .sum()
    }
}

/// Local-equilibrium average of `psi` under the canonical block measure.
pub fn phi(ell: usize, m: f64, kernel: &KacKernel, beta: f64, psi: Observable) -> Result<f64> {
    let mu = enumerate_block(ell, m, kernel, beta, MeasureKind::Canonical)?;
    Ok(mu.expectation(&|eta| psi.eval(eta)))
}

/// Closed form of the squared bond difference under the uniform sector
/// measure: `(2L+1)/L * (1 - m^2)`.
pub fn d0sq_closed_form(big_l: usize, m: f64) -> f64 {
    let l = big_l as f64;
    (2.0 * l + 1.0) / l * (1.0 - m * m)
}

/// Closed-form exchangeable two-point function `c_L(m) = ((2L+1) m^2 - 1) / (2L)`.
pub fn two_point(big_l: usize, m: f64) -> f64 {
    let l = big_l as f64;
    ((2.0 * l + 1.0) * m * m - 1.0) / (2.0 * l)
}

/// Quadratic coefficients of the closed form: `phi(m) = a0 + a2 m^2`.
pub fn d0sq_coefficients(big_l: usize) -> (f64, f64) {
    let l = big_l as f64;
    (2.0 + 1.0 / l, -2.0 - 1.0 / l)
}

/// Total-variation distance between two measures on the same sector.
pub fn tv_distance(mu: &BlockMeasure, nu: &BlockMeasure) -> Result<f64> {
    if mu.states.len() != nu.states.len() || mu.states != nu.states {
        return Err(Error::SectorMismatch);
    }
    Ok(0.5
        * mu.weights
            .iter()
            .zip(&nu.weights)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Block exchange energy for an internal bond swap.
fn block_exchange_energy(eta: &[i8], kernel: &KacKernel, bond: usize) -> f64 {
    let d = (eta[bond] - eta[bond + 1]) as f64;
    if d == 0.0 {
        return 0.0;
    }
    // Open-block analogue of the lattice identity: cross terms only.
    let mut diff = 0.0;
    for (j, &s) in eta.iter().enumerate() {
        if j == bond || j == bond + 1 {
            continue;
        }
        diff += (kernel.weight(bond as i64 - j as i64)
            - kernel.weight(bond as i64 + 1 - j as i64))
            * s as f64;
    }
    d * diff
}

/// Internal bonds entering the local Dirichlet form: `(j, j+1)` for
/// `|j| <= ell - 1` in centered coordinates, i.e. `ell` through `... `
/// excluding the outermost left bond (for `ell = 1` this is exactly the
/// central-right bond carrying the `D0Sq` observable).
fn internal_bonds(ell: usize) -> std::ops::Range<usize> {
    1..2 * ell
}

/// Bond-summed local Dirichlet form
/// `sum_j 1/4 int c_j (g(eta^{j,j+1}) - g(eta))^2 dmu_gc`.
pub fn dirichlet_form(
    ell: usize,
    kernel: &KacKernel,
    beta: f64,
    g: &dyn Fn(&[i8]) -> f64,
) -> Result<f64> {
    let gc = enumerate_block(ell, 0.0, kernel, beta, MeasureKind::GrandCanonical)?;
    let mut acc = 0.0;
    for (eta, w) in gc.states.iter().zip(&gc.weights) {
        for bond in internal_bonds(ell) {
            let rate = heat_bath(beta * block_exchange_energy(eta, kernel, bond));
            let mut swapped = eta.clone();
            swapped.swap(bond, bond + 1);
            let dg = g(&swapped) - g(eta);
            acc += 0.25 * w * rate * dg * dg;
        }
    }
    Ok(acc)
}

/// Fisher information `I(f) = D(sqrt f)` of a probability density `f`
/// relative to the grand-canonical block measure.
pub fn fisher(ell: usize, kernel: &KacKernel, beta: f64, density: &dyn Fn(&[i8]) -> f64) -> Result<f64> {
    let gc = enumerate_block(ell, 0.0, kernel, beta, MeasureKind::GrandCanonical)?;
    let total: f64 = gc
        .states
        .iter()
        .zip(&gc.weights)
        .map(|(eta, w)| w * density(eta))
        .sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::UnnormalizedDensity(total));
    }
    dirichlet_form(ell, kernel, beta, &|eta| density(eta).max(0.0).sqrt())
}

/// Exact relative entropy `H(mu | nu)` on a common enumerated space.
pub fn relative_entropy(mu: &BlockMeasure, nu: &BlockMeasure) -> Result<f64> {
    if mu.states != nu.states {
        return Err(Error::SectorMismatch);
    }
    let mut h = 0.0;
    for (i, (&p, &q)) in mu.weights.iter().zip(&nu.weights).enumerate() {
        if p > 0.0 {
            if q == 0.0 {
                return Err(Error::SupportViolation(i));
            }
            h += p * (p / q).ln();
        }
    }
    Ok(h.max(0.0))
}

/// Both sides of the entropy inequality
/// `E_mu[F] <= (1/a) H(mu|nu) + (1/a) log E_nu[exp(a F)]`.
pub fn entropy_inequality_check(
    mu: &BlockMeasure,
    nu: &BlockMeasure,
    f: &dyn Fn(&[i8]) -> f64,
    a: f64,
) -> Result<(f64, f64)> {
    assert!(a > 0.0);
    let h = relative_entropy(mu, nu)?;
    let lhs = mu.expectation(f);
    // log E_nu[e^{aF}] with max-shift for stability
    let vals: Vec<f64> = nu.states.iter().map(|eta| a * f(eta)).collect();
    let vmax = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_mgf = vmax
        + nu.weights
            .iter()
            .zip(&vals)
            .map(|(w, v)| w * (v - vmax).exp())
            .sum::<f64>()
            .ln();
    let rhs = h / a + log_mgf / a;
    Ok((lhs, rhs))
}

/// Magnetization mesh of a block: `-1, -1 + 2/(2l+1), ..., 1`.
pub fn magnetization_mesh(ell: usize) -> Vec<f64> {
    let sites = 2 * ell + 1;
    (0..=sites)
        .map(|ups| (2 * ups as i64 - sites as i64) as f64 / sites as f64)
        .collect()
}
