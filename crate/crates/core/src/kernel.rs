//! Discretized Kac interaction kernel on the periodic lattice.
//!
//! The kernel is `kappa(z) = gamma * K(gamma z)` for a smooth base profile
//! `K`, truncated where it falls below `1e-12` of its peak, folded onto the
//! ring and renormalized so the weights sum to one exactly. The renormalized
//! weights *are* the model kernel: every downstream formula (exchange
//! energies, smoothed fields, symbols) uses them, never the raw profile.

use crate::error::{Error, Result};

/// Base profile for the Kac kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `exp(-u^2/2) / sqrt(2 pi)`, unit mass, second moment 1.
    Gaussian,
    /// `(1 + cos(pi u)) / 2` on `[-1, 1]`, second moment `1/3 - 2/pi^2`.
    RaisedCosine,
    /// `(1 - |u|)_+`, second moment `1/6`.
    Triangular,
}

impl Profile {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "gaussian" => Ok(Profile::Gaussian),
            "raised_cosine" | "raised-cosine" => Ok(Profile::RaisedCosine),
            "triangular" => Ok(Profile::Triangular),
            other => Err(Error::UnsupportedProfile(other.to_string())),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Gaussian => "gaussian",
            Profile::RaisedCosine => "raised_cosine",
            Profile::Triangular => "triangular",
        }
    }

    /// Profile value at `u`.
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            Profile::Gaussian => (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt(),
            Profile::RaisedCosine => {
                if u.abs() >= 1.0 {
                    0.0
                } else {
                    0.5 * (1.0 + (std::f64::consts::PI * u).cos())
                }
            }
            Profile::Triangular => (1.0 - u.abs()).max(0.0),
        }
    }

    /// Continuum second moment `\int u^2 K(u) du` in closed form.
    pub fn second_moment(&self) -> f64 {
        match self {
            Profile::Gaussian => 1.0,
            Profile::RaisedCosine => {
                1.0 / 3.0 - 2.0 / (std::f64::consts::PI * std::f64::consts::PI)
            }
            Profile::Triangular => 1.0 / 6.0,
        }
    }

    /// Sup norm of the profile.
    pub fn sup_norm(&self) -> f64 {
        match self {
            Profile::Gaussian => 1.0 / (2.0 * std::f64::consts::PI).sqrt(),
            Profile::RaisedCosine => 1.0,
            Profile::Triangular => 1.0,
        }
    }
}

/// Relative floor below which profile values are truncated to zero.
const TRUNCATION: f64 = 1e-12;

/// Normalized, symmetric interaction weights on the ring of `2N+1` sites.
#[derive(Debug, Clone)]
pub struct KacKernel {
    pub profile: Profile,
    pub gamma: f64,
    /// Number of lattice sites (odd).
    pub sites: usize,
    /// `weights[z]` for circular offsets `z = 0..sites`, `weights[z] = weights[sites - z]`.
    weights: Vec<f64>,
    /// Half-width of the truncated support: `weights[z] == 0` for `half_support < z < sites - half_support`.
    pub half_support: usize,
    /// Whether the raw support exceeded the ring and had to be folded.
    pub wrapped: bool,
    /// Discrete second moment of the renormalized weights.
    pub second_moment_discrete: f64,
    /// Continuum second moment of the base profile.
    pub second_moment_cont: f64,
}

/// Builds the renormalized kernel for `2N+1` sites.
pub fn build_kernel(profile: Profile, gamma: f64, n_half: usize) -> Result<KacKernel> {
    if !(gamma > 0.0 && gamma < 0.25) {
        return Err(Error::GammaOutOfRange(gamma));
    }
    if n_half < 2 {
        return Err(Error::LatticeTooSmall(n_half));
    }
    let sites = 2 * n_half + 1;
    let floor = TRUNCATION * profile.sup_norm();

    // Raw half-width of the truncated profile in lattice units.
    let mut raw_half = 0usize;
    while profile.eval(gamma * (raw_half as f64 + 1.0)) >= floor {
        raw_half += 1;
        if raw_half > 64 * sites {
            break;
        }
    }
    let wrapped = raw_half > n_half;

    // Fold the truncated profile onto the ring.
    let mut weights = vec![0.0f64; sites];
    for z in -(raw_half as i64)..=(raw_half as i64) {
        let v = profile.eval(gamma * z as f64);
        if v < floor {
            continue;
        }
        let idx = z.rem_euclid(sites as i64) as usize;
        weights[idx] += gamma * v;
    }
    let total: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= total;
    }
    // Exact evenness: symmetrize to kill folding round-off.
    for z in 1..=n_half {
        let s = 0.5 * (weights[z] + weights[sites - z]);
        weights[z] = s;
        weights[sites - z] = s;
    }
    let resum: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= resum;
    }

    let half_support = raw_half.min(n_half);
    // Second moment of the renormalized weights, with the signed offset.
    let mut m2 = 0.0;
    for z in 1..=n_half {
        m2 += 2.0 * (gamma * z as f64) * (gamma * z as f64) * weights[z];
    }

    Ok(KacKernel {
        profile,
        gamma,
        sites,
        weights,
        half_support,
        wrapped,
        second_moment_discrete: m2,
        second_moment_cont: profile.second_moment(),
    })
}

impl KacKernel {
    /// Weight at circular offset `z` (any integer).
    #[inline]
    pub fn weight(&self, z: i64) -> f64 {
        self.weights[z.rem_euclid(self.sites as i64) as usize]
    }

    /// `kappa(0)`.
    #[inline]
    pub fn w0(&self) -> f64 {
        self.weights[0]
    }

    /// `kappa(1)`.
    #[inline]
    pub fn w1(&self) -> f64 {
        self.weights[1]
    }

    /// Raw weight table indexed by offset `0..sites`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Kernel transform `theta(k) = sum_m kappa(m) e^{-2 pi i k m / sites}`
    /// (real by symmetry).
    pub fn transform(&self, k: i64) -> f64 {
        let n = self.sites as f64;
        let mut s = self.weights[0];
        for z in 1..=self.half_support {
            let c = (2.0 * std::f64::consts::PI * k as f64 * z as f64 / n).cos();
            s += 2.0 * self.weights[z] * c;
        }
        s
    }

    /// Smooths a lattice function: `(out)[i] = sum_j kappa(i-j) f[j]`.
    pub fn smooth(&self, f: &[f64]) -> Vec<f64> {
        assert_eq!(f.len(), self.sites);
        let n = self.sites;
        let w = self.half_support as i64;
        let mut out = vec![0.0; n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for z in -w..=w {
                let j = (i as i64 + z).rem_euclid(n as i64) as usize;
                s += self.weight(z) * f[j];
            }
            *o = s;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalization_is_exact() {
        for &(p, g, n) in &[
            (Profile::Gaussian, 0.1, 100usize),
            (Profile::RaisedCosine, 0.2, 50),
            (Profile::Triangular, 0.05, 400),
        ] {
            let k = build_kernel(p, g, n).unwrap();
            let sum: f64 = k.weights().iter().sum();
            assert!((sum - 1.0).abs() < 1e-14, "sum = {sum}");
        }
    }

    #[test]
    fn symmetry_and_nonnegativity() {
        for &p in &[Profile::Gaussian, Profile::RaisedCosine, Profile::Triangular] {
            let k = build_kernel(p, 0.15, 60).unwrap();
            for z in 0..k.sites as i64 {
                assert_eq!(k.weight(z), k.weight(-z));
                assert!(k.weight(z) >= 0.0);
            }
        }
    }

    #[test]
    fn gaussian_second_moment_near_continuum() {
        // gamma = 0.05, N = 400: discrete second moment within 2% of 1.
        let k = build_kernel(Profile::Gaussian, 0.05, 400).unwrap();
        assert!(
            (k.second_moment_discrete - 1.0).abs() < 0.02,
            "m2_gamma = {}",
            k.second_moment_discrete
        );
    }

    #[test]
    fn second_moment_converges_along_gamma_sequence() {
        for &p in &[Profile::Gaussian, Profile::RaisedCosine, Profile::Triangular] {
            let mut errs = Vec::new();
            for &g in &[0.2, 0.1, 0.05] {
                let k = build_kernel(p, g, 600).unwrap();
                errs.push((k.second_moment_discrete - k.second_moment_cont).abs());
            }
            // smooth profiles are already at rounding level for every gamma
            assert!(
                errs[2] <= errs[0].max(1e-9),
                "{p:?}: errors not shrinking: {errs:?}"
            );
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(build_kernel(Profile::Gaussian, 0.3, 100).is_err());
        assert!(build_kernel(Profile::Gaussian, 0.0, 100).is_err());
        assert!(build_kernel(Profile::Gaussian, 0.1, 1).is_err());
        assert!(Profile::parse("lorentzian").is_err());
    }

    #[test]
    fn wraps_when_support_exceeds_lattice() {
        // gamma = 0.2 gaussian has raw half-width ~37 sites; N = 5 forces folding.
        let k = build_kernel(Profile::Gaussian, 0.2, 5).unwrap();
        assert!(k.wrapped);
        let sum: f64 = k.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-14);
    }

    #[test]
    fn transform_at_zero_is_one() {
        let k = build_kernel(Profile::Gaussian, 0.1, 80).unwrap();
        assert!((k.transform(0) - 1.0).abs() < 1e-13);
        // |theta(k)| <= 1 for all k.
        for kk in 1..=20 {
            assert!(k.transform(kk).abs() <= 1.0 + 1e-13);
        }
    }
}
