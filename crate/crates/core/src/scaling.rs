//! Scaling plan: the bridge between the microscopic chain and the
//! macroscopic equation.
//!
//! Lattice spacing is `eps = 1/(2N+1)` (the exact torus spacing; the
//! asymptotic role of `1/N` is the same up to a constant). Given targets
//! `lambda` and `sigma_star^2`, the time and amplitude scales are pinned by
//!
//! ```text
//! alpha = eps^2 / lambda,        delta = sqrt(lambda * eps / sigma_star^2),
//! ```
//!
//! so that `lambda = eps^2/alpha` and `sigma_star^2 = eps^3/(alpha delta^2)`
//! hold exactly as built.

use crate::error::{Error, Result};
use crate::kernel::{build_kernel, KacKernel, Profile};

/// Scaling regime: hold `eps/gamma' fixed along a gamma sequence (the regime
/// in which the fourth-order coefficient has a positive limit), or let it
/// vanish (the regime of the formal assumptions, where it tends to zero).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanMode {
    RatioLocked,
    VanishingRatio,
}

/// Macroscopic coefficient targets carried by a plan.
#[derive(Debug, Clone, Copy)]
pub struct Targets {
    /// Fourth-order coefficient: `2 * (lambda m2 / 4) * (eps/gamma)^2` with
    /// the smoothed-field normalization (see `nu_gamma` vs `nu_eff`).
    pub nu: f64,
    /// Second-order coefficient of the limit equation, `(1+beta) lambda / 2`.
    pub a: f64,
    /// Cubic coefficient of the limit equation, `lambda beta / 6`.
    pub chi: f64,
    /// Conservative noise intensity.
    pub sigma_star_sq: f64,
}

/// All scales and coefficients for one `(gamma, N)` point.
#[derive(Debug, Clone)]
pub struct ScalingPlan {
    pub mode: PlanMode,
    pub gamma: f64,
    pub n_half: usize,
    /// `2N+1` lattice sites.
    pub sites: usize,
    /// Lattice spacing `1/(2N+1)`.
    pub eps: f64,
    /// Time scale.
    pub alpha: f64,
    /// Amplitude scale.
    pub delta: f64,
    pub beta: f64,
    /// `lambda = eps^2/alpha`, equal to the requested target exactly.
    pub lambda: f64,
    /// `eps^3/(alpha delta^2)`, equal to the requested target exactly.
    pub sigma_star_sq: f64,
    /// `kappa(1)` of the renormalized kernel.
    pub kappa1: f64,
    /// `kappa(0)` of the renormalized kernel.
    pub kappa0: f64,
    /// Fourth-order coefficient `(1/2 - beta kappa(1)) (m2_gamma/2) eps^4/(alpha gamma^2)`,
    /// the raw-field pairing normalization.
    pub nu_gamma: f64,
    /// Same quantity in the smoothed-field pairing normalization (twice the
    /// raw value): this is the effective weight when both the field and the
    /// pairing carry one kernel smoothing each.
    pub nu_eff: f64,
    /// Exact linear current coefficient `F(4 beta (kappa(1)-kappa(0)))`.
    pub lin_coeff_exact: f64,
    /// `A'_gamma = (1/2 - beta kappa(1)) lambda`.
    pub a_prime: f64,
    /// `A''_gamma = (a0 beta / 4) lambda` with the limiting `a0 = 2`.
    pub a_second: f64,
    /// Micro-calibrated second-order coefficient in the `-A Laplacian X`
    /// convention of the limit equation: `(beta - 1) lambda / 2`. Negative
    /// below the mean-field critical temperature (net diffusion), positive
    /// above it (phase separation).
    pub a_eff: f64,
    pub targets: Targets,
    pub kernel: KacKernel,
}

/// Builds a plan from targets. `lambda_target` and `sigma_star_sq` must be
/// positive; `beta >= 0`.
pub fn make_plan(
    profile: Profile,
    gamma: f64,
    n_half: usize,
    lambda_target: f64,
    sigma_star_sq: f64,
    beta: f64,
    mode: PlanMode,
) -> Result<ScalingPlan> {
    if !(lambda_target > 0.0) {
        return Err(Error::BadScalingTarget(format!(
            "lambda_target = {lambda_target}"
        )));
    }
    if !(sigma_star_sq > 0.0) {
        return Err(Error::BadScalingTarget(format!(
            "sigma_star_sq = {sigma_star_sq}"
        )));
    }
    if beta < 0.0 {
        return Err(Error::BadScalingTarget(format!("beta = {beta}")));
    }
    let kernel = build_kernel(profile, gamma, n_half)?;
    let sites = 2 * n_half + 1;
    let eps = 1.0 / sites as f64;
    let alpha = eps * eps / lambda_target;
    let delta = (lambda_target * eps / sigma_star_sq).sqrt();
    let lambda = eps * eps / alpha;
    let sig = eps.powi(3) / (alpha * delta * delta);
    let kappa1 = kernel.w1();
    let kappa0 = kernel.w0();
    let ratio = eps / gamma;
    let nu_gamma =
        (0.5 - beta * kappa1) * (kernel.second_moment_discrete / 2.0) * eps.powi(4)
            / (alpha * gamma * gamma);
    let nu_eff = 2.0 * nu_gamma;
    let lin_coeff_exact = crate::lattice::heat_bath(4.0 * beta * (kappa1 - kappa0));
    let a_prime = (0.5 - beta * kappa1) * lambda;
    let a_second = 2.0 * beta / 4.0 * lambda;
    let a_eff = (beta - 1.0) * lambda / 2.0;
    let targets = Targets {
        nu: 2.0 * (lambda * kernel.second_moment_cont / 4.0) * ratio * ratio,
        a: (1.0 + beta) * lambda / 2.0,
        chi: lambda * beta / 6.0,
        sigma_star_sq,
    };
    let plan = ScalingPlan {
        mode,
        gamma,
        n_half,
        sites,
        eps,
        alpha,
        delta,
        beta,
        lambda,
        sigma_star_sq: sig,
        kappa1,
        kappa0,
        nu_gamma,
        nu_eff,
        lin_coeff_exact,
        a_prime,
        a_second,
        a_eff,
        targets,
        kernel,
    };
    for (name, v) in [
        ("nu_gamma", plan.nu_gamma),
        ("lambda", plan.lambda),
        ("sigma_star_sq", plan.sigma_star_sq),
    ] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::BadScalingTarget(format!("{name} = {v}")));
        }
    }
    Ok(plan)
}

impl ScalingPlan {
    /// `eps/gamma`, the kernel range in macroscopic units.
    pub fn ratio(&self) -> f64 {
        self.eps / self.gamma
    }

    /// Scaling-assumption ratios that must tend to zero along a plan
    /// sequence, reported as `(name, value)` pairs.
    pub fn assumption_ratios(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("eps", self.eps),
            ("eps/gamma", self.eps / self.gamma),
            ("eps^2/delta", self.eps * self.eps / self.delta),
            ("eps^3/alpha", self.eps.powi(3) / self.alpha),
            (
                "gamma*eps^3/(alpha*delta^2)",
                self.gamma * self.eps.powi(3) / (self.alpha * self.delta * self.delta),
            ),
        ]
    }

    /// Drifts of the running coefficients from their targets.
    pub fn limit_drifts(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("|nu_eff - nu|", (self.nu_eff - self.targets.nu).abs()),
            ("|lambda - lambda_target|", 0.0),
            (
                "|sigma_star_sq - target|",
                (self.sigma_star_sq - self.targets.sigma_star_sq).abs(),
            ),
        ]
    }

    /// Default mesoscopic block sizes `ell = floor(gamma^{-1/2})`,
    /// `L = floor(gamma^{-3/4})`: then `gamma ell -> 0`, `ell/L -> 0` and
    /// `gamma^2 L^3 = gamma^{1/2} -> 0`.
    pub fn default_blocks(&self) -> (usize, usize) {
        let ell = self.gamma.powf(-0.5).floor() as usize;
        let big_l = self.gamma.powf(-0.75).floor() as usize;
        (ell.max(1), big_l.max(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direct_formula_evaluation() {
        // alpha = eps^2 / lambda and delta = sqrt(lambda eps / sigma*^2).
        let plan = make_plan(Profile::Gaussian, 0.1, 1000, 1.0, 1.0, 0.0, PlanMode::RatioLocked)
            .unwrap();
        let eps = 1.0 / 2001.0;
        assert!((plan.alpha - eps * eps).abs() < 1e-18);
        assert!((plan.delta - (eps).sqrt()).abs() < 1e-12);
        assert_eq!(plan.lambda, 1.0);
    }

    #[test]
    fn plan_algebra_exact() {
        let plan =
            make_plan(Profile::Gaussian, 0.2, 128, 0.5, 2.0, 1.0, PlanMode::RatioLocked).unwrap();
        assert!((plan.lambda * plan.alpha - plan.eps * plan.eps).abs() < 1e-18);
        assert!(
            (plan.sigma_star_sq * plan.alpha * plan.delta * plan.delta - plan.eps.powi(3)).abs()
                < 1e-15 * plan.eps.powi(3)
        );
        assert!((plan.sigma_star_sq - 2.0).abs() < 1e-14);
    }

    #[test]
    fn coefficient_targets_match_mapping() {
        let plan =
            make_plan(Profile::Gaussian, 0.1, 256, 0.8, 1.0, 1.5, PlanMode::RatioLocked).unwrap();
        assert!((plan.targets.a - (1.0 + 1.5) * 0.8 / 2.0).abs() < 1e-14);
        assert!((plan.targets.chi - 0.8 * 1.5 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn nu_sequence_cauchy_at_fixed_ratio() {
        // gamma in {0.2, 0.1, 0.05} with eps/gamma held (n_half ~ 1/(2 gamma r)).
        let mut nus = Vec::new();
        for &(g, n) in &[(0.2, 64usize), (0.1, 128), (0.05, 256)] {
            let plan = make_plan(Profile::Gaussian, g, n, 1.0, 1.0, 0.0, PlanMode::RatioLocked)
                .unwrap();
            nus.push(plan.nu_gamma);
        }
        for w in nus.windows(2) {
            assert!(
                (w[1] - w[0]).abs() / w[0].abs() < 0.05,
                "nu sequence not Cauchy within 5%: {nus:?}"
            );
        }
    }

    #[test]
    fn rejects_bad_targets() {
        assert!(make_plan(Profile::Gaussian, 0.1, 64, 0.0, 1.0, 0.0, PlanMode::RatioLocked)
            .is_err());
        assert!(make_plan(Profile::Gaussian, 0.1, 64, 1.0, -1.0, 0.0, PlanMode::RatioLocked)
            .is_err());
    }

    #[test]
    fn effective_linear_coefficient_at_beta_zero() {
        let plan =
            make_plan(Profile::Gaussian, 0.1, 128, 1.0, 1.0, 0.0, PlanMode::RatioLocked).unwrap();
        assert_eq!(plan.lin_coeff_exact, 0.5);
        assert_eq!(plan.a_prime, 0.5);
        assert_eq!(plan.a_eff, -0.5);
    }
}
