//! Lattice Fourier calculus on the unit torus: transforms, discrete symbols,
//! Sobolev norms, the bi-Laplacian semigroup, and the noise symbol.
//!
//! The lattice has an odd number of sites `n = 2N+1` with spacing
//! `eps = 1/n`, so the mode set is `k = -N..N` with no Nyquist ambiguity and
//! `dft`/`idft` invert each other exactly:
//!
//! ```text
//! u_hat(k) = eps * sum_j u(x_j) e^{-2 pi i k x_j},    u(x_j) = sum_k u_hat(k) e^{2 pi i k x_j}.
//! ```

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::kernel::KacKernel;

/// Complex Fourier coefficients indexed by signed mode `k in [-K, K]`.
#[derive(Debug, Clone)]
pub struct SpectralField {
    /// Coefficient of mode `k` lives at `coeffs[k + K]`.
    coeffs: Vec<Complex64>,
    /// Max mode index `K`.
    pub k_max: usize,
    /// Real-space length the field came from (`2K+1` for lattice fields).
    pub real_space_len: usize,
}

impl SpectralField {
    pub fn zero(k_max: usize) -> SpectralField {
        SpectralField {
            coeffs: vec![Complex64::new(0.0, 0.0); 2 * k_max + 1],
            k_max,
            real_space_len: 2 * k_max + 1,
        }
    }

    #[inline]
    pub fn coeff(&self, k: i64) -> Complex64 {
        debug_assert!(k.unsigned_abs() as usize <= self.k_max);
        self.coeffs[(k + self.k_max as i64) as usize]
    }

    #[inline]
    pub fn coeff_mut(&mut self, k: i64) -> &mut Complex64 {
        &mut self.coeffs[(k + self.k_max as i64) as usize]
    }

    pub fn modes(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let k_max = self.k_max as i64;
        self.coeffs
            .iter()
            .enumerate()
            .map(move |(i, &c)| (i as i64 - k_max, c))
    }

    /// Max Hermitian-symmetry defect `|u_hat(-k) - conj(u_hat(k))|`.
    pub fn hermitian_defect(&self) -> f64 {
        let mut worst: f64 = self.coeff(0).im.abs();
        for k in 1..=self.k_max as i64 {
            worst = worst.max((self.coeff(-k) - self.coeff(k).conj()).norm());
        }
        worst
    }

    /// Evaluates the trigonometric extension at an arbitrary torus point.
    pub fn eval(&self, x: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, c) in self.modes() {
            let phase = 2.0 * std::f64::consts::PI * k as f64 * x;
            acc += c * Complex64::new(phase.cos(), phase.sin());
        }
        acc
    }

    /// `sum_k |u_hat(k)|^2` (equals `eps * sum |u|^2` by Parseval).
    pub fn energy(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Forward transform of a real lattice field of odd length.
pub fn dft(values: &[f64]) -> Result<SpectralField> {
    let buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    dft_complex(buf)
}

/// Forward transform of a complex lattice field of odd length.
pub fn dft_complex(mut buf: Vec<Complex64>) -> Result<SpectralField> {
    let n = buf.len();
    if n % 2 == 0 {
        return Err(Error::SizeMismatch { left: n, right: n + 1 });
    }
    let k_max = n / 2;
    let eps = 1.0 / n as f64;
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
    for (idx, &v) in buf.iter().enumerate() {
        // FFT bin `idx` is mode `idx` for idx <= K, mode `idx - n` above.
        let k = if idx <= k_max { idx as i64 } else { idx as i64 - n as i64 };
        coeffs[(k + k_max as i64) as usize] = v * eps;
    }
    Ok(SpectralField {
        coeffs,
        k_max,
        real_space_len: n,
    })
}

/// Inverse transform back to the lattice (complex output; imaginary parts
/// are rounding noise for Hermitian inputs).
pub fn idft(field: &SpectralField) -> Vec<Complex64> {
    let n = field.real_space_len;
    let k_max = field.k_max;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for (k, c) in field.modes() {
        let idx = k.rem_euclid(n as i64) as usize;
        buf[idx] = c;
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    let _ = k_max;
    buf
}

/// Inverse transform, real part (asserts small imaginary residue in debug).
pub fn idft_real(field: &SpectralField) -> Vec<f64> {
    let buf = idft(field);
    debug_assert!(
        buf.iter().map(|c| c.im.abs()).fold(0.0f64, f64::max) < 1e-9,
        "imaginary residue in idft of a Hermitian field"
    );
    buf.into_iter().map(|c| c.re).collect()
}

/// Discrete symbols on spacing `eps`.
#[derive(Debug, Clone, Copy)]
pub struct SymbolTable {
    pub eps: f64,
}

impl SymbolTable {
    pub fn new(eps: f64) -> SymbolTable {
        SymbolTable { eps }
    }

    /// Discrete Laplacian symbol `(4/eps^2) sin^2(pi k eps)`.
    #[inline]
    pub fn lap(&self, k: i64) -> f64 {
        let s = (std::f64::consts::PI * k as f64 * self.eps).sin();
        4.0 / (self.eps * self.eps) * s * s
    }

    /// Discrete bi-Laplacian symbol, the square of [`SymbolTable::lap`].
    #[inline]
    pub fn bilap(&self, k: i64) -> f64 {
        let l = self.lap(k);
        l * l
    }

    /// Forward-difference symbol `(e^{2 pi i k eps} - 1)/eps`; its squared
    /// modulus equals the Laplacian symbol.
    #[inline]
    pub fn forward_diff(&self, k: i64) -> Complex64 {
        let phase = 2.0 * std::f64::consts::PI * k as f64 * self.eps;
        (Complex64::new(phase.cos(), phase.sin()) - 1.0) / self.eps
    }

    /// Noise symbol `q(k) = sigma_tilde_sq |D(k)|^2 theta(k)^2`.
    pub fn noise(&self, k: i64, kernel: &KacKernel, sigma_tilde_sq: f64) -> f64 {
        let th = kernel.transform(k);
        sigma_tilde_sq * self.lap(k) * th * th
    }
}

/// Empirical envelope constants for the bi-Laplacian symbol bounds over
/// `1 <= |k| <= k_max`:
/// `c k^4 <= bilap(k) <= C k^4` and `|bilap(k) - (2 pi k)^4| <= C_cons eps^2 k^6`.
pub fn symbol_check(eps: f64, k_max: usize) -> (f64, f64, f64) {
    let t = SymbolTable::new(eps);
    let mut c_lo = f64::INFINITY;
    let mut c_hi: f64 = 0.0;
    let mut c_cons: f64 = 0.0;
    for k in 1..=k_max as i64 {
        let k4 = (k as f64).powi(4);
        let k6 = (k as f64).powi(6);
        let b = t.bilap(k);
        c_lo = c_lo.min(b / k4);
        c_hi = c_hi.max(b / k4);
        let cont = (2.0 * std::f64::consts::PI * k as f64).powi(4);
        c_cons = c_cons.max((b - cont).abs() / (eps * eps * k6));
    }
    (c_lo, c_hi, c_cons)
}

/// Discrete Sobolev norm with the Laplacian-symbol weight, the
/// continuum-weight variant, and their ratio.
#[derive(Debug, Clone, Copy)]
pub struct SobolevNorms {
    pub discrete: f64,
    pub continuum: f64,
}

pub fn sobolev_norm(field: &SpectralField, eps: f64, s: f64) -> SobolevNorms {
    let t = SymbolTable::new(eps);
    let mut d = 0.0;
    let mut c = 0.0;
    for (k, v) in field.modes() {
        let e = v.norm_sqr();
        d += (1.0 + t.lap(k)).powf(s) * e;
        c += (1.0 + (k * k) as f64).powf(s) * e;
    }
    SobolevNorms {
        discrete: d.sqrt(),
        continuum: c.sqrt(),
    }
}

/// Applies the discrete bi-Laplacian semigroup `exp(-t nu lap(k)^2)` per mode.
pub fn semigroup_apply(field: &SpectralField, eps: f64, t: f64, nu: f64) -> SpectralField {
    assert!(t >= 0.0 && nu > 0.0);
    let sym = SymbolTable::new(eps);
    let mut out = field.clone();
    for k in -(field.k_max as i64)..=(field.k_max as i64) {
        let factor = (-t * nu * sym.bilap(k)).exp();
        *out.coeff_mut(k) = field.coeff(k) * factor;
    }
    out
}

/// Numeric checks of the semigroup estimates.
#[derive(Debug, Clone)]
pub struct SemigroupReport {
    /// `sup_{|k| <= K, t <= T} |exp(-t bilap(k)) - exp(-t (2 pi k)^4)|` per eps.
    pub symbol_convergence: Vec<(f64, f64)>,
    /// Worst `2^q * int_0^T exp(-2(T-r) bilap(k)) k^2 dr` over dyadic blocks.
    pub block_integral_constant: f64,
    /// Worst increment-bound constant over dyadic blocks and time pairs.
    pub increment_constant: f64,
}

/// Verifies the semigroup estimates numerically for a sweep of spacings.
pub fn semigroup_estimates(eps_list: &[f64], t_end: f64, theta: f64, k_compact: usize) -> SemigroupReport {
    assert!(theta > 0.0 && theta < 0.25);
    let mut symbol_convergence = Vec::new();
    let mut block_c: f64 = 0.0;
    let mut inc_c: f64 = 0.0;
    for &eps in eps_list {
        let t = SymbolTable::new(eps);
        // (i) symbol convergence on a compact mode set
        let mut worst: f64 = 0.0;
        for k in 0..=k_compact as i64 {
            let b = t.bilap(k);
            let cont = (2.0 * std::f64::consts::PI * k as f64).powi(4);
            for j in 0..=100 {
                let s = t_end * j as f64 / 100.0;
                worst = worst.max(((-s * b).exp() - (-s * cont).exp()).abs());
            }
        }
        symbol_convergence.push((eps, worst));

        // (ii) dyadic block integral: int_0^T e^{-2(T-r) B} k^2 dr = k^2 (1 - e^{-2TB}) / (2B)
        let n = (1.0 / eps) as i64;
        let mut q = -1i32;
        while (1i64 << (q.max(0) as u32)) <= n / 2 {
            let k_lo = if q < 0 { 0 } else { 1i64 << q };
            let k_hi = ((2 * k_lo).max(1) - 1).min(n / 2);
            for k in k_lo..=k_hi {
                if k == 0 {
                    continue;
                }
                let b = t.bilap(k);
                let integral = (k * k) as f64 * (1.0 - (-2.0 * t_end * b).exp()) / (2.0 * b);
                block_c = block_c.max(integral * (1 << q.max(0)) as f64);
                // (iii) increment bounds on a few (s, t) pairs
                for &(s0, t0) in &[(0.0, t_end / 4.0), (t_end / 4.0, t_end / 2.0), (t_end / 2.0, t_end)] {
                    let dt = t0 - s0;
                    if dt <= 0.0 {
                        continue;
                    }
                    // int_s^t e^{-2(t-r)B} k^2 dr
                    let i2 = (k * k) as f64 * (1.0 - (-2.0 * dt * b).exp()) / (2.0 * b);
                    let denom = dt.powf(theta) * 2.0f64.powf(-(q.max(0) as f64) * (2.0 - 4.0 * theta));
                    inc_c = inc_c.max(i2 / denom);
                }
            }
            q += 1;
            if q > 40 {
                break;
            }
        }
    }
    SemigroupReport {
        symbol_convergence,
        block_integral_constant: block_c,
        increment_constant: inc_c,
    }
}

/// Applies the discrete Laplacian in real space (second difference / eps^2).
pub fn discrete_laplacian(values: &[f64], eps: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let l = if i == 0 { n - 1 } else { i - 1 };
        let r = if i + 1 == n { 0 } else { i + 1 };
        out[i] = (values[r] - 2.0 * values[i] + values[l]) / (eps * eps);
    }
    out
}
