//! Large-time log-periodic asymptotics.
//!
//! The engine: for positive sequences a_n ~ a^-n, b_n ~ b^-n, c_n ~ n^-k the
//! series S(t) = sum_n a_n c_n exp(-b_n t) behaves for t -> infinity as
//!
//! ```text
//!   S(t) ~ (log b)^(k-1) (log t)^(-k) t^(-log a/log b)
//!          * sum_m t^(2 pi i m / log b) Gamma(log a/log b - 2 pi i m/log b),
//! ```
//!
//! a pure power law decorated by a log-periodic factor with period log b in
//! log t. The mode coefficients decay like exp(-pi^2 |m| / log b), so a
//! handful of modes saturates binary64.
//!
//! The passage density rides this engine with residues b_k ~ A shape_k and
//! rates lambda_k ~ L p^(-alpha k); the amplitude A comes from the limit of
//! the residue formula, which depends on the regime-scaled limit of Delta_k:
//!
//! * alpha > 1: A = p^(-alpha r) I(0) / ((1-1/p) sum_{n in Z} p^n/(p^(alpha n) - p^-alpha - Delta)^2)
//! * alpha = 1: A = p^(-r) I(0) delta1^2 p^2/(p-1), delta1 = lim k Delta_k
//! * alpha < 1: A = p^(-alpha r) I(0) deltag^2 p^2/(p-1), deltag = lim p^((1-alpha)k) Delta_k
//!
//! with I(0) = (1-1/p) sum_{n=0}^{nu-r-1} p^((alpha-1)n) + p^((alpha-1)(nu-r)) p^-alpha,
//! the limit of the residue numerator. The mean hitting count grows like
//! t^((alpha-1)/alpha) for alpha > 1, saturates for alpha < 1 and grows
//! logarithmically at alpha = 1, always with log-periodic decoration.

use num_complex::Complex64;
use thiserror::Error;

use crate::padic::ModelParams;
use crate::spectrum::{self, SpectrumError};
use crate::transforms::SeriesTolerance;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AsymptoticsError {
    #[error("gamma pole: z = {0} is a nonpositive integer")]
    GammaPole(f64),
    #[error("mode truncation too aggressive: |m|={m} coefficient still {coeff:e} of the m=0 one")]
    ModeTruncation { m: i64, coeff: f64 },
    #[error("asymptote requires t > {0}")]
    TimeTooSmall(f64),
    #[error("residue-numerator limit mismatch: closed form {closed:e} vs ladder {ladder:e}")]
    NumeratorMismatch { closed: f64, ladder: f64 },
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
}

// ---------------------------------------------------------------------------
// Complex gamma (Lanczos, g = 7, 9 terms — the GSL coefficient set)
// ---------------------------------------------------------------------------

const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
];

/// Gamma(z) for complex z, relative error around 1e-13 on the strip the
/// asymptotics need (Re z in [0.1, 30], |Im z| <= 50).
pub fn complex_gamma(z: Complex64) -> Result<Complex64, AsymptoticsError> {
    if z.im == 0.0 && z.re <= 0.0 && z.re.fract() == 0.0 {
        return Err(AsymptoticsError::GammaPole(z.re));
    }
    if z.re < 0.5 {
        // Reflection: Gamma(z) Gamma(1-z) = pi / sin(pi z).
        let pi = std::f64::consts::PI;
        let s = (pi * z).sin();
        if s.norm() == 0.0 {
            return Err(AsymptoticsError::GammaPole(z.re));
        }
        return Ok(pi / (s * complex_gamma(1.0 - z)?));
    }
    let z = z - 1.0;
    let mut acc = Complex64::new(LANCZOS_COEF[0], 0.0);
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (z + i as f64);
    }
    let w = z + LANCZOS_G + 0.5;
    let sqrt_2pi = (2.0 * std::f64::consts::PI).sqrt();
    Ok(sqrt_2pi * w.powc(z + 0.5) * (-w).exp() * acc)
}

// ---------------------------------------------------------------------------
// Lemma-style log-periodic engine
// ---------------------------------------------------------------------------

/// Parameters of a log-periodic asymptote: sequences a_n ~ a^-n, b_n ~ b^-n,
/// c_n ~ n^-k, with `modes` Fourier modes kept on each side of m = 0.
#[derive(Debug, Clone, Copy)]
pub struct LogPeriodicSpec {
    pub a: f64,
    pub b: f64,
    pub k: u32,
    pub modes: u32,
}

impl LogPeriodicSpec {
    pub fn new(a: f64, b: f64, k: u32, modes: u32) -> Self {
        assert!(a > 1.0 && b > 1.0);
        LogPeriodicSpec { a, b, k, modes }
    }
}

/// Value of an asymptote at one time point, with its structural readouts.
#[derive(Debug, Clone, Copy)]
pub struct AsymptoteResult {
    pub value: f64,
    /// Leading power of t (negative for decay).
    pub leading_exponent: f64,
    /// Period of the oscillation in ln t.
    pub log_period: f64,
    pub modes_used: u32,
}

/// Evaluate the log-periodic asymptote of sum a^-n n^-k exp(-b^-n t).
///
/// The full complex mode sum is formed symmetrically; its imaginary residue
/// is checked against 1e-12 of the magnitude before taking the real part.
pub fn log_periodic_sum(spec: &LogPeriodicSpec, t: f64) -> Result<AsymptoteResult, AsymptoticsError> {
    if t <= 1.0 {
        return Err(AsymptoticsError::TimeTooSmall(1.0));
    }
    let ln_b = spec.b.ln();
    let q = spec.a.ln() / ln_b;
    let mode_sum = log_periodic_mode_sum(q, ln_b, spec.modes, t.ln())?;
    let value = ln_b.powi(spec.k as i32 - 1)
        * t.ln().powi(-(spec.k as i32))
        * (-q * t.ln()).exp()
        * mode_sum;
    Ok(AsymptoteResult {
        value,
        leading_exponent: -q,
        log_period: ln_b,
        modes_used: spec.modes,
    })
}

/// sum_{|m| <= M} exp(2 pi i m u / ln b) Gamma(q - 2 pi i m / ln b) as a real
/// number, where u = ln t (or any phase argument).
fn log_periodic_mode_sum(q: f64, ln_b: f64, modes: u32, u: f64) -> Result<f64, AsymptoticsError> {
    let mut acc = complex_gamma(Complex64::new(q, 0.0))?;
    let gamma0 = acc.norm();
    for m in 1..=modes as i64 {
        let theta = 2.0 * std::f64::consts::PI * m as f64 / ln_b;
        let gamma = complex_gamma(Complex64::new(q, -theta))?;
        let phase = Complex64::new(0.0, theta * u).exp();
        acc += phase * gamma + (phase * gamma).conj();
    }
    // Decay check on the last retained coefficient.
    let theta_last = 2.0 * std::f64::consts::PI * (modes as f64) / ln_b;
    let last = complex_gamma(Complex64::new(q, -theta_last))?.norm();
    if last > 1e-14 * gamma0 {
        return Err(AsymptoticsError::ModeTruncation { m: modes as i64, coeff: last / gamma0 });
    }
    if acc.im.abs() > 1e-12 * acc.norm().max(1e-300) {
        // Symmetric pairing keeps the sum real by construction.
        return Err(AsymptoticsError::ModeTruncation { m: 0, coeff: acc.im.abs() });
    }
    Ok(acc.re)
}

/// Smallest mode count whose last coefficient passes the 1e-14 decay guard:
/// |Gamma(q - 2 pi i M/ln b)| falls off like exp(-pi^2 M / ln b).
pub fn modes_for(ln_b: f64) -> u32 {
    ((3.8 * ln_b).ceil() as u32).max(5)
}

/// Direct summation oracle for the engine (used by tests and the acceptance
/// suite): sum_{n >= 1} a^-n n^-k exp(-b^-n t) to machine tail.
pub fn log_periodic_direct_sum(a: f64, b: f64, k: u32, t: f64) -> f64 {
    let mut acc = 0.0;
    for n in 1..10_000i64 {
        let term = a.powi(-(n as i32))
            * (n as f64).powi(-(k as i32))
            * (-b.powi(-(n as i32)) * t).exp();
        acc += term;
        if n > (t.ln() / b.ln()).ceil() as i64 + 60 {
            break;
        }
    }
    acc
}

// ---------------------------------------------------------------------------
// Regime-scaled limits extracted from the ladder
// ---------------------------------------------------------------------------

/// Numeric limits the f-asymptote prefactors need, extrapolated from the
/// spectrum ladder.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumLimits {
    /// Regime-scaled Delta limit: Delta(alpha), lim k Delta_k, or
    /// lim p^((1-alpha)k) Delta_k.
    pub delta: f64,
    /// Cauchy diagnostic from the extrapolation.
    pub diagnostic: f64,
}

/// Extract the regime-scaled Delta limit (k_max = 60 rungs by default
/// upstream; Richardson-style extrapolation happens in [`spectrum::delta_limit`]).
pub fn spectrum_limits(
    params: &ModelParams,
    k_max: u32,
    tol: &SeriesTolerance,
) -> Result<SpectrumLimits, AsymptoticsError> {
    let dl = spectrum::delta_limit(params, k_max, tol)?;
    Ok(SpectrumLimits { delta: dl.value, diagnostic: dl.diagnostic })
}

/// I(0) = (1-1/p) sum_{n=0}^{nu-r-1} p^((alpha-1)n) + p^((alpha-1)(nu-r)) p^-alpha,
/// the k -> infinity limit of the residue numerator (radius-0 scaling).
pub fn residue_numerator_limit(params: &ModelParams) -> f64 {
    let p = params.pf();
    let alpha = params.alpha();
    let span = params.nu() - params.r();
    let mut acc = 0.0;
    for n in 0..span {
        acc += (1.0 - 1.0 / p) * ((alpha - 1.0) * n as f64 * p.ln()).exp();
    }
    acc + ((alpha - 1.0) * span as f64 * p.ln()).exp() * (-alpha * p.ln()).exp()
}

/// Bilateral lattice sum sum_{n in Z} p^n / (p^(alpha n) - p^-alpha - Delta)^2
/// appearing in the alpha > 1 amplitude. The denominator cannot vanish: at
/// n = -1 the bracket equals -Delta != 0, and elsewhere it is bounded away
/// from zero by the lattice spacing.
pub fn bilateral_lattice_sum(params: &ModelParams, delta: f64) -> f64 {
    let p = params.pf();
    let alpha = params.alpha();
    let base = params.pow_p_alpha(-1) + delta; // p^-alpha + Delta
    let mut acc = 0.0;
    // Positive side: terms decay like p^(-(2 alpha - 1) n).
    for n in 0..2000i64 {
        let bracket = (alpha * n as f64 * p.ln()).exp() - base;
        let term = (n as f64 * p.ln()).exp() / (bracket * bracket);
        acc += term;
        if n > 2 && term < 1e-17 * acc {
            break;
        }
    }
    // Negative side: terms decay like p^n.
    for n in 1..2000i64 {
        let bracket = (-alpha * n as f64 * p.ln()).exp() - base;
        let term = (-(n as f64) * p.ln()).exp() / (bracket * bracket);
        acc += term;
        if n > 2 && term < 1e-17 * acc {
            break;
        }
    }
    acc
}

/// Asymptote of the passage density f(t). Regimes:
///
/// * alpha > 1: t^(-(2 alpha - 1)/alpha), engine (a, b, k) = (p^(2a-1), p^a, 0)
/// * alpha = 1: t^-1 / ln^2, engine (p, p, 2)
/// * alpha < 1: t^(-1/alpha), engine (p, p^a, 0)
///
/// with rate constant L = p^(-alpha r)(p^-alpha + Delta(alpha)) for
/// alpha > 1 and L = p^(-alpha(r+1)) otherwise; the value is A * S(L t).
pub fn f_asymptote(
    t: f64,
    params: &ModelParams,
    limits: &SpectrumLimits,
    modes: u32,
) -> Result<AsymptoteResult, AsymptoticsError> {
    let p = params.pf();
    let alpha = params.alpha();
    let i0 = residue_numerator_limit(params);
    let pow_alpha_r = params.pow_p_alpha(-params.r());
    let (amplitude, rate, a, b, k) = if alpha > 1.0 {
        let lattice = bilateral_lattice_sum(params, limits.delta);
        let amp = pow_alpha_r * i0 / ((1.0 - 1.0 / p) * lattice);
        let rate = pow_alpha_r * (params.pow_p_alpha(-1) + limits.delta);
        (amp, rate, p.powf(2.0 * alpha - 1.0), p.powf(alpha), 0u32)
    } else if alpha == 1.0 {
        let amp = pow_alpha_r * i0 * limits.delta * limits.delta * p * p / (p - 1.0);
        let rate = pow_alpha_r * params.pow_p_alpha(-1);
        (amp, rate, p, p, 2u32)
    } else {
        let amp = pow_alpha_r * i0 * limits.delta * limits.delta * p * p / (p - 1.0);
        let rate = pow_alpha_r * params.pow_p_alpha(-1);
        (amp, rate, p, p.powf(alpha), 0u32)
    };
    // Coarse lattices (large ln b) need more modes to satisfy the decay
    // guard; the requested count is a minimum.
    let spec = LogPeriodicSpec::new(a, b, k, modes.max(modes_for(b.ln())));
    let engine = log_periodic_sum(&spec, rate * t)?;
    Ok(AsymptoteResult { value: amplitude * engine.value, ..engine })
}

/// Validate the closed-form residue-numerator limit against the ladder value
/// at a deep rung; a persistent mismatch is reported, not patched.
pub fn check_numerator_limit(
    params: &ModelParams,
    k_probe: u32,
    tol: &SeriesTolerance,
) -> Result<(), AsymptoticsError> {
    let closed = residue_numerator_limit(params);
    let line = spectrum::solve_lambda(k_probe, params, tol)?;
    let b_k = spectrum::residue_b(&line, params, tol)?;
    let deriv = spectrum::secular_derivative(params, &line, tol);
    // b_k = p^((alpha-1) r) I(-mu_k) / |J_r'|; undo the known factors:
    // I(-mu_k) = b_k |J_r'| p^(-(alpha-1) r).
    let ladder = b_k * deriv * params.pow_p_alpha(-params.r()) * params.pf().powf(params.r() as f64);
    // I(-mu_k) -> I(0) with a gap O(mu_k); k_probe >= 30 makes it tiny.
    if (ladder - closed).abs() > 1e-3 * closed.abs() {
        return Err(AsymptoticsError::NumeratorMismatch { closed, ladder });
    }
    Ok(())
}

/// Asymptote of the mean hitting count mu(t). Regimes:
///
/// * alpha > 1: p^r B (1-1/p) t^((alpha-1)/alpha) times the mode sum
///   sum_m exp(i theta_m ln(|a|^-alpha t)) Gamma(1/alpha - i theta_m alpha ln p / (2 pi))
///   / ((alpha-1) ln p + 2 pi i m);
/// * alpha < 1: mu(inf) minus a log-periodic correction decaying like
///   (|a|^-alpha t)^(-(1-alpha)/alpha);
/// * alpha = 1: (p-1)/((p+1) ln p) { ln(t/|a|) + oscillation }.
pub fn mu_asymptote(
    t: f64,
    params: &ModelParams,
    modes: u32,
) -> Result<AsymptoteResult, AsymptoticsError> {
    let p = params.pf();
    let alpha = params.alpha();
    let abs_a = params.abs_a();
    let b = params.b_alpha_r();
    let pr = p.powf(params.r() as f64);
    let ln_p = p.ln();
    let u = t * params.pow_p_alpha(-params.nu()); // |a|^-alpha t
    if u <= 1.0 {
        return Err(AsymptoticsError::TimeTooSmall(params.pow_p_alpha(params.nu())));
    }
    if alpha > 1.0 {
        let mut acc = Complex64::new(0.0, 0.0);
        for m in -(modes as i64)..=(modes as i64) {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / (alpha * ln_p);
            let gamma = complex_gamma(Complex64::new(1.0 / alpha, -theta))?;
            let denom = Complex64::new((alpha - 1.0) * ln_p, 2.0 * std::f64::consts::PI * m as f64);
            let phase = Complex64::new(0.0, theta * u.ln()).exp();
            acc += phase * gamma / denom;
        }
        let value = pr * b * (1.0 - 1.0 / p) * t.powf((alpha - 1.0) / alpha) * acc.re;
        Ok(AsymptoteResult {
            value,
            leading_exponent: (alpha - 1.0) / alpha,
            log_period: alpha * ln_p,
            modes_used: modes,
        })
    } else if alpha < 1.0 {
        let plateau = mu_plateau(params);
        let q = (1.0 - alpha) / alpha;
        let modes = modes.max(modes_for(alpha * ln_p));
        let mode_sum = log_periodic_mode_sum(q, alpha * ln_p, modes, u.ln())?;
        let correction = pr * b * (1.0 - 1.0 / p) * abs_a.powf(alpha - 1.0)
            / (alpha * ln_p)
            * u.powf(-q)
            * mode_sum;
        Ok(AsymptoteResult {
            value: plateau - correction,
            leading_exponent: 0.0,
            log_period: alpha * ln_p,
            modes_used: modes,
        })
    } else {
        // Coefficient of ln t: (p-1)/((p+1) ln p). The |a| dependence enters
        // only through the time shift ln(t/|a|); the term-wise integral of
        // the epsilon series leaves no 1/|a| prefactor (the |a| from the
        // closed-form integral cancels the one in epsilon itself).
        let c1 = (p - 1.0) / ((p + 1.0) * ln_p);
        let w = t / abs_a;
        let mut osc = 0.0;
        for m in 1..=modes as i64 {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / ln_p;
            let gamma = complex_gamma(Complex64::new(1.0, -theta))?;
            let phase = Complex64::new(0.0, theta * w.ln()).exp();
            // Term-wise integral of the epsilon modes: (1/(pi m)) Im[Gamma e^{i theta ln w}].
            osc += (phase * gamma).im / (std::f64::consts::PI * m as f64) * ln_p;
        }
        Ok(AsymptoteResult {
            value: c1 * (w.ln() + osc),
            leading_exponent: 0.0,
            log_period: ln_p,
            modes_used: modes,
        })
    }
}

/// Saturation value of the mean hitting count for alpha < 1:
/// mu(inf) = p^r B_alpha(r) E(0, |a|) in closed form.
pub fn mu_plateau(params: &ModelParams) -> f64 {
    let p = params.pf();
    let alpha = params.alpha();
    assert!(alpha < 1.0);
    let pr = p.powf(params.r() as f64);
    let abs_a = params.abs_a();
    // E(0) = |a|^(alpha-1) (1 - p^-alpha)/(1 - p^(alpha-1)).
    let e0 = abs_a.powf(alpha - 1.0) * (1.0 - p.powf(-alpha)) / (1.0 - p.powf(alpha - 1.0));
    pr * params.b_alpha_r() * e0
}

// ---------------------------------------------------------------------------
// Period-averaged exponent regression
// ---------------------------------------------------------------------------

/// Least-squares slope of ln f versus ln t where ln f is first averaged over
/// windows of one log-period, suppressing the log-periodic wobble.
pub fn period_averaged_slope(
    mut eval: impl FnMut(f64) -> f64,
    t_start: f64,
    log_period: f64,
    periods: usize,
    samples_per_period: usize,
) -> f64 {
    assert!(periods >= 2 && samples_per_period >= 4);
    let mut xs = Vec::with_capacity(periods);
    let mut ys = Vec::with_capacity(periods);
    for w in 0..periods {
        let ln_lo = t_start.ln() + w as f64 * log_period;
        let mut acc = 0.0;
        for i in 0..samples_per_period {
            let ln_t = ln_lo + (i as f64 + 0.5) / samples_per_period as f64 * log_period;
            acc += eval(ln_t.exp()).ln();
        }
        xs.push(ln_lo + 0.5 * log_period);
        ys.push(acc / samples_per_period as f64);
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
