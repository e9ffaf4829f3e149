//! Model parameters and the exact p-power / p-adic gamma arithmetic the rest
//! of the crate is built on.
//!
//! Norms, radii and frequencies are all integer powers of p, so they are kept
//! as integer exponents for as long as possible; floating point enters only
//! when a power is actually evaluated.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest |e * ln p| for which p^e stays a normal binary64 number.
const MAX_POW_EXP: f64 = 708.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParamError {
    #[error("p = {0} is not prime")]
    NotPrime(u64),
    #[error("alpha = {0} must be positive")]
    NonPositiveAlpha(String),
    #[error("nu = {nu} violates nu >= max(r+1, 1) = {min_nu}: target ball intersects Z_p or |a|_p <= p^r")]
    BallTouchesSupport { nu: i64, min_nu: i64 },
    #[error("p^{exponent} with p = {p} leaves the binary64 range")]
    PowOutOfRange { p: u64, exponent: i64 },
    #[error("invalid parameters: {}", .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ParamError>),
}

/// A p-adic norm value stored as its integer exponent: the norm is p^e.
///
/// Distances, ball radii and frequency magnitudes are all of this form, so
/// comparisons and products reduce to integer arithmetic on exponents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RadialExponent(pub i64);

impl RadialExponent {
    pub fn value(self, p: u64) -> Result<f64, ParamError> {
        pow_p(p, self.0)
    }
}

/// The quadruple (p, alpha, r, nu) fixing the process and the target ball.
///
/// * `p` — prime base of the field.
/// * `alpha` — exponent of the Vladimirov operator, alpha > 0.
/// * `r` — target ball radius exponent; the ball has radius p^r.
/// * `nu` — norm exponent of the ball center, |a|_p = p^nu.
///
/// The constraint nu >= max(r+1, 1) keeps the target ball disjoint from the
/// support Z_p of the initial distribution and enforces |a|_p > p^r.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    p: u64,
    alpha: f64,
    r: i64,
    nu: i64,
}

impl ModelParams {
    /// Validates and builds the parameter set. Every violated constraint is
    /// reported; nothing is clamped.
    pub fn new(p: u64, alpha: f64, r: i64, nu: i64) -> Result<Self, ParamError> {
        let mut violations = Vec::new();
        if !is_prime(p) {
            violations.push(ParamError::NotPrime(p));
        }
        if !(alpha > 0.0) || !alpha.is_finite() {
            violations.push(ParamError::NonPositiveAlpha(format!("{alpha}")));
        }
        let min_nu = (r + 1).max(1);
        if nu < min_nu {
            violations.push(ParamError::BallTouchesSupport { nu, min_nu });
        }
        match violations.len() {
            0 => Ok(ModelParams { p, alpha, r, nu }),
            1 => Err(violations.pop().unwrap()),
            _ => Err(ParamError::Invalid(violations)),
        }
    }

    pub fn p(&self) -> u64 {
        self.p
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn r(&self) -> i64 {
        self.r
    }

    pub fn nu(&self) -> i64 {
        self.nu
    }

    /// p as a float.
    pub fn pf(&self) -> f64 {
        self.p as f64
    }

    /// p^e, overflow-checked.
    pub fn pow_p(&self, e: i64) -> Result<f64, ParamError> {
        pow_p(self.p, e)
    }

    /// p^(alpha * e), the alpha-th power of a norm p^e.
    pub fn pow_p_alpha(&self, e: i64) -> f64 {
        ((e as f64) * self.alpha * (self.p as f64).ln()).exp()
    }

    /// |a|_p = p^nu.
    pub fn abs_a(&self) -> f64 {
        pow_p(self.p, self.nu).expect("nu within float range")
    }

    /// Gamma_p(-alpha); see [`gamma_p_neg`].
    pub fn gamma_p_neg(&self) -> f64 {
        gamma_p_neg(self.p, self.alpha).expect("alpha validated positive")
    }

    /// -1/Gamma_p(-alpha) = (p^alpha - 1)/(1 - p^(-alpha-1)) > 0, the kernel
    /// normalization of the jump rates.
    pub fn kernel_norm(&self) -> f64 {
        let pa = self.pf().powf(self.alpha);
        (pa - 1.0) / (1.0 - 1.0 / (pa * self.pf()))
    }

    /// Total exit rate from a ball of radius p^r; see [`b_alpha_r`].
    pub fn b_alpha_r(&self) -> f64 {
        b_alpha_r(self, self.r)
    }
}

/// p-adic gamma factor Gamma_p(-alpha) = (1 - p^(-alpha-1))/(1 - p^alpha),
/// strictly negative for alpha > 0.
pub fn gamma_p_neg(p: u64, alpha: f64) -> Result<f64, ParamError> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(ParamError::NonPositiveAlpha(format!("{alpha}")));
    }
    let pf = p as f64;
    Ok((1.0 - pf.powf(-alpha - 1.0)) / (1.0 - pf.powf(alpha)))
}

/// Total exit rate from a ball of radius p^r:
/// B_alpha(r) = p^(-alpha r) (1 - p^(-1)) / (1 - p^(-alpha-1)).
///
/// At r = 0 this is the B_alpha of the first-return problem on Z_p. Shifting
/// the radius by one rescales the rate by p^(-alpha).
pub fn b_alpha_r(params: &ModelParams, r: i64) -> f64 {
    let p = params.pf();
    params.pow_p_alpha(-r) * (1.0 - 1.0 / p) / (1.0 - p.powf(-params.alpha() - 1.0))
}

/// p^e with e integer, returning an error instead of overflowing to inf or
/// underflowing to zero.
pub fn pow_p(p: u64, e: i64) -> Result<f64, ParamError> {
    let lnp = (p as f64).ln();
    if (e as f64).abs() * lnp > MAX_POW_EXP {
        return Err(ParamError::PowOutOfRange { p, exponent: e });
    }
    // Exact integer path while p^|e| fits in u128; one correctly rounded
    // conversion (plus one division for negative e).
    let abs_e = e.unsigned_abs() as u32;
    if (abs_e as f64) * (p as f64).log2() < 127.0 {
        let exact = (p as u128).pow(abs_e) as f64;
        Ok(if e >= 0 { exact } else { 1.0 / exact })
    } else {
        Ok((p as f64).powi(e as i32))
    }
}

/// Trial-division primality check; p stays small in every use of this crate.
pub fn is_prime(p: u64) -> bool {
    if p < 2 {
        return false;
    }
    if p % 2 == 0 {
        return p == 2;
    }
    let mut d = 3u64;
    while d * d <= p {
        if p % d == 0 {
            return false;
        }
        d += 2;
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gamma_p_neg_exact_rationals() {
        // (1 - 2^-2)/(1 - 2) = -3/4
        assert_eq!(gamma_p_neg(2, 1.0).unwrap(), -0.75);
        // (1 - 3^-3)/(1 - 9) = -13/108
        let g = gamma_p_neg(3, 2.0).unwrap();
        assert!((g - (-13.0 / 108.0)).abs() < 1e-16);
        assert!(gamma_p_neg(2, 0.0).is_err());
        assert!(gamma_p_neg(2, -1.0).is_err());
    }

    #[test]
    fn gamma_p_neg_is_negative_over_sweep() {
        for &p in &[2u64, 3, 5, 7, 11] {
            for &alpha in &[0.1, 0.5, 1.0, 1.5, 2.0, 3.7] {
                assert!(gamma_p_neg(p, alpha).unwrap() < 0.0, "p={p} alpha={alpha}");
            }
        }
    }

    #[test]
    fn kernel_norm_matches_reciprocal_identity() {
        // -1/Gamma_p(-alpha) in exact rationals for alpha in {1, 2}.
        let params = ModelParams::new(2, 1.0, 0, 1).unwrap();
        assert!((params.kernel_norm() - 4.0 / 3.0).abs() < 1e-15);
        assert!((params.kernel_norm() + 1.0 / params.gamma_p_neg()).abs() < 1e-15);
        let params = ModelParams::new(3, 2.0, 0, 1).unwrap();
        assert!((params.kernel_norm() - 108.0 / 13.0).abs() < 1e-13);
        assert!((params.kernel_norm() + 1.0 / params.gamma_p_neg()).abs() < 1e-13);
    }

    #[test]
    fn b_alpha_r_exact_values() {
        // p=2, alpha=2, r=0: (1/2)/(7/8) = 4/7
        let params = ModelParams::new(2, 2.0, 0, 1).unwrap();
        assert!((params.b_alpha_r() - 4.0 / 7.0).abs() < 1e-16);
        // p=2, alpha=1, r=1: 2^-1 * (1/2)/(3/4) = 1/3
        let params = ModelParams::new(2, 1.0, 1, 2).unwrap();
        assert!((params.b_alpha_r() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn b_alpha_r_radius_scaling() {
        for &p in &[2u64, 3, 5] {
            for &alpha in &[0.5, 1.0, 2.0] {
                let params = ModelParams::new(p, alpha, 0, 5).unwrap();
                let ratio = b_alpha_r(&params, 1) / b_alpha_r(&params, 0);
                assert!((ratio - params.pow_p_alpha(-1)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(matches!(
            ModelParams::new(4, 1.0, 0, 1),
            Err(ParamError::NotPrime(4))
        ));
        assert!(matches!(
            ModelParams::new(2, 1.0, 0, 0),
            Err(ParamError::BallTouchesSupport { .. })
        ));
        // r = -2 pushes min_nu down to 1, so nu = 1 is fine.
        assert!(ModelParams::new(5, 0.5, -2, 1).is_ok());
        // Several violations at once are all reported.
        match ModelParams::new(4, -1.0, 3, 1) {
            Err(ParamError::Invalid(v)) => assert_eq!(v.len(), 3),
            other => panic!("expected combined error, got {other:?}"),
        }
    }

    #[test]
    fn pow_p_exact_and_range_checked() {
        assert_eq!(pow_p(2, 0).unwrap(), 1.0);
        assert_eq!(pow_p(3, -2).unwrap(), 1.0 / 9.0);
        assert_eq!(pow_p(2, 50).unwrap(), (1u64 << 50) as f64);
        assert!(matches!(
            pow_p(2, 2000),
            Err(ParamError::PowOutOfRange { .. })
        ));
        assert!(pow_p(5, -450).is_err());
        // Near the top of the representable range but still normal.
        assert!(pow_p(2, 1000).unwrap().is_finite());
    }

    #[test]
    fn primality_by_trial_division() {
        let primes: Vec<u64> = (0..60).filter(|&n| is_prime(n)).collect();
        assert_eq!(
            primes,
            vec![2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59]
        );
        assert!(is_prime(999_983));
        assert!(!is_prime(999_981));
    }
}
