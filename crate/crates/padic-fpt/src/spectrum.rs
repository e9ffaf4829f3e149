//! Eigenvalue ladder of the passage problem: roots of the secular equation
//! J_r(-lambda) = 0, their residues, and the exponential-series densities
//! f(t) (first passage) and f_ret(t) (first return).
//!
//! Between consecutive lattice poles p^(-alpha(r+k+1)) < lambda <
//! p^(-alpha(r+k)) the function J_r(-lambda) increases strictly from -inf to
//! +inf, so each gap holds exactly one root lambda_k. Roots are located in
//! the conditioning variable Delta_k defined by
//!
//! ```text
//!   lambda_k = p^(-alpha(r+k)) (p^-alpha + Delta_k),   0 < Delta_k < 1 - p^-alpha,
//! ```
//!
//! bracketed by (1 - p^-alpha)/(1 + p a_k) < Delta_k < 1/((p-1) a_k) with
//! a_k = sum_{i=0}^{k} p^(-(alpha-1) i). Working in Delta keeps the
//! near-singular lattice differences p^(-alpha n) - lambda_k exact:
//! with j = r + k - n,
//!
//! ```text
//!   p^(-alpha n) - lambda_k = p^(-alpha n) * c_j,
//!   c_j = 1 - p^(-alpha j) (p^-alpha + Delta_k),   c_{-1} = -p^alpha Delta_k.
//! ```
//!
//! Residues follow from b_k = I_r^(nu-1)(-lambda_k) / |J_r'(-lambda_k)|; the
//! density is f(t) = sum_k b_k exp(-lambda_k t) with the exact total mass
//! sum_k b_k = kernel_norm * p^r / |a|^(alpha+1) supplying a rigorous tail
//! bound once the signed prefix (k < nu - r - 1) has been passed.

use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::padic::ModelParams;
use crate::transforms::{
    self, InversionMethod, LaplacePoint, ReturnTransform, SeriesTolerance, TransformError,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpectrumError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("bracket failure at k = {k}: J_r(-lambda) has no sign change over the Delta bracket [{lo}, {hi}]")]
    BracketFailure { k: u32, lo: f64, hi: f64 },
    #[error("bisection did not converge at k = {k} after {iters} iterations")]
    NoConvergence { k: u32, iters: usize },
    #[error("residual too large at k = {k}: |J_r(-lambda_k)| = {residual:e} > {threshold:e}")]
    ResidualTooLarge { k: u32, residual: f64, threshold: f64 },
    #[error("truncation K = {k} must be at least nu - r = {min} so the signed prefix is resolved")]
    TruncationTooShort { k: u32, min: i64 },
    #[error("residue routes disagree at k = {k}: {a:e} vs {b:e}")]
    ResidueMismatch { k: u32, a: f64, b: f64 },
    #[error("pole classification ambiguous: -B_alpha(r) = {b} within guard distance of {near}")]
    AmbiguousPole { b: f64, near: f64 },
    #[error("delta sequence did not converge: successive differences not decreasing ({0:e})")]
    DeltaNotConverged(f64),
    #[error("spectrum JSON malformed: {0}")]
    Json(String),
}

/// One rung of the ladder: root lambda_k, its conditioning variable Delta_k,
/// and the residue b_k of F at -lambda_k.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
pub struct SpectralLine {
    pub k: u32,
    pub lambda: f64,
    pub delta: f64,
    pub residue: f64,
}

/// The truncated ladder plus exact-mass bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub params: ModelParams,
    pub lines: Vec<SpectralLine>,
    /// Highest ladder index resolved (lines.len() - 1).
    pub k_max: u32,
    /// Partial mass sum_{k <= K} b_k.
    pub sum_b: f64,
    /// f(0+) - sum_b >= 0: rigorous bound on the dropped positive tail.
    pub tail_bound: f64,
}

/// Bisection bracket for Delta_k from the two-sided estimate, intersected
/// with the pole-free interval (0, 1 - p^-alpha).
pub fn delta_bracket(params: &ModelParams, k: u32) -> (f64, f64) {
    let p = params.pf();
    let alpha = params.alpha();
    // a_k = sum_{i=0}^{k} p^(-(alpha-1) i), summed directly: k stays small.
    let mut a_k = 0.0;
    for i in 0..=k as i64 {
        a_k += ((1.0 - alpha) * i as f64 * p.ln()).exp();
    }
    let q = p.powf(-alpha);
    let lo = (1.0 - q) / (1.0 + p * a_k);
    let hi = (1.0 / ((p - 1.0) * a_k)).min((1.0 - q) * (1.0 - 1e-14));
    (lo, hi)
}

/// c_j = 1 - p^(-alpha j)(p^-alpha + Delta); the j = -1 case collapses to
/// -p^alpha Delta exactly, which is what makes the Delta parametrization
/// well conditioned.
#[inline]
fn lattice_factor(params: &ModelParams, j: i64, delta: f64) -> f64 {
    match j {
        -1 => -params.pow_p_alpha(1) * delta,
        0 => 1.0 - params.pow_p_alpha(-1) - delta,
        _ => 1.0 - params.pow_p_alpha(-j) * (params.pow_p_alpha(-1) + delta),
    }
}

/// J_r(-lambda) for lambda in gap k, expressed through Delta. The value is
/// scaled by p^-((alpha-1)(r+k)) to stay inside binary64 for deep rungs; the
/// scaling is positive so sign and residual ratios are unaffected.
fn secular_scaled(params: &ModelParams, k: u32, delta: f64, max_terms: usize) -> f64 {
    let p = params.pf();
    let coeff = 1.0 - 1.0 / p;
    // term_n = p^((alpha-1) n) / c_{r+k-n}, scaled by p^(-(alpha-1)(r+k)):
    // scaled term = p^(-(alpha-1) j) / c_j with j = r + k - n, j <= k.
    let mut sum = 0.0;
    let mut peak: f64 = 0.0;
    let alpha = params.alpha();
    for idx in 0..max_terms as i64 {
        let j = k as i64 - idx; // n = r + idx
        let term = ((alpha - 1.0) * (-j as f64) * p.ln()).exp() / lattice_factor(params, j, delta);
        sum += term;
        peak = peak.max(term.abs());
        // Past j <= -2 the terms decay geometrically by p^-1 each step. The
        // convergence scale is the largest term, not the sum: the sum itself
        // vanishes at the root.
        if j <= -2 && term.abs() / (p - 1.0) < 1e-17 * peak {
            break;
        }
    }
    coeff * sum
}

/// |J_r'(-lambda_k)| scaled by p^(-(2alpha-1)(r+k)); always positive.
fn secular_derivative_scaled(params: &ModelParams, k: u32, delta: f64, max_terms: usize) -> f64 {
    let p = params.pf();
    let coeff = 1.0 - 1.0 / p;
    let alpha = params.alpha();
    let mut sum = 0.0;
    for idx in 0..max_terms as i64 {
        let j = k as i64 - idx;
        let c = lattice_factor(params, j, delta);
        let term = ((2.0 * alpha - 1.0) * (-j as f64) * p.ln()).exp() / (c * c);
        sum += term;
        if j <= -2 && term / (p - 1.0) < 1e-17 * sum.max(1e-300) {
            break;
        }
    }
    coeff * sum
}

/// Solve the secular equation in gap k by bisection over the Delta bracket.
///
/// The residue field of the returned line is left at zero; [`residue_b`]
/// fills it. Uniqueness inside the gap comes from strict monotonicity of
/// J_r between consecutive poles.
pub fn solve_lambda(
    k: u32,
    params: &ModelParams,
    tol: &SeriesTolerance,
) -> Result<SpectralLine, SpectrumError> {
    let (mut lo, mut hi) = delta_bracket(params, k);
    let max_terms = tol.max_terms;
    let mut f_lo = secular_scaled(params, k, lo, max_terms);
    // Float rounding can push an endpoint across a root sitting exactly on
    // the analytic bound; walk toward the pole where the sign is certain.
    let mut widen = 0;
    while f_lo > 0.0 && widen < 60 {
        lo /= 2.0;
        f_lo = secular_scaled(params, k, lo, max_terms);
        widen += 1;
    }
    if f_lo > 0.0 {
        return Err(SpectrumError::BracketFailure { k, lo, hi });
    }
    let mut f_hi = secular_scaled(params, k, hi, max_terms);
    // The analytic upper bound can overshoot the pole-side guard; walk the
    // endpoint geometrically toward the pole where J -> +inf.
    let q = params.pow_p_alpha(-1);
    let pole = 1.0 - q;
    widen = 0;
    while f_hi < 0.0 && widen < 60 {
        hi += (pole - hi) / 2.0;
        f_hi = secular_scaled(params, k, hi, max_terms);
        widen += 1;
    }
    if f_hi < 0.0 {
        return Err(SpectrumError::BracketFailure { k, lo, hi });
    }
    let mut iters = 0;
    while iters < 200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break; // interval collapsed to adjacent floats
        }
        let f_mid = secular_scaled(params, k, mid, max_terms);
        if f_mid < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
    }
    if iters >= 200 {
        return Err(SpectrumError::NoConvergence { k, iters });
    }
    let delta = 0.5 * (lo + hi);
    let lambda = params.pow_p_alpha(-(params.r() + k as i64)) * (q + delta);
    // Residual acceptance: |J(-lambda)| <= tol * |J'(-lambda)|, evaluated on
    // the common scale p^(-(alpha)(r+k)) ... the scaled forms share the
    // factor p^((alpha-1)(r+k)), leaving a p^(alpha(r+k)) ratio.
    let resid = secular_scaled(params, k, delta, max_terms).abs();
    let deriv = secular_derivative_scaled(params, k, delta, max_terms);
    let scale = params.pow_p_alpha(-(params.r() + k as i64));
    let threshold = tol.rel_tol.max(1e-12) * deriv / scale;
    if resid > threshold {
        return Err(SpectrumError::ResidualTooLarge { k, residual: resid, threshold });
    }
    Ok(SpectralLine { k, lambda, delta, residue: 0.0 })
}

/// Numerator I_r^(nu-1)(-lambda_k) in the Delta parametrization, scaled by
/// p^(-(alpha-1) r).
fn residue_numerator_scaled(params: &ModelParams, k: u32, delta: f64) -> f64 {
    let p = params.pf();
    let alpha = params.alpha();
    let coeff = 1.0 - 1.0 / p;
    let span = params.nu() - params.r(); // nu - r >= 1
    let mut acc = 0.0;
    for m in 0..span {
        // n = r + m, j = k - m.
        let j = k as i64 - m;
        acc += coeff * ((alpha - 1.0) * m as f64 * p.ln()).exp() / lattice_factor(params, j, delta);
    }
    // Single closing term at n = nu with pole index nu - 1.
    let j = k as i64 - (span - 1);
    acc += ((alpha - 1.0) * span as f64 * p.ln()).exp() * (-alpha * p.ln()).exp()
        / lattice_factor(params, j, delta);
    acc
}

/// Residue b_k of F(s) at s = -lambda_k.
///
/// The conditioned route works in the Delta parametrization, where the
/// near-singular lattice differences at n = r+k, r+k+1 are exact. It is
/// cross-checked against the plain ratio I_r^(nu-1)(-lambda_k)/|J_r'(-lambda_k)|
/// evaluated with naive floating-point subtraction; the naive route loses
/// roughly eps/Delta_k of relative accuracy, which the tolerance allows for.
pub fn residue_b(
    line: &SpectralLine,
    params: &ModelParams,
    tol: &SeriesTolerance,
) -> Result<f64, SpectrumError> {
    let k = line.k;
    let delta = line.delta;
    let p = params.pf();
    let alpha = params.alpha();
    // Conditioned route: numerator scaled by p^((alpha-1) r), denominator by
    // p^((2alpha-1)(r+k)); the ratio restores b_k with the factor
    // p^((alpha-1) r - (2alpha-1)(r+k)).
    let num = residue_numerator_scaled(params, k, delta);
    let den = secular_derivative_scaled(params, k, delta, tol.max_terms);
    let log_scale = ((alpha - 1.0) * params.r() as f64
        - (2.0 * alpha - 1.0) * (params.r() + k as i64) as f64)
        * p.ln();
    let b_cond = num / den * log_scale.exp();
    // Naive route, straight from the displayed ratio.
    let lambda = line.lambda;
    let coeff = 1.0 - 1.0 / p;
    let mut num_naive = 0.0;
    for n in params.r()..params.nu() {
        num_naive += coeff * (-(n as f64) * p.ln()).exp() / (params.pow_p_alpha(-n) - lambda);
    }
    num_naive += (-(params.nu() as f64) * p.ln()).exp()
        / (params.pow_p_alpha(-(params.nu() - 1)) - lambda);
    let mut den_naive = 0.0;
    let mut n = params.r();
    loop {
        let diff = params.pow_p_alpha(-n) - lambda;
        let term = coeff * (-(n as f64) * p.ln()).exp() / (diff * diff);
        den_naive += term;
        if n > params.r() + k as i64 + 2 && term < 1e-16 * den_naive {
            break;
        }
        n += 1;
        if (n - params.r()) as usize > tol.max_terms {
            break;
        }
    }
    let b_naive = num_naive / den_naive;
    // The naive route loses eps/Delta of relative accuracy through the
    // subtraction at n = r+k+1; below Delta ~ 1e-11 it carries no signal and
    // the conditioned route stands alone.
    if delta > 1e-11 {
        let rel_allow = (1e-9f64).max(2e-14 / delta).min(5e-2);
        if (b_cond - b_naive).abs() > rel_allow * b_cond.abs().max(b_naive.abs()).max(1e-300) {
            return Err(SpectrumError::ResidueMismatch { k, a: b_cond, b: b_naive });
        }
    }
    Ok(b_cond)
}

/// Aitken delta-squared extrapolation, appropriate for geometrically
/// convergent sequences.
pub fn aitken_limit(seq: &[f64]) -> f64 {
    let mut work = seq.to_vec();
    while work.len() >= 3 {
        let mut next = Vec::with_capacity(work.len() - 2);
        for w in work.windows(3) {
            let denom = w[2] - 2.0 * w[1] + w[0];
            if denom.abs() < 1e-300 {
                next.push(w[2]);
            } else {
                next.push(w[2] - (w[2] - w[1]).powi(2) / denom);
            }
        }
        work = next;
    }
    *work.last().expect("nonempty sequence")
}

/// Two-level Richardson extrapolation in 1/K for partial sums converging
/// like S - c/K - d/K^2 (the alpha = 1 ladder sums): kills the 1/K and
/// 1/K^2 terms, leaving O(K^-3).
pub fn richardson_harmonic_limit(partials: &[f64]) -> f64 {
    let n = partials.len();
    assert!(n >= 8);
    let s = |k: usize| partials[k - 1];
    let k = n;
    let e1 = |kk: usize| 2.0 * s(kk) - s(kk / 2);
    (4.0 * e1(k) - e1(k / 2)) / 3.0
}

impl Spectrum {
    /// CDF mass sum_k b_k / lambda_k evaluated to convergence: the partial
    /// sums are geometric for alpha != 1 (Aitken) but harmonic 1/K at
    /// alpha = 1 (Richardson in 1/K).
    pub fn cdf_mass_extrapolated(&self) -> f64 {
        let mut partial = Vec::with_capacity(self.lines.len());
        let mut acc = 0.0;
        for l in &self.lines {
            acc += l.residue / l.lambda;
            partial.push(acc);
        }
        let n = partial.len();
        if self.params.alpha() == 1.0 {
            richardson_harmonic_limit(&partial)
        } else {
            aitken_limit(&partial[n.saturating_sub(24)..])
        }
    }
}

/// Exact total mass of the residue series:
/// f(0+) = sum_k b_k = kernel_norm * p^r / |a|^(alpha+1).
pub fn residue_mass_closed_form(params: &ModelParams) -> f64 {
    params.kernel_norm() * params.pow_p(params.r()).expect("r in range")
        / params.abs_a().powf(params.alpha() + 1.0)
}

/// How far to extend the ladder.
#[derive(Debug, Clone, Copy)]
pub enum Truncation {
    /// Fixed number of rungs 0..=K.
    Rungs(u32),
    /// Extend until tail_bound <= target (starting from the minimum K).
    TailBound(f64),
}

/// Build the ladder with residues and tail bookkeeping. Rungs are solved in
/// parallel; the result is immutable and shareable.
pub fn build_spectrum(
    params: &ModelParams,
    truncation: Truncation,
    tol: &SeriesTolerance,
) -> Result<Spectrum, SpectrumError> {
    let min_k = (params.nu() - params.r()) as u32;
    let mut k_max = match truncation {
        Truncation::Rungs(k) => {
            if (k as i64) < min_k as i64 {
                return Err(SpectrumError::TruncationTooShort { k, min: min_k as i64 });
            }
            k
        }
        Truncation::TailBound(_) => min_k.max(8),
    };
    let f0 = residue_mass_closed_form(params);
    loop {
        let lines: Result<Vec<SpectralLine>, SpectrumError> = (0..=k_max)
            .into_par_iter()
            .map(|k| {
                let mut line = solve_lambda(k, params, tol)?;
                line.residue = residue_b(&line, params, tol)?;
                Ok(line)
            })
            .collect();
        let lines = lines?;
        let sum_b: f64 = lines.iter().map(|l| l.residue).sum();
        let tail_bound = f0 - sum_b;
        match truncation {
            Truncation::TailBound(target) if tail_bound > target && k_max < 4000 => {
                k_max = (k_max * 2).max(k_max + 8);
                continue;
            }
            _ => {
                return Ok(Spectrum { params: *params, lines, k_max, sum_b, tail_bound });
            }
        }
    }
}

impl Spectrum {
    /// Passage density f(t) = sum_k b_k exp(-lambda_k t); absolute error is
    /// bounded by `tail_bound` for every t >= 0.
    pub fn f_series(&self, t: f64) -> f64 {
        assert!(t >= 0.0);
        self.lines.iter().map(|l| l.residue * (-l.lambda * t).exp()).sum()
    }

    /// Passage CDF sum_k b_k (1 - exp(-lambda_k t))/lambda_k, nondecreasing
    /// with limit F(0).
    pub fn f_cdf_series(&self, t: f64) -> f64 {
        assert!(t >= 0.0);
        self.lines
            .iter()
            .map(|l| l.residue * (-(-l.lambda * t).exp_m1()) / l.lambda)
            .sum()
    }

    /// Smallest decay rate resolved (the k = 0 rung).
    pub fn lambda_0(&self) -> f64 {
        self.lines[0].lambda
    }

    /// Serialize with 17-significant-digit floats (lossless round trip).
    pub fn to_json_string(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "{{\"params\":{{\"p\":{},\"alpha\":{:.16e},\"r\":{},\"nu\":{}}},\"K\":{},\"sum_b\":{:.16e},\"tail_bound\":{:.16e},\"lines\":[",
            self.params.p(),
            self.params.alpha(),
            self.params.r(),
            self.params.nu(),
            self.k_max,
            self.sum_b,
            self.tail_bound
        ));
        for (i, l) in self.lines.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            s.push_str(&format!(
                "{{\"k\":{},\"lambda\":{:.16e},\"delta\":{:.16e},\"residue\":{:.16e}}}",
                l.k, l.lambda, l.delta, l.residue
            ));
        }
        s.push_str("]}");
        s
    }

    pub fn from_json_str(s: &str) -> Result<Spectrum, SpectrumError> {
        #[derive(Deserialize)]
        struct ParamsRepr {
            p: u64,
            alpha: f64,
            r: i64,
            nu: i64,
        }
        #[derive(Deserialize)]
        struct SpectrumRepr {
            params: ParamsRepr,
            #[serde(rename = "K")]
            k: u32,
            sum_b: f64,
            tail_bound: f64,
            lines: Vec<SpectralLine>,
        }
        let repr: SpectrumRepr =
            serde_json::from_str(s).map_err(|e| SpectrumError::Json(e.to_string()))?;
        let params = ModelParams::new(repr.params.p, repr.params.alpha, repr.params.r, repr.params.nu)
            .map_err(|e| SpectrumError::Json(e.to_string()))?;
        Ok(Spectrum {
            params,
            lines: repr.lines,
            k_max: repr.k,
            sum_b: repr.sum_b,
            tail_bound: repr.tail_bound,
        })
    }
}

// ---------------------------------------------------------------------------
// First-return density
// ---------------------------------------------------------------------------

/// Pole expansion of F_ret over the zeros of (B_alpha(r)+s) J_r(s): the
/// residue at -lambda_k is -1/(p^r (B_alpha(r)-lambda_k) J_r'(-lambda_k)),
/// plus the isolated pole at s = -B_alpha(r) with residue
/// -1/(p^r J_r(-B_alpha(r))) when -B is not itself a root or lattice point.
#[derive(Debug, Clone)]
pub struct ReturnSpectrum {
    pub params: ModelParams,
    /// (rate, weight) pairs: f_ret(t) = sum weight * exp(-rate * t).
    pub terms: Vec<(f64, f64)>,
    tol: SeriesTolerance,
}

/// Relative guard radius for classifying the -B_alpha(r) pole.
const B_POLE_GUARD: f64 = 1e-9;

impl ReturnSpectrum {
    pub fn build(
        params: &ModelParams,
        k_max: u32,
        tol: &SeriesTolerance,
    ) -> Result<Self, SpectrumError> {
        let pr = params.pow_p(params.r()).expect("p^r in range");
        let b = params.b_alpha_r();
        let mut terms = Vec::with_capacity(k_max as usize + 2);
        for k in 0..=k_max {
            let line = solve_lambda(k, params, tol)?;
            // |J_r'(-lambda_k)|, unscaled. J' itself is negative, so the
            // residue -1/(p^r (B - lambda_k) J') flips to +1/(p^r (B-l)|J'|).
            let abs_deriv = secular_derivative(params, &line, tol);
            if (b - line.lambda).abs() < B_POLE_GUARD * b {
                return Err(SpectrumError::AmbiguousPole { b, near: line.lambda });
            }
            let weight = 1.0 / (pr * (b - line.lambda) * abs_deriv);
            terms.push((line.lambda, weight));
        }
        // The -B pole: guard against proximity to the lattice.
        let n_star = -(b.ln()) / (params.alpha() * params.pf().ln());
        for n in [n_star.floor() as i64, n_star.ceil() as i64] {
            let pole = params.pow_p_alpha(-n);
            if (b - pole).abs() < B_POLE_GUARD * pole {
                return Err(SpectrumError::AmbiguousPole { b, near: pole });
            }
        }
        let j_at_b = transforms::eval_j(LaplacePoint(-b), params, tol)?;
        terms.push((b, -1.0 / (pr * j_at_b.value)));
        Ok(ReturnSpectrum { params: *params, terms, tol: *tol })
    }

    /// Series value without the inversion shadow.
    pub fn density_unchecked(&self, t: f64) -> f64 {
        self.terms.iter().map(|&(rate, w)| w * (-rate * t).exp()).sum()
    }

    /// Overall magnitude of the density (sum of |weights|), the natural
    /// absolute scale for shadow comparisons far in the tail.
    pub fn weight_scale(&self) -> f64 {
        self.terms.iter().map(|&(_, w)| w.abs()).sum()
    }

    /// f_ret(t), shadowed by numerical inversion of F_ret. If the two
    /// disagree beyond tolerance the inversion value wins and the point is
    /// flagged.
    ///
    /// The shadow runs on the Talbot contour: Gaver-Stehfest cannot resolve
    /// the log-periodic wobble of these densities in binary64 (it converges
    /// order-consistently to a smoothed value on coarse lattices), while the
    /// complex contour tracks the series to ~1e-7 relative across the
    /// parameter range.
    pub fn density(&self, t: f64) -> (f64, bool) {
        let series = self.density_unchecked(t);
        if t == 0.0 {
            return (series, false);
        }
        let shadow = transforms::laplace_invert(
            &ReturnTransform { params: &self.params, tol: self.tol },
            t,
            InversionMethod::Talbot { m: 24 },
        );
        match shadow {
            Ok(inv) => {
                let floor = 1e-7 * self.weight_scale();
                if (series - inv.value).abs() > 1e-4 * series.abs() + floor {
                    (inv.value, true)
                } else {
                    (series, false)
                }
            }
            Err(_) => (series, false),
        }
    }

    /// Slope of f_ret at 0+ from the series: -sum w * rate.
    pub fn derivative_at_zero(&self) -> f64 {
        -self.terms.iter().map(|&(rate, w)| w * rate).sum::<f64>()
    }
}

/// Closed form of f_ret'(0+) at r = 0:
/// (p-1) p^(2alpha+1) (p^alpha - 1)^2 / ((p^(2alpha+1)-1)(p^(alpha+1)-1)^2).
pub fn f_ret_slope_at_zero(params: &ModelParams) -> f64 {
    let p = params.pf();
    let alpha = params.alpha();
    let pa = p.powf(alpha);
    (p - 1.0) * p.powf(2.0 * alpha + 1.0) * (pa - 1.0).powi(2)
        / ((p.powf(2.0 * alpha + 1.0) - 1.0) * (p.powf(alpha + 1.0) - 1.0).powi(2))
}

// ---------------------------------------------------------------------------
// Delta limits (inputs to the large-time asymptotics)
// ---------------------------------------------------------------------------

/// Which scaled Delta sequence has a finite limit in each regime.
#[derive(Debug, Clone, Copy)]
pub struct DeltaLimit {
    /// Extrapolated limit of Delta_k (alpha > 1), k Delta_k (alpha = 1) or
    /// p^((1-alpha) k) Delta_k (alpha < 1).
    pub value: f64,
    /// Max successive difference over the last five raw terms.
    pub diagnostic: f64,
}

/// Numerically extrapolate the regime-scaled limit of Delta_k.
pub fn delta_limit(
    params: &ModelParams,
    k_max: u32,
    tol: &SeriesTolerance,
) -> Result<DeltaLimit, SpectrumError> {
    assert!(k_max >= 10);
    let alpha = params.alpha();
    let p = params.pf();
    let seq: Result<Vec<f64>, SpectrumError> = (0..=k_max)
        .into_par_iter()
        .map(|k| {
            let line = solve_lambda(k, params, tol)?;
            let scaled = if alpha > 1.0 {
                line.delta
            } else if alpha == 1.0 {
                k as f64 * line.delta
            } else {
                ((1.0 - alpha) * k as f64 * p.ln()).exp() * line.delta
            };
            Ok(scaled)
        })
        .collect();
    let seq = seq?;
    let n = seq.len();
    let diffs: Vec<f64> = seq.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let diagnostic = diffs[n.saturating_sub(6)..].iter().cloned().fold(0.0, f64::max);
    // Non-convergence: the last differences must not grow.
    let older = diffs[n.saturating_sub(11)..n.saturating_sub(6)]
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    if diagnostic > older.max(1e-15) * 1.5 {
        return Err(SpectrumError::DeltaNotConverged(diagnostic));
    }
    // Aitken extrapolation over the last ten terms (geometric convergence).
    let mut work: Vec<f64> = seq[n.saturating_sub(10)..].to_vec();
    while work.len() >= 3 {
        let mut next = Vec::with_capacity(work.len() - 2);
        for w in work.windows(3) {
            let denom = w[2] - 2.0 * w[1] + w[0];
            if denom.abs() < 1e-300 {
                next.push(w[2]);
            } else {
                next.push(w[2] - (w[2] - w[1]).powi(2) / denom);
            }
        }
        work = next;
    }
    Ok(DeltaLimit { value: *work.last().unwrap_or(&seq[n - 1]), diagnostic })
}

/// True |J_r'(-lambda_k)|, unscaled.
pub fn secular_derivative(params: &ModelParams, line: &SpectralLine, tol: &SeriesTolerance) -> f64 {
    secular_derivative_scaled(params, line.k, line.delta, tol.max_terms)
        * ((2.0 * params.alpha() - 1.0) * ((params.r() + line.k as i64) as f64)
            * params.pf().ln())
        .exp()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(p: u64, alpha: f64, r: i64, nu: i64) -> ModelParams {
        ModelParams::new(p, alpha, r, nu).unwrap()
    }

    fn tol() -> SeriesTolerance {
        SeriesTolerance::default()
    }

    #[test]
    fn lambda_brackets_hold() {
        for (p, alpha, r, nu) in [
            (2u64, 1.0, 0i64, 1i64),
            (2, 0.5, 0, 1),
            (3, 2.0, -1, 1),
            (5, 1.5, 1, 3),
        ] {
            let pr = params(p, alpha, r, nu);
            let t = tol();
            let mut prev = f64::INFINITY;
            for k in 0..=12u32 {
                let line = solve_lambda(k, &pr, &t).unwrap();
                let lower = pr.pow_p_alpha(-(r + k as i64 + 1));
                let upper = pr.pow_p_alpha(-(r + k as i64));
                assert!(
                    line.lambda > lower * (1.0 + 1e-12) && line.lambda < upper * (1.0 - 1e-12),
                    "bracket violated p={p} alpha={alpha} r={r} k={k}"
                );
                assert!(line.lambda < prev, "ladder not decreasing at k={k}");
                prev = line.lambda;
                // Lemma-style two-sided bound on Delta_k.
                let (lo, hi_raw) = delta_bracket(&pr, k);
                assert!(line.delta > lo * (1.0 - 1e-12));
                assert!(line.delta < (hi_raw / (1.0 - 1e-14)).min(1.0) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn lambda_zero_regression_value() {
        // p=2, alpha=1, r=0: the k=0 gap is (p^-alpha, 1) = (1/2, 1).
        let pr = params(2, 1.0, 0, 1);
        let line = solve_lambda(0, &pr, &tol()).unwrap();
        assert!(line.lambda > 0.5 && line.lambda < 1.0);
        // Regression constant frozen from a converged bisection run.
        assert!(
            (line.lambda - 0.705111444698446).abs() < 1e-12,
            "lambda_0 = {:.16}",
            line.lambda
        );
    }

    #[test]
    fn residual_scaled_by_derivative() {
        let pr = params(3, 1.5, 0, 2);
        let t = tol();
        for k in 0..=20u32 {
            let line = solve_lambda(k, &pr, &t).unwrap();
            // |J(-lambda)| <= 1e-12 |J'(-lambda)| in the common scaling.
            let resid = secular_scaled(&pr, k, line.delta, t.max_terms).abs();
            let deriv = secular_derivative_scaled(&pr, k, line.delta, t.max_terms);
            let scale = pr.pow_p_alpha(-(pr.r() + k as i64));
            assert!(resid <= 1e-12 * deriv / scale);
        }
    }

    #[test]
    fn delta_alpha_one_k_scaling() {
        // Lemma bound at alpha = 1: (1/(p+1))((p-1)/p) < (k+1) Delta_k (using
        // a_k = k+1) and Delta_k < 1/((p-1)(k+1)).
        let pr = params(2, 1.0, 0, 1);
        let t = tol();
        for k in 0..=25u32 {
            let line = solve_lambda(k, &pr, &t).unwrap();
            let a_k = (k + 1) as f64;
            let p = 2.0;
            assert!(line.delta < 1.0 / ((p - 1.0) * a_k) + 1e-15);
            assert!(line.delta > (1.0 - 0.5) / (1.0 + p * a_k) - 1e-15);
        }
    }

    #[test]
    fn residue_mass_sum_rule() {
        // Sum of residues reaches the closed-form f(0+) and the CDF mass
        // reaches F(0).
        for (p, alpha, r, nu) in [
            (2u64, 2.0, 0i64, 1i64),
            (2, 1.0, 0, 2),
            (3, 0.5, -1, 1),
            (5, 1.5, 0, 3),
        ] {
            let pr = params(p, alpha, r, nu);
            let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol()).unwrap();
            let f0 = residue_mass_closed_form(&pr);
            assert!(
                spec.tail_bound >= -1e-12 * f0.abs(),
                "tail bound negative: {} (p={p} alpha={alpha})",
                spec.tail_bound
            );
            assert!(
                (spec.sum_b - f0).abs() <= spec.tail_bound.abs().max(1e-10 * f0),
                "mass mismatch p={p} alpha={alpha} r={r} nu={nu}"
            );
            // CDF mass: sum b_k / lambda_k = F(0). The raw partial sums
            // converge like 1/K at alpha = 1, so the series value is taken
            // by Aitken extrapolation; the allowance is the spec-level
            // tail_bound / lambda_K.
            let mass = spec.cdf_mass_extrapolated();
            let target = transforms::f_passage_at_zero(&pr);
            let slack = spec.tail_bound.abs() / spec.lines.last().unwrap().lambda;
            assert!(
                (mass - target).abs() <= slack.max(1e-7),
                "CDF mass mismatch p={p} alpha={alpha}: {mass} vs {target} (slack {slack:e})"
            );
        }
    }

    #[test]
    fn residue_sign_structure() {
        // nu = r+1: all residues positive. nu = r+2: b_0 < 0, b_k > 0 after.
        let pr = params(2, 1.0, 0, 1);
        let spec = build_spectrum(&pr, Truncation::Rungs(20), &tol()).unwrap();
        assert!(spec.lines.iter().all(|l| l.residue > 0.0));
        let pr = params(2, 1.0, 0, 2);
        let spec = build_spectrum(&pr, Truncation::Rungs(20), &tol()).unwrap();
        assert!(spec.lines[0].residue < 0.0);
        assert!(spec.lines[1..].iter().all(|l| l.residue > 0.0));
    }

    #[test]
    fn tail_bound_decreases_with_k() {
        let pr = params(2, 1.5, 0, 2);
        let t = tol();
        let s20 = build_spectrum(&pr, Truncation::Rungs(20), &t).unwrap();
        let s40 = build_spectrum(&pr, Truncation::Rungs(40), &t).unwrap();
        assert!(s40.tail_bound <= s20.tail_bound);
        assert!(s40.tail_bound >= -1e-14);
        // Tail-targeted construction reaches the request.
        let st = build_spectrum(&pr, Truncation::TailBound(1e-8), &t).unwrap();
        assert!(st.tail_bound <= 1e-8);
    }

    #[test]
    fn f_series_matches_mass_and_positivity() {
        let pr = params(2, 1.0, 0, 1);
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol()).unwrap();
        // f(0) = 1/3 for p=2, alpha=1, r=0, nu=1.
        assert!((spec.f_series(0.0) - 1.0 / 3.0).abs() < spec.tail_bound + 1e-12);
        // Positive and strictly decreasing for nu = r+1 on a log grid.
        let mut prev = f64::INFINITY;
        for i in 0..400 {
            let t = 1e-2 * (10.0f64).powf(4.0 * i as f64 / 399.0);
            let v = spec.f_series(t);
            assert!(v > 0.0, "f({t}) = {v} not positive");
            assert!(v < prev, "f not decreasing at t={t}");
            prev = v;
        }
    }

    #[test]
    fn f_series_unimodal_for_separated_target() {
        // nu >= r+2: exactly one interior maximum.
        let pr = params(2, 1.0, 0, 2);
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol()).unwrap();
        let grid: Vec<f64> = (0..400)
            .map(|i| 1e-3 * (10.0f64).powf(6.0 * i as f64 / 399.0))
            .collect();
        let vals: Vec<f64> = grid.iter().map(|&t| spec.f_series(t)).collect();
        assert!(vals.iter().all(|&v| v > 0.0));
        let mut sign_changes = 0;
        for w in vals.windows(2) {
            if w[1] < w[0] && sign_changes == 0 {
                sign_changes = 1;
            } else if w[1] > w[0] && sign_changes == 1 {
                sign_changes = 2;
            }
        }
        assert!(sign_changes == 1, "expected rise then fall, got pattern {sign_changes}");
    }

    #[test]
    fn cdf_limits() {
        // alpha = 2: 1 - CDF(t) decays like t^(-1/2), so t = 1e12 suffices.
        let pr = params(2, 2.0, 0, 1);
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol()).unwrap();
        assert_eq!(spec.f_cdf_series(0.0), 0.0);
        let late = spec.f_cdf_series(1e12);
        assert!((late - 1.0).abs() < 1e-4, "CDF(inf) = {late}");
        // alpha = 1: the limit 1 is approached only like 1/ln t.
        let pr = params(2, 1.0, 0, 1);
        let spec = build_spectrum(&pr, Truncation::Rungs(120), &tol()).unwrap();
        let mut prev = 0.0;
        for exp in [3, 6, 9, 12] {
            let v = spec.f_cdf_series(10.0f64.powi(exp));
            assert!(v > prev && v < 1.0, "CDF not increasing toward 1");
            prev = v;
        }
        assert!(prev > 0.93, "CDF(1e12) = {prev}");
        // alpha = 1/2: defective limit sqrt(2) - 1, reached like 1/t.
        let pr = params(2, 0.5, 0, 1);
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol()).unwrap();
        let late = spec.f_cdf_series(1e12);
        assert!((late - (2.0f64.sqrt() - 1.0)).abs() < 1e-4);
    }

    #[test]
    fn derivative_at_zero_closed_form() {
        // -sum lambda_k b_k = f'(0+) closed form; sign negative iff nu = r+1.
        for (p, alpha, r, nu) in [
            (2u64, 1.0, 0i64, 1i64),
            (2, 2.0, 0, 2),
            (3, 0.5, -1, 2),
            (5, 1.5, 1, 2),
        ] {
            let pr = params(p, alpha, r, nu);
            let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol()).unwrap();
            let slope: f64 = -spec.lines.iter().map(|l| l.lambda * l.residue).sum::<f64>();
            let closed = f_slope_at_zero_closed(&pr);
            assert!(
                (slope - closed).abs() <= 1e-4 * closed.abs().max(1e-12),
                "p={p} alpha={alpha} r={r} nu={nu}: {slope} vs {closed}"
            );
            if nu == r + 1 {
                assert!(slope < 0.0);
            } else {
                assert!(slope > 0.0);
            }
        }
    }

    #[test]
    fn return_density_boundary_behavior() {
        let pr = params(2, 1.0, 0, 1);
        let ret = ReturnSpectrum::build(&pr, 60, &tol()).unwrap();
        // f_ret(0+) = 0: residues sum to zero.
        let at0 = ret.density_unchecked(0.0);
        assert!(at0.abs() < 1e-8, "f_ret(0) = {at0}");
        // f_ret'(0+) closed form at r = 0.
        let slope = ret.derivative_at_zero();
        let closed = f_ret_slope_at_zero(&pr);
        assert!(
            (slope - closed).abs() < 1e-6 * closed,
            "slope {slope} vs closed {closed}"
        );
        assert!(closed > 0.0);
        // Mass sum w/rate = 1 for alpha >= 1. At alpha = 1 the ladder part
        // crawls like 1/K with log corrections, so extrapolate a deep ladder
        // (the isolated -B pole term sits at the end of `terms` and is added
        // up front).
        let deep = ReturnSpectrum::build(&pr, 240, &tol()).unwrap();
        let (b_rate, b_w) = *deep.terms.last().unwrap();
        let partials: Vec<f64> = deep.terms[..deep.terms.len() - 1]
            .iter()
            .scan(b_w / b_rate, |acc, &(rate, w)| {
                *acc += w / rate;
                Some(*acc)
            })
            .collect();
        let mass = richardson_harmonic_limit(&partials);
        assert!((mass - 1.0).abs() < 1e-3, "alpha=1 mass = {mass}");
        // alpha = 2: the same sum is geometric and pins the identity hard.
        let pr2 = params(2, 2.0, 0, 1);
        let ret2 = ReturnSpectrum::build(&pr2, 60, &tol()).unwrap();
        let mass2: f64 = ret2.terms.iter().map(|&(rate, w)| w / rate).sum();
        assert!((mass2 - 1.0).abs() < 1e-9, "alpha=2 mass = {mass2}");
    }

    #[test]
    fn return_density_shadow_agrees() {
        let pr = params(2, 2.0, 0, 1);
        let ret = ReturnSpectrum::build(&pr, 60, &tol()).unwrap();
        for t in [0.3, 1.0, 5.0, 20.0] {
            let (v, flagged) = ret.density(t);
            assert!(!flagged, "shadow flagged at t={t}");
            assert!(v >= -1e-10);
        }
    }

    #[test]
    fn delta_limit_regimes() {
        // alpha > 1: limit inside the stated interval.
        let pr = params(2, 2.0, 0, 1);
        let dl = delta_limit(&pr, 40, &tol()).unwrap();
        let p = 2.0f64;
        let lo = (1.0 - p.powf(-2.0)) * (1.0 - p.powf(-1.0)) / (p + 1.0);
        let hi = 1.0 / (p - 1.0);
        assert!(dl.value > lo && dl.value < hi, "Delta(2) = {}", dl.value);
        // alpha = 1: k Delta_k within the Lemma band.
        let pr = params(2, 1.0, 0, 1);
        let dl = delta_limit(&pr, 60, &tol()).unwrap();
        assert!(dl.value > 0.0 && dl.value < 1.0 / (p - 1.0));
        // alpha < 1: scaled sequence eventually nondecreasing.
        let pr = params(2, 0.5, 0, 1);
        let t = tol();
        let mut prev = 0.0;
        for k in 20..=40u32 {
            let line = solve_lambda(k, &pr, &t).unwrap();
            let scaled = ((1.0 - 0.5) * k as f64 * p.ln()).exp() * line.delta;
            assert!(scaled >= prev * (1.0 - 1e-9), "not nondecreasing at k={k}");
            prev = scaled;
        }
        let dl = delta_limit(&pr, 40, &tol()).unwrap();
        assert!(dl.value > 0.0);
    }

    #[test]
    fn spectrum_json_round_trip() {
        let pr = params(3, 1.5, 0, 2);
        let spec = build_spectrum(&pr, Truncation::Rungs(12), &tol()).unwrap();
        let json = spec.to_json_string();
        let back = Spectrum::from_json_str(&json).unwrap();
        assert_eq!(spec, back);
    }

    /// f'(0+) closed form (Property-4 style): shared with the acceptance
    /// suite through this free function.
    fn f_slope_at_zero_closed(params: &ModelParams) -> f64 {
        super::f_slope_at_zero(params)
    }
}

/// Closed form of f'(0+):
///
/// p^r (p^alpha - 1) (p/|a|)^(2alpha+1) [ (p-1)/(p^(alpha+1)-1)^2 (|a|/p^r)^alpha
///                                        - (p^alpha+1)/(p^(2alpha+1)-1) ].
pub fn f_slope_at_zero(params: &ModelParams) -> f64 {
    let p = params.pf();
    let alpha = params.alpha();
    let pa = p.powf(alpha);
    let abs_a = params.abs_a();
    let pr = params.pow_p(params.r()).expect("r in range");
    pr * (pa - 1.0)
        * (p / abs_a).powf(2.0 * alpha + 1.0)
        * ((p - 1.0) / (p.powf(alpha + 1.0) - 1.0).powi(2) * (abs_a / pr).powf(alpha)
            - (pa + 1.0) / (p.powf(2.0 * alpha + 1.0) - 1.0))
}
