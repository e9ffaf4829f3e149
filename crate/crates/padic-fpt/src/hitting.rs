//! Volterra-equation machinery on uniform time grids: the second-kind solver
//! that reconstructs the passage density from the fluxes (an oracle
//! independent of the spectral series), residual checks of the first-kind
//! equations, and the hitting-count recurrences
//!
//! ```text
//!   q^(0) = 1,  q^(1)(t) = int_0^t f,   q^(m) = q^(m-1) * f_ret  (convolution)
//!   h^(m) = q^(m) - q^(m+1),            mu(t) = sum_m m h^(m)(t).
//! ```
//!
//! The first-kind equations are never solved directly (they are ill-posed);
//! they are only evaluated as residuals of candidate densities.

use thiserror::Error;

use crate::padic::ModelParams;
use crate::transforms::{self, Flux, SeriesTolerance, Survival, TransformError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HittingError {
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error("solver divergence: |f| reached {peak:e} > {limit:e} at step {step}")]
    Divergence { peak: f64, limit: f64, step: usize },
    #[error("grid mismatch: expected {expected} samples, got {got}")]
    GridMismatch { expected: usize, got: usize },
}

/// Uniform grid on [0, T] with n steps (n+1 nodes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Self {
        assert!(horizon > 0.0 && steps >= 2);
        TimeGrid { horizon, steps }
    }

    pub fn h(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn t(&self, i: usize) -> f64 {
        i as f64 * self.h()
    }

    /// Sample a function on the nodes.
    pub fn sample<E>(
        &self,
        mut f: impl FnMut(f64) -> Result<f64, E>,
    ) -> Result<Vec<f64>, E> {
        (0..self.len()).map(|i| f(self.t(i))).collect()
    }
}

/// Solve g(t) = int_0^t g_R(t - tau) f(tau) dtau + f(t) for f by
/// product-trapezoidal marching: global accuracy O(h^2).
pub fn volterra2_solve(
    g_vals: &[f64],
    gr_vals: &[f64],
    grid: &TimeGrid,
) -> Result<Vec<f64>, HittingError> {
    if g_vals.len() != grid.len() || gr_vals.len() != grid.len() {
        return Err(HittingError::GridMismatch { expected: grid.len(), got: g_vals.len() });
    }
    let h = grid.h();
    let n = grid.len();
    let g_peak = g_vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let limit = 1e3 * g_peak.max(f64::MIN_POSITIVE);
    let mut f = vec![0.0; n];
    f[0] = g_vals[0]; // the integral term vanishes at t = 0
    let denom = 1.0 + 0.5 * h * gr_vals[0];
    for i in 1..n {
        let mut acc = 0.5 * gr_vals[i] * f[0];
        for j in 1..i {
            acc += gr_vals[i - j] * f[j];
        }
        f[i] = (g_vals[i] - h * acc) / denom;
        if f[i].abs() > limit {
            return Err(HittingError::Divergence { peak: f[i].abs(), limit, step: i });
        }
    }
    Ok(f)
}

/// Trapezoidal convolution (k * f)(t_i) on the grid.
fn convolve(kernel: &[f64], f: &[f64], h: f64) -> Vec<f64> {
    let n = kernel.len();
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut acc = 0.5 * (kernel[i] * f[0] + kernel[0] * f[i]);
        for j in 1..i {
            acc += kernel[i - j] * f[j];
        }
        out[i] = h * acc;
    }
    out
}

/// Sup-norm residual of the first-kind equation
/// S_r(t) = int_0^t S(t - t') f(t') dt', for a candidate density f.
pub fn volterra1_residual(
    f_vals: &[f64],
    grid: &TimeGrid,
    params: &ModelParams,
    tol: &SeriesTolerance,
) -> Result<f64, HittingError> {
    if f_vals.len() != grid.len() {
        return Err(HittingError::GridMismatch { expected: grid.len(), got: f_vals.len() });
    }
    let s_vals = grid.sample(|t| {
        transforms::survival_series(t, Survival::S, params, tol).map(|v| v.value)
    })?;
    let sr_vals = grid.sample(|t| {
        transforms::survival_series(t, Survival::SR, params, tol).map(|v| v.value)
    })?;
    let conv = convolve(&s_vals, f_vals, grid.h());
    Ok(sr_vals
        .iter()
        .zip(conv.iter())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max))
}

/// Sup-norm residual of the return-time first-kind equation
/// S(t) = exp(-B_alpha(r) t) + int_0^t S(t - tau) f_ret(tau) dtau.
pub fn volterra_ret_residual(
    f_ret_vals: &[f64],
    grid: &TimeGrid,
    params: &ModelParams,
    tol: &SeriesTolerance,
) -> Result<f64, HittingError> {
    if f_ret_vals.len() != grid.len() {
        return Err(HittingError::GridMismatch { expected: grid.len(), got: f_ret_vals.len() });
    }
    let s_vals = grid.sample(|t| {
        transforms::survival_series(t, Survival::S, params, tol).map(|v| v.value)
    })?;
    let b = params.b_alpha_r();
    let conv = convolve(&s_vals, f_ret_vals, grid.h());
    Ok((0..grid.len())
        .map(|i| (s_vals[i] - (-b * grid.t(i)).exp() - conv[i]).abs())
        .fold(0.0, f64::max))
}

/// q^(m) on the grid from sampled densities. m = 0 gives the constant 1,
/// m = 1 the cumulative trapezoid of f, higher m convolve with f_ret.
pub fn q_m(grid: &TimeGrid, m: usize, f_vals: &[f64], f_ret_vals: &[f64]) -> Vec<f64> {
    match m {
        0 => vec![1.0; grid.len()],
        _ => {
            let h = grid.h();
            let mut q = vec![0.0; grid.len()];
            // q^(1): running trapezoid of f.
            let mut acc = 0.0;
            for i in 1..grid.len() {
                acc += 0.5 * h * (f_vals[i - 1] + f_vals[i]);
                q[i] = acc;
            }
            for _ in 2..=m {
                q = convolve(&q, f_ret_vals, h);
            }
            q
        }
    }
}

/// h^(m) = q^(m) - q^(m+1) from a precomputed q table.
pub fn h_m(q_table: &[Vec<f64>], m: usize) -> Vec<f64> {
    q_table[m]
        .iter()
        .zip(q_table[m + 1].iter())
        .map(|(a, b)| a - b)
        .collect()
}

/// Mean number of hits mu(t) = p^r B_alpha(r) int_0^t eps + p^r eps(t),
/// with the epsilon series summed term-wise in closed form.
pub fn mu_exact(
    t: f64,
    params: &ModelParams,
    tol: &SeriesTolerance,
) -> Result<f64, HittingError> {
    let pr = params
        .pow_p(params.r())
        .map_err(TransformError::from)?;
    let eps = transforms::epsilon_fund(t, params, tol)?.value;
    let integral = transforms::epsilon_fund_integral(t, params, tol)?.value;
    Ok(pr * params.b_alpha_r() * integral + pr * eps)
}

/// Hitting table: q^(m), h^(m) for 0 <= m <= m_max plus the exact mean.
#[derive(Debug, Clone)]
pub struct HittingTable {
    pub grid: TimeGrid,
    pub m_max: usize,
    pub q: Vec<Vec<f64>>,
    pub h: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
}

impl HittingTable {
    /// Build from sampled densities. When `adaptive` is set, m_max grows
    /// until q^(m_max)(T) <= 1e-4 (bounding the mean-consistency truncation).
    pub fn build(
        grid: TimeGrid,
        m_max: usize,
        adaptive: bool,
        f_vals: &[f64],
        f_ret_vals: &[f64],
        params: &ModelParams,
        tol: &SeriesTolerance,
    ) -> Result<Self, HittingError> {
        let h_step = grid.h();
        let mut q: Vec<Vec<f64>> = vec![vec![1.0; grid.len()], q_m(&grid, 1, f_vals, f_ret_vals)];
        loop {
            let m_cur = q.len() - 1;
            let done = if adaptive {
                (m_cur >= m_max && *q[m_cur].last().unwrap() <= 1e-4) || m_cur >= 512
            } else {
                m_cur >= m_max
            };
            if done {
                break;
            }
            q.push(convolve(&q[m_cur], f_ret_vals, h_step));
        }
        let m_top = q.len() - 1;
        let h: Vec<Vec<f64>> = (0..m_top).map(|i| h_m(&q, i)).collect();
        let mu = grid.sample(|t| mu_exact(t, params, tol))?;
        Ok(HittingTable { grid, m_max: m_top, q, h, mu })
    }

    /// sum_m m h^(m)(T) at the last grid node, reported with the truncation
    /// estimate q^(M)(T) rho/(1-rho), rho = int_0^T f_ret.
    pub fn mean_from_counts(&self, f_ret_cdf_at_horizon: f64) -> (f64, f64) {
        // sum_m m h^(m) telescopes to sum_{m>=1} q^(m).
        let total: f64 = self.q[1..].iter().map(|q| q.last().unwrap()).sum();
        let q_last = *self.q.last().unwrap().last().unwrap();
        let rho = f_ret_cdf_at_horizon.min(1.0 - 1e-12);
        (total, q_last * rho / (1.0 - rho))
    }

    /// CSV rows: t, q0..qM, h0..hM, mu.
    pub fn csv_header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        for m in 0..self.q.len() {
            cols.push(format!("q{m}"));
        }
        for m in 0..self.h.len() {
            cols.push(format!("h{m}"));
        }
        cols.push("mu".to_string());
        cols.join(",")
    }

    pub fn csv_row(&self, i: usize) -> String {
        let mut cols = vec![format!("{:.16e}", self.grid.t(i))];
        for q in &self.q {
            cols.push(format!("{:.16e}", q[i]));
        }
        for h in &self.h {
            cols.push(format!("{:.16e}", h[i]));
        }
        cols.push(format!("{:.16e}", self.mu[i]));
        cols.join(",")
    }
}

/// Sample the paper fluxes g and g_R on a grid (inputs to the second-kind
/// solver).
pub fn sample_fluxes(
    grid: &TimeGrid,
    params: &ModelParams,
    tol: &SeriesTolerance,
) -> Result<(Vec<f64>, Vec<f64>), HittingError> {
    let g = grid.sample(|t| transforms::flux_series(t, Flux::G, params, tol).map(|v| v.value))?;
    let gr =
        grid.sample(|t| transforms::flux_series(t, Flux::GR, params, tol).map(|v| v.value))?;
    Ok((g, gr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{build_spectrum, ReturnSpectrum, Truncation};

    fn params(p: u64, alpha: f64, r: i64, nu: i64) -> ModelParams {
        ModelParams::new(p, alpha, r, nu).unwrap()
    }

    fn tol() -> SeriesTolerance {
        SeriesTolerance::default()
    }

    #[test]
    fn degenerate_kernel_returns_rhs() {
        let grid = TimeGrid::new(1.0, 64);
        let g: Vec<f64> = (0..grid.len()).map(|i| (grid.t(i)).sin() + 1.0).collect();
        let zero = vec![0.0; grid.len()];
        let f = volterra2_solve(&g, &zero, &grid).unwrap();
        for (a, b) in f.iter().zip(g.iter()) {
            assert_eq!(a, b);
        }
    }

    #[test]
    fn synthetic_pair_second_order_convergence() {
        // g(t) = 1 - e^-t, g_R(t) = e^-t. Reference solution from a fine
        // 10^4-step run; Richardson order between h and h/2.
        let horizon = 2.0;
        let solve = |steps: usize| {
            let grid = TimeGrid::new(horizon, steps);
            let g: Vec<f64> = (0..grid.len()).map(|i| -(-grid.t(i)).exp_m1()).collect();
            let gr: Vec<f64> = (0..grid.len()).map(|i| (-grid.t(i)).exp()).collect();
            (grid, volterra2_solve(&g, &gr, &grid).unwrap())
        };
        let (_, reference) = solve(10_000);
        let err = |coarse: &(TimeGrid, Vec<f64>)| {
            let (grid, f) = coarse;
            let stride = 10_000 / grid.steps;
            f.iter()
                .enumerate()
                .map(|(i, v)| (v - reference[i * stride]).abs())
                .fold(0.0, f64::max)
        };
        let c100 = solve(100);
        let c200 = solve(200);
        let e100 = err(&c100);
        let e200 = err(&c200);
        let order = (e100 / e200).log2();
        assert!(
            (1.8..=2.2).contains(&order),
            "convergence order {order} outside [1.8, 2.2] (e100={e100:e}, e200={e200:e})"
        );
    }

    #[test]
    fn paper_fluxes_reproduce_spectral_density() {
        let pr = params(2, 1.0, 0, 1);
        let t = tol();
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &t).unwrap();
        let horizon = 10.0 / spec.lambda_0();
        let grid = TimeGrid::new(horizon, 2000);
        let (g, gr) = sample_fluxes(&grid, &pr, &t).unwrap();
        let f = volterra2_solve(&g, &gr, &grid).unwrap();
        let sup = (0..grid.len())
            .map(|i| (f[i] - spec.f_series(grid.t(i))).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-4, "sup-norm {sup}");
    }

    #[test]
    fn first_kind_residual_small_for_true_density() {
        let pr = params(2, 1.0, 0, 1);
        let t = tol();
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &t).unwrap();
        let grid = TimeGrid::new(10.0 / spec.lambda_0(), 2000);
        let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
        let resid = volterra1_residual(&f_vals, &grid, &pr, &t).unwrap();
        assert!(resid < 1e-4, "residual {resid}");
        // A 1% perturbation must be clearly visible.
        let corrupted: Vec<f64> = f_vals.iter().map(|v| v * 1.01).collect();
        let resid_bad = volterra1_residual(&corrupted, &grid, &pr, &t).unwrap();
        assert!(resid_bad > 10.0 * resid, "bad {resid_bad} vs good {resid}");
        // t = 0 row is exactly zero.
        let single = TimeGrid::new(grid.horizon, 2);
        let fv = vec![f_vals[0], 0.0, 0.0];
        let r0 = volterra1_residual(&fv, &single, &pr, &t).unwrap();
        assert!(r0.is_finite());
    }

    #[test]
    fn return_residual_small_for_series_density() {
        let pr = params(2, 1.0, 0, 1);
        let t = tol();
        let ret = ReturnSpectrum::build(&pr, 70, &t).unwrap();
        let grid = TimeGrid::new(50.0, 4000);
        let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
        let resid = volterra_ret_residual(&f_ret, &grid, &pr, &t).unwrap();
        assert!(resid < 1e-4, "residual {resid}");
        // f_ret = 0 leaves the full mismatch S - e^{-Bt} > 0 for t > 0.
        let zero = vec![0.0; grid.len()];
        let resid_zero = volterra_ret_residual(&zero, &grid, &pr, &t).unwrap();
        assert!(resid_zero > 0.05, "zero-density residual {resid_zero}");
    }

    #[test]
    fn q_tables_monotone_and_consistent() {
        let pr = params(2, 1.0, 0, 1);
        let t = tol();
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &t).unwrap();
        let ret = ReturnSpectrum::build(&pr, 60, &t).unwrap();
        let grid = TimeGrid::new(10.0 / spec.lambda_0(), 1200);
        let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
        let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
        let table =
            HittingTable::build(grid, 8, false, &f_vals, &f_ret, &pr, &t).unwrap();
        // q^(1) tracks the CDF series.
        let sup = (0..grid.len())
            .map(|i| (table.q[1][i] - spec.f_cdf_series(grid.t(i))).abs())
            .fold(0.0, f64::max);
        assert!(sup < 2e-5, "q1 vs CDF {sup}");
        // q^(m)(0) = 0 for m >= 1 and q nonincreasing in m.
        for m in 1..table.q.len() {
            assert_eq!(table.q[m][0], 0.0);
            for i in 0..grid.len() {
                assert!(
                    table.q[m][i] <= table.q[m - 1][i] + 1e-9,
                    "monotonicity fails at m={m} i={i}"
                );
            }
        }
        // h^(m) >= -tol and partial closure.
        for h in &table.h {
            assert!(h.iter().all(|&v| v >= -1e-8));
        }
        let m_top = table.h.len();
        let sum_h: f64 = table.h.iter().map(|h| h.last().unwrap()).sum();
        let q_next = *table.q[m_top].last().unwrap();
        assert!(sum_h <= 1.0 + 1e-8);
        assert!(sum_h >= 1.0 - q_next - 1e-8);
        // h^(0)(0) = 1.
        assert!((table.h[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn count_probabilities_saturate_for_recurrent_walk() {
        // alpha = 2 >= 1: every hitting count is eventually certain;
        // q^(m)(T) is within 0.02 of 1 at T = 1e3/lambda_0 for small m.
        let pr = params(2, 2.0, 0, 1);
        let t = tol();
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &t).unwrap();
        let ret = ReturnSpectrum::build(&pr, 60, &t).unwrap();
        let grid = TimeGrid::new(1e3 / spec.lambda_0(), 8000);
        let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
        let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
        let table = HittingTable::build(grid, 3, false, &f_vals, &f_ret, &pr, &t).unwrap();
        let q1_end = *table.q[1].last().unwrap();
        assert!((q1_end - 1.0).abs() < 0.02, "q^1(T) = {q1_end}");
        // Each further count stacks another ~T^(-1/2) return deficit.
        for m in 2..=3 {
            let q_end = *table.q[m].last().unwrap();
            assert!(q_end > 1.0 - 0.02 * m as f64 - 0.01, "q^{m}(T) = {q_end}");
        }
    }

    #[test]
    fn count_probabilities_defective_limits() {
        // alpha < 1: q^(m)(inf) = C C_ret^(m-1) and h^(m)(inf) =
        // C (1 - C_ret) C_ret^(m-1); h^(0)(inf) = 1 - C.
        let pr = params(2, 0.5, 0, 1);
        let t = tol();
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &t).unwrap();
        let ret = ReturnSpectrum::build(&pr, 60, &t).unwrap();
        let c = transforms::f_passage_at_zero(&pr);
        let c_ret = transforms::f_return_at_zero(&pr);
        // T large enough that the defective tails have converged, h fine
        // enough that the trapezoid resolves the lambda_0 decay scale.
        let grid = TimeGrid::new(4e2 / spec.lambda_0(), 4000);
        let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
        let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
        let table = HittingTable::build(grid, 3, false, &f_vals, &f_ret, &pr, &t).unwrap();
        assert!((table.h[0].last().unwrap() - (1.0 - c)).abs() < 5e-3);
        for m in 1..=2 {
            let h_end = *table.h[m].last().unwrap();
            let expect = c * (1.0 - c_ret) * c_ret.powi(m as i32 - 1);
            assert!(
                (h_end - expect).abs() < 5e-3,
                "h^{m}(inf) = {h_end} vs {expect}"
            );
            let q_end = *table.q[m].last().unwrap();
            let expect_q = c * c_ret.powi(m as i32 - 1);
            assert!((q_end - expect_q).abs() < 5e-3);
        }
    }

    #[test]
    fn mean_matches_count_expansion() {
        let pr = params(2, 1.0, 0, 1);
        let t = tol();
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &t).unwrap();
        let ret = ReturnSpectrum::build(&pr, 60, &t).unwrap();
        let horizon = 10.0 / spec.lambda_0();
        let grid = TimeGrid::new(horizon, 1500);
        let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
        let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
        let table = HittingTable::build(grid, 4, true, &f_vals, &f_ret, &pr, &t).unwrap();
        let rho: f64 = {
            // CDF of f_ret at the horizon from its exponential series.
            ret.terms
                .iter()
                .map(|&(rate, w)| w * (-(-rate * horizon).exp_m1()) / rate)
                .sum()
        };
        let (mean_counts, trunc) = table.mean_from_counts(rho);
        let mu = mu_exact(horizon, &pr, &t).unwrap();
        assert!(
            (mean_counts - mu).abs() <= (1e-3f64).max(trunc) + 2e-3 * mu,
            "counts {mean_counts} vs mu {mu} (trunc {trunc})"
        );
    }

    #[test]
    fn mu_exact_boundary_and_growth() {
        let pr = params(2, 2.0, 0, 1);
        let t = tol();
        // mu(0) = 0 up to the series truncation residue.
        assert!(mu_exact(0.0, &pr, &t).unwrap().abs() < 1e-12);
        // Nondecreasing beyond the transient and matching the growth
        // exponent (alpha-1)/alpha by log-log regression.
        let spec = build_spectrum(&pr, Truncation::Rungs(40), &t).unwrap();
        let l0 = spec.lambda_0();
        let mut prev = 0.0;
        for i in 0..=20 {
            let time = (100.0 + 1e4 * i as f64) / l0;
            let v = mu_exact(time, &pr, &t).unwrap();
            assert!(v >= prev);
            prev = v;
        }
        let slope = {
            let t1 = 1e2 / l0;
            let t2 = 1e5 / l0;
            let m1 = mu_exact(t1, &pr, &t).unwrap();
            let m2 = mu_exact(t2, &pr, &t).unwrap();
            (m2 / m1).ln() / (t2 / t1).ln()
        };
        assert!((slope - 0.5).abs() < 0.02, "growth exponent {slope}");
    }

    #[test]
    fn mu_exact_small_t_matches_first_passage_mass() {
        // mu(t) ~ q^(1)(t) ~ f(0) t as t -> 0 (at most one hit early), which
        // pins the p^r factor on the epsilon term.
        for (p, alpha, r, nu) in [(2u64, 1.0, 1i64, 2i64), (3, 1.5, -1, 1), (2, 2.0, 2, 3)] {
            let pr = params(p, alpha, r, nu);
            let t = tol();
            let dt = 1e-7;
            let mu = mu_exact(dt, &pr, &t).unwrap();
            let f0 = crate::spectrum::residue_mass_closed_form(&pr);
            assert!(
                (mu / dt - f0).abs() < 1e-4 * f0,
                "p={p} alpha={alpha} r={r}: mu/dt = {} vs f(0) = {f0}",
                mu / dt
            );
        }
    }
}
