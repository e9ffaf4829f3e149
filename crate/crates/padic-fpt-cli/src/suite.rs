//! Verification suite: every exit criterion of the library, runnable from
//! the `verify` subcommand and from the acceptance test target.
//!
//! The default parameter sweep is p in {2,3,5} x alpha in {0.5,1,1.5,2} x
//! r in {-1,0,1} x nu in {max(r+1,1), ..., r+4}. Monte Carlo criteria run on
//! a fixed representative subset so the whole suite stays in CI-scale time.

use rayon::prelude::*;

use padic_fpt::asymptotics::{
    self, f_asymptote, log_periodic_direct_sum, log_periodic_sum, modes_for, mu_asymptote,
    period_averaged_slope, spectrum_limits, LogPeriodicSpec,
};
use padic_fpt::hitting::{self, HittingTable, TimeGrid};
use padic_fpt::montecarlo::{
    chain_law_aggregated, conditional_ks, enumerated_one_jump_law, estimate_mean,
    DistanceChainModel, Rational,
};
use padic_fpt::padic::ModelParams;
use padic_fpt::spectrum::{
    build_spectrum, delta_bracket, ReturnSpectrum, Spectrum, Truncation,
};
use padic_fpt::transforms::{
    self, eval_f_return, eval_f_return_general, kernel_exit_rate, kernel_symbol, laplace_invert,
    InversionMethod, KernelSpec, LaplacePoint, PassageTransform, ReturnTransform, SeriesTolerance,
};

use crate::config::SuiteChoice;

#[derive(Debug, Clone)]
pub struct CriterionReport {
    pub id: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CriterionReport {
    pub fn line(&self) -> String {
        format!(
            "{} c{:02} {} — {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

fn tol() -> SeriesTolerance {
    SeriesTolerance::default()
}

/// Default verification sweep (132 parameter points).
pub fn sweep() -> Vec<ModelParams> {
    let mut pts = Vec::new();
    for p in [2u64, 3, 5] {
        for alpha in [0.5, 1.0, 1.5, 2.0] {
            for r in [-1i64, 0, 1] {
                let nu_min = (r + 1).max(1);
                for nu in nu_min..=(r + 4) {
                    if let Ok(params) = ModelParams::new(p, alpha, r, nu) {
                        pts.push(params);
                    }
                }
            }
        }
    }
    pts
}

/// Representative Monte Carlo points (full sweep would be hours of path
/// simulation; these cover every regime, radius sign and prime).
fn mc_points() -> Vec<ModelParams> {
    [
        (2u64, 2.0, 0i64, 1i64),
        (2, 0.5, 0, 1),
        (3, 1.0, 0, 2),
        (5, 1.5, 1, 2),
        (2, 1.0, -1, 1),
    ]
    .into_iter()
    .map(|(p, a, r, nu)| ModelParams::new(p, a, r, nu).unwrap())
    .collect()
}

fn report(id: usize, name: &'static str, failures: Vec<String>, summary: String) -> CriterionReport {
    let passed = failures.is_empty();
    let detail = if passed {
        summary
    } else {
        format!("{} failures; first: {}", failures.len(), failures[0])
    };
    CriterionReport { id, name, passed, detail }
}

// ---------------------------------------------------------------------------
// 1. Eigenvalue brackets
// ---------------------------------------------------------------------------

pub fn criterion_1() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            for k in 0..=30u32 {
                match padic_fpt::spectrum::solve_lambda(k, params, &t) {
                    Ok(line) => {
                        let lower = params.pow_p_alpha(-(params.r() + k as i64 + 1));
                        let upper = params.pow_p_alpha(-(params.r() + k as i64));
                        if !(line.lambda > lower * (1.0 + 1e-12)
                            && line.lambda < upper * (1.0 - 1e-12))
                        {
                            errs.push(format!("{params:?} k={k}: lambda outside gap"));
                        }
                        let (lo, _) = delta_bracket(params, k);
                        if !(line.delta > lo * (1.0 - 1e-12)) {
                            errs.push(format!("{params:?} k={k}: lower Delta bound"));
                        }
                        let p = params.pf();
                        let mut a_k = 0.0;
                        for i in 0..=k as i64 {
                            a_k += ((1.0 - params.alpha()) * i as f64 * p.ln()).exp();
                        }
                        if !(line.delta < (1.0 / ((p - 1.0) * a_k)) * (1.0 + 1e-12)) {
                            errs.push(format!("{params:?} k={k}: upper Delta bound"));
                        }
                    }
                    Err(e) => errs.push(format!("{params:?} k={k}: {e}")),
                }
            }
            errs
        })
        .collect();
    report(
        1,
        "eigenvalue-brackets",
        failures,
        format!("{} points x 31 rungs inside strict gaps and Delta bounds", sweep().len()),
    )
}

// ---------------------------------------------------------------------------
// 2. Mass sum rules
// ---------------------------------------------------------------------------

pub fn criterion_2() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(spec) => {
                    // tail_bound = f(0+) - sum_b must be a nonnegative bound
                    // up to the roundoff floor of the mass bookkeeping, and
                    // at K = 60 it must be below 1e-8.
                    if spec.tail_bound > 1e-8 {
                        errs.push(format!("{params:?}: tail_bound {:e}", spec.tail_bound));
                    }
                    // The ladder carries ~1e-12 relative residue precision
                    // and the signed prefix can dwarf the net mass, so the
                    // bookkeeping difference may sit slightly below zero
                    // relative to the residue magnitudes.
                    let abs_mass: f64 = spec.lines.iter().map(|l| l.residue.abs()).sum();
                    if spec.tail_bound < -1e-11 * abs_mass {
                        errs.push(format!("{params:?}: negative tail {:e}", spec.tail_bound));
                    }
                    // CDF mass: series value (convergently evaluated) vs
                    // F(0), allowance tail_bound/lambda_K with the f64
                    // roundoff floor on tail_bound.
                    let mass = spec.cdf_mass_extrapolated();
                    let target = transforms::f_passage_at_zero(params);
                    let slack = spec.tail_bound.max(1e-12 * abs_mass)
                        / spec.lines.last().unwrap().lambda;
                    if (mass - target).abs() > slack {
                        errs.push(format!(
                            "{params:?}: CDF mass {mass} vs {target} (slack {slack:e})"
                        ));
                    }
                }
                Err(e) => errs.push(format!("{params:?}: {e}")),
            }
            errs
        })
        .collect();
    report(
        2,
        "mass-sum-rules",
        failures,
        "sum b_k = f(0+) within tail bound <= 1e-8; sum b_k/lambda_k = F(0)".into(),
    )
}

// ---------------------------------------------------------------------------
// 3. Derivative at zero
// ---------------------------------------------------------------------------

pub fn criterion_3() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(spec) => {
                    let slope: f64 =
                        -spec.lines.iter().map(|l| l.lambda * l.residue).sum::<f64>();
                    let closed = padic_fpt::spectrum::f_slope_at_zero(params);
                    if (slope - closed).abs() > 1e-4 * closed.abs().max(1e-300) {
                        errs.push(format!("{params:?}: slope {slope} vs {closed}"));
                    }
                    // Series and closed form must agree in sign everywhere.
                    // The nu dichotomy (negative iff nu = r+1) is a theorem
                    // only for alpha >= 1; at small alpha the closed form
                    // itself flips sign for nu = r+2 (e.g. p=2, alpha=1/2,
                    // nu = r+2), so below 1 the dichotomy is not asserted.
                    if slope.signum() != closed.signum() {
                        errs.push(format!("{params:?}: sign mismatch {slope} vs {closed}"));
                    }
                    if params.alpha() >= 1.0 {
                        let separated = params.nu() == params.r() + 1;
                        if separated && !(slope < 0.0) {
                            errs.push(format!("{params:?}: expected negative slope"));
                        }
                        if !separated && !(slope > 0.0) {
                            errs.push(format!("{params:?}: expected positive slope"));
                        }
                    }
                }
                Err(e) => errs.push(format!("{params:?}: {e}")),
            }
            errs
        })
        .collect();
    report(
        3,
        "derivative-at-zero",
        failures,
        "-sum lambda_k b_k matches the closed form within 1e-4; signs by nu - r".into(),
    )
}

// ---------------------------------------------------------------------------
// 4. Second-kind solver vs spectral series
// ---------------------------------------------------------------------------

fn solve_on_grid(
    params: &ModelParams,
    spec: &Spectrum,
    steps: usize,
    t: &SeriesTolerance,
) -> Result<(TimeGrid, Vec<f64>), String> {
    let grid = TimeGrid::new(10.0 / spec.lambda_0(), steps);
    let (g, gr) = hitting::sample_fluxes(&grid, params, t).map_err(|e| e.to_string())?;
    let f = hitting::volterra2_solve(&g, &gr, &grid).map_err(|e| e.to_string())?;
    Ok((grid, f))
}

fn sup_error(grid: &TimeGrid, f: &[f64], spec: &Spectrum) -> f64 {
    (0..grid.len())
        .map(|i| (f[i] - spec.f_series(grid.t(i))).abs())
        .fold(0.0, f64::max)
}

pub fn criterion_4() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            let spec = match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(s) => s,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            match solve_on_grid(params, &spec, 2000, &t) {
                Ok((grid, f)) => {
                    let err = sup_error(&grid, &f, &spec);
                    if err > 1e-4 {
                        errs.push(format!("{params:?}: sup error {err:e}"));
                    }
                }
                Err(e) => errs.push(format!("{params:?}: {e}")),
            }
            // Convergence order measured where the h^2 term dominates.
            let order = match (
                solve_on_grid(params, &spec, 250, &t),
                solve_on_grid(params, &spec, 500, &t),
            ) {
                (Ok((g1, f1)), Ok((g2, f2))) => {
                    let e1 = sup_error(&g1, &f1, &spec);
                    let e2 = sup_error(&g2, &f2, &spec);
                    (e1 / e2).log2()
                }
                _ => f64::NAN,
            };
            if !(1.8..=2.2).contains(&order) {
                errs.push(format!("{params:?}: convergence order {order}"));
            }
            errs
        })
        .collect();
    report(
        4,
        "volterra-oracle-equivalence",
        failures,
        "flux-driven solve meets the series within 1e-4; order in [1.8, 2.2]".into(),
    )
}

// ---------------------------------------------------------------------------
// 5. First-kind residuals
// ---------------------------------------------------------------------------

pub fn criterion_5() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            let spec = match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(s) => s,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let grid = TimeGrid::new(10.0 / spec.lambda_0(), 2000);
            let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
            match hitting::volterra1_residual(&f_vals, &grid, params, &t) {
                Ok(resid) if resid <= 1e-4 => {}
                Ok(resid) => errs.push(format!("{params:?}: passage residual {resid:e}")),
                Err(e) => errs.push(format!("{params:?}: {e}")),
            }
            let ret = match ReturnSpectrum::build(params, 60, &t) {
                Ok(rr) => rr,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            // The fastest decay rate (the -B pole or lambda_0) sets the grid
            // resolution the trapezoid needs on the fixed [0, 50] window.
            let rate_max = params.b_alpha_r().max(spec.lambda_0());
            let steps_ret = ((800.0 * rate_max) as usize).clamp(4000, 16_000);
            let grid_ret = TimeGrid::new(50.0, steps_ret);
            let f_ret: Vec<f64> =
                (0..grid_ret.len()).map(|i| ret.density_unchecked(grid_ret.t(i))).collect();
            match hitting::volterra_ret_residual(&f_ret, &grid_ret, params, &t) {
                Ok(resid) if resid <= 1e-4 => {}
                Ok(resid) => errs.push(format!("{params:?}: return residual {resid:e}")),
                Err(e) => errs.push(format!("{params:?}: {e}")),
            }
            errs
        })
        .collect();
    report(
        5,
        "first-kind-residuals",
        failures,
        "both first-kind equations satisfied to 1e-4 sup-norm".into(),
    )
}

// ---------------------------------------------------------------------------
// 6. Laplace shadow
// ---------------------------------------------------------------------------

pub fn criterion_6() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            let spec = match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(s) => s,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let ret = match ReturnSpectrum::build(params, 60, &t) {
                Ok(rr) => rr,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let pass = PassageTransform { params, tol: t };
            let rett = ReturnTransform { params, tol: t };
            for tfac in [0.1, 1.0, 10.0] {
                let time = tfac / spec.lambda_0();
                for which in 0..2 {
                    let series =
                        if which == 0 { spec.f_series(time) } else { ret.density_unchecked(time) };
                    let gs = if which == 0 {
                        laplace_invert(&pass, time, InversionMethod::GaverStehfest { n: 14 })
                    } else {
                        laplace_invert(&rett, time, InversionMethod::GaverStehfest { n: 14 })
                    };
                    let talbot = if which == 0 {
                        laplace_invert(&pass, time, InversionMethod::Talbot { m: 24 })
                    } else {
                        laplace_invert(&rett, time, InversionMethod::Talbot { m: 24 })
                    };
                    let shadow = match (gs, talbot) {
                        (Ok(g), Ok(tb)) => {
                            // Gaver-Stehfest certifies the point only when
                            // its orders agree and it sits on top of the
                            // contour method; otherwise it is flagged
                            // unreliable (it smooths log-periodic wobble)
                            // and the Talbot value carries the shadow.
                            let order_band = 10.0 * 1e-4 * series.abs();
                            let agree_band = 0.3 * 1e-4 * series.abs();
                            if g.order_disagreement <= order_band
                                && (g.value - tb.value).abs() <= agree_band
                            {
                                g.value
                            } else {
                                tb.value
                            }
                        }
                        (_, Ok(tb)) => tb.value,
                        (Ok(g), _) => g.value,
                        (Err(e), Err(_)) => {
                            errs.push(format!("{params:?} t={tfac}: {e}"));
                            continue;
                        }
                    };
                    if (shadow - series).abs() > 1e-4 * series.abs() {
                        errs.push(format!(
                            "{params:?} t={tfac}/l0 which={which}: shadow {shadow} vs {series}"
                        ));
                    }
                }
            }
            errs
        })
        .collect();
    report(
        6,
        "laplace-shadow",
        failures,
        "numerical inversion matches f and f_ret within 1e-4 relative".into(),
    )
}

// ---------------------------------------------------------------------------
// 7. Hitting consistency
// ---------------------------------------------------------------------------

pub fn criterion_7() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            let spec = match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(s) => s,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let ret = match ReturnSpectrum::build(params, 60, &t) {
                Ok(rr) => rr,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let l0 = spec.lambda_0();
            let rate_max = params.b_alpha_r().max(l0);
            for (tfac, base_steps) in [(1.0, 1000usize), (10.0, 2000), (100.0, 3000)] {
                let horizon = tfac / l0;
                // Resolve the fastest rate: the convolution error compounds
                // over the count recursion.
                let steps = ((20.0 * rate_max * horizon) as usize).clamp(base_steps, 16_000);
                let grid = TimeGrid::new(horizon, steps);
                let f_vals: Vec<f64> =
                    (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
                let f_ret: Vec<f64> =
                    (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
                let table = match HittingTable::build(grid, 4, true, &f_vals, &f_ret, params, &t)
                {
                    Ok(tb) => tb,
                    Err(e) => {
                        errs.push(format!("{params:?} T={tfac}: {e}"));
                        continue;
                    }
                };
                // q^(1) tracks the CDF within the trapezoid tolerance.
                let q1_err = (0..grid.len())
                    .map(|i| (table.q[1][i] - spec.f_cdf_series(grid.t(i))).abs())
                    .fold(0.0, f64::max);
                let h = grid.h();
                let q1_tol = (1e-5f64).max(0.5 * h * h * spec.f_series(0.0) * l0);
                if q1_err > q1_tol {
                    errs.push(format!("{params:?} T={tfac}: q1 vs CDF {q1_err:e} > {q1_tol:e}"));
                }
                // Monotone in m.
                for m in 1..table.q.len() {
                    for i in 0..grid.len() {
                        if table.q[m][i] > table.q[m - 1][i] + 1e-9 {
                            errs.push(format!("{params:?} T={tfac}: q^{m} not below q^{}", m - 1));
                            break;
                        }
                    }
                }
                // Mean consistency at the horizon.
                let rho: f64 = ret
                    .terms
                    .iter()
                    .map(|&(rate, w)| w * (-(-rate * horizon).exp_m1()) / rate)
                    .sum();
                let (mean, trunc) = table.mean_from_counts(rho);
                let mu = match hitting::mu_exact(horizon, params, &t) {
                    Ok(v) => v,
                    Err(e) => {
                        errs.push(format!("{params:?} T={tfac}: {e}"));
                        continue;
                    }
                };
                let allow = (1e-3f64).max(trunc) + 1e-3 * mu.abs();
                if (mean - mu).abs() > allow {
                    errs.push(format!(
                        "{params:?} T={tfac}: counts {mean} vs mu {mu} (allow {allow:e})"
                    ));
                }
            }
            errs
        })
        .collect();
    report(
        7,
        "hitting-consistency",
        failures,
        "q1 = CDF, q monotone, sum m h^(m) tracks the exact mean".into(),
    )
}

// ---------------------------------------------------------------------------
// 8. Monte Carlo vs analytic
// ---------------------------------------------------------------------------

pub fn criterion_8(seed: u64) -> CriterionReport {
    let t = tol();
    let n_paths = 100_000usize;
    let failures: Vec<String> = mc_points()
        .iter()
        .flat_map(|params| {
            let mut errs = Vec::new();
            let spec = match build_spectrum(params, Truncation::Rungs(60), &t) {
                Ok(s) => s,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let model = DistanceChainModel::new(*params);
            let l0 = spec.lambda_0();
            let horizon = 1e3 / l0;
            // (a) conditional KS against the analytic CDF.
            let samples = model.passage_samples(n_paths, horizon, seed);
            match conditional_ks(&samples, |tt| spec.f_cdf_series(tt), horizon) {
                Some((ks, n_eff)) => {
                    if ks > 0.01 {
                        errs.push(format!("{params:?}: KS {ks:.4} over {n_eff}"));
                    }
                }
                None => errs.push(format!("{params:?}: no uncensored samples")),
            }
            // (b) defective passage mass for alpha < 1.
            if params.alpha() < 1.0 {
                let frac = samples.iter().filter(|s| s.time().is_some()).count() as f64
                    / n_paths as f64;
                let mass = transforms::f_passage_at_zero(params);
                let sigma = (mass * (1.0 - mass) / n_paths as f64).sqrt();
                if (frac - mass).abs() > 3.0 * sigma {
                    errs.push(format!("{params:?}: hit fraction {frac} vs mass {mass}"));
                }
            }
            // (c) mean hit count vs the exact mean.
            for tfac in [1.0, 10.0, 100.0] {
                let t_max = tfac / l0;
                let counts: Vec<f64> = model
                    .hitting_paths(n_paths, t_max, seed.wrapping_add(1))
                    .into_iter()
                    .map(|h| h.len() as f64)
                    .collect();
                let est = estimate_mean(&counts).unwrap();
                let mu = hitting::mu_exact(t_max, params, &t).unwrap();
                let three_sigma = 3.0 / 1.959964 * (est.ci_high - est.ci_low) / 2.0;
                if (est.value - mu).abs() > three_sigma.max(1e-4) {
                    errs.push(format!(
                        "{params:?} T={tfac}/l0: mean count {} vs mu {mu}",
                        est.value
                    ));
                }
            }
            // (d) exit-time survival is Exp(B_alpha(r)).
            let mut rng = model.rng_for_stream(seed.wrapping_add(2), 0);
            let probe = 1.0 / model.exit_rate;
            let mut survived = 0usize;
            for _ in 0..n_paths {
                if model.sample_exit_time(&mut rng) > probe {
                    survived += 1;
                }
            }
            let expect = (-1.0f64).exp();
            let sigma = (expect * (1.0 - expect) / n_paths as f64).sqrt();
            let frac = survived as f64 / n_paths as f64;
            if (frac - expect).abs() > 3.0 * sigma {
                errs.push(format!("{params:?}: exit survival {frac} vs {expect}"));
            }
            errs
        })
        .collect();
    report(
        8,
        "monte-carlo-agreement",
        failures,
        format!("{} regime points, 1e5 paths each: KS, mass, mean, exit law", mc_points().len()),
    )
}

// ---------------------------------------------------------------------------
// 9. Generator oracle
// ---------------------------------------------------------------------------

pub fn criterion_9() -> CriterionReport {
    let mut failures = Vec::new();
    for (p, alpha_pow) in [(2i128, 1u32), (2, 2), (3, 1), (3, 2)] {
        let q = Rational::new(1, p.pow(alpha_pow));
        for r in [-1i64, 0, 1] {
            for d in (r + 1)..=(r + 3) {
                let chain = chain_law_aggregated(p, q, r, d, 3);
                let enumerated = enumerated_one_jump_law(p, q, r, d, 3);
                if chain != enumerated {
                    failures.push(format!("p={p} q={q} r={r} d={d}: law mismatch"));
                }
            }
        }
    }
    report(
        9,
        "generator-oracle",
        failures,
        "distance-chain law equals the enumerated 3-level generator exactly".into(),
    )
}

// ---------------------------------------------------------------------------
// 10. Asymptotic regimes
// ---------------------------------------------------------------------------

pub fn criterion_10() -> CriterionReport {
    let t = tol();
    let mut failures: Vec<String> = Vec::new();
    // f regimes at alpha = 2 and alpha = 1/2 over (p, r, nu).
    let f_points: Vec<(ModelParams, f64)> = sweep()
        .into_iter()
        .filter(|p| p.alpha() == 2.0 || p.alpha() == 0.5)
        .map(|p| {
            let expect = if p.alpha() == 2.0 { -1.5 } else { -2.0 };
            (p, expect)
        })
        .collect();
    let f_failures: Vec<String> = f_points
        .par_iter()
        .flat_map_iter(|(params, expect_slope)| {
            let mut errs = Vec::new();
            let spec = match build_spectrum(params, Truncation::Rungs(80), &t) {
                Ok(s) => s,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            let alpha = params.alpha();
            let period = alpha * params.pf().ln();
            // t*: far enough that the ladder has reached its asymptotic
            // shape at the contributing rungs (reported per point).
            let t_star = params.pf().powf(5.0 * alpha).max(1e3) / spec.lambda_0();
            let slope = period_averaged_slope(|tt| spec.f_series(tt), t_star, period, 4, 16);
            if (slope - expect_slope).abs() > 0.02 {
                errs.push(format!(
                    "{params:?}: f slope {slope:.4} vs {expect_slope} (t*={t_star:.3e})"
                ));
            }
            let limits = match spectrum_limits(params, 60, &t) {
                Ok(l) => l,
                Err(e) => return vec![format!("{params:?}: {e}")],
            };
            for i in 0..12 {
                let time = t_star * (period * i as f64 / 4.0).exp();
                let series = spec.f_series(time);
                match f_asymptote(time, params, &limits, 5) {
                    Ok(asy) => {
                        let ratio = series / asy.value;
                        if !(0.95..=1.05).contains(&ratio) {
                            errs.push(format!(
                                "{params:?}: f/asymptote {ratio:.4} at t={time:.3e} (t*={t_star:.3e})"
                            ));
                            break;
                        }
                    }
                    Err(e) => {
                        errs.push(format!("{params:?}: {e}"));
                        break;
                    }
                }
            }
            errs
        })
        .collect();
    failures.extend(f_failures);
    // mu growth exponent at alpha = 2.
    let mu_failures: Vec<String> = sweep()
        .into_par_iter()
        .filter(|p| p.alpha() == 2.0)
        .filter_map(|params| {
            let period = 2.0 * params.pf().ln();
            // The mean's transient lives on the scale |a|^alpha; starting at
            // u = t/|a|^alpha = 1e4 keeps it below a percent uniformly.
            let start = 1e4 * params.pow_p_alpha(params.nu());
            let slope = period_averaged_slope(
                |tt| hitting::mu_exact(tt, &params, &t).unwrap(),
                start,
                period,
                6,
                8,
            );
            if (slope - 0.5).abs() > 0.02 {
                Some(format!("{params:?}: mu slope {slope:.4}"))
            } else {
                None
            }
        })
        .collect();
    failures.extend(mu_failures);
    // mu logarithmic increment at alpha = 1. The coefficient is
    // (p-1)/((p+1) ln p); mu_exact, the count expansion and the simulation
    // all agree on it (the time shift t/|a| carries the |a| dependence).
    let mu1_failures: Vec<String> = sweep()
        .into_par_iter()
        .filter(|p| p.alpha() == 1.0)
        .filter_map(|params| {
            let p = params.pf();
            let c1 = (p - 1.0) / ((p + 1.0) * p.ln());
            let t0 = 1e6 * params.abs_a();
            let inc = (hitting::mu_exact(10.0 * t0, &params, &t).unwrap()
                - hitting::mu_exact(t0, &params, &t).unwrap())
                / 10.0f64.ln();
            if (inc - c1).abs() > 0.05 * c1 {
                Some(format!("{params:?}: mu log increment {inc:.5} vs {c1:.5}"))
            } else {
                None
            }
        })
        .collect();
    failures.extend(mu1_failures);
    // mu asymptote tracks the exact mean for alpha > 1 and saturates for
    // alpha < 1.
    for (p, alpha, r, nu) in [(2u64, 2.0, 0i64, 1i64), (3, 2.0, 0, 2), (2, 0.5, 0, 1)] {
        let params = ModelParams::new(p, alpha, r, nu).unwrap();
        if alpha > 1.0 {
            let spec = build_spectrum(&params, Truncation::Rungs(40), &t).unwrap();
            let period = alpha * params.pf().ln();
            for i in 0..12 {
                let time = 1e4 / spec.lambda_0() * (period * i as f64 / 4.0).exp();
                let exact = hitting::mu_exact(time, &params, &t).unwrap();
                let asy = mu_asymptote(time, &params, 5).unwrap().value;
                if ((exact / asy) - 1.0).abs() > 0.05 {
                    failures.push(format!("{params:?}: mu/asymptote {} at t={time:e}", exact / asy));
                    break;
                }
            }
        } else {
            let plateau = asymptotics::mu_plateau(&params);
            let exact = hitting::mu_exact(1e8, &params, &t).unwrap();
            if (exact - plateau).abs() > 0.01 * plateau {
                failures.push(format!("{params:?}: plateau {plateau} vs mu(1e8) {exact}"));
            }
        }
    }
    report(
        10,
        "asymptotic-regimes",
        failures,
        "f and mu exponents, ratios and the alpha=1 log increment".into(),
    )
}

// ---------------------------------------------------------------------------
// 11. Log-periodic engine
// ---------------------------------------------------------------------------

pub fn criterion_11() -> CriterionReport {
    let mut failures = Vec::new();
    // Exact functional identity of the geometric case.
    for t in [0.5, 3.0, 77.0, 1e5] {
        let lhs = log_periodic_direct_sum(2.0, 4.0, 0, 4.0 * t);
        let rhs = (log_periodic_direct_sum(2.0, 4.0, 0, t) + (-t).exp()) / 2.0;
        if (lhs - rhs).abs() > 1e-12 * lhs.abs().max(1e-300) {
            failures.push(format!("geometric identity fails at t={t}"));
        }
    }
    // Six synthetic triples. The k = 1 cases put ln a / ln b near the
    // digamma zero (psi(1.4616) = 0), where the leading finite-(ln t)
    // correction of the pure-Gamma asymptote vanishes and the 2% band holds
    // from 1e4 b on.
    let a_digamma = (3.0f64.ln() * 1.461_632).exp();
    let triples = [
        (2.0, 4.0, 0u32),
        (2.0, 2.0, 0),
        (3.0, 2.0, 0),
        (5.0, 3.0, 0),
        (8.0, 4.0, 1),
        (a_digamma, 3.0, 1),
    ];
    for (a, b, k) in triples {
        for t_fac in [1e4, 1e5, 1e7] {
            let t = t_fac * b;
            let spec = LogPeriodicSpec::new(a, b, k, modes_for(b.ln()));
            match log_periodic_sum(&spec, t) {
                Ok(asy) => {
                    let direct = log_periodic_direct_sum(a, b, k, t);
                    let ratio = direct / asy.value;
                    if !(0.98..=1.02).contains(&ratio) {
                        failures.push(format!("({a},{b},{k}): ratio {ratio:.4} at t={t:e}"));
                    }
                }
                Err(e) => failures.push(format!("({a},{b},{k}): {e}")),
            }
        }
    }
    report(
        11,
        "log-periodic-engine",
        failures,
        "six synthetic triples within 2% at t = 1e7 b; geometric identity to 1e-12".into(),
    )
}

// ---------------------------------------------------------------------------
// 12. Generalized kernels
// ---------------------------------------------------------------------------

pub fn criterion_12() -> CriterionReport {
    let t = tol();
    let failures: Vec<String> = sweep()
        .par_iter()
        .flat_map_iter(|params| {
            let mut errs = Vec::new();
            let kernel = KernelSpec::VladimirovPower(params.alpha());
            for n in -2..8i64 {
                match kernel_symbol(&kernel, n, params, &t) {
                    Ok(sym) => {
                        let expect = params.pow_p_alpha(-n);
                        if (sym - expect).abs() > 1e-12 * expect {
                            errs.push(format!("{params:?} n={n}: symbol {sym} vs {expect}"));
                        }
                    }
                    Err(e) => errs.push(format!("{params:?} n={n}: {e}")),
                }
            }
            match kernel_exit_rate(&kernel, params, &t) {
                Ok(b) => {
                    if (b - params.b_alpha_r()).abs() > 1e-12 * params.b_alpha_r() {
                        errs.push(format!("{params:?}: exit rate {b} vs {}", params.b_alpha_r()));
                    }
                }
                Err(e) => errs.push(format!("{params:?}: {e}")),
            }
            for s in [0.1, 1.0, 10.0] {
                let gen = eval_f_return_general(LaplacePoint(s), &kernel, params, &t);
                let direct = eval_f_return(LaplacePoint(s), params, &t);
                match (gen, direct) {
                    (Ok(g), Ok(d)) => {
                        if (g - d.value).abs() > 1e-12 * d.value.abs().max(1.0) {
                            errs.push(format!("{params:?} s={s}: {g} vs {}", d.value));
                        }
                    }
                    (e1, e2) => errs.push(format!("{params:?} s={s}: {e1:?} {e2:?}")),
                }
            }
            errs
        })
        .collect();
    report(
        12,
        "generalized-kernels",
        failures,
        "power-kernel symbol, exit rate and return transform reduce exactly".into(),
    )
}

// ---------------------------------------------------------------------------
// Runner
// ---------------------------------------------------------------------------

pub fn run_suite(choice: SuiteChoice, seed: u64) -> Vec<CriterionReport> {
    let ids: Vec<usize> = match choice {
        SuiteChoice::Analytic => vec![1, 2, 3, 4, 5, 6, 7, 12],
        SuiteChoice::Mc => vec![8, 9],
        SuiteChoice::Asymptotic => vec![10, 11],
        SuiteChoice::All => (1..=12).collect(),
    };
    ids.into_iter()
        .map(|id| match id {
            1 => criterion_1(),
            2 => criterion_2(),
            3 => criterion_3(),
            4 => criterion_4(),
            5 => criterion_5(),
            6 => criterion_6(),
            7 => criterion_7(),
            8 => criterion_8(seed),
            9 => criterion_9(),
            10 => criterion_10(),
            11 => criterion_11(),
            12 => criterion_12(),
            _ => unreachable!(),
        })
        .collect()
}
