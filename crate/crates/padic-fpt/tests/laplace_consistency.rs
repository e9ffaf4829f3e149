//! Cross-domain consistency: the time-domain series integrated against
//! e^(-st) must reproduce the closed Laplace forms, and the survival
//! functions must satisfy their balance ODEs.

use padic_fpt::hitting;
use padic_fpt::padic::ModelParams;
use padic_fpt::spectrum::{build_spectrum, Truncation};
use padic_fpt::transforms::{
    self, eval_e, eval_f_passage, eval_j, Flux, LaplacePoint, SeriesTolerance, Survival,
};

fn params(p: u64, alpha: f64, r: i64, nu: i64) -> ModelParams {
    ModelParams::new(p, alpha, r, nu).unwrap()
}

/// Composite Simpson quadrature of f(t) e^(-st) over [0, upper].
fn laplace_quadrature(mut f: impl FnMut(f64) -> f64, s: f64, upper: f64, n: usize) -> f64 {
    let h = upper / n as f64;
    let mut acc = 0.0;
    for i in 0..n {
        let a = i as f64 * h;
        let g = |t: f64, f: &mut dyn FnMut(f64) -> f64| f(t) * (-s * t).exp();
        acc += h / 6.0
            * (g(a, &mut f) + 4.0 * g(a + h / 2.0, &mut f) + g(a + h, &mut f));
    }
    acc
}

#[test]
fn flux_g_reproduces_laplace_transform() {
    let tol = SeriesTolerance::default();
    for (p, alpha, r, nu) in [(2u64, 1.0, 0i64, 1i64), (3, 1.5, -1, 2), (2, 0.5, 0, 2)] {
        let pr = params(p, alpha, r, nu);
        let s = 1.0;
        // 40 decades of e^-t kill the tail far below 1e-6.
        let quad = laplace_quadrature(
            |t| transforms::flux_series(t, Flux::G, &pr, &tol).unwrap().value,
            s,
            40.0,
            4000,
        );
        let e = eval_e(LaplacePoint(s), &pr, &tol).unwrap().value;
        let g = pr.pow_p(r).unwrap() * (pr.b_alpha_r() + s) * e;
        assert!(
            (quad - g).abs() < 1e-6 * g.abs().max(1e-3),
            "p={p} alpha={alpha}: quadrature {quad} vs G(s) {g}"
        );
    }
}

#[test]
fn flux_gr_reproduces_laplace_transform() {
    let tol = SeriesTolerance::default();
    for (p, alpha, r, nu) in [(2u64, 1.0, 0i64, 1i64), (5, 2.0, 1, 2)] {
        let pr = params(p, alpha, r, nu);
        let s = 1.0;
        let quad = laplace_quadrature(
            |t| transforms::flux_series(t, Flux::GR, &pr, &tol).unwrap().value,
            s,
            40.0,
            4000,
        );
        let j = eval_j(LaplacePoint(s), &pr, &tol).unwrap().value;
        let gr = -1.0 + pr.pow_p(r).unwrap() * (pr.b_alpha_r() + s) * j;
        assert!(
            (quad - gr).abs() < 1e-6 * gr.abs().max(1e-3),
            "p={p} alpha={alpha}: quadrature {quad} vs G_R(s) {gr}"
        );
    }
}

#[test]
fn f_series_laplace_round_trip() {
    // Numerical Laplace transform of the spectral density matches F(s) at
    // s in {0.5, 1, 2} within 1e-5.
    let tol = SeriesTolerance::default();
    for (p, alpha, r, nu) in [(2u64, 1.0, 0i64, 1i64), (2, 2.0, 0, 2), (3, 0.5, 0, 1)] {
        let pr = params(p, alpha, r, nu);
        let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol).unwrap();
        for s in [0.5, 1.0, 2.0] {
            // The e^(-st) factor truncates the integral; 60/s decades are
            // plenty next to the 1e-5 target.
            let upper = 60.0 / s;
            let quad = laplace_quadrature(|t| spec.f_series(t), s, upper, 20_000);
            let f = eval_f_passage(LaplacePoint(s), &pr, &tol).unwrap().value;
            assert!(
                (quad - f).abs() < 1e-5,
                "p={p} alpha={alpha} s={s}: {quad} vs {f}"
            );
        }
    }
}

#[test]
fn survival_balance_odes() {
    // dS_r/dt = -B S_r + g and dS/dt = -B S + g_R to O(h^2) of the stencil.
    let tol = SeriesTolerance::default();
    for (p, alpha, r, nu) in [(2u64, 1.0, 0i64, 1i64), (3, 1.5, 1, 2), (2, 0.5, -1, 1)] {
        let pr = params(p, alpha, r, nu);
        let b = pr.b_alpha_r();
        let h = 1e-4;
        for t in [0.3, 1.0, 4.0] {
            let sr = |tt: f64| {
                transforms::survival_series(tt, Survival::SR, &pr, &tol).unwrap().value
            };
            let s = |tt: f64| {
                transforms::survival_series(tt, Survival::S, &pr, &tol).unwrap().value
            };
            let dsr = (sr(t + h) - sr(t - h)) / (2.0 * h);
            let g = transforms::flux_series(t, Flux::G, &pr, &tol).unwrap().value;
            assert!(
                (dsr - (-b * sr(t) + g)).abs() < 1e-6,
                "S_r balance p={p} alpha={alpha} t={t}"
            );
            let ds = (s(t + h) - s(t - h)) / (2.0 * h);
            let gr = transforms::flux_series(t, Flux::GR, &pr, &tol).unwrap().value;
            assert!(
                (ds - (-b * s(t) + gr)).abs() < 1e-6,
                "S balance p={p} alpha={alpha} t={t}"
            );
        }
    }
}

#[test]
fn gaver_stehfest_inverts_passage_transform() {
    // Inverting F(s) numerically agrees with the spectral series (the series
    // is the oracle).
    let tol = SeriesTolerance::default();
    let pr = params(2, 2.0, 0, 1);
    let spec = build_spectrum(&pr, Truncation::Rungs(60), &tol).unwrap();
    let transform = transforms::PassageTransform { params: &pr, tol };
    for t in [0.5, 1.0, 4.0] {
        let series = spec.f_series(t);
        // Gaver-Stehfest smooths over the log-periodic wobble; at t = 1 the
        // wobble is sub-1e-4 and the inversion reaches the series there,
        // further out it certifies only to ~1e-3 relative.
        let gs_tol = if t <= 1.0 { 1e-4 } else { 1e-3 };
        let inv = transforms::laplace_invert(
            &transform,
            t,
            transforms::InversionMethod::GaverStehfest { n: 14 },
        )
        .unwrap();
        assert!(
            (inv.value - series).abs() < gs_tol * series.abs(),
            "GS t={t}: {} vs {series}",
            inv.value
        );
        // The Talbot contour tracks the oscillation itself.
        let inv = transforms::laplace_invert(
            &transform,
            t,
            transforms::InversionMethod::Talbot { m: 24 },
        )
        .unwrap();
        assert!(
            (inv.value - series).abs() < 1e-6 * series.abs(),
            "Talbot t={t}: {} vs {series}",
            inv.value
        );
    }
}

#[test]
fn mu_matches_renewal_identity_through_time() {
    // mu(t) = p^r B int eps + p^r eps against the hitting-table expansion on
    // a modest grid (sharper runs live in the acceptance suite).
    let tol = SeriesTolerance::default();
    let pr = params(3, 1.5, 0, 1);
    let spec = build_spectrum(&pr, Truncation::Rungs(50), &tol).unwrap();
    let ret = padic_fpt::spectrum::ReturnSpectrum::build(&pr, 50, &tol).unwrap();
    let grid = hitting::TimeGrid::new(8.0 / spec.lambda_0(), 1200);
    let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
    let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
    let table = hitting::HittingTable::build(grid, 4, true, &f_vals, &f_ret, &pr, &tol).unwrap();
    let rho: f64 = ret
        .terms
        .iter()
        .map(|&(rate, w)| w * (-(-rate * grid.horizon).exp_m1()) / rate)
        .sum();
    let (mean, trunc) = table.mean_from_counts(rho);
    let mu = *table.mu.last().unwrap();
    assert!(
        (mean - mu).abs() <= (1e-3f64).max(trunc) + 2e-3 * mu,
        "mean {mean} vs mu {mu} (trunc {trunc})"
    );
}
