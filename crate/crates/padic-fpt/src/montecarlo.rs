//! Exact stochastic simulation of the ball-projected jump process.
//!
//! Projecting the Vladimirov process onto balls of radius p^r gives a
//! continuous-time Markov chain: each r-ball is left at the constant rate
//! B_alpha(r), and the jump size exponent is r+1+i with the geometric law
//! P(i) = (1 - p^-alpha) p^(-alpha i). Tracking only the ultrametric
//! distance exponent d = log_p |x - a|_p to the target ball center keeps the
//! state one integer:
//!
//! * jump size m < d: distance unchanged (the move happens inside a ball
//!   that does not contain the target);
//! * m > d: new distance is m;
//! * m = d: the destination is uniform on the sphere of radius p^d around
//!   the current ball, so P(hit the target ball) = p^(r-d) p/(p-1),
//!   P(new distance l) = p^(l-d) for r < l < d, P(stay at d) = (p-2)/(p-1).
//!
//! Inside the target ball the same mechanics apply with the next exit at
//! rate B_alpha(r); within-ball moves are invisible to the projection. The
//! chain is exact — no truncation of the space — and each path consumes its
//! own ChaCha stream, so runs are reproducible and embarrassingly parallel.

use num_rational::Ratio;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::padic::ModelParams;

/// Distance-chain parameters: exit rate and jump law.
#[derive(Debug, Clone, Copy)]
pub struct DistanceChainModel {
    pub params: ModelParams,
    /// Exit rate from any r-ball: B_alpha(r).
    pub exit_rate: f64,
    /// p^-alpha, the geometric ratio of the jump-size law.
    q: f64,
}

/// Outcome of one effective jump of the distance chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    /// Entered the target ball.
    Hit,
    /// New distance exponent.
    At(i64),
}

/// One recorded trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainPath {
    pub seed: u64,
    pub stream: u64,
    /// (event time, outcome) for every ball change.
    pub events: Vec<(f64, StepOutcome)>,
    /// Entry times into the target ball.
    pub hits: Vec<f64>,
    pub censored_at: Option<f64>,
}

/// Passage or return sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Sample {
    Time(f64),
    Censored,
}

impl Sample {
    pub fn time(&self) -> Option<f64> {
        match self {
            Sample::Time(t) => Some(*t),
            Sample::Censored => None,
        }
    }
}

impl DistanceChainModel {
    pub fn new(params: ModelParams) -> Self {
        DistanceChainModel {
            params,
            exit_rate: params.b_alpha_r(),
            q: params.pow_p_alpha(-1),
        }
    }

    fn rng(&self, seed: u64, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        rng
    }

    /// Seeded generator on a dedicated stream (for external calibration
    /// checks that want the model's reproducibility scheme).
    pub fn rng_for_stream(&self, seed: u64, stream: u64) -> ChaCha8Rng {
        self.rng(seed, stream)
    }

    /// One holding time at the ball exit rate.
    pub fn sample_exit_time(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.exp_time(rng)
    }

    /// Jump size exponent m = r+1+i, P(i) = (1-q) q^i, by inversion of the
    /// geometric CDF.
    pub fn sample_jump_exponent(&self, rng: &mut ChaCha8Rng) -> i64 {
        let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
        let i = (u.ln() / self.q.ln()).floor() as i64;
        self.params.r() + 1 + i.clamp(0, 1 << 20)
    }

    /// Distance transition given current distance d and jump size m.
    pub fn step_distance(&self, d: i64, m: i64, rng: &mut ChaCha8Rng) -> StepOutcome {
        debug_assert!(d > self.params.r() && m > self.params.r());
        if m > d {
            return StepOutcome::At(m);
        }
        if m < d {
            return StepOutcome::At(d);
        }
        // m == d: uniform destination on the sphere through the target.
        let p = self.params.pf();
        let u: f64 = rng.random();
        if u >= 1.0 / (p - 1.0) {
            return StepOutcome::At(d); // lands in another ball at the same distance
        }
        // Conditioned on dropping below d, w = u (p-1) is uniform on (0,1)
        // and the level law P(level <= l) = p^(l+1-d) inverts geometrically.
        let w = (u * (p - 1.0)).max(f64::MIN_POSITIVE);
        let j = ((1.0 / w).ln() / p.ln()).floor() as i64;
        let level = d - 1 - j.clamp(0, (d - self.params.r()) + 8);
        if level <= self.params.r() {
            StepOutcome::Hit
        } else {
            StepOutcome::At(level)
        }
    }

    fn exp_time(&self, rng: &mut ChaCha8Rng) -> f64 {
        let u: f64 = rng.random();
        -(1.0 - u).ln() / self.exit_rate
    }

    /// First passage time from the uniform law on Z_p: the initial distance
    /// is exactly p^nu for every starting point, so the chain starts at nu.
    pub fn first_passage_sample(&self, horizon: f64, rng: &mut ChaCha8Rng) -> Sample {
        let mut t = 0.0;
        let mut d = self.params.nu();
        loop {
            t += self.exp_time(rng);
            if t > horizon {
                return Sample::Censored;
            }
            let m = self.sample_jump_exponent(rng);
            match self.step_distance(d, m, rng) {
                StepOutcome::Hit => return Sample::Time(t),
                StepOutcome::At(nd) => d = nd,
            }
        }
    }

    /// First return time to the target ball, starting inside it: one exit at
    /// rate B_alpha(r) to distance m, then first passage back.
    pub fn first_return_sample(&self, horizon: f64, rng: &mut ChaCha8Rng) -> Sample {
        let mut t = self.exp_time(rng);
        if t > horizon {
            return Sample::Censored;
        }
        let mut d = self.sample_jump_exponent(rng);
        loop {
            t += self.exp_time(rng);
            if t > horizon {
                return Sample::Censored;
            }
            let m = self.sample_jump_exponent(rng);
            match self.step_distance(d, m, rng) {
                StepOutcome::Hit => return Sample::Time(t),
                StepOutcome::At(nd) => d = nd,
            }
        }
    }

    /// Full hitting path up to time t_max: number of entries into the target
    /// ball and their times. After a hit the chain sits inside the ball until
    /// the next exit.
    pub fn hitting_path(&self, t_max: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let mut hits = Vec::new();
        let mut t = 0.0;
        let mut inside = false;
        let mut d = self.params.nu();
        loop {
            t += self.exp_time(rng);
            if t > t_max {
                return hits;
            }
            let m = self.sample_jump_exponent(rng);
            if inside {
                d = m;
                inside = false;
            } else {
                match self.step_distance(d, m, rng) {
                    StepOutcome::Hit => {
                        hits.push(t);
                        inside = true;
                    }
                    StepOutcome::At(nd) => d = nd,
                }
            }
        }
    }

    /// Recorded trajectory (for CSV dumps and reproducibility checks).
    pub fn simulate_path(&self, horizon: f64, seed: u64, stream: u64) -> ChainPath {
        let mut rng = self.rng(seed, stream);
        let mut events = Vec::new();
        let mut hits = Vec::new();
        let mut t = 0.0;
        let mut inside = false;
        let mut d = self.params.nu();
        loop {
            t += self.exp_time(&mut rng);
            if t > horizon {
                return ChainPath { seed, stream, events, hits, censored_at: Some(horizon) };
            }
            let m = self.sample_jump_exponent(&mut rng);
            let outcome = if inside {
                inside = false;
                d = m;
                StepOutcome::At(m)
            } else {
                match self.step_distance(d, m, &mut rng) {
                    StepOutcome::Hit => {
                        hits.push(t);
                        inside = true;
                        StepOutcome::Hit
                    }
                    StepOutcome::At(nd) => {
                        d = nd;
                        StepOutcome::At(nd)
                    }
                }
            };
            events.push((t, outcome));
        }
    }

    /// Parallel batch of first-passage samples, one ChaCha stream per path.
    pub fn passage_samples(&self, n_paths: usize, horizon: f64, seed: u64) -> Vec<Sample> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.rng(seed, i);
                self.first_passage_sample(horizon, &mut rng)
            })
            .collect()
    }

    /// Parallel batch of first-return samples.
    pub fn return_samples(&self, n_paths: usize, horizon: f64, seed: u64) -> Vec<Sample> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.rng(seed, i);
                self.first_return_sample(horizon, &mut rng)
            })
            .collect()
    }

    /// Parallel batch of hitting paths: per-path hit counts and entry times.
    pub fn hitting_paths(&self, n_paths: usize, t_max: f64, seed: u64) -> Vec<Vec<f64>> {
        (0..n_paths as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = self.rng(seed, i);
                self.hitting_path(t_max, &mut rng)
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// Exact one-jump law (rational arithmetic) and the enumerated generator
// ---------------------------------------------------------------------------

pub type Rational = Ratio<i128>;

/// Composite one-jump law of the distance chain in exact rationals, with
/// q = p^-alpha rational (alpha such that p^alpha is an integer).
///
/// Returns pairs (outcome level, probability): level r means a hit, levels
/// r+1..=d_cap are distances inside the truncated hierarchy, and d_cap+1
/// stands for "beyond the hierarchy".
pub fn chain_one_jump_law(
    p: i128,
    q: Rational,
    r: i64,
    d: i64,
    d_cap: i64,
) -> Vec<(i64, Rational)> {
    assert!(d > r && d <= d_cap);
    let one = Rational::from_integer(1);
    let pr = |e: i64| -> Rational {
        if e >= 0 {
            Rational::from_integer(p.pow(e as u32))
        } else {
            Rational::new(1, p.pow((-e) as u32))
        }
    };
    let mut law: Vec<(i64, Rational)> = Vec::new();
    // P(jump size m) = (1-q) q^(m-r-1).
    let p_m = |m: i64| (one - q) * q.pow((m - r - 1) as i32);
    // m < d: stay at d. m = d: split. m > d: go to m.
    let mut stay = Rational::from_integer(0);
    for m in (r + 1)..d {
        stay += p_m(m);
    }
    let at_d = p_m(d);
    // Split of the m = d case.
    let hit = at_d * pr(r - d) * Rational::new(p, p - 1);
    let mut below: Vec<(i64, Rational)> = Vec::new();
    for l in (r + 1)..d {
        below.push((l, at_d * pr(l - d)));
    }
    stay += at_d * Rational::new(p - 2, p - 1);
    // m > d within the hierarchy.
    let mut above: Vec<(i64, Rational)> = Vec::new();
    for m in (d + 1)..=d_cap {
        above.push((m, p_m(m)));
    }
    // Beyond the hierarchy: P(m > d_cap) = q^(d_cap - r).
    let beyond = q.pow((d_cap - r) as i32);
    law.push((r, hit));
    law.extend(below);
    law.push((d, stay));
    law.extend(above);
    law.push((d_cap + 1, beyond));
    law
}

/// One-jump law from the explicitly enumerated generator on the truncated
/// hierarchy of r-balls inside B_{r+levels}(a), in exact rationals.
///
/// Balls are labeled by digit paths; the rate from ball C to ball C' at
/// distance p^m is kernel_norm * p^r * p^(-(alpha+1) m), and everything is
/// normalized by the exact exit rate B_alpha(r).
pub fn enumerated_one_jump_law(
    p: i128,
    q: Rational,
    r: i64,
    d_start: i64,
    levels: u32,
) -> Vec<(i64, Rational)> {
    assert!(d_start > r && d_start <= r + levels as i64);
    let one = Rational::from_integer(1);
    // kernel_norm = (1/q - 1)/(1 - q/p) = p (1 - q) / (q (p - q)).
    let kappa = Rational::from_integer(p) * (one - q) / (q * (Rational::from_integer(p) - q));
    let pr = |e: i64| -> Rational {
        if e >= 0 {
            Rational::from_integer(p.pow(e as u32))
        } else {
            Rational::new(1, p.pow((-e) as u32))
        }
    };
    // Exit rate B_alpha(r) = q^r (p-1)/(p - q) ... derived from the sphere
    // sums; verified against the sum below.
    let b_exact = {
        // sum over m >= r+1 of kappa (1-1/p) q^m = kappa (1-1/p) q^(r+1)/(1-q)
        kappa * (one - Rational::new(1, p)) * q.pow((r + 1) as i32) / (one - q)
    };
    // Enumerate balls by digit vectors (digit per level, level 1 = radius
    // r+1 sphere structure). Ball index 0 (all digits zero) is the target.
    let n_balls = (p as usize).pow(levels);
    let digits = |idx: usize| -> Vec<usize> {
        let mut v = Vec::with_capacity(levels as usize);
        let mut x = idx;
        for _ in 0..levels {
            v.push(x % p as usize);
            x /= p as usize;
        }
        v
    };
    let dist = |a: usize, b: usize| -> i64 {
        if a == b {
            return r; // same ball
        }
        let da = digits(a);
        let db = digits(b);
        let mut top = 0usize;
        for lvl in 0..levels as usize {
            if da[lvl] != db[lvl] {
                top = lvl + 1;
            }
        }
        r + top as i64
    };
    // Start ball: any ball at distance d_start from the target; pick the one
    // with a single nonzero digit at the right level.
    let start = {
        let lvl = (d_start - r - 1) as usize;
        (p as usize).pow(lvl as u32)
    };
    let mut by_level: Vec<(i64, Rational)> = Vec::new();
    let mut total = Rational::from_integer(0);
    for target_level in r..=(r + levels as i64) {
        let mut mass = Rational::from_integer(0);
        for c in 0..n_balls {
            if c == start {
                continue;
            }
            let m = dist(start, c);
            if m <= r {
                continue;
            }
            // rate C_start -> C_c = kappa p^r p^(-(alpha+1) m)
            //                     = kappa p^r (q/p)^m.
            let rate = kappa * pr(r) * (q / Rational::from_integer(p)).pow(m as i32);
            let c_dist = dist_to_target(c, p, r, levels, &digits);
            if c_dist == target_level {
                mass += rate;
            }
        }
        if mass != Rational::from_integer(0) {
            by_level.push((target_level, mass / b_exact));
            total += mass / b_exact;
        }
    }
    // Jumps out of the hierarchy: rate = kappa (1-1/p) sum_{m > r+levels} q^m.
    let beyond = kappa * (one - Rational::new(1, p)) * q.pow((r + levels as i64 + 1) as i32)
        / (one - q)
        / b_exact;
    by_level.push((r + levels as i64 + 1, beyond));
    total += beyond;
    assert_eq!(total, one, "enumerated law must normalize exactly");
    by_level
}

fn dist_to_target(
    c: usize,
    p: i128,
    r: i64,
    levels: u32,
    digits: &impl Fn(usize) -> Vec<usize>,
) -> i64 {
    if c == 0 {
        return r;
    }
    let d = digits(c);
    let mut top = 0usize;
    for lvl in 0..levels as usize {
        if d[lvl] != 0 {
            top = lvl + 1;
        }
    }
    let _ = p;
    r + top as i64
}

/// Aggregate the chain law so it is directly comparable with the enumerated
/// law (merge the hit level into r, keep distances, keep the beyond bucket).
pub fn chain_law_aggregated(
    p: i128,
    q: Rational,
    r: i64,
    d: i64,
    levels: u32,
) -> Vec<(i64, Rational)> {
    let d_cap = r + levels as i64;
    let raw = chain_one_jump_law(p, q, r, d, d_cap);
    let mut merged: Vec<(i64, Rational)> = Vec::new();
    for (level, mass) in raw {
        if mass == Rational::from_integer(0) {
            continue;
        }
        if let Some(e) = merged.iter_mut().find(|(l, _)| *l == level) {
            e.1 += mass;
        } else {
            merged.push((level, mass));
        }
    }
    merged.sort_by_key(|&(l, _)| l);
    merged
}

// ---------------------------------------------------------------------------
// Estimators
// ---------------------------------------------------------------------------

/// Point estimate with a 95% confidence interval.
#[derive(Debug, Clone, Copy)]
pub struct Estimate {
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Sample mean with the normal-approximation 95% interval.
pub fn estimate_mean(samples: &[f64]) -> Option<Estimate> {
    if samples.is_empty() {
        return None;
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    let half = 1.959964 * (var / n).sqrt();
    Some(Estimate { value: mean, ci_low: mean - half, ci_high: mean + half })
}

/// Dvoretzky-Kiefer-Wolfowitz band half-width at confidence 1 - delta.
pub fn dkw_band(n: usize, delta: f64) -> f64 {
    ((2.0 / delta).ln() / (2.0 * n as f64)).sqrt()
}

/// Kolmogorov-Smirnov distance between the empirical CDF of sorted samples
/// and a reference CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut ks = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    ks
}

/// Conditional KS comparison on [0, horizon]: censored samples are dropped
/// and both CDFs are renormalized by their mass at the horizon.
pub fn conditional_ks(
    samples: &[Sample],
    analytic_cdf: impl Fn(f64) -> f64,
    horizon: f64,
) -> Option<(f64, usize)> {
    let mut times: Vec<f64> = samples.iter().filter_map(|s| s.time()).collect();
    if times.is_empty() {
        return None;
    }
    times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mass = analytic_cdf(horizon);
    let n = times.len();
    let ks = ks_statistic(&times, |t| analytic_cdf(t.min(horizon)) / mass);
    Some((ks, n))
}
