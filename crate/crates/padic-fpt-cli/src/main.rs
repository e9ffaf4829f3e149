//! Command line front end: spectra, densities, hitting tables, asymptotics,
//! Monte Carlo simulation and the verification suite for the p-adic
//! first-passage toolkit.
//!
//! Exit codes: 0 success, 1 parameter/configuration error, 2 numerical
//! tolerance failure (including failed verification criteria).

use clap::{Parser, Subcommand};

use padic_fpt_cli::{config, output, suite};

use padic_fpt::asymptotics::{f_asymptote, mu_asymptote, spectrum_limits};
use padic_fpt::hitting::{self, HittingTable, TimeGrid};
use padic_fpt::montecarlo::{DistanceChainModel, StepOutcome};
use padic_fpt::spectrum::{build_spectrum, ReturnSpectrum, Truncation};
use padic_fpt::transforms::{
    eval_f_return_general, KernelSpec, LaplacePoint, SeriesTolerance,
};

use config::{CliOverrides, KernelChoice, OutputFormat, RunConfig, SuiteChoice};
use output::{write_output, Table};

#[derive(Parser)]
#[command(
    name = "padic-fpt",
    about = "First passage, first return and hitting statistics of the p-adic Vladimirov jump process",
    after_help = "Workers are capped by the PADIC_FPT_THREADS environment variable.\n\
Exit codes: 0 success, 1 invalid parameters/config, 2 numerical tolerance failure."
)]
struct Cli {
    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<String>,

    /// Prime base p of the field (the space of p-adic numbers).
    #[arg(long, global = true)]
    p: Option<u64>,

    /// Exponent alpha > 0 of the Vladimirov jump kernel |x-y|^(-alpha-1).
    #[arg(long, global = true)]
    alpha: Option<f64>,

    /// Target-ball radius exponent: the ball has radius p^r.
    #[arg(long, global = true, allow_hyphen_values = true)]
    r: Option<i64>,

    /// Center norm exponent: |a|_p = p^nu, nu >= max(r+1, 1).
    #[arg(long, global = true)]
    nu: Option<i64>,

    /// Time horizon of uniform grids (default 10/lambda_0).
    #[arg(long = "T", global = true)]
    horizon_t: Option<f64>,

    /// Number of grid steps for density/hitting tables.
    #[arg(long, global = true)]
    steps: Option<usize>,

    /// Ladder truncation: rungs 0..=K of the eigenvalue ladder.
    #[arg(long = "K", global = true)]
    rungs: Option<u32>,

    /// Target tail bound; extends K until the dropped residue mass is below.
    #[arg(long, global = true)]
    tail: Option<f64>,

    /// Number of Monte Carlo paths.
    #[arg(long, global = true)]
    paths: Option<usize>,

    /// Monte Carlo censoring horizon (default 1000/lambda_0).
    #[arg(long, global = true)]
    horizon: Option<f64>,

    /// Base seed; each path consumes its own counter stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Fourier modes kept on each side of the log-periodic mode sum.
    #[arg(long, global = true)]
    modes: Option<u32>,

    /// Radial jump kernel for the generalized return transform.
    #[arg(long, global = true, value_enum)]
    kernel: Option<KernelChoice>,

    /// Output format for tables.
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,

    /// Output path (default <command>.csv / .json).
    #[arg(long, global = true)]
    out: Option<String>,

    /// Criteria subset for `verify`.
    #[arg(long, global = true, value_enum)]
    suite: Option<SuiteChoice>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the eigenvalue ladder and residues; emit the spectrum as JSON.
    Spectrum,
    /// Tabulate f(t), f_ret(t) and the passage CDF on a uniform grid.
    Density,
    /// Tabulate hitting-count probabilities q^(m), h^(m) and the mean count.
    Hitting,
    /// Evaluate the large-time asymptotes next to the exact series.
    Asymptote,
    /// Simulate distance-chain paths; dump events and print summary stats.
    Simulate,
    /// Run the verification suite and print one line per criterion.
    Verify,
    /// Evaluate the generalized-kernel first-return transform on an s grid.
    Kernels,
}

fn main() {
    if let Ok(threads) = std::env::var("PADIC_FPT_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let file = match cli.config.as_deref().map(config::load_file).transpose() {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let overrides = CliOverrides {
        p: cli.p,
        alpha: cli.alpha,
        r: cli.r,
        nu: cli.nu,
        horizon_t: cli.horizon_t,
        steps: cli.steps,
        rungs: cli.rungs,
        tail: cli.tail,
        paths: cli.paths,
        horizon: cli.horizon,
        seed: cli.seed,
        modes: cli.modes,
        kernel: cli.kernel,
        format: cli.format,
        out: cli.out,
        suite: cli.suite,
    };
    let cfg = match config::resolve(overrides, file) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let result = match cli.command {
        Command::Spectrum => cmd_spectrum(&cfg),
        Command::Density => cmd_density(&cfg),
        Command::Hitting => cmd_hitting(&cfg),
        Command::Asymptote => cmd_asymptote(&cfg),
        Command::Simulate => cmd_simulate(&cfg),
        Command::Verify => return cmd_verify(&cfg),
        Command::Kernels => cmd_kernels(&cfg),
    };
    match result {
        Ok(()) => 0,
        Err(CommandError::Validation(e)) => {
            eprintln!("error: {e}");
            1
        }
        Err(CommandError::Numeric(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

enum CommandError {
    Validation(String),
    Numeric(String),
}

impl From<padic_fpt::padic::ParamError> for CommandError {
    fn from(e: padic_fpt::padic::ParamError) -> Self {
        CommandError::Validation(e.to_string())
    }
}

impl From<padic_fpt::transforms::TransformError> for CommandError {
    fn from(e: padic_fpt::transforms::TransformError) -> Self {
        CommandError::Numeric(e.to_string())
    }
}

impl From<padic_fpt::spectrum::SpectrumError> for CommandError {
    fn from(e: padic_fpt::spectrum::SpectrumError) -> Self {
        CommandError::Numeric(e.to_string())
    }
}

impl From<padic_fpt::hitting::HittingError> for CommandError {
    fn from(e: padic_fpt::hitting::HittingError) -> Self {
        CommandError::Numeric(e.to_string())
    }
}

impl From<padic_fpt::asymptotics::AsymptoticsError> for CommandError {
    fn from(e: padic_fpt::asymptotics::AsymptoticsError) -> Self {
        CommandError::Numeric(e.to_string())
    }
}

fn emit(cfg: &RunConfig, default_name: &str, content: &str) -> Result<String, CommandError> {
    let path = cfg.out.clone().unwrap_or_else(|| default_name.to_string());
    write_output(content, &path).map_err(CommandError::Numeric)?;
    Ok(path)
}

fn build_ladder(cfg: &RunConfig) -> Result<padic_fpt::spectrum::Spectrum, CommandError> {
    let params = cfg.params()?;
    let trunc = match cfg.tail {
        Some(target) => Truncation::TailBound(target),
        None => Truncation::Rungs(cfg.rungs),
    };
    Ok(build_spectrum(&params, trunc, &SeriesTolerance::default())?)
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<(), CommandError> {
    let spec = build_ladder(cfg)?;
    let path = emit(cfg, "spectrum.json", &spec.to_json_string())?;
    println!(
        "{{\"command\":\"spectrum\",\"out\":{path:?},\"K\":{},\"lambda_0\":{:.16e},\"sum_b\":{:.16e},\"tail_bound\":{:.16e}}}",
        spec.k_max,
        spec.lambda_0(),
        spec.sum_b,
        spec.tail_bound
    );
    Ok(())
}

fn cmd_density(cfg: &RunConfig) -> Result<(), CommandError> {
    let params = cfg.params()?;
    let tol = SeriesTolerance::default();
    let spec = build_ladder(cfg)?;
    let ret = ReturnSpectrum::build(&params, cfg.rungs, &tol)?;
    let horizon = cfg.horizon_t.unwrap_or(10.0 / spec.lambda_0());
    let grid = TimeGrid::new(horizon, cfg.steps);
    let mut table = Table::new(vec!["t".into(), "f".into(), "f_ret".into(), "cdf".into()]);
    let mut flagged = 0usize;
    for i in 0..grid.len() {
        let t = grid.t(i);
        let (fr, flag) = ret.density(t);
        flagged += flag as usize;
        table.push(vec![t, spec.f_series(t), fr, spec.f_cdf_series(t)]);
    }
    let ext = match cfg.format {
        OutputFormat::Csv => "density.csv",
        OutputFormat::Json => "density.json",
    };
    let path = emit(cfg, ext, &table.render(cfg.format))?;
    println!(
        "{{\"command\":\"density\",\"out\":{path:?},\"rows\":{},\"horizon\":{horizon:.16e},\"shadow_flagged\":{flagged}}}",
        grid.len()
    );
    Ok(())
}

fn cmd_hitting(cfg: &RunConfig) -> Result<(), CommandError> {
    let params = cfg.params()?;
    let tol = SeriesTolerance::default();
    let spec = build_ladder(cfg)?;
    let ret = ReturnSpectrum::build(&params, cfg.rungs, &tol)?;
    let horizon = cfg.horizon_t.unwrap_or(10.0 / spec.lambda_0());
    let grid = TimeGrid::new(horizon, cfg.steps.min(6000));
    let f_vals: Vec<f64> = (0..grid.len()).map(|i| spec.f_series(grid.t(i))).collect();
    let f_ret: Vec<f64> = (0..grid.len()).map(|i| ret.density_unchecked(grid.t(i))).collect();
    let table = HittingTable::build(grid, 8, true, &f_vals, &f_ret, &params, &tol)?;
    let mut out = Table::new(table.csv_header().split(',').map(String::from).collect());
    for i in 0..grid.len() {
        let row: Vec<f64> = table.csv_row(i).split(',').map(|c| c.parse().unwrap()).collect();
        out.push(row);
    }
    let ext = match cfg.format {
        OutputFormat::Csv => "hitting.csv",
        OutputFormat::Json => "hitting.json",
    };
    let path = emit(cfg, ext, &out.render(cfg.format))?;
    println!(
        "{{\"command\":\"hitting\",\"out\":{path:?},\"m_max\":{},\"mu_at_horizon\":{:.16e}}}",
        table.m_max,
        table.mu.last().unwrap()
    );
    Ok(())
}

fn cmd_asymptote(cfg: &RunConfig) -> Result<(), CommandError> {
    let params = cfg.params()?;
    let tol = SeriesTolerance::default();
    let spec = build_ladder(cfg)?;
    let limits = spectrum_limits(&params, cfg.rungs.min(80), &tol)?;
    let period = params.alpha() * params.pf().ln();
    let t_star = params.pf().powf(5.0 * params.alpha()).max(1e3) / spec.lambda_0();
    let mut table = Table::new(vec![
        "t".into(),
        "f_series".into(),
        "f_asymptote".into(),
        "mu_exact".into(),
        "mu_asymptote".into(),
    ]);
    for i in 0..=(4 * 4) {
        let t = t_star * (period * i as f64 / 4.0).exp();
        let fa = f_asymptote(t, &params, &limits, cfg.modes)?;
        let ma = mu_asymptote(t, &params, cfg.modes)?;
        table.push(vec![
            t,
            spec.f_series(t),
            fa.value,
            hitting::mu_exact(t, &params, &tol)?,
            ma.value,
        ]);
    }
    let ext = match cfg.format {
        OutputFormat::Csv => "asymptote.csv",
        OutputFormat::Json => "asymptote.json",
    };
    let path = emit(cfg, ext, &table.render(cfg.format))?;
    let fa = f_asymptote(t_star, &params, &limits, cfg.modes)?;
    println!(
        "{{\"command\":\"asymptote\",\"out\":{path:?},\"t_star\":{t_star:.16e},\"f_exponent\":{:.16e},\"log_period\":{:.16e},\"delta_limit\":{:.16e}}}",
        fa.leading_exponent, fa.log_period, limits.delta
    );
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig) -> Result<(), CommandError> {
    let params = cfg.params()?;
    let spec = build_ladder(cfg)?;
    let horizon = cfg.horizon.unwrap_or(1e3 / spec.lambda_0());
    let model = DistanceChainModel::new(params);
    // Event dump for the first paths, capped so files stay reasonable. The
    // last column is the new distance exponent or the literal HIT.
    let dump_paths = cfg.paths.min(1000);
    let mut dump = String::from("path_id,event_index,time,distance_exponent_or_HIT\n");
    for pid in 0..dump_paths {
        let path = model.simulate_path(horizon, cfg.seed, pid as u64);
        for (idx, (time, outcome)) in path.events.iter().enumerate() {
            match outcome {
                StepOutcome::Hit => {
                    dump.push_str(&format!("{pid},{idx},{time:.16e},HIT\n"));
                }
                StepOutcome::At(d) => {
                    dump.push_str(&format!("{pid},{idx},{time:.16e},{d}\n"));
                }
            }
        }
    }
    let path = emit(cfg, "paths.csv", &dump)?;
    // Full-size summary statistics.
    let samples = model.passage_samples(cfg.paths, horizon, cfg.seed);
    let hit = samples.iter().filter(|s| s.time().is_some()).count();
    let cdf = spec.f_cdf_series(horizon);
    println!(
        "{{\"command\":\"simulate\",\"out\":{path:?},\"paths\":{},\"dumped\":{dump_paths},\"hit_fraction\":{:.16e},\"analytic_cdf\":{:.16e},\"horizon\":{horizon:.16e},\"seed\":{}}}",
        cfg.paths,
        hit as f64 / cfg.paths as f64,
        cdf,
        cfg.seed
    );
    Ok(())
}

fn cmd_verify(cfg: &RunConfig) -> i32 {
    let reports = suite::run_suite(cfg.suite, cfg.seed);
    let mut all_pass = true;
    for r in &reports {
        println!("{}", r.line());
        all_pass &= r.passed;
    }
    println!(
        "{{\"command\":\"verify\",\"criteria\":{},\"passed\":{}}}",
        reports.len(),
        reports.iter().filter(|r| r.passed).count()
    );
    if all_pass {
        0
    } else {
        2
    }
}

fn cmd_kernels(cfg: &RunConfig) -> Result<(), CommandError> {
    let params = cfg.params()?;
    let tol = SeriesTolerance::default();
    let kernel = match cfg.kernel {
        KernelChoice::Power => KernelSpec::VladimirovPower(cfg.alpha),
        KernelChoice::Exp => KernelSpec::Exponential(cfg.alpha),
        KernelChoice::Log => KernelSpec::Logarithmic(cfg.alpha),
    };
    let b = padic_fpt::transforms::kernel_exit_rate(&kernel, &params, &tol)?;
    let mut table = Table::new(vec!["s".into(), "f_ret".into()]);
    for i in 0..=60 {
        let s = 10.0f64.powf(-2.0 + 4.0 * i as f64 / 60.0);
        let v = eval_f_return_general(LaplacePoint(s), &kernel, &params, &tol)?;
        table.push(vec![s, v]);
    }
    let ext = match cfg.format {
        OutputFormat::Csv => "kernels.csv",
        OutputFormat::Json => "kernels.json",
    };
    let path = emit(cfg, ext, &table.render(cfg.format))?;
    // Symbol table summary for the chosen kernel.
    let sym0 = padic_fpt::transforms::kernel_symbol(&kernel, 0, &params, &tol)?;
    println!(
        "{{\"command\":\"kernels\",\"out\":{path:?},\"exit_rate\":{b:.16e},\"symbol_at_unit\":{sym0:.16e}}}"
    );
    Ok(())
}
