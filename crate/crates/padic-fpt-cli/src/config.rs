//! Run configuration: model parameters plus per-command numeric options,
//! with precedence command line > config file > built-in default.

use serde::{Deserialize, Serialize};

use padic_fpt::padic::{ModelParams, ParamError};

/// Raw option set as it appears in a JSON config file. Unknown keys are
/// rejected; absent keys fall through to the defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub p: Option<u64>,
    pub alpha: Option<f64>,
    pub r: Option<i64>,
    pub nu: Option<i64>,
    #[serde(rename = "T")]
    pub horizon_t: Option<f64>,
    pub steps: Option<usize>,
    #[serde(rename = "K")]
    pub rungs: Option<u32>,
    pub tail: Option<f64>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub modes: Option<u32>,
    pub kernel: Option<String>,
    pub format: Option<String>,
    pub out: Option<String>,
    pub suite: Option<String>,
}

/// Resolved configuration used by every subcommand.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunConfig {
    pub p: u64,
    pub alpha: f64,
    pub r: i64,
    pub nu: i64,
    /// Time horizon of grids; when absent it defaults to 10/lambda_0.
    #[serde(rename = "T")]
    pub horizon_t: Option<f64>,
    pub steps: usize,
    /// Ladder truncation.
    #[serde(rename = "K")]
    pub rungs: u32,
    /// Optional tail-bound target overriding the rung count.
    pub tail: Option<f64>,
    pub paths: usize,
    /// Monte Carlo horizon; when absent it defaults to 1000/lambda_0.
    pub horizon: Option<f64>,
    pub seed: u64,
    pub modes: u32,
    pub kernel: KernelChoice,
    pub format: OutputFormat,
    pub out: Option<String>,
    pub suite: SuiteChoice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Power,
    Exp,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SuiteChoice {
    Analytic,
    Mc,
    Asymptotic,
    All,
}

#[derive(Debug)]
pub enum ConfigError {
    Param(ParamError),
    File(String),
    Value(String),
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ConfigError::Param(e) => write!(f, "{e}"),
            ConfigError::File(e) => write!(f, "config file: {e}"),
            ConfigError::Value(e) => write!(f, "invalid option: {e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Command-line option values before merging (everything optional so that
/// precedence can be applied).
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub p: Option<u64>,
    pub alpha: Option<f64>,
    pub r: Option<i64>,
    pub nu: Option<i64>,
    pub horizon_t: Option<f64>,
    pub steps: Option<usize>,
    pub rungs: Option<u32>,
    pub tail: Option<f64>,
    pub paths: Option<usize>,
    pub horizon: Option<f64>,
    pub seed: Option<u64>,
    pub modes: Option<u32>,
    pub kernel: Option<KernelChoice>,
    pub format: Option<OutputFormat>,
    pub out: Option<String>,
    pub suite: Option<SuiteChoice>,
}

fn parse_kernel(s: &str) -> Result<KernelChoice, ConfigError> {
    match s {
        "power" => Ok(KernelChoice::Power),
        "exp" => Ok(KernelChoice::Exp),
        "log" => Ok(KernelChoice::Log),
        other => Err(ConfigError::Value(format!("kernel '{other}' (expected power|exp|log)"))),
    }
}

fn parse_format(s: &str) -> Result<OutputFormat, ConfigError> {
    match s {
        "csv" => Ok(OutputFormat::Csv),
        "json" => Ok(OutputFormat::Json),
        other => Err(ConfigError::Value(format!("format '{other}' (expected csv|json)"))),
    }
}

fn parse_suite(s: &str) -> Result<SuiteChoice, ConfigError> {
    match s {
        "analytic" => Ok(SuiteChoice::Analytic),
        "mc" => Ok(SuiteChoice::Mc),
        "asymptotic" => Ok(SuiteChoice::Asymptotic),
        "all" => Ok(SuiteChoice::All),
        other => Err(ConfigError::Value(format!(
            "suite '{other}' (expected analytic|mc|asymptotic|all)"
        ))),
    }
}

/// Merge with precedence: CLI flag > config file > default, then validate
/// the numeric ranges. Nothing is clamped.
pub fn resolve(cli: CliOverrides, file: Option<FileConfig>) -> Result<RunConfig, ConfigError> {
    let file = file.unwrap_or_default();
    let kernel = match (cli.kernel, file.kernel) {
        (Some(k), _) => k,
        (None, Some(s)) => parse_kernel(&s)?,
        (None, None) => KernelChoice::Power,
    };
    let format = match (cli.format, file.format) {
        (Some(v), _) => v,
        (None, Some(s)) => parse_format(&s)?,
        (None, None) => OutputFormat::Csv,
    };
    let suite = match (cli.suite, file.suite) {
        (Some(v), _) => v,
        (None, Some(s)) => parse_suite(&s)?,
        (None, None) => SuiteChoice::All,
    };
    let cfg = RunConfig {
        p: cli.p.or(file.p).unwrap_or(2),
        alpha: cli.alpha.or(file.alpha).unwrap_or(1.0),
        r: cli.r.or(file.r).unwrap_or(0),
        nu: cli.nu.or(file.nu).unwrap_or(1),
        horizon_t: cli.horizon_t.or(file.horizon_t),
        steps: cli.steps.or(file.steps).unwrap_or(2000),
        rungs: cli.rungs.or(file.rungs).unwrap_or(60),
        tail: cli.tail.or(file.tail),
        paths: cli.paths.or(file.paths).unwrap_or(100_000),
        horizon: cli.horizon.or(file.horizon),
        seed: cli.seed.or(file.seed).unwrap_or(42),
        modes: cli.modes.or(file.modes).unwrap_or(5),
        kernel,
        format,
        out: cli.out.or(file.out),
        suite,
    };
    cfg.validate()?;
    Ok(cfg)
}

impl RunConfig {
    pub fn params(&self) -> Result<ModelParams, ParamError> {
        ModelParams::new(self.p, self.alpha, self.r, self.nu)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        self.params().map_err(ConfigError::Param)?;
        if self.steps < 2 || self.steps > 2_000_000 {
            return Err(ConfigError::Value(format!("steps = {} out of [2, 2e6]", self.steps)));
        }
        if let Some(t) = self.horizon_t {
            if !(t > 0.0) || !t.is_finite() {
                return Err(ConfigError::Value(format!("T = {t} must be positive")));
            }
        }
        if let Some(t) = self.tail {
            if !(t > 0.0) {
                return Err(ConfigError::Value(format!("tail = {t} must be positive")));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > 0.0) || !h.is_finite() {
                return Err(ConfigError::Value(format!("horizon = {h} must be positive")));
            }
        }
        if self.rungs < 1 || self.rungs > 4000 {
            return Err(ConfigError::Value(format!("K = {} out of [1, 4000]", self.rungs)));
        }
        if self.paths == 0 || self.paths > 100_000_000 {
            return Err(ConfigError::Value(format!("paths = {} out of [1, 1e8]", self.paths)));
        }
        if self.modes > 200 {
            return Err(ConfigError::Value(format!("modes = {} out of [0, 200]", self.modes)));
        }
        Ok(())
    }
}

pub fn load_file(path: &str) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError::File(format!("{path}: {e}")))?;
    serde_json::from_str(&text).map_err(|e| ConfigError::File(format!("{path}: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn precedence_cli_over_file_over_default() {
        let file = FileConfig { alpha: Some(1.0), p: Some(3), ..Default::default() };
        let cli = CliOverrides { alpha: Some(2.0), ..Default::default() };
        let cfg = resolve(cli, Some(file)).unwrap();
        assert_eq!(cfg.alpha, 2.0); // flag wins
        assert_eq!(cfg.p, 3); // file fills the gap
        assert_eq!(cfg.seed, 42); // default
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = resolve(
            CliOverrides {
                p: Some(5),
                alpha: Some(1.5),
                nu: Some(2),
                horizon_t: Some(12.5),
                tail: Some(1e-9),
                out: Some("x.csv".into()),
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        let back: RunConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_rejected() {
        let err = serde_json::from_str::<FileConfig>("{\"alpha\":1.0,\"bogus\":3}");
        assert!(err.is_err());
    }

    #[test]
    fn invalid_params_rejected() {
        let cli = CliOverrides { p: Some(9), ..Default::default() };
        assert!(matches!(resolve(cli, None), Err(ConfigError::Param(_))));
        let cli = CliOverrides { nu: Some(0), ..Default::default() };
        assert!(resolve(cli, None).is_err());
    }
}
