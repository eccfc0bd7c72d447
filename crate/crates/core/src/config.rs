//! JSON run configuration and potential specifications.

use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::SolverConfig;
use crate::energy::random_field;
use crate::error::{Error, Result};
use crate::grid::{FracParams, Grid, ScalarField};
use crate::kernel::KernelMode;
use crate::optimizer::OuterConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Command {
    #[serde(rename = "eig")]
    Eig,
    #[serde(rename = "opt-max-ball")]
    OptMaxBall,
    #[serde(rename = "opt-min-ball")]
    OptMinBall,
    #[serde(rename = "opt-min-rearr")]
    OptMinRearr,
    #[serde(rename = "check")]
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Eig => "eig",
            Command::OptMaxBall => "opt-max-ball",
            Command::OptMinBall => "opt-min-ball",
            Command::OptMinRearr => "opt-min-rearr",
            Command::Check => "check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub a: f64,
    pub b: f64,
}

impl Default for Domain {
    fn default() -> Self {
        Domain { a: 0.0, b: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    Zero,
    Constant(f64),
    Sine {
        amplitude: f64,
        frequency: f64,
    },
    /// CSV file: the `V` column if a header names one, otherwise the first.
    File(PathBuf),
    Random {
        seed: u64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn two() -> f64 {
    2.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    #[serde(rename = "M")]
    pub m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct Outputs {
    pub summary_path: Option<PathBuf>,
    pub fields_path: Option<PathBuf>,
    pub history_path: Option<PathBuf>,
    pub dump_kernel: bool,
    /// Defaults to `kernel.json` next to the config.
    pub kernel_path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckSpec {
    pub picone_fields: usize,
    pub concavity_pairs: usize,
    pub concavity_amplitude: f64,
    pub simplicity_starts: usize,
    pub seed: u64,
}

impl Default for CheckSpec {
    fn default() -> Self {
        CheckSpec {
            picone_fields: 100,
            concavity_pairs: 50,
            concavity_amplitude: 3.0,
            simplicity_starts: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Command,
    #[serde(default)]
    pub domain: Domain,
    #[serde(rename = "N")]
    pub n: usize,
    pub s: f64,
    pub p: f64,
    #[serde(default = "two")]
    pub q: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
    #[serde(default)]
    pub ball: Option<BallSpec>,
    #[serde(default)]
    pub v0: Option<PotentialSpec>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub outer: OuterConfig,
    #[serde(default)]
    pub kernel_mode: KernelMode,
    #[serde(default)]
    pub outputs: Outputs,
    #[serde(default)]
    pub checks: CheckSpec,
}

/// Configuration error naming the offending key.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config key `{}`: {}", self.key, self.message)
    }
}

impl std::error::Error for ConfigError {}

fn key_err(key: &str, message: impl std::fmt::Display) -> ConfigError {
    ConfigError {
        key: key.to_string(),
        message: message.to_string(),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> std::result::Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            let message = inner.to_string();
            // missing fields surface at the parent path; pull the name out
            let key = if path == "." {
                message
                    .split('`')
                    .nth(1)
                    .map(str::to_string)
                    .unwrap_or_else(|| ".".into())
            } else {
                path
            };
            key_err(&key, message)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| key_err("--config", format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> std::result::Result<(), ConfigError> {
        if self.n < 2 {
            return Err(key_err("N", format!("must be at least 2, got {}", self.n)));
        }
        self.grid()?;
        self.params()?;
        self.solver
            .validate()
            .map_err(|e| key_err(&format!("solver.{}", param_name(&e).unwrap_or("?")), e))?;
        let o = &self.outer;
        for (k, v) in [
            ("tol_lambda", o.tol_lambda),
            ("tol_V", o.tol_v),
            ("tol_fp", o.tol_fp),
            ("tol_mono", o.tol_mono),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(key_err(
                    &format!("outer.{k}"),
                    format!("must be nonnegative, got {v}"),
                ));
            }
        }
        if o.max_iters == 0 {
            return Err(key_err("outer.max_iters", "must be positive"));
        }
        if let Some(t) = o.ascent_step0 {
            if !(t > 0.0 && t.is_finite()) {
                return Err(key_err(
                    "outer.ascent_step0",
                    format!("must be positive, got {t}"),
                ));
            }
        }
        match self.command {
            Command::OptMaxBall | Command::OptMinBall => {
                let ball = self
                    .ball
                    .ok_or_else(|| key_err("ball", "required by ball commands"))?;
                if !(ball.m > 0.0 && ball.m.is_finite()) {
                    return Err(key_err(
                        "ball.M",
                        format!("must be positive, got {}", ball.m),
                    ));
                }
            }
            Command::OptMinRearr => {
                if self.v0.is_none() {
                    return Err(key_err("v0", "required by opt-min-rearr"));
                }
            }
            Command::Check => {
                let c = &self.checks;
                if c.picone_fields == 0 {
                    return Err(key_err("checks.picone_fields", "must be positive"));
                }
                if c.concavity_pairs == 0 {
                    return Err(key_err("checks.concavity_pairs", "must be positive"));
                }
                if c.simplicity_starts < 2 {
                    return Err(key_err("checks.simplicity_starts", "must be at least 2"));
                }
            }
            Command::Eig => {}
        }
        Ok(())
    }

    pub fn grid(&self) -> std::result::Result<Grid, ConfigError> {
        Grid::new(self.domain.a, self.domain.b, self.n).map_err(|e| key_err("domain", e))
    }

    pub fn params(&self) -> std::result::Result<FracParams, ConfigError> {
        FracParams::new(self.s, self.p, self.q).map_err(|e| {
            let key = param_name(&e).unwrap_or("s");
            key_err(key, e)
        })
    }
}

fn param_name(e: &Error) -> Option<&'static str> {
    match e {
        Error::InvalidParameter { name, .. } => Some(name),
        _ => None,
    }
}

/// Evaluates a potential specification on `grid`; relative file paths are
/// resolved against `base`.
pub fn load_potential(
    spec: &PotentialSpec,
    grid: Grid,
    base: Option<&Path>,
) -> Result<ScalarField> {
    let (a, b) = (grid.a(), grid.b());
    match spec {
        PotentialSpec::Zero => Ok(ScalarField::zeros(grid)),
        PotentialSpec::Constant(c) => Ok(ScalarField::constant(grid, *c)),
        PotentialSpec::Sine {
            amplitude,
            frequency,
        } => Ok(ScalarField::from_fn(grid, |x| {
            amplitude * (frequency * std::f64::consts::PI * (x - a) / (b - a)).sin()
        })),
        PotentialSpec::Random { seed, amplitude } => {
            if !(*amplitude >= 0.0 && amplitude.is_finite()) {
                return Err(Error::param(
                    "amplitude",
                    format!("must be nonnegative, got {amplitude}"),
                ));
            }
            if *amplitude == 0.0 {
                return Ok(ScalarField::zeros(grid));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(random_field(grid, -amplitude, *amplitude, &mut rng))
        }
        PotentialSpec::File(path) => {
            let path = match base {
                Some(dir) if path.is_relative() => dir.join(path),
                _ => path.clone(),
            };
            let text = fs::read_to_string(&path).map_err(|e| {
                Error::InvalidInput(format!(
                    "cannot read potential file {}: {e}",
                    path.display()
                ))
            })?;
            let values = parse_column(&text).map_err(|m| {
                Error::InvalidInput(format!("potential file {}: {m}", path.display()))
            })?;
            if values.len() != grid.len() {
                return Err(Error::InvalidInput(format!(
                    "potential file {} has {} values, N = {}",
                    path.display(),
                    values.len(),
                    grid.len()
                )));
            }
            ScalarField::new(grid, values)
        }
    }
}

fn parse_column(text: &str) -> std::result::Result<Vec<f64>, String> {
    let mut lines = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .peekable();
    let mut column = 0;
    if let Some(first) = lines.peek() {
        let cells: Vec<&str> = first.split(',').map(str::trim).collect();
        if cells.iter().any(|c| c.parse::<f64>().is_err()) {
            column = cells.iter().position(|c| *c == "V").unwrap_or(0);
            lines.next();
        }
    }
    lines
        .enumerate()
        .map(|(k, line)| {
            let cell = line
                .split(',')
                .nth(column)
                .ok_or_else(|| format!("row {} has no column {column}", k + 1))?
                .trim();
            cell.parse::<f64>()
                .map_err(|_| format!("row {}: `{cell}` is not a number", k + 1))
        })
        .collect()
}
