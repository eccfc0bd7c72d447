//! Command dispatch for the `fracspec` binary.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::checks::{picone_sweep, positivity_check, PiconeReport, PositivityReport};
use crate::config::{load_potential, Command, ConfigError, RunConfig};
use crate::eigen::{simplicity_probe, solve, IterRecord, SolveOptions};
use crate::energy::EnergyContext;
use crate::grid::ScalarField;
use crate::kernel::{assemble, KernelAssembly};
use crate::optimizer::{
    concavity_check, maximize_over_ball, minimize_over_set, project_onto_ball, AdmissibleSet,
    OptResult, OuterRecord, PotentialProblem,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_UNCONVERGED: i32 = 2;

#[derive(Debug)]
pub enum RunError {
    Config(ConfigError),
    Numerical(crate::Error),
    Io(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(e) => write!(f, "{e}"),
            RunError::Numerical(e) => write!(f, "{e}"),
            RunError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        RunError::Config(e)
    }
}

impl From<crate::Error> for RunError {
    fn from(e: crate::Error) -> Self {
        RunError::Numerical(e)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcavitySummary {
    pub n_pairs: usize,
    pub violations: usize,
    pub worst_gap: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimplicitySummary {
    pub lambdas: Vec<f64>,
    pub max_distance: f64,
    pub lambda_spread: f64,
    pub all_converged: bool,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSummary {
    pub picone: PiconeReport,
    pub concavity: ConcavitySummary,
    pub simplicity: SimplicitySummary,
    pub positivity: Vec<PositivityReport>,
    pub all_passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub command: &'static str,
    pub lambda: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimality_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub comonotonicity_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<CheckSummary>,
    pub wall_time_ms: u64,
    pub config_echo: RunConfig,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: Summary,
    pub exit_code: i32,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        base.join(p)
    } else {
        p.to_path_buf()
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    fs::write(path, contents)
        .map_err(|e| RunError::Io(format!("cannot write {}: {e}", path.display())))
}

fn num(buf: &mut ryu::Buffer, x: f64) -> String {
    if x.is_finite() {
        buf.format_finite(x).to_string()
    } else {
        x.to_string()
    }
}

/// `x,u,V` rows in shortest round-trip decimal form.
pub fn fields_csv(u: &ScalarField, v: &ScalarField) -> String {
    let mut buf = ryu::Buffer::new();
    let mut out = String::from("x,u,V\n");
    for (i, (ui, vi)) in u.values().iter().zip(v.values()).enumerate() {
        let x = u.grid().midpoint(i);
        let _ = writeln!(
            out,
            "{},{},{}",
            num(&mut buf, x),
            num(&mut buf, *ui),
            num(&mut buf, *vi)
        );
    }
    out
}

fn eig_history_csv(history: &[IterRecord]) -> String {
    let mut buf = ryu::Buffer::new();
    let mut out = String::from("iter,lambda,residual\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.iter,
            num(&mut buf, r.lambda),
            num(&mut buf, r.residual)
        );
    }
    out
}

fn outer_history_csv(history: &[OuterRecord]) -> String {
    let mut buf = ryu::Buffer::new();
    let mut out = String::from("k,lambda,opt_residual\n");
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{}",
            r.k,
            num(&mut buf, r.lambda),
            num(&mut buf, r.opt_residual)
        );
    }
    out
}

#[derive(Serialize)]
struct KernelDump<'a> {
    #[serde(rename = "N")]
    n: usize,
    a: f64,
    b: f64,
    h: f64,
    sigma: f64,
    mode: crate::kernel::KernelMode,
    rho: &'a [f64],
    weights: Vec<&'a [f64]>,
}

fn kernel_json(k: &KernelAssembly) -> String {
    let g = k.grid();
    let dump = KernelDump {
        n: k.len(),
        a: g.a(),
        b: g.b(),
        h: g.h(),
        sigma: k.params().sigma(),
        mode: k.mode(),
        rho: k.rho(),
        weights: (0..k.len()).map(|i| k.row(i)).collect(),
    };
    serde_json::to_string(&dump).expect("kernel dump serializes")
}

struct Produced {
    lambda: f64,
    iterations: usize,
    residual: f64,
    converged: bool,
    optimality_residual: Option<f64>,
    status: Option<String>,
    comonotonicity_violations: Option<usize>,
    checks: Option<CheckSummary>,
    fields: Option<(ScalarField, ScalarField)>,
    history: Option<String>,
}

fn from_opt(res: OptResult) -> Produced {
    Produced {
        lambda: res.pair.lambda,
        iterations: res.iterations(),
        residual: res.pair.residual,
        converged: res.converged(),
        optimality_residual: Some(res.optimality_residual),
        status: Some(format!("{:?}", res.status)),
        comonotonicity_violations: res.comonotonicity_violations,
        history: Some(outer_history_csv(&res.history)),
        fields: Some((res.pair.u, res.v_opt)),
        checks: None,
    }
}

/// Runs a validated configuration; relative paths resolve against `base`.
pub fn execute(cfg: &RunConfig, base: &Path, dump_kernel: bool) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    let grid = cfg.grid()?;
    let params = cfg.params()?;
    let kernel = assemble(&params, &grid, cfg.kernel_mode)?;
    let potential = load_potential(&cfg.potential, grid, Some(base))?;
    let problem = PotentialProblem::new(&kernel, cfg.solver);
    let produced = match cfg.command {
        Command::Eig => {
            let ctx = EnergyContext::new(&kernel, potential.clone())?;
            let sol = solve(
                &ctx,
                &cfg.solver,
                SolveOptions {
                    initial: None,
                    record_history: true,
                },
            )?;
            Produced {
                lambda: sol.pair.lambda,
                iterations: sol.pair.iterations,
                residual: sol.pair.residual,
                converged: sol.pair.converged,
                optimality_residual: None,
                status: None,
                comonotonicity_violations: None,
                checks: None,
                history: Some(eig_history_csv(&sol.history)),
                fields: Some((sol.pair.u, potential)),
            }
        }
        Command::OptMaxBall => {
            let m = cfg.ball.expect("validated").m;
            from_opt(maximize_over_ball(
                &problem,
                cfg.q,
                m,
                &cfg.outer,
                Some(&potential),
            )?)
        }
        Command::OptMinBall => {
            let m = cfg.ball.expect("validated").m;
            let init = project_onto_ball(&potential, cfg.q, m)?;
            let set = AdmissibleSet::Ball {
                q: cfg.q,
                radius: m,
            };
            from_opt(minimize_over_set(&problem, &set, &cfg.outer, Some(&init))?)
        }
        Command::OptMinRearr => {
            let v0 = load_potential(cfg.v0.as_ref().expect("validated"), grid, Some(base))?;
            let set = AdmissibleSet::Rearrangement { v0 };
            from_opt(minimize_over_set(&problem, &set, &cfg.outer, None)?)
        }
        Command::Check => run_checks(cfg, &kernel, &problem, potential)?,
    };
    let exit_code = if produced.converged {
        EXIT_OK
    } else {
        EXIT_UNCONVERGED
    };
    let out = &cfg.outputs;
    if let (Some(path), Some((u, v))) = (&out.fields_path, &produced.fields) {
        write_file(&resolve(base, path), &fields_csv(u, v))?;
    }
    if let (Some(path), Some(h)) = (&out.history_path, &produced.history) {
        write_file(&resolve(base, path), h)?;
    }
    if dump_kernel || out.dump_kernel {
        let path = out
            .kernel_path
            .clone()
            .unwrap_or_else(|| PathBuf::from("kernel.json"));
        write_file(&resolve(base, &path), &kernel_json(&kernel))?;
    }
    let summary = Summary {
        command: cfg.command.name(),
        lambda: produced.lambda,
        iterations: produced.iterations,
        residual: produced.residual,
        converged: produced.converged,
        optimality_residual: produced.optimality_residual,
        status: produced.status,
        comonotonicity_violations: produced.comonotonicity_violations,
        checks: produced.checks,
        wall_time_ms: start.elapsed().as_millis() as u64,
        config_echo: cfg.clone(),
    };
    if let Some(path) = &out.summary_path {
        let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        write_file(&resolve(base, path), &(text + "\n"))?;
    }
    Ok(RunOutcome { summary, exit_code })
}

fn run_checks(
    cfg: &RunConfig,
    kernel: &KernelAssembly,
    problem: &PotentialProblem<'_>,
    potential: ScalarField,
) -> Result<Produced, RunError> {
    let c = &cfg.checks;
    let grid = *kernel.grid();
    let picone = picone_sweep(grid, None, cfg.p, c.picone_fields, c.seed)?;
    let conc = concavity_check(problem, c.concavity_pairs, c.concavity_amplitude, c.seed)?;
    let concavity = ConcavitySummary {
        n_pairs: conc.n_pairs,
        violations: conc.violations,
        worst_gap: conc.worst_gap,
        tolerance: conc.tolerance,
        passed: conc.violations == 0,
    };
    let ctx = EnergyContext::new(kernel, potential.clone())?;
    let (simp, pairs) = simplicity_probe(&ctx, &cfg.solver.with_seed(c.seed), c.simplicity_starts)?;
    let positivity: Vec<PositivityReport> = pairs.iter().map(positivity_check).collect();
    let simplicity = SimplicitySummary {
        lambdas: simp.lambdas.clone(),
        max_distance: simp.max_distance,
        lambda_spread: simp.lambda_spread,
        all_converged: simp.all_converged,
        passed: simp.passed,
    };
    let all_passed = picone.passed
        && concavity.passed
        && simplicity.passed
        && positivity.iter().all(|r| r.passed);
    let first = pairs.into_iter().next().expect("at least two starts");
    Ok(Produced {
        lambda: first.lambda,
        iterations: first.iterations,
        residual: first.residual,
        converged: all_passed,
        optimality_residual: None,
        status: None,
        comonotonicity_violations: None,
        checks: Some(CheckSummary {
            picone,
            concavity,
            simplicity,
            positivity,
            all_passed,
        }),
        history: None,
        fields: Some((first.u, potential)),
    })
}

/// Loads `config_path`, runs it and reports on stdout/stderr; returns the
/// process exit code.
pub fn run(config_path: &Path, dump_kernel: bool) -> i32 {
    let result = RunConfig::from_path(config_path)
        .map_err(RunError::from)
        .and_then(|cfg| {
            let base = config_path
                .parent()
                .map(Path::to_path_buf)
                .unwrap_or_default();
            execute(&cfg, &base, dump_kernel)
        });
    match result {
        Ok(outcome) => {
            let s = &outcome.summary;
            if s.config_echo.outputs.summary_path.is_none() {
                println!(
                    "{}",
                    serde_json::to_string_pretty(s).expect("summary serializes")
                );
            } else {
                println!(
                    "{}: lambda = {}, converged = {}, iterations = {}",
                    s.command, s.lambda, s.converged, s.iterations
                );
            }
            outcome.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}
