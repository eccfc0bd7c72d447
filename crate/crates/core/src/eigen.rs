//! First eigenpair of `J(·; V)` on the discrete `L^p` sphere.
//!
//! The solver is projected gradient descent: `u ← |normalize(u - τ Pg)|`,
//! `Pg` the tangential part of the gradient, with Armijo backtracking on `J`. Taking the absolute value never raises
//! the energy, so the iteration stays on the positive ground-state branch.
//! For `p = 2` an independent dense Jacobi eigensolve cross-checks it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dense::jacobi_eigen;
use crate::energy::{
    objective, objective_change, objective_gradient, residual_from_gradient, EnergyContext,
    PowerLaw,
};
use crate::error::{Error, Result};
use crate::grid::{lp_norm, normalize_lp, ScalarField};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Target dual max-norm residual.
    pub tol_res: f64,
    /// Target relative change of λ between accepted steps.
    pub tol_lambda: f64,
    pub max_iters: usize,
    /// Trial step of the first iteration.
    pub step0: f64,
    pub armijo_c: f64,
    /// Backtracking factor in `(0, 1)`.
    pub backtrack: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol_res: 1e-8,
            tol_lambda: 1e-10,
            max_iters: 50_000,
            step0: 1.0,
            armijo_c: 1e-4,
            backtrack: 0.5,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("tol_res", self.tol_res),
            ("tol_lambda", self.tol_lambda),
            ("step0", self.step0),
            ("armijo_c", self.armijo_c),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::param("backtrack", "must lie in (0,1)"));
        }
        if self.armijo_c >= 1.0 {
            return Err(Error::param("armijo_c", "must be < 1"));
        }
        if self.max_iters == 0 {
            return Err(Error::param("max_iters", "must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        SolverConfig { seed, ..self }
    }
}

/// Converged (or best available) first eigenpair.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub lambda: f64,
    /// Positive, `‖u‖_p = 1`.
    pub u: ScalarField,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One accepted descent step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub lambda: f64,
    pub residual: f64,
    pub step: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions<'a> {
    /// Warm start; the seeded random start is used when `None`.
    pub initial: Option<&'a ScalarField>,
    pub record_history: bool,
}

#[derive(Debug, Clone)]
pub struct EigenSolution {
    pub pair: EigenPair,
    pub history: Vec<IterRecord>,
}

fn random_start(ctx: &EnergyContext<'_>, seed: u64) -> Result<ScalarField> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = *ctx.kernel().grid();
    let values = (0..grid.len()).map(|_| rng.gen::<f64>() + 0.1).collect();
    normalize_lp(&ScalarField::new(grid, values)?, ctx.params().p())
}

/// Component of `grad` tangent to the sphere `Σ |u_i|^p h = 1` at `u`.
///
/// Stepping along the raw gradient and renormalizing is a descent direction
/// only for `p = 2`; for other `p` the normal part `Φ_p(u)` is not parallel
/// to `u` and must be removed first.
fn tangent_component(u: &ScalarField, grad: &ScalarField, p: f64) -> ScalarField {
    let law = PowerLaw::new(p);
    let normal: Vec<f64> = u.values().iter().map(|&x| law.phi(x)).collect();
    let nn: f64 = normal.iter().map(|x| x * x).sum();
    let ng: f64 = normal.iter().zip(grad.values()).map(|(a, b)| a * b).sum();
    let c = if nn > 0.0 { ng / nn } else { 0.0 };
    let values = grad
        .values()
        .iter()
        .zip(&normal)
        .map(|(g, n)| g - c * n)
        .collect();
    ScalarField::new(*u.grid(), values).expect("same grid")
}

fn norm_pow(u: &ScalarField, p: f64) -> f64 {
    let law = PowerLaw::new(p);
    u.values().iter().map(|&x| law.abs_pow(x)).sum::<f64>() * u.grid().h()
}

/// Change of the Rayleigh quotient `J(u)/‖u‖_p^p` from `old` to `new`.
///
/// The quotient is 0-homogeneous, so rounding that moves a normalized
/// iterate slightly off the sphere does not pollute the decrement.
fn quotient_change(
    old: &ScalarField,
    new: &ScalarField,
    j_old: f64,
    n_old: f64,
    ctx: &EnergyContext<'_>,
) -> f64 {
    let law = PowerLaw::new(ctx.params().p());
    let h = old.grid().h();
    let dj = objective_change(old, new, ctx);
    let dn = old
        .values()
        .iter()
        .zip(new.values())
        .map(|(&o, &n)| law.abs_pow_diff(n, o))
        .sum::<f64>()
        * h;
    (dj * n_old - j_old * dn) / (n_old * (n_old + dn))
}

/// Projected descent from a seeded positive start.
pub fn solve_first_eigenpair(ctx: &EnergyContext<'_>, cfg: &SolverConfig) -> Result<EigenPair> {
    solve(ctx, cfg, SolveOptions::default()).map(|s| s.pair)
}

/// Projected descent with optional warm start and per-step history.
pub fn solve(
    ctx: &EnergyContext<'_>,
    cfg: &SolverConfig,
    opts: SolveOptions<'_>,
) -> Result<EigenSolution> {
    cfg.validate()?;
    let p = ctx.params().p();
    let mut u = match opts.initial {
        Some(init) => {
            if init.grid() != ctx.kernel().grid() {
                return Err(Error::InvalidInput(
                    "initial guess is on a different grid".into(),
                ));
            }
            normalize_lp(&init.map(f64::abs), p)?
        }
        None => random_start(ctx, cfg.seed)?,
    };
    let mut lambda = objective(&u, ctx);
    if !lambda.is_finite() {
        return Err(Error::NumericalFailure(
            "non-finite energy at the start".into(),
        ));
    }
    let mut grad = objective_gradient(&u, ctx);
    let mut residual = residual_from_gradient(&u, lambda, &grad, p);
    let mut dir = tangent_component(&u, &grad, p);
    let mut history = Vec::new();
    let mut rel_change = f64::INFINITY;
    let mut prev: Option<(ScalarField, ScalarField)> = None;
    let mut last_step = cfg.step0;
    let mut iterations = 0;
    let mut converged = false;

    while iterations < cfg.max_iters {
        if residual <= cfg.tol_res && rel_change <= cfg.tol_lambda {
            converged = true;
            break;
        }
        // Barzilai–Borwein trial step, falling back to a grown previous step
        let mut tau = match &prev {
            Some((u_prev, g_prev)) => {
                let (mut ss, mut sy) = (0.0, 0.0);
                for i in 0..u.len() {
                    let s = u.values()[i] - u_prev.values()[i];
                    let y = dir.values()[i] - g_prev.values()[i];
                    ss += s * s;
                    sy += s * y;
                }
                let bb = ss / sy.abs();
                if bb.is_finite() && bb > 0.0 {
                    bb
                } else {
                    2.0 * last_step
                }
            }
            None => cfg.step0,
        };
        let dir_sq: f64 = dir.values().iter().map(|d| d * d).sum();
        let lambda_raw = objective(&u, ctx);
        let norm_u = norm_pow(&u, p);
        let mut accepted = None;
        for _ in 0..80 {
            let trial = u.axpy(-tau, &dir);
            let cand = match normalize_lp(&trial, p) {
                Ok(c) => c.map(f64::abs),
                Err(_) => {
                    tau *= cfg.backtrack;
                    continue;
                }
            };
            let dj = quotient_change(&u, &cand, lambda_raw, norm_u, ctx);
            if !dj.is_finite() {
                return Err(Error::NumericalFailure(format!(
                    "non-finite energy at iteration {iterations}"
                )));
            }
            // first-order model of the retraction: cand - u ≈ -τ Pg, and g·Pg = |Pg|²
            let slope = -tau * dir_sq;
            if slope < 0.0 && dj <= cfg.armijo_c * slope {
                accepted = Some((cand, dj));
                break;
            }
            tau *= cfg.backtrack;
        }
        let Some((cand, dj)) = accepted else {
            // no descent at working precision: the sphere-critical point is reached
            rel_change = 0.0;
            converged = residual <= cfg.tol_res;
            break;
        };
        iterations += 1;
        // relative to max(|λ|, 1) so potentials with λ near zero still stop
        rel_change = dj.abs() / lambda.abs().max(1.0);
        let new_grad = objective_gradient(&cand, ctx);
        let new_dir = tangent_component(&cand, &new_grad, p);
        prev = Some((
            std::mem::replace(&mut u, cand),
            std::mem::replace(&mut dir, new_dir),
        ));
        grad = new_grad;
        // accumulated decrements keep the recorded sequence exactly monotone
        lambda += dj;
        last_step = tau;
        residual = residual_from_gradient(&u, lambda, &grad, p);
        if opts.record_history {
            history.push(IterRecord {
                iter: iterations,
                lambda,
                residual,
                step: tau,
            });
        }
    }
    if !converged && residual <= cfg.tol_res && rel_change <= cfg.tol_lambda {
        converged = true;
    }
    let lambda = objective(&u, ctx);
    let residual = residual_from_gradient(&u, lambda, &grad, p);
    Ok(EigenSolution {
        pair: EigenPair {
            lambda,
            u,
            residual,
            iterations,
            converged,
        },
        history,
    })
}

/// Symmetric matrix `A` of the quadratic form `J(u; V) = uᵀ A u` for `p = 2`.
pub fn p2_matrix(ctx: &EnergyContext<'_>) -> Result<Vec<f64>> {
    if ctx.params().p() != 2.0 {
        return Err(Error::Unsupported(format!(
            "dense oracle needs p = 2, got p = {}",
            ctx.params().p()
        )));
    }
    let k = ctx.kernel();
    let n = k.len();
    let h = k.grid().h();
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        let mut diag = 0.0;
        for j in 0..n {
            if i != j {
                let w = k.weight(i, j);
                a[i * n + j] = -w;
                diag += w;
            }
        }
        a[i * n + i] = diag + k.rho()[i] * h + ctx.potential().values()[i] * h;
    }
    Ok(a)
}

/// Smallest eigenvalue of `A/h` by cyclic Jacobi, with the positive
/// eigenvector normalized in the h-weighted `L²` norm.
pub fn dense_p2_oracle(ctx: &EnergyContext<'_>) -> Result<(f64, ScalarField)> {
    let mut a = p2_matrix(ctx)?;
    let grid = *ctx.kernel().grid();
    let n = grid.len();
    let h = grid.h();
    a.iter_mut().for_each(|x| *x /= h);
    let (values, vectors) = jacobi_eigen(a, n);
    let mut v = vectors.into_iter().next().expect("n >= 2");
    if v.iter().sum::<f64>() < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
    let u = normalize_lp(&ScalarField::new(grid, v)?, 2.0)?;
    Ok((values[0], u))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplicityReport {
    pub lambdas: Vec<f64>,
    pub max_distance: f64,
    pub lambda_spread: f64,
    /// False when any start failed to converge; the probe is then inconclusive.
    pub all_converged: bool,
    pub passed: bool,
}

pub const SIMPLICITY_DISTANCE_TOL: f64 = 1e-6;
pub const SIMPLICITY_SPREAD_TOL: f64 = 1e-9;

/// Solves from `n_starts` seeds (`cfg.seed`, `cfg.seed + 1`, ...) and
/// compares the normalized positive eigenfunctions pairwise in `L^p`.
pub fn simplicity_probe(
    ctx: &EnergyContext<'_>,
    cfg: &SolverConfig,
    n_starts: usize,
) -> Result<(SimplicityReport, Vec<EigenPair>)> {
    if n_starts < 2 {
        return Err(Error::param("n_starts", "need at least two starts"));
    }
    let p = ctx.params().p();
    let pairs = (0..n_starts as u64)
        .map(|k| solve_first_eigenpair(ctx, &cfg.with_seed(cfg.seed.wrapping_add(k))))
        .collect::<Result<Vec<_>>>()?;
    let mut max_distance: f64 = 0.0;
    for i in 0..pairs.len() {
        for j in (i + 1)..pairs.len() {
            let d = lp_norm(&pairs[i].u.axpy(-1.0, &pairs[j].u), p)?;
            max_distance = max_distance.max(d);
        }
    }
    let lambdas: Vec<f64> = pairs.iter().map(|e| e.lambda).collect();
    let hi = lambdas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let all_converged = pairs.iter().all(|e| e.converged);
    let lambda_spread = hi - lo;
    let passed = all_converged
        && max_distance <= SIMPLICITY_DISTANCE_TOL
        && lambda_spread <= SIMPLICITY_SPREAD_TOL;
    Ok((
        SimplicityReport {
            lambdas,
            max_distance,
            lambda_spread,
            all_converged,
            passed,
        },
        pairs,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundednessReport {
    pub max_u: f64,
    pub refined_max_u: Option<f64>,
    /// `refined max / coarse max` over one refinement doubling.
    pub growth: Option<f64>,
    /// Growth above 2 per doubling is treated as a sign of an unbounded limit.
    pub diverging: bool,
}

/// Sup-norm report for `pair`, optionally against the same problem solved
/// on the doubled grid.
pub fn boundedness_diagnostic(pair: &EigenPair, refined: Option<&EigenPair>) -> BoundednessReport {
    let max_u = pair.u.max();
    let refined_max_u = refined.map(|r| r.u.max());
    let growth = refined_max_u.map(|r| r / max_u);
    BoundednessReport {
        max_u,
        refined_max_u,
        growth,
        diverging: !max_u.is_finite() || growth.is_some_and(|g| !(g <= 2.0)),
    }
}
