//! Optimization of `V ↦ λ(V)` over an `L^q` ball or a rearrangement class.
//!
//! `λ` is a pointwise minimum of functionals affine in `V`, hence concave,
//! and `|u_V|^p` is a supergradient. Minimization alternates an eigensolve
//! with the exact linear minimization over the admissible set; maximization
//! over the ball is projected supergradient ascent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::eigen::{solve, EigenPair, SolveOptions, SolverConfig};
use crate::energy::{random_field, EnergyContext, PowerLaw};
use crate::error::{Error, Result};
use crate::grid::{lp_norm, ScalarField};
use crate::kernel::KernelAssembly;

/// Admissible class of potentials.
#[derive(Debug, Clone, PartialEq)]
pub enum AdmissibleSet {
    /// `{ V : ‖V‖_q <= radius }`, h-weighted norm.
    Ball { q: f64, radius: f64 },
    /// Permutations of the cell values of `v0`.
    Rearrangement { v0: ScalarField },
}

impl AdmissibleSet {
    pub fn validate(&self) -> Result<()> {
        match self {
            AdmissibleSet::Ball { q, radius } => {
                if !(*q > 1.0 && q.is_finite()) {
                    return Err(Error::param(
                        "q",
                        format!("ball exponent must be > 1, got {q}"),
                    ));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::param(
                        "M",
                        format!("ball radius must be positive, got {radius}"),
                    ));
                }
            }
            AdmissibleSet::Rearrangement { v0 } => {
                if v0.is_empty() {
                    return Err(Error::param(
                        "v0",
                        "rearrangement class needs a nonempty V0",
                    ));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Max,
    Min,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OuterConfig {
    /// Stop when |λ_{k+1} - λ_k| <= tol_lambda · max(1, |λ_k|).
    pub tol_lambda: f64,
    /// Stop when the potential moves less than this in q-norm.
    #[serde(rename = "tol_V")]
    pub tol_v: f64,
    /// Optimality (fixed-point) residual declaring convergence.
    pub tol_fp: f64,
    pub max_iters: usize,
    /// Initial ascent step; `None` picks `radius / ‖|u_0|^p‖_q`.
    pub ascent_step0: Option<f64>,
    /// Comonotonicity tolerance for the rearrangement certificate.
    pub tol_mono: f64,
}

impl Default for OuterConfig {
    fn default() -> Self {
        OuterConfig {
            tol_lambda: 1e-14,
            tol_v: 1e-10,
            tol_fp: 1e-5,
            max_iters: 500,
            ascent_step0: None,
            tol_mono: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum OptStatus {
    Converged,
    /// λ or V stopped moving before the optimality residual met `tol_fp`.
    Stalled,
    MaxIters,
    /// An inner eigensolve failed; the history up to that point is kept.
    SolverFailure(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterRecord {
    pub k: usize,
    pub lambda: f64,
    pub opt_residual: f64,
}

#[derive(Debug, Clone)]
pub struct OptResult {
    pub v_opt: ScalarField,
    pub pair: EigenPair,
    pub history: Vec<OuterRecord>,
    pub optimality_residual: f64,
    pub direction: Direction,
    pub status: OptStatus,
    /// Pairs violating comonotonicity at the end (rearrangement only).
    pub comonotonicity_violations: Option<usize>,
}

impl OptResult {
    pub fn converged(&self) -> bool {
        self.status == OptStatus::Converged
    }

    pub fn iterations(&self) -> usize {
        self.history.len()
    }
}

/// Kernel, inner solver settings and a constant background added to every
/// potential before it reaches the eigensolver.
#[derive(Debug, Clone, Copy)]
pub struct PotentialProblem<'k> {
    pub kernel: &'k KernelAssembly,
    pub solver: SolverConfig,
    pub offset: f64,
}

impl<'k> PotentialProblem<'k> {
    pub fn new(kernel: &'k KernelAssembly, solver: SolverConfig) -> Self {
        PotentialProblem {
            kernel,
            solver,
            offset: 0.0,
        }
    }

    pub fn with_offset(self, offset: f64) -> Self {
        PotentialProblem { offset, ..self }
    }

    pub fn p(&self) -> f64 {
        self.kernel.params().p()
    }

    pub fn q(&self) -> f64 {
        self.kernel.params().q()
    }

    pub fn context(&self, v: &ScalarField) -> Result<EnergyContext<'k>> {
        let v = if self.offset == 0.0 {
            v.clone()
        } else {
            v.shifted(self.offset)
        };
        EnergyContext::new(self.kernel, v)
    }

    /// First eigenpair at `v`, optionally warm-started.
    pub fn eigen(&self, v: &ScalarField, warm: Option<&ScalarField>) -> Result<EigenPair> {
        let ctx = self.context(v)?;
        let sol = solve(
            &ctx,
            &self.solver,
            SolveOptions {
                initial: warm,
                record_history: false,
            },
        )?;
        Ok(sol.pair)
    }

    pub fn lambda(&self, v: &ScalarField) -> Result<f64> {
        Ok(self.eigen(v, None)?.lambda)
    }
}

/// `|u|^p` cellwise.
pub fn density(u: &ScalarField, p: f64) -> ScalarField {
    let law = PowerLaw::new(p);
    u.map(|x| law.abs_pow(x))
}

/// `Σ W_i |u_i|^p h` for the eigenfunction in `pair`.
pub fn derivative_from_pair(pair: &EigenPair, w: &ScalarField, p: f64) -> f64 {
    density(&pair.u, p).dot(w)
}

/// Directional derivative of `λ` at `V` along `W`.
pub fn lambda_derivative(
    problem: &PotentialProblem<'_>,
    v: &ScalarField,
    w: &ScalarField,
) -> Result<f64> {
    let pair = problem.eigen(v, None)?;
    Ok(derivative_from_pair(&pair, w, problem.p()))
}

/// Discrete tangency residual `Σ |V_i|^{q-2} V_i W_i h`.
pub fn tangent_defect(v: &ScalarField, w: &ScalarField, q: f64) -> f64 {
    v.map(|x| x.abs().powf(q - 2.0) * x).dot(w)
}

/// Projects `w` onto the tangent space of the q-sphere at `v`.
pub fn tangent_projection(v: &ScalarField, w: &ScalarField, q: f64) -> ScalarField {
    let n = v.map(|x| x.abs().powf(q - 2.0) * x);
    let nn = n.dot(&n);
    if nn == 0.0 {
        return w.clone();
    }
    w.axpy(-n.dot(w) / nn, &n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMinimizer {
    pub v: ScalarField,
    /// `w ≡ 0`: every admissible potential is a minimizer; `v ≡ 0` returned.
    pub degenerate: bool,
}

/// Minimizer of `V ↦ Σ V_i w_i h` over `set`, for `w >= 0`.
pub fn linear_minimize_over_set(w: &ScalarField, set: &AdmissibleSet) -> Result<LinearMinimizer> {
    set.validate()?;
    if let Some(i) = w.values().iter().position(|&x| !(x >= 0.0)) {
        return Err(Error::InvalidInput(format!(
            "linear weights must be nonnegative, w[{i}] = {}",
            w.values()[i]
        )));
    }
    match set {
        AdmissibleSet::Ball { q, radius } => {
            let shape = w.map(|x| x.powf(1.0 / (q - 1.0)));
            let norm = lp_norm(&shape, *q)?;
            if norm == 0.0 {
                return Ok(LinearMinimizer {
                    v: ScalarField::zeros(*w.grid()),
                    degenerate: true,
                });
            }
            Ok(LinearMinimizer {
                v: shape.scaled(-radius / norm),
                degenerate: false,
            })
        }
        AdmissibleSet::Rearrangement { v0 } => {
            if v0.grid() != w.grid() {
                return Err(Error::InvalidInput(
                    "V0 and w live on different grids".into(),
                ));
            }
            Ok(LinearMinimizer {
                v: opposite_ordering(w, v0),
                degenerate: w.values().iter().all(|&x| x == 0.0),
            })
        }
    }
}

/// Permutation of `v0` placing its largest value on the cell with the
/// smallest `w` (ties in `w` by ascending cell index).
pub fn opposite_ordering(w: &ScalarField, v0: &ScalarField) -> ScalarField {
    let mut cells: Vec<usize> = (0..w.len()).collect();
    cells.sort_by(|&i, &j| w.values()[i].total_cmp(&w.values()[j]));
    let mut vals = v0.values().to_vec();
    vals.sort_by(|a, b| b.total_cmp(a));
    let mut out = vec![0.0; w.len()];
    for (cell, val) in cells.into_iter().zip(vals) {
        out[cell] = val;
    }
    ScalarField::new(*w.grid(), out).expect("same length")
}

/// Number of pairs with `(w_i - w_j)(V_i - V_j) > tol`.
pub fn comonotonicity_violations(w: &ScalarField, v: &ScalarField, tol: f64) -> usize {
    let (wv, vv) = (w.values(), v.values());
    let mut count = 0;
    for i in 0..wv.len() {
        for j in (i + 1)..wv.len() {
            if (wv[i] - wv[j]) * (vv[i] - vv[j]) > tol {
                count += 1;
            }
        }
    }
    count
}

fn set_norm_exponent(set: &AdmissibleSet, problem: &PotentialProblem<'_>) -> f64 {
    match set {
        AdmissibleSet::Ball { q, .. } => *q,
        AdmissibleSet::Rearrangement { .. } => problem.q(),
    }
}

/// Alternating minimization of `λ` over `set`.
///
/// Each outer step solves for `u_k` at `V_k` and sets
/// `V_{k+1} = argmin_{V ∈ set} Σ V |u_k|^p h`, so
/// `λ(V_{k+1}) <= J(u_k; V_{k+1}) <= J(u_k; V_k) = λ(V_k)`.
pub fn minimize_over_set(
    problem: &PotentialProblem<'_>,
    set: &AdmissibleSet,
    outer: &OuterConfig,
    init: Option<&ScalarField>,
) -> Result<OptResult> {
    set.validate()?;
    let grid = *problem.kernel.grid();
    let q = set_norm_exponent(set, problem);
    let p = problem.p();
    let mut v = match (init, set) {
        (Some(v), _) => v.clone(),
        (None, AdmissibleSet::Ball { .. }) => ScalarField::zeros(grid),
        (None, AdmissibleSet::Rearrangement { v0 }) => v0.clone(),
    };
    if v.grid() != &grid {
        return Err(Error::InvalidInput(
            "initial potential is on a different grid".into(),
        ));
    }
    let mut history = Vec::new();
    let mut pair = problem.eigen(&v, None)?;
    let mut status = OptStatus::MaxIters;
    let mut opt_residual = f64::INFINITY;
    for k in 0..outer.max_iters {
        if !pair.converged {
            status = OptStatus::SolverFailure(format!(
                "inner eigensolve did not converge at outer step {k}"
            ));
            break;
        }
        let w = density(&pair.u, p);
        let next = linear_minimize_over_set(&w, set)?.v;
        opt_residual = lp_norm(&v.axpy(-1.0, &next), q)?;
        history.push(OuterRecord {
            k,
            lambda: pair.lambda,
            opt_residual,
        });
        if opt_residual <= outer.tol_fp {
            status = OptStatus::Converged;
            break;
        }
        if opt_residual <= outer.tol_v {
            status = OptStatus::Stalled;
            break;
        }
        let next_pair = match problem.eigen(&next, Some(&pair.u)) {
            Ok(np) => np,
            Err(e) => {
                status = OptStatus::SolverFailure(e.to_string());
                break;
            }
        };
        let stalled =
            (next_pair.lambda - pair.lambda).abs() <= outer.tol_lambda * pair.lambda.abs().max(1.0);
        v = next;
        pair = next_pair;
        if stalled {
            // one more certificate evaluation at the final iterate
            let w = density(&pair.u, p);
            let next = linear_minimize_over_set(&w, set)?.v;
            opt_residual = lp_norm(&v.axpy(-1.0, &next), q)?;
            history.push(OuterRecord {
                k: k + 1,
                lambda: pair.lambda,
                opt_residual,
            });
            status = if opt_residual <= outer.tol_fp {
                OptStatus::Converged
            } else {
                OptStatus::Stalled
            };
            break;
        }
    }
    let comonotonicity_violations = match set {
        AdmissibleSet::Rearrangement { .. } => Some(comonotonicity_violations(
            &density(&pair.u, p),
            &v,
            outer.tol_mono,
        )),
        AdmissibleSet::Ball { .. } => None,
    };
    Ok(OptResult {
        v_opt: v,
        pair,
        history,
        optimality_residual: opt_residual,
        direction: Direction::Min,
        status,
        comonotonicity_violations,
    })
}

/// Maximization over a rearrangement class is not representable: the
/// maximizer lives in the weak closure, which permutations cannot reach.
pub fn maximize_over_set(
    problem: &PotentialProblem<'_>,
    set: &AdmissibleSet,
    outer: &OuterConfig,
    init: Option<&ScalarField>,
) -> Result<OptResult> {
    match set {
        AdmissibleSet::Ball { q, radius } => maximize_over_ball(problem, *q, *radius, outer, init),
        AdmissibleSet::Rearrangement { .. } => Err(Error::Unsupported(
            "maximizing over a rearrangement class needs its weak closure, \
             which a permutation class on a grid cannot represent"
                .into(),
        )),
    }
}

/// Solves `x + μ q x^{q-1} = y` for `x ∈ [0, y]`, `y >= 0`.
fn shrink_component(y: f64, mu: f64, q: f64) -> f64 {
    if y == 0.0 {
        return 0.0;
    }
    let (mut lo, mut hi) = (0.0, y);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid + mu * q * mid.powf(q - 1.0) > y {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-17 * y {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Nearest point of the ball `‖V‖_q <= radius` in the h-weighted `L²` metric.
///
/// Radial scaling for `q = 2`; a multiplier search otherwise.
pub fn project_onto_ball(v: &ScalarField, q: f64, radius: f64) -> Result<ScalarField> {
    let norm = lp_norm(v, q)?;
    if norm <= radius {
        return Ok(v.clone());
    }
    if q == 2.0 {
        return Ok(v.scaled(radius / norm));
    }
    let target = radius.powf(q);
    let h = v.grid().h();
    let eval = |mu: f64| -> (ScalarField, f64) {
        let x = v.map(|y| y.signum() * shrink_component(y.abs(), mu, q));
        let s = x.values().iter().map(|t| t.abs().powf(q)).sum::<f64>() * h;
        (x, s)
    };
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while eval(hi).1 > target {
        hi *= 4.0;
        if hi > 1e300 {
            return Err(Error::NumericalFailure(
                "ball projection multiplier diverged".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eval(mid).1 > target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let (x, _) = eval(hi);
    // remove the bisection slack so the result sits on the sphere
    let n = lp_norm(&x, q)?;
    Ok(if n > 0.0 { x.scaled(radius / n) } else { x })
}

/// `radius · w^{1/(q-1)} / ‖w^{1/(q-1)}‖_q`, the maximizer of the
/// linearization `Σ V w h` over the ball.
pub fn ball_fixed_point(w: &ScalarField, q: f64, radius: f64) -> Result<ScalarField> {
    let lm = linear_minimize_over_set(w, &AdmissibleSet::Ball { q, radius })?;
    Ok(lm.v.scaled(-1.0))
}

/// Projected supergradient ascent of `λ` over `‖V‖_q <= radius` with steps
/// `t_k = t_0 / √(k+1)`.
pub fn maximize_over_ball(
    problem: &PotentialProblem<'_>,
    q: f64,
    radius: f64,
    outer: &OuterConfig,
    init: Option<&ScalarField>,
) -> Result<OptResult> {
    AdmissibleSet::Ball { q, radius }.validate()?;
    let grid = *problem.kernel.grid();
    let p = problem.p();
    let mut v = match init {
        Some(v0) => {
            if v0.grid() != &grid {
                return Err(Error::InvalidInput(
                    "initial potential is on a different grid".into(),
                ));
            }
            project_onto_ball(v0, q, radius)?
        }
        None => ScalarField::zeros(grid),
    };
    let mut history = Vec::new();
    let mut status = OptStatus::MaxIters;
    let mut warm: Option<ScalarField> = None;
    let mut best: Option<(ScalarField, EigenPair, f64)> = None;
    let mut last: Option<(ScalarField, EigenPair, f64)> = None;
    let mut t0 = outer.ascent_step0;
    for k in 0..outer.max_iters {
        let pair = match problem.eigen(&v, warm.as_ref()) {
            Ok(pr) if pr.converged => pr,
            Ok(_) => {
                status = OptStatus::SolverFailure(format!(
                    "inner eigensolve did not converge at outer step {k}"
                ));
                break;
            }
            Err(e) => {
                status = OptStatus::SolverFailure(e.to_string());
                break;
            }
        };
        let w = density(&pair.u, p);
        let fp = ball_fixed_point(&w, q, radius)?;
        let residual = lp_norm(&v.axpy(-1.0, &fp), q)?;
        history.push(OuterRecord {
            k,
            lambda: pair.lambda,
            opt_residual: residual,
        });
        if best.as_ref().is_none_or(|b| pair.lambda > b.1.lambda) {
            best = Some((v.clone(), pair.clone(), residual));
        }
        warm = Some(pair.u.clone());
        last = Some((v.clone(), pair, residual));
        if residual <= outer.tol_fp {
            status = OptStatus::Converged;
            break;
        }
        let step0 = *t0.get_or_insert_with(|| {
            let wn = lp_norm(&w, q).unwrap_or(0.0);
            if wn > 0.0 {
                radius / wn
            } else {
                1.0
            }
        });
        let step = step0 / ((k + 1) as f64).sqrt();
        let next = project_onto_ball(&v.axpy(step, &w), q, radius)?;
        if lp_norm(&next.axpy(-1.0, &v), q)? <= outer.tol_v {
            status = OptStatus::Stalled;
            break;
        }
        v = next;
    }
    let chosen = if status == OptStatus::Converged {
        last
    } else {
        best
    };
    let Some((v_end, pair_end, residual_end)) = chosen else {
        return Err(Error::NumericalFailure(format!(
            "no eigensolve succeeded during ball maximization: {status:?}"
        )));
    };
    // final iterate on the positive part of the sphere
    let positive = v_end.map(|x| x.max(0.0));
    let pn = lp_norm(&positive, q)?;
    let (v_opt, pair, optimality_residual) = if pn > 0.0 && (positive != v_end || pn != radius) {
        let v_opt = positive.scaled(radius / pn);
        match problem.eigen(&v_opt, Some(&pair_end.u)) {
            Ok(pr) if pr.converged => {
                let fp = ball_fixed_point(&density(&pr.u, p), q, radius)?;
                let r = lp_norm(&v_opt.axpy(-1.0, &fp), q)?;
                (v_opt, pr, r)
            }
            _ => (v_end, pair_end, residual_end),
        }
    } else {
        (v_end, pair_end, residual_end)
    };
    if status == OptStatus::Converged && optimality_residual > outer.tol_fp {
        status = OptStatus::Stalled;
    }
    Ok(OptResult {
        v_opt,
        pair,
        history,
        optimality_residual,
        direction: Direction::Max,
        status,
        comonotonicity_violations: None,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcavityReport {
    pub n_pairs: usize,
    pub violations: usize,
    /// Most negative `λ(tV+(1-t)W) - tλ(V) - (1-t)λ(W)` seen.
    pub worst_gap: f64,
    pub tolerance: f64,
}

/// `λ(tV + (1-t)W) - (tλ(V) + (1-t)λ(W))`, nonnegative for concave `λ`.
pub fn concavity_gap(
    problem: &PotentialProblem<'_>,
    v: &ScalarField,
    w: &ScalarField,
    t: f64,
) -> Result<f64> {
    let mix = v.scaled(t).axpy(1.0 - t, w);
    let lm = problem.lambda(&mix)?;
    let lv = problem.lambda(v)?;
    let lw = problem.lambda(w)?;
    Ok(lm - (t * lv + (1.0 - t) * lw))
}

/// Samples `n_pairs` random `(V, W, t)` with potentials uniform in
/// `[-amplitude, amplitude]` and counts concavity violations beyond
/// `10 · tol_res`.
pub fn concavity_check(
    problem: &PotentialProblem<'_>,
    n_pairs: usize,
    amplitude: f64,
    seed: u64,
) -> Result<ConcavityReport> {
    if n_pairs == 0 {
        return Err(Error::param("n_pairs", "need at least one pair"));
    }
    let grid = *problem.kernel.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tolerance = 10.0 * problem.solver.tol_res;
    let mut violations = 0;
    let mut worst_gap = f64::INFINITY;
    for _ in 0..n_pairs {
        let v = random_field(grid, -amplitude, amplitude, &mut rng);
        let w = random_field(grid, -amplitude, amplitude, &mut rng);
        let t: f64 = rng.gen_range(0.0..1.0);
        let gap = concavity_gap(problem, &v, &w, t)?;
        worst_gap = worst_gap.min(gap);
        if gap < -tolerance {
            violations += 1;
        }
    }
    Ok(ConcavityReport {
        n_pairs,
        violations,
        worst_gap,
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContinuityReport {
    pub steps: Vec<f64>,
    pub differences: Vec<f64>,
    /// Differences shrink with `t` up to `10 · tol_res`.
    pub monotone: bool,
}

pub const CONTINUITY_STEPS: [f64; 3] = [1e-1, 1e-2, 1e-3];

/// `|λ(V + tD) - λ(V)|` for `t` in `steps`, with `‖D‖_q = 1`.
pub fn continuity_probe(
    problem: &PotentialProblem<'_>,
    v: &ScalarField,
    d: &ScalarField,
    steps: &[f64],
) -> Result<ContinuityReport> {
    let dn = lp_norm(d, problem.q())?;
    if (dn - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidInput(format!(
            "direction must have unit q-norm, got {dn}"
        )));
    }
    let base = problem.eigen(v, None)?;
    let differences = steps
        .iter()
        .map(|&t| {
            let pr = problem.eigen(&v.axpy(t, d), Some(&base.u))?;
            Ok((pr.lambda - base.lambda).abs())
        })
        .collect::<Result<Vec<f64>>>()?;
    let noise = 10.0 * problem.solver.tol_res;
    let mut order: Vec<usize> = (0..steps.len()).collect();
    order.sort_by(|&a, &b| steps[b].total_cmp(&steps[a]));
    let monotone = order
        .windows(2)
        .all(|ij| differences[ij[1]] <= differences[ij[0]] + noise);
    Ok(ContinuityReport {
        steps: steps.to_vec(),
        differences,
        monotone,
    })
}
