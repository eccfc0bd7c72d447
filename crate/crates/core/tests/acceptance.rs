//! Acceptance criteria, one line per criterion. Runs as a plain binary so
//! the report is always printed.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use fracspec::checks::{picone_sweep, positivity_check, PiconePair, PICONE_TOL};
use fracspec::config::{load_potential, PotentialSpec};
use fracspec::eigen::{
    dense_p2_oracle, simplicity_probe, solve_first_eigenpair, EigenPair, SolverConfig,
};
use fracspec::energy::{random_field, EnergyContext};
use fracspec::grid::{lp_norm, FracParams, Grid, ScalarField};
use fracspec::kernel::{assemble, KernelAssembly, KernelMode};
use fracspec::optimizer::{
    concavity_check, derivative_from_pair, linear_minimize_over_set, maximize_over_ball,
    minimize_over_set, tangent_projection, AdmissibleSet, OuterConfig, PotentialProblem,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

/// Minimum of every converged eigenfunction seen so far.
#[derive(Default)]
struct Positivity {
    count: usize,
    worst: f64,
    failures: Vec<String>,
}

impl Positivity {
    fn record(&mut self, tag: &str, pair: &EigenPair) {
        if !pair.converged {
            return;
        }
        let rep = positivity_check(pair);
        if self.count == 0 || rep.min < self.worst {
            self.worst = rep.min;
        }
        self.count += 1;
        if !rep.passed {
            self.failures
                .push(format!("{tag}: u[{}] = {:e}", rep.argmin, rep.min));
        }
    }
}

fn kernel(s: f64, p: f64, q: f64, n: usize) -> KernelAssembly {
    let fp = FracParams::new(s, p, q).expect("valid parameters");
    assemble(
        &fp,
        &Grid::new(0.0, 1.0, n).expect("valid grid"),
        KernelMode::Midpoint,
    )
    .expect("assembly")
}

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(limit: Duration, took: Duration) -> Result<(), String> {
    check(took <= limit, || {
        format!("runtime {took:.1?} exceeds {limit:?}")
    })
}

fn c1_oracle(pos: &mut Positivity) -> Outcome {
    let start = Instant::now();
    let cfg = SolverConfig {
        tol_res: 5e-10,
        ..Default::default()
    };
    let (mut worst_rel, mut worst_dist) = (0.0_f64, 0.0_f64);
    for &s in &[0.3, 0.5, 0.7] {
        for &n in &[32, 64, 128] {
            let k = kernel(s, 2.0, 2.0, n);
            let specs = [
                PotentialSpec::Zero,
                PotentialSpec::Sine {
                    amplitude: 5.0,
                    frequency: 2.0,
                },
                PotentialSpec::Random {
                    seed: 1,
                    amplitude: 3.0,
                },
            ];
            for spec in &specs {
                let v = load_potential(spec, *k.grid(), None).map_err(|e| e.to_string())?;
                let ctx = EnergyContext::new(&k, v).map_err(|e| e.to_string())?;
                let pair = solve_first_eigenpair(&ctx, &cfg).map_err(|e| e.to_string())?;
                let (lo, uo) = dense_p2_oracle(&ctx).map_err(|e| e.to_string())?;
                let rel = (pair.lambda - lo).abs() / lo.abs();
                let dist = lp_norm(&pair.u.axpy(-1.0, &uo), 2.0).map_err(|e| e.to_string())?;
                worst_rel = worst_rel.max(rel);
                worst_dist = worst_dist.max(dist);
                pos.record("c1", &pair);
                check(pair.converged, || {
                    format!("s={s} N={n} {spec:?}: solver did not converge")
                })?;
            }
        }
    }
    let took = start.elapsed();
    check(worst_rel <= 1e-8, || {
        format!("relative λ error {worst_rel:e}")
    })?;
    check(worst_dist <= 1e-7, || {
        format!("eigenvector distance {worst_dist:e}")
    })?;
    within(Duration::from_secs(30), took)?;
    Ok(format!(
        "max rel λ err {worst_rel:.1e}, max L² dist {worst_dist:.1e}, {took:.1?}"
    ))
}

fn c2_shift(pos: &mut Positivity) -> Outcome {
    let mut worst = 0.0_f64;
    for &p in &[2.0, 3.0] {
        let k = kernel(0.5, p, 2.0, 64);
        let v = ScalarField::from_fn(*k.grid(), |x| 2.0 * (3.0 * x).cos());
        let cfg = SolverConfig::default();
        let base =
            solve_first_eigenpair(&EnergyContext::new(&k, v.clone()).unwrap(), &cfg).unwrap();
        pos.record("c2", &base);
        for &c in &[-10.0, 1.0, 7.5] {
            let sh = solve_first_eigenpair(&EnergyContext::new(&k, v.shifted(c)).unwrap(), &cfg)
                .unwrap();
            pos.record("c2", &sh);
            worst = worst.max((sh.lambda - base.lambda - c).abs());
        }
    }
    check(worst <= 1e-8, || format!("shift error {worst:e}"))?;
    Ok(format!("max |λ(V+c) - λ(V) - c| = {worst:.1e}"))
}

fn c3_derivative(pos: &mut Positivity) -> Outcome {
    let start = Instant::now();
    let t = 1e-3;
    let mut worst = 0.0_f64;
    for &p in &[2.0, 2.5] {
        let k = kernel(0.5, p, 2.0, 64);
        let problem = PotentialProblem::new(&k, SolverConfig::default());
        let g = *k.grid();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..3 {
            let v = random_field(g, -3.0, 3.0, &mut rng);
            let pair = problem.eigen(&v, None).map_err(|e| e.to_string())?;
            pos.record("c3", &pair);
            for _ in 0..10 {
                let w = tangent_projection(&v, &random_field(g, -1.0, 1.0, &mut rng), 2.0);
                let w = w.scaled(1.0 / lp_norm(&w, 2.0).unwrap());
                let d = derivative_from_pair(&pair, &w, p);
                let plus = problem
                    .eigen(&v.axpy(t, &w), Some(&pair.u))
                    .map_err(|e| e.to_string())?;
                let minus = problem
                    .eigen(&v.axpy(-t, &w), Some(&pair.u))
                    .map_err(|e| e.to_string())?;
                pos.record("c3", &plus);
                pos.record("c3", &minus);
                let fd = (plus.lambda - minus.lambda) / (2.0 * t);
                worst = worst.max((fd - d).abs() / d.abs());
            }
        }
    }
    let took = start.elapsed();
    check(worst <= 1e-3, || {
        format!("relative derivative error {worst:e}")
    })?;
    within(Duration::from_secs(120), took)?;
    Ok(format!("max rel err {worst:.1e}, {took:.1?}"))
}

fn c4_concavity() -> Outcome {
    let mut summary = Vec::new();
    for &p in &[2.0, 3.0] {
        let k = kernel(0.5, p, 2.0, 32);
        let problem = PotentialProblem::new(&k, SolverConfig::default());
        let rep = concavity_check(&problem, 50, 3.0, 41).map_err(|e| e.to_string())?;
        check(rep.tolerance <= 1e-7, || {
            format!("tolerance {}", rep.tolerance)
        })?;
        check(rep.violations == 0, || {
            format!(
                "p={p}: {} violations, worst gap {:e}",
                rep.violations, rep.worst_gap
            )
        })?;
        summary.push(format!("p={p} worst gap {:.1e}", rep.worst_gap));
    }
    Ok(format!("0 violations; {}", summary.join(", ")))
}

fn c5_picone() -> Outcome {
    let g = Grid::new(0.0, 1.0, 32).unwrap();
    let mut min = f64::INFINITY;
    let mut eq_max = 0.0_f64;
    for &p in &[1.5, 2.0, 3.0] {
        let rep = picone_sweep(g, None, p, 100, 5).map_err(|e| e.to_string())?;
        check(rep.passed, || {
            format!("p={p}: min {:e} at {:?}", rep.min, rep.argmin)
        })?;
        min = min.min(rep.min);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let v = random_field(g, 0.1, 1.1, &mut rng);
        for &kf in &[0.0, 0.5, 1.0, 3.0] {
            let pair = PiconePair::new(v.scaled(kf), v.clone()).unwrap();
            let rep = picone_sweep(g, Some(&pair), p, 0, 0).unwrap();
            eq_max = eq_max.max(rep.max_abs);
        }
    }
    check(eq_max <= PICONE_TOL, || {
        format!("equality case max |L| {eq_max:e}")
    })?;
    Ok(format!("min L {min:.2e}, equality max |L| {eq_max:.1e}"))
}

fn c6_simplicity(pos: &mut Positivity) -> Outcome {
    let mut parts = Vec::new();
    for &p in &[2.0, 3.0] {
        let k = kernel(0.5, p, 2.0, 64);
        let v = load_potential(
            &PotentialSpec::Random {
                seed: 61,
                amplitude: 3.0,
            },
            *k.grid(),
            None,
        )
        .unwrap();
        let ctx = EnergyContext::new(&k, v).unwrap();
        let (rep, pairs) =
            simplicity_probe(&ctx, &SolverConfig::default(), 5).map_err(|e| e.to_string())?;
        for pr in &pairs {
            pos.record("c6", pr);
        }
        check(rep.max_distance <= 1e-6, || {
            format!("p={p}: distance {:e}", rep.max_distance)
        })?;
        check(rep.lambda_spread <= 1e-9, || {
            format!("p={p}: spread {:e}", rep.lambda_spread)
        })?;
        check(rep.passed, || format!("p={p}: {rep:?}"))?;
        parts.push(format!(
            "p={p} dist {:.1e} spread {:.1e}",
            rep.max_distance, rep.lambda_spread
        ));
    }
    Ok(parts.join(", "))
}

fn c7_ball_min(pos: &mut Positivity) -> Outcome {
    let mut parts = Vec::new();
    for &q in &[2.0, 4.0] {
        for &m in &[1.0, 10.0] {
            let k = kernel(0.5, 2.0, q, 64);
            let problem = PotentialProblem::new(&k, SolverConfig::default());
            let set = AdmissibleSet::Ball { q, radius: m };
            let res = minimize_over_set(&problem, &set, &OuterConfig::default(), None)
                .map_err(|e| e.to_string())?;
            pos.record("c7", &res.pair);
            let tag = format!("q={q} M={m}");
            check(res.converged(), || format!("{tag}: {:?}", res.status))?;
            for w in res.history.windows(2) {
                check(w[1].lambda <= w[0].lambda + 1e-7, || {
                    format!("{tag}: λ rose at k={}", w[1].k)
                })?;
            }
            let lm =
                linear_minimize_over_set(&fracspec::optimizer::density(&res.pair.u, 2.0), &set)
                    .unwrap();
            let cert = lp_norm(&res.v_opt.axpy(-1.0, &lm.v), q).unwrap();
            check(cert <= 1e-5, || format!("{tag}: certificate {cert:e}"))?;
            check(res.v_opt.values().iter().all(|&x| x <= 0.0), || {
                format!("{tag}: positive entry")
            })?;
            let nrm = lp_norm(&res.v_opt, q).unwrap();
            check((nrm - m).abs() <= 1e-10, || format!("{tag}: ‖V‖ = {nrm}"))?;
            parts.push(format!("{tag} cert {cert:.0e} ({} it)", res.iterations()));
        }
    }
    Ok(parts.join(", "))
}

fn c8_ball_max(pos: &mut Positivity) -> Outcome {
    let start = Instant::now();
    let (q, m) = (2.0, 5.0);
    let k = kernel(0.5, 2.0, q, 64);
    let problem = PotentialProblem::new(&k, SolverConfig::default());
    let outer = OuterConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(81);
    let mut results = Vec::new();
    for _ in 0..2 {
        let init = random_field(*k.grid(), 0.0, 2.0, &mut rng);
        let res =
            maximize_over_ball(&problem, q, m, &outer, Some(&init)).map_err(|e| e.to_string())?;
        pos.record("c8", &res.pair);
        check(res.converged(), || {
            format!("{:?} after {} it", res.status, res.iterations())
        })?;
        check(res.optimality_residual <= 1e-4, || {
            format!("fixed-point residual {:e}", res.optimality_residual)
        })?;
        check(res.v_opt.values().iter().all(|&x| x >= 0.0), || {
            "negative entry".into()
        })?;
        let nrm = lp_norm(&res.v_opt, q).unwrap();
        check((nrm - m).abs() <= 1e-10, || format!("‖V‖ = {nrm}"))?;
        results.push(res);
    }
    let gap = lp_norm(&results[0].v_opt.axpy(-1.0, &results[1].v_opt), q).unwrap();
    check(gap <= 1e-3, || format!("starts disagree by {gap:e}"))?;
    let took = start.elapsed();
    within(Duration::from_secs(300), took)?;
    Ok(format!(
        "residuals {:.1e}/{:.1e}, start gap {gap:.1e}, {took:.1?}",
        results[0].optimality_residual, results[1].optimality_residual
    ))
}

fn c9_two_cells(pos: &mut Positivity) -> Outcome {
    let k = kernel(0.5, 2.0, 2.0, 2);
    let g = *k.grid();
    let lambda_at = |v: ScalarField| {
        dense_p2_oracle(&EnergyContext::new(&k, v).unwrap())
            .unwrap()
            .0
    };
    let r = 1.0 / g.h().sqrt();
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let samples = 10_000;
    for i in 0..samples {
        let th = 2.0 * std::f64::consts::PI * i as f64 / samples as f64;
        let l = lambda_at(ScalarField::new(g, vec![r * th.cos(), r * th.sin()]).unwrap());
        lo = lo.min(l);
        hi = hi.max(l);
    }
    let cfg = SolverConfig {
        tol_res: 1e-10,
        ..Default::default()
    };
    let problem = PotentialProblem::new(&k, cfg);
    let set = AdmissibleSet::Ball {
        q: 2.0,
        radius: 1.0,
    };
    let min = minimize_over_set(&problem, &set, &OuterConfig::default(), None)
        .map_err(|e| e.to_string())?;
    let max = maximize_over_ball(&problem, 2.0, 1.0, &OuterConfig::default(), None)
        .map_err(|e| e.to_string())?;
    pos.record("c9", &min.pair);
    pos.record("c9", &max.pair);
    let (dmin, dmax) = ((min.pair.lambda - lo).abs(), (max.pair.lambda - hi).abs());
    check(dmin <= 1e-6, || {
        format!("min λ {} vs brute force {lo}", min.pair.lambda)
    })?;
    check(dmax <= 1e-6, || {
        format!("max λ {} vs brute force {hi}", max.pair.lambda)
    })?;
    Ok(format!("min gap {dmin:.1e}, max gap {dmax:.1e}"))
}

fn c10_rearrangement(pos: &mut Positivity) -> Outcome {
    let k = kernel(0.5, 2.0, 2.0, 64);
    let v0 = load_potential(
        &PotentialSpec::Random {
            seed: 3,
            amplitude: 3.0,
        },
        *k.grid(),
        None,
    )
    .unwrap();
    let problem = PotentialProblem::new(&k, SolverConfig::default());
    let set = AdmissibleSet::Rearrangement { v0: v0.clone() };
    let outer = OuterConfig::default();
    let res = minimize_over_set(&problem, &set, &outer, None).map_err(|e| e.to_string())?;
    pos.record("c10", &res.pair);
    check(res.converged(), || format!("{:?}", res.status))?;
    for w in res.history.windows(2) {
        check(
            w[1].lambda <= w[0].lambda + 10.0 * problem.solver.tol_res,
            || format!("λ rose at k={}", w[1].k),
        )?;
    }
    let viol = res.comonotonicity_violations.unwrap_or(usize::MAX);
    check(outer.tol_mono <= 1e-9 && viol == 0, || {
        format!("{viol} comonotonicity violations")
    })?;
    let mut a = v0.values().to_vec();
    let mut b = res.v_opt.values().to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    check(a == b, || "values are not a permutation of V0".into())?;
    Ok(format!(
        "{} outer iterations, λ {:.6} → {:.6}",
        res.iterations(),
        res.history[0].lambda,
        res.pair.lambda
    ))
}

fn c11_positivity(pos: &Positivity) -> Outcome {
    check(pos.count > 0, || "no eigenpairs recorded".into())?;
    check(pos.failures.is_empty(), || pos.failures.join("; "))?;
    Ok(format!("{} eigenpairs, min u {:.2e}", pos.count, pos.worst))
}

fn c12_refinement() -> Outcome {
    let cfg = SolverConfig {
        tol_res: 1e-9,
        ..Default::default()
    };
    let mut lambdas = Vec::new();
    for &n in &[64, 128, 256, 512] {
        let k = kernel(0.5, 2.0, 2.0, n);
        let pair = solve_first_eigenpair(&EnergyContext::unperturbed(&k), &cfg)
            .map_err(|e| e.to_string())?;
        check(pair.converged, || format!("N={n} did not converge"))?;
        lambdas.push(pair.lambda);
    }
    let diffs: Vec<f64> = lambdas.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    let ratios: Vec<f64> = diffs.windows(2).map(|d| d[0] / d[1]).collect();
    for &r in &ratios {
        check(r >= 1.5, || format!("ratios {ratios:?}, λ {lambdas:?}"))?;
    }
    Ok(format!("λ_512 = {:.8}, ratios {:.3?}", lambdas[3], ratios))
}

fn main() -> ExitCode {
    let mut pos = Positivity::default();
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str,
                   f: &mut dyn FnMut(&mut Positivity) -> Outcome,
                   pos: &mut Positivity| {
        let out = f(pos);
        let (tag, detail) = match &out {
            Ok(d) => ("PASS", d.clone()),
            Err(d) => ("FAIL", d.clone()),
        };
        println!("[{tag}] {name}: {detail}");
        results.push((name, out));
    };
    run(
        "criterion 1  p=2 oracle agreement",
        &mut c1_oracle,
        &mut pos,
    );
    run("criterion 2  shift identity", &mut c2_shift, &mut pos);
    run(
        "criterion 3  derivative formula",
        &mut c3_derivative,
        &mut pos,
    );
    run("criterion 4  concavity", &mut |_| c4_concavity(), &mut pos);
    run("criterion 5  Picone", &mut |_| c5_picone(), &mut pos);
    run(
        "criterion 6  simplicity probe",
        &mut c6_simplicity,
        &mut pos,
    );
    run("criterion 7  ball minimization", &mut c7_ball_min, &mut pos);
    run("criterion 8  ball maximization", &mut c8_ball_max, &mut pos);
    run(
        "criterion 9  two-cell brute force",
        &mut c9_two_cells,
        &mut pos,
    );
    run(
        "criterion 10 rearrangement minimization",
        &mut c10_rearrangement,
        &mut pos,
    );
    run(
        "criterion 11 positivity",
        &mut |p| c11_positivity(p),
        &mut pos,
    );
    run(
        "criterion 12 refinement",
        &mut |_| c12_refinement(),
        &mut pos,
    );
    let failed = results.iter().filter(|(_, r)| r.is_err()).count();
    println!(
        "acceptance: {} passed, {failed} failed",
        results.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
