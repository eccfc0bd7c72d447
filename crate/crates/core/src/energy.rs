//! Discrete Gagliardo energy, the weak form `H(u, v)`, the eigenvalue
//! objective `J(u; V)` and its gradient.
//!
//! With `Φ_p(t) = |t|^{p-2} t`:
//!
//! ```text
//! E(u)    = Σ_{i≠j} K_ij |u_i - u_j|^p + 2 Σ_i ρ_i h |u_i|^p
//! H(u,v)  = ½ Σ_{i≠j} K_ij Φ_p(u_i - u_j)(v_i - v_j) + Σ_i ρ_i h Φ_p(u_i) v_i
//! J(u;V)  = ½ E(u) + Σ_i V_i |u_i|^p h
//! ```
//!
//! Row sums are computed independently and reduced in index order, so every
//! result is bit-identical whatever the rayon pool size.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{lp_norm, FracParams, ScalarField};
use crate::kernel::KernelAssembly;

/// Rows at or above this size are reduced on the rayon pool.
const PAR_THRESHOLD: usize = 192;

/// `|t|^p` and `Φ_p(t)` with fast paths for small integer `p`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct PowerLaw {
    p: f64,
}

impl PowerLaw {
    pub(crate) fn new(p: f64) -> Self {
        PowerLaw { p }
    }

    #[inline]
    pub(crate) fn abs_pow(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            t * t
        } else if self.p == 3.0 {
            t * t * t.abs()
        } else if self.p == 4.0 {
            let t2 = t * t;
            t2 * t2
        } else if t == 0.0 {
            0.0
        } else {
            t.abs().powf(self.p)
        }
    }

    #[inline]
    pub(crate) fn phi(&self, t: f64) -> f64 {
        if self.p == 2.0 {
            t
        } else if self.p == 3.0 {
            t * t.abs()
        } else if self.p == 4.0 {
            t * t * t
        } else if t == 0.0 {
            0.0
        } else {
            t.abs().powf(self.p - 2.0) * t
        }
    }
}

impl PowerLaw {
    /// `|a|^p - |b|^p` without the cancellation of the naive difference.
    #[inline]
    pub(crate) fn abs_pow_diff(&self, a: f64, b: f64) -> f64 {
        let (x, y) = (a.abs(), b.abs());
        if self.p == 2.0 {
            (x - y) * (x + y)
        } else if self.p == 3.0 {
            (x - y) * (x * x + x * y + y * y)
        } else if self.p == 4.0 {
            (x - y) * (x + y) * (x * x + y * y)
        } else if y == 0.0 {
            self.abs_pow(x)
        } else {
            self.abs_pow(y) * (self.p * ((x - y) / y).ln_1p()).exp_m1()
        }
    }
}

fn reduce_rows(n: usize, row: impl Fn(usize) -> f64 + Sync + Send) -> f64 {
    if n >= PAR_THRESHOLD {
        let parts: Vec<f64> = (0..n).into_par_iter().map(row).collect();
        parts.iter().sum()
    } else {
        (0..n).map(row).sum()
    }
}

fn map_rows(n: usize, row: impl Fn(usize) -> f64 + Sync + Send) -> Vec<f64> {
    if n >= PAR_THRESHOLD {
        (0..n).into_par_iter().map(row).collect()
    } else {
        (0..n).map(row).collect()
    }
}

/// Kernel plus potential: everything needed to evaluate `J(·; V)`.
#[derive(Debug, Clone)]
pub struct EnergyContext<'k> {
    kernel: &'k KernelAssembly,
    potential: ScalarField,
}

impl<'k> EnergyContext<'k> {
    pub fn new(kernel: &'k KernelAssembly, potential: ScalarField) -> Result<Self> {
        if potential.grid() != kernel.grid() {
            return Err(Error::InvalidInput(
                "potential is not defined on the kernel grid".into(),
            ));
        }
        if potential.values().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "potential has non-finite values".into(),
            ));
        }
        Ok(EnergyContext { kernel, potential })
    }

    /// Context with `V ≡ 0`.
    pub fn unperturbed(kernel: &'k KernelAssembly) -> Self {
        EnergyContext {
            kernel,
            potential: ScalarField::zeros(*kernel.grid()),
        }
    }

    pub fn kernel(&self) -> &'k KernelAssembly {
        self.kernel
    }

    pub fn potential(&self) -> &ScalarField {
        &self.potential
    }

    pub fn params(&self) -> &FracParams {
        self.kernel.params()
    }
}

/// Discrete Gagliardo energy `E(u)` including the exterior interaction.
pub fn gagliardo_energy(u: &ScalarField, kernel: &KernelAssembly) -> f64 {
    let law = PowerLaw::new(kernel.params().p());
    let h = kernel.grid().h();
    let n = kernel.len();
    let uv = u.values();
    let rho = kernel.rho();
    // each unordered pair counted once, then doubled
    let interior = reduce_rows(n, |i| {
        let row = kernel.row(i);
        let ui = uv[i];
        let mut acc = 0.0;
        for j in (i + 1)..n {
            acc += row[j] * law.abs_pow(ui - uv[j]);
        }
        acc
    });
    let tail: f64 = uv
        .iter()
        .zip(rho)
        .map(|(&ui, &r)| r * law.abs_pow(ui))
        .sum();
    2.0 * interior + 2.0 * h * tail
}

/// The form `H(u, v)`, linear in `v`.
pub fn h_form(u: &ScalarField, v: &ScalarField, kernel: &KernelAssembly) -> f64 {
    let law = PowerLaw::new(kernel.params().p());
    let h = kernel.grid().h();
    let n = kernel.len();
    let (uv, vv) = (u.values(), v.values());
    let rho = kernel.rho();
    // ½ Σ_{i≠j} = Σ_{i<j} by symmetry of K and of the summand
    let interior = reduce_rows(n, |i| {
        let row = kernel.row(i);
        let mut acc = 0.0;
        for j in (i + 1)..n {
            acc += row[j] * law.phi(uv[i] - uv[j]) * (vv[i] - vv[j]);
        }
        acc
    });
    let tail: f64 = (0..n).map(|i| rho[i] * law.phi(uv[i]) * vv[i]).sum();
    interior + h * tail
}

/// `Σ_i V_i |u_i|^p h`.
pub fn potential_energy(u: &ScalarField, ctx: &EnergyContext<'_>) -> f64 {
    let law = PowerLaw::new(ctx.params().p());
    let h = ctx.kernel.grid().h();
    u.values()
        .iter()
        .zip(ctx.potential.values())
        .map(|(&ui, &vi)| vi * law.abs_pow(ui))
        .sum::<f64>()
        * h
}

/// `J(u; V) = ½ E(u) + Σ V_i |u_i|^p h`.
pub fn objective(u: &ScalarField, ctx: &EnergyContext<'_>) -> f64 {
    0.5 * gagliardo_energy(u, ctx.kernel) + potential_energy(u, ctx)
}

/// `J(new; V) - J(old; V)` summed term by term, accurate even when the two
/// fields agree to nearly all digits.
pub fn objective_change(old: &ScalarField, new: &ScalarField, ctx: &EnergyContext<'_>) -> f64 {
    let kernel = ctx.kernel;
    let law = PowerLaw::new(kernel.params().p());
    let h = kernel.grid().h();
    let n = kernel.len();
    let (ov, nv) = (old.values(), new.values());
    let rho = kernel.rho();
    let vpot = ctx.potential.values();
    // J = Σ_{i<j} K_ij |u_i - u_j|^p + h Σ_i (ρ_i + V_i) |u_i|^p
    let interior = reduce_rows(n, |i| {
        let row = kernel.row(i);
        let mut acc = 0.0;
        for j in (i + 1)..n {
            acc += row[j] * law.abs_pow_diff(nv[i] - nv[j], ov[i] - ov[j]);
        }
        acc
    });
    let local: f64 = (0..n)
        .map(|i| (rho[i] + vpot[i]) * law.abs_pow_diff(nv[i], ov[i]))
        .sum();
    interior + h * local
}

/// Gradient of `J(·; V)` with respect to the cell values.
///
/// For `p < 2` the entries use `Φ_p(0) = 0` at coincident values.
pub fn objective_gradient(u: &ScalarField, ctx: &EnergyContext<'_>) -> ScalarField {
    let kernel = ctx.kernel;
    let p = kernel.params().p();
    let law = PowerLaw::new(p);
    let h = kernel.grid().h();
    let n = kernel.len();
    let uv = u.values();
    let rho = kernel.rho();
    let vpot = ctx.potential.values();
    let g = map_rows(n, |i| {
        let row = kernel.row(i);
        let ui = uv[i];
        let mut acc = 0.0;
        for (j, &k) in row.iter().enumerate() {
            if j != i {
                acc += k * law.phi(ui - uv[j]);
            }
        }
        p * (acc + (rho[i] + vpot[i]) * h * law.phi(ui))
    });
    ScalarField::new(*kernel.grid(), g).expect("gradient has grid length")
}

/// Dual max-norm residual of the discrete weak eigen-equation, from a
/// precomputed gradient. `u` is assumed normalized.
pub(crate) fn residual_from_gradient(
    u: &ScalarField,
    lambda: f64,
    grad: &ScalarField,
    p: f64,
) -> f64 {
    let law = PowerLaw::new(p);
    let h = u.grid().h();
    let scale = lambda.abs().max(1.0);
    u.values()
        .iter()
        .zip(grad.values())
        .map(|(&ui, &gi)| (gi / p - lambda * law.phi(ui) * h).abs())
        .fold(0.0, f64::max)
        / scale
}

/// `max_i |H(u, e_i) + V_i Φ_p(u_i) h - λ Φ_p(u_i) h| / max(1, |λ|)` for
/// `‖u‖_p = 1`.
pub fn eigen_residual(u: &ScalarField, lambda: f64, ctx: &EnergyContext<'_>) -> Result<f64> {
    let p = ctx.params().p();
    let norm = lp_norm(u, p)?;
    if (norm - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!(
            "eigen residual needs ‖u‖_p = 1, got {norm}"
        )));
    }
    // H(u, e_i) + V_i Φ_p(u_i) h is exactly g_i / p
    let grad = objective_gradient(u, ctx);
    Ok(residual_from_gradient(u, lambda, &grad, p))
}

/// Estimates the smallest `C` with
/// `|Σ V_i |u_i|^p h| <= ε E(u) + C ‖V‖_q ‖u‖_p^p` over the given samples.
///
/// Returns 0 for `V ≡ 0`.
pub fn fit_coercivity_constant(
    ctx: &EnergyContext<'_>,
    epsilon: f64,
    samples: &[ScalarField],
) -> Result<f64> {
    let p = ctx.params().p();
    let vq = lp_norm(ctx.potential(), ctx.params().q())?;
    if vq == 0.0 {
        return Ok(0.0);
    }
    let mut c: f64 = 0.0;
    for u in samples {
        let up = lp_norm(u, p)?.powf(p);
        if up == 0.0 {
            continue;
        }
        let lhs = potential_energy(u, ctx).abs();
        let slack = lhs - epsilon * gagliardo_energy(u, ctx.kernel);
        c = c.max(slack / (vq * up));
    }
    Ok(c)
}

/// Uniform random field on `[lo, hi)` drawn from `rng`.
pub fn random_field(grid: crate::grid::Grid, lo: f64, hi: f64, rng: &mut impl Rng) -> ScalarField {
    let values = (0..grid.len()).map(|_| rng.gen_range(lo..hi)).collect();
    ScalarField::new(grid, values).expect("length matches")
}
