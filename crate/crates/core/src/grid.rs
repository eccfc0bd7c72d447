//! Interval domain, uniform cell partition and discrete Lebesgue norms.
//!
//! Functions live on cells as midpoint values and are implicitly zero
//! outside the interval. Every integral is the midpoint rule with weight `h`.

use crate::error::{Error, Result};

/// Exponents of the problem: fractional order `s`, integrability `p` and
/// potential exponent `q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracParams {
    s: f64,
    p: f64,
    q: f64,
}

impl FracParams {
    pub fn new(s: f64, p: f64, q: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(Error::param("s", format!("must lie in (0,1), got {s}")));
        }
        if !(p > 1.0 && p.is_finite()) {
            return Err(Error::param(
                "p",
                format!("must be finite and > 1, got {p}"),
            ));
        }
        let sigma = s * p;
        let q_min = f64::max(1.0, 1.0 / sigma);
        if !(q > q_min && q.is_finite()) {
            return Err(Error::param(
                "q",
                format!("must be finite and > max(1, 1/(s p)) = {q_min}, got {q}"),
            ));
        }
        Ok(FracParams { s, p, q })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    /// Kernel exponent offset `s·p`.
    pub fn sigma(&self) -> f64 {
        self.s * self.p
    }

    /// Hölder conjugate `q/(q-1)`.
    pub fn q_conj(&self) -> f64 {
        self.q / (self.q - 1.0)
    }
}

/// Uniform partition of `(a, b)` into `n` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    a: f64,
    b: f64,
    n: usize,
}

impl Grid {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if !(a.is_finite() && b.is_finite() && b > a) {
            return Err(Error::InvalidGrid(format!(
                "need finite a < b, got ({a}, {b})"
            )));
        }
        if n == 0 {
            return Err(Error::InvalidGrid("N must be positive".into()));
        }
        Ok(Grid { a, b, n })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    /// Midpoint of cell `i` (zero-based).
    pub fn midpoint(&self, i: usize) -> f64 {
        self.a + (i as f64 + 0.5) * self.h()
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.midpoint(i)).collect()
    }

    /// Same partition with twice as many cells.
    pub fn refined(&self) -> Grid {
        Grid {
            n: 2 * self.n,
            ..*self
        }
    }
}

/// Cell values of a function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidInput(format!(
                "field has {} values but the grid has {} cells",
                values.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, c: f64) -> Self {
        ScalarField {
            grid,
            values: vec![c; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid,
            values: grid.midpoints().into_iter().map(f).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    pub fn shifted(&self, c: f64) -> Self {
        self.map(|v| v + c)
    }

    /// `self + t·other`.
    pub fn axpy(&self, t: f64, other: &ScalarField) -> Self {
        debug_assert_eq!(self.len(), other.len());
        ScalarField {
            grid: self.grid,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a + t * b)
                .collect(),
        }
    }

    /// Cell-weighted inner product `Σ f_i g_i h`.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        let h = self.grid.h();
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            * h
    }

    /// Reflected field `i ↦ N-1-i`.
    pub fn reversed(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        ScalarField {
            grid: self.grid,
            values,
        }
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Discrete `L^r` norm `(Σ |f_i|^r h)^(1/r)`.
pub fn lp_norm(f: &ScalarField, r: f64) -> Result<f64> {
    if !(r >= 1.0) || !r.is_finite() {
        return Err(Error::param(
            "r",
            format!("norm exponent must be finite and >= 1, got {r}"),
        ));
    }
    let h = f.grid().h();
    // scale by the max magnitude so large exponents do not overflow
    let scale = f.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Ok(0.0);
    }
    if !scale.is_finite() {
        return Ok(f64::INFINITY);
    }
    let sum: f64 = if r == 2.0 {
        f.values().iter().map(|v| (v / scale) * (v / scale)).sum()
    } else {
        f.values().iter().map(|v| (v.abs() / scale).powf(r)).sum()
    };
    Ok(scale * (sum * h).powf(1.0 / r))
}

/// `f / ‖f‖_r`.
pub fn normalize_lp(f: &ScalarField, r: f64) -> Result<ScalarField> {
    let norm = lp_norm(f, r)?;
    if norm == 0.0 {
        return Err(Error::DegenerateInput(
            "cannot normalize the zero field".into(),
        ));
    }
    if !norm.is_finite() {
        return Err(Error::NumericalFailure("field has non-finite norm".into()));
    }
    Ok(f.scaled(1.0 / norm))
}
