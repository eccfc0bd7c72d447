//! Discrete interaction weights for the kernel `|x - y|^{-(1+σ)}` on the
//! interval, plus the closed-form exterior tail that accounts for the zero
//! extension of every function outside `(a, b)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FracParams, Grid};

/// How the pairwise cell weights are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelMode {
    /// `K_ij = h² |x_i - x_j|^{-(1+σ)}`.
    #[default]
    #[serde(rename = "midpoint")]
    Midpoint,
    /// Exact double integral of the kernel over each pair of cells. Needs `σ < 1`.
    #[serde(rename = "exact-cellpair")]
    ExactCellPair,
}

/// Assembled dense kernel. Immutable once built.
#[derive(Debug, Clone)]
pub struct KernelAssembly {
    params: FracParams,
    grid: Grid,
    mode: KernelMode,
    /// row-major `n × n`, symmetric, zero diagonal
    weights: Vec<f64>,
    rho: Vec<f64>,
}

impl KernelAssembly {
    pub fn params(&self) -> &FracParams {
        &self.params
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn mode(&self) -> KernelMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights[i * self.grid.len() + j]
    }

    /// Row `i` of the weight matrix.
    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.grid.len();
        &self.weights[i * n..(i + 1) * n]
    }

    /// Exterior tail densities `ρ_i`.
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }
}

/// Closed-form exterior tail `((x_i - a)^{-σ} + (b - x_i)^{-σ}) / σ` at cell `i`.
pub fn exterior_tail(params: &FracParams, grid: &Grid, i: usize) -> Result<f64> {
    if i >= grid.len() {
        return Err(Error::InvalidInput(format!(
            "cell index {i} out of range for {} cells",
            grid.len()
        )));
    }
    Ok(tail_at(params.sigma(), grid, i))
}

fn tail_at(sigma: f64, grid: &Grid, i: usize) -> f64 {
    let x = grid.midpoint(i);
    ((x - grid.a()).powf(-sigma) + (grid.b() - x).powf(-sigma)) / sigma
}

/// Exact `∫_{α₁}^{β₁} ∫_{α₂}^{β₂} (y - x)^{-(1+σ)} dy dx` for `β₁ <= α₂`, `σ < 1`, `σ != 1`.
fn cell_pair_integral(sigma: f64, (a1, b1): (f64, f64), (a2, b2): (f64, f64)) -> f64 {
    let e = 1.0 - sigma;
    let f = |d: f64| if d <= 0.0 { 0.0 } else { d.powf(e) };
    (f(a2 - b1) - f(a2 - a1) - f(b2 - b1) + f(b2 - a1)) / (sigma * (sigma - 1.0))
}

/// Builds the kernel for `params` on `grid`.
pub fn assemble(params: &FracParams, grid: &Grid, mode: KernelMode) -> Result<KernelAssembly> {
    let n = grid.len();
    if n < 2 {
        return Err(Error::InvalidGrid(format!(
            "need at least 2 cells, got {n}"
        )));
    }
    let sigma = params.sigma();
    if mode == KernelMode::ExactCellPair && sigma >= 1.0 {
        return Err(Error::UnsupportedMode(format!(
            "exact cell-pair weights diverge on touching cells for s*p = {sigma} >= 1"
        )));
    }
    let h = grid.h();
    let mut weights = vec![0.0; n * n];
    weights.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        for (j, w) in row.iter_mut().enumerate() {
            if i == j {
                continue;
            }
            *w = match mode {
                KernelMode::Midpoint => {
                    // |x_i - x_j| = |i - j| h exactly on a uniform grid
                    let d = (i as f64 - j as f64).abs() * h;
                    h * h * d.powf(-(1.0 + sigma))
                }
                KernelMode::ExactCellPair => {
                    let (lo, hi) = if i < j { (i, j) } else { (j, i) };
                    let cell = |k: usize| (grid.a() + k as f64 * h, grid.a() + (k + 1) as f64 * h);
                    cell_pair_integral(sigma, cell(lo), cell(hi))
                }
            };
        }
    });
    let rho = (0..n).map(|i| tail_at(sigma, grid, i)).collect();
    Ok(KernelAssembly {
        params: *params,
        grid: *grid,
        mode,
        weights,
        rho,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(s: f64, p: f64) -> FracParams {
        FracParams::new(s, p, 4.0).unwrap()
    }

    /// Gauss–Legendre nodes/weights on [-1, 1] by Newton iteration.
    fn gauss_legendre(m: usize) -> Vec<(f64, f64)> {
        (0..m)
            .map(|k| {
                let mut x = (std::f64::consts::PI * (k as f64 + 0.75) / (m as f64 + 0.5)).cos();
                let mut dp = 0.0;
                for _ in 0..100 {
                    let (mut p0, mut p1) = (1.0, x);
                    for l in 2..=m {
                        let p2 = ((2 * l - 1) as f64 * x * p1 - (l - 1) as f64 * p0) / l as f64;
                        p0 = p1;
                        p1 = p2;
                    }
                    dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
                    let dx = p1 / dp;
                    x -= dx;
                    if dx.abs() < 1e-16 {
                        break;
                    }
                }
                (x, 2.0 / ((1.0 - x * x) * dp * dp))
            })
            .collect()
    }

    fn quad_cell_pair(sigma: f64, c1: (f64, f64), c2: (f64, f64)) -> f64 {
        let gl = gauss_legendre(40);
        let mut acc = 0.0;
        for &(xi, wi) in &gl {
            let x = 0.5 * (c1.0 + c1.1) + 0.5 * (c1.1 - c1.0) * xi;
            for &(yj, wj) in &gl {
                let y = 0.5 * (c2.0 + c2.1) + 0.5 * (c2.1 - c2.0) * yj;
                acc += wi * wj * (y - x).abs().powf(-(1.0 + sigma));
            }
        }
        acc * 0.25 * (c1.1 - c1.0) * (c2.1 - c2.0)
    }

    #[test]
    fn two_cell_midpoint_example() {
        let g = Grid::new(0.0, 1.0, 2).unwrap();
        let k = assemble(&params(0.5, 2.0), &g, KernelMode::Midpoint).unwrap();
        assert!((k.weight(0, 1) - 1.0).abs() < 1e-15);
        assert!((k.rho()[0] - 16.0 / 3.0).abs() < 1e-14);
        assert!((exterior_tail(k.params(), &g, 0).unwrap() - 16.0 / 3.0).abs() < 1e-14);
        assert!(exterior_tail(k.params(), &g, 2).is_err());
    }

    #[test]
    fn zero_diagonal_symmetric_positive() {
        let g = Grid::new(-0.5, 1.5, 17).unwrap();
        for mode in [KernelMode::Midpoint, KernelMode::ExactCellPair] {
            let k = assemble(&params(0.3, 2.0), &g, mode).unwrap();
            for i in 0..17 {
                assert_eq!(k.weight(i, i), 0.0);
                assert!(k.rho()[i] > 0.0 && k.rho()[i].is_finite());
                for j in 0..17 {
                    assert_eq!(k.weight(i, j), k.weight(j, i));
                    if i != j {
                        assert!(k.weight(i, j) > 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn center_tail_value() {
        let g = Grid::new(0.0, 1.0, 5).unwrap();
        let fp = FracParams::new(0.25, 2.0, 4.0).unwrap();
        let rho = exterior_tail(&fp, &g, 2).unwrap();
        assert!((rho - 4.0 * 2f64.sqrt()).abs() < 1e-13);
        let asm = assemble(&fp, &g, KernelMode::Midpoint).unwrap();
        for i in 0..5 {
            assert_eq!(asm.rho()[i], asm.rho()[4 - i]);
        }
        // decreasing as the cell moves away from the nearer endpoint
        assert!(asm.rho()[0] > asm.rho()[1] && asm.rho()[1] > asm.rho()[2]);
    }

    #[test]
    fn reflection_covariance() {
        let n = 12;
        let g = Grid::new(0.0, 2.0, n).unwrap();
        let k = assemble(&params(0.4, 2.0), &g, KernelMode::ExactCellPair).unwrap();
        for i in 0..n {
            assert!((k.rho()[i] - k.rho()[n - 1 - i]).abs() <= 1e-12 * k.rho()[i]);
            for j in 0..n {
                let r = k.weight(n - 1 - i, n - 1 - j);
                assert!((k.weight(i, j) - r).abs() <= 1e-12 * r.max(1e-300));
            }
        }
    }

    #[test]
    fn dilation_scaling() {
        let fp = params(0.35, 2.0);
        let sigma = fp.sigma();
        let c = 2.7;
        for mode in [KernelMode::Midpoint, KernelMode::ExactCellPair] {
            let k1 = assemble(&fp, &Grid::new(0.0, 1.0, 9).unwrap(), mode).unwrap();
            let k2 = assemble(&fp, &Grid::new(0.0, c, 9).unwrap(), mode).unwrap();
            for i in 0..9 {
                let rel = (k2.rho()[i] - c.powf(-sigma) * k1.rho()[i]).abs() / k2.rho()[i];
                assert!(rel < 1e-12);
                for j in 0..9 {
                    if i != j {
                        let want = c.powf(1.0 - sigma) * k1.weight(i, j);
                        assert!((k2.weight(i, j) - want).abs() / want < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn exact_cell_pair_matches_quadrature() {
        let fp = params(0.4, 2.0);
        let g = Grid::new(0.0, 1.0, 16).unwrap();
        let k = assemble(&fp, &g, KernelMode::ExactCellPair).unwrap();
        let h = g.h();
        let cell = |k: usize| (k as f64 * h, (k + 1) as f64 * h);
        for (i, j) in [(0, 2), (3, 9), (0, 15), (5, 7)] {
            let q = quad_cell_pair(fp.sigma(), cell(i), cell(j));
            assert!((k.weight(i, j) - q).abs() / q < 1e-10, "{i},{j}");
        }
    }

    #[test]
    fn midpoint_close_to_exact_when_separated() {
        let fp = params(0.4, 2.0);
        let sigma = fp.sigma();
        let g = Grid::new(0.0, 1.0, 32).unwrap();
        let mid = assemble(&fp, &g, KernelMode::Midpoint).unwrap();
        let h = g.h();
        let cell = |k: usize| (k as f64 * h, (k + 1) as f64 * h);
        let c = (1.0 + sigma) * (2.0 + sigma) / 12.0;
        for i in 0..32usize {
            for j in (i + 4)..32 {
                let exact = quad_cell_pair(sigma, cell(i), cell(j));
                let rel = (mid.weight(i, j) - exact).abs() / exact;
                let ratio = 1.0 / ((j - i) as f64).powi(2);
                assert!(rel <= 1.1 * c * ratio, "{i},{j}: {rel} vs {}", c * ratio);
            }
        }
    }

    #[test]
    fn exact_mode_rejects_large_sigma() {
        let g = Grid::new(0.0, 1.0, 8).unwrap();
        assert!(matches!(
            assemble(&params(0.5, 2.0), &g, KernelMode::ExactCellPair),
            Err(Error::UnsupportedMode(_))
        ));
        let g1 = Grid::new(0.0, 1.0, 1).unwrap();
        assert!(matches!(
            assemble(&params(0.5, 2.0), &g1, KernelMode::Midpoint),
            Err(Error::InvalidGrid(_))
        ));
    }
}
