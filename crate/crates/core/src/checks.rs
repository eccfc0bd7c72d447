//! Picone inequality and eigenfunction sign diagnostics.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::eigen::EigenPair;
use crate::energy::{random_field, PowerLaw};
use crate::error::{Error, Result};
use crate::grid::{Grid, ScalarField};

pub const PICONE_TOL: f64 = 1e-12;

/// `u >= 0`, `v > 0` on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PiconePair {
    u: ScalarField,
    v: ScalarField,
}

impl PiconePair {
    pub fn new(u: ScalarField, v: ScalarField) -> Result<Self> {
        if u.grid() != v.grid() {
            return Err(Error::InvalidInput(
                "u and v live on different grids".into(),
            ));
        }
        if let Some(i) = u.values().iter().position(|&x| !(x >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "u must be nonnegative, u[{i}] = {}",
                u.values()[i]
            )));
        }
        if let Some(i) = v.values().iter().position(|&x| !(x > 0.0)) {
            return Err(Error::InvalidInput(format!(
                "v must be positive, v[{i}] = {}",
                v.values()[i]
            )));
        }
        Ok(PiconePair { u, v })
    }

    pub fn u(&self) -> &ScalarField {
        &self.u
    }

    pub fn v(&self) -> &ScalarField {
        &self.v
    }
}

/// `|u_i - u_j|^p - Φ_p(v_i - v_j) (u_i^p / v_i^{p-1} - u_j^p / v_j^{p-1})`.
pub fn picone_term(pair: &PiconePair, i: usize, j: usize, p: f64) -> Result<f64> {
    let n = pair.u.len();
    if i >= n || j >= n {
        return Err(Error::InvalidInput(format!(
            "index pair ({i}, {j}) out of range for N = {n}"
        )));
    }
    picone_raw(pair.u.values(), pair.v.values(), i, j, p)
}

fn picone_raw(u: &[f64], v: &[f64], i: usize, j: usize, p: f64) -> Result<f64> {
    if !(v[i] > 0.0 && v[j] > 0.0) {
        return Err(Error::InvalidInput(format!(
            "v must be positive at ({i}, {j})"
        )));
    }
    let law = PowerLaw::new(p);
    let quot = |k: usize| u[k].powf(p) / v[k].powf(p - 1.0);
    Ok(law.abs_pow(u[i] - u[j]) - law.phi(v[i] - v[j]) * (quot(i) - quot(j)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PiconeReport {
    pub p: f64,
    pub n_fields: usize,
    pub min: f64,
    /// `(field, i, j)` attaining `min`.
    pub argmin: (usize, usize, usize),
    pub max_abs: f64,
    /// Every evaluated term vanished to `PICONE_TOL`.
    pub equality: bool,
    pub passed: bool,
}

/// Minimum over all index pairs `i < j` of a single pair.
pub fn picone_scan(pair: &PiconePair, p: f64) -> Result<(f64, usize, usize, f64)> {
    let (u, v) = (pair.u.values(), pair.v.values());
    let mut best = (f64::INFINITY, 0, 0, 0.0_f64);
    for i in 0..u.len() {
        for j in (i + 1)..u.len() {
            let l = picone_raw(u, v, i, j, p)?;
            if l < best.0 {
                best = (l, i, j, best.3);
            }
            best.3 = best.3.max(l.abs());
        }
    }
    Ok(best)
}

/// Evaluates every index pair of the supplied pair (if any) and of
/// `n_random` random pairs with `u ∈ [0,1)`, `v ∈ [0.1, 1.1)`.
pub fn picone_sweep(
    grid: Grid,
    injected: Option<&PiconePair>,
    p: f64,
    n_random: usize,
    seed: u64,
) -> Result<PiconeReport> {
    if n_random == 0 && injected.is_none() {
        return Err(Error::param("n_random", "need at least one field pair"));
    }
    if !(p > 1.0) {
        return Err(Error::param("p", format!("must exceed 1, got {p}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(n_random + 1);
    if let Some(pr) = injected {
        pairs.push(pr.clone());
    }
    for _ in 0..n_random {
        let u = random_field(grid, 0.0, 1.0, &mut rng);
        let v = random_field(grid, 0.1, 1.1, &mut rng);
        pairs.push(PiconePair::new(u, v)?);
    }
    let mut min = f64::INFINITY;
    let mut argmin = (0, 0, 0);
    let mut max_abs = 0.0_f64;
    for (k, pr) in pairs.iter().enumerate() {
        let (m, i, j, a) = picone_scan(pr, p)?;
        if m < min {
            min = m;
            argmin = (k, i, j);
        }
        max_abs = max_abs.max(a);
    }
    Ok(PiconeReport {
        p,
        n_fields: pairs.len(),
        min,
        argmin,
        max_abs,
        equality: max_abs <= PICONE_TOL,
        passed: min >= -PICONE_TOL,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityReport {
    pub min: f64,
    pub argmin: usize,
    pub passed: bool,
}

pub fn positivity_check(pair: &EigenPair) -> PositivityReport {
    positivity_of(&pair.u)
}

pub fn positivity_of(u: &ScalarField) -> PositivityReport {
    let (argmin, min) =
        u.values()
            .iter()
            .copied()
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |acc, (i, x)| if x < acc.1 { (i, x) } else { acc },
            );
    PositivityReport {
        min,
        argmin,
        passed: min > 0.0,
    }
}
