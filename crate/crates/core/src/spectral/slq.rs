//! Stochastic Lanczos quadrature estimate of a Gaussian-smoothed spectral
//! density, and ε-rank extraction from it.

use alloc::vec::Vec;

use super::lanczos::{lanczos, LinearOperator};
use crate::error::{invalid, Result};
use crate::numerics::{symtridiag_eigen, RngStream};

/// Ritz nodes and quadrature weights from one probe.
#[derive(Debug, Clone, PartialEq)]
pub struct RitzProbe {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    pub probes: Vec<RitzProbe>,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub sigma2: f64,
    pub steps: usize,
    pub dim: usize,
}

impl SpectrumEstimate {
    pub fn n_probes(&self) -> usize {
        self.probes.len()
    }

    /// Trapezoid integral of the density over the grid.
    pub fn mass(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    pub fn ritz_range(&self) -> (f64, f64) {
        ritz_range(&self.probes)
    }
}

/// Evaluation grid for the smoothed density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridSpec {
    /// Cover the Ritz range padded by five standard deviations.
    Auto { points: usize },
    /// Fixed interval, widened when it does not contain the padded Ritz range.
    Range { lo: f64, hi: f64, points: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlqConfig {
    pub steps: usize,
    pub probes: usize,
    /// Gaussian variance; `None` picks `1e−5·(λmax − λmin)²`, at least `1e−8`.
    pub sigma2: Option<f64>,
    pub grid: GridSpec,
}

impl Default for SlqConfig {
    fn default() -> Self {
        Self {
            steps: 90,
            probes: 8,
            sigma2: None,
            grid: GridSpec::Auto { points: 1024 },
        }
    }
}

pub fn default_sigma2(lo: f64, hi: f64) -> f64 {
    (1e-5 * (hi - lo) * (hi - lo)).max(1e-8)
}

fn ritz_range(probes: &[RitzProbe]) -> (f64, f64) {
    probes
        .iter()
        .flat_map(|p| p.nodes.iter())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// Runs one Lanczos probe per stream split `0..probes` and returns the Ritz
/// pairs. Probes are `N(0, I/P)`; the quadrature is invariant to their scale.
pub fn ritz_probes(op: &dyn LinearOperator, steps: usize, probes: usize, rng: &RngStream) -> Result<Vec<RitzProbe>> {
    if probes == 0 {
        return Err(invalid!("SLQ needs at least one probe"));
    }
    let dim = op.dim();
    let sd = 1.0 / libm::sqrt(dim as f64);
    (0..probes)
        .map(|i| {
            let mut r = rng.split(i as u64);
            let v: Vec<f64> = (0..dim).map(|_| sd * r.gaussian()).collect();
            let t = lanczos(op, steps.min(dim), &v)?;
            let e = symtridiag_eigen(&t);
            Ok(RitzProbe {
                nodes: e.values,
                weights: e.first_components_sq,
            })
        })
        .collect()
}

/// SLQ estimate of the spectral density of `op` smoothed by `N(0, σ²)`.
pub fn slq_density(op: &dyn LinearOperator, config: &SlqConfig, rng: &RngStream) -> Result<SpectrumEstimate> {
    let probes = ritz_probes(op, config.steps, config.probes, rng)?;
    density_from_probes(probes, config, op.dim())
}

/// Smooths already computed Ritz pairs onto a grid.
pub fn density_from_probes(probes: Vec<RitzProbe>, config: &SlqConfig, dim: usize) -> Result<SpectrumEstimate> {
    let (lo, hi) = ritz_range(&probes);
    let sigma2 = config.sigma2.unwrap_or_else(|| default_sigma2(lo, hi));
    if !(sigma2 > 0.0) {
        return Err(invalid!("smoothing variance must be positive"));
    }
    let grid = build_grid(config.grid, lo, hi, sigma2)?;
    let n = probes.len() as f64;
    let density = grid
        .iter()
        .map(|&t| {
            probes
                .iter()
                .map(|p| {
                    p.nodes
                        .iter()
                        .zip(&p.weights)
                        .map(|(&l, &w)| w * gaussian_pdf(t, l, sigma2))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / n
        })
        .collect();
    Ok(SpectrumEstimate {
        steps: config.steps.min(dim),
        probes,
        grid,
        density,
        sigma2,
        dim,
    })
}

fn build_grid(spec: GridSpec, lo: f64, hi: f64, sigma2: f64) -> Result<Vec<f64>> {
    let pad = 5.0 * libm::sqrt(sigma2);
    let (a, b, points) = match spec {
        GridSpec::Auto { points } => (lo - pad, hi + pad, points),
        GridSpec::Range { lo: a, hi: b, points } => {
            if !(a < b) {
                return Err(invalid!("grid range must satisfy lo < hi"));
            }
            (a.min(lo - pad), b.max(hi + pad), points)
        }
    };
    if points < 2 {
        return Err(invalid!("grid needs at least two points"));
    }
    Ok(linspace(a, b, points))
}

pub fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    let step = (b - a) / (points - 1) as f64;
    (0..points).map(|i| a + step * i as f64).collect()
}

#[inline]
pub fn gaussian_pdf(t: f64, mean: f64, sigma2: f64) -> f64 {
    let d = t - mean;
    libm::exp(-d * d / (2.0 * sigma2)) / libm::sqrt(2.0 * core::f64::consts::PI * sigma2)
}

/// `(1/P) Σ_i N(λ_i; t, σ²)` on `grid` for a fully known spectrum.
pub fn smoothed_density(eigenvalues: &[f64], sigma2: f64, grid: &[f64]) -> Vec<f64> {
    let n = eigenvalues.len() as f64;
    grid.iter()
        .map(|&t| eigenvalues.iter().map(|&l| gaussian_pdf(t, l, sigma2)).sum::<f64>() / n)
        .collect()
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Trapezoid L1 distance between two densities sampled on the same grid.
pub fn l1_distance(grid: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(grid, &diff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsRankSource {
    Slq,
    Exact,
}

/// Number of eigenvalues with `|λ| > ε`, and that count over `P`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsRankReport {
    pub epsilon: f64,
    pub count: usize,
    pub normalized: f64,
    pub source: EpsRankSource,
}

pub fn epsilon_rank_exact(eigenvalues: &[f64], epsilon: f64) -> Result<EpsRankReport> {
    check_eps(epsilon)?;
    let count = eigenvalues.iter().filter(|v| v.abs() > epsilon).count();
    let p = eigenvalues.len();
    Ok(EpsRankReport {
        epsilon,
        count,
        normalized: if p == 0 { 0.0 } else { count as f64 / p as f64 },
        source: EpsRankSource::Exact,
    })
}

/// `P · Σ_{j: |ℓ_j| > ε} ω̄_j`, with `ω̄` the probe-averaged Ritz weights,
/// rounded to the nearest count.
pub fn epsilon_rank_slq(probes: &[RitzProbe], epsilon: f64, dim: usize) -> Result<EpsRankReport> {
    check_eps(epsilon)?;
    if probes.is_empty() {
        return Err(invalid!("no Ritz probes"));
    }
    let mass = probes
        .iter()
        .map(|p| {
            p.nodes
                .iter()
                .zip(&p.weights)
                .filter(|(l, _)| l.abs() > epsilon)
                .map(|(_, w)| w)
                .sum::<f64>()
        })
        .sum::<f64>()
        / probes.len() as f64;
    let count = libm::round(mass * dim as f64) as usize;
    Ok(EpsRankReport {
        epsilon,
        count,
        normalized: count as f64 / dim as f64,
        source: EpsRankSource::Slq,
    })
}

fn check_eps(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(invalid!("epsilon must be positive, got {}", epsilon))
    }
}
