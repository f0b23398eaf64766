use serde::Serialize;

use super::grid::TimeGrid;
use super::kappa::KappaFn;
use super::ou::{ou_value, DEFAULT_TAIL_TOL};
use super::path::{sample_wiener_path, SamplePath};
use super::rng::derive_seed;
use crate::error::{Error, Result};

/// Window maxima `m1 = max |κ_t z*(θ_t ω)|`, `m2 = max |(κ_t − κ̇_t) z*(θ_t ω)|`.
///
/// These are lower bounds for the suprema over all of ℝ.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseBounds {
    pub m1: f64,
    pub m2: f64,
    pub window: TimeGrid,
}

/// Evaluates `m1`, `m2` at the nodes of `window`, which must be nodes of the path grid.
pub fn noise_bounds(path: &SamplePath, kappa: &KappaFn, window: &TimeGrid) -> Result<NoiseBounds> {
    let mut m1 = 0.0_f64;
    let mut m2 = 0.0_f64;
    for t in window.times() {
        if path.grid().index_of(t).is_none() {
            return Err(Error::Misaligned(format!(
                "window node {t} is not a node of the path grid"
            )));
        }
        let z = ou_value(path, t, DEFAULT_TAIL_TOL)?;
        let (k, dk) = kappa.eval(t);
        m1 = m1.max((k * z).abs());
        m2 = m2.max(((k - dk) * z).abs());
    }
    Ok(NoiseBounds {
        m1,
        m2,
        window: window.clone(),
    })
}

/// `|z*(θ_t ω)| / |t|` at each checkpoint.
pub fn sublinearity_report(path: &SamplePath, checkpoints: &[f64]) -> Result<Vec<f64>> {
    checkpoints
        .iter()
        .map(|&t| {
            if t == 0.0 {
                return Err(Error::Domain("sublinearity ratio undefined at t = 0".into()));
            }
            Ok(ou_value(path, t, DEFAULT_TAIL_TOL)?.abs() / t.abs())
        })
        .collect()
}

/// Largest defect of `z(t) − z(t₀) = −∫_{t₀}^t z ds + ω(t) − ω(t₀)` over the
/// nodes of `window`, with `z = z*(θ_· ω)` and the integral taken by the trapezoid rule.
pub fn ou_identity_residual(path: &SamplePath, window: &TimeGrid, tail_tol: f64) -> Result<f64> {
    let h = window.h();
    let mut z_prev = None;
    let mut base = (0.0, 0.0);
    let mut integral = 0.0;
    let mut worst = 0.0_f64;
    for t in window.times() {
        let z = ou_value(path, t, tail_tol)?;
        let w = path.at(t).ok_or_else(|| {
            Error::Misaligned(format!("window node {t} is not a node of the path grid"))
        })?;
        match z_prev {
            None => base = (z, w),
            Some(zp) => {
                integral += 0.5 * h * (zp + z);
                worst = worst.max((z - base.0 + integral - (w - base.1)).abs());
            }
        }
        z_prev = Some(z);
    }
    Ok(worst)
}

/// Sample mean and variance of `z*(ω)` over `n_paths` independent Wiener paths
/// on `[−lead, 0]` with step `h`, seeded by `derive_seed(seed, i)`.
pub fn stationary_moments(n_paths: usize, seed: u64, h: f64, lead: f64, tail_tol: f64) -> Result<(f64, f64)> {
    if n_paths < 2 {
        return Err(Error::Domain(format!("need at least two paths, got {n_paths}")));
    }
    let grid = TimeGrid::new(-lead, h, h)?;
    let values: Result<Vec<f64>> = (0..n_paths as u64)
        .map(|i| ou_value(&sample_wiener_path(&grid, derive_seed(seed, i)), 0.0, tail_tol))
        .collect();
    let values = values?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}
