use super::path::SamplePath;
use crate::error::{Error, Result};

pub const DEFAULT_TAIL_TOL: f64 = 1e-10;

/// Bound on the discarded left tail when the integral is cut at `t_min`.
fn tail_bound(path: &SamplePath, t: f64) -> f64 {
    let g = path.grid();
    (g.t_min() - t).exp() * (g.t_min().abs() + path.max_abs())
}

fn check_tail(path: &SamplePath, t: f64, tail_tol: f64) -> Result<()> {
    let g = path.grid();
    let bound = tail_bound(path, t);
    if bound < tail_tol {
        return Ok(());
    }
    // need e^{-(t - t_min')} · C < tail_tol, C frozen at its current value
    let c = g.t_min().abs() + path.max_abs();
    let needed = (c / tail_tol).ln() - (t - g.t_min());
    Err(Error::Window {
        message: format!(
            "left tail bound {bound:.3e} at t = {t} exceeds tolerance {tail_tol:.1e}"
        ),
        required_extension: Some(needed.max(g.h()) + g.h()),
    })
}

/// `z*(θ_t ω) = −∫_{−∞}^0 e^s (ω(t+s) − ω(t)) ds` by the trapezoid rule on the
/// path grid, truncated at the window's left edge.
///
/// Error is `O(h²)` from the quadrature plus at most `tail_tol` from the tail.
pub fn ou_value(path: &SamplePath, t: f64, tail_tol: f64) -> Result<f64> {
    let g = path.grid();
    let k = g.index_of(t).ok_or_else(|| {
        Error::Domain(format!(
            "t = {t} is not a node of the path grid [{}, {}] (h = {})",
            g.t_min(),
            g.t_max(),
            g.h()
        ))
    })?;
    check_tail(path, t, tail_tol)?;
    let w = path.values();
    let h = g.h();
    let wt = w[k];
    // integrand in s = t_j − t ≤ 0: e^s (ω_j − ω_t)
    let mut acc = 0.0;
    for j in 0..=k {
        let s = g.time(j) - t;
        let weight = if j == 0 || j == k { 0.5 } else { 1.0 };
        acc += weight * s.exp() * (w[j] - wt);
    }
    Ok(-h * acc)
}

/// `z*(θ_t ω)` at every node, by exact integration of the piecewise-linear
/// interpolant of `ω`, with off-grid evaluation.
///
/// Uses `z*(θ_t ω) = ω(t) − I(t)` with `I(t) = ∫_{−∞}^t e^{u−t} ω(u) du`,
/// which solves `İ = ω − I`. The recursion is started at the left edge with
/// `I(t_min) = ω(t_min)`; the start-up error decays like `e^{t_min − t}` and is
/// below the tail tolerance from [`OuSeries::reliable_from`] onward.
#[derive(Clone, Debug)]
pub struct OuSeries {
    path: SamplePath,
    integral: Vec<f64>,
    reliable_from: f64,
}

impl OuSeries {
    pub fn new(path: &SamplePath, tail_tol: f64) -> Self {
        let g = path.grid();
        let w = path.values();
        let h = g.h();
        let a = -(-h).exp_m1();
        let decay = (-h).exp();
        let mut integral = Vec::with_capacity(w.len());
        let mut i_prev = w[0];
        integral.push(i_prev);
        for k in 0..w.len() - 1 {
            let m = (w[k + 1] - w[k]) / h;
            i_prev = decay * i_prev + w[k] * a + m * (h - a);
            integral.push(i_prev);
        }
        let c = g.t_min().abs() + path.max_abs();
        let reliable_from = if c > 0.0 {
            g.t_min() + (c / tail_tol).ln().max(0.0)
        } else {
            g.t_min()
        };
        OuSeries {
            path: path.clone(),
            integral,
            reliable_from,
        }
    }

    pub fn path(&self) -> &SamplePath {
        &self.path
    }

    /// Earliest time at which the start-up error is below the tail tolerance.
    pub fn reliable_from(&self) -> f64 {
        self.reliable_from
    }

    /// Errors unless `[t0, t1]` lies inside the reliable part of the window.
    pub fn ensure_covers(&self, t0: f64, t1: f64) -> Result<()> {
        let g = self.path.grid();
        if t0 < self.reliable_from {
            return Err(Error::Window {
                message: format!(
                    "OU start-up transient reaches t = {:.3}, requested window starts at {t0}",
                    self.reliable_from
                ),
                required_extension: Some(self.reliable_from - t0 + g.h()),
            });
        }
        if t1 > g.t_max() {
            return Err(Error::Window {
                message: format!("requested window ends at {t1}, path ends at {}", g.t_max()),
                required_extension: Some(t1 - g.t_max()),
            });
        }
        Ok(())
    }

    /// Node values `z*(θ_{t_k} ω)`.
    pub fn node_values(&self) -> Vec<f64> {
        self.path
            .values()
            .iter()
            .zip(&self.integral)
            .map(|(w, i)| w - i)
            .collect()
    }

    /// `z*(θ_t ω)` for any `t` in the window (clamped at the edges).
    pub fn eval(&self, t: f64) -> f64 {
        let g = self.path.grid();
        let w = self.path.values();
        let h = g.h();
        let x = (t - g.t_min()) / h;
        let n = w.len();
        if x <= 0.0 {
            return w[0] - self.integral[0];
        }
        if x >= (n - 1) as f64 {
            return w[n - 1] - self.integral[n - 1];
        }
        let k = x.floor() as usize;
        let tau = t - g.time(k);
        if tau == 0.0 {
            return w[k] - self.integral[k];
        }
        let m = (w[k + 1] - w[k]) / h;
        let a = -(-tau).exp_m1();
        let i_t = (-tau).exp() * self.integral[k] + w[k] * a + m * (tau - a);
        let w_t = w[k] + m * tau;
        w_t - i_t
    }
}
