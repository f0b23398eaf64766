//! Linear cocycles over a fixed base point, in discrete and continuous time.
//!
//! The base point `ω_τ` (initial time plus noise path) is baked into the
//! closures, so `step(n)` is `A(Θ_n ω_p)` and `generator(t)` is the right-hand
//! side matrix at absolute time `t`. Consequently `φ(t, Θ_s ω_τ)` is the
//! propagator from `s` to `s + t`.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{all_finite, op_norm, Mat, Vector};

pub type Generator = Arc<dyn Fn(f64) -> Mat + Send + Sync>;
pub type StepFn = Arc<dyn Fn(i64) -> Result<Mat> + Send + Sync>;

/// `ẋ = A(t) x`, integrated by classical RK4 with a fixed step.
#[derive(Clone)]
pub struct ContinuousCocycle {
    dim: usize,
    generator: Generator,
    h_int: f64,
}

impl fmt::Debug for ContinuousCocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContinuousCocycle")
            .field("dim", &self.dim)
            .field("h_int", &self.h_int)
            .finish()
    }
}

pub const DEFAULT_MAX_STEP: f64 = 1.0 / 64.0;

impl ContinuousCocycle {
    /// Default step `min(1/64, 0.1/‖A(0)‖)`; the second cap keeps RK4 accurate
    /// on fast oscillatory modes.
    pub fn new(dim: usize, generator: impl Fn(f64) -> Mat + Send + Sync + 'static) -> Self {
        let generator: Generator = Arc::new(generator);
        let a0 = op_norm(&generator(0.0));
        let mut h = DEFAULT_MAX_STEP;
        if a0 > 0.0 && a0.is_finite() {
            h = h.min(0.1 / a0);
        }
        ContinuousCocycle {
            dim,
            generator,
            h_int: h,
        }
    }

    pub fn autonomous(a: Mat) -> Self {
        let d = a.nrows();
        Self::new(d, move |_| a.clone())
    }

    /// Overrides the integration step (capped at the current default, never larger).
    pub fn with_max_step(mut self, h: f64) -> Self {
        if h > 0.0 {
            self.h_int = self.h_int.min(h);
        }
        self
    }

    /// Sets the integration step exactly.
    pub fn with_step(mut self, h: f64) -> Self {
        assert!(h > 0.0, "integration step must be positive");
        self.h_int = h;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn step_size(&self) -> f64 {
        self.h_int
    }

    pub fn generator_at(&self, t: f64) -> Mat {
        (self.generator)(t)
    }

    pub fn generator(&self) -> Generator {
        self.generator.clone()
    }

    fn substeps(&self, duration: f64) -> usize {
        ((duration / self.h_int) - 1e-9).ceil().max(1.0) as usize
    }

    fn rk4_matrix(&self, t0: f64, duration: f64, mut x: Mat) -> Result<Mat> {
        if duration == 0.0 {
            return Ok(x);
        }
        let n = self.substeps(duration);
        let h = duration / n as f64;
        let a = &self.generator;
        for k in 0..n {
            let t = t0 + k as f64 * h;
            let a0 = a(t);
            let am = a(t + 0.5 * h);
            let a1 = a(t + h);
            let k1 = &a0 * &x;
            let k2 = &am * (&x + &k1 * (0.5 * h));
            let k3 = &am * (&x + &k2 * (0.5 * h));
            let k4 = &a1 * (&x + &k3 * h);
            x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        }
        if !all_finite(&x) {
            return Err(Error::Integration(format!(
                "non-finite state after integrating from {t0} over {duration}"
            )));
        }
        Ok(x)
    }

    /// Solution of `ẋ = A(t)x`, `x(t0) = x0`, at `t1 ≥ t0`.
    pub fn integrate(&self, t0: f64, t1: f64, x0: &Vector) -> Result<Vector> {
        if t1 < t0 {
            return Err(Error::Domain(format!("integrate needs t1 ≥ t0, got {t0} → {t1}")));
        }
        if x0.len() != self.dim {
            return Err(Error::Domain(format!(
                "initial state has length {}, cocycle dimension is {}",
                x0.len(),
                self.dim
            )));
        }
        let m = Mat::from_column_slice(self.dim, 1, x0.as_slice());
        let out = self.rk4_matrix(t0, t1 - t0, m)?;
        Ok(Vector::from_column_slice(out.as_slice()))
    }

    /// `φ(t, Θ_s ω_τ)`: the fundamental matrix from `s` to `s + t`.
    pub fn propagator(&self, s: f64, t: f64) -> Result<Mat> {
        if t < 0.0 {
            return Err(Error::Domain(format!("propagator duration must be ≥ 0, got {t}")));
        }
        self.rk4_matrix(s, t, Mat::identity(self.dim, self.dim))
    }

    /// Evolution-process view `φ_{t,s} = φ(t − s, Θ_s ω_τ)`, `t ≥ s`.
    pub fn evolution(&self, t: f64, s: f64) -> Result<Mat> {
        self.propagator(s, t - s)
    }

    /// `φ(t_j, Θ_s ω_τ)` at `t_j = j/samples`, `j = 0..=samples·duration`.
    fn sampled_propagators(&self, s: f64, duration: f64, samples: usize) -> Result<Vec<Mat>> {
        let n = (duration * samples as f64).round() as usize;
        let dt = duration / n.max(1) as f64;
        let mut out = Vec::with_capacity(n + 1);
        let mut x = Mat::identity(self.dim, self.dim);
        out.push(x.clone());
        for j in 0..n {
            x = self.rk4_matrix(s + j as f64 * dt, dt, x)?;
            out.push(x.clone());
        }
        Ok(out)
    }

    /// Sampled `sup ‖φ(t, Θ_s ω_τ)‖ e^{c t}` over shifts `s ∈ [s_min, s_max]` and
    /// `t ∈ [0, 1]`, both at `samples_per_unit` points per unit time.
    ///
    /// This is a lower bound for the true supremum.
    pub fn weighted_one_step_bound(
        &self,
        s_min: f64,
        s_max: f64,
        samples_per_unit: usize,
        c: f64,
    ) -> Result<f64> {
        let spu = samples_per_unit.max(1);
        let n_shift = ((s_max - s_min) * spu as f64).round().max(0.0) as usize;
        let ds = if n_shift == 0 { 0.0 } else { (s_max - s_min) / n_shift as f64 };
        let per_shift: Vec<Result<f64>> = (0..=n_shift)
            .into_par_iter()
            .map(|k| {
                let s = s_min + k as f64 * ds;
                let mats = self.sampled_propagators(s, 1.0, spu)?;
                Ok(mats
                    .iter()
                    .enumerate()
                    .map(|(j, m)| op_norm(m) * (c * j as f64 / spu as f64).exp())
                    .fold(0.0_f64, f64::max))
            })
            .collect();
        let mut best = 0.0_f64;
        for r in per_shift {
            best = best.max(r?);
        }
        Ok(best)
    }

    /// `L = sup_{s, 0 ≤ t ≤ 1} ‖φ(t, Θ_s ω_τ)‖`, sampled.
    pub fn one_step_bound(&self, s_min: f64, s_max: f64, samples_per_unit: usize) -> Result<f64> {
        self.weighted_one_step_bound(s_min, s_max, samples_per_unit, 0.0)
    }
}

/// `x_{n+1} = A(Θ_n ω_p) x_n`.
#[derive(Clone)]
pub struct DiscreteCocycle {
    dim: usize,
    step: StepFn,
}

impl fmt::Debug for DiscreteCocycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiscreteCocycle").field("dim", &self.dim).finish()
    }
}

impl DiscreteCocycle {
    pub fn new(dim: usize, step: impl Fn(i64) -> Result<Mat> + Send + Sync + 'static) -> Self {
        DiscreteCocycle {
            dim,
            step: Arc::new(step),
        }
    }

    pub fn from_fn(dim: usize, step: impl Fn(i64) -> Mat + Send + Sync + 'static) -> Self {
        Self::new(dim, move |n| Ok(step(n)))
    }

    pub fn constant(a: Mat) -> Self {
        let d = a.nrows();
        Self::from_fn(d, move |_| a.clone())
    }

    /// Steps `A(n)` stored for `n = first, first+1, …`; other indices are a window error.
    pub fn tabulated(first: i64, steps: Vec<Mat>) -> Self {
        let d = steps.first().map(|m| m.nrows()).unwrap_or(0);
        let steps = Arc::new(steps);
        Self::new(d, move |n| {
            let k = n - first;
            if k < 0 || k as usize >= steps.len() {
                return Err(Error::Window {
                    message: format!(
                        "step {n} outside tabulated range [{first}, {}]",
                        first + steps.len() as i64 - 1
                    ),
                    required_extension: Some(if k < 0 {
                        (-k) as f64
                    } else {
                        (k as usize + 1 - steps.len()) as f64
                    }),
                });
            }
            Ok(steps[k as usize].clone())
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `A(Θ_n ω_p)`.
    pub fn step(&self, n: i64) -> Result<Mat> {
        let m = (self.step)(n)?;
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::Domain(format!(
                "step {n} returned a {}×{} matrix, expected {d}×{d}",
                m.nrows(),
                m.ncols(),
                d = self.dim
            )));
        }
        if !all_finite(&m) {
            return Err(Error::Integration(format!("step {n} has non-finite entries")));
        }
        Ok(m)
    }

    /// `φ_{n,m} = A(n−1)⋯A(m)` for `n ≥ m`.
    pub fn evolution(&self, n: i64, m: i64) -> Result<Mat> {
        if n < m {
            return Err(Error::Domain(format!("evolution needs n ≥ m, got {n} < {m}")));
        }
        let mut x = Mat::identity(self.dim, self.dim);
        for k in m..n {
            x = self.step(k)? * x;
        }
        Ok(x)
    }

    /// Adds a perturbation: steps `A(n) + B(n)`.
    pub fn perturbed(&self, b: &DiscreteCocycle) -> DiscreteCocycle {
        let a = self.clone();
        let b = b.clone();
        DiscreteCocycle::new(self.dim, move |n| Ok(a.step(n)? + b.step(n)?))
    }

    /// Steps `ψ(n) − φ(n)`.
    pub fn difference(&self, base: &DiscreteCocycle) -> DiscreteCocycle {
        let a = self.clone();
        let b = base.clone();
        DiscreteCocycle::new(self.dim, move |n| Ok(a.step(n)? - b.step(n)?))
    }
}

/// `φ(n, ω_p) = A(Θ_{n−1} ω_p) ⋯ A(ω_p)`; identity for `n = 0`.
pub fn compose_discrete(c: &DiscreteCocycle, n: i64) -> Result<Mat> {
    if n < 0 {
        return Err(Error::Domain(format!("compose_discrete needs n ≥ 0, got {n}")));
    }
    c.evolution(n, 0)
}

/// Time-one map sequence `φ_n = φ(1, Θ_n ω_p)`, evaluated lazily.
pub fn discretize(c: &ContinuousCocycle) -> DiscreteCocycle {
    let c = c.clone();
    DiscreteCocycle::new(c.dim(), move |n| c.propagator(n as f64, 1.0))
}

/// Time-one maps for `n ∈ [n_min, n_max)`, computed in parallel and tabulated.
pub fn discretize_on(c: &ContinuousCocycle, n_min: i64, n_max: i64) -> Result<DiscreteCocycle> {
    let steps: Result<Vec<Mat>> = (n_min..n_max)
        .into_par_iter()
        .map(|n| c.propagator(n as f64, 1.0))
        .collect();
    let steps = steps?;
    if steps.is_empty() {
        return Err(Error::Domain(format!("empty discretization range [{n_min}, {n_max})")));
    }
    Ok(DiscreteCocycle::tabulated(n_min, steps))
}

/// Writes a matrix as a labelled CSV block: a `# label` line, then one row per line.
pub fn write_matrix_block<W: Write>(mut out: W, label: &str, m: &Mat) -> Result<()> {
    writeln!(out, "# {label} {}x{}", m.nrows(), m.ncols())?;
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|j| format!("{}", m[(i, j)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}
