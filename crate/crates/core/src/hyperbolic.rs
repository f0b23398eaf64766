//! Bounded global solutions near a hyperbolic equilibrium of
//! `ẏ = 𝓑y + f_η(Θ_t ω_τ, y)` and their hyperbolicity.
//!
//! With `φ = y − y₀*` the problem becomes `φ̇ = 𝓐φ + g_η(t, φ)` where
//! `𝓐 = 𝓑 + f₀′(y₀*)` and `g_η(t, φ) = f_η(t, y₀* + φ) − f₀(y₀*) − f₀′(y₀*)φ`.
//! Bounded solutions are fixed points of
//! `𝓘(φ)(t) = ∫ G_𝓐(t, s) g_η(s, φ(s)) ds`, discretized by the composite
//! trapezoid rule on a uniform grid that extends the requested window by a
//! truncation pad on each side. The noise path is baked into `f_η`.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::ContinuousCocycle;
use crate::dichotomy::{autonomous_certificate_with, DichotomyCertificate, DEFAULT_SCAN_DENSITY};
use crate::error::{Error, Result};
use crate::greens::CONTRACTION_LIMIT;
use crate::linalg::{all_finite, ball_cloud, expm, op_norm, Mat, Vector};
use crate::robustness::{robust_dichotomy_continuous, ContinuousOptions};

pub type Field = Arc<dyn Fn(&Vector) -> Vector + Send + Sync>;
pub type FieldJacobian = Arc<dyn Fn(&Vector) -> Mat + Send + Sync>;
/// `(η, t, y) ↦ f_η(Θ_t ω_τ, y)`.
pub type PerturbedField = Arc<dyn Fn(f64, f64, &Vector) -> Vector + Send + Sync>;
pub type PerturbedJacobian = Arc<dyn Fn(f64, f64, &Vector) -> Mat + Send + Sync>;

/// Each of the three smallness conditions of the existence proof asks for a
/// term below `1/(6Mβ⁻¹)`.
pub const PROOF_FRACTION: f64 = 1.0 / 6.0;
pub const BISECTION_STEPS: usize = 16;
pub const EQUILIBRIUM_TOL: f64 = 1e-8;
/// Relative step of the central differences used when no Jacobian of `f_η` is given.
pub const FD_STEP: f64 = 1e-5;
pub const GREEN_TAIL_TOL: f64 = 1e-9;
/// Growth factor of the radius search for the smallest self-mapped ball.
const EPS_GROWTH: f64 = 1.05;
pub const DEFAULT_MARGIN: f64 = 0.05;

/// A semilinear problem `ẏ = 𝓑y + f₀(y)` with a hyperbolic equilibrium
/// `y₀*` and its random perturbation `ẏ = 𝓑y + f_η(Θ_t ω_τ, y)`.
#[derive(Clone)]
pub struct SemilinearProblem {
    b: Mat,
    a: Mat,
    f0: Field,
    f0_jac: FieldJacobian,
    f_eta: PerturbedField,
    f_eta_jac: Option<PerturbedJacobian>,
    y0_star: Vector,
    r_u: f64,
    margin: f64,
    cert: DichotomyCertificate,
}

impl std::fmt::Debug for SemilinearProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SemilinearProblem")
            .field("a", &self.a)
            .field("y0_star", &self.y0_star)
            .field("r_u", &self.r_u)
            .field("bound", &self.cert.bound)
            .field("exponent", &self.cert.exponent)
            .finish()
    }
}

impl SemilinearProblem {
    pub fn new(
        b: Mat,
        f0: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        f0_jac: impl Fn(&Vector) -> Mat + Send + Sync + 'static,
        f_eta: impl Fn(f64, f64, &Vector) -> Vector + Send + Sync + 'static,
        y0_star: Vector,
        r_u: f64,
    ) -> Result<Self> {
        let d = b.nrows();
        if b.ncols() != d || y0_star.len() != d {
            return Err(Error::Config(format!(
                "𝓑 is {}×{} but y₀* has length {}",
                b.nrows(),
                b.ncols(),
                y0_star.len()
            )));
        }
        if !(r_u > 0.0 && r_u.is_finite()) {
            return Err(Error::Config(format!("neighbourhood radius must be positive, got {r_u}")));
        }
        let f0: Field = Arc::new(f0);
        let f0_jac: FieldJacobian = Arc::new(f0_jac);
        let residual = (&b * &y0_star + f0(&y0_star)).norm();
        if !(residual <= EQUILIBRIUM_TOL * (1.0 + y0_star.norm())) {
            return Err(Error::Domain(format!(
                "y₀* is not an equilibrium: ‖𝓑y₀* + f₀(y₀*)‖ = {residual:.3e}"
            )));
        }
        let a = &b + f0_jac(&y0_star);
        let cert = autonomous_certificate_with(&a, DEFAULT_MARGIN, DEFAULT_SCAN_DENSITY)?;
        Ok(SemilinearProblem {
            b,
            a,
            f0,
            f0_jac,
            f_eta: Arc::new(f_eta),
            f_eta_jac: None,
            y0_star,
            r_u,
            margin: DEFAULT_MARGIN,
            cert,
        })
    }

    pub fn with_eta_jacobian(
        mut self,
        jac: impl Fn(f64, f64, &Vector) -> Mat + Send + Sync + 'static,
    ) -> Self {
        self.f_eta_jac = Some(Arc::new(jac));
        self
    }

    /// Recomputes the dichotomy of `𝓐` with exponent `gap·(1 − margin)`.
    pub fn with_margin(mut self, margin: f64) -> Result<Self> {
        self.cert = autonomous_certificate_with(&self.a, margin, DEFAULT_SCAN_DENSITY)?;
        self.margin = margin;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
    pub fn b(&self) -> &Mat {
        &self.b
    }
    /// `𝓐 = 𝓑 + f₀′(y₀*)`.
    pub fn linearization(&self) -> &Mat {
        &self.a
    }
    pub fn y0_star(&self) -> &Vector {
        &self.y0_star
    }
    pub fn radius(&self) -> f64 {
        self.r_u
    }
    pub fn margin(&self) -> f64 {
        self.margin
    }
    pub fn certificate(&self) -> &DichotomyCertificate {
        &self.cert
    }

    pub fn f0(&self, y: &Vector) -> Vector {
        (self.f0)(y)
    }
    pub fn f0_jacobian(&self, y: &Vector) -> Mat {
        (self.f0_jac)(y)
    }
    pub fn f_eta(&self, eta: f64, t: f64, y: &Vector) -> Vector {
        (self.f_eta)(eta, t, y)
    }

    /// `(f_η)_y(t, y)`, analytic when supplied, else central differences.
    pub fn f_eta_jacobian(&self, eta: f64, t: f64, y: &Vector) -> Mat {
        if let Some(j) = &self.f_eta_jac {
            return j(eta, t, y);
        }
        let d = self.dim();
        let step = FD_STEP * (1.0 + y.norm());
        let mut jac = Mat::zeros(d, d);
        for k in 0..d {
            let mut yp = y.clone();
            let mut ym = y.clone();
            yp[k] += step;
            ym[k] -= step;
            let col = (self.f_eta(eta, t, &yp) - self.f_eta(eta, t, &ym)) / (2.0 * step);
            jac.set_column(k, &col);
        }
        jac
    }

    /// The full perturbed field `𝓑y + f_η(t, y)`.
    pub fn field(&self, eta: f64, t: f64, y: &Vector) -> Vector {
        &self.b * y + self.f_eta(eta, t, y)
    }

    fn g(&self, eta: f64, t: f64, phi: &Vector) -> Vector {
        let y = &self.y0_star + phi;
        let lin = (&self.a - &self.b) * phi;
        self.f_eta(eta, t, &y) - self.f0(&self.y0_star) - lin
    }

    fn dg(&self, eta: f64, t: f64, phi: &Vector) -> Mat {
        let y = &self.y0_star + phi;
        self.f_eta_jacobian(eta, t, &y) - (&self.a - &self.b)
    }

    /// RK4 solution of the full perturbed equation from `(t0, y0)` to `t1 ≥ t0`
    /// with step at most `h`.
    pub fn integrate(&self, eta: f64, t0: f64, t1: f64, y0: &Vector, h: f64) -> Result<Vector> {
        if t1 < t0 || !(h > 0.0) {
            return Err(Error::Domain(format!("integrate needs t1 ≥ t0 and h > 0, got {t0} → {t1}, h = {h}")));
        }
        let n = ((t1 - t0) / h - 1e-9).ceil().max(0.0) as usize;
        if n == 0 {
            return Ok(y0.clone());
        }
        let dt = (t1 - t0) / n as f64;
        let mut y = y0.clone();
        for k in 0..n {
            let t = t0 + k as f64 * dt;
            let k1 = self.field(eta, t, &y);
            let k2 = self.field(eta, t + 0.5 * dt, &(&y + &k1 * (0.5 * dt)));
            let k3 = self.field(eta, t + 0.5 * dt, &(&y + &k2 * (0.5 * dt)));
            let k4 = self.field(eta, t + dt, &(&y + &k3 * dt));
            y += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(Error::Integration(format!("solution blew up between {t0} and {t1}")));
        }
        Ok(y)
    }
}

/// Sampling densities for the sampled suprema.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Sampling {
    /// Time samples per unit.
    pub per_unit: usize,
    /// Points of the quasi-random cloud in a ball.
    pub points: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Sampling {
            per_unit: 16,
            points: 32,
        }
    }
}

fn sample_times(t_lo: f64, t_hi: f64, per_unit: usize) -> Vec<f64> {
    let n = ((t_hi - t_lo) * per_unit.max(1) as f64).ceil().max(1.0) as usize;
    (0..=n).map(|k| t_lo + (t_hi - t_lo) * k as f64 / n as f64).collect()
}

fn finite_or(what: &str, t: f64, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Domain(format!("non-finite {what} at t = {t}")))
    }
}

/// Sampled `λ(η) = sup_{t, x∈U} ‖f_η(t,x) − f₀(x)‖ + ‖(f_η)_x(t,x) − f₀′(x)‖`
/// over `t ∈ [t_lo, t_hi]`.
pub fn lambda_eta(p: &SemilinearProblem, eta: f64, t_lo: f64, t_hi: f64, s: &Sampling) -> Result<f64> {
    let cloud = ball_cloud(&p.y0_star, p.r_u, s.points);
    let base: Vec<(Vector, Mat)> = cloud.iter().map(|x| (p.f0(x), p.f0_jacobian(x))).collect();
    let per: Vec<Result<f64>> = sample_times(t_lo, t_hi, s.per_unit)
        .into_par_iter()
        .map(|t| {
            let mut best = 0.0_f64;
            for (x, (f0x, j0x)) in cloud.iter().zip(&base) {
                let v = (p.f_eta(eta, t, x) - f0x).norm() + op_norm(&(p.f_eta_jacobian(eta, t, x) - j0x));
                best = best.max(finite_or("λ term", t, v)?);
            }
            Ok(best)
        })
        .collect();
    per.into_iter().try_fold(0.0_f64, |m, r| Ok(m.max(r?)))
}

/// Sampled `ρ(ε) = sup_{x∈U} sup_{0<‖h‖≤ε} ‖f₀(x+h) − f₀(x) − f₀′(x)h‖/‖h‖`.
pub fn rho_modulus(p: &SemilinearProblem, eps: f64, points: usize) -> Result<f64> {
    if !(eps > 0.0) || eps > 0.5 * p.r_u * (1.0 + 1e-12) {
        return Err(Error::Domain(format!(
            "ρ(ε) needs 0 < ε ≤ r_U/2 = {}, got {eps}",
            0.5 * p.r_u
        )));
    }
    let xs = ball_cloud(&p.y0_star, p.r_u, points);
    let hs: Vec<Vector> = ball_cloud(&Vector::zeros(p.dim()), eps, points)
        .into_iter()
        .filter(|h| h.norm() > 0.0)
        .collect();
    let best = xs
        .par_iter()
        .map(|x| {
            let fx = p.f0(x);
            let jx = p.f0_jacobian(x);
            hs.iter()
                .map(|h| (p.f0(&(x + h)) - &fx - &jx * h).norm() / h.norm())
                .fold(0.0_f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// Sampled `sup_{‖h‖≤ε} ‖f₀′(y₀* + h) − f₀′(y₀*)‖`.
pub fn jacobian_variation(p: &SemilinearProblem, eps: f64, points: usize) -> f64 {
    let j0 = p.f0_jacobian(&p.y0_star);
    ball_cloud(&p.y0_star, eps, points)
        .iter()
        .map(|y| op_norm(&(p.f0_jacobian(y) - &j0)))
        .fold(0.0, f64::max)
}

/// Largest `ε ∈ (0, cap]` on a bisection grid with `q(ε) < bound`, assuming
/// `q` non-decreasing; `0` when even the first probe fails.
fn bisect_largest(cap: f64, bound: f64, q: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    if q(cap)? < bound {
        return Ok(cap);
    }
    let (mut lo, mut hi) = (0.0, cap);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if q(mid)? < bound {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// The radii of the existence proof for the autonomous dichotomy `(M, β)` of `𝓐`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpsilonThresholds {
    pub bound: f64,
    pub exponent: f64,
    /// `1/(6Mβ⁻¹)`.
    pub level: f64,
    /// Largest `ε₁ ≤ r_U` with `‖f₀′(y₀*+h) − f₀′(y₀*)‖ < level` for `‖h‖ < ε₁`.
    pub eps1: f64,
    /// Largest `ε₂ ≤ min(1/2, r_U/2)` with `ρ(ε) < level` for `ε < ε₂`.
    pub eps2: f64,
    /// `min(ε₁, ε₂/2)`.
    pub eps0: f64,
}

pub fn epsilon_thresholds(p: &SemilinearProblem, points: usize) -> Result<EpsilonThresholds> {
    let (m, beta) = (p.cert.bound, p.cert.exponent);
    let level = PROOF_FRACTION * beta / m;
    let eps1 = bisect_largest(p.r_u, level, |e| Ok(jacobian_variation(p, e, points)))?;
    let eps2 = bisect_largest(0.5_f64.min(0.5 * p.r_u), level, |e| rho_modulus(p, e, points))?;
    Ok(EpsilonThresholds {
        bound: m,
        exponent: beta,
        level,
        eps1,
        eps2,
        eps0: eps1.min(0.5 * eps2),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EtaSelection {
    pub eps: f64,
    pub eta: f64,
    /// `ε/(6Mβ⁻¹)`, the level `λ(η)` must stay below.
    pub target: f64,
    pub lambda: f64,
    pub warning: Option<String>,
}

/// Largest `η ∈ (0, 1]` on a bisection grid with `λ(η) < ε/(6Mβ⁻¹)`.
pub fn eta_epsilon(
    eps: f64,
    th: &EpsilonThresholds,
    lambda_curve: impl Fn(f64) -> Result<f64>,
) -> Result<EtaSelection> {
    if !(eps > 0.0) {
        return Err(Error::EpsilonThreshold(format!("ε must be positive, got {eps}")));
    }
    if eps >= th.eps1 {
        return Err(Error::EpsilonThreshold(format!(
            "ε = {eps} is not below ε₁ = {:.6} (Jacobian variation of f₀ reaches {:.6})",
            th.eps1, th.level
        )));
    }
    if eps >= 0.5 * th.eps2 {
        return Err(Error::EpsilonThreshold(format!(
            "ε = {eps} is not below ε₂/2 = {:.6} (remainder modulus ρ reaches {:.6})",
            0.5 * th.eps2,
            th.level
        )));
    }
    let target = eps * th.level;
    let eta = bisect_largest(1.0, target, &lambda_curve)?;
    let warning = (eta == 0.0).then(|| {
        format!("λ(η) ≥ {target:.3e} for every η on the bisection grid; no admissible η")
    });
    Ok(EtaSelection {
        eps,
        eta,
        target,
        lambda: lambda_curve(eta)?,
        warning,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum HyperbolicStatus {
    /// Bounded solution found and its linearization verified to admit a dichotomy.
    Certified,
    /// Bounded solution found; hyperbolicity could not be verified.
    BoundedOnly,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveOptions {
    pub h: f64,
    /// Picard stopping tolerance on the sup-norm error.
    pub tol: f64,
    pub tail_tol: f64,
    pub max_iter: usize,
    /// Radius of the ball `𝔛_ε`; chosen as the smallest self-mapped radius when absent.
    pub epsilon: Option<f64>,
    /// Extra length on each side of the window; defaults to twice the tail pad.
    pub pad: Option<f64>,
    pub points: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            h: 1.0 / 64.0,
            tol: 1e-10,
            tail_tol: GREEN_TAIL_TOL,
            max_iter: 500,
            epsilon: None,
            pad: None,
            points: 24,
        }
    }
}

/// Outcome of linearizing along a bounded solution and running the
/// continuous robustness pipeline on the linearization.
#[derive(Clone, Debug, Serialize)]
pub struct LinearizationReport {
    /// Window sup of `‖B_η(t)‖ = ‖(f_η)_y(t, ξ*(t)) − f₀′(y₀*)‖`.
    pub sup_b: f64,
    pub passed: bool,
    pub alpha_tilde: Option<f64>,
    pub m_hat: Option<f64>,
    pub delta_eff: Option<f64>,
    pub threshold: Option<f64>,
    pub note: Option<String>,
    #[serde(skip)]
    pub certificate: Option<DichotomyCertificate>,
}

/// A bounded solution `ξ*` on a padded grid, with diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicSolution {
    pub eta: f64,
    pub epsilon: f64,
    pub window: (f64, f64),
    /// Covered range `[t_start, t_start + (n−1)h]`.
    pub range: (f64, f64),
    pub h: f64,
    /// `sup_{t ∈ window} ‖ξ*(t) − y₀*‖`.
    pub sup_distance: f64,
    pub fixed_point_residual: f64,
    pub iterations: usize,
    /// `Λ · sup ‖D_φ g_η‖` with `Λ` the discrete Green-kernel integral.
    pub contraction_factor: f64,
    /// `2Mβ⁻¹ · sup ‖D_φ g_η‖`.
    pub continuous_factor: f64,
    pub kernel_norm: f64,
    /// `Λ · sup ‖g_η‖` over the ball; at most `ε`.
    pub self_map_radius: f64,
    pub status: HyperbolicStatus,
    pub linearization: Option<LinearizationReport>,
    #[serde(skip)]
    values: Vec<Vector>,
    #[serde(skip)]
    slopes: Vec<Vector>,
}

impl HyperbolicSolution {
    pub fn len(&self) -> usize {
        self.values.len()
    }
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
    pub fn time(&self, k: usize) -> f64 {
        self.range.0 + k as f64 * self.h
    }
    pub fn node(&self, k: usize) -> &Vector {
        &self.values[k]
    }

    /// `ξ*(t)` by cubic Hermite interpolation with the field as slope,
    /// constant outside the covered range.
    pub fn eval(&self, t: f64) -> Vector {
        let n = self.values.len();
        let x = (t - self.range.0) / self.h;
        if x <= 0.0 {
            return self.values[0].clone();
        }
        if x >= (n - 1) as f64 {
            return self.values[n - 1].clone();
        }
        let k = x.floor() as usize;
        let s = x - k as f64;
        let (y0, y1) = (&self.values[k], &self.values[k + 1]);
        let (d0, d1) = (&self.slopes[k], &self.slopes[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        y0 * (2.0 * s3 - 3.0 * s2 + 1.0)
            + d0 * ((s3 - 2.0 * s2 + s) * self.h)
            + y1 * (-2.0 * s3 + 3.0 * s2)
            + d1 * ((s3 - s2) * self.h)
    }

    /// `(t, ξ*(t))` at the grid nodes inside the window.
    pub fn trajectory(&self) -> Vec<(f64, Vector)> {
        (0..self.len())
            .map(|k| (self.time(k), self.values[k].clone()))
            .filter(|(t, _)| *t >= self.window.0 - 1e-9 && *t <= self.window.1 + 1e-9)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let d = self.values.first().map_or(0, |v| v.len());
        let mut header = vec!["t".to_string()];
        header.extend((0..d).map(|i| format!("xi{i}")));
        w.write_record(&header)?;
        for (t, v) in self.trajectory() {
            let mut row = vec![format!("{t}")];
            row.extend(v.iter().map(|x| format!("{x:e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Trapezoid discretization of `𝓘` on `n` nodes spaced `h` apart.
struct GreenQuadrature {
    e: Mat,
    e_inv: Mat,
    ps: Mat,
    pu: Mat,
    e_ps: Mat,
    e_inv_pu: Mat,
    h: f64,
}

impl GreenQuadrature {
    fn new(a: &Mat, ps: Mat, h: f64) -> Self {
        let d = a.nrows();
        let e = expm(&(a * h));
        let e_inv = expm(&(a * (-h)));
        let pu = Mat::identity(d, d) - &ps;
        let e_ps = &e * &ps;
        let e_inv_pu = &e_inv * &pu;
        GreenQuadrature {
            e,
            e_inv,
            ps,
            pu,
            e_ps,
            e_inv_pu,
            h,
        }
    }

    /// `sup_t Σ_s w_s ‖G(t,s)‖` bounded by summing the kernel norms of both branches.
    fn kernel_norm(&self, terms: usize) -> f64 {
        let mut total = 0.5 * self.h * (op_norm(&self.ps) + op_norm(&self.pu));
        let (mut s, mut u) = (self.ps.clone(), self.pu.clone());
        for _ in 0..terms {
            s = &self.e * s;
            u = &self.e_inv * u;
            total += self.h * (op_norm(&s) + op_norm(&u));
        }
        total
    }

    /// `φ_k = Σ_j w_j G(t_k, t_j) g_j`: a forward sweep for the stable part and
    /// a backward sweep for the unstable part.
    fn apply(&self, g: &[Vector]) -> Vec<Vector> {
        let n = g.len();
        let d = self.e.nrows();
        let hh = 0.5 * self.h;
        let mut stable = vec![Vector::zeros(d); n];
        for k in 0..n - 1 {
            stable[k + 1] = &self.e * &stable[k] + (&self.e_ps * &g[k] + &self.ps * &g[k + 1]) * hh;
        }
        let mut unstable = vec![Vector::zeros(d); n];
        for k in (0..n - 1).rev() {
            unstable[k] = &self.e_inv * &unstable[k + 1] + (&self.pu * &g[k] + &self.e_inv_pu * &g[k + 1]) * hh;
        }
        stable.into_iter().zip(unstable).map(|(s, u)| s - u).collect()
    }
}

/// Sampled `(sup ‖g_η‖, sup ‖D_φ g_η‖)` over the nodes and the ball of radius `eps`.
fn ball_sups(p: &SemilinearProblem, eta: f64, times: &[f64], eps: f64, points: usize) -> Result<(f64, f64)> {
    let cloud = ball_cloud(&Vector::zeros(p.dim()), eps, points);
    let per: Vec<Result<(f64, f64)>> = times
        .par_iter()
        .map(|&t| {
            let (mut sg, mut sd) = (0.0_f64, 0.0_f64);
            for phi in &cloud {
                sg = sg.max(finite_or("g_η", t, p.g(eta, t, phi).norm())?);
                sd = sd.max(finite_or("D g_η", t, op_norm(&p.dg(eta, t, phi)))?);
            }
            Ok((sg, sd))
        })
        .collect();
    per.into_iter()
        .try_fold((0.0_f64, 0.0_f64), |(a, b), r| r.map(|(x, y)| (a.max(x), b.max(y))))
}

fn sup_diff(a: &[Vector], b: &[Vector]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// Bounded solution of the perturbed problem near `y₀*` on `[t_lo, t_hi]`.
pub fn find_hyperbolic_solution(
    p: &SemilinearProblem,
    eta: f64,
    t_lo: f64,
    t_hi: f64,
    opts: &SolveOptions,
) -> Result<HyperbolicSolution> {
    find_hyperbolic_solution_from(p, eta, t_lo, t_hi, opts, None)
}

/// As [`find_hyperbolic_solution`], starting the iteration from
/// `φ₀(t) = initial(t) − y₀*` instead of `0`.
pub fn find_hyperbolic_solution_from(
    p: &SemilinearProblem,
    eta: f64,
    t_lo: f64,
    t_hi: f64,
    opts: &SolveOptions,
    initial: Option<&(dyn Fn(f64) -> Vector + Sync)>,
) -> Result<HyperbolicSolution> {
    let h = opts.h;
    if !(h > 0.0 && opts.tol > 0.0 && opts.tail_tol > 0.0) {
        return Err(Error::Config("step and tolerances must be positive".into()));
    }
    let span = (t_hi - t_lo) / h;
    if !(span >= 1.0) || (span - span.round()).abs() > 1e-9 * span.max(1.0) {
        return Err(Error::Domain(format!(
            "window [{t_lo}, {t_hi}] must be a positive multiple of h = {h}"
        )));
    }
    let (m, beta) = (p.cert.bound, p.cert.exponent);
    let quad = GreenQuadrature::new(&p.a, p.cert.stable_at(0.0)?, h);
    let kernel_terms = ((((m / (beta * h)).max(1.0) / 1e-14).ln() / (beta * h)).ceil() as usize).max(1);
    let kernel_norm = quad.kernel_norm(kernel_terms);

    let d = p.dim();
    let zero = Vector::zeros(d);
    let probe_times = sample_times(t_lo, t_hi, 16);
    let g0 = probe_times
        .iter()
        .map(|&t| p.g(eta, t, &zero).norm())
        .fold(0.0, f64::max);
    let floor = 1e-6 * (1.0 + p.y0_star.norm());
    let mut eps = opts.epsilon.unwrap_or((EPS_GROWTH * kernel_norm * g0).max(floor));

    // the pad depends on ε only through a logarithm; a generous first guess is refined below
    let tail_pad = |eps: f64| ((m * eps.max(1.0) / (beta * opts.tail_tol)).ln().max(1.0)) / beta;
    let pad_nodes = |eps: f64| (opts.pad.unwrap_or(2.0 * tail_pad(eps)) / h).ceil() as usize;

    let (eps, sup_g, sup_dg, times) = {
        let mut tries = 0;
        loop {
            let pn = pad_nodes(eps);
            let n_win = span.round() as usize;
            let start = t_lo - pn as f64 * h;
            let times: Vec<f64> = (0..n_win + 2 * pn + 1).map(|k| start + k as f64 * h).collect();
            let (sg, sd) = ball_sups(p, eta, &times, eps, opts.points)?;
            let factor = kernel_norm * sd;
            if factor > CONTRACTION_LIMIT {
                return Err(Error::ContractionMargin {
                    factor,
                    limit: CONTRACTION_LIMIT,
                    threshold: CONTRACTION_LIMIT / kernel_norm,
                });
            }
            let image = kernel_norm * sg;
            if image <= eps {
                break (eps, sg, sd, times);
            }
            if opts.epsilon.is_some() {
                return Err(Error::EpsilonThreshold(format!(
                    "𝓘 does not map 𝔛_ε into itself: Λ·sup‖g‖ = {image:.6} > ε = {eps}"
                )));
            }
            tries += 1;
            if eps >= p.r_u || image > p.r_u || tries > 400 {
                return Err(Error::EpsilonThreshold(format!(
                    "no self-mapped ball inside U (radius {}): Λ·sup‖g‖ = {image:.6}",
                    p.r_u
                )));
            }
            eps = (EPS_GROWTH * image).min(p.r_u);
        }
    };
    let q = kernel_norm * sup_dg;
    let n = times.len();

    let mut phi: Vec<Vector> = match initial {
        Some(f) => times.par_iter().map(|&t| f(t) - &p.y0_star).collect(),
        None => vec![zero.clone(); n],
    };
    let apply = |phi: &[Vector]| -> Result<Vec<Vector>> {
        let g: Vec<Vector> = times
            .par_iter()
            .zip(phi)
            .map(|(&t, x)| p.g(eta, t, x))
            .collect();
        if !g.iter().all(|v| v.iter().all(|x| x.is_finite())) {
            return Err(Error::NonConvergent("non-finite nonlinearity during iteration".into()));
        }
        Ok(quad.apply(&g))
    };
    let mut iterations = 0;
    let mut residual;
    loop {
        let next = apply(&phi)?;
        residual = sup_diff(&next, &phi);
        phi = next;
        iterations += 1;
        if residual <= opts.tol * (1.0 - q) {
            break;
        }
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergent(format!(
                "{iterations} Picard steps, last update {residual:.3e}, factor {q:.4}"
            )));
        }
    }
    let fixed_point_residual = sup_diff(&apply(&phi)?, &phi);

    let values: Vec<Vector> = phi.iter().map(|x| x + &p.y0_star).collect();
    let slopes: Vec<Vector> = times
        .par_iter()
        .zip(&values)
        .map(|(&t, y)| p.field(eta, t, y))
        .collect();
    let sup_distance = times
        .iter()
        .zip(&phi)
        .filter(|(&t, _)| t >= t_lo - 1e-9 * h && t <= t_hi + 1e-9 * h)
        .map(|(_, x)| x.norm())
        .fold(0.0, f64::max);
    if !(sup_distance < eps) && sup_distance > 0.0 {
        return Err(Error::EpsilonThreshold(format!(
            "sup distance {sup_distance:.6} is not below ε = {eps}"
        )));
    }
    Ok(HyperbolicSolution {
        eta,
        epsilon: eps,
        window: (t_lo, t_hi),
        range: (times[0], times[n - 1]),
        h,
        sup_distance,
        fixed_point_residual,
        iterations,
        contraction_factor: q,
        continuous_factor: 2.0 * m / beta * sup_dg,
        kernel_norm,
        self_map_radius: kernel_norm * sup_g,
        status: HyperbolicStatus::BoundedOnly,
        linearization: None,
        values,
        slopes,
    })
}

/// The linearization `ż = (𝓐 + B_η(t)) z` along `ξ*`.
#[derive(Clone, Debug)]
pub struct Linearization {
    pub cocycle: ContinuousCocycle,
    /// Window sup of `‖B_η(t)‖` at the solution nodes.
    pub sup_b: f64,
}

pub fn linearize_along(p: &SemilinearProblem, sol: &HyperbolicSolution) -> Result<Linearization> {
    let a0 = &p.a - &p.b;
    let mut sup_b = 0.0_f64;
    for (t, y) in sol.trajectory() {
        let b = p.f_eta_jacobian(sol.eta, t, &y) - &a0;
        if !all_finite(&b) {
            return Err(Error::Domain(format!("non-finite Jacobian at t = {t}")));
        }
        sup_b = sup_b.max(op_norm(&b));
    }
    let (pb, sol_c, eta) = (p.clone(), sol.clone(), sol.eta);
    let cocycle = ContinuousCocycle::new(p.dim(), move |t| {
        let y = sol_c.eval(t);
        &pb.b + pb.f_eta_jacobian(eta, t, &y)
    })
    .with_max_step(sol.h);
    Ok(Linearization { cocycle, sup_b })
}

/// Runs the continuous robustness pipeline on the linearization along `sol`
/// and sets its status.
pub fn certify_hyperbolic(
    p: &SemilinearProblem,
    mut sol: HyperbolicSolution,
    opts: &ContinuousOptions,
) -> Result<HyperbolicSolution> {
    let lin = linearize_along(p, &sol)?;
    let base = ContinuousCocycle::autonomous(p.a.clone()).with_max_step(sol.h);
    let (w_lo, w_hi) = (sol.window.0.ceil() as i64, sol.window.1.floor() as i64);
    let mut report = LinearizationReport {
        sup_b: lin.sup_b,
        passed: false,
        alpha_tilde: None,
        m_hat: None,
        delta_eff: None,
        threshold: None,
        note: None,
        certificate: None,
    };
    if w_hi <= w_lo {
        report.note = Some("window shorter than one time unit".into());
    } else {
        match robust_dichotomy_continuous(&base, &p.cert, &lin.cocycle, w_lo, w_hi, opts) {
            Ok(r) => {
                let (lo, hi) = r.discrete.padded_window;
                let covered = lo as f64 >= sol.range.0 - 1e-9 && hi as f64 <= sol.range.1 + 1e-9;
                report.passed = r.passed() && covered;
                report.alpha_tilde = Some(r.discrete.constants.alpha_tilde);
                report.m_hat = Some(r.m_hat);
                report.delta_eff = Some(r.discrete.delta_eff);
                report.threshold = Some(r.discrete.threshold);
                if !covered {
                    report.note = Some(format!(
                        "robustness window [{lo}, {hi}] exceeds the solved range [{:.3}, {:.3}]",
                        sol.range.0, sol.range.1
                    ));
                } else if !r.passed() {
                    report.note = Some(format!("verification failed: {:?}", r.verification.failures()));
                }
                report.certificate = Some(r.certificate);
            }
            Err(e) => {
                if let Error::RobustnessHypothesis { delta, threshold, .. } = &e {
                    report.delta_eff = Some(*delta);
                    report.threshold = Some(*threshold);
                }
                report.note = Some(e.to_string());
            }
        }
    }
    sol.status = if report.passed {
        HyperbolicStatus::Certified
    } else {
        HyperbolicStatus::BoundedOnly
    };
    sol.linearization = Some(report);
    Ok(sol)
}

/// Scalar signal `t ↦ g(t)` driving the regression models.
pub type Signal = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// `ẏ = a·y + η g(t)` with `a ≠ 0`, equilibrium `0`.
pub fn additive_scalar(a: f64, g: Signal) -> Result<SemilinearProblem> {
    let b = Mat::from_element(1, 1, a);
    SemilinearProblem::new(
        b,
        |y| Vector::zeros(y.len()),
        |y| Mat::zeros(y.len(), y.len()),
        move |eta, t, y| Vector::from_element(y.len(), eta * g(t)),
        Vector::zeros(1),
        1.0,
    )
    .map(|p| p.with_eta_jacobian(|_, _, y| Mat::zeros(y.len(), y.len())))
}

/// `ẏ = −y + y³ + η g(t)` near `y₀* = 0`.
pub fn cubic_additive(g: Signal, r_u: f64) -> Result<SemilinearProblem> {
    SemilinearProblem::new(
        Mat::from_element(1, 1, -1.0),
        |y| y.map(|v| v * v * v),
        |y| Mat::from_element(1, 1, 3.0 * y[0] * y[0]),
        move |eta, t, y| y.map(|v| v * v * v + eta * g(t)),
        Vector::zeros(1),
        r_u,
    )
    .map(|p| p.with_eta_jacobian(|_, _, y| Mat::from_element(1, 1, 3.0 * y[0] * y[0])))
}

/// `ẏ = −y + y³ + η g(t) y` near the equilibrium `y₀* ∈ {−1, 0, 1}`.
pub fn cubic_multiplicative(g: Signal, y0_star: f64, r_u: f64) -> Result<SemilinearProblem> {
    let g2 = g.clone();
    SemilinearProblem::new(
        Mat::from_element(1, 1, -1.0),
        |y| y.map(|v| v * v * v),
        |y| Mat::from_element(1, 1, 3.0 * y[0] * y[0]),
        move |eta, t, y| y.map(|v| v * v * v + eta * g(t) * v),
        Vector::from_element(1, y0_star),
        r_u,
    )
    .map(|p| p.with_eta_jacobian(move |eta, t, y| Mat::from_element(1, 1, 3.0 * y[0] * y[0] + eta * g2(t))))
}
