//! Stratonovich equations `dy = 𝓑y dt + f(y) dt + η̃κ_t y ∘ dW_t` as random
//! ODEs, and the Galerkin damped wave equation.
//!
//! With `E(t) = exp(η̃ κ_t z*(θ_t ω))` and a diagonal noise pattern `η̃`,
//! `v = E⁻¹y` solves
//! `v̇ = E⁻¹𝓑E v + E⁻¹f(Ev) + η̃(κ_t − κ̇_t) z*(θ_t ω) v`.
//! `E⁻¹𝓑E = 𝓑` whenever `η̃` is a multiple of the identity; for the
//! position-only or velocity-only wave patterns the conjugated operator is
//! kept as part of the nonlinearity.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::dichotomy::spectral_projection;
use crate::error::{Error, Result};
use crate::hyperbolic::{
    certify_hyperbolic, find_hyperbolic_solution, Field, FieldJacobian, HyperbolicStatus,
    SemilinearProblem, SolveOptions,
};
use crate::linalg::{Mat, Vector};
use crate::noise::{KappaFn, NoiseSignal, DEFAULT_TAIL_TOL};
use crate::robustness::{linear_random_perturbation_check, ContinuousOptions, CONTINUOUS_SLACK};

/// Which coordinates carry the noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NoiseShape {
    /// `η̃ = η·Id`.
    Full,
    /// First half of the state (wave position).
    Position,
    /// Second half of the state (wave velocity).
    Velocity,
}

impl NoiseShape {
    pub fn mask(&self, dim: usize) -> Result<Vec<f64>> {
        match self {
            NoiseShape::Full => Ok(vec![1.0; dim]),
            NoiseShape::Position | NoiseShape::Velocity if dim % 2 != 0 => Err(Error::Config(
                format!("noise shape {self:?} needs an even state dimension, got {dim}"),
            )),
            NoiseShape::Position => Ok((0..dim).map(|i| if i < dim / 2 { 1.0 } else { 0.0 }).collect()),
            NoiseShape::Velocity => Ok((0..dim).map(|i| if i < dim / 2 { 0.0 } else { 1.0 }).collect()),
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "full" | "both" => Ok(NoiseShape::Full),
            "position" => Ok(NoiseShape::Position),
            "velocity" => Ok(NoiseShape::Velocity),
            _ => Err(Error::Config(format!(
                "unknown noise shape '{s}' (expected full, position or velocity)"
            ))),
        }
    }
}

/// `dy = 𝓑y dt + f(y) dt + η̃ κ_t y ∘ dW_t`.
#[derive(Clone)]
pub struct StratonovichSpec {
    pub b: Mat,
    pub f: Field,
    pub f_jac: FieldJacobian,
    pub eta: f64,
    pub kappa: KappaFn,
    pub shape: NoiseShape,
}

impl std::fmt::Debug for StratonovichSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StratonovichSpec")
            .field("dim", &self.b.nrows())
            .field("eta", &self.eta)
            .field("kappa", &self.kappa)
            .field("shape", &self.shape)
            .finish()
    }
}

impl StratonovichSpec {
    pub fn new(b: Mat, f: Field, f_jac: FieldJacobian, eta: f64, kappa: KappaFn, shape: NoiseShape) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::Config(format!("η must lie in [0, 1], got {eta}")));
        }
        if b.nrows() != b.ncols() {
            return Err(Error::Config("𝓑 must be square".into()));
        }
        shape.mask(b.nrows())?;
        Ok(StratonovichSpec {
            b,
            f,
            f_jac,
            eta,
            kappa,
            shape,
        })
    }

    pub fn dim(&self) -> usize {
        self.b.nrows()
    }
}

/// The random ODE obtained from a [`StratonovichSpec`] along one noise path.
#[derive(Clone)]
pub struct RandomOdeSpec {
    spec: StratonovichSpec,
    mask: Vec<f64>,
    signal: NoiseSignal,
}

impl std::fmt::Debug for RandomOdeSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RandomOdeSpec").field("spec", &self.spec).finish()
    }
}

/// Diagonal of `exp(η̃ κ_t z*)` for a given `η`.
fn exponent_diag(mask: &[f64], eta: f64, kz: f64) -> Vector {
    Vector::from_iterator(mask.len(), mask.iter().map(|m| (eta * m * kz).exp()))
}

/// Closed-form `f_η` and its Jacobian for arbitrary `η`, so the same random
/// ODE can be scanned over an `η` grid.
fn transformed_field(b: &Mat, f: &Field, mask: &[f64], signal: &NoiseSignal, eta: f64, t: f64, v: &Vector) -> Vector {
    let kz = signal.kz(t);
    let e = exponent_diag(mask, eta, kz);
    let ev = v.component_mul(&e);
    let mut out = f(&ev).component_div(&e);
    if mask.iter().any(|&m| m != mask[0]) {
        out += conjugated(b, &e) * v - b * v;
    }
    let c = eta * signal.drift(t);
    for (i, m) in mask.iter().enumerate() {
        out[i] += c * m * v[i];
    }
    out
}

/// `E⁻¹ 𝓑 E` for diagonal `E`.
fn conjugated(b: &Mat, e: &Vector) -> Mat {
    Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)] * e[j] / e[i])
}

fn transformed_jacobian(
    b: &Mat,
    f_jac: &FieldJacobian,
    mask: &[f64],
    signal: &NoiseSignal,
    eta: f64,
    t: f64,
    v: &Vector,
) -> Mat {
    let kz = signal.kz(t);
    let e = exponent_diag(mask, eta, kz);
    let ev = v.component_mul(&e);
    let jf = f_jac(&ev);
    let mut out = Mat::from_fn(jf.nrows(), jf.ncols(), |i, j| jf[(i, j)] * e[j] / e[i]);
    if mask.iter().any(|&m| m != mask[0]) {
        out += conjugated(b, &e) - b;
    }
    let c = eta * signal.drift(t);
    for (i, m) in mask.iter().enumerate() {
        out[(i, i)] += c * m;
    }
    out
}

/// The change of variables `v = exp(−η̃ κ_t z*(θ_t ω)) y` along `signal`.
pub fn transform(spec: &StratonovichSpec, signal: &NoiseSignal) -> Result<RandomOdeSpec> {
    Ok(RandomOdeSpec {
        mask: spec.shape.mask(spec.dim())?,
        spec: spec.clone(),
        signal: signal.clone(),
    })
}

impl RandomOdeSpec {
    pub fn spec(&self) -> &StratonovichSpec {
        &self.spec
    }
    pub fn signal(&self) -> &NoiseSignal {
        &self.signal
    }

    /// Diagonal of `E(t) = exp(η̃ κ_t z*(θ_t ω))`.
    pub fn exponent(&self, t: f64) -> Vector {
        exponent_diag(&self.mask, self.spec.eta, self.signal.kz(t))
    }

    /// `f_η(t, v) = E⁻¹f(Ev) + (E⁻¹𝓑E − 𝓑)v`.
    pub fn f_eta(&self, t: f64, v: &Vector) -> Vector {
        let e = self.exponent(t);
        let mut out = (self.spec.f)(&v.component_mul(&e)).component_div(&e);
        if self.mask.iter().any(|&m| m != self.mask[0]) {
            out += conjugated(&self.spec.b, &e) * v - &self.spec.b * v;
        }
        out
    }

    /// `B_η(t) = η̃ (κ_t − κ̇_t) z*(θ_t ω)`.
    pub fn b_eta(&self, t: f64) -> Mat {
        let c = self.spec.eta * self.signal.drift(t);
        Mat::from_diagonal(&Vector::from_iterator(self.mask.len(), self.mask.iter().map(|m| c * m)))
    }

    /// `𝓑v + f_η(t, v) + B_η(t)v`.
    pub fn field(&self, t: f64, v: &Vector) -> Vector {
        &self.spec.b * v + self.f_eta(t, v) + self.b_eta(t) * v
    }

    /// The random ODE as a semilinear problem around `y₀*`, with `η` free.
    pub fn problem(&self, y0_star: Vector, r_u: f64) -> Result<SemilinearProblem> {
        let (b, f, mask, signal) = (self.spec.b.clone(), self.spec.f.clone(), self.mask.clone(), self.signal.clone());
        let (bj, fj, maskj, signalj) = (b.clone(), self.spec.f_jac.clone(), mask.clone(), signal.clone());
        let (f0, f0_jac) = (self.spec.f.clone(), self.spec.f_jac.clone());
        Ok(SemilinearProblem::new(
            b.clone(),
            move |y| f0(y),
            move |y| f0_jac(y),
            move |eta, t, v| transformed_field(&b, &f, &mask, &signal, eta, t, v),
            y0_star,
            r_u,
        )?
        .with_eta_jacobian(move |eta, t, v| transformed_jacobian(&bj, &fj, &maskj, &signalj, eta, t, v)))
    }
}

/// `y(t) = E(t) v(t)` pointwise.
pub fn inverse_transform(v_traj: &[(f64, Vector)], ode: &RandomOdeSpec) -> Vec<(f64, Vector)> {
    v_traj
        .iter()
        .map(|(t, v)| (*t, v.component_mul(&ode.exponent(*t))))
        .collect()
}

/// `v(t) = E(t)⁻¹ y(t)` pointwise.
pub fn forward_transform(y_traj: &[(f64, Vector)], ode: &RandomOdeSpec) -> Vec<(f64, Vector)> {
    y_traj
        .iter()
        .map(|(t, y)| (*t, y.component_div(&ode.exponent(*t))))
        .collect()
}

/// Scalar nonlinearity `f` of the wave equation with its derivative.
#[derive(Clone)]
pub struct ScalarNonlinearity {
    pub f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub df: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub label: String,
}

impl std::fmt::Debug for ScalarNonlinearity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarNonlinearity({})", self.label)
    }
}

impl ScalarNonlinearity {
    /// `f(u) = c·u − u³`.
    pub fn cubic(c: f64) -> Self {
        ScalarNonlinearity {
            f: Arc::new(move |u| c * u - u * u * u),
            df: Arc::new(move |u| c - 3.0 * u * u),
            label: format!("{c}u - u^3"),
        }
    }

    pub fn zero() -> Self {
        ScalarNonlinearity {
            f: Arc::new(|_| 0.0),
            df: Arc::new(|_| 0.0),
            label: "0".into(),
        }
    }
}

/// Coordinates of the Galerkin state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum WaveCoordinates {
    /// `(a_k, ȧ_k)`: sine coefficients and their time derivatives.
    Modal,
    /// `(√λ_k a_k, ȧ_k)`, whose Euclidean norm is the `H¹₀ × L²` norm.
    Energy,
}

/// `u_tt + β u_t − u_xx = f(u)` on `(0, 1)` with Dirichlet conditions,
/// truncated to the first `N` sine modes.
///
/// The nonlinearity is evaluated at the `N` interior Chebyshev–Gauss–Lobatto
/// points (the two boundary nodes carry `u = 0`) and mapped back to mode
/// coefficients by inverting the collocation matrix. This is exact for
/// linear `f`; for the cubic the aliased high modes are dropped.
#[derive(Clone)]
pub struct WaveSystem {
    pub n_modes: usize,
    pub damping: f64,
    pub lambdas: Vec<f64>,
    pub coordinates: WaveCoordinates,
    pub nonlinearity: ScalarNonlinearity,
    pub nodes: Vec<f64>,
    b: Mat,
    collocation: Mat,
    collocation_inv: Mat,
    scale: Vector,
}

impl std::fmt::Debug for WaveSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WaveSystem")
            .field("n_modes", &self.n_modes)
            .field("damping", &self.damping)
            .field("coordinates", &self.coordinates)
            .field("nonlinearity", &self.nonlinearity)
            .finish()
    }
}

pub fn build_wave_system(
    n_modes: usize,
    damping: f64,
    nonlinearity: ScalarNonlinearity,
    coordinates: WaveCoordinates,
) -> Result<WaveSystem> {
    if n_modes == 0 {
        return Err(Error::Config("the wave system needs at least one mode".into()));
    }
    if !(damping > 0.0) {
        return Err(Error::Config(format!("damping must be positive, got {damping}")));
    }
    let n = n_modes;
    let pi = std::f64::consts::PI;
    let lambdas: Vec<f64> = (1..=n).map(|k| (k as f64 * pi).powi(2)).collect();
    let nodes: Vec<f64> = (1..=n)
        .map(|j| 0.5 * (1.0 - (j as f64 * pi / (n + 1) as f64).cos()))
        .collect();
    let collocation = Mat::from_fn(n, n, |j, k| 2f64.sqrt() * ((k + 1) as f64 * pi * nodes[j]).sin());
    let collocation_inv = collocation
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Domain("singular collocation matrix".into()))?;
    let scale = Vector::from_iterator(
        2 * n,
        (0..2 * n).map(|i| match coordinates {
            WaveCoordinates::Energy if i < n => lambdas[i].sqrt(),
            _ => 1.0,
        }),
    );
    let mut b = Mat::zeros(2 * n, 2 * n);
    for k in 0..n {
        match coordinates {
            WaveCoordinates::Modal => {
                b[(k, n + k)] = 1.0;
                b[(n + k, k)] = -lambdas[k];
            }
            WaveCoordinates::Energy => {
                let s = lambdas[k].sqrt();
                b[(k, n + k)] = s;
                b[(n + k, k)] = -s;
            }
        }
        b[(n + k, n + k)] = -damping;
    }
    let sys = WaveSystem {
        n_modes,
        damping,
        lambdas,
        coordinates,
        nonlinearity,
        nodes,
        b,
        collocation,
        collocation_inv,
        scale,
    };
    let a = &sys.b + sys.jacobian(&Vector::zeros(2 * n));
    spectral_projection(&a)?;
    Ok(sys)
}

impl WaveSystem {
    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    /// Mode coefficients `a_k` of a state.
    fn modes(&self, y: &Vector) -> Vector {
        Vector::from_iterator(self.n_modes, (0..self.n_modes).map(|k| y[k] / self.scale[k]))
    }

    /// `F(y) = (0, P f(u))`.
    pub fn nonlinearity(&self, y: &Vector) -> Vector {
        let n = self.n_modes;
        let u = &self.collocation * self.modes(y);
        let fu = u.map(|x| (self.nonlinearity.f)(x));
        let coef = &self.collocation_inv * fu;
        let mut out = Vector::zeros(2 * n);
        out.rows_mut(n, n).copy_from(&coef);
        out
    }

    pub fn jacobian(&self, y: &Vector) -> Mat {
        let n = self.n_modes;
        let u = &self.collocation * self.modes(y);
        let d = Mat::from_diagonal(&u.map(|x| (self.nonlinearity.df)(x)));
        let block = &self.collocation_inv * d * &self.collocation;
        let mut out = Mat::zeros(2 * n, 2 * n);
        for i in 0..n {
            for k in 0..n {
                out[(n + i, k)] = block[(i, k)] / self.scale[k];
            }
        }
        out
    }

    pub fn field_parts(&self) -> (Field, FieldJacobian) {
        let (s1, s2) = (self.clone(), self.clone());
        (
            Arc::new(move |y: &Vector| s1.nonlinearity(y)),
            Arc::new(move |y: &Vector| s2.jacobian(y)),
        )
    }

    /// `u(x)` at the given points.
    pub fn displacement(&self, y: &Vector, xs: &[f64]) -> Vec<f64> {
        let a = self.modes(y);
        let pi = std::f64::consts::PI;
        xs.iter()
            .map(|&x| (0..self.n_modes).map(|k| a[k] * 2f64.sqrt() * ((k + 1) as f64 * pi * x).sin()).sum())
            .collect()
    }

    pub fn stratonovich(&self, eta: f64, kappa: KappaFn, shape: NoiseShape) -> Result<StratonovichSpec> {
        let (f, j) = self.field_parts();
        StratonovichSpec::new(self.b.clone(), f, j, eta, kappa, shape)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveDemoConfig {
    pub n_modes: usize,
    pub damping: f64,
    pub f_linear: f64,
    pub shape: NoiseShape,
    pub coordinates: WaveCoordinates,
    pub eta_grid: Vec<f64>,
    pub seed: u64,
    pub window: (f64, f64),
    pub h: f64,
    pub radius: f64,
}

impl Default for WaveDemoConfig {
    fn default() -> Self {
        WaveDemoConfig {
            n_modes: 4,
            damping: 1.0,
            f_linear: 1.0,
            shape: NoiseShape::Full,
            coordinates: WaveCoordinates::Energy,
            eta_grid: vec![0.2, 0.1, 0.05, 0.025, 0.0],
            seed: 0,
            window: (-5.0, 5.0),
            h: 1.0 / 64.0,
            radius: 0.5,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveRow {
    pub eta: f64,
    pub sup_dist_v: Option<f64>,
    pub sup_dist_y: Option<f64>,
    pub status: HyperbolicStatus,
    pub alpha_tilde: Option<f64>,
    pub m_bound: Option<f64>,
    pub seed: u64,
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct WaveReport {
    pub n_modes: usize,
    pub damping: f64,
    pub seed: u64,
    /// `(M, β)` of the autonomous linearization.
    pub autonomous: (f64, f64),
    /// `η` below which the linear perturbation check holds for this path.
    pub eta_cutoff: f64,
    /// Window sup of `|(κ − κ̇) z*|`.
    pub m2: f64,
    pub rows: Vec<WaveRow>,
}

impl WaveReport {
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["eta", "sup_dist_v", "sup_dist_y", "certified", "alpha_tilde", "M_bound", "seed"])?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| format!("{v:e}"));
        for r in &self.rows {
            w.write_record([
                format!("{}", r.eta),
                opt(r.sup_dist_v),
                opt(r.sup_dist_y),
                format!("{}", r.status == HyperbolicStatus::Certified),
                opt(r.alpha_tilde),
                opt(r.m_bound),
                format!("{}", r.seed),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Coarser one-step sampling than the default; the wave generator is smooth in time.
const WAVE_SAMPLING: ContinuousOptions = ContinuousOptions {
    shift_density: 4,
    time_density: 32,
    spacing: 0.125,
    slack: CONTINUOUS_SLACK,
};

fn wave_row(
    ode: &RandomOdeSpec,
    problem: &SemilinearProblem,
    eta: f64,
    cfg: &WaveDemoConfig,
) -> WaveRow {
    let mut row = WaveRow {
        eta,
        sup_dist_v: None,
        sup_dist_y: None,
        status: HyperbolicStatus::Failed,
        alpha_tilde: None,
        m_bound: None,
        seed: cfg.seed,
        note: None,
    };
    let opts = SolveOptions {
        h: cfg.h,
        ..SolveOptions::default()
    };
    let sol = match find_hyperbolic_solution(problem, eta, cfg.window.0, cfg.window.1, &opts)
        .and_then(|s| certify_hyperbolic(problem, s, &WAVE_SAMPLING))
    {
        Ok(s) => s,
        Err(e) => {
            row.note = Some(e.to_string());
            return row;
        }
    };
    let mut at_eta = ode.clone();
    at_eta.spec.eta = eta;
    let y = inverse_transform(&sol.trajectory(), &at_eta);
    let y0 = problem.y0_star();
    row.sup_dist_v = Some(sol.sup_distance);
    row.sup_dist_y = Some(y.iter().map(|(_, v)| (v - y0).norm()).fold(0.0, f64::max));
    row.status = sol.status;
    if let Some(lin) = &sol.linearization {
        row.alpha_tilde = lin.alpha_tilde;
        row.m_bound = lin.m_hat;
        row.note = lin.note.clone();
    }
    row
}

/// Transform, solve, certify and transform back for every `η` of the grid.
pub fn run_wave_demo(cfg: &WaveDemoConfig) -> Result<WaveReport> {
    let sys = build_wave_system(
        cfg.n_modes,
        cfg.damping,
        ScalarNonlinearity::cubic(cfg.f_linear),
        cfg.coordinates,
    )?;
    let kappa = KappaFn::Rational;
    // the solver pads the window; cover it generously
    let reach = 160.0;
    let signal = NoiseSignal::sample(
        cfg.seed,
        kappa.clone(),
        cfg.window.0 - reach,
        cfg.window.1 + reach,
        cfg.h,
        DEFAULT_TAIL_TOL,
    )?;
    let eta_max = cfg.eta_grid.iter().cloned().fold(0.0, f64::max);
    let spec = sys.stratonovich(eta_max.min(1.0), kappa, cfg.shape)?;
    let ode = transform(&spec, &signal)?;
    let problem = ode.problem(Vector::zeros(sys.dim()), cfg.radius)?;
    let cert = problem.certificate();
    let mask = cfg.shape.mask(sys.dim())?;
    let mask_mat = Mat::from_diagonal(&Vector::from_vec(mask));
    let (_, m2) = signal.window_bounds(cfg.window.0, cfg.window.1);
    let unit = linear_random_perturbation_check(
        problem.linearization(),
        |t| &mask_mat * signal.drift(t),
        cfg.window.0,
        cfg.window.1,
        cfg.h,
    )?;
    let eta_cutoff = if unit.eps_measured > 0.0 {
        unit.eps_cutoff / unit.eps_measured
    } else {
        f64::INFINITY
    };
    let rows: Vec<WaveRow> = cfg
        .eta_grid
        .par_iter()
        .map(|&eta| wave_row(&ode, &problem, eta, cfg))
        .collect();
    Ok(WaveReport {
        n_modes: cfg.n_modes,
        damping: cfg.damping,
        seed: cfg.seed,
        autonomous: (cert.bound, cert.exponent),
        eta_cutoff,
        m2,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::autonomous_certificate;
    use num_complex::Complex64;

    #[test]
    fn single_mode_linearization_matches_characteristic_polynomial() {
        let sys = build_wave_system(1, 1.0, ScalarNonlinearity::cubic(1.0), WaveCoordinates::Modal).unwrap();
        let a = sys.b() + sys.jacobian(&Vector::zeros(2));
        let pi2 = std::f64::consts::PI.powi(2);
        let expect = Mat::from_row_slice(2, 2, &[0.0, 1.0, 1.0 - pi2, -1.0]);
        assert!((a - &expect).norm() < 1e-12);
        // μ² + μ + (π² − 1) = 0
        let split = spectral_projection(&expect).unwrap();
        let im = (pi2 - 1.25).sqrt();
        for &ev in &split.eigenvalues {
            assert!((ev - Complex64::new(-0.5, im * ev.im.signum())).norm() < 1e-10);
        }
        assert_eq!(split.unstable_rank(), 0);
    }

    #[test]
    fn eigenvalue_ratio_and_resonance() {
        let sys = build_wave_system(3, 1.0, ScalarNonlinearity::zero(), WaveCoordinates::Energy).unwrap();
        assert_eq!(sys.lambdas[1] / sys.lambdas[0], 4.0);
        let pi2 = std::f64::consts::PI.powi(2);
        let r = build_wave_system(2, 1.0, ScalarNonlinearity::cubic(pi2), WaveCoordinates::Modal);
        assert!(matches!(r, Err(Error::NonHyperbolic { .. })), "{r:?}");
    }

    #[test]
    fn linear_damped_wave_is_hyperbolic_up_to_eight_modes() {
        for n in 1..=8 {
            let sys = build_wave_system(n, 1.0, ScalarNonlinearity::zero(), WaveCoordinates::Energy).unwrap();
            let c = autonomous_certificate(sys.b()).unwrap();
            assert!(c.exponent > 0.0);
        }
    }

    #[test]
    fn collocation_is_exact_for_linear_nonlinearity() {
        let sys = build_wave_system(5, 1.0, ScalarNonlinearity::cubic(2.0), WaveCoordinates::Modal).unwrap();
        let lin = build_wave_system(
            5,
            1.0,
            ScalarNonlinearity {
                f: Arc::new(|u| 2.0 * u),
                df: Arc::new(|_| 2.0),
                label: "2u".into(),
            },
            WaveCoordinates::Modal,
        )
        .unwrap();
        let y = Vector::from_iterator(10, (0..10).map(|i| 0.1 * (i as f64 + 1.0)));
        let f = lin.nonlinearity(&y);
        for k in 0..5 {
            assert!((f[5 + k] - 2.0 * y[k]).abs() < 1e-12);
            assert_eq!(f[k], 0.0);
        }
        // cubic Jacobian against central differences
        let j = sys.jacobian(&y);
        for k in 0..10 {
            let mut e = Vector::zeros(10);
            e[k] = 1e-6;
            let fd = (sys.nonlinearity(&(&y + &e)) - sys.nonlinearity(&(&y - &e))) / 2e-6;
            assert!((j.column(k) - fd).norm() < 1e-7);
        }
    }

    #[test]
    fn position_noise_exponential_is_diagonal_block() {
        let sys = build_wave_system(1, 1.0, ScalarNonlinearity::zero(), WaveCoordinates::Modal).unwrap();
        let spec = sys.stratonovich(0.3, KappaFn::Constant(1.0), NoiseShape::Position).unwrap();
        let signal = NoiseSignal::sample(9, KappaFn::Constant(1.0), -2.0, 2.0, 1.0 / 64.0, DEFAULT_TAIL_TOL).unwrap();
        let ode = transform(&spec, &signal).unwrap();
        let t = 0.5;
        let e = ode.exponent(t);
        assert!((e[0] - (0.3 * signal.z(t)).exp()).abs() < 1e-15);
        assert_eq!(e[1], 1.0);
        let traj = vec![(t, Vector::from_vec(vec![0.7, -0.2]))];
        let back = forward_transform(&inverse_transform(&traj, &ode), &ode);
        assert!((&back[0].1 - &traj[0].1).norm() < 1e-15);
    }
}
