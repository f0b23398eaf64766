//! Explicit constants for perturbed dichotomies and the robustness pipelines.
//!
//! The discrete pipeline writes `ψ = φ + B`, checks the smallness hypothesis
//! on a window, builds the perturbed projections from impulse responses of
//! `Γ_f`, attaches the closed-form constants and verifies the result. The
//! continuous pipeline discretizes to time-one maps, runs the discrete
//! pipeline, and lifts back by transporting projections along `ψ`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::{discretize_on, ContinuousCocycle, DiscreteCocycle};
use crate::dichotomy::{
    autonomous_certificate, verify_dichotomy, CocycleRef, DichotomyCertificate, TimeKind,
    VerificationReport, VerifyWindow,
};
use crate::error::{Error, Result};
use crate::greens::{admissibility_threshold, truncation_length, Admissibility, EDGE_TOL};
use crate::linalg::{op_norm, Mat};

/// Safety factor applied to the strict smallness thresholds.
pub const THRESHOLD_SAFETY: f64 = 0.9;
pub const DISCRETE_SLACK: f64 = 1.1;
pub const CONTINUOUS_SLACK: f64 = 1.2;
/// Allowed shortfall of fitted decay rates against the certified exponents.
pub const RATE_SLACK: f64 = 0.05;
const IMPULSE_TOL: f64 = 1e-12;

/// `(1−e^{−α})/(1+e^{−α})`.
pub fn delta_threshold(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("delta_threshold needs α > 0, got {alpha}")));
    }
    Ok(admissibility_threshold(alpha))
}

/// `(ã, b̃)` of the discrete Gronwall lemma:
/// `ã = −ln(cosh a − √(cosh²a − 1 − 2δ sinh a))`, `b̃ = ã + ln(1 + 2δD sinh a)`.
pub fn gronwall_constants(a: f64, delta: f64, d: f64) -> Result<(f64, f64)> {
    if !(a > 0.0) || !(d > 0.0) || delta < 0.0 {
        return Err(Error::Domain(format!(
            "Gronwall constants need a > 0, D > 0, δ ≥ 0 (got a = {a}, D = {d}, δ = {delta})"
        )));
    }
    let limit = admissibility_threshold(a) / d;
    if delta >= limit {
        return Err(Error::Domain(format!(
            "Gronwall lemma requires δ < D⁻¹(1−e^{{−a}})/(1+e^{{−a}}) = {limit:.6}, got δ = {delta}"
        )));
    }
    if delta == 0.0 {
        return Ok((a, a));
    }
    let (sh, ch) = (a.sinh(), a.cosh());
    let radicand = sh * sh - 2.0 * delta * sh;
    if radicand < 0.0 {
        return Err(Error::Domain(format!(
            "Gronwall radicand cosh²a − 1 − 2δ sinh a = {radicand:.3e} is negative"
        )));
    }
    // cosh a − r = (1 + 2δ sinh a)/(cosh a + r) avoids cancellation for small δ
    let upper = (ch + radicand.sqrt()).ln();
    let a_tilde = upper - (2.0 * delta * sh).ln_1p();
    let b_tilde = a_tilde + (2.0 * delta * d * sh).ln_1p();
    Ok((a_tilde, b_tilde))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustConstants {
    pub k: f64,
    pub alpha: f64,
    pub delta: f64,
    pub rho: f64,
    pub alpha_tilde: f64,
    pub beta_tilde: f64,
    pub d1: f64,
    pub d2: f64,
    pub m: f64,
}

/// Bound `M` and exponent `α̃` of the perturbed dichotomy.
pub fn robust_constants(k: f64, alpha: f64, delta: f64) -> Result<RobustConstants> {
    let threshold = delta_threshold(alpha)?;
    if !(k >= 1.0) {
        return Err(Error::Domain(format!("bound K must be ≥ 1, got {k}")));
    }
    if !(delta >= 0.0) || delta >= threshold {
        return Err(Error::RobustnessHypothesis {
            delta,
            limit: threshold,
            threshold,
        });
    }
    if delta == 0.0 {
        return Ok(RobustConstants {
            k,
            alpha,
            delta,
            rho: 0.0,
            alpha_tilde: alpha,
            beta_tilde: alpha,
            d1: 1.0,
            d2: 1.0,
            m: k,
        });
    }
    let rho = delta / threshold;
    let (alpha_tilde, beta_tilde) = gronwall_constants(alpha, delta, 1.0)?;
    let inv = |rate: f64| -> Result<f64> {
        let q = 1.0 - delta * (-rate).exp() / (-(-(alpha + rate)).exp_m1());
        if q <= 0.0 {
            return Err(Error::Domain(format!(
                "D-constant denominator is {q:.3e} ≤ 0 at rate {rate}"
            )));
        }
        Ok(1.0 / q)
    };
    let d1 = inv(alpha_tilde)?;
    let d2 = inv(beta_tilde)?;
    let m = k * (1.0 + delta / ((1.0 - rho) * (-(-alpha).exp_m1()))) * d1.max(d2);
    Ok(RobustConstants {
        k,
        alpha,
        delta,
        rho,
        alpha_tilde,
        beta_tilde,
        d1,
        d2,
        m,
    })
}

/// Nodes added on each side of a window so the impulse projections see a
/// tail below [`EDGE_TOL`].
fn padding(constants: &RobustConstants) -> Result<usize> {
    Ok(truncation_length(constants.alpha_tilde, constants.m, EDGE_TOL)? + 1)
}

/// Log-linear least-squares decay rate of `norms[j]` sampled at unit spacing.
fn fitted_rate(norms: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = norms
        .iter()
        .enumerate()
        .filter(|(_, &v)| v > 1e-12)
        .map(|(j, &v)| (j as f64, v.ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    Some(-sxy / sxx)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayFit {
    /// Fitted forward decay rate of `ψ(n, m)Π̃^s(m)`, if the stable rank is positive.
    pub forward_rate: Option<f64>,
    /// Fitted backward decay rate on `R(Π̃^u)`, if the unstable rank is positive.
    pub backward_rate: Option<f64>,
    pub forward_target: f64,
    pub backward_target: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct DiscreteRobustness {
    #[serde(skip)]
    pub certificate: DichotomyCertificate,
    pub window: (i64, i64),
    pub padded_window: (i64, i64),
    pub threshold: f64,
    pub delta_eff: f64,
    pub constants: RobustConstants,
    pub verification: VerificationReport,
    pub decay_fit: DecayFit,
}

impl DiscreteRobustness {
    pub fn passed(&self) -> bool {
        self.verification.pass
    }
}

fn decay_fit(
    psi: &DiscreteCocycle,
    cert: &DichotomyCertificate,
    constants: &RobustConstants,
    n_lo: i64,
    n_hi: i64,
) -> Result<DecayFit> {
    let mid = n_lo + (n_hi - n_lo) / 2;
    let ps = cert.stable_at(mid as f64)?;
    let pu = cert.unstable_at(mid as f64)?;
    let mut forward = vec![op_norm(&ps)];
    let mut e = ps.clone();
    for n in mid..n_hi {
        e = cert.stable_at((n + 1) as f64)? * (psi.step(n)? * e);
        forward.push(op_norm(&e));
    }
    let mut backward = vec![op_norm(&pu)];
    let mut e = pu.clone();
    for n in (n_lo..mid).rev() {
        let step = psi.step(n)?;
        let pu_n = cert.unstable_at(n as f64)?;
        let basis = crate::linalg::range_basis(&pu_n, crate::linalg::projection_rank(&pu_n));
        let (r, _, _) = crate::linalg::restricted_inverse(&step, &basis, &cert.unstable_at((n + 1) as f64)?);
        e = &pu_n * (r * e);
        backward.push(op_norm(&e));
    }
    let has_s = crate::linalg::projection_rank(&ps) > 0;
    let has_u = crate::linalg::projection_rank(&pu) > 0;
    let forward_rate = if has_s { fitted_rate(&forward) } else { None };
    let backward_rate = if has_u { fitted_rate(&backward) } else { None };
    let forward_target = constants.alpha_tilde * (1.0 - RATE_SLACK);
    let backward_target = constants.beta_tilde * (1.0 - RATE_SLACK);
    let pass = forward_rate.map_or(true, |r| r >= forward_target)
        && backward_rate.map_or(true, |r| r >= backward_target);
    Ok(DecayFit {
        forward_rate,
        backward_rate,
        forward_target,
        backward_target,
        pass,
    })
}

/// Dichotomy of `ψ` on `[n_lo, n_hi]` from the dichotomy `cert` of `φ`.
pub fn robust_dichotomy_discrete(
    phi: &DiscreteCocycle,
    cert: &DichotomyCertificate,
    psi: &DiscreteCocycle,
    n_lo: i64,
    n_hi: i64,
) -> Result<DiscreteRobustness> {
    if n_hi <= n_lo {
        return Err(Error::Domain(format!("empty window [{n_lo}, {n_hi}]")));
    }
    let threshold = delta_threshold(cert.exponent)?;
    let limit = THRESHOLD_SAFETY * threshold;
    let b = psi.difference(phi);
    // the padding depends on δ_eff, which is measured on the padded window:
    // grow the pad until it is consistent with the measurement
    let mut pad = truncation_length(cert.exponent, cert.bound, EDGE_TOL)? as i64 + 1;
    let (delta_eff, constants, pad) = loop {
        let norms: Result<Vec<f64>> = (n_lo - pad..=n_hi + pad)
            .into_par_iter()
            .map(|n| b.step(n).map(|m| op_norm(&m)))
            .collect();
        let delta_eff = cert.bound * norms?.into_iter().fold(0.0, f64::max);
        if delta_eff > limit {
            return Err(Error::RobustnessHypothesis {
                delta: delta_eff,
                limit,
                threshold,
            });
        }
        let constants = robust_constants(cert.bound, cert.exponent, delta_eff)?;
        let need = padding(&constants)? as i64;
        if need <= pad {
            break (delta_eff, constants, pad);
        }
        pad = need;
    };
    let (w_lo, w_hi) = (n_lo - pad, n_hi + pad);
    let op = Admissibility::new(phi, cert, &b, w_lo, w_hi)?;
    let stable = op.impulse_projections(n_lo, n_hi, IMPULSE_TOL)?;
    let certificate = DichotomyCertificate::sampled(
        TimeKind::Discrete,
        n_lo as f64,
        1.0,
        stable,
        constants.m,
        constants.alpha_tilde,
    )?;
    let verification = verify_dichotomy(
        CocycleRef::Discrete(psi),
        &certificate,
        VerifyWindow::discrete(n_lo, n_hi),
        DISCRETE_SLACK,
    )?;
    let decay_fit = decay_fit(psi, &certificate, &constants, n_lo, n_hi)?;
    Ok(DiscreteRobustness {
        certificate,
        window: (n_lo, n_hi),
        padded_window: (w_lo, w_hi),
        threshold,
        delta_eff,
        constants,
        verification,
        decay_fit,
    })
}

/// Sampling densities for the continuous pipeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ContinuousOptions {
    /// Shifts per unit time when measuring one-step quantities.
    pub shift_density: usize,
    /// Time samples per unit on `[0, 1]`.
    pub time_density: usize,
    /// Node spacing of the lifted projection family and of its verification.
    pub spacing: f64,
    pub slack: f64,
}

impl Default for ContinuousOptions {
    fn default() -> Self {
        ContinuousOptions {
            shift_density: 8,
            time_density: 64,
            spacing: 0.125,
            slack: CONTINUOUS_SLACK,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ContinuousRobustness {
    #[serde(skip)]
    pub certificate: DichotomyCertificate,
    pub window: (f64, f64),
    /// Sampled `sup_{s, 0≤t≤1} ‖φ(t,Θ_s) − ψ(t,Θ_s)‖`.
    pub one_step_distance: f64,
    pub discrete: DiscreteRobustness,
    /// `M · sup ‖ψ(t,Θ_s)‖ e^{α̃ t}`: bound of the lifted certificate.
    pub m_hat: f64,
    /// `M · sup ‖ψ(t,Θ_s)‖ e^{α t}`: the lift with the unperturbed exponent.
    pub k_hat: f64,
    pub verification: VerificationReport,
}

impl ContinuousRobustness {
    pub fn passed(&self) -> bool {
        self.discrete.passed() && self.verification.pass
    }
}

/// Sampled `sup ‖φ(t,Θ_s) − ψ(t,Θ_s)‖` over `s ∈ [s_lo, s_hi]`, `t ∈ [0,1]`.
pub fn one_step_distance(
    phi: &ContinuousCocycle,
    psi: &ContinuousCocycle,
    s_lo: f64,
    s_hi: f64,
    opts: &ContinuousOptions,
) -> Result<f64> {
    let n_shift = ((s_hi - s_lo) * opts.shift_density as f64).round().max(0.0) as usize;
    let ds = if n_shift == 0 { 0.0 } else { (s_hi - s_lo) / n_shift as f64 };
    let dt = 1.0 / opts.time_density as f64;
    let per: Vec<Result<f64>> = (0..=n_shift)
        .into_par_iter()
        .map(|k| {
            let s = s_lo + k as f64 * ds;
            let d = phi.dim();
            let (mut a, mut b) = (Mat::identity(d, d), Mat::identity(d, d));
            let mut best = 0.0_f64;
            for j in 0..opts.time_density {
                let t = s + j as f64 * dt;
                a = phi.propagator(t, dt)? * a;
                b = psi.propagator(t, dt)? * b;
                best = best.max(op_norm(&(&a - &b)));
            }
            Ok(best)
        })
        .collect();
    let mut best = 0.0_f64;
    for r in per {
        best = best.max(r?);
    }
    Ok(best)
}

/// Projections `Π(t) = ψ(t−n, Θ_n) P_n ψ(t−n, Θ_n)^{-1}` on `[n_lo, n_hi]` at `spacing`.
fn transport_projections(
    psi: &ContinuousCocycle,
    cert: &DichotomyCertificate,
    n_lo: i64,
    n_hi: i64,
    spacing: f64,
) -> Result<Vec<Mat>> {
    let per_unit = (1.0 / spacing).round() as usize;
    let blocks: Result<Vec<Vec<Mat>>> = (n_lo..n_hi)
        .into_par_iter()
        .map(|n| {
            let p = cert.stable_at(n as f64)?;
            let d = p.nrows();
            let mut out = vec![p.clone()];
            let mut flow = Mat::identity(d, d);
            for j in 0..per_unit - 1 {
                flow = psi.propagator(n as f64 + j as f64 * spacing, spacing)? * flow;
                let inv = flow.clone().try_inverse().ok_or_else(|| {
                    Error::Isomorphism(format!("flow from {n} is singular"))
                })?;
                out.push(&flow * &p * inv);
            }
            Ok(out)
        })
        .collect();
    let mut all: Vec<Mat> = blocks?.into_iter().flatten().collect();
    all.push(cert.stable_at(n_hi as f64)?);
    Ok(all)
}

/// Dichotomy of the continuous cocycle `ψ` on `[t_lo, t_hi]` (integers) from
/// the dichotomy `cert` of `φ`.
pub fn robust_dichotomy_continuous(
    phi: &ContinuousCocycle,
    cert: &DichotomyCertificate,
    psi: &ContinuousCocycle,
    t_lo: i64,
    t_hi: i64,
    opts: &ContinuousOptions,
) -> Result<ContinuousRobustness> {
    let per_unit = 1.0 / opts.spacing;
    if (per_unit - per_unit.round()).abs() > 1e-9 {
        return Err(Error::Domain(format!("spacing {} must divide 1", opts.spacing)));
    }
    let threshold = delta_threshold(cert.exponent)?;
    let limit = THRESHOLD_SAFETY * threshold;
    // conservative padding from an a-priori bound on δ_eff
    let dist_core = one_step_distance(phi, psi, t_lo as f64, t_hi as f64, opts)?;
    if cert.bound * dist_core > limit {
        return Err(Error::RobustnessHypothesis {
            delta: cert.bound * dist_core,
            limit,
            threshold,
        });
    }
    let est = robust_constants(cert.bound, cert.exponent, (cert.bound * dist_core).min(limit))?;
    let pad = padding(&est)? as i64 + 2;
    let dist = dist_core.max(one_step_distance(
        phi,
        psi,
        (t_lo - pad) as f64,
        (t_hi + pad) as f64,
        opts,
    )?);
    if cert.bound * dist > limit {
        return Err(Error::RobustnessHypothesis {
            delta: cert.bound * dist,
            limit,
            threshold,
        });
    }
    let est = robust_constants(cert.bound, cert.exponent, cert.bound * dist)?;
    let pad = padding(&est)? as i64 + 2;
    let phi_d = discretize_on(phi, t_lo - pad, t_hi + pad)?;
    let psi_d = discretize_on(psi, t_lo - pad, t_hi + pad)?;
    let mut dcert = cert.clone();
    dcert.kind = TimeKind::Discrete;
    let discrete = robust_dichotomy_discrete(&phi_d, &dcert, &psi_d, t_lo, t_hi)?;
    let c = &discrete.constants;
    let sup_tilde = psi.weighted_one_step_bound(t_lo as f64, t_hi as f64, opts.shift_density, c.alpha_tilde)?;
    let sup_base = psi.weighted_one_step_bound(t_lo as f64, t_hi as f64, opts.shift_density, c.alpha)?;
    let m_hat = c.m * sup_tilde;
    let k_hat = c.m * sup_base;
    let stable = transport_projections(psi, &discrete.certificate, t_lo, t_hi, opts.spacing)?;
    let certificate = DichotomyCertificate::sampled(
        TimeKind::Continuous,
        t_lo as f64,
        opts.spacing,
        stable,
        m_hat.max(1.0),
        c.alpha_tilde,
    )?;
    let verification = verify_dichotomy(
        CocycleRef::Continuous(psi),
        &certificate,
        VerifyWindow {
            start: t_lo as f64,
            end: t_hi as f64,
            spacing: opts.spacing,
        },
        opts.slack,
    )?;
    Ok(ContinuousRobustness {
        certificate,
        window: (t_lo as f64, t_hi as f64),
        one_step_distance: dist,
        discrete,
        m_hat,
        k_hat,
        verification,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LinearPerturbationReport {
    /// Sampled `sup_{s, 0≤t≤1} ‖∫_s^{s+t} B(u) du‖`.
    pub eps_measured: f64,
    /// Largest `ε` with `ε L L₁(ε) < δ`.
    pub eps_cutoff: f64,
    /// `sup_{0≤t≤1} ‖e^{𝓐t}‖`.
    pub l: f64,
    /// `L e^{L ε_measured}`.
    pub l1: f64,
    /// `0.9 · threshold(α) / K`.
    pub delta: f64,
    pub bound: f64,
    pub exponent: f64,
    pub satisfied: bool,
}

/// Checks the integral smallness hypothesis for `ẋ = (𝓐 + B(t))x` on
/// `[t_lo, t_hi]`, with `B` sampled at spacing `h`.
pub fn linear_random_perturbation_check(
    a: &Mat,
    b: impl Fn(f64) -> Mat + Sync,
    t_lo: f64,
    t_hi: f64,
    h: f64,
) -> Result<LinearPerturbationReport> {
    let cert = autonomous_certificate(a)?;
    let steps_per_unit = (1.0 / h).round() as usize;
    if steps_per_unit == 0 || ((1.0 / h) - steps_per_unit as f64).abs() > 1e-9 {
        return Err(Error::Domain(format!("spacing {h} must divide 1")));
    }
    let n = ((t_hi - t_lo) / h).round() as usize;
    let samples: Vec<Mat> = (0..=n).into_par_iter().map(|k| b(t_lo + k as f64 * h)).collect();
    let d = a.nrows();
    let mut eps = 0.0_f64;
    for s in 0..n {
        let mut acc = Mat::zeros(d, d);
        for j in 0..steps_per_unit.min(n - s) {
            acc += (&samples[s + j] + &samples[s + j + 1]) * (0.5 * h);
            eps = eps.max(op_norm(&acc));
        }
    }
    let phi = ContinuousCocycle::autonomous(a.clone());
    let l = phi.one_step_bound(0.0, 0.0, 64)?;
    let delta = THRESHOLD_SAFETY * delta_threshold(cert.exponent)? / cert.bound;
    let chain = |e: f64| e * l * l * (l * e).exp();
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while chain(hi) < delta {
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if chain(mid) < delta {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let l1 = l * (l * eps).exp();
    Ok(LinearPerturbationReport {
        eps_measured: eps,
        eps_cutoff: lo,
        l,
        l1,
        delta,
        bound: cert.bound,
        exponent: cert.exponent,
        satisfied: eps * l * l1 < delta,
    })
}
