use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, InjectedPath, ModelChoice};
use crate::cocycle::DiscreteCocycle;
use crate::dichotomy::{
    discrete_constant_certificate, projection_bound, projection_distance,
    DichotomyCertificate, TimeKind,
};
use crate::error::{Error, Result};
use crate::hyperbolic::{
    additive_scalar, certify_hyperbolic, cubic_additive, find_hyperbolic_solution, HyperbolicStatus,
    SemilinearProblem, Signal, SolveOptions,
};
use crate::linalg::Mat;
use crate::noise::{
    ou_identity_residual, ou_value, sample_wiener_path, stationary_moments, derive_seed, NoiseSignal,
    SamplePath, TimeGrid,
};
use crate::robustness::{robust_dichotomy_discrete, ContinuousOptions, RobustConstants};
use crate::sde_bridge::{run_wave_demo, WaveDemoConfig};

/// Files written by a command and whether every scientific check held.
#[derive(Clone, Debug)]
pub struct Outcome {
    pub passed: bool,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let path = dir.join(name);
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or(String::new(), |v| format!("{v:e}"))
}

/// Lead before the earliest evaluation time so the OU tail is negligible.
const OU_LEAD: f64 = 40.0;
const SUBLINEARITY_TIMES: [f64; 8] = [-64.0, -32.0, -16.0, -8.0, 8.0, 16.0, 32.0, 64.0];
const SUBLINEARITY_LIMIT: f64 = 0.1;
/// Noise is sampled this far beyond the report window on both sides.
const SIGNAL_REACH: f64 = 160.0;

fn injected(kind: InjectedPath, grid: &TimeGrid, seed: u64) -> SamplePath {
    match kind {
        InjectedPath::Wiener => sample_wiener_path(grid, seed),
        InjectedPath::Zero => SamplePath::zero(grid),
        InjectedPath::Linear => SamplePath::linear(grid),
        InjectedPath::Sine => SamplePath::from_fn(grid, "sin", f64::sin),
    }
}

#[derive(Serialize)]
struct Diagnostic {
    name: String,
    value: f64,
    lower: Option<f64>,
    upper: Option<f64>,
}

impl Diagnostic {
    fn pass(&self) -> bool {
        self.lower.map_or(true, |l| self.value >= l) && self.upper.map_or(true, |u| self.value <= u)
    }
}

pub fn ou_check(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let mut diags = Vec::new();
    let (mean, var) = if cfg.injected_path == InjectedPath::Wiener {
        stationary_moments(cfg.paths, cfg.seed, cfg.h, OU_LEAD, cfg.tail_tol)?
    } else {
        let grid = TimeGrid::new(cfg.t_min - OU_LEAD, cfg.t_max, cfg.h)?;
        let path = injected(cfg.injected_path, &grid, cfg.seed);
        let window = TimeGrid::new(cfg.t_min, cfg.t_max, cfg.h)?;
        let z: Result<Vec<f64>> = window.times().map(|t| ou_value(&path, t, cfg.tail_tol)).collect();
        let z = z?;
        let n = z.len() as f64;
        let m = z.iter().sum::<f64>() / n;
        (m, z.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0))
    };
    let band = |c: f64| (Some(c - cfg.variance_tol), Some(c + cfg.variance_tol));
    let (lo, hi) = if cfg.injected_path == InjectedPath::Wiener {
        band(0.5)
    } else {
        (None, None)
    };
    diags.push(Diagnostic { name: "mean".into(), value: mean, lower: None, upper: None });
    diags.push(Diagnostic { name: "variance".into(), value: var, lower: lo, upper: hi });

    let reach = SUBLINEARITY_TIMES.iter().fold(0.0_f64, |a, t| a.max(t.abs()));
    let grid = TimeGrid::new(-reach - OU_LEAD, reach, cfg.h)?;
    let path = injected(cfg.injected_path, &grid, derive_seed(cfg.seed, u64::MAX));
    for &t in &SUBLINEARITY_TIMES {
        let ratio = ou_value(&path, t, cfg.tail_tol)?.abs() / t.abs();
        let upper = (t.abs() == reach).then_some(SUBLINEARITY_LIMIT);
        diags.push(Diagnostic {
            name: format!("sublinearity_t{t}"),
            value: ratio,
            lower: None,
            upper,
        });
    }

    // the identity is checked on a smooth path unless a specific path was injected
    let kind = match cfg.injected_path {
        InjectedPath::Wiener => InjectedPath::Sine,
        k => k,
    };
    let grid = TimeGrid::new(cfg.t_min - OU_LEAD, cfg.t_max, cfg.h)?;
    let window = TimeGrid::new(cfg.t_min, cfg.t_max, cfg.h)?;
    let residual = ou_identity_residual(&injected(kind, &grid, cfg.seed), &window, cfg.tail_tol)?;
    diags.push(Diagnostic {
        name: "identity_residual".into(),
        value: residual,
        lower: None,
        upper: Some(cfg.h),
    });

    let path = out.join("ou_check.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["diagnostic", "value", "lower", "upper", "pass"])?;
    for d in &diags {
        w.write_record([
            d.name.clone(),
            format!("{:e}", d.value + 0.0),
            fmt_opt(d.lower),
            fmt_opt(d.upper),
            d.pass().to_string(),
        ])?;
    }
    w.flush()?;
    let failed: Vec<&str> = diags.iter().filter(|d| !d.pass()).map(|d| d.name.as_str()).collect();
    Ok(Outcome {
        passed: failed.is_empty(),
        files: vec![path],
        summary: if failed.is_empty() {
            format!("ou-check: variance {var:.4}, identity residual {residual:.2e}")
        } else {
            format!("ou-check: failed {}", failed.join(", "))
        },
    })
}

#[derive(Serialize)]
struct RobustnessInstance {
    name: String,
    window: (i64, i64),
    base_bound: f64,
    base_exponent: f64,
    threshold: Option<f64>,
    delta_eff: Option<f64>,
    constants: Option<RobustConstants>,
    verified: bool,
    decay_fit: Option<bool>,
    exponent_limit: Option<f64>,
    projection_distance: Option<f64>,
    projection_bound: Option<f64>,
    passed: bool,
    error: Option<String>,
}

#[derive(Serialize)]
struct RobustnessReport {
    command: &'static str,
    seed: u64,
    passed: bool,
    instances: Vec<RobustnessInstance>,
}

/// `|a| ≠ 1`: `K = 1`, `α = |ln |a||`, `Π^s = 1` when `|a| < 1`.
fn scalar_certificate(a: f64) -> Result<DichotomyCertificate> {
    if a == 0.0 || a.abs() == 1.0 || !a.is_finite() {
        return Err(Error::Config(format!(
            "field `scalar_base`: need 0 < |a| ≠ 1, got {a}"
        )));
    }
    let p = if a.abs() < 1.0 { 1.0 } else { 0.0 };
    DichotomyCertificate::constant(TimeKind::Discrete, Mat::from_element(1, 1, p), 1.0, a.abs().ln().abs())
}

fn robustness_instance(
    name: &str,
    base: &Mat,
    cert: &DichotomyCertificate,
    perturbed: &Mat,
    window: (i64, i64),
) -> RobustnessInstance {
    let mut inst = RobustnessInstance {
        name: name.into(),
        window,
        base_bound: cert.bound,
        base_exponent: cert.exponent,
        threshold: None,
        delta_eff: None,
        constants: None,
        verified: false,
        decay_fit: None,
        exponent_limit: None,
        projection_distance: None,
        projection_bound: None,
        passed: false,
        error: None,
    };
    let phi = DiscreteCocycle::constant(base.clone());
    let psi = DiscreteCocycle::constant(perturbed.clone());
    match robust_dichotomy_discrete(&phi, cert, &psi, window.0, window.1) {
        Ok(r) => {
            inst.threshold = Some(r.threshold);
            inst.delta_eff = Some(r.delta_eff);
            inst.verified = r.verification.pass;
            inst.decay_fit = Some(r.decay_fit.pass);
            inst.passed = r.verification.pass;
            let nodes = (window.0..=window.1).map(|n| n as f64);
            match projection_distance(cert, &r.certificate, nodes) {
                Ok(d) => inst.projection_distance = Some(d),
                Err(e) => inst.error = Some(e.to_string()),
            }
            inst.constants = Some(r.constants);
        }
        Err(e) => {
            if let Error::RobustnessHypothesis { delta, threshold, .. } = &e {
                inst.delta_eff = Some(*delta);
                inst.threshold = Some(*threshold);
            }
            inst.error = Some(e.to_string());
        }
    }
    inst
}

pub fn robustness(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let window = (cfg.t_min.floor() as i64, cfg.t_max.ceil() as i64);
    let mut instances = Vec::new();

    let a = cfg.scalar_base;
    let b = cfg.scalar_perturbed;
    let cert = scalar_certificate(a)?;
    let mut scalar = robustness_instance(
        "scalar",
        &Mat::from_element(1, 1, a),
        &cert,
        &Mat::from_element(1, 1, b),
        window,
    );
    // the perturbed scalar's own exponent caps any valid α̃
    if b != 0.0 && b.abs() != 1.0 {
        let limit = b.abs().ln().abs();
        scalar.exponent_limit = Some(limit);
        if let Some(c) = &scalar.constants {
            scalar.passed &= c.alpha_tilde <= limit + 1e-9;
        }
    }
    instances.push(scalar);

    let saddle = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![0.5, 2.0]));
    let eps = cfg.saddle_eps;
    let rotated = &saddle + Mat::from_row_slice(2, 2, &[0.0, -eps, eps, 0.0]);
    let cert = discrete_constant_certificate(&saddle, 0.0)?;
    let mut inst = robustness_instance("saddle", &saddle, &cert, &rotated, window);
    if let (Some(c), Some(d)) = (&inst.constants, inst.projection_distance) {
        let bound = projection_bound(cert.exponent, c.alpha_tilde, eps.abs());
        inst.projection_bound = Some(bound);
        inst.passed &= d <= bound;
    }
    instances.push(inst);

    if let (Some(m), Some(p)) = (&cfg.matrix, &cfg.matrix_perturbed) {
        let inst = match discrete_constant_certificate(m, 0.0) {
            Ok(cert) => robustness_instance("user", m, &cert, p, window),
            Err(e) => RobustnessInstance {
                name: "user".into(),
                window,
                base_bound: f64::NAN,
                base_exponent: f64::NAN,
                threshold: None,
                delta_eff: None,
                constants: None,
                verified: false,
                decay_fit: None,
                exponent_limit: None,
                projection_distance: None,
                projection_bound: None,
                passed: false,
                error: Some(e.to_string()),
            },
        };
        instances.push(inst);
    }

    let passed = instances.iter().all(|i| i.passed);
    let summary = instances
        .iter()
        .map(|i| match &i.error {
            Some(e) if !i.passed => format!("{}: {e}", i.name),
            _ => format!("{}: {}", i.name, if i.passed { "passed" } else { "failed" }),
        })
        .collect::<Vec<_>>()
        .join("; ");
    let report = RobustnessReport {
        command: "robustness",
        seed: cfg.seed,
        passed,
        instances,
    };
    let file = write_json(out, "robustness.json", &report)?;
    Ok(Outcome {
        passed,
        files: vec![file],
        summary: format!("robustness: {summary}"),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicRow {
    pub model: &'static str,
    pub eta: f64,
    pub epsilon: Option<f64>,
    pub sup_distance: Option<f64>,
    pub status: HyperbolicStatus,
    pub alpha_tilde: Option<f64>,
    pub m_bound: Option<f64>,
    pub contraction_factor: Option<f64>,
    pub seed: u64,
    pub note: Option<String>,
}

#[derive(Serialize)]
struct HyperbolicReport {
    command: &'static str,
    seed: u64,
    window: (f64, f64),
    h: f64,
    passed: bool,
    rows: Vec<HyperbolicRow>,
}

fn hyperbolic_row(
    model: &'static str,
    p: &SemilinearProblem,
    eta: f64,
    cfg: &ExperimentConfig,
) -> HyperbolicRow {
    let mut row = HyperbolicRow {
        model,
        eta,
        epsilon: None,
        sup_distance: None,
        status: HyperbolicStatus::Failed,
        alpha_tilde: None,
        m_bound: None,
        contraction_factor: None,
        seed: cfg.seed,
        note: None,
    };
    let opts = SolveOptions {
        h: cfg.h,
        tol: cfg.tol,
        tail_tol: cfg.tail_tol,
        ..SolveOptions::default()
    };
    let sol = find_hyperbolic_solution(p, eta, cfg.t_min, cfg.t_max, &opts)
        .and_then(|s| certify_hyperbolic(p, s, &ContinuousOptions::default()));
    match sol {
        Ok(s) => {
            row.epsilon = Some(s.epsilon);
            row.sup_distance = Some(s.sup_distance);
            row.status = s.status;
            row.contraction_factor = Some(s.contraction_factor);
            if let Some(lin) = &s.linearization {
                row.alpha_tilde = lin.alpha_tilde;
                row.m_bound = lin.m_hat;
                row.note = lin.note.clone();
            }
        }
        Err(e) => row.note = Some(e.to_string()),
    }
    row
}

/// Solves the scalar models over the `η` grid for one OU sample.
pub fn hyperbolic_rows(cfg: &ExperimentConfig) -> Result<Vec<HyperbolicRow>> {
    let signal = Arc::new(NoiseSignal::sample(
        cfg.seed,
        cfg.kappa.to_fn(),
        cfg.t_min - SIGNAL_REACH,
        cfg.t_max + SIGNAL_REACH,
        cfg.h,
        cfg.tail_tol,
    )?);
    let g: Signal = {
        let s = signal.clone();
        Arc::new(move |t| s.kz(t))
    };
    let mut models: Vec<(&'static str, SemilinearProblem)> = Vec::new();
    if matches!(cfg.model, ModelChoice::Cubic | ModelChoice::Both) {
        models.push(("cubic", cubic_additive(g.clone(), cfg.radius)?));
    }
    if matches!(cfg.model, ModelChoice::Additive | ModelChoice::Both) {
        models.push(("additive", additive_scalar(-1.0, g)?));
    }
    let jobs: Vec<(usize, f64)> = (0..models.len())
        .flat_map(|m| cfg.eta_grid.iter().map(move |&e| (m, e)))
        .collect();
    Ok(jobs
        .par_iter()
        .map(|&(m, eta)| hyperbolic_row(models[m].0, &models[m].1, eta, cfg))
        .collect())
}

pub fn hyperbolic(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let rows = hyperbolic_rows(cfg)?;
    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.status == HyperbolicStatus::Certified)
        .filter(|r| !(r.sup_distance.unwrap_or(f64::INFINITY) < r.epsilon.unwrap_or(0.0)))
        .map(|r| format!("{} η = {}", r.model, r.eta))
        .collect();
    let passed = bad.is_empty();
    let csv_path = out.join("hyperbolic.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "model",
        "eta",
        "epsilon",
        "sup_distance",
        "certified",
        "alpha_tilde",
        "M_bound",
        "contraction_factor",
        "seed",
    ])?;
    for r in &rows {
        w.write_record([
            r.model.to_string(),
            r.eta.to_string(),
            fmt_opt(r.epsilon),
            fmt_opt(r.sup_distance),
            (r.status == HyperbolicStatus::Certified).to_string(),
            fmt_opt(r.alpha_tilde),
            fmt_opt(r.m_bound),
            fmt_opt(r.contraction_factor),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    let certified = rows.iter().filter(|r| r.status == HyperbolicStatus::Certified).count();
    let total = rows.len();
    let report = HyperbolicReport {
        command: "hyperbolic",
        seed: cfg.seed,
        window: (cfg.t_min, cfg.t_max),
        h: cfg.h,
        passed,
        rows,
    };
    let json = write_json(out, "hyperbolic.json", &report)?;
    Ok(Outcome {
        passed,
        files: vec![csv_path, json],
        summary: if passed {
            format!("hyperbolic: {certified} of {total} rows certified")
        } else {
            format!("hyperbolic: certified rows with sup distance ≥ ε: {}", bad.join(", "))
        },
    })
}

pub fn wave(cfg: &ExperimentConfig, out: &Path) -> Result<Outcome> {
    let demo = WaveDemoConfig {
        n_modes: cfg.n_modes,
        damping: cfg.damping,
        f_linear: cfg.f_linear,
        shape: cfg.noise_shape,
        coordinates: cfg.coordinates,
        eta_grid: cfg.eta_grid.clone(),
        seed: cfg.seed,
        window: (cfg.t_min, cfg.t_max),
        h: cfg.h,
        radius: cfg.radius,
    };
    let report = run_wave_demo(&demo)?;
    let missing: Vec<String> = report
        .rows
        .iter()
        .filter(|r| r.eta < report.eta_cutoff && r.status != HyperbolicStatus::Certified)
        .map(|r| r.eta.to_string())
        .collect();
    let csv_path = out.join("wave.csv");
    report.write_csv(fs::File::create(&csv_path)?)?;
    let json = write_json(out, "wave.json", &report)?;
    Ok(Outcome {
        passed: missing.is_empty(),
        files: vec![csv_path, json],
        summary: if missing.is_empty() {
            format!("wave: every row below η cutoff {:.4} certified", report.eta_cutoff)
        } else {
            format!(
                "wave: rows below η cutoff {:.4} not certified: {}",
                report.eta_cutoff,
                missing.join(", ")
            )
        },
    })
}
