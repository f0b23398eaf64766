use serde::Serialize;

use super::spectral::{discrete_spectral_projection, spectral_projection, SpectralSplit};
use crate::error::{Error, Result};
use crate::linalg::{expm, op_norm, Mat};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeKind {
    Discrete,
    Continuous,
}

/// Stable projections `Π^s` along the base orbit.
#[derive(Clone, Debug)]
pub enum ProjectionFamily {
    Constant(Mat),
    /// `stable[k]` is `Π^s` at time `start + k·spacing`.
    Sampled {
        start: f64,
        spacing: f64,
        stable: Vec<Mat>,
    },
}

/// Projection family plus bound `K ≥ 1` and exponent `α > 0`.
#[derive(Clone, Debug)]
pub struct DichotomyCertificate {
    pub bound: f64,
    pub exponent: f64,
    pub projections: ProjectionFamily,
    pub kind: TimeKind,
    /// Points per unit time of the scan that produced `bound`, when it was scanned.
    pub scan_density: Option<usize>,
}

pub const DEFAULT_MARGIN: f64 = 0.1;
pub const DEFAULT_SCAN_DENSITY: usize = 64;

fn ceil_sig3(x: f64) -> f64 {
    if x <= 1.0 + 1e-9 {
        return 1.0;
    }
    let e = x.log10().floor();
    let scale = 10f64.powf(e - 2.0);
    (x / scale - 1e-9).ceil() * scale
}

impl DichotomyCertificate {
    pub fn constant(kind: TimeKind, stable: Mat, bound: f64, exponent: f64) -> Result<Self> {
        let c = DichotomyCertificate {
            bound,
            exponent,
            projections: ProjectionFamily::Constant(stable),
            kind,
            scan_density: None,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn sampled(
        kind: TimeKind,
        start: f64,
        spacing: f64,
        stable: Vec<Mat>,
        bound: f64,
        exponent: f64,
    ) -> Result<Self> {
        if stable.is_empty() || !(spacing > 0.0) {
            return Err(Error::Domain("sampled projection family needs nodes and positive spacing".into()));
        }
        let c = DichotomyCertificate {
            bound,
            exponent,
            projections: ProjectionFamily::Sampled {
                start,
                spacing,
                stable,
            },
            kind,
            scan_density: None,
        };
        c.validate()?;
        Ok(c)
    }

    fn validate(&self) -> Result<()> {
        if !(self.bound >= 1.0 && self.bound.is_finite()) {
            return Err(Error::Domain(format!("bound K must be ≥ 1, got {}", self.bound)));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(Error::Domain(format!("exponent must be > 0, got {}", self.exponent)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match &self.projections {
            ProjectionFamily::Constant(p) => p.nrows(),
            ProjectionFamily::Sampled { stable, .. } => stable[0].nrows(),
        }
    }

    /// Time range covered by the family (unbounded for constant families).
    pub fn coverage(&self) -> (f64, f64) {
        match &self.projections {
            ProjectionFamily::Constant(_) => (f64::NEG_INFINITY, f64::INFINITY),
            ProjectionFamily::Sampled {
                start,
                spacing,
                stable,
            } => (*start, start + spacing * (stable.len() - 1) as f64),
        }
    }

    /// `Π^s` at `t`, which must be a node of a sampled family.
    pub fn stable_at(&self, t: f64) -> Result<Mat> {
        match &self.projections {
            ProjectionFamily::Constant(p) => Ok(p.clone()),
            ProjectionFamily::Sampled {
                start,
                spacing,
                stable,
            } => {
                let x = (t - start) / spacing;
                let k = x.round();
                if (x - k).abs() > 1e-7 {
                    return Err(Error::Misaligned(format!(
                        "t = {t} is not a projection node (start {start}, spacing {spacing})"
                    )));
                }
                if k < 0.0 || k as usize >= stable.len() {
                    let (lo, hi) = self.coverage();
                    return Err(Error::Window {
                        message: format!("no projection stored at t = {t}; family covers [{lo}, {hi}]"),
                        required_extension: Some(if k < 0.0 { lo - t } else { t - hi }),
                    });
                }
                Ok(stable[k as usize].clone())
            }
        }
    }

    /// `Π^u = Id − Π^s` at `t`.
    pub fn unstable_at(&self, t: f64) -> Result<Mat> {
        let s = self.stable_at(t)?;
        Ok(Mat::identity(s.nrows(), s.ncols()) - s)
    }

    /// Same certificate with a different exponent (used by falsification tests and lifts).
    pub fn with_exponent(&self, exponent: f64) -> Self {
        DichotomyCertificate {
            exponent,
            ..self.clone()
        }
    }

    /// Same certificate with every `Π^s` replaced.
    pub fn with_constant_projection(&self, stable: Mat) -> Self {
        DichotomyCertificate {
            projections: ProjectionFamily::Constant(stable),
            ..self.clone()
        }
    }
}

/// Certificate for `ẋ = A x` with the default margin.
pub fn autonomous_certificate(a: &Mat) -> Result<DichotomyCertificate> {
    autonomous_certificate_with(a, DEFAULT_MARGIN, DEFAULT_SCAN_DENSITY)
}

/// `β = gap·(1 − margin)`; `M` is the smallest constant with
/// `‖e^{At}Π^s‖ ≤ M e^{−βt}` and `‖e^{−At}Π^u‖ ≤ M e^{−βt}` on a dense scan,
/// rounded up to three significant digits.
pub fn autonomous_certificate_with(
    a: &Mat,
    margin: f64,
    density: usize,
) -> Result<DichotomyCertificate> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::Domain(format!("margin must lie in [0, 1), got {margin}")));
    }
    let split = spectral_projection(a)?;
    let beta = split.gap * (1.0 - margin);
    let rate = (split.gap - beta).max(1e-3 * split.gap);
    let horizon = (30.0 / rate).max(1.0);
    let m = scan_constant(a, &split, beta, horizon, density);
    let mut cert = DichotomyCertificate::constant(TimeKind::Continuous, split.stable(), m, beta)?;
    cert.scan_density = Some(density);
    Ok(cert)
}

fn scan_constant(a: &Mat, split: &SpectralSplit, beta: f64, horizon: f64, density: usize) -> f64 {
    let dt = 1.0 / density.max(1) as f64;
    let steps = (horizon * density as f64).ceil() as usize;
    let ps = split.stable();
    let pu = split.unstable.clone();
    let fwd = expm(&(a * dt));
    let bwd = expm(&(a * (-dt)));
    let mut best = op_norm(&ps).max(op_norm(&pu));
    let mut es = ps.clone();
    let mut eu = pu.clone();
    for k in 1..=steps {
        let w = (beta * k as f64 * dt).exp();
        es = &ps * (&fwd * &es);
        eu = &pu * (&bwd * &eu);
        best = best.max(op_norm(&es) * w).max(op_norm(&eu) * w);
    }
    ceil_sig3(best)
}

/// Certificate for the constant discrete step `x_{n+1} = A x_n`: unstable part
/// `|μ| > 1`, exponent `gap·(1 − margin)` with `gap = min |ln |μ||`, bound by a
/// scan over powers.
pub fn discrete_constant_certificate(a: &Mat, margin: f64) -> Result<DichotomyCertificate> {
    if !(0.0..1.0).contains(&margin) {
        return Err(Error::Domain(format!("margin must lie in [0, 1), got {margin}")));
    }
    let split = discrete_spectral_projection(a, 1e-8)?;
    let alpha = split.gap * (1.0 - margin);
    let ps = split.stable();
    let pu = split.unstable.clone();
    let horizon = if margin > 0.0 {
        (30.0 / (split.gap * margin)).ceil() as usize
    } else {
        200
    };
    // inverse on the unstable subspace: A is invertible there by construction
    let inv_u = {
        let basis = crate::linalg::range_basis(&pu, split.unstable_rank());
        crate::linalg::restricted_inverse(a, &basis, &pu).0
    };
    let mut best = op_norm(&ps).max(op_norm(&pu));
    let mut es = ps.clone();
    let mut eu = pu.clone();
    for n in 1..=horizon.min(2000) {
        let w = (alpha * n as f64).exp();
        es = &ps * (a * &es);
        eu = &pu * (&inv_u * &eu);
        best = best.max(op_norm(&es) * w).max(op_norm(&eu) * w);
    }
    let mut cert = DichotomyCertificate::constant(TimeKind::Discrete, ps, ceil_sig3(best), alpha)?;
    cert.scan_density = Some(1);
    Ok(cert)
}
