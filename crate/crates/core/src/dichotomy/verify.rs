use serde::Serialize;

use super::certificate::{DichotomyCertificate, TimeKind};
use super::stepped::Stepped;
use crate::cocycle::{ContinuousCocycle, DiscreteCocycle};
use crate::error::{Error, Result};
use crate::linalg::{idempotence_residual, op_norm};

pub const COMMUTATION_TOL: f64 = 1e-6;
pub const INVERSE_TOL: f64 = 1e-6;
pub const IDEMPOTENCE_TOL: f64 = 1e-6;
/// Decay is only checked while the envelope `K e^{−αt}` stays above this
/// fraction of `K`; beyond it, roundoff dominates the measured norms.
const ENVELOPE_FLOOR: f64 = 1e-10;

#[derive(Clone, Copy, Debug)]
pub enum CocycleRef<'a> {
    Discrete(&'a DiscreteCocycle),
    Continuous(&'a ContinuousCocycle),
}

/// Nodes at which a certificate is checked: `start, start + spacing, …, end`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VerifyWindow {
    pub start: f64,
    pub end: f64,
    pub spacing: f64,
}

impl VerifyWindow {
    pub fn discrete(n_lo: i64, n_hi: i64) -> Self {
        VerifyWindow {
            start: n_lo as f64,
            end: n_hi as f64,
            spacing: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxiomCheck {
    pub max_residual: f64,
    pub limit: f64,
    pub pass: bool,
}

impl AxiomCheck {
    fn new(max_residual: f64, limit: f64) -> Self {
        AxiomCheck {
            max_residual,
            limit,
            pass: max_residual <= limit,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvertibilityCheck {
    pub max_condition: f64,
    pub max_inverse_residual: f64,
    pub constant_rank: bool,
    pub unstable_rank: usize,
    pub isomorphism_violation: bool,
    pub pass: bool,
}

/// Residuals for the four dichotomy axioms. Decay entries report the largest
/// ratio `‖·‖ / (K e^{−αt})`, to be compared with the slack.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerificationReport {
    pub kind: TimeKind,
    pub window: VerifyWindow,
    pub bound: f64,
    pub exponent: f64,
    pub slack: f64,
    pub projections: AxiomCheck,
    pub commutation: AxiomCheck,
    pub forward_decay: AxiomCheck,
    pub backward_decay: AxiomCheck,
    pub invertibility: InvertibilityCheck,
    pub pass: bool,
}

impl VerificationReport {
    /// Names of the axioms that failed.
    pub fn failures(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if !self.projections.pass {
            out.push("projections");
        }
        if !self.commutation.pass {
            out.push("commutation");
        }
        if !self.forward_decay.pass {
            out.push("forward_decay");
        }
        if !self.backward_decay.pass {
            out.push("backward_decay");
        }
        if !self.invertibility.pass {
            out.push("invertibility");
        }
        out
    }
}

pub(crate) fn verify_stepped(
    st: &Stepped,
    cert: &DichotomyCertificate,
    kind: TimeKind,
    window: VerifyWindow,
    slack: f64,
) -> VerificationReport {
    let k_bound = cert.bound;
    let alpha = cert.exponent;
    let n = st.len();
    let horizon_t = (1.0 / ENVELOPE_FLOOR).ln() / alpha;
    let horizon = ((horizon_t / st.dt).floor() as usize).max(1);

    let proj = st
        .stable
        .iter()
        .map(idempotence_residual)
        .fold(0.0_f64, f64::max);

    let mut comm = 0.0_f64;
    for k in 0..n - 1 {
        let s = &st.steps[k];
        let r = op_norm(&(&st.stable[k + 1] * s - s * &st.stable[k]));
        comm = comm.max(r / op_norm(s).max(1.0));
    }

    let envelope = |steps: usize| k_bound * (-alpha * steps as f64 * st.dt).exp();
    let mut fwd = 0.0_f64;
    let mut bwd = 0.0_f64;
    for k in 0..n {
        let mut e = st.stable[k].clone();
        fwd = fwd.max(op_norm(&e) / k_bound);
        for j in k..(k + horizon).min(n - 1) {
            e = &st.stable[j + 1] * (&st.steps[j] * e);
            fwd = fwd.max(op_norm(&e) / envelope(j + 1 - k));
        }
        let mut e = st.unstable[k].clone();
        bwd = bwd.max(op_norm(&e) / k_bound);
        let lo = k.saturating_sub(horizon);
        for j in (lo..k).rev() {
            e = &st.unstable[j] * (&st.back[j] * e);
            bwd = bwd.max(op_norm(&e) / envelope(k - j));
        }
    }

    let max_cond = st.cond.iter().cloned().fold(1.0_f64, f64::max);
    let max_res = st.inv_residual.iter().cloned().fold(0.0_f64, f64::max);
    let rank0 = st.ranks[0];
    let constant_rank = st.ranks.iter().all(|&r| r == rank0);
    let violation = !max_cond.is_finite() || max_res > INVERSE_TOL;
    let invertibility = InvertibilityCheck {
        max_condition: max_cond,
        max_inverse_residual: max_res,
        constant_rank,
        unstable_rank: rank0,
        isomorphism_violation: violation,
        pass: !violation && constant_rank,
    };
    let projections = AxiomCheck::new(proj, IDEMPOTENCE_TOL);
    let commutation = AxiomCheck::new(comm, COMMUTATION_TOL);
    let forward_decay = AxiomCheck::new(fwd, slack);
    let backward_decay = AxiomCheck::new(bwd, slack);
    let pass = projections.pass
        && commutation.pass
        && forward_decay.pass
        && backward_decay.pass
        && invertibility.pass;
    VerificationReport {
        kind,
        window,
        bound: k_bound,
        exponent: alpha,
        slack,
        projections,
        commutation,
        forward_decay,
        backward_decay,
        invertibility,
        pass,
    }
}

/// Checks the dichotomy axioms for `cert` along `cocycle` at the window nodes.
///
/// A singular restricted map is reported through
/// `invertibility.isomorphism_violation`, not as an error; errors come only
/// from evaluating the cocycle or from projections missing at window nodes.
pub fn verify_dichotomy(
    cocycle: CocycleRef<'_>,
    cert: &DichotomyCertificate,
    window: VerifyWindow,
    slack: f64,
) -> Result<VerificationReport> {
    if !(window.end > window.start && window.spacing > 0.0) {
        return Err(Error::Domain(format!("empty verification window {window:?}")));
    }
    match cocycle {
        CocycleRef::Discrete(c) => {
            if window.spacing != 1.0 || window.start.fract() != 0.0 || window.end.fract() != 0.0 {
                return Err(Error::Domain("discrete windows need integer endpoints and unit spacing".into()));
            }
            let st = Stepped::discrete(c, cert, window.start as i64, window.end as i64)?;
            Ok(verify_stepped(&st, cert, TimeKind::Discrete, window, slack))
        }
        CocycleRef::Continuous(c) => {
            let st = Stepped::continuous(c, cert, window.start, window.end, window.spacing)?;
            Ok(verify_stepped(&st, cert, TimeKind::Continuous, window, slack))
        }
    }
}
