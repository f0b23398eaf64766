use super::certificate::DichotomyCertificate;
use super::stepped::Stepped;
use super::verify::INVERSE_TOL;
use crate::cocycle::{ContinuousCocycle, DiscreteCocycle};
use crate::error::{Error, Result};
use crate::linalg::{op_norm, Mat};

/// Green function of a cocycle with a dichotomy, tabulated on a node window:
/// `G(t,s) = φ_{t,s} Π^s(s)` for `t ≥ s` and `−φ_{t,s} Π^u(s)` for `t < s`,
/// the latter through the inverse restricted to the unstable bundle.
#[derive(Clone, Debug)]
pub struct GreenKernel {
    st: Stepped,
}

impl GreenKernel {
    pub fn discrete(c: &DiscreteCocycle, cert: &DichotomyCertificate, n_lo: i64, n_hi: i64) -> Result<Self> {
        Ok(GreenKernel {
            st: Stepped::discrete(c, cert, n_lo, n_hi)?,
        })
    }

    /// Nodes `t_lo + k·dt`; projections must be available there.
    pub fn continuous(
        c: &ContinuousCocycle,
        cert: &DichotomyCertificate,
        t_lo: f64,
        t_hi: f64,
        dt: f64,
    ) -> Result<Self> {
        Ok(GreenKernel {
            st: Stepped::continuous(c, cert, t_lo, t_hi, dt)?,
        })
    }

    fn node(&self, t: f64) -> Result<usize> {
        self.st.index_of(t).ok_or_else(|| {
            Error::Window {
                message: format!(
                    "t = {t} is not a node of the Green window [{}, {}] (spacing {})",
                    self.st.t0,
                    self.st.time(self.st.len() - 1),
                    self.st.dt
                ),
                required_extension: None,
            }
        })
    }

    /// `G(t, s)`.
    pub fn eval(&self, t: f64, s: f64) -> Result<Mat> {
        let n = self.node(t)?;
        let m = self.node(s)?;
        if n < m {
            for i in n..m {
                if !self.st.cond[i].is_finite() || self.st.inv_residual[i] > INVERSE_TOL {
                    return Err(Error::Isomorphism(format!(
                        "step at t = {} is not invertible on the unstable bundle (residual {:.3e})",
                        self.st.time(i),
                        self.st.inv_residual[i]
                    )));
                }
            }
        }
        Ok(self.st.green(n, m))
    }
}

/// `G(t, s)` from a kernel (free-function form).
pub fn green_eval(g: &GreenKernel, t: f64, s: f64) -> Result<Mat> {
    g.eval(t, s)
}

/// `sup ‖Π^s_A(t) − Π^s_B(t)‖` over the given nodes.
pub fn projection_distance(
    a: &DichotomyCertificate,
    b: &DichotomyCertificate,
    nodes: impl IntoIterator<Item = f64>,
) -> Result<f64> {
    let mut best = 0.0_f64;
    for t in nodes {
        let pa = a.stable_at(t)?;
        let pb = b.stable_at(t)?;
        if pa.shape() != pb.shape() {
            return Err(Error::Misaligned("certificates have different dimensions".into()));
        }
        best = best.max(op_norm(&(pa - pb)));
    }
    Ok(best)
}

/// `ε (e^{−α_A} + e^{−α_B}) / (1 − e^{−(α_A + α_B)})`, the projection-continuity bound.
pub fn projection_bound(alpha_a: f64, alpha_b: f64, eps: f64) -> f64 {
    eps * ((-alpha_a).exp() + (-alpha_b).exp()) / (-(-(alpha_a + alpha_b)).exp_m1())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::certificate::{DichotomyCertificate, TimeKind};

    fn scalar(a: f64) -> DiscreteCocycle {
        DiscreteCocycle::constant(Mat::from_element(1, 1, a))
    }

    #[test]
    fn stable_scalar_green_function() {
        let cert = DichotomyCertificate::constant(TimeKind::Discrete, Mat::identity(1, 1), 1.0, 2f64.ln()).unwrap();
        let g = GreenKernel::discrete(&scalar(0.5), &cert, -10, 10).unwrap();
        for n in -10..=10 {
            let v = g.eval(n as f64, 0.0).unwrap()[(0, 0)];
            let want = if n >= 0 { 0.5f64.powi(n as i32) } else { 0.0 };
            assert_eq!(v, want);
        }
    }

    #[test]
    fn unstable_scalar_green_function() {
        let cert = DichotomyCertificate::constant(TimeKind::Discrete, Mat::zeros(1, 1), 1.0, 2f64.ln()).unwrap();
        let g = GreenKernel::discrete(&scalar(2.0), &cert, -10, 10).unwrap();
        for n in -10..=10 {
            let v = g.eval(n as f64, 0.0).unwrap()[(0, 0)];
            let want = if n >= 0 { 0.0 } else { -(2f64.powi(n as i32)) };
            assert!((v - want).abs() < 1e-15, "n={n}: {v} vs {want}");
        }
    }

    #[test]
    fn jump_identity() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.3, 0.0, 2.0]);
        let split = crate::dichotomy::spectral::discrete_spectral_projection(&a, 1e-8).unwrap();
        let cert = DichotomyCertificate::constant(TimeKind::Discrete, split.stable(), 2.0, 0.5).unwrap();
        let g = GreenKernel::discrete(&DiscreteCocycle::constant(a), &cert, -5, 5).unwrap();
        for s in -4..=4 {
            let m = g.st.index_of(s as f64).unwrap();
            let at = g.eval(s as f64, s as f64).unwrap();
            // backward branch −φ_{t,s}Π^u(s) evaluated at t = s
            let back = -g.st.backward(m, m);
            assert!(op_norm(&(at - back - Mat::identity(2, 2))) < 1e-14);
        }
    }

    #[test]
    fn projection_bound_closed_form() {
        let b = projection_bound(2f64.ln(), 2f64.ln(), 0.01);
        assert!((b - 0.01 * 4.0 / 3.0).abs() < 1e-15);
    }
}
