//! Bounded solutions of `x_{n+1} = (A_n + B_n) x_n + f_n` through the fixed
//! point of `(Γ_f x)(n) = Σ_k G(n, k+1)(B_k x_k + f_k)`.
//!
//! The sum over the window is evaluated exactly by two sweeps: a forward
//! recursion on the stable bundle and a backward recursion (restricted
//! inverses) on the unstable bundle. Sequences vanish outside the window, so
//! nodes within `edge_width` of either end carry a truncation error bounded by
//! the geometric tail and are excluded from interior checks.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::DiscreteCocycle;
use crate::dichotomy::stepped::Stepped;
use crate::dichotomy::DichotomyCertificate;
use crate::error::{Error, Result};
use crate::linalg::{op_norm, Mat, Vector};

/// Safety margin on the contraction factor of `Γ_f`.
pub const CONTRACTION_LIMIT: f64 = 0.9;
/// Tail tolerance that defines edge-contaminated nodes.
pub const EDGE_TOL: f64 = 1e-10;

/// `{f_n}` on `[n_min, n_min + len)`, zero elsewhere.
#[derive(Clone, Debug, PartialEq)]
pub struct ForcingSequence {
    pub n_min: i64,
    pub values: Vec<Vector>,
}

impl ForcingSequence {
    pub fn zeros(n_min: i64, n_max: i64, dim: usize) -> Self {
        ForcingSequence {
            n_min,
            values: vec![Vector::zeros(dim); (n_max - n_min + 1) as usize],
        }
    }

    /// `f_at = z`, zero elsewhere.
    pub fn impulse(n_min: i64, n_max: i64, at: i64, z: Vector) -> Result<Self> {
        let mut f = Self::zeros(n_min, n_max, z.len());
        if at < n_min || at > n_max {
            return Err(Error::Window {
                message: format!("impulse at {at} outside window [{n_min}, {n_max}]"),
                required_extension: None,
            });
        }
        f.values[(at - n_min) as usize] = z;
        Ok(f)
    }

    pub fn n_max(&self) -> i64 {
        self.n_min + self.values.len() as i64 - 1
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundedSolution {
    pub n_min: i64,
    #[serde(serialize_with = "serialize_vectors")]
    pub values: Vec<Vector>,
    pub fixed_point_residual: f64,
    pub iterations: usize,
    pub contraction_factor: f64,
    /// Nodes this close to either window end are edge-contaminated.
    pub edge_width: usize,
    /// Largest `‖x_{n+1} − (A_n + B_n)x_n − f_n‖` over interior nodes.
    pub equation_residual: f64,
}

fn serialize_vectors<S: serde::Serializer>(v: &[Vector], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(x.as_slice())?;
    }
    seq.end()
}

impl BoundedSolution {
    pub fn n_max(&self) -> i64 {
        self.n_min + self.values.len() as i64 - 1
    }

    pub fn at(&self, n: i64) -> Option<&Vector> {
        if n < self.n_min || n > self.n_max() {
            None
        } else {
            Some(&self.values[(n - self.n_min) as usize])
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Interior node range `[lo, hi]` (possibly empty).
    pub fn interior(&self) -> (i64, i64) {
        (
            self.n_min + self.edge_width as i64,
            self.n_max() - self.edge_width as i64,
        )
    }

    /// Rows `n,x0,…` preceded by a `#` line with the residuals.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# fixed_point_residual={} equation_residual={} iterations={} edge_width={}",
            self.fixed_point_residual, self.equation_residual, self.iterations, self.edge_width
        )?;
        let d = self.values.first().map(|v| v.len()).unwrap_or(0);
        let mut header = vec!["n".to_string()];
        header.extend((0..d).map(|i| format!("x{i}")));
        writeln!(out, "{}", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            let mut row = vec![(self.n_min + i as i64).to_string()];
            row.extend(v.iter().map(|x| format!("{x}")));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Smallest `N` with `sup_bound · e^{−αN} / (1 − e^{−α}) ≤ tol`.
pub fn truncation_length(alpha: f64, sup_bound: f64, tol: f64) -> Result<usize> {
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("truncation needs α > 0, got {alpha}")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("truncation needs tol > 0, got {tol}")));
    }
    let denom = -(-alpha).exp_m1();
    let tail = |n: usize| sup_bound * (-alpha * n as f64).exp() / denom;
    let mut n = ((sup_bound / (tol * denom)).ln() / alpha).ceil().max(0.0) as usize;
    while n > 0 && tail(n - 1) <= tol {
        n -= 1;
    }
    while tail(n) > tol {
        n += 1;
    }
    Ok(n)
}

/// `(1−e^{−α})/(1+e^{−α})`.
pub(crate) fn admissibility_threshold(alpha: f64) -> f64 {
    let e = (-alpha).exp();
    (1.0 - e) / (1.0 + e)
}

/// The operator `Γ_f` for a base cocycle with dichotomy and a perturbation `B`,
/// restricted to sequences on `[n_min, n_max]`.
#[derive(Clone, Debug)]
pub struct Admissibility {
    st: Stepped,
    n_min: i64,
    n_max: i64,
    b: Vec<Mat>,
    bound: f64,
    exponent: f64,
    b_sup: f64,
}

impl Admissibility {
    pub fn new(
        a: &DiscreteCocycle,
        cert: &DichotomyCertificate,
        b: &DiscreteCocycle,
        n_min: i64,
        n_max: i64,
    ) -> Result<Self> {
        if n_max <= n_min {
            return Err(Error::Domain(format!("empty window [{n_min}, {n_max}]")));
        }
        if a.dim() != b.dim() || a.dim() != cert.dim() {
            return Err(Error::Misaligned(format!(
                "dimensions differ: A {}, B {}, certificate {}",
                a.dim(),
                b.dim(),
                cert.dim()
            )));
        }
        let st = Stepped::discrete(a, cert, n_min, n_max + 1)?;
        let b: Result<Vec<Mat>> = (n_min..=n_max).into_par_iter().map(|n| b.step(n)).collect();
        let b = b?;
        let b_sup = b.iter().map(op_norm).fold(0.0, f64::max);
        Ok(Admissibility {
            st,
            n_min,
            n_max,
            b,
            bound: cert.bound,
            exponent: cert.exponent,
            b_sup,
        })
    }

    pub fn window(&self) -> (i64, i64) {
        (self.n_min, self.n_max)
    }

    pub fn dim(&self) -> usize {
        self.st.stable[0].nrows()
    }

    fn len(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    /// `ρ = sup‖B‖ · K · (1+e^{−α})/(1−e^{−α})`.
    pub fn contraction_factor(&self) -> f64 {
        self.b_sup * self.bound / admissibility_threshold(self.exponent)
    }

    pub fn edge_width(&self, scale: f64) -> usize {
        truncation_length(self.exponent, self.bound * scale.max(1.0), EDGE_TOL).unwrap_or(0)
    }

    fn check_margin(&self) -> Result<f64> {
        let rho = self.contraction_factor();
        if rho > CONTRACTION_LIMIT {
            return Err(Error::ContractionMargin {
                factor: rho,
                limit: CONTRACTION_LIMIT,
                threshold: admissibility_threshold(self.exponent),
            });
        }
        Ok(rho)
    }

    /// `Γ_f` on matrix-valued sequences (each column is one sequence).
    fn gamma_mat(&self, f: &[Mat], x: &[Mat]) -> Vec<Mat> {
        let w = self.len();
        let y: Vec<Mat> = (0..w).map(|i| &self.b[i] * &x[i] + &f[i]).collect();
        let cols = f[0].ncols();
        let d = self.dim();
        let mut out = vec![Mat::zeros(d, cols); w];
        // stable part: u_{i+1} = Π^s_{i+1}(S_i u_i + y_i)
        let mut u = Mat::zeros(d, cols);
        for i in 0..w {
            out[i] += &u;
            u = &self.st.stable[i + 1] * (&self.st.steps[i] * &u + &y[i]);
        }
        // unstable part: w_i = R_i(Π^u_{i+1} y_i + w_{i+1}), contributes −w_i
        let mut v = Mat::zeros(d, cols);
        for i in (0..w).rev() {
            v = &self.st.unstable[i] * (&self.st.back[i] * (&self.st.unstable[i + 1] * &y[i] + &v));
            out[i] -= &v;
        }
        out
    }

    fn check_forcing(&self, f: &ForcingSequence) -> Result<()> {
        if f.n_min != self.n_min || f.n_max() != self.n_max {
            return Err(Error::Misaligned(format!(
                "forcing window [{}, {}] differs from operator window [{}, {}]",
                f.n_min,
                f.n_max(),
                self.n_min,
                self.n_max
            )));
        }
        if f.values.iter().any(|v| v.len() != self.dim()) {
            return Err(Error::Misaligned("forcing vectors have the wrong dimension".into()));
        }
        Ok(())
    }

    /// `(Γ_f x)(n)` at every window node.
    pub fn gamma_apply(&self, f: &ForcingSequence, x: &[Vector]) -> Result<Vec<Vector>> {
        self.check_forcing(f)?;
        if x.len() != self.len() {
            return Err(Error::Misaligned(format!(
                "candidate has {} nodes, window has {}",
                x.len(),
                self.len()
            )));
        }
        let fm: Vec<Mat> = f.values.iter().map(|v| Mat::from_column_slice(v.len(), 1, v.as_slice())).collect();
        let xm: Vec<Mat> = x.iter().map(|v| Mat::from_column_slice(v.len(), 1, v.as_slice())).collect();
        Ok(self
            .gamma_mat(&fm, &xm)
            .into_iter()
            .map(|m| Vector::from_column_slice(m.as_slice()))
            .collect())
    }

    fn iteration_budget(&self, rho: f64, f_norm: f64, tol: f64) -> usize {
        const SAFETY: usize = 10;
        if rho <= 0.0 || f_norm <= 0.0 {
            return 2 + SAFETY;
        }
        let n = ((tol * (1.0 - rho) / f_norm).ln() / rho.ln()).ceil();
        n.max(1.0) as usize + SAFETY
    }

    fn picard(&self, f: &[Mat], init: Vec<Mat>, tol: f64, f_norm: f64) -> Result<(Vec<Mat>, f64, usize, f64)> {
        let rho = self.check_margin()?;
        let budget = self.iteration_budget(rho, f_norm, tol);
        let sup = |s: &[Mat]| s.iter().map(op_norm).fold(0.0, f64::max);
        let mut x = init;
        for it in 1..=budget {
            let next = self.gamma_mat(f, &x);
            let diff: Vec<Mat> = next.iter().zip(&x).map(|(a, b)| a - b).collect();
            let res = sup(&diff);
            x = next;
            if res <= tol * (1.0 - rho) {
                // residual of the returned iterate: ‖Γx − x‖ ≤ ρ·res
                return Ok((x, rho * res, it, rho));
            }
        }
        Err(Error::NonConvergent(format!(
            "Γ_f iteration exceeded budget of {budget} steps (ρ = {rho:.4})"
        )))
    }

    fn equation_residual(&self, x: &[Vector], f: &ForcingSequence, edge: usize) -> f64 {
        let w = self.len();
        let mut worst = 0.0_f64;
        if 2 * edge + 1 >= w {
            return worst;
        }
        for i in edge..w - 1 - edge {
            let r = &x[i + 1] - (&self.st.steps[i] + &self.b[i]) * &x[i] - &f.values[i];
            worst = worst.max(r.norm());
        }
        worst
    }

    /// Fixed point of `Γ_f` with `‖Γ_f x − x‖_∞ ≤ tol`.
    pub fn bounded_solution(
        &self,
        f: &ForcingSequence,
        tol: f64,
        initial: Option<&[Vector]>,
    ) -> Result<BoundedSolution> {
        self.check_forcing(f)?;
        let d = self.dim();
        let fm: Vec<Mat> = f.values.iter().map(|v| Mat::from_column_slice(d, 1, v.as_slice())).collect();
        let init: Vec<Mat> = match initial {
            Some(x) => {
                if x.len() != self.len() {
                    return Err(Error::Misaligned("initial guess has the wrong length".into()));
                }
                x.iter().map(|v| Mat::from_column_slice(d, 1, v.as_slice())).collect()
            }
            None => vec![Mat::zeros(d, 1); self.len()],
        };
        let f_norm = f.sup_norm();
        let (x, residual, iterations, rho) = self.picard(&fm, init, tol, f_norm)?;
        let values: Vec<Vector> = x.into_iter().map(|m| Vector::from_column_slice(m.as_slice())).collect();
        let sol_norm = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let a_priori = self.bound * f_norm / (admissibility_threshold(self.exponent) * (1.0 - rho));
        if sol_norm > a_priori * (1.0 + 1e-9) + 2.0 * tol {
            return Err(Error::NonConvergent(format!(
                "solution norm {sol_norm:.6e} exceeds the a-priori bound {a_priori:.6e}"
            )));
        }
        let edge = self.edge_width(self.b_sup * sol_norm);
        let equation_residual = self.equation_residual(&values, f, edge);
        Ok(BoundedSolution {
            n_min: self.n_min,
            values,
            fixed_point_residual: residual,
            iterations,
            contraction_factor: rho,
            edge_width: edge,
            equation_residual,
        })
    }

    /// Perturbed projections at node `m` from impulse responses: with
    /// `f_{m−1} = e_j`, the bounded solution at `m` is column `j` of `Π̃^s(m)`.
    ///
    /// The impulse is not scaled by `K`; constants downstream carry the factor.
    pub fn impulse_response_projection(&self, m: i64, tol: f64) -> Result<(Mat, Mat)> {
        if m - 1 < self.n_min || m > self.n_max {
            return Err(Error::Window {
                message: format!("impulse node {m} needs m−1 ≥ {} and m ≤ {}", self.n_min, self.n_max),
                required_extension: None,
            });
        }
        let d = self.dim();
        let mut f = vec![Mat::zeros(d, d); self.len()];
        f[(m - 1 - self.n_min) as usize] = Mat::identity(d, d);
        let (x, _, _, _) = self.picard(&f, vec![Mat::zeros(d, d); self.len()], tol, 1.0)?;
        let ps = x[(m - self.n_min) as usize].clone();
        let pu = Mat::identity(d, d) - &ps;
        Ok((ps, pu))
    }

    /// `Π̃^s` at every node of `[m_lo, m_hi]`, computed in parallel.
    pub fn impulse_projections(&self, m_lo: i64, m_hi: i64, tol: f64) -> Result<Vec<Mat>> {
        (m_lo..=m_hi)
            .into_par_iter()
            .map(|m| self.impulse_response_projection(m, tol).map(|(ps, _)| ps))
            .collect()
    }
}

/// `Γ_f x` for the given data (free-function form).
pub fn gamma_apply(
    a: &DiscreteCocycle,
    cert: &DichotomyCertificate,
    b: &DiscreteCocycle,
    f: &ForcingSequence,
    x: &[Vector],
) -> Result<Vec<Vector>> {
    Admissibility::new(a, cert, b, f.n_min, f.n_max())?.gamma_apply(f, x)
}

/// Unique bounded solution on the forcing window (free-function form).
pub fn bounded_solution(
    a: &DiscreteCocycle,
    cert: &DichotomyCertificate,
    b: &DiscreteCocycle,
    f: &ForcingSequence,
    tol: f64,
) -> Result<BoundedSolution> {
    Admissibility::new(a, cert, b, f.n_min, f.n_max())?.bounded_solution(f, tol, None)
}

/// `(Π̃^s(m), Π̃^u(m))` on the window `[n_min, n_max]`.
pub fn impulse_response_projection(
    a: &DiscreteCocycle,
    cert: &DichotomyCertificate,
    b: &DiscreteCocycle,
    n_min: i64,
    n_max: i64,
    m: i64,
    tol: f64,
) -> Result<(Mat, Mat)> {
    Admissibility::new(a, cert, b, n_min, n_max)?.impulse_response_projection(m, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dichotomy::{GreenKernel, TimeKind};

    fn scalar(a: f64) -> DiscreteCocycle {
        DiscreteCocycle::constant(Mat::from_element(1, 1, a))
    }

    fn stable_cert() -> DichotomyCertificate {
        DichotomyCertificate::constant(TimeKind::Discrete, Mat::identity(1, 1), 1.0, 2f64.ln()).unwrap()
    }

    #[test]
    fn truncation_length_closed_form() {
        assert_eq!(truncation_length(2f64.ln(), 1.0, 1e-8).unwrap(), 28);
        assert_eq!(truncation_length(2f64.ln(), 1.0, 2.0).unwrap(), 0);
        assert!(truncation_length(0.0, 1.0, 1e-8).is_err());
    }

    #[test]
    fn gamma_of_impulse_is_geometric() {
        let op = Admissibility::new(&scalar(0.5), &stable_cert(), &scalar(0.0), -10, 10).unwrap();
        let f = ForcingSequence::impulse(-10, 10, -1, Vector::from_element(1, 3.0)).unwrap();
        let x = vec![Vector::from_element(1, 7.0); 21];
        let out = op.gamma_apply(&f, &x).unwrap();
        for (i, v) in out.iter().enumerate() {
            let n = i as i32 - 10;
            let want = if n >= 0 { 3.0 * 0.5f64.powi(n) } else { 0.0 };
            assert_eq!(v[0], want);
        }
    }

    #[test]
    fn sweeps_match_explicit_green_sum() {
        let a = Mat::from_row_slice(2, 2, &[0.5, 0.2, 0.0, 2.0]);
        let split = crate::dichotomy::discrete_spectral_projection(&a, 1e-8).unwrap();
        let cert = DichotomyCertificate::constant(TimeKind::Discrete, split.stable(), 2.0, 0.6).unwrap();
        let ac = DiscreteCocycle::constant(a);
        let b = DiscreteCocycle::from_fn(2, |n| Mat::from_row_slice(2, 2, &[0.01 * (n as f64).sin(), 0.0, 0.02, -0.01]));
        let op = Admissibility::new(&ac, &cert, &b, -8, 8).unwrap();
        let f = ForcingSequence {
            n_min: -8,
            values: (0..17).map(|i| Vector::from_vec(vec![(i as f64).cos(), 1.0 / (1.0 + i as f64)])).collect(),
        };
        let x: Vec<Vector> = (0..17).map(|i| Vector::from_vec(vec![0.3 * i as f64, -1.0])).collect();
        let got = op.gamma_apply(&f, &x).unwrap();
        let g = GreenKernel::discrete(&ac, &cert, -8, 9).unwrap();
        for n in -8..=8_i64 {
            let mut acc = Vector::zeros(2);
            for k in -8..=8_i64 {
                let y = b.step(k).unwrap() * &x[(k + 8) as usize] + &f.values[(k + 8) as usize];
                acc += g.eval(n as f64, (k + 1) as f64).unwrap() * y;
            }
            assert!((&got[(n + 8) as usize] - acc).norm() < 1e-12);
        }
    }

    #[test]
    fn perturbed_impulse_solution() {
        let f = ForcingSequence::impulse(-40, 40, -1, Vector::from_element(1, 1.0)).unwrap();
        let sol = bounded_solution(&scalar(0.5), &stable_cert(), &scalar(0.05), &f, 1e-12).unwrap();
        for n in -40..=40 {
            let want = if n >= 0 { 0.55f64.powi(n as i32) } else { 0.0 };
            assert!((sol.at(n).unwrap()[0] - want).abs() < 1e-10);
        }
        assert!(sol.equation_residual < 1e-10);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let f = ForcingSequence::zeros(-5, 5, 1);
        let sol = bounded_solution(&scalar(0.5), &stable_cert(), &scalar(0.05), &f, 1e-12).unwrap();
        assert!(sol.values.iter().all(|v| v[0] == 0.0));
    }

    #[test]
    fn margin_violation_is_reported() {
        let f = ForcingSequence::zeros(-5, 5, 1);
        match bounded_solution(&scalar(0.5), &stable_cert(), &scalar(0.4), &f, 1e-12) {
            Err(Error::ContractionMargin { factor, threshold, .. }) => {
                assert!((factor - 1.2).abs() < 1e-12);
                assert!((threshold - 1.0 / 3.0).abs() < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unstable_scalar_impulse_projection() {
        let cert = DichotomyCertificate::constant(TimeKind::Discrete, Mat::zeros(1, 1), 1.0, 2f64.ln()).unwrap();
        let (ps, pu) = impulse_response_projection(&scalar(2.0), &cert, &scalar(0.03), -30, 30, 0, 1e-12).unwrap();
        assert!(ps[(0, 0)].abs() < 1e-10);
        assert!((pu[(0, 0)] - 1.0).abs() < 1e-10);
    }
}
