//! A cocycle plus projection family sampled on equally spaced nodes, with the
//! per-step restricted inverses needed for backward evolution on `R(Π^u)`.

use rayon::prelude::*;

use super::certificate::DichotomyCertificate;
use crate::cocycle::{ContinuousCocycle, DiscreteCocycle};
use crate::error::Result;
use crate::linalg::{projection_rank, range_basis, restricted_inverse, Mat};

#[derive(Clone, Debug)]
pub(crate) struct Stepped {
    pub t0: f64,
    pub dt: f64,
    /// `steps[k]` maps node `k` to node `k+1`.
    pub steps: Vec<Mat>,
    pub stable: Vec<Mat>,
    pub unstable: Vec<Mat>,
    /// `back[k]` maps `R(Π^u_{k+1})` back to `R(Π^u_k)`.
    pub back: Vec<Mat>,
    pub cond: Vec<f64>,
    pub inv_residual: Vec<f64>,
    pub ranks: Vec<usize>,
}

impl Stepped {
    pub fn new(t0: f64, dt: f64, steps: Vec<Mat>, stable: Vec<Mat>) -> Self {
        let d = stable[0].nrows();
        let unstable: Vec<Mat> = stable.iter().map(|p| Mat::identity(d, d) - p).collect();
        let ranks: Vec<usize> = unstable.iter().map(projection_rank).collect();
        let inv: Vec<(Mat, f64, f64)> = (0..steps.len())
            .into_par_iter()
            .map(|k| {
                let basis = range_basis(&unstable[k], ranks[k]);
                restricted_inverse(&steps[k], &basis, &unstable[k + 1])
            })
            .collect();
        let mut back = Vec::with_capacity(inv.len());
        let mut cond = Vec::with_capacity(inv.len());
        let mut inv_residual = Vec::with_capacity(inv.len());
        for (r, c, res) in inv {
            back.push(r);
            cond.push(c);
            inv_residual.push(res);
        }
        Stepped {
            t0,
            dt,
            steps,
            stable,
            unstable,
            back,
            cond,
            inv_residual,
            ranks,
        }
    }

    pub fn discrete(c: &DiscreteCocycle, cert: &DichotomyCertificate, n_lo: i64, n_hi: i64) -> Result<Self> {
        let steps: Result<Vec<Mat>> = (n_lo..n_hi).into_par_iter().map(|n| c.step(n)).collect();
        let stable: Result<Vec<Mat>> = (n_lo..=n_hi).map(|n| cert.stable_at(n as f64)).collect();
        Ok(Self::new(n_lo as f64, 1.0, steps?, stable?))
    }

    pub fn continuous(
        c: &ContinuousCocycle,
        cert: &DichotomyCertificate,
        t_lo: f64,
        t_hi: f64,
        dt: f64,
    ) -> Result<Self> {
        let n = ((t_hi - t_lo) / dt).round() as usize;
        let steps: Result<Vec<Mat>> = (0..n)
            .into_par_iter()
            .map(|k| c.propagator(t_lo + k as f64 * dt, dt))
            .collect();
        let stable: Result<Vec<Mat>> = (0..=n).map(|k| cert.stable_at(t_lo + k as f64 * dt)).collect();
        Ok(Self::new(t_lo, dt, steps?, stable?))
    }

    pub fn len(&self) -> usize {
        self.stable.len()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Node index of `t`, if it is a node.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let k = x.round();
        if (x - k).abs() > 1e-7 || k < 0.0 || k as usize >= self.len() {
            None
        } else {
            Some(k as usize)
        }
    }

    /// `φ_{j,k} Π^s_k` for `j ≥ k`, reprojecting after each step.
    pub fn forward(&self, k: usize, j: usize) -> Mat {
        let mut e = self.stable[k].clone();
        for i in k..j {
            e = &self.stable[i + 1] * (&self.steps[i] * e);
        }
        e
    }

    /// Backward evolution on the unstable bundle from node `k` to node `j ≤ k`.
    pub fn backward(&self, k: usize, j: usize) -> Mat {
        let mut e = self.unstable[k].clone();
        for i in (j..k).rev() {
            e = &self.unstable[i] * (&self.back[i] * e);
        }
        e
    }

    /// Green function `G(t_n, t_m)` between nodes.
    pub fn green(&self, n: usize, m: usize) -> Mat {
        if n >= m {
            self.forward(m, n)
        } else {
            -self.backward(m, n)
        }
    }
}
