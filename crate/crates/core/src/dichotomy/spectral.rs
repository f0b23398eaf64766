//! Invariant-subspace splitting through an ordered complex Schur form.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::Mat;

pub const DEFAULT_GAP_TOL: f64 = 1e-8;

type CMat = DMatrix<Complex64>;

/// Result of splitting the spectrum of a real matrix.
#[derive(Clone, Debug)]
pub struct SpectralSplit {
    /// Projection onto the selected ("unstable") invariant subspace along the complementary one.
    pub unstable: Mat,
    /// Distance of the spectrum from the splitting curve.
    pub gap: f64,
    pub eigenvalues: Vec<Complex64>,
}

impl SpectralSplit {
    pub fn stable(&self) -> Mat {
        Mat::identity(self.unstable.nrows(), self.unstable.ncols()) - &self.unstable
    }

    pub fn unstable_rank(&self) -> usize {
        self.unstable.trace().round().max(0.0) as usize
    }
}

/// Swaps the adjacent diagonal entries `k`, `k+1` of the upper-triangular `t`,
/// updating the unitary factor `q` so that `q t q^H` is unchanged.
fn swap_adjacent(t: &mut CMat, q: &mut CMat, k: usize) {
    let a = t[(k, k)];
    let b = t[(k, k + 1)];
    let c = t[(k + 1, k + 1)];
    // eigenvector of the 2×2 block for eigenvalue c
    let x1 = b;
    let x2 = c - a;
    let nrm = (x1.norm_sqr() + x2.norm_sqr()).sqrt();
    if nrm == 0.0 {
        return;
    }
    let g1 = x1 / nrm;
    let g2 = x2 / nrm;
    let n = t.nrows();
    // columns k, k+1 of t and q are multiplied by G = [[g1, -conj g2], [g2, conj g1]]
    for i in 0..n {
        let u = t[(i, k)];
        let v = t[(i, k + 1)];
        t[(i, k)] = u * g1 + v * g2;
        t[(i, k + 1)] = -u * g2.conj() + v * g1.conj();
        let u = q[(i, k)];
        let v = q[(i, k + 1)];
        q[(i, k)] = u * g1 + v * g2;
        q[(i, k + 1)] = -u * g2.conj() + v * g1.conj();
    }
    // rows k, k+1 of t are multiplied by G^H
    for j in 0..n {
        let u = t[(k, j)];
        let v = t[(k + 1, j)];
        t[(k, j)] = g1.conj() * u + g2.conj() * v;
        t[(k + 1, j)] = -g2 * u + g1 * v;
    }
    t[(k + 1, k)] = Complex64::new(0.0, 0.0);
}

/// Solves `T11 X − X T22 = C` for upper-triangular `T11`, `T22` with disjoint spectra.
fn triangular_sylvester(t11: &CMat, t22: &CMat, c: &CMat) -> CMat {
    let r = t11.nrows();
    let s = t22.nrows();
    let mut x = CMat::zeros(r, s);
    for j in 0..s {
        // (T11 − t22[j,j]) x_j = c_j + Σ_{i<j} x_i t22[i,j]
        let mut rhs: Vec<Complex64> = (0..r).map(|i| c[(i, j)]).collect();
        for i in 0..j {
            let f = t22[(i, j)];
            for (row, v) in rhs.iter_mut().enumerate() {
                *v += x[(row, i)] * f;
            }
        }
        let shift = t22[(j, j)];
        for row in (0..r).rev() {
            let mut acc = rhs[row];
            for col in row + 1..r {
                acc -= t11[(row, col)] * x[(col, j)];
            }
            x[(row, j)] = acc / (t11[(row, row)] - shift);
        }
    }
    x
}

/// Splits the spectrum of `a` by `select` (true = unstable part) and returns the
/// spectral projection onto the selected part. `distance` measures how far an
/// eigenvalue is from the splitting curve; the minimum is reported as the gap.
pub fn split_spectrum(
    a: &Mat,
    select: impl Fn(Complex64) -> bool,
    distance: impl Fn(Complex64) -> f64,
    gap_tol: f64,
) -> Result<SpectralSplit> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::Domain(format!("matrix must be square, got {}×{}", n, a.ncols())));
    }
    if n == 0 {
        return Ok(SpectralSplit {
            unstable: Mat::zeros(0, 0),
            gap: f64::INFINITY,
            eigenvalues: vec![],
        });
    }
    let ac: CMat = a.map(|x| Complex64::new(x, 0.0));
    let schur = ac.schur();
    let (mut q, mut t) = schur.unpack();
    let eigenvalues: Vec<Complex64> = (0..n).map(|i| t[(i, i)]).collect();
    let gap = eigenvalues
        .iter()
        .map(|&l| distance(l))
        .fold(f64::INFINITY, f64::min);
    if gap < gap_tol {
        return Err(Error::NonHyperbolic {
            min_abs_real: gap,
            gap_tol,
        });
    }
    // bubble selected eigenvalues to the top-left
    let mut changed = true;
    while changed {
        changed = false;
        for k in 0..n - 1 {
            if !select(t[(k, k)]) && select(t[(k + 1, k + 1)]) {
                swap_adjacent(&mut t, &mut q, k);
                changed = true;
            }
        }
    }
    let r = (0..n).filter(|&i| select(t[(i, i)])).count();
    let mut p = CMat::zeros(n, n);
    if r > 0 {
        for i in 0..r {
            p[(i, i)] = Complex64::new(1.0, 0.0);
        }
        if r < n {
            let t11 = t.view((0, 0), (r, r)).into_owned();
            let t22 = t.view((r, r), (n - r, n - r)).into_owned();
            let t12 = t.view((0, r), (r, n - r)).into_owned();
            let x = triangular_sylvester(&t11, &t22, &t12);
            p.view_mut((0, r), (r, n - r)).copy_from(&x);
        }
    }
    let full = &q * p * q.adjoint();
    Ok(SpectralSplit {
        unstable: full.map(|z| z.re),
        gap,
        eigenvalues,
    })
}

/// Riesz projection onto the generalized eigenspace with `Re λ > 0`.
///
/// Fails with [`Error::NonHyperbolic`] if some eigenvalue has `|Re λ| < gap_tol`.
pub fn spectral_projection_with_tol(a: &Mat, gap_tol: f64) -> Result<SpectralSplit> {
    split_spectrum(a, |l| l.re > 0.0, |l| l.re.abs(), gap_tol)
}

pub fn spectral_projection(a: &Mat) -> Result<SpectralSplit> {
    spectral_projection_with_tol(a, DEFAULT_GAP_TOL)
}

/// Splitting of a discrete-time step: unstable part is `|μ| > 1`; the gap is
/// `min |ln |μ||`.
pub fn discrete_spectral_projection(a: &Mat, gap_tol: f64) -> Result<SpectralSplit> {
    split_spectrum(
        a,
        |l| l.norm() > 1.0,
        |l| {
            let m = l.norm();
            if m == 0.0 {
                f64::INFINITY
            } else {
                m.ln().abs()
            }
        },
        gap_tol,
    )
}
