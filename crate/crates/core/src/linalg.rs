//! Dense linear-algebra helpers shared across modules.
//!
//! Matrices are small (dimension at most a few hundred) and dense, so every
//! routine here works on `nalgebra::DMatrix<f64>` without sparsity tricks.

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Eigenvalues of the Gram matrix `MᵀM` or `MMᵀ` (whichever is smaller), clamped at zero.
fn gram_eigenvalues(m: &Mat) -> Vec<f64> {
    let g = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    g.symmetric_eigenvalues().iter().map(|l| l.max(0.0)).collect()
}

/// Operator norm induced by the Euclidean norm (largest singular value).
///
/// Computed from the symmetric eigenproblem of the Gram matrix: the SVD in
/// nalgebra 0.35 can return an inaccurate factorization for nearly
/// rank-deficient 2×2 inputs, which are common here (oblique projections).
pub fn op_norm(m: &Mat) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    gram_eigenvalues(m).into_iter().fold(0.0, f64::max).sqrt()
}

/// Matrix exponential (Padé scaling and squaring).
pub fn expm(m: &Mat) -> Mat {
    m.clone().exp()
}

/// `‖P² − P‖`.
pub fn idempotence_residual(p: &Mat) -> f64 {
    op_norm(&(p * p - p))
}

/// Rank of a projection, read off its trace.
pub fn projection_rank(p: &Mat) -> usize {
    let tr = p.trace();
    if tr <= 0.5 {
        0
    } else {
        tr.round() as usize
    }
}

/// Orthonormal basis (as columns) of the range of a projection of known rank.
///
/// Nonzero singular values of a projection are at least 1, so the leading
/// eigenvectors of `PPᵀ` are separated from its kernel by a gap of at least 1.
pub fn range_basis(p: &Mat, rank: usize) -> Mat {
    let d = p.nrows();
    if rank == 0 {
        return Mat::zeros(d, 0);
    }
    let eig = (p * p.transpose()).symmetric_eigen();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut basis = Mat::zeros(d, rank);
    for (j, &k) in order.iter().take(rank).enumerate() {
        basis.set_column(j, &eig.eigenvectors.column(k));
    }
    basis
}

/// Extreme singular values `(σ_max, σ_min)` of a matrix with at least as many
/// rows as columns; `(0, 0)` for empty matrices. `σ_min` carries an absolute
/// error of order `√ε·σ_max`.
pub fn singular_extremes(m: &Mat) -> (f64, f64) {
    if m.ncols() == 0 || m.nrows() == 0 {
        return (0.0, 0.0);
    }
    let ev = gram_eigenvalues(m);
    let max = ev.iter().cloned().fold(0.0, f64::max).sqrt();
    let min = ev.iter().cloned().fold(f64::INFINITY, f64::min).sqrt();
    (max, min)
}

/// The inverse of `step` restricted to the range of `from_basis`, as a map
/// defined on the range of `to_proj`.
///
/// Returns `(R, cond, residual)` where `R = U (S U)^+ P_to`, `cond` is the
/// condition number of `S U` and `residual = ‖Q Qᵀ P_to − P_to‖` with `Q` the
/// orthonormal factor of `S U`; it vanishes when `S` maps `R(U)` onto `R(P_to)`.
pub fn restricted_inverse(step: &Mat, from_basis: &Mat, to_proj: &Mat) -> (Mat, f64, f64) {
    let d = step.nrows();
    if from_basis.ncols() == 0 {
        let residual = op_norm(to_proj);
        return (Mat::zeros(d, d), 1.0, residual);
    }
    let su = step * from_basis;
    let (smax, smin) = singular_extremes(&su);
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let qr = su.qr();
    let q = qr.q();
    let r = qr.r();
    let residual = op_norm(&(&q * (q.transpose() * to_proj) - to_proj));
    let rhs = q.transpose() * to_proj;
    let x = r
        .solve_upper_triangular(&rhs)
        .unwrap_or_else(|| Mat::from_element(r.ncols(), d, f64::NAN));
    let cond = if x.iter().all(|v| v.is_finite()) { cond } else { f64::INFINITY };
    (from_basis * x, cond, residual)
}

/// Max-abs over all entries; used for cheap finiteness checks.
pub fn all_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Radical-inverse (van der Corput) in the given prime base.
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

const PRIMES: [u64; 24] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89,
];

/// Halton point in `[0,1)^dim` (dimensions beyond the prime table wrap around
/// with a scrambled index).
pub fn halton(index: u64, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|k| {
            let base = PRIMES[k % PRIMES.len()];
            let idx = index + 1 + (k / PRIMES.len()) as u64 * 7919;
            radical_inverse(idx, base)
        })
        .collect()
}

/// Deterministic cloud of points in the closed ball `B(center, radius)`.
///
/// Always contains the center and the `2d` axis points on the boundary; the
/// remaining points alternate between interior Halton samples and Halton
/// directions pushed to the boundary.
pub fn ball_cloud(center: &Vector, radius: f64, count: usize) -> Vec<Vector> {
    let d = center.len();
    let mut pts = Vec::with_capacity(count.max(2 * d + 1));
    pts.push(center.clone());
    for i in 0..d {
        for s in [-1.0, 1.0] {
            let mut p = center.clone();
            p[i] += s * radius;
            pts.push(p);
        }
    }
    if d == 1 {
        // uniform grid on the interval, endpoints already present
        let extra = count.saturating_sub(pts.len());
        for k in 1..=extra {
            let x = -1.0 + 2.0 * k as f64 / (extra + 1) as f64;
            let mut p = center.clone();
            p[0] += radius * x;
            pts.push(p);
        }
        return pts;
    }
    let mut idx = 0u64;
    while pts.len() < count {
        let u = halton(idx, d + 1);
        idx += 1;
        let dir = Vector::from_iterator(d, u[..d].iter().map(|x| 2.0 * x - 1.0));
        let n = dir.norm();
        if n < 1e-12 {
            continue;
        }
        let r = if idx % 2 == 0 {
            radius
        } else {
            radius * u[d].powf(1.0 / d as f64)
        };
        pts.push(center + dir * (r / n));
    }
    pts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn op_norm_of_diagonal_is_max_abs_entry() {
        let m = Mat::from_diagonal(&Vector::from_vec(vec![0.5, -3.0, 2.0]));
        assert!((op_norm(&m) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn restricted_inverse_of_saddle_unstable_block() {
        let s = Mat::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 2.0]);
        let pu = Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        let u = range_basis(&pu, 1);
        let (r, cond, res) = restricted_inverse(&s, &u, &pu);
        assert!((r[(1, 1)] - 0.5).abs() < 1e-12);
        assert!(r[(0, 0)].abs() < 1e-12);
        assert!((cond - 1.0).abs() < 1e-12);
        assert!(res < 1e-12);
    }

    #[test]
    fn nearly_rank_one_projection_is_handled() {
        // an oblique rank-one projection with entries near roundoff
        let ps = Mat::from_column_slice(
            2,
            2,
            &[1.0000444503712485, -0.006667259338283313, 0.006667259338283313, -4.445037124828533e-5],
        );
        let pu = Mat::identity(2, 2) - &ps;
        let sigma2 = (pu.transpose() * &pu).symmetric_eigenvalues().max();
        assert!((op_norm(&pu) - sigma2.sqrt()).abs() < 1e-14);
        let u = range_basis(&pu, 1);
        assert!((&pu * &u - &u).norm() < 1e-12);
        let s = Mat::from_row_slice(2, 2, &[0.5, -0.01, 0.01, 2.0]);
        let (_, _, res) = restricted_inverse(&s, &u, &pu);
        assert!(res < 1e-12, "{res}");
    }

    #[test]
    fn ball_cloud_stays_in_ball() {
        let c = Vector::from_vec(vec![1.0, -1.0, 0.5]);
        for p in ball_cloud(&c, 0.3, 50) {
            assert!((p - &c).norm() <= 0.3 + 1e-12);
        }
    }
}
