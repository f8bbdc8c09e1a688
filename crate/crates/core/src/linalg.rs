//! In-house thin SVD by one-sided Jacobi rotations.
//!
//! The geometry maps factor matrices that are structurally rank-deficient
//! (a tangent at U has rank at most min(r, m-r)) or have clustered singular
//! values near 1, and the general-purpose bidiagonalization SVD was observed
//! to mis-converge on exactly those inputs (reconstruction error ~1e-2 on a
//! 4x3 rank-1 matrix). One-sided Jacobi orthogonalizes the columns directly;
//! it is simple, deterministic, and accurate in the small-column regime used
//! here (r <= ~20).

use nalgebra::DMatrix;

/// Thin SVD `mat = u * diag(s) * v^T` with `u` of the input's shape,
/// `s` nonnegative sorted descending, and `v` square orthogonal.
/// Columns of `u` belonging to zero singular values are zero.
pub(crate) struct ThinSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v: DMatrix<f64>,
}

/// One-sided Jacobi: rotate column pairs of a working copy until all pairs
/// are orthogonal; column norms are then the singular values and the
/// accumulated rotations form V. Requires nrows >= ncols.
pub(crate) fn thin_svd(mat: &DMatrix<f64>) -> ThinSvd {
    let (rows, cols) = mat.shape();
    assert!(
        rows >= cols,
        "thin_svd expects a tall matrix, got {rows}x{cols}"
    );
    let mut u = mat.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);

    let eps = f64::EPSILON;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut rotated = false;
        for p in 0..cols.saturating_sub(1) {
            for q in (p + 1)..cols {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    alpha += up * up;
                    beta += uq * uq;
                    gamma += up * uq;
                }
                if gamma == 0.0 || gamma * gamma <= eps * eps * alpha * beta {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..rows {
                    let up = u[(i, p)];
                    let uq = u[(i, q)];
                    u[(i, p)] = c * up - s * uq;
                    u[(i, q)] = s * up + c * uq;
                }
                for i in 0..cols {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    // Column norms are the singular values; sort descending.
    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| u.column(j).norm()).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).expect("finite norms"));

    let mut u_sorted = DMatrix::<f64>::zeros(rows, cols);
    let mut v_sorted = DMatrix::<f64>::zeros(cols, cols);
    let mut singular_values = Vec::with_capacity(cols);
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        singular_values.push(sigma);
        if sigma > 0.0 {
            for i in 0..rows {
                u_sorted[(i, dst)] = u[(i, src)] / sigma;
            }
        }
        for i in 0..cols {
            v_sorted[(i, dst)] = v[(i, src)];
        }
    }
    ThinSvd {
        u: u_sorted,
        singular_values,
        v: v_sorted,
    }
}
