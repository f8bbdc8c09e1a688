//! Per-agent completion machinery: sampled observations, closed-form weight
//! solves, costs, Riemannian gradients, and the gradient preconditioner.
//!
//! Given a subspace estimate U and a column block with observed entries
//! `Omega`, the inner least-squares problem decouples per column: for column
//! j with observed rows `Omega_j`,
//!
//! ```text
//! w_j = (U_{Omega_j}^T U_{Omega_j} + reg I)^{-1} U_{Omega_j}^T x_{Omega_j}
//! ```
//!
//! The local cost is half the squared residual over observed entries, its
//! ambient gradient is `residual · W` (residual kept sparse), and the
//! Riemannian gradient is the horizontal projection of that. Per update the
//! cost is O(|Omega| r^2 + n r^2 + m r); dense m×n matrices are never formed.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grassmann::{project_to_tangent, SubspacePoint, TangentVector};
use crate::par::map_indexed;

/// Observed entries of an m×n block, stored column-grouped and sorted by
/// (column, row). Index pairs are unique.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseObservations {
    n_rows: usize,
    n_cols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseObservations {
    /// Builds from (row, col, value) triples, validating ranges, finiteness,
    /// and uniqueness of index pairs.
    pub fn from_triples(
        n_rows: usize,
        n_cols: usize,
        triples: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(triples.len());
        for &(row, col, value) in triples {
            if row >= n_rows || col >= n_cols {
                return Err(Error::InvalidObservations(format!(
                    "index ({row}, {col}) outside {n_rows}x{n_cols} block"
                )));
            }
            if !value.is_finite() {
                return Err(Error::InvalidObservations(format!(
                    "non-finite value at ({row}, {col})"
                )));
            }
            entries.push((col, row, value));
        }
        entries.sort_unstable_by_key(|&(col, row, _)| (col, row));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::InvalidObservations(format!(
                    "duplicate entry at ({}, {})",
                    pair[0].1, pair[0].0
                )));
            }
        }
        let mut col_ptr = vec![0usize; n_cols + 1];
        for &(col, _, _) in &entries {
            col_ptr[col + 1] += 1;
        }
        for j in 0..n_cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        Ok(Self {
            n_rows,
            n_cols,
            col_ptr,
            row_idx: entries.iter().map(|e| e.1).collect(),
            values: entries.iter().map(|e| e.2).collect(),
        })
    }

    /// An empty block with the given shape (used by consensus-only agents).
    pub fn empty(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            col_ptr: vec![0; n_cols + 1],
            row_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Observed rows and values of column `j`.
    pub fn column(&self, j: usize) -> (&[usize], &[f64]) {
        let lo = self.col_ptr[j];
        let hi = self.col_ptr[j + 1];
        (&self.row_idx[lo..hi], &self.values[lo..hi])
    }

    /// Entries as (row, col, value), in (col, row) storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_cols).flat_map(move |j| {
            let (rows, vals) = self.column(j);
            rows.iter().zip(vals.iter()).map(move |(&i, &v)| (i, j, v))
        })
    }

    /// Mean of squared observed values; 0 for an empty block. Used to scale
    /// the default regularization constant.
    pub fn mean_squared_value(&self) -> f64 {
        if self.values.is_empty() {
            return 0.0;
        }
        self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64
    }
}

/// The n×r weight factor paired with a subspace estimate: the completed
/// block is `U W^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightMatrix {
    matrix: DMatrix<f64>,
}

impl WeightMatrix {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        debug_assert!(matrix.iter().all(|v| v.is_finite()));
        Self { matrix }
    }

    pub fn zeros(n_cols: usize, r: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(n_cols, r),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }
}

/// Weight solve plus everything derived from it in one pass.
pub(crate) struct BlockFit {
    pub weights: WeightMatrix,
    /// Residuals `(U W^T)_ij − x_ij` aligned with the block's storage order.
    pub residuals: Vec<f64>,
    /// Half the sum of squared residuals over observed entries.
    pub cost: f64,
}

fn check_block_dims(u: &SubspacePoint, block: &SparseObservations) -> Result<()> {
    if u.ambient_dim() != block.n_rows() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} rows", u.ambient_dim()),
            got: format!("{} rows", block.n_rows()),
        });
    }
    Ok(())
}

/// Solves every column's normal equations and evaluates the residuals.
/// Columns are independent and run in parallel; assembly order is fixed, so
/// the result does not depend on scheduling.
pub(crate) fn fit_block(
    u: &SubspacePoint,
    block: &SparseObservations,
    reg: f64,
) -> Result<BlockFit> {
    check_block_dims(u, block)?;
    if !(reg.is_finite() && reg >= 0.0) {
        return Err(Error::InvalidConfig(format!("reg must be >= 0, got {reg}")));
    }
    let r = u.subspace_dim();
    let basis = u.basis();
    let n_cols = block.n_cols();

    type ColumnFit = Result<(DVector<f64>, Vec<f64>, f64)>;
    let per_column: Vec<ColumnFit> = map_indexed(n_cols, |j| {
        let (rows, vals) = block.column(j);
        if rows.is_empty() {
            return Ok((DVector::zeros(r), Vec::new(), 0.0));
        }
        // Normal matrix and right-hand side accumulated entrywise.
        let mut gram = DMatrix::<f64>::zeros(r, r);
        let mut rhs = DVector::<f64>::zeros(r);
        let mut urow = vec![0.0; r];
        for (&i, &v) in rows.iter().zip(vals.iter()) {
            for (k, slot) in urow.iter_mut().enumerate() {
                *slot = basis[(i, k)];
            }
            for k1 in 0..r {
                for k2 in 0..=k1 {
                    gram[(k1, k2)] += urow[k1] * urow[k2];
                }
                rhs[k1] += v * urow[k1];
            }
        }
        for k1 in 0..r {
            for k2 in (k1 + 1)..r {
                gram[(k1, k2)] = gram[(k2, k1)];
            }
            gram[(k1, k1)] += reg;
        }
        let chol = gram.cholesky().ok_or(Error::SingularColumn { col: j })?;
        let w = chol.solve(&rhs);
        let mut residuals = Vec::with_capacity(rows.len());
        let mut sq = 0.0;
        for (&i, &v) in rows.iter().zip(vals.iter()) {
            let mut pred = 0.0;
            for k in 0..r {
                pred += basis[(i, k)] * w[k];
            }
            let res = pred - v;
            sq += res * res;
            residuals.push(res);
        }
        Ok((w, residuals, sq))
    });

    let mut weights = DMatrix::zeros(n_cols, r);
    let mut residuals = Vec::with_capacity(block.len());
    let mut total_sq = 0.0;
    for (j, col) in per_column.into_iter().enumerate() {
        let (w, res, sq) = col?;
        for k in 0..r {
            weights[(j, k)] = w[k];
        }
        residuals.extend(res);
        total_sq += sq;
    }
    Ok(BlockFit {
        weights: WeightMatrix::new(weights),
        residuals,
        cost: 0.5 * total_sq,
    })
}

/// Closed-form inner least-squares solution for the block at subspace `u`.
/// Columns with no observations get zero weights.
pub fn solve_weights(
    u: &SubspacePoint,
    block: &SparseObservations,
    reg: f64,
) -> Result<WeightMatrix> {
    Ok(fit_block(u, block, reg)?.weights)
}

/// Half the squared residual of `U W_U^T` against the observed entries.
pub fn local_cost(u: &SubspacePoint, block: &SparseObservations, reg: f64) -> Result<f64> {
    Ok(fit_block(u, block, reg)?.cost)
}

/// Riemannian gradient of the local completion cost at `u`, with the weight
/// matrix that produced it.
///
/// Ambient gradient `residual · W` is accumulated from the sparse residual,
/// then projected to the horizontal space.
pub fn riemannian_gradient(
    u: &SubspacePoint,
    block: &SparseObservations,
    reg: f64,
) -> Result<(TangentVector, WeightMatrix)> {
    let fit = fit_block(u, block, reg)?;
    let r = u.subspace_dim();
    let w = fit.weights.matrix();
    let mut ambient = DMatrix::zeros(u.ambient_dim(), r);
    let mut idx = 0;
    for j in 0..block.n_cols() {
        let (rows, _) = block.column(j);
        for &i in rows {
            let res = fit.residuals[idx];
            for k in 0..r {
                ambient[(i, k)] += res * w[(j, k)];
            }
            idx += 1;
        }
    }
    let grad = project_to_tangent(u, &ambient)?;
    Ok((grad, fit.weights))
}

/// Applies the curvature scaling `xi -> xi (W^T W + rho I)^{-1}`.
///
/// The scaling is an r×r right-multiplication, so a horizontal `xi` stays
/// horizontal. Errors when the scaling matrix is not positive definite
/// (possible only with rho = 0 and rank-deficient W).
pub fn precondition(xi: &TangentVector, w: &WeightMatrix, rho: f64) -> Result<TangentVector> {
    let r = xi.direction.ncols();
    if w.matrix().ncols() != r {
        return Err(Error::DimensionMismatch {
            expected: format!("{r} weight columns"),
            got: format!("{}", w.matrix().ncols()),
        });
    }
    if !(rho.is_finite() && rho >= 0.0) {
        return Err(Error::InvalidConfig(format!("rho must be >= 0, got {rho}")));
    }
    let mut scaling = w.matrix().transpose() * w.matrix();
    for k in 0..r {
        scaling[(k, k)] += rho;
    }
    let chol = scaling.cholesky().ok_or(Error::NotPositiveDefinite)?;
    let inv = chol.inverse();
    Ok(TangentVector {
        direction: &xi.direction * inv,
    })
}

/// RMSE and MAE of `U W^T` against held-out entries.
pub fn test_error(
    u: &SubspacePoint,
    w: &WeightMatrix,
    heldout: &SparseObservations,
) -> Result<(f64, f64)> {
    check_block_dims(u, heldout)?;
    if heldout.is_empty() {
        return Err(Error::EmptyHeldout);
    }
    if w.matrix().nrows() != heldout.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} weight rows", heldout.n_cols()),
            got: format!("{}", w.matrix().nrows()),
        });
    }
    let r = u.subspace_dim();
    let basis = u.basis();
    let wm = w.matrix();
    let mut sq = 0.0;
    let mut abs = 0.0;
    for (i, j, v) in heldout.iter() {
        let mut pred = 0.0;
        for k in 0..r {
            pred += basis[(i, k)] * wm[(j, k)];
        }
        let res = pred - v;
        sq += res * res;
        abs += res.abs();
    }
    let count = heldout.len() as f64;
    Ok(((sq / count).sqrt(), abs / count))
}
