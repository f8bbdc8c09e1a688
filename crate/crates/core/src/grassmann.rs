//! Closed-form Riemannian geometry of the Grassmann manifold Gr(r, m).
//!
//! A point is an r-dimensional subspace of R^m, represented by an m×r matrix
//! with orthonormal columns; `U` and `U·O` (O any r×r orthogonal matrix)
//! represent the same subspace. Tangent vectors at `U` live in the horizontal
//! space `{xi : U^T xi = 0}`.
//!
//! All maps are exact closed forms built on the thin SVD:
//!
//! ```text
//! Exp_U(xi) = U V cos(S) V^T + W sin(S) V^T          xi = W S V^T
//! Log_U(Y)  = P arctan(S) Q^T     P S Q^T = svd((Y − U(U^T Y)) (U^T Y)^{-1})
//! d(U, Y)   = ||Log_U(Y)||_F = sqrt(sum_k theta_k^2)
//! ```
//!
//! where the trig functions act on the diagonal only and `theta_k` are the
//! principal angles between the subspaces, `arccos` of the singular values of
//! `U^T Y`. `Log` is undefined when a principal angle reaches pi/2 (the cut
//! locus); we report that instead of guessing a continuation.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::thin_svd;

/// Smallest singular value of `from^T to` for which the logarithm map is
/// still evaluated; below this, `(from^T to)^{-1}` is numerically meaningless.
pub const CUT_LOCUS_TOL: f64 = 1e-12;

/// Orthonormality tolerance for accepting an external basis matrix.
pub const ORTHO_TOL: f64 = 1e-10;

/// An r-dimensional subspace of R^m, stored as one orthonormal representative.
#[derive(Clone, Debug, PartialEq)]
pub struct SubspacePoint {
    basis: DMatrix<f64>,
}

impl SubspacePoint {
    /// Wraps an m×r matrix after checking dimensions and orthonormality.
    pub fn from_basis(basis: DMatrix<f64>) -> Result<Self> {
        let (m, r) = basis.shape();
        check_dims(m, r)?;
        let point = Self { basis };
        let err = point.orthonormality_error();
        if !err.is_finite() || err > ORTHO_TOL {
            return Err(Error::InvalidObservations(format!(
                "basis is not orthonormal: ||U^T U - I|| = {err:.3e}"
            )));
        }
        Ok(point)
    }

    /// Internal constructor for matrices that are orthonormal by construction.
    fn from_orthonormal(basis: DMatrix<f64>) -> Self {
        debug_assert!({
            let p = Self {
                basis: basis.clone(),
            };
            p.orthonormality_error() < 1e-9
        });
        Self { basis }
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn subspace_dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// `||U^T U - I||_F`, the drift from exact orthonormality.
    pub fn orthonormality_error(&self) -> f64 {
        let r = self.basis.ncols();
        let gram = self.basis.transpose() * &self.basis;
        (gram - DMatrix::identity(r, r)).norm()
    }
}

/// A direction of motion for a subspace: an m×r matrix with `base^T dir = 0`.
///
/// The base point is not carried along; every operation that consumes a
/// tangent vector takes the base explicitly, and pairing a vector with the
/// wrong base is a caller bug checked in tests via [`TangentVector::is_tangent_at`].
#[derive(Clone, Debug)]
pub struct TangentVector {
    pub direction: DMatrix<f64>,
}

impl TangentVector {
    pub fn zero(m: usize, r: usize) -> Self {
        Self {
            direction: DMatrix::zeros(m, r),
        }
    }

    pub fn norm(&self) -> f64 {
        self.direction.norm()
    }

    /// `||base^T dir||` within `tol`, the horizontal-space condition.
    pub fn is_tangent_at(&self, base: &SubspacePoint, tol: f64) -> bool {
        if self.direction.shape() != base.basis.shape() {
            return false;
        }
        (base.basis.transpose() * &self.direction).norm() <= tol
    }
}

fn check_dims(m: usize, r: usize) -> Result<()> {
    if r < 1 || m <= r {
        return Err(Error::InvalidDimensions { m, r });
    }
    Ok(())
}

fn check_same_shape(a: &SubspacePoint, b: &SubspacePoint) -> Result<()> {
    if a.basis.shape() != b.basis.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", a.ambient_dim(), a.subspace_dim()),
            got: format!("{}x{}", b.ambient_dim(), b.subspace_dim()),
        });
    }
    Ok(())
}

/// Thin QR pass with the sign convention diag(R) >= 0, so that a matrix that
/// is already (nearly) orthonormal comes back (nearly) unchanged.
fn orthonormalize(m: DMatrix<f64>) -> DMatrix<f64> {
    let r = m.ncols();
    let qr = m.qr();
    let rfac = qr.r();
    let mut q = qr.q();
    for j in 0..r {
        if rfac[(j, j)] < 0.0 {
            for i in 0..q.nrows() {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Draws a uniformly random subspace: the orthonormal factor of an m×r
/// standard-Gaussian matrix. Deterministic given the state of `rng`.
pub fn random_point<R: Rng + ?Sized>(m: usize, r: usize, rng: &mut R) -> Result<SubspacePoint> {
    check_dims(m, r)?;
    let mut a = DMatrix::zeros(m, r);
    for j in 0..r {
        for i in 0..m {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(SubspacePoint::from_orthonormal(orthonormalize(a)))
}

/// Horizontal projection `ambient − base (base^T ambient)`.
pub fn project_to_tangent(base: &SubspacePoint, ambient: &DMatrix<f64>) -> Result<TangentVector> {
    if ambient.shape() != base.basis.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", base.ambient_dim(), base.subspace_dim()),
            got: format!("{}x{}", ambient.nrows(), ambient.ncols()),
        });
    }
    let coeff = base.basis.transpose() * ambient;
    Ok(TangentVector {
        direction: ambient - &base.basis * coeff,
    })
}

/// Scales each column of `u` by `s[j]`.
fn scale_columns(u: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = u.clone();
    for (j, &sj) in s.iter().enumerate() {
        for i in 0..out.nrows() {
            out[(i, j)] *= sj;
        }
    }
    out
}

/// Moves `base` along the geodesic defined by `scale * tangent`.
///
/// With `scale * tangent = W S V^T` (thin SVD) the endpoint is
/// `U V cos(S) V^T + W sin(S) V^T`, re-orthonormalized by a QR pass to keep
/// drift from accumulating over thousands of updates. Any stepsize is folded
/// into `scale` before the single SVD.
pub fn exp_map(base: &SubspacePoint, tangent: &TangentVector, scale: f64) -> Result<SubspacePoint> {
    if tangent.direction.shape() != base.basis.shape() {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", base.ambient_dim(), base.subspace_dim()),
            got: format!(
                "{}x{}",
                tangent.direction.nrows(),
                tangent.direction.ncols()
            ),
        });
    }
    if !scale.is_finite() || tangent.direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            context: "exp_map input".into(),
        });
    }
    let xi = &tangent.direction * scale;
    if xi.norm() == 0.0 {
        return Ok(base.clone());
    }
    let svd = thin_svd(&xi);
    let cos: Vec<f64> = svd.singular_values.iter().map(|s| s.cos()).collect();
    let sin: Vec<f64> = svd.singular_values.iter().map(|s| s.sin()).collect();
    let v_t = svd.v.transpose();
    let rotated =
        &base.basis * (scale_columns(&svd.v, &cos) * &v_t) + scale_columns(&svd.u, &sin) * &v_t;
    Ok(SubspacePoint::from_orthonormal(orthonormalize(rotated)))
}

/// Logarithm map: the tangent vector at `from` whose geodesic reaches `to`.
///
/// `P arctan(S) Q^T` with `P S Q^T` the thin SVD of
/// `(to − from (from^T to)) (from^T to)^{-1}`. Errors with
/// [`Error::SingularOverlap`] when the smallest singular value of
/// `from^T to` is below [`CUT_LOCUS_TOL`].
pub fn log_map(from: &SubspacePoint, to: &SubspacePoint) -> Result<TangentVector> {
    check_same_shape(from, to)?;
    let overlap = from.basis.transpose() * &to.basis;
    let overlap_svd = thin_svd(&overlap);
    let min_sv = overlap_svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !min_sv.is_finite() || min_sv < CUT_LOCUS_TOL {
        return Err(Error::SingularOverlap { min_sv });
    }
    // overlap^{-1} from its SVD: V diag(1/s) U^T.
    let inv_s: Vec<f64> = overlap_svd
        .singular_values
        .iter()
        .map(|s| 1.0 / s)
        .collect();
    let overlap_inv = scale_columns(&overlap_svd.v, &inv_s) * overlap_svd.u.transpose();

    let residual = (&to.basis - &from.basis * overlap) * overlap_inv;
    let svd = thin_svd(&residual);
    let angles: Vec<f64> = svd.singular_values.iter().map(|s| s.atan()).collect();
    Ok(TangentVector {
        direction: scale_columns(&svd.u, &angles) * svd.v.transpose(),
    })
}

/// Geodesic distance `||Log_a(b)||_F`; errors where the log map does.
pub fn geodesic_distance(a: &SubspacePoint, b: &SubspacePoint) -> Result<f64> {
    Ok(log_map(a, b)?.norm())
}

/// Principal angles `theta_k = arccos(sigma_k(a^T b))`, ascending, each in
/// [0, pi/2]. Defined for every pair, orthogonal subspaces included; serves
/// as the independent cross-check for [`geodesic_distance`].
///
/// Angles below pi/4 are evaluated through the complement's sine,
/// `sigma_k((I − a a^T) b) = sin(theta_k)`, because arccos near 1 loses half
/// the significant digits; the two routes describe the same angles.
pub fn principal_angles(a: &SubspacePoint, b: &SubspacePoint) -> Result<Vec<f64>> {
    check_same_shape(a, b)?;
    let overlap = a.basis.transpose() * &b.basis;
    let residual = &b.basis - &a.basis * &overlap;
    let cosines = thin_svd(&overlap).singular_values;
    let mut sines = thin_svd(&residual).singular_values;
    sines.reverse();
    Ok(cosines
        .into_iter()
        .zip(sines)
        .map(|(c, s)| {
            if c * c > 0.5 {
                s.clamp(0.0, 1.0).asin()
            } else {
                c.clamp(0.0, 1.0).acos()
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn unit_line(m: usize, axis: usize) -> SubspacePoint {
        let mut basis = DMatrix::zeros(m, 1);
        basis[(axis, 0)] = 1.0;
        SubspacePoint::from_basis(basis).unwrap()
    }

    fn line(m: usize, coords: &[f64]) -> SubspacePoint {
        let v = DMatrix::from_column_slice(m, 1, coords);
        let n = v.norm();
        SubspacePoint::from_basis(v / n).unwrap()
    }

    #[test]
    fn random_point_is_orthonormal_and_square_case_works() {
        // m=2, r=2 is rejected (m > r required), but m=3, r=2 is exact.
        assert!(random_point(2, 2, &mut rng(0)).is_err());
        let p = random_point(3, 2, &mut rng(0)).unwrap();
        assert!(p.orthonormality_error() < 1e-12);
    }

    #[test]
    fn random_point_is_deterministic() {
        let a = random_point(5, 2, &mut rng(42)).unwrap();
        let b = random_point(5, 2, &mut rng(42)).unwrap();
        assert_eq!(a.basis(), b.basis());
    }

    #[test]
    fn random_points_are_distinct() {
        let a = random_point(100, 5, &mut rng(7)).unwrap();
        let b = random_point(100, 5, &mut rng(8)).unwrap();
        let angles = principal_angles(&a, &b).unwrap();
        assert!(angles.iter().all(|&t| t > 1e-3));
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(matches!(
            random_point(3, 0, &mut rng(0)),
            Err(Error::InvalidDimensions { .. })
        ));
        assert!(matches!(
            random_point(2, 3, &mut rng(0)),
            Err(Error::InvalidDimensions { .. })
        ));
    }

    #[test]
    fn projection_of_base_is_zero() {
        let p = random_point(6, 3, &mut rng(1)).unwrap();
        let t = project_to_tangent(&p, &p.basis().clone()).unwrap();
        assert!(t.norm() < 1e-14);
    }

    #[test]
    fn projection_is_idempotent() {
        let p = random_point(6, 3, &mut rng(2)).unwrap();
        let mut raw = DMatrix::zeros(6, 3);
        let mut r = rng(3);
        raw.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
        let once = project_to_tangent(&p, &raw).unwrap();
        let twice = project_to_tangent(&p, &once.direction).unwrap();
        assert_relative_eq!(once.direction, twice.direction, epsilon = 1e-13);
        assert!(once.is_tangent_at(&p, 1e-12));
    }

    #[test]
    fn projection_subtracts_first_axis_component() {
        let base = unit_line(3, 0);
        let ambient = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 3.0]);
        let t = project_to_tangent(&base, &ambient).unwrap();
        assert_relative_eq!(t.direction[(0, 0)], 0.0);
        assert_relative_eq!(t.direction[(1, 0)], 2.0);
        assert_relative_eq!(t.direction[(2, 0)], 3.0);
    }

    #[test]
    fn exp_of_zero_is_base() {
        let p = random_point(7, 2, &mut rng(4)).unwrap();
        let out = exp_map(&p, &TangentVector::zero(7, 2), 1.0).unwrap();
        assert_eq!(out.basis(), p.basis());
    }

    #[test]
    fn exp_rotates_a_line_in_the_plane() {
        // Great-circle oracle in the (e1, e2) plane: moving from e1 along
        // t*e2 lands on span(cos t, sin t).
        let base = unit_line(2, 0);
        let e2 = TangentVector {
            direction: DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
        };
        let quarter = exp_map(&base, &e2, std::f64::consts::FRAC_PI_2).unwrap();
        let angles = principal_angles(&quarter, &unit_line(2, 1)).unwrap();
        assert!(angles[0] < 1e-12);

        let eighth = exp_map(&base, &e2, std::f64::consts::FRAC_PI_4).unwrap();
        let diag = line(2, &[1.0, 1.0]);
        let angles = principal_angles(&eighth, &diag).unwrap();
        assert!(angles[0] < 1e-12);
    }

    #[test]
    fn exp_rejects_non_finite() {
        let p = random_point(4, 2, &mut rng(5)).unwrap();
        let mut t = TangentVector::zero(4, 2);
        t.direction[(0, 0)] = f64::NAN;
        assert!(matches!(exp_map(&p, &t, 1.0), Err(Error::NonFinite { .. })));
        assert!(matches!(
            exp_map(&p, &TangentVector::zero(4, 2), f64::INFINITY),
            Err(Error::NonFinite { .. })
        ));
    }

    #[test]
    fn log_of_same_point_is_zero() {
        let p = random_point(9, 3, &mut rng(6)).unwrap();
        let t = log_map(&p, &p).unwrap();
        assert!(t.norm() < 1e-7);
    }

    #[test]
    fn log_recovers_plane_rotation() {
        // from = e1, to = (e1+e2)/sqrt(2): direction (pi/4) e2.
        let from = unit_line(2, 0);
        let to = line(2, &[1.0, 1.0]);
        let t = log_map(&from, &to).unwrap();
        assert_relative_eq!(t.direction[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(
            t.direction[(1, 0)],
            std::f64::consts::FRAC_PI_4,
            epsilon = 1e-12
        );
        assert!(t.is_tangent_at(&from, 1e-12));
    }

    #[test]
    fn log_fails_at_cut_locus() {
        let from = unit_line(2, 0);
        let to = unit_line(2, 1);
        assert!(matches!(
            log_map(&from, &to),
            Err(Error::SingularOverlap { .. })
        ));
    }

    #[test]
    fn distance_matches_principal_angle_oracle() {
        let a = random_point(20, 3, &mut rng(11)).unwrap();
        let b = random_point(20, 3, &mut rng(12)).unwrap();
        let d = geodesic_distance(&a, &b).unwrap();
        let oracle: f64 = principal_angles(&a, &b)
            .unwrap()
            .iter()
            .map(|t| t * t)
            .sum::<f64>()
            .sqrt();
        assert_relative_eq!(d, oracle, epsilon = 1e-8);
    }

    #[test]
    fn distance_of_known_pair() {
        let a = unit_line(2, 0);
        let b = line(2, &[1.0, 1.0]);
        let d = geodesic_distance(&a, &b).unwrap();
        assert_relative_eq!(d, std::f64::consts::FRAC_PI_4, epsilon = 1e-12);
        assert_relative_eq!(geodesic_distance(&a, &a).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn principal_angles_of_orthogonal_lines() {
        let a = unit_line(2, 0);
        let b = unit_line(2, 1);
        let angles = principal_angles(&a, &b).unwrap();
        assert_relative_eq!(angles[0], std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
        let same = principal_angles(&a, &a).unwrap();
        assert!(same[0].abs() < 1e-7);
    }

    #[test]
    fn exp_log_round_trip() {
        for seed in 0..20 {
            let a = random_point(12, 3, &mut rng(100 + seed)).unwrap();
            let b = random_point(12, 3, &mut rng(200 + seed)).unwrap();
            let t = log_map(&a, &b).unwrap();
            let reached = exp_map(&a, &t, 1.0).unwrap();
            let angles = principal_angles(&reached, &b).unwrap();
            assert!(
                angles.iter().all(|&x| x < 1e-8),
                "seed {seed}: residual angles {angles:?}"
            );
        }
    }

    #[test]
    fn rotation_of_representative_leaves_distance_unchanged() {
        let a = random_point(10, 3, &mut rng(31)).unwrap();
        let b = random_point(10, 3, &mut rng(32)).unwrap();
        // Random orthogonal 3x3 via QR of a Gaussian matrix.
        let mut g = DMatrix::zeros(3, 3);
        let mut r = rng(33);
        g.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
        let o = orthonormalize(g);
        let b_rot = SubspacePoint::from_basis(b.basis() * o).unwrap();
        let d1 = geodesic_distance(&a, &b).unwrap();
        let d2 = geodesic_distance(&a, &b_rot).unwrap();
        assert!((d1 - d2).abs() < 1e-9);
    }
}
