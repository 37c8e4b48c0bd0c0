//! Similarity alignment of corresponding point sets.
//!
//! [`umeyama`] is the closed-form least-squares fit of `s·R·p + t` from a
//! source cloud onto a target cloud with known index correspondence.
//! [`icp`] is a similarity ICP baseline that re-derives correspondences by
//! nearest neighbour search every iteration and solves each step with the
//! same closed form.

use thiserror::Error;

use crate::geometry::{
    apply_transform, svd3, GeometryError, Mat3, PointCloud, SimilarityTransform, Vec3,
};
use crate::par::{chunked_sum, chunked_sum_array};
use crate::spatial::{IndexError, SpatialIndex, DEFAULT_LEAF_SIZE};

/// Relative threshold on the second singular value below which the fit is
/// considered rank deficient.
pub const RANK_TOLERANCE: f64 = 1e-10;

pub const DEFAULT_ICP_MAX_ITERS: usize = 50;
pub const DEFAULT_ICP_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AlignError {
    #[error("need at least 3 jointly valid pairs, found {0}")]
    TooFewPairs(usize),
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("estimated scale is not positive ({0})")]
    NonPositiveScale(f64),
    #[error("source has {source_len} points but target has {target_len}")]
    LengthMismatch {
        source_len: usize,
        target_len: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentResult {
    pub transform: SimilarityTransform,
    /// RMS of `‖s·R·source + t − target‖` over the pairs used in the fit.
    pub rms_residual: f64,
    pub used_count: usize,
    pub iterations: usize,
}

/// Closed-form similarity fit mapping `source` onto `target`.
///
/// Pairs where either entry is invalid are excluded from the fit.
pub fn umeyama(source: &PointCloud, target: &PointCloud) -> Result<AlignmentResult, AlignError> {
    if source.len() != target.len() {
        return Err(AlignError::LengthMismatch {
            source_len: source.len(),
            target_len: target.len(),
        });
    }
    let src = source.points();
    let dst = target.points();
    let smask = source.mask();
    let dmask = target.mask();
    let pair = |i: usize| smask[i] && dmask[i];
    fit_pairs(src.len(), |i| pair(i).then(|| (src[i], dst[i])))
}

/// Umeyama over an arbitrary pair generator. `pairs(i)` yields the `i`-th
/// `(source, target)` pair or `None` to skip it.
fn fit_pairs<F>(n: usize, pairs: F) -> Result<AlignmentResult, AlignError>
where
    F: Fn(usize) -> Option<(Vec3, Vec3)> + Sync,
{
    let sums = chunked_sum_array::<7, _>(n, |i| {
        pairs(i).map(|(p, q)| [p.x, p.y, p.z, q.x, q.y, q.z, 1.0])
    });
    let count = sums[6] as usize;
    if count < 3 {
        return Err(AlignError::TooFewPairs(count));
    }
    let inv_n = 1.0 / sums[6];
    let mu_s = Vec3::new(sums[0], sums[1], sums[2]) * inv_n;
    let mu_t = Vec3::new(sums[3], sums[4], sums[5]) * inv_n;

    // cross = (1/n) Σ (q − μ_t)(p − μ_s)ᵀ ; src_cov = (1/n) Σ (p − μ_s)(p − μ_s)ᵀ
    let moments = chunked_sum_array::<15, _>(n, |i| {
        pairs(i).map(|(p, q)| {
            let a = p - mu_s;
            let b = q - mu_t;
            [
                b.x * a.x,
                b.x * a.y,
                b.x * a.z,
                b.y * a.x,
                b.y * a.y,
                b.y * a.z,
                b.z * a.x,
                b.z * a.y,
                b.z * a.z,
                a.x * a.x,
                a.x * a.y,
                a.x * a.z,
                a.y * a.y,
                a.y * a.z,
                a.z * a.z,
            ]
        })
    });
    let cross = Mat3::from_row_slice(&moments[..9]).scaled(inv_n);
    let (sxx, sxy, sxz, syy, syz, szz) = (
        moments[9] * inv_n,
        moments[10] * inv_n,
        moments[11] * inv_n,
        moments[12] * inv_n,
        moments[13] * inv_n,
        moments[14] * inv_n,
    );
    let src_cov = Mat3::from_rows([[sxx, sxy, sxz], [sxy, syy, syz], [sxz, syz, szz]]);
    let var_s = src_cov.trace();
    if !(var_s > 0.0) || !var_s.is_finite() {
        return Err(AlignError::DegenerateGeometry(
            "source points coincide".into(),
        ));
    }
    let cov_sv = svd3(&src_cov).sigma;
    if cov_sv[1] <= RANK_TOLERANCE * cov_sv[0] {
        return Err(AlignError::DegenerateGeometry(
            "source points are collinear".into(),
        ));
    }

    let svd = svd3(&cross);
    if !(svd.sigma[0] > 0.0) || svd.sigma[1] <= RANK_TOLERANCE * svd.sigma[0] {
        return Err(AlignError::DegenerateGeometry(format!(
            "cross-covariance rank < 2 (singular values {:?})",
            svd.sigma
        )));
    }
    let det_sign = if (svd.u * svd.v.transpose()).determinant() < 0.0 {
        -1.0
    } else {
        1.0
    };
    let d = Mat3::from_diagonal([1.0, 1.0, det_sign]);
    let rotation = svd.u * d * svd.v.transpose();
    let scale = (svd.sigma[0] + svd.sigma[1] + det_sign * svd.sigma[2]) / var_s;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(AlignError::NonPositiveScale(scale));
    }
    let translation = mu_t - (rotation * mu_s) * scale;
    let transform = SimilarityTransform::new(scale, rotation, translation)?;

    let sse = chunked_sum(n, |i| {
        pairs(i).map_or(0.0, |(p, q)| transform.apply_point(p).distance_squared(q))
    });
    Ok(AlignmentResult {
        transform,
        rms_residual: (sse * inv_n).sqrt(),
        used_count: count,
        iterations: 1,
    })
}

/// Mean squared residual of `t` over jointly valid pairs.
pub fn alignment_objective(
    t: &SimilarityTransform,
    source: &PointCloud,
    target: &PointCloud,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, p) in source.iter_valid() {
        if target.is_valid(i) {
            sum += t.apply_point(p).distance_squared(target.point(i));
            n += 1;
        }
    }
    sum / n as f64
}

/// Similarity ICP from `source` onto `target`. Correspondences are nearest
/// neighbours of the transformed source in `target`; each iteration fits an
/// increment with [`umeyama`] and composes it onto the running estimate.
/// Stops when the relative change of the RMS residual falls below `rel_tol`.
pub fn icp(
    source: &PointCloud,
    target: &PointCloud,
    max_iters: usize,
    rel_tol: f64,
) -> Result<AlignmentResult, AlignError> {
    if max_iters == 0 {
        return Err(AlignError::InvalidParameter(
            "max_iters must be at least 1".into(),
        ));
    }
    if !(rel_tol >= 0.0) {
        return Err(AlignError::InvalidParameter(
            "rel_tol must be non-negative".into(),
        ));
    }
    let index = SpatialIndex::build(target, DEFAULT_LEAF_SIZE)?;
    let tpts = target.points();
    // Residuals at this level are rounding noise; relative change is meaningless there.
    let rms_floor = 1e-12 * target.bounding_diagonal();
    let mut current = SimilarityTransform::IDENTITY;
    let mut prev_rms = f64::INFINITY;
    let mut last = None;

    for iter in 1..=max_iters {
        let moved = apply_transform(&current, source);
        let matches = index.nearest_all(&moved);
        let mp = moved.points();
        let step = fit_pairs(mp.len(), |i| matches[i].map(|m| (mp[i], tpts[m.index])))?;
        current = step.transform.compose(&current);
        let rms = step.rms_residual;
        last = Some(AlignmentResult {
            transform: current,
            rms_residual: rms,
            used_count: step.used_count,
            iterations: iter,
        });
        let converged = rms <= rms_floor
            || (prev_rms.is_finite() && (prev_rms - rms).abs() <= rel_tol * prev_rms);
        if converged {
            break;
        }
        prev_rms = rms;
    }
    Ok(last.expect("at least one iteration ran"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn tetra() -> PointCloud {
        PointCloud::from_points(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ])
    }

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointCloud {
        (0..n)
            .map(|_| {
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-0.6..0.6),
                    rng.random_range(-0.3..0.3),
                )
            })
            .collect()
    }

    #[test]
    fn identity_on_equal_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_cloud(&mut rng, 50);
        let r = umeyama(&c, &c).unwrap();
        assert!((r.transform.scale() - 1.0).abs() < 1e-12);
        assert!(r.transform.rotation().max_abs_diff(&Mat3::IDENTITY) < 1e-12);
        assert!(r.transform.translation().norm() < 1e-12);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.used_count, 50);
    }

    #[test]
    fn recovers_tetrahedron_transform() {
        let truth =
            SimilarityTransform::new(2.0, Mat3::rotation_z(FRAC_PI_2), Vec3::new(1.0, 2.0, 3.0))
                .unwrap();
        let src = tetra();
        let dst = apply_transform(&truth, &src);
        let r = umeyama(&src, &dst).unwrap();
        assert!((r.transform.scale() - 2.0).abs() < 1e-12);
        assert!(r.transform.rotation().max_abs_diff(truth.rotation()) < 1e-12);
        assert!((r.transform.translation() - truth.translation()).norm() < 1e-12);
        assert!(r.rms_residual < 1e-12);
    }

    #[test]
    fn collinear_source_is_degenerate() {
        let src = PointCloud::from_points(vec![
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 1.0),
            Vec3::new(2.0, 2.0, 2.0),
        ]);
        let dst = tetra().compacted();
        let dst = PointCloud::from_points(dst.points()[..3].to_vec());
        assert!(matches!(
            umeyama(&src, &dst),
            Err(AlignError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn too_few_and_mismatched() {
        let src = PointCloud::with_mask(tetra().points().to_vec(), vec![true, true, false, false])
            .unwrap();
        assert_eq!(umeyama(&src, &tetra()), Err(AlignError::TooFewPairs(2)));
        let short = PointCloud::from_points(vec![Vec3::ZERO]);
        assert!(matches!(
            umeyama(&short, &tetra()),
            Err(AlignError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn invalid_pairs_are_skipped() {
        let truth =
            SimilarityTransform::new(0.5, Mat3::rotation_z(0.3), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let src = random_cloud(&mut rng, 30);
        let dst = apply_transform(&truth, &src);
        let (mut pts, mut mask) = dst.into_parts();
        pts[3] = Vec3::new(1e3, 1e3, 1e3);
        mask[3] = false;
        let dst = PointCloud::with_mask(pts, mask).unwrap();
        let r = umeyama(&src, &dst).unwrap();
        assert_eq!(r.used_count, 29);
        assert!((r.transform.scale() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn reflected_target_still_yields_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let src = random_cloud(&mut rng, 40);
        let mirror = Mat3::from_diagonal([1.0, 1.0, -1.0]);
        let dst: PointCloud = src.points().iter().map(|&p| mirror * p).collect();
        let r = umeyama(&src, &dst).unwrap();
        assert!(r.transform.rotation().is_rotation(1e-12));
        assert!(r.transform.scale() > 0.0);
    }

    #[test]
    fn icp_self_alignment_converges_immediately() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let c = random_cloud(&mut rng, 300);
        let r = icp(&c, &c, 50, 1e-6).unwrap();
        assert_eq!(r.iterations, 1);
        assert!(r.rms_residual < 1e-12);
        assert!(r.transform.rotation().max_abs_diff(&Mat3::IDENTITY) < 1e-12);
    }

    #[test]
    fn icp_rejects_zero_iterations() {
        let c = tetra();
        assert!(matches!(
            icp(&c, &c, 0, 1e-6),
            Err(AlignError::InvalidParameter(_))
        ));
    }

    #[test]
    fn icp_recovers_small_similarity() {
        // Sparse enough that a few iterations lock onto the true pairing.
        let source = random_cloud(&mut ChaCha8Rng::seed_from_u64(99), 60);
        let diameter = source.bounding_diagonal();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let unit = |rng: &mut ChaCha8Rng| {
            let v = Vec3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            v * (1.0 / v.norm())
        };
        for _ in 0..50 {
            let axis = unit(&mut rng);
            let angle = rng.random_range(0.0..5.0f64).to_radians();
            let t = unit(&mut rng) * (rng.random_range(0.0..0.05) * diameter);
            let gen = SimilarityTransform::new(
                rng.random_range(0.95..1.05),
                Mat3::from_axis_angle(axis, angle),
                t,
            )
            .unwrap();
            let target = crate::geometry::apply_transform(&gen, &source);
            let r = icp(&source, &target, DEFAULT_ICP_MAX_ITERS, DEFAULT_ICP_REL_TOL).unwrap();
            let got = &r.transform;
            assert!(r.iterations <= DEFAULT_ICP_MAX_ITERS);
            assert!((got.scale() - gen.scale()).abs() < 1e-6);
            assert!(got.rotation().max_abs_diff(gen.rotation()) < 1e-6);
            assert!((got.translation() - gen.translation()).norm() < 1e-6);
        }
    }
}
