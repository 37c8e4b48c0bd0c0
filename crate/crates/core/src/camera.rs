//! Pinhole cameras, depth maps, and depth unprojection.
//!
//! Pixel `(u, v)` is the integer column/row index, top-left origin, and is
//! used directly in `K⁻¹·(u, v, 1)ᵀ` with no half-pixel offset. Depth is
//! z-depth along the optical axis.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Mat3, PointCloud, SimilarityTransform, Vec3};

/// Orthonormality tolerance for camera-to-world rotations read from disk.
pub const CAMERA_ROTATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CameraError {
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("camera rotation is not orthonormal (error {0:.3e})")]
    NonOrthonormalRotation(f64),
    #[error("camera dimensions must be positive")]
    EmptyImage,
    #[error("depth map is {depth:?} but camera is {camera:?}")]
    DimensionMismatch {
        depth: (usize, usize),
        camera: (usize, usize),
    },
    #[error("view {view} has {got} entries, expected {expected}")]
    MixedResolution {
        view: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: Mat3,
    intrinsics_inv: Mat3,
    rotation: Mat3,
    translation: Vec3,
    width: usize,
    height: usize,
}

impl CameraModel {
    /// `rotation`/`translation` map camera coordinates to world coordinates.
    pub fn new(
        intrinsics: Mat3,
        rotation: Mat3,
        translation: Vec3,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        if width == 0 || height == 0 {
            return Err(CameraError::EmptyImage);
        }
        if !intrinsics.is_finite() {
            return Err(CameraError::InvalidIntrinsics("non-finite entry".into()));
        }
        if intrinsics.m[2] != [0.0, 0.0, 1.0] {
            return Err(CameraError::InvalidIntrinsics(format!(
                "last row must be (0, 0, 1), got {:?}",
                intrinsics.m[2]
            )));
        }
        if intrinsics.m[1][0] != 0.0 {
            return Err(CameraError::InvalidIntrinsics(
                "K[1][0] must be zero".into(),
            ));
        }
        let (fx, fy) = (intrinsics.m[0][0], intrinsics.m[1][1]);
        if !(fx > 0.0 && fy > 0.0) {
            return Err(CameraError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx} fy={fy}"
            )));
        }
        let intrinsics_inv = intrinsics
            .inverse()
            .ok_or_else(|| CameraError::InvalidIntrinsics("singular".into()))?;
        if !rotation.is_finite() || !translation.is_finite() {
            return Err(CameraError::NonOrthonormalRotation(f64::INFINITY));
        }
        let err = rotation
            .orthogonality_error()
            .max((rotation.determinant() - 1.0).abs());
        if err > CAMERA_ROTATION_TOLERANCE {
            return Err(CameraError::NonOrthonormalRotation(err));
        }
        Ok(Self {
            intrinsics,
            intrinsics_inv,
            rotation,
            translation,
            width,
            height,
        })
    }

    /// `K = [[f, 0, cx], [0, f, cy], [0, 0, 1]]`, identity pose.
    pub fn simple(
        focal: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        Self::new(
            Mat3::from_rows([[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]]),
            Mat3::IDENTITY,
            Vec3::ZERO,
            width,
            height,
        )
    }

    pub fn intrinsics(&self) -> &Mat3 {
        &self.intrinsics
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Same intrinsics with a new camera-to-world pose.
    pub fn with_pose(&self, rotation: Mat3, translation: Vec3) -> Result<Self, CameraError> {
        Self::new(
            self.intrinsics,
            rotation,
            translation,
            self.width,
            self.height,
        )
    }

    /// Pose `rigid ∘ current`. Only the rotation and translation of `rigid`
    /// are used; its scale must be 1 for the result to be a camera.
    pub fn moved_by(&self, rigid: &SimilarityTransform) -> Result<Self, CameraError> {
        let r = *rigid.rotation() * self.rotation;
        let t = *rigid.rotation() * self.translation + rigid.translation();
        self.with_pose(r, t)
    }

    /// `K⁻¹·(u, v, 1)ᵀ` in camera coordinates; its z component is 1.
    #[inline]
    pub fn camera_ray(&self, u: usize, v: usize) -> Vec3 {
        self.intrinsics_inv * Vec3::new(u as f64, v as f64, 1.0)
    }

    /// `R·K⁻¹·(u, v, 1)ᵀ`: derivative of the world point with respect to depth.
    #[inline]
    pub fn world_ray(&self, u: usize, v: usize) -> Vec3 {
        self.rotation * self.camera_ray(u, v)
    }

    #[inline]
    pub fn unproject_pixel(&self, u: usize, v: usize, depth: f64) -> Vec3 {
        self.rotation * (self.camera_ray(u, v) * depth) + self.translation
    }

    /// World point to `(u, v, depth)`; inverse of [`unproject_pixel`](Self::unproject_pixel)
    /// for continuous pixel coordinates.
    pub fn project(&self, p: Vec3) -> (f64, f64, f64) {
        let pc = self.rotation.transpose() * (p - self.translation);
        let h = self.intrinsics * pc;
        (h.x / h.z, h.y / h.z, pc.z)
    }

    /// Optical axis in world coordinates (third column of the rotation).
    pub fn optical_axis(&self) -> Vec3 {
        self.rotation.col(2)
    }

    /// z-depth of a world point in this camera.
    pub fn depth_of(&self, p: Vec3) -> f64 {
        self.optical_axis().dot(p - self.translation)
    }
}

/// Per-pixel z-depth, row-major. Values that are not finite and positive are
/// invalid.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

#[inline]
fn is_valid_depth(d: f64) -> bool {
    d.is_finite() && d > 0.0
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "depth map size");
        Self {
            width,
            height,
            values,
        }
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> f64 {
        self.values[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, d: f64) {
        self.values[v * self.width + u] = d;
    }

    #[inline]
    pub fn is_valid_index(&self, i: usize) -> bool {
        is_valid_depth(self.values[i])
    }

    pub fn valid_mask(&self) -> Vec<bool> {
        self.values.iter().map(|&d| is_valid_depth(d)).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&d| is_valid_depth(d)).count()
    }
}

/// Lifts every pixel of `depth` into world space. Output is row-major with
/// one entry per pixel; invalid pixels become invalid entries.
pub fn unproject(depth: &DepthMap, cam: &CameraModel) -> Result<PointCloud, CameraError> {
    if depth.width != cam.width || depth.height != cam.height {
        return Err(CameraError::DimensionMismatch {
            depth: (depth.width, depth.height),
            camera: (cam.width, cam.height),
        });
    }
    let w = depth.width;
    let (points, valid): (Vec<Vec3>, Vec<bool>) = depth
        .values
        .par_iter()
        .enumerate()
        .map(|(i, &d)| {
            if is_valid_depth(d) {
                (cam.unproject_pixel(i % w, i / w, d), true)
            } else {
                (Vec3::new(f64::NAN, f64::NAN, f64::NAN), false)
            }
        })
        .unzip();
    Ok(PointCloud::with_mask(points, valid).expect("unprojected points are finite"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRef {
    pub view: usize,
    pub u: usize,
    pub v: usize,
}

/// Bijection between aggregated cloud indices and `(view, u, v)`; view-major,
/// then row-major within a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelProvenance {
    n_views: usize,
    width: usize,
    height: usize,
}

impl PixelProvenance {
    pub fn new(n_views: usize, width: usize, height: usize) -> Self {
        Self {
            n_views,
            width,
            height,
        }
    }

    pub fn n_views(&self) -> usize {
        self.n_views
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels_per_view(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.n_views * self.pixels_per_view()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, index: usize) -> Option<PixelRef> {
        if index >= self.len() {
            return None;
        }
        let per = self.pixels_per_view();
        let (view, rem) = (index / per, index % per);
        Some(PixelRef {
            view,
            u: rem % self.width,
            v: rem / self.width,
        })
    }

    pub fn index_of(&self, px: PixelRef) -> Option<usize> {
        (px.view < self.n_views && px.u < self.width && px.v < self.height)
            .then(|| px.view * self.pixels_per_view() + px.v * self.width + px.u)
    }

    /// Index range of one view inside the aggregated cloud.
    pub fn view_range(&self, view: usize) -> std::ops::Range<usize> {
        let per = self.pixels_per_view();
        view * per..(view + 1) * per
    }
}

/// Concatenates per-view clouds in view order. Each view must hold exactly
/// `width·height` entries, invalid ones included.
pub fn aggregate_views(
    views: &[PointCloud],
    width: usize,
    height: usize,
) -> Result<(PointCloud, PixelProvenance), CameraError> {
    let per = width * height;
    if let Some((view, c)) = views.iter().enumerate().find(|(_, c)| c.len() != per) {
        return Err(CameraError::MixedResolution {
            view,
            expected: per,
            got: c.len(),
        });
    }
    let mut points = Vec::with_capacity(per * views.len());
    let mut valid = Vec::with_capacity(per * views.len());
    for c in views {
        points.extend_from_slice(c.points());
        valid.extend_from_slice(c.mask());
    }
    let cloud = PointCloud::with_mask(points, valid).expect("inputs were valid clouds");
    Ok((cloud, PixelProvenance::new(views.len(), width, height)))
}
