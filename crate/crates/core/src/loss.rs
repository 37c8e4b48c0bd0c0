//! Loss kernels with analytic gradients.
//!
//! * [`chamfer_sd`]: mean over predicted points of the squared distance to
//!   the nearest reference point (one direction only).
//! * [`one_to_one_loss`]: the pixel-paired alternative, squared distance
//!   between entries that share an index.
//! * [`pm_loss`]: aligns a pointmap onto the prediction, then applies
//!   [`chamfer_sd`]. The alignment is held constant in the gradient.
//! * [`total_loss`]: weighted sum with a caller-supplied render term.
//! * [`chain_to_depth`]: pulls point gradients back to per-pixel depth.

use rayon::prelude::*;
use thiserror::Error;

use crate::alignment::{umeyama, AlignError};
use crate::camera::{CameraModel, DepthMap};
use crate::geometry::{apply_transform, PointCloud, SimilarityTransform, Vec3};
use crate::par::chunked_sum;
use crate::spatial::{IndexError, SpatialIndex, DEFAULT_LEAF_SIZE};

pub const DEFAULT_LAMBDA_PM: f64 = 0.005;
pub const DEFAULT_LAMBDA_RENDER: f64 = 1.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("predicted cloud has no valid points")]
    EmptyPrediction,
    #[error("clouds differ in length ({pred} vs {reference})")]
    LengthMismatch { pred: usize, reference: usize },
    #[error("no jointly valid pairs")]
    NoValidPairs,
    #[error("gradient has {grad} entries but the depth map has {pixels} pixels")]
    ProvenanceMismatch { grad: usize, pixels: usize },
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error(transparent)]
    Alignment(#[from] AlignError),
    #[error(transparent)]
    Index(#[from] IndexError),
}

/// Scalar loss with one gradient entry per point of the predicted cloud.
#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub grad: Vec<Vec3>,
}

impl LossValue {
    pub fn zero(len: usize) -> Self {
        Self {
            value: 0.0,
            grad: vec![Vec3::ZERO; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_pm: f64,
    pub lambda_render: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_pm: DEFAULT_LAMBDA_PM,
            lambda_render: DEFAULT_LAMBDA_RENDER,
        }
    }
}

/// Single-directional Chamfer loss from `pred` to the indexed reference.
/// Nearest neighbours are held fixed when forming the gradient.
pub fn chamfer_sd(pred: &PointCloud, reference: &SpatialIndex) -> Result<LossValue, LossError> {
    let n_valid = pred.valid_count();
    if n_valid == 0 {
        return Err(LossError::EmptyPrediction);
    }
    let inv_n = 1.0 / n_valid as f64;
    let pts = pred.points();
    let mask = pred.mask();
    // Residual μ − p*(μ) per entry, zero for invalid ones.
    let residuals: Vec<(Vec3, f64)> = pts
        .par_iter()
        .zip(mask.par_iter())
        .map(|(&p, &ok)| {
            if ok {
                let nn = reference.nearest(p);
                (p - nn.point, nn.distance_squared)
            } else {
                (Vec3::ZERO, 0.0)
            }
        })
        .collect();
    let value = chunked_sum(residuals.len(), |i| residuals[i].1) * inv_n;
    let grad = residuals.iter().map(|(r, _)| *r * (2.0 * inv_n)).collect();
    Ok(LossValue { value, grad })
}

/// Pixel-paired squared distance between `pred` and `reference` entries that
/// share an index. Only jointly valid pairs count.
pub fn one_to_one_loss(pred: &PointCloud, reference: &PointCloud) -> Result<LossValue, LossError> {
    if pred.len() != reference.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            reference: reference.len(),
        });
    }
    let pair = |i: usize| pred.is_valid(i) && reference.is_valid(i);
    let count = (0..pred.len()).filter(|&i| pair(i)).count();
    if count == 0 {
        return Err(LossError::NoValidPairs);
    }
    let inv_n = 1.0 / count as f64;
    let (pp, rp) = (pred.points(), reference.points());
    let value = chunked_sum(pred.len(), |i| {
        if pair(i) {
            pp[i].distance_squared(rp[i])
        } else {
            0.0
        }
    }) * inv_n;
    let grad = (0..pred.len())
        .map(|i| {
            if pair(i) {
                (pp[i] - rp[i]) * (2.0 * inv_n)
            } else {
                Vec3::ZERO
            }
        })
        .collect();
    Ok(LossValue { value, grad })
}

/// Aligns `pointmap` onto `pred` by [`umeyama`] (pointmap is the source),
/// then evaluates [`chamfer_sd`] from `pred` to the aligned pointmap.
/// Returns the loss and the alignment that was applied.
pub fn pm_loss(
    pred: &PointCloud,
    pointmap: &PointCloud,
) -> Result<(LossValue, SimilarityTransform), LossError> {
    let (aligned, transform) = align_pointmap(pred, pointmap)?;
    let index = SpatialIndex::build(&aligned, DEFAULT_LEAF_SIZE)?;
    Ok((chamfer_sd(pred, &index)?, transform))
}

/// Umeyama alignment of `pointmap` onto `pred`, applied to every pointmap entry.
pub fn align_pointmap(
    pred: &PointCloud,
    pointmap: &PointCloud,
) -> Result<(PointCloud, SimilarityTransform), LossError> {
    if pred.len() != pointmap.len() {
        return Err(LossError::LengthMismatch {
            pred: pred.len(),
            reference: pointmap.len(),
        });
    }
    let fit = umeyama(pointmap, pred)?;
    Ok((apply_transform(&fit.transform, pointmap), fit.transform))
}

/// `λ_render·render + λ_pm·pm`, applied to both value and gradient.
pub fn total_loss(
    render_term: f64,
    render_grad: &[Vec3],
    pm: &LossValue,
    w: &LossWeights,
) -> Result<LossValue, LossError> {
    if render_grad.len() != pm.grad.len() {
        return Err(LossError::LengthMismatch {
            pred: render_grad.len(),
            reference: pm.grad.len(),
        });
    }
    if !render_term.is_finite() || !pm.value.is_finite() {
        return Err(LossError::NonFinite("loss value"));
    }
    let value = w.lambda_render * render_term + w.lambda_pm * pm.value;
    let grad = render_grad
        .iter()
        .zip(&pm.grad)
        .map(|(&r, &p)| r * w.lambda_render + p * w.lambda_pm)
        .collect();
    Ok(LossValue { value, grad })
}

/// `∂L/∂d(u,v) = ⟨∂L/∂μ_uv, R·K⁻¹·(u,v,1)ᵀ⟩` for a single view; zero on
/// invalid pixels.
pub fn chain_to_depth(
    loss: &LossValue,
    depth: &DepthMap,
    cam: &CameraModel,
) -> Result<Vec<f64>, LossError> {
    chain_grad_to_depth(&loss.grad, depth, cam)
}

/// Slice form of [`chain_to_depth`], for one view's range of an aggregated gradient.
pub fn chain_grad_to_depth(
    grad: &[Vec3],
    depth: &DepthMap,
    cam: &CameraModel,
) -> Result<Vec<f64>, LossError> {
    if grad.len() != depth.len() || depth.len() != cam.pixel_count() {
        return Err(LossError::ProvenanceMismatch {
            grad: grad.len(),
            pixels: depth.len(),
        });
    }
    let w = depth.width();
    Ok(grad
        .par_iter()
        .enumerate()
        .map(|(i, g)| {
            if depth.is_valid_index(i) {
                g.dot(cam.world_ray(i % w, i / w))
            } else {
                0.0
            }
        })
        .collect())
}
