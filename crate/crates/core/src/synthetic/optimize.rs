//! Toy depth refinement used to compare pointmap losses.
//!
//! Per-pixel depth is the only parameter. The "render" term is a stand-in
//! for photometric supervision: `mean((d - d_corrupt)²)` over valid pixels,
//! which pulls the depth back toward the corrupted input. Its point-space
//! gradient is `2(d - d_corrupt)/N` along the view's optical axis, which
//! chains back to depth with unit factor.
//!
//! Each step takes `d ← d - lr·N·∂L/∂d`, so `lr` is a per-pixel rate that
//! does not depend on the image size.

use crate::camera::DepthMap;
use crate::geometry::{PointCloud, Vec3};
use crate::loss::{
    align_pointmap, chain_grad_to_depth, one_to_one_loss, pm_loss, total_loss, LossError,
    LossValue, LossWeights,
};
use crate::metrics::evaluate;

use super::{SceneBundle, SceneError};

/// Depth is kept strictly positive so pixels never drop out mid-run.
const MIN_DEPTH: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    /// Unordered Chamfer against the aligned pointmap.
    Pm3d,
    /// Index-paired distance against the aligned pointmap.
    OneToOne2d,
    /// Render term only.
    None,
}

impl std::str::FromStr for LossKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pm_3d" => Ok(LossKind::Pm3d),
            "one_to_one_2d" => Ok(LossKind::OneToOne2d),
            "none" => Ok(LossKind::None),
            other => Err(format!(
                "unknown loss kind `{other}` (pm_3d, one_to_one_2d, none)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyConfig {
    pub loss: LossKind,
    pub steps: usize,
    pub lr: f64,
    pub weights: LossWeights,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Pm3d,
            steps: 300,
            lr: 0.1,
            weights: LossWeights::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    /// Total loss at the depth before this step's update.
    pub loss: f64,
    /// Overall Chamfer distance from the current cloud to the ground truth.
    pub gt_overall: f64,
}

fn pointmap_term(
    kind: LossKind,
    pred: &PointCloud,
    pointmap: &PointCloud,
) -> Result<LossValue, LossError> {
    match kind {
        LossKind::Pm3d => Ok(pm_loss(pred, pointmap)?.0),
        LossKind::OneToOne2d => {
            let (aligned, _) = align_pointmap(pred, pointmap)?;
            one_to_one_loss(pred, &aligned)
        }
        LossKind::None => Ok(LossValue::zero(pred.len())),
    }
}

/// Runs `cfg.steps` updates starting from the corrupted depth and returns
/// `steps + 1` rows; the last row is evaluated after the final update.
pub fn run_toy_optimization(
    bundle: &SceneBundle,
    cfg: &ToyConfig,
) -> Result<Vec<TraceRow>, SceneError> {
    let target = &bundle.corrupted_depth;
    let mut depth: Vec<DepthMap> = target.clone();
    let npix = bundle.width() * bundle.height();
    let mut trace = Vec::with_capacity(cfg.steps + 1);

    for step in 0..=cfg.steps {
        let pred = bundle.unproject_views(&depth)?;
        let gt_overall = evaluate(&pred, &bundle.gt_cloud)?.overall_mean;
        let n_valid = pred.valid_count();
        let inv_n = 1.0 / n_valid.max(1) as f64;

        let mut render = 0.0;
        let mut render_grad = vec![Vec3::ZERO; pred.len()];
        for (j, (d, dc)) in depth.iter().zip(target).enumerate() {
            let axis = bundle.cameras[j].optical_axis();
            for i in 0..npix {
                if d.is_valid_index(i) && dc.is_valid_index(i) {
                    let r = d.values()[i] - dc.values()[i];
                    render += r * r;
                    render_grad[j * npix + i] = axis * (2.0 * r * inv_n);
                }
            }
        }
        render *= inv_n;

        let pm = match pointmap_term(cfg.loss, &pred, &bundle.pseudo_pointmap) {
            Ok(v) => v,
            Err(LossError::Alignment(e)) => {
                log::warn!("step {step}: alignment failed ({e}); pointmap term skipped");
                LossValue::zero(pred.len())
            }
            Err(e) => return Err(e.into()),
        };
        let total = total_loss(render, &render_grad, &pm, &cfg.weights)?;
        trace.push(TraceRow {
            step,
            loss: total.value,
            gt_overall,
        });
        if step == cfg.steps {
            break;
        }

        let rate = cfg.lr * n_valid as f64;
        for (j, d) in depth.iter_mut().enumerate() {
            let g =
                chain_grad_to_depth(&total.grad[j * npix..(j + 1) * npix], d, &bundle.cameras[j])?;
            for (v, gi) in d.values_mut().iter_mut().zip(g) {
                if v.is_finite() && *v > 0.0 {
                    *v = (*v - rate * gi).max(MIN_DEPTH);
                }
            }
        }
    }
    Ok(trace)
}
