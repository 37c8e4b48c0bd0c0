//! Deterministic synthetic scenes.
//!
//! Each view looks at a fronto-parallel stage: a background plane at depth
//! `d_bg` and one or more foreground rectangles at `d_fg`, so the
//! ground-truth depth is exactly piecewise constant. Cameras sit on a
//! horizontal arc and face the arc centre.
//!
//! The corrupted depth blends foreground and background linearly across a
//! band of `bleed_px` pixels on each side of every discontinuity ("flying
//! pixels") and adds iid Gaussian noise. The pseudo ground-truth pointmap is
//! the ground-truth cloud with a local pixel permutation near discontinuities
//! (`shuffle_px`), iid
//! Gaussian noise, and a random similarity misalignment.
//!
//! # Random streams
//!
//! All randomness comes from ChaCha8 seeded with `SceneSpec::seed`; each
//! stage draws from its own stream id so changing one stage never shifts
//! another: layout `0`, misalignment `1`, depth noise `100 + view`,
//! pointmap noise `200 + view`, correspondence shuffle `300 + view`.

mod optimize;

pub use optimize::{run_toy_optimization, LossKind, ToyConfig, TraceRow};

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camera::{aggregate_views, unproject, CameraError, CameraModel, DepthMap};
use crate::geometry::{apply_transform, Mat3, PointCloud, SimilarityTransform, Vec3};
use crate::io::{self, FormatError, PlyFormat};

const STREAM_LAYOUT: u64 = 0;
const STREAM_MISALIGN: u64 = 1;
const STREAM_DEPTH_NOISE: u64 = 100;
const STREAM_PM_NOISE: u64 = 200;
const STREAM_SHUFFLE: u64 = 300;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),
    #[error("scene directory: {0}")]
    Layout(String),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Loss(#[from] crate::loss::LossError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    TwoPlane,
    Boxes,
}

/// Bounds for the random similarity applied to the pointmap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MisalignBounds {
    pub scale_min: f64,
    pub scale_max: f64,
    pub max_rotation_deg: f64,
    /// Fraction of the ground-truth cloud's bounding diagonal.
    pub max_translation: f64,
}

impl Default for MisalignBounds {
    fn default() -> Self {
        Self {
            scale_min: 0.9,
            scale_max: 1.1,
            max_rotation_deg: 10.0,
            max_translation: 0.1,
        }
    }
}

impl MisalignBounds {
    pub const IDENTITY: MisalignBounds = MisalignBounds {
        scale_min: 1.0,
        scale_max: 1.0,
        max_rotation_deg: 0.0,
        max_translation: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub n_views: usize,
    pub layout: Layout,
    pub d_fg: f64,
    pub d_bg: f64,
    pub bleed_px: usize,
    pub noise_sigma_depth: f64,
    pub noise_sigma_pm: f64,
    /// Radius of the local swap permutation applied to pointmap entries
    /// near depth discontinuities.
    pub shuffle_px: usize,
    pub misalign: MisalignBounds,
    /// Focal length in pixels; `None` uses half the image width (90° field of view).
    pub focal_px: Option<f64>,
    /// Total angular span of the camera arc.
    pub arc_deg: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            width: 64,
            height: 48,
            n_views: 2,
            layout: Layout::TwoPlane,
            d_fg: 2.8,
            d_bg: 3.0,
            bleed_px: 2,
            noise_sigma_depth: 0.002,
            noise_sigma_pm: 0.002,
            shuffle_px: 1,
            misalign: MisalignBounds::default(),
            focal_px: None,
            arc_deg: 20.0,
        }
    }
}

impl SceneSpec {
    /// No corruption, noise, shuffle or misalignment.
    pub fn clean(seed: u64) -> Self {
        Self {
            seed,
            bleed_px: 0,
            noise_sigma_depth: 0.0,
            noise_sigma_pm: 0.0,
            shuffle_px: 0,
            misalign: MisalignBounds::IDENTITY,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SceneError> {
        let bad = |m: &str| Err(SceneError::InvalidSpec(m.into()));
        if self.width == 0 || self.height == 0 || self.n_views == 0 {
            return bad("width, height and n_views must be positive");
        }
        if !(self.d_fg > 0.0 && self.d_bg > self.d_fg && self.d_bg.is_finite()) {
            return bad("need d_bg > d_fg > 0");
        }
        if !(self.noise_sigma_depth >= 0.0 && self.noise_sigma_pm >= 0.0) {
            return bad("noise sigmas must be non-negative");
        }
        let m = &self.misalign;
        if !(m.scale_min > 0.0
            && m.scale_max >= m.scale_min
            && m.max_rotation_deg >= 0.0
            && m.max_translation >= 0.0)
        {
            return bad("misalignment bounds are inconsistent");
        }
        if matches!(self.focal_px, Some(f) if !(f > 0.0)) {
            return bad("focal_px must be positive");
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, SceneError> {
        let spec: SceneSpec =
            toml::from_str(text).map_err(|e| SceneError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene spec serialises")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneBundle {
    pub cameras: Vec<CameraModel>,
    pub gt_depth: Vec<DepthMap>,
    pub corrupted_depth: Vec<DepthMap>,
    pub gt_cloud: PointCloud,
    pub pseudo_pointmap: PointCloud,
}

impl SceneBundle {
    pub fn n_views(&self) -> usize {
        self.cameras.len()
    }

    pub fn width(&self) -> usize {
        self.cameras[0].width()
    }

    pub fn height(&self) -> usize {
        self.cameras[0].height()
    }

    /// Unprojects and concatenates one depth map per view.
    pub fn unproject_views(&self, depths: &[DepthMap]) -> Result<PointCloud, CameraError> {
        let views = depths
            .iter()
            .zip(&self.cameras)
            .map(|(d, c)| unproject(d, c))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(aggregate_views(&views, self.width(), self.height())?.0)
    }

    /// Writes `<dir>/<view>/{depth_gt.pfm, depth_corrupt.pfm, camera.txt}`,
    /// `<dir>/pointmap.ply` and `<dir>/gt.ply` (binary little-endian).
    pub fn save(&self, dir: &Path) -> Result<(), SceneError> {
        for (j, cam) in self.cameras.iter().enumerate() {
            let vdir = dir.join(j.to_string());
            fs::create_dir_all(&vdir)?;
            io::write_pfm(&self.gt_depth[j], vdir.join("depth_gt.pfm"))?;
            io::write_pfm(&self.corrupted_depth[j], vdir.join("depth_corrupt.pfm"))?;
            io::write_camera(cam, vdir.join("camera.txt"))?;
        }
        io::write_ply(
            &self.pseudo_pointmap,
            dir.join("pointmap.ply"),
            PlyFormat::BinaryLittleEndian,
        )?;
        io::write_ply(
            &self.gt_cloud.compacted(),
            dir.join("gt.ply"),
            PlyFormat::BinaryLittleEndian,
        )?;
        Ok(())
    }

    /// Reads a directory written by [`save`](Self::save). Views are the
    /// consecutive numbered subdirectories starting at `0`.
    pub fn load(dir: &Path) -> Result<Self, SceneError> {
        let mut cameras = Vec::new();
        let mut gt_depth = Vec::new();
        let mut corrupted_depth = Vec::new();
        for j in 0.. {
            let vdir = dir.join(j.to_string());
            if !vdir.is_dir() {
                break;
            }
            cameras.push(io::read_camera(vdir.join("camera.txt"))?);
            gt_depth.push(io::read_pfm(vdir.join("depth_gt.pfm"))?);
            corrupted_depth.push(io::read_pfm(vdir.join("depth_corrupt.pfm"))?);
        }
        if cameras.is_empty() {
            return Err(SceneError::Layout(format!(
                "no view directories under {}",
                dir.display()
            )));
        }
        let (w, h) = (cameras[0].width(), cameras[0].height());
        for (j, c) in cameras.iter().enumerate() {
            if c.width() != w || c.height() != h {
                return Err(CameraError::MixedResolution {
                    view: j,
                    expected: w * h,
                    got: c.pixel_count(),
                }
                .into());
            }
            for d in [&gt_depth[j], &corrupted_depth[j]] {
                if d.width() != w || d.height() != h {
                    return Err(CameraError::DimensionMismatch {
                        depth: (d.width(), d.height()),
                        camera: (w, h),
                    }
                    .into());
                }
            }
        }
        let pseudo_pointmap = io::read_ply(dir.join("pointmap.ply"))?;
        let gt_cloud = io::read_ply(dir.join("gt.ply"))?;
        if pseudo_pointmap.len() != cameras.len() * w * h {
            return Err(SceneError::Layout(format!(
                "pointmap has {} points, expected {}",
                pseudo_pointmap.len(),
                cameras.len() * w * h
            )));
        }
        Ok(Self {
            cameras,
            gt_depth,
            corrupted_depth,
            gt_cloud,
            pseudo_pointmap,
        })
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Foreground mask shared by all views, row-major.
fn foreground_mask(spec: &SceneSpec) -> Vec<bool> {
    let (w, h) = (spec.width, spec.height);
    let mut fg = vec![false; w * h];
    let mut fill = |u0: usize, u1: usize, v0: usize, v1: usize| {
        for v in v0..v1.min(h) {
            for u in u0..u1.min(w) {
                fg[v * w + u] = true;
            }
        }
    };
    match spec.layout {
        Layout::TwoPlane => fill(w / 4, 3 * w / 4, h / 4, 3 * h / 4),
        Layout::Boxes => {
            let mut rng = stream(spec.seed, STREAM_LAYOUT);
            for _ in 0..3 {
                let bw = rng.random_range(w / 8..=(w / 3).max(w / 8)).max(1);
                let bh = rng.random_range(h / 8..=(h / 3).max(h / 8)).max(1);
                let u0 = rng.random_range(0..=w - bw.min(w));
                let v0 = rng.random_range(0..=h - bh.min(h));
                fill(u0, u0 + bw, v0, v0 + bh);
            }
        }
    }
    fg
}

/// Linear fg/bg blend within `bleed` pixels (Chebyshev) of a label change.
fn bleed_depth(gt: &[f64], fg: &[bool], w: usize, h: usize, bleed: usize) -> Vec<f64> {
    if bleed == 0 {
        return gt.to_vec();
    }
    let band = 2 * bleed + 1;
    let mut out = gt.to_vec();
    for v in 0..h {
        for u in 0..w {
            let me = fg[v * w + u];
            // Smallest ring k containing the other label.
            let mut hit = None;
            'rings: for k in 1..=bleed as isize {
                for dv in -k..=k {
                    for du in -k..=k {
                        if du.abs().max(dv.abs()) != k {
                            continue;
                        }
                        let (uu, vv) = (u as isize + du, v as isize + dv);
                        if uu < 0 || vv < 0 || uu >= w as isize || vv >= h as isize {
                            continue;
                        }
                        let j = vv as usize * w + uu as usize;
                        if fg[j] != me {
                            hit = Some((k as usize, gt[j]));
                            break 'rings;
                        }
                    }
                }
            }
            if let Some((k, other)) = hit {
                let t = (bleed + 1 - k) as f64 / band as f64;
                let i = v * w + u;
                out[i] = gt[i] + (other - gt[i]) * t;
            }
        }
    }
    out
}

fn arc_cameras(spec: &SceneSpec) -> Result<Vec<CameraModel>, CameraError> {
    let f = spec.focal_px.unwrap_or(spec.width as f64 / 2.0);
    let k = Mat3::from_rows([
        [f, 0.0, (spec.width as f64 - 1.0) / 2.0],
        [0.0, f, (spec.height as f64 - 1.0) / 2.0],
        [0.0, 0.0, 1.0],
    ]);
    let span = spec.arc_deg.to_radians();
    (0..spec.n_views)
        .map(|j| {
            let theta = if spec.n_views == 1 {
                0.0
            } else {
                -span / 2.0 + span * j as f64 / (spec.n_views - 1) as f64
            };
            let r = Mat3::from_axis_angle(Vec3::new(0.0, 1.0, 0.0), theta);
            // Looks at the origin from distance d_bg.
            let t = -(r * Vec3::new(0.0, 0.0, spec.d_bg));
            CameraModel::new(k, r, t, spec.width, spec.height)
        })
        .collect()
}

fn sample_misalignment(spec: &SceneSpec, diameter: f64) -> SimilarityTransform {
    let m = &spec.misalign;
    let mut rng = stream(spec.seed, STREAM_MISALIGN);
    let scale = if m.scale_max > m.scale_min {
        rng.random_range(m.scale_min..=m.scale_max)
    } else {
        m.scale_min
    };
    let axis = Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));
    let angle = rng.random_range(0.0..=1.0) * m.max_rotation_deg.to_radians();
    let dir = Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));
    let mag = rng.random_range(0.0..=1.0) * m.max_translation * diameter;
    let t = if dir.norm() > 0.0 {
        dir * (mag / dir.norm())
    } else {
        Vec3::ZERO
    };
    SimilarityTransform::new(scale, Mat3::from_axis_angle(axis, angle), t)
        .expect("sampled misalignment is a similarity")
}

/// Pixels within `radius` (Chebyshev) of a foreground/background change.
fn near_discontinuity(fg: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    let r = radius as i64;
    let mut out = vec![false; w * h];
    for v in 0..h as i64 {
        for u in 0..w as i64 {
            let me = fg[(v * w as i64 + u) as usize];
            'search: for dv in -r..=r {
                for du in -r..=r {
                    let (uu, vv) = (u + du, v + dv);
                    if uu >= 0
                        && vv >= 0
                        && uu < w as i64
                        && vv < h as i64
                        && fg[(vv * w as i64 + uu) as usize] != me
                    {
                        out[(v * w as i64 + u) as usize] = true;
                        break 'search;
                    }
                }
            }
        }
    }
    out
}

/// Local swap permutation: each eligible entry `k` (row-major) is swapped
/// with a uniformly drawn entry within `radius` pixels.
fn local_permutation(
    w: usize,
    h: usize,
    radius: usize,
    eligible: &[bool],
    rng: &mut ChaCha8Rng,
) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..w * h).collect();
    if radius == 0 {
        return perm;
    }
    let r = radius as i64;
    for k in (0..w * h).filter(|&k| eligible[k]) {
        let (u, v) = ((k % w) as i64, (k / w) as i64);
        let uu = (u + rng.random_range(-r..=r)).clamp(0, w as i64 - 1);
        let vv = (v + rng.random_range(-r..=r)).clamp(0, h as i64 - 1);
        perm.swap(k, vv as usize * w + uu as usize);
    }
    perm
}

pub fn generate(spec: &SceneSpec) -> Result<SceneBundle, SceneError> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let cameras = arc_cameras(spec)?;
    let fg = foreground_mask(spec);
    let gt_values: Vec<f64> = fg
        .iter()
        .map(|&f| if f { spec.d_fg } else { spec.d_bg })
        .collect();
    let bled = bleed_depth(&gt_values, &fg, w, h, spec.bleed_px);

    let mut gt_depth = Vec::with_capacity(spec.n_views);
    let mut corrupted_depth = Vec::with_capacity(spec.n_views);
    for j in 0..spec.n_views {
        gt_depth.push(DepthMap::new(w, h, gt_values.clone()));
        let mut values = bled.clone();
        if spec.noise_sigma_depth > 0.0 {
            let mut rng = stream(spec.seed, STREAM_DEPTH_NOISE + j as u64);
            for d in &mut values {
                *d += spec.noise_sigma_depth * gaussian(&mut rng);
            }
        }
        corrupted_depth.push(DepthMap::new(w, h, values));
    }

    let views = gt_depth
        .iter()
        .zip(&cameras)
        .map(|(d, c)| unproject(d, c))
        .collect::<Result<Vec<_>, _>>()?;
    let (gt_cloud, _) = aggregate_views(&views, w, h)?;

    let eligible = near_discontinuity(&fg, w, h, spec.shuffle_px);
    let mut pm_points = Vec::with_capacity(gt_cloud.len());
    for (j, view) in views.iter().enumerate() {
        let perm = local_permutation(
            w,
            h,
            spec.shuffle_px,
            &eligible,
            &mut stream(spec.seed, STREAM_SHUFFLE + j as u64),
        );
        let mut rng = stream(spec.seed, STREAM_PM_NOISE + j as u64);
        for &src in &perm {
            let mut p = view.point(src);
            if spec.noise_sigma_pm > 0.0 {
                let n = Vec3::new(gaussian(&mut rng), gaussian(&mut rng), gaussian(&mut rng));
                p += n * spec.noise_sigma_pm;
            }
            pm_points.push(p);
        }
    }
    let misalign = sample_misalignment(spec, gt_cloud.bounding_diagonal());
    let pseudo_pointmap = apply_transform(&misalign, &PointCloud::from_points(pm_points));

    Ok(SceneBundle {
        cameras,
        gt_depth,
        corrupted_depth,
        gt_cloud,
        pseudo_pointmap,
    })
}

/// Paired clouds for alignment and loss timing: `n` source points spread
/// anisotropically in a box, and `target = T(source) + noise` for a random
/// similarity `T` drawn from the default misalignment bounds.
pub fn correspondence_fixture(
    n: usize,
    seed: u64,
    noise_sigma: f64,
) -> (PointCloud, PointCloud, SimilarityTransform) {
    let mut rng = stream(seed, STREAM_LAYOUT);
    let source: PointCloud = (0..n)
        .map(|_| {
            Vec3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(2.0..3.0),
            )
        })
        .collect();
    let spec = SceneSpec {
        seed,
        ..SceneSpec::default()
    };
    let transform = sample_misalignment(&spec, source.bounding_diagonal());
    let mut noise = stream(seed, STREAM_PM_NOISE);
    let target = source
        .points()
        .iter()
        .map(|&p| {
            let e = Vec3::new(
                gaussian(&mut noise),
                gaussian(&mut noise),
                gaussian(&mut noise),
            );
            transform.apply_point(p) + e * noise_sigma
        })
        .collect();
    (source, target, transform)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clean_spec_is_uncorrupted() {
        let b = generate(&SceneSpec::clean(3)).unwrap();
        assert_eq!(b.corrupted_depth, b.gt_depth);
        assert_eq!(b.pseudo_pointmap, b.gt_cloud);
    }

    #[test]
    fn same_seed_same_bundle() {
        let spec = SceneSpec {
            seed: 42,
            layout: Layout::Boxes,
            ..SceneSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        let other = SceneSpec {
            seed: 43,
            ..spec.clone()
        };
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn boundary_band_lies_between_planes() {
        let spec = SceneSpec {
            d_fg: 1.0,
            d_bg: 3.0,
            noise_sigma_depth: 0.0,
            ..SceneSpec::default()
        };
        let b = generate(&spec).unwrap();
        let (w, h) = (spec.width, spec.height);
        let d = &b.corrupted_depth[0];
        // Foreground rectangle starts at column w/4; its left neighbour is background.
        let (u, v) = (w / 4, h / 2);
        let inside = d.get(u, v);
        let outside = d.get(u - 1, v);
        assert!(inside > 1.0 && inside < 3.0, "{inside}");
        assert!(outside > 1.0 && outside < 3.0, "{outside}");
        // Ramp 1, 1.4, 1.8 | 2.2, 2.6, 3 across the band.
        assert!((inside - 1.8).abs() < 1e-12);
        assert!((outside - 2.2).abs() < 1e-12);
        assert_eq!(d.get(u + 2, v), 1.0);
        // Far from any edge the depth is untouched.
        assert_eq!(d.get(0, 0), 3.0);
    }

    #[test]
    fn gt_depth_is_piecewise_constant() {
        let b = generate(&SceneSpec {
            layout: Layout::Boxes,
            ..SceneSpec::default()
        })
        .unwrap();
        for d in &b.gt_depth {
            assert!(d.values().iter().all(|&v| v == 2.8 || v == 3.0));
        }
    }

    #[test]
    fn correspondence_fixture_is_exact_without_noise() {
        let (src, dst, t) = correspondence_fixture(500, 3, 0.0);
        assert_eq!(src.len(), 500);
        let fit = crate::alignment::umeyama(&src, &dst).unwrap();
        assert!((fit.transform.scale() - t.scale()).abs() < 1e-12);
        assert!(fit.rms_residual < 1e-12);
    }

    #[test]
    fn permutation_is_a_bijection() {
        let mut rng = stream(9, 5);
        let mut p = local_permutation(13, 7, 2, &[true; 91], &mut rng);
        p.sort_unstable();
        assert_eq!(p, (0..91).collect::<Vec<_>>());
    }

    #[test]
    fn spec_toml_round_trip_and_validation() {
        let spec = SceneSpec {
            seed: 7,
            layout: Layout::Boxes,
            ..SceneSpec::default()
        };
        assert_eq!(SceneSpec::from_toml(&spec.to_toml()).unwrap(), spec);
        let partial = SceneSpec::from_toml("seed = 5\nbleed_px = 0\n").unwrap();
        assert_eq!(partial.seed, 5);
        assert_eq!(partial.width, SceneSpec::default().width);
        assert!(SceneSpec::from_toml("d_fg = 4.0\n").is_err());
        assert!(SceneSpec::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let b = generate(&SceneSpec::default()).unwrap();
        b.save(dir.path()).unwrap();
        let back = SceneBundle::load(dir.path()).unwrap();
        assert_eq!(back.n_views(), 2);
        assert_eq!(back.cameras, b.cameras);
        assert_eq!(back.pseudo_pointmap.len(), b.pseudo_pointmap.len());
        // Depth survives at 32-bit precision.
        for (a, c) in back.corrupted_depth[1]
            .values()
            .iter()
            .zip(b.corrupted_depth[1].values())
        {
            assert_eq!(*a, *c as f32 as f64);
        }
    }
}
