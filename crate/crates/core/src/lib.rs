//! Geometry kernels for regularising depth-unprojected point clouds with a
//! pointmap prior.
//!
//! The pipeline: unproject per-view depth into world points
//! ([`camera::unproject`]), align a pseudo ground-truth pointmap onto them
//! with a closed-form similarity fit ([`alignment::umeyama`]), then score the
//! prediction with a single-directional Chamfer loss against the aligned
//! pointmap ([`loss::pm_loss`]). Exact nearest neighbours come from a
//! KD-tree ([`spatial::SpatialIndex`]); geometry quality is reported with
//! Accuracy / Completeness / Overall ([`metrics::evaluate`]).
//!
//! [`synthetic`] generates deterministic scenes with boundary-bleeding depth
//! and a misaligned pointmap, and runs a small gradient-descent loop that
//! compares the 3D nearest-neighbour loss with pixel-paired supervision.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alignment;
pub mod camera;
pub mod geometry;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod par;
pub mod spatial;
pub mod synthetic;

pub use alignment::{icp, umeyama, AlignError, AlignmentResult};
pub use camera::{
    aggregate_views, unproject, CameraError, CameraModel, DepthMap, PixelProvenance, PixelRef,
};
pub use geometry::{
    apply_transform, svd3, GeometryError, Mat3, PointCloud, SimilarityTransform, Svd3, Vec3,
};
pub use io::{FormatError, PlyFormat};
pub use loss::{
    chain_to_depth, chamfer_sd, one_to_one_loss, pm_loss, total_loss, LossError, LossValue,
    LossWeights,
};
pub use metrics::{evaluate, CloudMetrics, MetricsError};
pub use spatial::{IndexError, Neighbor, SpatialIndex};
