//! Accuracy / Completeness / Overall point-cloud metrics.
//!
//! Distances are plain Euclidean (not squared). No outlier filtering or
//! observability masking is applied.

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::PointCloud;
use crate::spatial::{IndexError, SpatialIndex, DEFAULT_LEAF_SIZE};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{0} cloud has no valid points")]
    EmptyCloud(&'static str),
}

impl From<IndexError> for MetricsError {
    fn from(_: IndexError) -> Self {
        MetricsError::EmptyCloud("reference")
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CloudMetrics {
    pub acc_mean: f64,
    pub acc_median: f64,
    pub comp_mean: f64,
    pub comp_median: f64,
    pub overall_mean: f64,
    pub overall_median: f64,
}

impl CloudMetrics {
    /// `(key, value)` pairs in the fixed output order.
    pub fn fields(&self) -> [(&'static str, f64); 6] {
        [
            ("acc_mean", self.acc_mean),
            ("acc_median", self.acc_median),
            ("comp_mean", self.comp_mean),
            ("comp_median", self.comp_median),
            ("overall_mean", self.overall_mean),
            ("overall_median", self.overall_median),
        ]
    }
}

/// Distance from every valid point of `from` to its nearest valid point in `to`.
pub fn nearest_distances(from: &PointCloud, to: &SpatialIndex) -> Vec<f64> {
    let pts: Vec<_> = from.iter_valid().map(|(_, p)| p).collect();
    pts.par_iter()
        .map(|&p| to.nearest(p).distance_squared.sqrt())
        .collect()
}

/// Arithmetic mean, summed sequentially in input order.
pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Median after a full sort; even lengths average the two central values.
pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn evaluate(pred: &PointCloud, gt: &PointCloud) -> Result<CloudMetrics, MetricsError> {
    if pred.valid_count() == 0 {
        return Err(MetricsError::EmptyCloud("predicted"));
    }
    if gt.valid_count() == 0 {
        return Err(MetricsError::EmptyCloud("ground-truth"));
    }
    let gt_index = SpatialIndex::build(gt, DEFAULT_LEAF_SIZE)?;
    let pred_index = SpatialIndex::build(pred, DEFAULT_LEAF_SIZE)?;
    let acc = nearest_distances(pred, &gt_index);
    let comp = nearest_distances(gt, &pred_index);
    let (acc_mean, acc_median) = (mean(&acc), median(&acc));
    let (comp_mean, comp_median) = (mean(&comp), median(&comp));
    Ok(CloudMetrics {
        acc_mean,
        acc_median,
        comp_mean,
        comp_median,
        overall_mean: (acc_mean + comp_mean) / 2.0,
        overall_median: (acc_median + comp_median) / 2.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec3;

    fn cloud(pts: &[[f64; 3]]) -> PointCloud {
        pts.iter().map(|&p| Vec3::from_array(p)).collect()
    }

    #[test]
    fn identical_clouds_are_zero() {
        let c = cloud(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]]);
        let m = evaluate(&c, &c).unwrap();
        assert!(m.fields().iter().all(|(_, v)| *v == 0.0));
    }

    #[test]
    fn single_pair() {
        let m = evaluate(&cloud(&[[0.0, 0.0, 0.0]]), &cloud(&[[0.0, 0.0, 1.0]])).unwrap();
        assert_eq!((m.acc_mean, m.comp_mean, m.overall_mean), (1.0, 1.0, 1.0));
    }

    #[test]
    fn asymmetric_pair() {
        let m = evaluate(
            &cloud(&[[0.0, 0.0, 0.0], [0.0, 0.0, 2.0]]),
            &cloud(&[[0.0, 0.0, 0.0]]),
        )
        .unwrap();
        assert_eq!(m.acc_mean, 1.0);
        assert_eq!(m.acc_median, 1.0);
        assert_eq!(m.comp_mean, 0.0);
        assert_eq!(m.overall_mean, 0.5);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn empty_clouds() {
        let dead = PointCloud::with_mask(vec![Vec3::ZERO], vec![false]).unwrap();
        let ok = cloud(&[[0.0; 3]]);
        assert_eq!(
            evaluate(&dead, &ok),
            Err(MetricsError::EmptyCloud("predicted"))
        );
        assert_eq!(
            evaluate(&ok, &dead),
            Err(MetricsError::EmptyCloud("ground-truth"))
        );
    }
}
