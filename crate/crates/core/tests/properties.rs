//! Cross-module properties checked against independent brute-force oracles.

use pmloss_core::alignment::{alignment_objective, umeyama};
use pmloss_core::io::{decode_pfm, decode_ply, encode_pfm, encode_ply};
use pmloss_core::loss::{chain_to_depth, chamfer_sd, one_to_one_loss, pm_loss};
use pmloss_core::metrics::evaluate;
use pmloss_core::{
    apply_transform, CameraModel, DepthMap, Mat3, PlyFormat, PointCloud, SimilarityTransform,
    SpatialIndex, Vec3,
};
use proptest::prelude::*;

fn vec3(r: f64) -> impl Strategy<Value = Vec3> {
    (-r..r, -r..r, -r..r).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

fn cloud(n: std::ops::Range<usize>) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(vec3(1.0), n).prop_map(PointCloud::from_points)
}

fn rotation() -> impl Strategy<Value = Mat3> {
    (vec3(1.0), 0.0..std::f64::consts::PI).prop_filter_map("zero axis", |(a, angle)| {
        (a.norm() > 1e-3).then(|| Mat3::from_axis_angle(a, angle))
    })
}

fn similarity() -> impl Strategy<Value = SimilarityTransform> {
    (0.1f64..10.0, rotation(), vec3(100.0))
        .prop_map(|(s, r, t)| SimilarityTransform::new(s, r, t).unwrap())
}

fn rigid() -> impl Strategy<Value = SimilarityTransform> {
    (rotation(), vec3(10.0)).prop_map(|(r, t)| SimilarityTransform::rigid(r, t).unwrap())
}

/// Lowest-index nearest neighbour by exhaustive scan.
fn brute_nn(q: Vec3, reference: &PointCloud) -> (usize, f64) {
    let mut best = (usize::MAX, f64::INFINITY);
    for (i, p) in reference.iter_valid() {
        let d = q.distance_squared(p);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn brute_chamfer(pred: &PointCloud, reference: &PointCloud) -> f64 {
    let d: Vec<f64> = pred
        .iter_valid()
        .map(|(_, p)| brute_nn(p, reference).1)
        .collect();
    d.iter().sum::<f64>() / d.len() as f64
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

/// Drops predicted points whose first and second nearest squared distances
/// are within `gap`, so a finite-difference step cannot switch neighbours.
fn tie_free(pred: &PointCloud, reference: &PointCloud, gap: f64) -> PointCloud {
    pred.iter_valid()
        .filter(|&(_, p)| {
            let mut d: Vec<f64> = reference
                .iter_valid()
                .map(|(_, r)| p.distance_squared(r))
                .collect();
            d.sort_by(f64::total_cmp);
            d.len() < 2 || d[1] - d[0] > gap
        })
        .map(|(_, p)| p)
        .collect()
}

fn fd_check(
    x: &[f64],
    analytic: &[f64],
    skip: impl Fn(usize) -> bool,
    f: impl Fn(&[f64]) -> f64,
) -> Result<(), TestCaseError> {
    let mut worst: f64 = 0.0;
    let scale = analytic
        .iter()
        .fold(0.0f64, |m, g| m.max(g.abs()))
        .max(1e-300);
    let mut y = x.to_vec();
    for i in 0..x.len() {
        if skip(i) {
            continue;
        }
        let h = 1e-6 * x[i].abs().max(1.0);
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        worst = worst.max(((fp - fm) / (2.0 * h) - analytic[i]).abs());
    }
    prop_assert!(
        worst / scale <= 1e-6,
        "relative gradient error {}",
        worst / scale
    );
    Ok(())
}

fn flatten(c: &PointCloud) -> Vec<f64> {
    c.points().iter().flat_map(|p| p.to_array()).collect()
}

fn unflatten(x: &[f64]) -> PointCloud {
    x.chunks_exact(3)
        .map(|c| Vec3::new(c[0], c[1], c[2]))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn index_matches_brute_force(reference in cloud(1..400), queries in cloud(1..200), leaf in 1usize..20) {
        let index = SpatialIndex::build(&reference, leaf).unwrap();
        for (_, q) in queries.iter_valid() {
            let n = index.nearest(q);
            let (i, d) = brute_nn(q, &reference);
            prop_assert_eq!(n.index, i);
            prop_assert_eq!(n.distance_squared, d);
        }
    }

    #[test]
    fn chamfer_matches_brute_force(pred in cloud(1..300), reference in cloud(1..300)) {
        let v = chamfer_sd(&pred, &SpatialIndex::with_default_leaf(&reference).unwrap()).unwrap().value;
        prop_assert!(rel_close(v, brute_chamfer(&pred, &reference), 1e-12));
        prop_assert!(v >= 0.0);
    }

    #[test]
    fn chamfer_zero_iff_subset(reference in cloud(2..100), pick in prop::collection::vec(any::<prop::sample::Index>(), 1..50), off in vec3(0.5)) {
        let subset: PointCloud = pick.iter().map(|i| reference.point(i.index(reference.len()))).collect();
        let index = SpatialIndex::with_default_leaf(&reference).unwrap();
        prop_assert_eq!(chamfer_sd(&subset, &index).unwrap().value, 0.0);
        prop_assume!(off.norm() > 1e-3);
        let moved: PointCloud = subset.points().iter().map(|&p| p + off * 10.0).collect();
        prop_assert!(chamfer_sd(&moved, &index).unwrap().value > 0.0);
    }

    #[test]
    fn chamfer_gradient_matches_finite_differences(pred in cloud(5..120), reference in cloud(5..200)) {
        let pred = tie_free(&pred, &reference, 1e-4);
        prop_assume!(!pred.is_empty());
        let index = SpatialIndex::with_default_leaf(&reference).unwrap();
        let g: Vec<f64> = chamfer_sd(&pred, &index).unwrap().grad.iter().flat_map(|v| v.to_array()).collect();
        fd_check(&flatten(&pred), &g, |_| false, |x| chamfer_sd(&unflatten(x), &index).unwrap().value)?;
    }

    #[test]
    fn one_to_one_gradient_matches_finite_differences(pred in cloud(3..200), reference in cloud(200..201)) {
        let reference: PointCloud = reference.points()[..pred.len()].iter().copied().collect();
        let g: Vec<f64> = one_to_one_loss(&pred, &reference).unwrap().grad.iter().flat_map(|v| v.to_array()).collect();
        fd_check(&flatten(&pred), &g, |_| false, |x| one_to_one_loss(&unflatten(x), &reference).unwrap().value)?;
    }

    #[test]
    fn depth_gradient_matches_finite_differences(
        values in prop::collection::vec(0.5f64..4.0, 48),
        holes in prop::collection::vec(any::<bool>(), 48),
        reference in cloud(20..150),
        pose in rigid(),
    ) {
        let (w, h) = (8, 6);
        let cam = CameraModel::new(
            Mat3::from_rows([[6.0, 0.0, 3.5], [0.0, 6.5, 2.5], [0.0, 0.0, 1.0]]),
            *pose.rotation(),
            pose.translation() * 0.1,
            w,
            h,
        ).unwrap();
        let depth = DepthMap::new(w, h, values.iter().zip(&holes).map(|(&d, &hole)| if hole { 0.0 } else { d }).collect());
        let reference = apply_transform(&pose, &reference);
        let pred = pmloss_core::unproject(&depth, &cam).unwrap();
        prop_assume!(pred.valid_count() > 0);
        let clear: Vec<bool> = pred
            .points()
            .iter()
            .enumerate()
            .map(|(i, &p)| pred.is_valid(i) && !tie_free(&PointCloud::from_points(vec![p]), &reference, 1e-4).is_empty())
            .collect();
        let index = SpatialIndex::with_default_leaf(&reference).unwrap();
        let loss = chamfer_sd(&pred, &index).unwrap();
        let g = chain_to_depth(&loss, &depth, &cam).unwrap();
        let f = |d: &[f64]| {
            let cloud = pmloss_core::unproject(&DepthMap::new(w, h, d.to_vec()), &cam).unwrap();
            chamfer_sd(&cloud, &index).unwrap().value
        };
        fd_check(depth.values(), &g, |i| !clear[i], f)?;
        for (i, gi) in g.iter().enumerate() {
            if !depth.is_valid_index(i) {
                prop_assert_eq!(*gi, 0.0);
            }
        }
    }

    #[test]
    fn pm_loss_absorbs_similarity(pred in cloud(30..200), noise in prop::collection::vec(vec3(0.01), 200), t in similarity()) {
        let pointmap: PointCloud = pred.points().iter().zip(&noise).map(|(&p, &e)| p + e).collect();
        let moved = apply_transform(&t, &pointmap);
        let (a, _) = pm_loss(&pred, &pointmap).unwrap();
        let (b, _) = pm_loss(&pred, &moved).unwrap();
        prop_assert!((a.value - b.value).abs() <= 1e-9 * a.value.max(1.0));
    }

    #[test]
    fn umeyama_is_optimal(src in cloud(10..100), noise in prop::collection::vec(vec3(0.05), 100), t in similarity(), deltas in prop::collection::vec((vec3(1.0), -1.0f64..1.0, -6.0f64..-1.0), 20)) {
        let dst: PointCloud = src.points().iter().zip(&noise).map(|(&p, &e)| t.apply_point(p) + e).collect();
        let fit = umeyama(&src, &dst).unwrap().transform;
        let best = alignment_objective(&fit, &src, &dst);
        for (dv, ds, mag) in deltas {
            let eps = 10f64.powf(mag);
            let dr = if dv.norm() > 0.0 { Mat3::from_axis_angle(dv, eps) } else { Mat3::IDENTITY };
            let p = SimilarityTransform::new(
                fit.scale() * (1.0 + ds * eps),
                dr * *fit.rotation(),
                fit.translation() + dv * (eps * fit.scale()),
            ).unwrap();
            prop_assert!(alignment_objective(&p, &src, &dst) >= best);
        }
    }

    #[test]
    fn umeyama_is_equivariant(src in cloud(10..100), t in similarity(), g in rigid()) {
        let dst = apply_transform(&t, &src);
        let fit = umeyama(&apply_transform(&g, &src), &apply_transform(&g, &dst)).unwrap().transform;
        let expected = g.compose(&t.compose(&g.inverse()));
        prop_assert!(rel_close(fit.scale(), expected.scale(), 1e-9));
        prop_assert!(fit.rotation().max_abs_diff(expected.rotation()) <= 1e-9);
        let tn = expected.translation().norm().max(1.0);
        prop_assert!((fit.translation() - expected.translation()).norm() <= 1e-9 * tn);
    }

    #[test]
    fn umeyama_error_shrinks_with_noise(src in cloud(20..100), dirs in prop::collection::vec(vec3(1.0), 100), t in similarity()) {
        let mut errs = Vec::new();
        for sigma in [1e-2, 1e-4, 1e-6] {
            let dst: PointCloud = src.points().iter().zip(&dirs).map(|(&p, &e)| t.apply_point(p) + e * sigma).collect();
            let fit = umeyama(&src, &dst).unwrap().transform;
            errs.push((fit.scale() / t.scale() - 1.0).abs() + fit.rotation().max_abs_diff(t.rotation()));
        }
        prop_assert!(errs[0] >= errs[1] && errs[1] >= errs[2], "{errs:?}");
    }

    #[test]
    fn metrics_symmetry_and_invariance(a in cloud(1..150), b in cloud(1..150), g in rigid(), s in 0.1f64..10.0) {
        let ab = evaluate(&a, &b).unwrap();
        let ba = evaluate(&b, &a).unwrap();
        prop_assert_eq!(ab.acc_mean, ba.comp_mean);
        prop_assert_eq!(ab.acc_median, ba.comp_median);
        let moved = evaluate(&apply_transform(&g, &a), &apply_transform(&g, &b)).unwrap();
        for ((_, x), (_, y)) in ab.fields().iter().zip(moved.fields()) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
        let sc = SimilarityTransform::new(s, Mat3::IDENTITY, Vec3::ZERO).unwrap();
        let scaled = evaluate(&apply_transform(&sc, &a), &apply_transform(&sc, &b)).unwrap();
        for ((_, x), (_, y)) in ab.fields().iter().zip(scaled.fields()) {
            prop_assert!((x * s - y).abs() <= 1e-12 * (x * s).abs().max(1e-12 * s));
        }
    }

    #[test]
    fn metrics_match_double_scan(a in cloud(1..150), b in cloud(1..150)) {
        let scan = |from: &PointCloud, to: &PointCloud| -> Vec<f64> {
            from.iter_valid().map(|(_, p)| brute_nn(p, to).1.sqrt()).collect()
        };
        let (acc, comp) = (scan(&a, &b), scan(&b, &a));
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let m = evaluate(&a, &b).unwrap();
        prop_assert_eq!(m.acc_mean, mean(&acc));
        prop_assert_eq!(m.comp_mean, mean(&comp));
        prop_assert_eq!(m.acc_median, pmloss_core::metrics::median(&acc));
        prop_assert_eq!(m.comp_median, pmloss_core::metrics::median(&comp));
    }

    #[test]
    fn results_ignore_thread_count(pred in cloud(1..3000), reference in cloud(1..3000)) {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| {
                let index = SpatialIndex::with_default_leaf(&reference).unwrap();
                (chamfer_sd(&pred, &index).unwrap(), index.nearest_all(&pred), evaluate(&pred, &reference).unwrap())
            })
        };
        prop_assert_eq!(run(1), run(4));
    }

    #[test]
    fn binary_formats_rewrite_identically(c in cloud(1..300), d in prop::collection::vec(-1.0f64..5.0, 1..200), w in 1usize..20) {
        for fmt in [PlyFormat::Ascii, PlyFormat::BinaryLittleEndian] {
            let first = encode_ply(&c, fmt).unwrap();
            let second = encode_ply(&decode_ply(&first).unwrap(), fmt).unwrap();
            prop_assert_eq!(first, second);
        }
        let h = d.len() / w;
        prop_assume!(h > 0);
        let map = DepthMap::new(w, h, d[..w * h].to_vec());
        let first = encode_pfm(&map);
        prop_assert_eq!(encode_pfm(&decode_pfm(&first).unwrap()), first);
    }
}
