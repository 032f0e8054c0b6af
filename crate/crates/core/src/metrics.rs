//! Registration quality: mean nearest-point distance and area overlap.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spatial::NearestGrid;

/// Default rasterization cell size in pixels.
pub const DEFAULT_RESOLUTION: f64 = 0.25;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub d_test: f64,
    pub iou: f64,
    pub n_reference: usize,
    pub n_target: usize,
}

impl MetricReport {
    pub fn evaluate(
        reference: &[Complex64],
        target: &[Complex64],
        resolution: f64,
    ) -> Result<Self> {
        Ok(Self {
            d_test: d_test(reference, target)?,
            iou: iou(reference, target, resolution)?,
            n_reference: reference.len(),
            n_target: target.len(),
        })
    }
}

/// Mean over target points of the distance to the nearest reference point.
/// Not symmetric.
pub fn d_test(reference: &[Complex64], target: &[Complex64]) -> Result<f64> {
    if reference.is_empty() || target.is_empty() {
        return Err(Error::InvalidArgument(
            "d_test needs non-empty point sets".into(),
        ));
    }
    let grid = NearestGrid::new(reference);
    let sum: f64 = target.iter().map(|&q| grid.nearest(q).1.sqrt()).sum();
    Ok(sum / target.len() as f64)
}

/// Intersection over union of the regions enclosed by the two contours.
///
/// Each contour is closed by joining its last point to its first and filled
/// with the even-odd rule on a shared grid of square cells of side
/// `resolution`, covering the joint bounding box plus two cells of padding.
/// A cell is inside when its center is.
pub fn iou(reference: &[Complex64], target: &[Complex64], resolution: f64) -> Result<f64> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "resolution must be positive, got {resolution}"
        )));
    }
    if reference.len() < 3 || target.len() < 3 {
        return Err(Error::InvalidArgument(
            "IoU needs at least 3 points per contour".into(),
        ));
    }
    let (mut lo, mut hi) = (reference[0], reference[0]);
    for z in reference.iter().chain(target) {
        lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
        hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
    }
    let pad = 2.0 * resolution;
    let x0 = lo.re - pad;
    let y0 = lo.im - pad;
    let nx = ((hi.re + pad - x0) / resolution).ceil() as usize;
    let ny = ((hi.im + pad - y0) / resolution).ceil() as usize;
    if nx.saturating_mul(ny) > 400_000_000 {
        return Err(Error::InvalidArgument(format!(
            "raster of {nx} x {ny} cells is too large; increase the resolution"
        )));
    }

    let mut row_a = vec![false; nx];
    let mut row_b = vec![false; nx];
    let mut crossings = Vec::new();
    let (mut area_a, mut area_b, mut inter, mut union) = (0u64, 0u64, 0u64, 0u64);
    for iy in 0..ny {
        let y = y0 + (iy as f64 + 0.5) * resolution;
        fill_row(reference, y, x0, resolution, &mut crossings, &mut row_a);
        fill_row(target, y, x0, resolution, &mut crossings, &mut row_b);
        for (&a, &b) in row_a.iter().zip(&row_b) {
            area_a += a as u64;
            area_b += b as u64;
            inter += (a && b) as u64;
            union += (a || b) as u64;
        }
    }
    if area_a == 0 || area_b == 0 {
        return Err(Error::ZeroArea);
    }
    Ok(inter as f64 / union as f64)
}

/// Mark the cells of one raster row whose centers lie inside the polygon.
fn fill_row(
    polygon: &[Complex64],
    y: f64,
    x0: f64,
    resolution: f64,
    crossings: &mut Vec<f64>,
    row: &mut [bool],
) {
    crossings.clear();
    let n = polygon.len();
    for k in 0..n {
        let p = polygon[k];
        let q = polygon[(k + 1) % n];
        if (p.im > y) != (q.im > y) {
            crossings.push(p.re + (y - p.im) * (q.re - p.re) / (q.im - p.im));
        }
    }
    crossings.sort_by(f64::total_cmp);
    row.iter_mut().for_each(|c| *c = false);
    let nx = row.len();
    for span in crossings.chunks_exact(2) {
        // Cells with center x in [span[0], span[1]).
        let first = ((span[0] - x0) / resolution - 0.5).ceil().max(0.0) as usize;
        let end = ((span[1] - x0) / resolution - 0.5).ceil().max(0.0) as usize;
        for c in row.iter_mut().take(end.min(nx)).skip(first) {
            *c = true;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::Pose;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn brute_d_test(reference: &[Complex64], target: &[Complex64]) -> f64 {
        target
            .iter()
            .map(|q| {
                reference
                    .iter()
                    .map(|r| (r - q).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .sum::<f64>()
            / target.len() as f64
    }

    fn square(offset: f64) -> Vec<Complex64> {
        vec![
            c(offset, 0.0),
            c(offset + 1.0, 0.0),
            c(offset + 1.0, 1.0),
            c(offset, 1.0),
        ]
    }

    #[test]
    fn d_test_examples() {
        let x = square(0.0);
        assert_eq!(d_test(&x, &x).unwrap(), 0.0);
        assert_eq!(
            d_test(&[c(3.0, 0.0), c(0.0, 4.0)], &[c(0.0, 0.0)]).unwrap(),
            3.0
        );
        assert!(d_test(&[], &x).is_err());
    }

    #[test]
    fn d_test_of_dense_shift_approaches_one() {
        let dense: Vec<Complex64> = (0..2001).map(|k| c(k as f64 * 0.01, 0.0)).collect();
        let shifted: Vec<Complex64> = dense.iter().map(|z| z + c(0.0, 1.0)).collect();
        let d = d_test(&dense, &shifted).unwrap();
        assert!(d <= 1.0 && d > 0.999, "{d}");
        // Shift along a curved path: the nearest point may be a diagonal neighbour.
        let arc: Vec<Complex64> = (0..4000)
            .map(|k| Complex64::from_polar(50.0, k as f64 * 1e-3))
            .collect();
        let moved: Vec<Complex64> = arc.iter().map(|z| z + c(1.0, 0.0)).collect();
        let d = d_test(&arc, &moved).unwrap();
        assert!(d < 1.0, "{d}");
    }

    #[test]
    fn iou_examples() {
        let a = square(0.0);
        assert!((iou(&a, &a, 0.01).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(iou(&a, &square(3.0), 0.01).unwrap(), 0.0);
        let shifted = iou(&a, &square(0.5), 0.01).unwrap();
        assert!((shifted - 1.0 / 3.0).abs() < 0.02, "{shifted}");
        assert_eq!(shifted, iou(&square(0.5), &a, 0.01).unwrap());
    }

    #[test]
    fn iou_errors() {
        let a = square(0.0);
        let flat = vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)];
        assert!(matches!(iou(&a, &flat, 0.1), Err(Error::ZeroArea)));
        assert!(iou(&a, &a[..2], 0.1).is_err());
        assert!(iou(&a, &a, 0.0).is_err());
    }

    #[test]
    fn iou_converges_with_resolution() {
        let circle: Vec<Complex64> = (0..200)
            .map(|k| Complex64::from_polar(10.0, k as f64 * std::f64::consts::TAU / 200.0))
            .collect();
        let other: Vec<Complex64> = circle.iter().map(|z| z * 0.9 + c(1.7, -0.4)).collect();
        let values: Vec<f64> = [1.0, 0.5, 0.25, 0.125, 0.0625]
            .iter()
            .map(|&r| iou(&circle, &other, r).unwrap())
            .collect();
        let changes: Vec<f64> = values.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        for w in changes.windows(2) {
            assert!(w[1] < 2.0 * w[0] + 1e-4, "{values:?}");
        }
    }

    proptest! {
        #[test]
        fn d_test_matches_brute_force(
            reference in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..200),
            target in prop::collection::vec((-80.0..80.0f64, -80.0..80.0f64), 1..50),
        ) {
            let r: Vec<Complex64> = reference.iter().map(|&(x, y)| c(x, y)).collect();
            let t: Vec<Complex64> = target.iter().map(|&(x, y)| c(x, y)).collect();
            let fast = d_test(&r, &t).unwrap();
            let slow = brute_d_test(&r, &t);
            prop_assert!((fast - slow).abs() <= 1e-12 * (1.0 + slow));
        }

        #[test]
        fn d_test_scales_with_pose(
            reference in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 2..100),
            target in prop::collection::vec((-50.0..50.0f64, -50.0..50.0f64), 1..50),
            s in 0.1..10.0f64, a in -3.1..3.1f64, tx in -100.0..100.0f64,
        ) {
            let p = Pose::from_parts(s, a, c(tx, -tx));
            let r: Vec<Complex64> = reference.iter().map(|&(x, y)| c(x, y)).collect();
            let t: Vec<Complex64> = target.iter().map(|&(x, y)| c(x, y)).collect();
            let rp: Vec<Complex64> = r.iter().map(|&z| p.apply(z)).collect();
            let tp: Vec<Complex64> = t.iter().map(|&z| p.apply(z)).collect();
            let d0 = d_test(&r, &t).unwrap();
            let d1 = d_test(&rp, &tp).unwrap();
            prop_assert!((d1 - s * d0).abs() <= 1e-9 * (1.0 + s * d0));
        }

        #[test]
        fn iou_is_symmetric(
            ra in 1.0..10.0f64, rb in 1.0..10.0f64,
            dx in -8.0..8.0f64, dy in -8.0..8.0f64,
        ) {
            let a: Vec<Complex64> = (0..40)
                .map(|k| Complex64::from_polar(ra, k as f64 * 0.157))
                .collect();
            let b: Vec<Complex64> = (0..30)
                .map(|k| Complex64::from_polar(rb, k as f64 * 0.21) + c(dx, dy))
                .collect();
            let ab = iou(&a, &b, 0.1).unwrap();
            let ba = iou(&b, &a, 0.1).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
        }
    }
}
