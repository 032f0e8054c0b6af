//! Closed-form complex similarity fits and correspondence weights.
//!
//! Both fits solve the 2x2 normal equations of `min || x1 - (r x2 + t) ||^2`
//! (optionally weighted) directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{inner, to_preshape, Pose};
use crate::dtw::{AlignedPair, WarpingPath};
use crate::error::{Error, Result};

/// Relative determinant threshold of the normal equations.
const SINGULAR_REL: f64 = 1e-12;
/// Weights at or below this count as zero when checking support.
const WEIGHT_EPS: f64 = 1e-12;
/// Deformation variances at or below this are treated as exact correspondence.
/// Preshapes have unit norm, so this is far below any real deformation.
pub const SIGMA2_ZERO: f64 = 1e-24;

/// Per-correspondence probabilities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CorrespondenceWeights(Vec<f64>);

impl CorrespondenceWeights {
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if let Some(l) = w.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument(format!(
                "weight {} at index {l} is outside [0, 1]",
                w[l]
            )));
        }
        Ok(Self(w))
    }

    pub fn ones(len: usize) -> Self {
        Self(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Deformation model estimated while computing weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DeformationStats {
    /// Sample variance of the preshape residuals.
    pub sigma2: f64,
    /// Unit-modulus rotation taking the second preshape onto the first.
    pub rbar: Complex64,
    /// Normalized squared residuals `2 |delta_l|^2 / sigma2`.
    pub deltas: Vec<f64>,
}

/// Weight of a correspondence with normalized distance `delta`: the upper
/// tail of a chi-squared distribution with two degrees of freedom.
#[inline]
pub fn chi2_weight(delta: f64) -> f64 {
    (-0.5 * delta).exp()
}

/// Least-squares pose mapping `x2` onto `x1`.
pub fn fit_pose(x1: &[Complex64], x2: &[Complex64]) -> Result<Pose> {
    check_lengths(x1, x2)?;
    let mut s22 = 0.0;
    let mut s2 = Complex64::new(0.0, 0.0);
    let mut s21 = Complex64::new(0.0, 0.0);
    let mut s1 = Complex64::new(0.0, 0.0);
    for (&a, &b) in x1.iter().zip(x2) {
        s22 += b.norm_sqr();
        s2 += b;
        s21 += b.conj() * a;
        s1 += a;
    }
    solve_normal(s22, s2, x1.len() as f64, s21, s1)
}

/// Weighted least-squares pose mapping `x2` onto `x1`.
pub fn fit_pose_weighted(
    x1: &[Complex64],
    x2: &[Complex64],
    w: &CorrespondenceWeights,
) -> Result<Pose> {
    check_lengths(x1, x2)?;
    if w.len() != x1.len() {
        return Err(Error::LengthMismatch {
            left: x1.len(),
            right: w.len(),
        });
    }
    let support = w.as_slice().iter().filter(|&&v| v > WEIGHT_EPS).count();
    if support < 2 {
        return Err(Error::SingularSystem(format!(
            "{support} positive weights, need at least 2"
        )));
    }
    let mut s22 = 0.0;
    let mut s2 = Complex64::new(0.0, 0.0);
    let mut sw = 0.0;
    let mut s21 = Complex64::new(0.0, 0.0);
    let mut s1 = Complex64::new(0.0, 0.0);
    for ((&a, &b), &wl) in x1.iter().zip(x2).zip(w.as_slice()) {
        s22 += wl * b.norm_sqr();
        s2 += wl * b;
        sw += wl;
        s21 += wl * (b.conj() * a);
        s1 += wl * a;
    }
    solve_normal(s22, s2, sw, s21, s1)
}

/// Solve `[[s22, conj(s2)], [s2, sw]] [r, t]^T = [s21, s1]^T`.
fn solve_normal(s22: f64, s2: Complex64, sw: f64, s21: Complex64, s1: Complex64) -> Result<Pose> {
    let scale = s22 * sw;
    let det = scale - s2.norm_sqr();
    if !(scale > 0.0) || !(det > SINGULAR_REL * scale) {
        return Err(Error::SingularSystem(format!(
            "determinant {det:e} relative to {scale:e}"
        )));
    }
    let r = (sw * s21 - s2.conj() * s1) / det;
    let t = (s22 * s1 - s2 * s21) / det;
    let pose = Pose::new(r, t);
    if !pose.is_finite() || r == Complex64::new(0.0, 0.0) {
        return Err(Error::SingularSystem("non-finite or zero scale".into()));
    }
    Ok(pose)
}

fn check_lengths(x1: &[Complex64], x2: &[Complex64]) -> Result<()> {
    if x1.len() != x2.len() {
        return Err(Error::LengthMismatch {
            left: x1.len(),
            right: x2.len(),
        });
    }
    if x1.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 correspondences, got {}",
            x1.len()
        )));
    }
    Ok(())
}

/// Correspondence weights of an aligned pair.
///
/// The first sequence's preshape is taken as the mean; the rotated residual
/// of the second preshape against it is modelled as isotropic complex
/// Gaussian with variance estimated from the sample.
pub fn compute_weights(a: &AlignedPair) -> Result<(CorrespondenceWeights, DeformationStats)> {
    let len = a.a.len();
    if len < 2 || a.b.len() != len {
        return Err(Error::LengthMismatch {
            left: len,
            right: a.b.len(),
        });
    }
    let (tau1, _, _) = to_preshape(&a.a)?;
    let (tau2, _, _) = to_preshape(&a.b)?;
    let z = inner(tau1.points(), tau2.points());
    let rbar = Complex64::from_polar(1.0, -z.arg());
    let residual: Vec<f64> = tau1
        .points()
        .iter()
        .zip(tau2.points())
        .map(|(&t1, &t2)| (rbar * t2 - t1).norm_sqr())
        .collect();
    let sigma2 = residual.iter().sum::<f64>() / len as f64;
    if sigma2 <= SIGMA2_ZERO {
        let stats = DeformationStats {
            sigma2,
            rbar,
            deltas: vec![0.0; len],
        };
        return Ok((CorrespondenceWeights::ones(len), stats));
    }
    let deltas: Vec<f64> = residual.iter().map(|d| 2.0 * d / sigma2).collect();
    let w = deltas.iter().map(|&d| chi2_weight(d)).collect();
    Ok((
        CorrespondenceWeights(w),
        DeformationStats {
            sigma2,
            rbar,
            deltas,
        },
    ))
}

/// Zero the weights of repeated correspondences at both ends of the path.
///
/// For each side, every pair before the last one that still shares the
/// starting index, and every pair after the first one that already reaches
/// the final index, gets weight zero.
pub fn soft_boundary(
    w: &CorrespondenceWeights,
    path: &WarpingPath,
) -> Result<CorrespondenceWeights> {
    let len = path.len();
    if w.len() != len {
        return Err(Error::LengthMismatch {
            left: w.len(),
            right: len,
        });
    }
    let mut out = w.0.clone();
    if len == 0 {
        return Ok(CorrespondenceWeights(out));
    }
    for side in 0..2 {
        let idx: Vec<usize> = path.side(side).collect();
        let first = idx[0];
        let last = idx[len - 1];
        let lead = idx.iter().rposition(|&n| n == first).unwrap_or(0);
        let trail = idx.iter().position(|&n| n == last).unwrap_or(len - 1);
        out[..lead].iter_mut().for_each(|v| *v = 0.0);
        out[trail + 1..].iter_mut().for_each(|v| *v = 0.0);
    }
    Ok(CorrespondenceWeights(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contour::{transform, Contour};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<Complex64> {
        (0..n)
            .map(|_| {
                c(
                    rng.random_range(-100.0..100.0),
                    rng.random_range(-100.0..100.0),
                )
            })
            .collect()
    }

    fn objective(x1: &[Complex64], x2: &[Complex64], w: &[f64], p: &Pose) -> f64 {
        x1.iter()
            .zip(x2)
            .zip(w)
            .map(|((&a, &b), &wl)| wl * (a - p.apply(b)).norm_sqr())
            .sum()
    }

    #[test]
    fn self_fit_is_identity() {
        let x = vec![c(0.0, 0.0), c(3.0, 1.0), c(2.0, -4.0)];
        let p = fit_pose(&x, &x).unwrap();
        assert!((p.r - c(1.0, 0.0)).norm() < 1e-12);
        assert!(p.t.norm() < 1e-12);
    }

    #[test]
    fn recovers_exact_similarity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x2 = random_points(&mut rng, 20);
        let truth = Pose::new(c(0.0, 2.0), c(1.0, 1.0));
        let x1: Vec<_> = x2.iter().map(|&z| truth.apply(z)).collect();
        let p = fit_pose(&x1, &x2).unwrap();
        assert!((p.r - truth.r).norm() < 1e-10);
        assert!((p.t - truth.t).norm() < 1e-10);
    }

    #[test]
    fn constant_target_is_singular() {
        let x1 = vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 0.0)];
        let x2 = vec![c(5.0, 5.0); 3];
        assert!(matches!(fit_pose(&x1, &x2), Err(Error::SingularSystem(_))));
        assert!(matches!(
            fit_pose_weighted(&x1, &x2, &CorrespondenceWeights::ones(3)),
            Err(Error::SingularSystem(_))
        ));
    }

    #[test]
    fn weighted_support_check() {
        let x = vec![c(0.0, 0.0), c(1.0, 0.0), c(2.0, 1.0)];
        let w = CorrespondenceWeights::new(vec![0.0, 1.0, 1e-13]).unwrap();
        assert!(matches!(
            fit_pose_weighted(&x, &x, &w),
            Err(Error::SingularSystem(_))
        ));
        // Two positive weights on distinct points suffice.
        let w = CorrespondenceWeights::new(vec![0.0, 1.0, 0.5]).unwrap();
        assert!(fit_pose_weighted(&x, &x, &w).is_ok());
        // Positive weights only on coincident points do not.
        let y = vec![c(0.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)];
        assert!(fit_pose_weighted(&x, &y, &w).is_err());
    }

    #[test]
    fn zero_weight_removes_outlier() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x2 = random_points(&mut rng, 30);
        let mut x1 = x2.clone();
        x1[7] += c(250.0, -80.0);
        let mut w = vec![1.0; 30];
        w[7] = 0.0;
        let p = fit_pose_weighted(&x1, &x2, &CorrespondenceWeights::new(w).unwrap()).unwrap();
        assert!((p.r - c(1.0, 0.0)).norm() < 1e-10);
        assert!(p.t.norm() < 1e-10);
    }

    #[test]
    fn unit_weights_reproduce_plain_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let n = rng.random_range(2..80);
            let x1 = random_points(&mut rng, n);
            let x2 = random_points(&mut rng, n);
            let p = fit_pose(&x1, &x2).unwrap();
            let q = fit_pose_weighted(&x1, &x2, &CorrespondenceWeights::ones(n)).unwrap();
            assert!((p.r - q.r).norm() <= 1e-12 * p.r.norm().max(1.0));
            assert!((p.t - q.t).norm() <= 1e-12 * p.t.norm().max(1.0));
        }
    }

    /// Oracle: the closed form beats random perturbations around it.
    #[test]
    fn closed_forms_beat_perturbations() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let x1 = random_points(&mut rng, 50);
        let x2 = random_points(&mut rng, 50);
        let w: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..1.0)).collect();
        let ones = vec![1.0; 50];
        let p = fit_pose(&x1, &x2).unwrap();
        let q =
            fit_pose_weighted(&x1, &x2, &CorrespondenceWeights::new(w.clone()).unwrap()).unwrap();
        let best_p = objective(&x1, &x2, &ones, &p);
        let best_q = objective(&x1, &x2, &w, &q);
        for k in 0..1000 {
            let eps = 10f64.powi(-(k % 6));
            let dr = c(rng.random_range(-eps..eps), rng.random_range(-eps..eps));
            let dt = c(rng.random_range(-eps..eps), rng.random_range(-eps..eps)) * 100.0;
            let pp = Pose::new(p.r + dr, p.t + dt);
            let qq = Pose::new(q.r + dr, q.t + dt);
            assert!(objective(&x1, &x2, &ones, &pp) >= best_p * (1.0 - 1e-12));
            assert!(objective(&x1, &x2, &w, &qq) >= best_q * (1.0 - 1e-12));
        }
    }

    #[test]
    fn residual_is_orthogonal_to_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let x1 = random_points(&mut rng, 40);
            let x2 = random_points(&mut rng, 40);
            let p = fit_pose(&x1, &x2).unwrap();
            let res: Vec<Complex64> = x1.iter().zip(&x2).map(|(&a, &b)| a - p.apply(b)).collect();
            let scale: f64 = x1.iter().map(|z| z.norm_sqr()).sum::<f64>()
                + x2.iter().map(|z| z.norm_sqr()).sum::<f64>();
            let g1: Complex64 = x2.iter().zip(&res).map(|(b, r)| b.conj() * r).sum();
            let g2: Complex64 = res.iter().sum();
            assert!(g1.norm() <= 1e-9 * scale);
            assert!(g2.norm() <= 1e-9 * scale.sqrt());
        }
    }

    #[test]
    fn weight_formula_values() {
        assert_eq!(chi2_weight(0.0), 1.0);
        assert!((chi2_weight(2.0 * 2f64.ln()) - 0.5).abs() < 1e-12);
        // Upper tail of the chi2(2) CDF 1 - exp(-x/2), by quadrature.
        let delta = 3.7;
        let steps = 200_000;
        let h = delta / steps as f64;
        let integral: f64 = (0..steps)
            .map(|k| {
                let u = (k as f64 + 0.5) * h;
                (-u / 2.0).exp() / 2.0 * h
            })
            .sum();
        assert!((chi2_weight(delta) - (1.0 - integral)).abs() < 1e-9);
    }

    #[test]
    fn perfect_correspondence_gives_unit_weights() {
        let x: Vec<Complex64> = (0..20)
            .map(|k| Complex64::from_polar(3.0 + (k as f64 * 0.7).sin(), k as f64 * 0.3))
            .collect();
        let rot = Complex64::from_polar(2.5, 1.1);
        let y: Vec<Complex64> = x.iter().map(|z| rot * z + c(4.0, -9.0)).collect();
        let aligned = AlignedPair {
            a: x,
            b: y,
            path: WarpingPath::diagonal(20),
        };
        let (w, stats) = compute_weights(&aligned).unwrap();
        assert!(stats.sigma2 <= SIGMA2_ZERO);
        assert!(w.as_slice().iter().all(|&v| v == 1.0));
        assert!((stats.rbar.norm() - 1.0).abs() < 1e-12);
        assert!((stats.rbar - Complex64::from_polar(1.0, -1.1)).norm() < 1e-9);
    }

    #[test]
    fn weights_follow_deformation() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let x = random_points(&mut rng, 60);
        let mut y = x.clone();
        for z in y.iter_mut() {
            *z += c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        y[10] += c(60.0, 60.0);
        let aligned = AlignedPair {
            a: x,
            b: y,
            path: WarpingPath::diagonal(60),
        };
        let (w, stats) = compute_weights(&aligned).unwrap();
        assert!(stats.sigma2 > 0.0);
        assert!((stats.rbar.norm() - 1.0).abs() < 1e-12);
        let ws = w.as_slice();
        assert!(ws.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(ws[10] < 1e-6);
        // Monotone in delta.
        let mut order: Vec<usize> = (0..60).collect();
        order.sort_by(|&i, &j| stats.deltas[i].total_cmp(&stats.deltas[j]));
        for k in order.windows(2) {
            assert!(ws[k[0]] >= ws[k[1]]);
        }
        for (d, wl) in stats.deltas.iter().zip(ws) {
            assert!((chi2_weight(*d) - wl).abs() < 1e-15);
        }
    }

    #[test]
    fn soft_boundary_traces() {
        let w = CorrespondenceWeights::new(vec![0.9, 0.8, 0.7]).unwrap();
        let diag = WarpingPath::diagonal(3);
        assert_eq!(soft_boundary(&w, &diag).unwrap(), w);

        let path = WarpingPath::new(vec![(0, 0), (1, 0), (2, 1)], 3, 2).unwrap();
        assert_eq!(
            soft_boundary(&w, &path).unwrap().as_slice(),
            &[0.0, 0.8, 0.7]
        );

        let w4 = CorrespondenceWeights::new(vec![0.9, 0.8, 0.7, 0.6]).unwrap();
        let path = WarpingPath::new(vec![(0, 0), (0, 1), (1, 2), (2, 2)], 3, 3).unwrap();
        assert_eq!(
            soft_boundary(&w4, &path).unwrap().as_slice(),
            &[0.0, 0.8, 0.7, 0.0]
        );

        assert!(matches!(
            soft_boundary(&w4, &diag),
            Err(Error::LengthMismatch { .. })
        ));
    }

    fn random_path() -> impl Strategy<Value = WarpingPath> {
        prop::collection::vec(0u8..3, 1..40).prop_map(|steps| {
            let mut pairs = vec![(0usize, 0usize)];
            for s in steps {
                let (i, j) = *pairs.last().unwrap();
                pairs.push(match s {
                    0 => (i + 1, j),
                    1 => (i, j + 1),
                    _ => (i + 1, j + 1),
                });
            }
            WarpingPath::from_pairs(pairs).unwrap()
        })
    }

    proptest! {
        #[test]
        fn soft_boundary_only_lowers_end_weights(
            path in random_path(),
            seed in any::<u64>(),
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = CorrespondenceWeights::new(
                (0..path.len()).map(|_| rng.random_range(0.0..=1.0)).collect()
            ).unwrap();
            let out = soft_boundary(&w, &path).unwrap();
            let mut lo = 0;
            let mut hi = path.len() - 1;
            for side in 0..2 {
                let idx: Vec<usize> = path.side(side).collect();
                lo = lo.max(idx.iter().rposition(|&n| n == idx[0]).unwrap());
                hi = hi.min(idx.iter().position(|&n| n == idx[idx.len() - 1]).unwrap());
            }
            for (l, (&before, &after)) in w.as_slice().iter().zip(out.as_slice()).enumerate() {
                prop_assert!(after <= before);
                if l >= lo && l <= hi {
                    prop_assert_eq!(after, before);
                } else {
                    prop_assert_eq!(after, 0.0);
                }
            }
        }

        #[test]
        fn exact_recovery_of_similarity(
            xy in prop::collection::vec((-300.0..300.0f64, -300.0..300.0f64), 3..60),
            s in 0.05..20.0f64,
            a in -3.1..3.1f64,
            tx in -1e3..1e3f64,
            ty in -1e3..1e3f64,
        ) {
            let x = Contour::from_xy(&xy).unwrap();
            prop_assume!(to_preshape(x.points()).is_ok());
            let p = Pose::from_parts(s, a, c(tx, ty));
            let y = transform(&x, &p);
            let q = fit_pose(y.points(), x.points()).unwrap();
            prop_assert!((q.r - p.r).norm() <= 1e-9 * p.r.norm());
            prop_assert!((q.t - p.t).norm() <= 1e-9 * p.t.norm().max(1.0));
        }
    }
}
