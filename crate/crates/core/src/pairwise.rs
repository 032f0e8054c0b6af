//! Joint correspondence and pose estimation between a reference and a target.
//!
//! Each iteration warps the current target onto the reference with DTW, turns
//! the warping path into correspondence weights, fits a weighted similarity,
//! and moves the target. Iteration stops once the target moves by no more
//! than `c_min` (squared norm of the displacement) or after `i_max` rounds.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::contour::{transform, Contour, Pose};
use crate::dtw::{apply_path, dtw_path, WarpingPath};
use crate::error::{Error, Result};
use crate::procrustes::{
    compute_weights, fit_pose, fit_pose_weighted, soft_boundary, CorrespondenceWeights,
};

/// Consecutive increases of the movement after which a run is abandoned.
pub const DIVERGENCE_WINDOW: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopCriteria {
    pub i_max: usize,
    pub c_min: f64,
}

impl StopCriteria {
    pub fn new(i_max: usize, c_min: f64) -> Result<Self> {
        if i_max == 0 {
            return Err(Error::InvalidArgument("i_max must be at least 1".into()));
        }
        if !(c_min >= 0.0) || !c_min.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "c_min must be a finite non-negative number, got {c_min}"
            )));
        }
        Ok(Self { i_max, c_min })
    }
}

/// `i_max = 100`, `c_min = 1e-4 * min_m ||x_m||`.
pub fn default_stop<C: AsRef<[Complex64]>>(contours: &[C]) -> Result<StopCriteria> {
    let min_norm = contours
        .iter()
        .map(|c| c.as_ref().iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt())
        .fold(None, |acc: Option<f64>, n| {
            Some(acc.map_or(n, |a| a.min(n)))
        })
        .ok_or(Error::EmptySet)?;
    StopCriteria::new(100, 1e-4 * min_norm)
}

/// How correspondences are weighted in the pose fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// Chi-squared correspondence probabilities with the soft boundary.
    #[default]
    Probabilistic,
    /// Ordinary least squares, `W = I`.
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PairOptions {
    pub weighting: Weighting,
    /// Optional Sakoe-Chiba band for the DTW step.
    pub band: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegistrationResult {
    /// Cumulative pose taking the original target onto the reference.
    pub pose: Pose,
    /// Warping path between reference and target from the last iteration.
    pub path: WarpingPath,
    pub weights: CorrespondenceWeights,
    pub iterations: usize,
    pub final_movement: f64,
    pub converged: bool,
    /// Weighted objective at the fitted pose, one entry per iteration.
    pub cost_trace: Vec<f64>,
    pub movement_trace: Vec<f64>,
    /// The target after registration.
    #[serde(skip)]
    pub registered: Contour,
}

pub fn register_pair(
    reference: &Contour,
    target: &Contour,
    stop: &StopCriteria,
) -> Result<RegistrationResult> {
    register_pair_with(reference, target, stop, &PairOptions::default())
}

pub fn register_pair_with(
    reference: &Contour,
    target: &Contour,
    stop: &StopCriteria,
    options: &PairOptions,
) -> Result<RegistrationResult> {
    let mut y = target.clone();
    let mut total = Pose::identity();
    let mut cost_trace = Vec::new();
    let mut movement_trace: Vec<f64> = Vec::new();
    let mut last = None;
    let mut converged = false;
    let mut rising = 0;

    for iteration in 1..=stop.i_max {
        let step = || -> Result<_> {
            let (path, _) = dtw_path(reference, &y, options.band)?;
            let aligned = apply_path(reference, &y, &path)?;
            let (pose, weights) = match options.weighting {
                Weighting::Probabilistic => {
                    let (w, _) = compute_weights(&aligned)?;
                    let w = soft_boundary(&w, &path)?;
                    (fit_pose_weighted(&aligned.a, &aligned.b, &w)?, w)
                }
                Weighting::Uniform => (
                    fit_pose(&aligned.a, &aligned.b)?,
                    CorrespondenceWeights::ones(path.len()),
                ),
            };
            let cost: f64 = aligned
                .a
                .iter()
                .zip(&aligned.b)
                .zip(weights.as_slice())
                .map(|((&a, &b), &w)| w * (a - pose.apply(b)).norm_sqr())
                .sum();
            Ok((path, weights, pose, cost))
        };
        let (path, weights, pose, cost) = step().map_err(|e| e.at_iteration(iteration))?;

        let moved = transform(&y, &pose);
        let movement: f64 = y
            .points()
            .iter()
            .zip(moved.points())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        total = total.then(&pose);
        y = moved;

        if movement_trace.last().is_some_and(|&prev| movement > prev) {
            rising += 1;
        } else {
            rising = 0;
        }
        cost_trace.push(cost);
        movement_trace.push(movement);
        last = Some((path, weights));

        if movement <= stop.c_min {
            converged = true;
            break;
        }
        if rising >= DIVERGENCE_WINDOW {
            break;
        }
    }

    let (path, weights) = last.expect("i_max >= 1");
    Ok(RegistrationResult {
        pose: total,
        path,
        weights,
        iterations: cost_trace.len(),
        final_movement: *movement_trace.last().expect("i_max >= 1"),
        converged,
        cost_trace,
        movement_trace,
        registered: y,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::d_test;

    fn blob(n: usize) -> Contour {
        // Smooth, asymmetric open curve.
        Contour::new(
            (0..n)
                .map(|k| {
                    let s = k as f64 / (n - 1) as f64 * 5.0;
                    Complex64::from_polar(80.0 + 25.0 * (2.0 * s).sin(), s)
                        + Complex64::new(200.0, 150.0)
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn default_stop_examples() {
        let a = vec![Complex64::new(300.0, 400.0)];
        let s = default_stop(std::slice::from_ref(&a)).unwrap();
        assert_eq!(s.i_max, 100);
        assert!((s.c_min - 0.05).abs() < 1e-15);
        let b = vec![Complex64::new(0.0, 200.0)];
        let c = vec![Complex64::new(800.0, 0.0)];
        assert!((default_stop(&[b, c]).unwrap().c_min - 0.02).abs() < 1e-15);
        assert!(matches!(
            default_stop::<Vec<Complex64>>(&[]),
            Err(Error::EmptySet)
        ));
    }

    #[test]
    fn stop_validation() {
        assert!(StopCriteria::new(0, 1.0).is_err());
        assert!(StopCriteria::new(1, -1.0).is_err());
        assert!(StopCriteria::new(1, f64::NAN).is_err());
    }

    #[test]
    fn self_registration_is_a_fixed_point() {
        let x = blob(120);
        let stop = default_stop(&[x.points()]).unwrap();
        let res = register_pair(&x, &x, &stop).unwrap();
        assert!(res.converged);
        assert!(res.iterations <= 2);
        assert!((res.pose.r - Complex64::new(1.0, 0.0)).norm() < 1e-12);
        assert!(res.pose.t.norm() < 1e-9);
        assert_eq!(res.path, WarpingPath::diagonal(120));
        assert!(res.weights.as_slice().iter().all(|&w| w == 1.0));
    }

    #[test]
    fn recovers_inverse_of_applied_pose() {
        let x = blob(150);
        let p = Pose::from_parts(1.7, 2.4, Complex64::new(-40.0, 90.0));
        let y = transform(&x, &p);
        let stop = default_stop(&[x.points(), y.points()]).unwrap();
        let res = register_pair(&x, &y, &stop).unwrap();
        let inv = p.inverse();
        assert!(res.converged);
        assert!((res.pose.r - inv.r).norm() <= 1e-6 * inv.r.norm());
        assert!((res.pose.t - inv.t).norm() <= 1e-6 * inv.t.norm());
        let moved = transform(&y, &res.pose);
        for (a, b) in moved.points().iter().zip(res.registered.points()) {
            assert!((a - b).norm() <= 1e-9 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn registers_a_subsampled_copy() {
        let x = blob(301);
        let sub = Contour::new(x.points().iter().step_by(2).copied().collect()).unwrap();
        let p = Pose::from_parts(0.6, -1.0, Complex64::new(30.0, 10.0));
        let y = transform(&sub, &p);
        let stop = default_stop(&[x.points(), y.points()]).unwrap();
        let res = register_pair(&x, &y, &stop).unwrap();
        let d = d_test(x.points(), res.registered.points()).unwrap();
        assert!(d < 1.0, "d_test = {d}");
    }

    #[test]
    fn unweighted_matches_weighted_on_exact_copies() {
        let x = blob(100);
        // Close enough that the first warping path is already diagonal, so the
        // probabilistic weights are all one.
        let y = transform(&x, &Pose::from_parts(1.0, 0.0005, Complex64::new(0.5, 0.3)));
        let aligned = apply_path(&x, &y, &dtw_path(&x, &y, None).unwrap().0).unwrap();
        let (w, _) = compute_weights(&aligned).unwrap();
        assert!(w.as_slice().iter().all(|&v| v == 1.0));

        let stop = default_stop(&[x.points()]).unwrap();
        let a = register_pair(&x, &y, &stop).unwrap();
        let uniform = PairOptions {
            weighting: Weighting::Uniform,
            band: None,
        };
        let b = register_pair_with(&x, &y, &stop, &uniform).unwrap();
        assert_eq!(a.path, b.path);
        assert_eq!(a.pose, b.pose);
        assert_eq!(a.registered, b.registered);
    }

    #[test]
    fn registration_is_idempotent() {
        let x = blob(200);
        let mut noisy: Vec<Complex64> =
            transform(&x, &Pose::from_parts(0.8, 0.7, Complex64::new(12.0, -3.0))).into_points();
        for (k, z) in noisy.iter_mut().enumerate() {
            *z += Complex64::new((k as f64 * 1.3).sin(), (k as f64 * 0.7).cos()) * 0.5;
        }
        let y = Contour::new(noisy).unwrap();
        let stop = default_stop(&[x.points(), y.points()]).unwrap();
        let first = register_pair(&x, &y, &stop).unwrap();
        let again = register_pair(&x, &first.registered, &stop).unwrap();
        assert!(again.converged);
        assert!(
            (again.pose.r - Complex64::new(1.0, 0.0)).norm() < 1e-3,
            "{:?}",
            again.pose
        );
        assert!(again.pose.t.norm() < 1.0, "{:?}", again.pose);
        assert!(first.cost_trace.last().unwrap() <= &first.cost_trace[0]);
    }

    #[test]
    fn errors_carry_iteration_context() {
        let x = blob(50);
        let y = blob(10);
        let stop = StopCriteria::new(5, 0.0).unwrap();
        let options = PairOptions {
            weighting: Weighting::Probabilistic,
            band: Some(3),
        };
        match register_pair_with(&x, &y, &stop, &options) {
            Err(Error::AtIteration {
                iteration: 1,
                source,
            }) => {
                assert!(matches!(*source, Error::BandTooNarrow { .. }))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
