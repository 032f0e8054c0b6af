//! Plain iterative closest point: nearest-neighbour correspondences and an
//! unweighted similarity fit, iterated from the identity pose.

use serde::Serialize;

use crate::contour::{transform, Contour, Pose};
use crate::error::Result;
use crate::pairwise::StopCriteria;
use crate::procrustes::fit_pose;
use crate::spatial::NearestGrid;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IcpResult {
    /// Pose taking the original target onto the reference.
    pub pose: Pose,
    pub iterations: usize,
    pub converged: bool,
    /// Mean squared nearest-neighbour distance after the final fit.
    pub final_mse: f64,
    pub mse_trace: Vec<f64>,
    pub movement_trace: Vec<f64>,
    #[serde(skip)]
    pub registered: Contour,
}

/// Every target point is matched to its nearest reference point (lowest
/// index on ties), then the target is fitted onto those matches. Stops when
/// the squared displacement of the target drops to `c_min`.
pub fn register_icp(
    reference: &Contour,
    target: &Contour,
    stop: &StopCriteria,
) -> Result<IcpResult> {
    let grid = NearestGrid::new(reference.points());
    let refs = reference.points();
    let mut total = Pose::identity();
    let mut y = target.clone();
    let mut mse_trace = Vec::new();
    let mut movement_trace = Vec::new();
    let mut converged = false;

    for iteration in 1..=stop.i_max {
        let matched: Vec<_> = y
            .points()
            .iter()
            .map(|&q| refs[grid.nearest(q).0])
            .collect();
        let pose = fit_pose(&matched, y.points()).map_err(|e| e.at_iteration(iteration))?;
        let next = transform(&y, &pose);
        let mse = next
            .points()
            .iter()
            .zip(&matched)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            / next.len() as f64;
        let movement: f64 = next
            .points()
            .iter()
            .zip(y.points())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        mse_trace.push(mse);
        movement_trace.push(movement);
        total = total.then(&pose);
        y = next;
        if movement <= stop.c_min {
            converged = true;
            break;
        }
    }

    let final_mse = y.points().iter().map(|&q| grid.nearest(q).1).sum::<f64>() / y.len() as f64;
    Ok(IcpResult {
        pose: total,
        iterations: mse_trace.len(),
        converged,
        final_mse,
        mse_trace,
        movement_trace,
        registered: y,
    })
}
