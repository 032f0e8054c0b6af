//! Procrustes registration of 2D contours without known point correspondences.
//!
//! Contours are ordered sequences of complex numbers (`x + iy`). Correspondences
//! between two contours are found with dynamic time warping, the pose is fitted
//! with a probabilistically weighted least-squares similarity solve, and the two
//! steps alternate until the pose stops moving. A group of contours is registered
//! to an evolving mean shape with an extended generalized Procrustes analysis,
//! from which a point distribution model can be learned.

pub mod baseline;
pub mod contour;
pub mod dtw;
pub mod error;
pub mod experiment;
pub mod groupwise;
pub mod metrics;
pub mod pairwise;
pub mod procrustes;
mod serde_complex;
pub mod spatial;
pub mod synth;

pub use num_complex::Complex64;

pub use crate::baseline::{register_icp, IcpResult};
pub use crate::contour::{geodesic_distance, to_preshape, transform, Contour, Pose, Preshape};
pub use crate::dtw::{apply_path, dtw_path, AlignedPair, WarpingPath};
pub use crate::error::{Error, Result};
pub use crate::groupwise::{
    default_group_stop, learn_model, register_group, register_group_with, resample_to_reference,
    total_variance, GroupOptions, GroupResult, MaskedResampledContour, ShapeModel,
};
pub use crate::metrics::{d_test, iou, MetricReport};
pub use crate::pairwise::{
    default_stop, register_pair, register_pair_with, PairOptions, RegistrationResult, StopCriteria,
    Weighting,
};
pub use crate::procrustes::{
    compute_weights, fit_pose, fit_pose_weighted, soft_boundary, CorrespondenceWeights,
    DeformationStats,
};
