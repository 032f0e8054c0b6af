//! Group-wise registration: generalized Procrustes analysis with DTW
//! correspondences, and point distribution models learned from the result.
//!
//! Every sample is registered to the current mean with [`register_pair_with`],
//! resampled onto the mean's index set (with "empty" slots where the sample
//! does not reach), and the mean is re-estimated from the non-empty entries.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Deserialize, Serialize, Serializer};

use crate::contour::{to_preshape, Contour, Pose, Preshape};
use crate::dtw::WarpingPath;
use crate::error::{Error, Result};
use crate::pairwise::{register_pair_with, PairOptions, StopCriteria};
use crate::procrustes::fit_pose;
use crate::serde_complex;

/// A sample expressed on a reference's index set; `None` marks an empty slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MaskedResampledContour {
    #[serde(with = "serde_complex::optional_pairs")]
    values: Vec<Option<Complex64>>,
}

impl MaskedResampledContour {
    pub fn new(values: Vec<Option<Complex64>>) -> Result<Self> {
        if values.iter().all(Option::is_none) {
            return Err(Error::InvalidArgument(
                "resampled contour has no present entries".into(),
            ));
        }
        Ok(Self { values })
    }

    /// Fully present.
    pub fn full(points: &[Complex64]) -> Self {
        Self {
            values: points.iter().copied().map(Some).collect(),
        }
    }

    pub fn values(&self) -> &[Option<Complex64>] {
        &self.values
    }

    pub fn mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_some).collect()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn present(&self) -> usize {
        self.values.iter().filter(|v| v.is_some()).count()
    }
}

/// Express `target` on the index set of `reference` along `path`
/// (reference on side 0, target on side 1).
///
/// Several target points on one interior reference index: keep the one
/// closest to the mean of the run (lower index on ties). Several reference
/// indices on one target point: repeat it, except for runs at the start or
/// end of the path, where all but the innermost reference slot are empty.
/// Target points running past either end of the reference are dropped,
/// keeping the innermost one.
pub fn resample_to_reference(
    reference: &Contour,
    target: &Contour,
    path: &WarpingPath,
) -> Result<MaskedResampledContour> {
    let (n1, n2) = (reference.len(), target.len());
    for &(a, b) in path.pairs() {
        if a >= n1 || b >= n2 {
            return Err(Error::IndexOutOfRange {
                n1: a,
                n2: b,
                len1: n1,
                len2: n2,
            });
        }
    }
    path.validate(n1, n2)?;

    // runs[n] = inclusive range of target indices paired with reference n.
    let mut runs = vec![(usize::MAX, 0usize); n1];
    for &(a, b) in path.pairs() {
        let r = &mut runs[a];
        r.0 = r.0.min(b);
        r.1 = r.1.max(b);
    }
    // Reference indices sharing the first / last target point.
    let lead_end = runs.iter().rposition(|r| r.0 == 0).unwrap_or(0);
    let trail_start = runs.iter().position(|r| r.1 == n2 - 1).unwrap_or(n1 - 1);

    let pts = target.points();
    let values = runs
        .iter()
        .enumerate()
        .map(|(n, &(lo, hi))| {
            if n < lead_end || n > trail_start {
                return None;
            }
            if lo == hi {
                return Some(pts[lo]);
            }
            if n == 0 {
                return Some(pts[hi]);
            }
            if n == n1 - 1 {
                return Some(pts[lo]);
            }
            let run = &pts[lo..=hi];
            let mid = run.iter().sum::<Complex64>() / run.len() as f64;
            let mut best = 0;
            for (k, z) in run.iter().enumerate() {
                if (z - mid).norm_sqr() < (run[best] - mid).norm_sqr() {
                    best = k;
                }
            }
            Some(run[best])
        })
        .collect();
    MaskedResampledContour::new(values)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroupOptions {
    /// Sample whose preshape seeds the mean; defaults to the longest
    /// (first on ties).
    pub initial: Option<usize>,
    pub pair: PairOptions,
    /// Stop rule for the per-sample registrations; defaults to the group rule.
    pub pair_stop: Option<StopCriteria>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRegistration {
    /// Cumulative pose taking the original sample onto the mean.
    pub pose: Pose,
    /// Path between the mean (side 0) and the sample from the last round.
    pub path: WarpingPath,
    pub resampled: MaskedResampledContour,
    pub pair_iterations: usize,
    pub pair_converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupResult {
    pub mean: Preshape,
    pub per_sample: Vec<SampleRegistration>,
    pub iterations: usize,
    pub converged: bool,
    pub support_counts: Vec<usize>,
    pub initial: usize,
    /// `||mu_(i+1) - mu_i||^2` per outer iteration.
    pub mean_movement: Vec<f64>,
}

impl GroupResult {
    pub fn resampled(&self) -> Vec<&MaskedResampledContour> {
        self.per_sample.iter().map(|s| &s.resampled).collect()
    }
}

impl Serialize for GroupResult {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Sample<'a> {
            pose: &'a Pose,
            path: &'a WarpingPath,
            pair_iterations: usize,
            pair_converged: bool,
        }
        let mut st = s.serialize_struct("GroupResult", 8)?;
        st.serialize_field("mean", &self.mean)?;
        st.serialize_field("initial", &self.initial)?;
        st.serialize_field("iterations", &self.iterations)?;
        st.serialize_field("converged", &self.converged)?;
        st.serialize_field("support_counts", &self.support_counts)?;
        st.serialize_field("mean_movement", &self.mean_movement)?;
        let mask: Vec<Vec<bool>> = self.per_sample.iter().map(|p| p.resampled.mask()).collect();
        st.serialize_field("mask", &mask)?;
        let samples: Vec<Sample> = self
            .per_sample
            .iter()
            .map(|p| Sample {
                pose: &p.pose,
                path: &p.path,
                pair_iterations: p.pair_iterations,
                pair_converged: p.pair_converged,
            })
            .collect();
        st.serialize_field("samples", &samples)?;
        st.end()
    }
}

/// Stop rule for group registration in preshape units.
///
/// The pixel rule `c <= 1e-4 ||x||` compares a squared displacement with a
/// norm; once samples are scaled onto a unit-norm mean both sides shrink by
/// different powers of the scale, so the threshold is divided by `||x||^2`.
pub fn default_group_stop(samples: &[Contour]) -> Result<StopCriteria> {
    let max_norm = samples
        .iter()
        .map(Contour::norm)
        .fold(None, |acc: Option<f64>, n| {
            Some(acc.map_or(n, |a| a.max(n)))
        })
        .ok_or(Error::EmptySet)?;
    StopCriteria::new(100, 1e-4 / max_norm)
}

pub fn register_group(samples: &[Contour], stop: &StopCriteria) -> Result<GroupResult> {
    register_group_with(samples, stop, &GroupOptions::default())
}

pub fn register_group_with(
    samples: &[Contour],
    stop: &StopCriteria,
    options: &GroupOptions,
) -> Result<GroupResult> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "group registration needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    let initial = match options.initial {
        Some(i) if i < samples.len() => i,
        Some(i) => {
            return Err(Error::InvalidArgument(format!(
                "initial sample {i} out of range for {} samples",
                samples.len()
            )))
        }
        None => longest(samples),
    };
    let (mut mean, _, _) =
        to_preshape(samples[initial].points()).map_err(|e| e.at_sample(initial))?;
    let n = mean.len();

    let mut current: Vec<Contour> = samples.to_vec();
    let mut poses = vec![Pose::identity(); samples.len()];
    let mut per_sample = Vec::new();
    let mut mean_movement = Vec::new();
    let mut converged = false;
    let mut support = vec![0usize; n];

    for iteration in 1..=stop.i_max {
        let reference = mean.to_contour();
        let pair_stop = options.pair_stop.as_ref().unwrap_or(stop);
        let results: Vec<Result<_>> = current
            .par_iter()
            .enumerate()
            .map(|(m, x)| {
                let res = register_pair_with(&reference, x, pair_stop, &options.pair)
                    .map_err(|e| e.at_sample(m))?;
                let resampled = resample_to_reference(&reference, &res.registered, &res.path)
                    .map_err(|e| e.at_sample(m))?;
                Ok((res, resampled))
            })
            .collect();

        per_sample.clear();
        let mut entries: Vec<Vec<Complex64>> = vec![Vec::new(); n];
        for (m, r) in results.into_iter().enumerate() {
            let (res, resampled) = r.map_err(|e| e.at_iteration(iteration))?;
            for (k, v) in resampled.values().iter().enumerate() {
                if let Some(z) = v {
                    entries[k].push(*z);
                }
            }
            poses[m] = poses[m].then(&res.pose);
            current[m] = res.registered;
            per_sample.push(SampleRegistration {
                pose: poses[m],
                path: res.path,
                resampled,
                pair_iterations: res.iterations,
                pair_converged: res.converged,
            });
        }
        for (c, e) in support.iter_mut().zip(&entries) {
            *c = e.len();
        }
        if let Some(index) = support.iter().position(|&c| c == 0) {
            return Err(Error::InsufficientSupport {
                index,
                count: 0,
                required: 1,
            }
            .at_iteration(iteration));
        }
        // Summed in value order so the result does not depend on sample order.
        let averaged: Vec<Complex64> = entries
            .iter_mut()
            .map(|e| {
                e.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
                e.iter().sum::<Complex64>() / e.len() as f64
            })
            .collect();
        let (next, _, _) = to_preshape(&averaged).map_err(|e| e.at_iteration(iteration))?;
        let movement: f64 = next
            .points()
            .iter()
            .zip(mean.points())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        mean_movement.push(movement);
        mean = next;
        if movement <= stop.c_min {
            converged = true;
            break;
        }
    }

    Ok(GroupResult {
        mean,
        iterations: mean_movement.len(),
        converged,
        support_counts: support,
        initial,
        mean_movement,
        per_sample,
    })
}

fn longest(samples: &[Contour]) -> usize {
    let mut best = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.len() > samples[best].len() {
            best = i;
        }
    }
    best
}

/// Point distribution model: mean preshape and covariance of deviations.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeModel {
    pub mean: Preshape,
    /// Hermitian positive semidefinite, `n x n`.
    pub covariance: DMatrix<Complex64>,
    pub sample_count: usize,
}

impl Serialize for ShapeModel {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let n = self.covariance.nrows();
        let mut rows = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let z = self.covariance[(i, j)];
                rows.push([z.re, z.im]);
            }
        }
        let mut st = s.serialize_struct("ShapeModel", 4)?;
        st.serialize_field("mean", &self.mean)?;
        st.serialize_field("sample_count", &self.sample_count)?;
        st.serialize_field("dim", &n)?;
        st.serialize_field("covariance", &rows)?;
        st.end()
    }
}

/// Deviations `y_m[n] - mu[n]` of one sample; `None` where empty.
fn deviations<'a>(
    mean: &'a [Complex64],
    sample: &'a MaskedResampledContour,
) -> impl Iterator<Item = Option<Complex64>> + 'a {
    sample
        .values()
        .iter()
        .zip(mean)
        .map(|(v, mu)| v.map(|z| z - mu))
}

/// Learn the mean and covariance of a registered group.
///
/// Entry `(j, k)` averages over the samples present at both indices with an
/// `n - 1` divisor (pairs seen together fewer than twice get 0). When masks
/// are incomplete the estimate is projected onto the PSD cone by clipping
/// negative eigenvalues.
pub fn learn_model(g: &GroupResult) -> Result<ShapeModel> {
    let samples = g.resampled();
    learn_model_from(&g.mean, &samples)
}

pub fn learn_model_from(
    mean: &Preshape,
    samples: &[&MaskedResampledContour],
) -> Result<ShapeModel> {
    let n = mean.len();
    for s in samples {
        if s.len() != n {
            return Err(Error::LengthMismatch {
                left: n,
                right: s.len(),
            });
        }
    }
    let counts = support_of(samples, n);
    if let Some((index, &count)) = counts.iter().enumerate().find(|(_, &c)| c < 2) {
        return Err(Error::InsufficientSupport {
            index,
            count,
            required: 2,
        });
    }
    let dev: Vec<Vec<Option<Complex64>>> = samples
        .iter()
        .map(|s| deviations(mean.points(), s).collect())
        .collect();
    let complete = samples.iter().all(|s| s.present() == n);

    let mut cov = DMatrix::<Complex64>::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let mut acc = Complex64::new(0.0, 0.0);
            let mut both = 0usize;
            for d in &dev {
                if let (Some(a), Some(b)) = (d[j], d[k]) {
                    acc += a * b.conj();
                    both += 1;
                }
            }
            let v = if both >= 2 {
                acc / (both - 1) as f64
            } else {
                Complex64::new(0.0, 0.0)
            };
            cov[(j, k)] = v;
            cov[(k, j)] = v.conj();
        }
        cov[(j, j)].im = 0.0;
    }
    if !complete {
        cov = nearest_psd(cov);
    }
    Ok(ShapeModel {
        mean: mean.clone(),
        covariance: cov,
        sample_count: samples.len(),
    })
}

fn nearest_psd(cov: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let eig = cov.clone().symmetric_eigen();
    if eig.eigenvalues.iter().all(|&l| l >= 0.0) {
        return cov;
    }
    let clipped = eig.eigenvalues.map(|l| Complex64::new(l.max(0.0), 0.0));
    let v = &eig.eigenvectors;
    let mut out = v * DMatrix::from_diagonal(&clipped) * v.adjoint();
    // Restore exact Hermitian symmetry lost to rounding.
    let n = out.nrows();
    for j in 0..n {
        out[(j, j)].im = 0.0;
        for k in j + 1..n {
            let avg = (out[(j, k)] + out[(k, j)].conj()) * 0.5;
            out[(j, k)] = avg;
            out[(k, j)] = avg.conj();
        }
    }
    out
}

fn support_of(samples: &[&MaskedResampledContour], n: usize) -> Vec<usize> {
    let mut counts = vec![0; n];
    for s in samples {
        for (c, v) in counts.iter_mut().zip(s.values()) {
            *c += v.is_some() as usize;
        }
    }
    counts
}

/// Trace of the masked sample covariance: the per-index variances about the
/// mean, summed over indices with at least two present samples.
pub fn total_variance(g: &GroupResult) -> f64 {
    masked_total_variance(g.mean.points(), &g.resampled())
}

pub fn masked_total_variance(mean: &[Complex64], samples: &[&MaskedResampledContour]) -> f64 {
    let n = mean.len();
    let mut sums = vec![0.0; n];
    let mut counts = vec![0usize; n];
    for s in samples {
        for (k, d) in deviations(mean, s).enumerate() {
            if let Some(d) = d {
                sums[k] += d.norm_sqr();
                counts[k] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .filter(|(_, &c)| c >= 2)
        .map(|(s, &c)| s / (c - 1) as f64)
        .sum()
}

// ---------------------------------------------------------------------------
// Correspondence-by-index baselines

/// Mean shape and samples on a common index set, produced without DTW.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexGroup {
    pub mean: Preshape,
    pub samples: Vec<MaskedResampledContour>,
    pub iterations: usize,
}

impl IndexGroup {
    pub fn total_variance(&self) -> f64 {
        let refs: Vec<&MaskedResampledContour> = self.samples.iter().collect();
        masked_total_variance(self.mean.points(), &refs)
    }

    pub fn model(&self) -> Result<ShapeModel> {
        let refs: Vec<&MaskedResampledContour> = self.samples.iter().collect();
        learn_model_from(&self.mean, &refs)
    }
}

/// Linear interpolation of a point sequence at `len` equally spaced indices.
pub fn resample_by_index(points: &[Complex64], len: usize) -> Vec<Complex64> {
    let n = points.len();
    if len == 1 || n == 1 {
        return vec![points[0]; len];
    }
    (0..len)
        .map(|k| {
            let s = k as f64 * (n - 1) as f64 / (len - 1) as f64;
            let i = (s.floor() as usize).min(n - 2);
            let f = s - i as f64;
            points[i] * (1.0 - f) + points[i + 1] * f
        })
        .collect()
}

/// Preshape every sample and resample to `len` points by index, without any
/// rotation alignment.
pub fn preshape_baseline(samples: &[Contour], len: usize) -> Result<IndexGroup> {
    let resampled = index_preshapes(samples, len)?;
    let mean = mean_preshape(&resampled)?;
    Ok(IndexGroup {
        mean,
        samples: resampled
            .iter()
            .map(|s| MaskedResampledContour::full(s))
            .collect(),
        iterations: 0,
    })
}

/// Classical generalized Procrustes analysis with correspondence by index:
/// samples are resampled to `len` points and repeatedly fitted onto the
/// mean with a similarity.
pub fn index_gpa(samples: &[Contour], len: usize, stop: &StopCriteria) -> Result<IndexGroup> {
    let mut aligned = index_preshapes(samples, len)?;
    let mut mean = Preshape::new(aligned[longest(samples)].clone())?;
    let mut iterations = 0;
    for _ in 0..stop.i_max {
        iterations += 1;
        for (m, s) in aligned.iter_mut().enumerate() {
            let pose = fit_pose(mean.points(), s).map_err(|e| e.at_sample(m))?;
            s.iter_mut().for_each(|z| *z = pose.apply(*z));
        }
        let next = mean_preshape(&aligned)?;
        let movement: f64 = next
            .points()
            .iter()
            .zip(mean.points())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        mean = next;
        if movement <= stop.c_min {
            break;
        }
    }
    Ok(IndexGroup {
        mean,
        samples: aligned
            .iter()
            .map(|s| MaskedResampledContour::full(s))
            .collect(),
        iterations,
    })
}

fn index_preshapes(samples: &[Contour], len: usize) -> Result<Vec<Vec<Complex64>>> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    if len < 2 {
        return Err(Error::InvalidArgument(
            "need at least 2 points per sample".into(),
        ));
    }
    samples
        .iter()
        .enumerate()
        .map(|(m, s)| {
            let r = resample_by_index(s.points(), len);
            to_preshape(&r)
                .map(|(p, _, _)| p.points().to_vec())
                .map_err(|e| e.at_sample(m))
        })
        .collect()
}

fn mean_preshape(samples: &[Vec<Complex64>]) -> Result<Preshape> {
    let n = samples[0].len();
    let mut avg = vec![Complex64::new(0.0, 0.0); n];
    for s in samples {
        for (a, z) in avg.iter_mut().zip(s) {
            *a += z;
        }
    }
    let m = samples.len() as f64;
    avg.iter_mut().for_each(|a| *a /= m);
    Ok(to_preshape(&avg)?.0)
}
