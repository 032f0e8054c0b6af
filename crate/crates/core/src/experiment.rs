//! Seeded comparison experiments on synthetic femur-like contours.
//!
//! Pairwise conditions register a perturbed, posed family sample onto the
//! clean template with each method and score the *clean* sample under the
//! estimated pose, so outlier points do not enter the error. The group
//! condition registers a family and compares the recovered mean with the
//! generating template.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::register_icp;
use crate::contour::{geodesic_distance, to_preshape, transform, Contour, Pose};
use crate::error::{Error, Result};
use crate::groupwise::{
    default_group_stop, index_gpa, preshape_baseline, register_group, total_variance,
};
use crate::metrics::{d_test, iou};
use crate::pairwise::{default_stop, register_pair_with, PairOptions, StopCriteria, Weighting};
use crate::synth::{
    femur_like_template, generate_family, inject_outliers, recover_order, shuffle_points,
    OutlierConfig, PoseRanges, SynthFamilyConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Condition {
    #[serde(rename = "outliers")]
    Outliers,
    #[serde(rename = "unsorted")]
    Unsorted,
    #[serde(rename = "outliers+unsorted")]
    OutliersUnsorted,
    #[serde(rename = "groupwise")]
    Groupwise,
}

impl Condition {
    pub const ALL: [Condition; 4] = [
        Condition::Outliers,
        Condition::Unsorted,
        Condition::OutliersUnsorted,
        Condition::Groupwise,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Condition::Outliers => "outliers",
            Condition::Unsorted => "unsorted",
            Condition::OutliersUnsorted => "outliers+unsorted",
            Condition::Groupwise => "groupwise",
        }
    }

    fn outliers(self) -> bool {
        matches!(self, Condition::Outliers | Condition::OutliersUnsorted)
    }

    fn shuffled(self) -> bool {
        matches!(self, Condition::Unsorted | Condition::OutliersUnsorted)
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Condition::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "proposed-W=I")]
    ProposedUnweighted,
    #[serde(rename = "icp")]
    Icp,
    /// The proposed method on the same trial before shuffling.
    #[serde(rename = "proposed-sorted")]
    ProposedSorted,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::ProposedUnweighted => "proposed-W=I",
            Method::Icp => "icp",
            Method::ProposedSorted => "proposed-sorted",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub trials: usize,
    pub seed: u64,
    pub template_points: usize,
    pub deform_sigma: f64,
    pub pose_ranges: PoseRanges,
    pub truncation_frac: (f64, f64),
    pub sigma_t: f64,
    pub sigma_n: f64,
    pub n_segments: usize,
    pub seg_len_frac: (f64, f64),
    pub group_size: usize,
    pub group_truncation_frac: (f64, f64),
    pub band: Option<usize>,
    pub resolution: f64,
    pub i_max: Option<usize>,
    pub c_min: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            trials: 30,
            seed: 0,
            template_points: 600,
            deform_sigma: 0.5,
            pose_ranges: PoseRanges {
                scale: (0.8, 1.25),
                max_rotation: 30f64.to_radians(),
                translation_x: (-40.0, 40.0),
                translation_y: (-40.0, 40.0),
            },
            truncation_frac: (0.0, 0.10),
            sigma_t: 12.0,
            sigma_n: 1.0,
            n_segments: 10,
            seg_len_frac: (0.01, 0.10),
            group_size: 20,
            group_truncation_frac: (0.0, 0.15),
            band: None,
            resolution: 0.25,
            i_max: None,
            c_min: None,
        }
    }
}

impl ExperimentConfig {
    fn stop_for(&self, contours: &[&Contour]) -> Result<StopCriteria> {
        let d = default_stop(contours)?;
        StopCriteria::new(self.i_max.unwrap_or(d.i_max), self.c_min.unwrap_or(d.c_min))
    }

    fn outlier_config(&self, seed: u64) -> OutlierConfig {
        OutlierConfig {
            sigma_t: self.sigma_t,
            sigma_n: self.sigma_n,
            n_segments: self.n_segments,
            seg_len_frac: self.seg_len_frac,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::ConfigInfeasible("trials must be positive".into()));
        }
        if !(self.resolution > 0.0) {
            return Err(Error::ConfigInfeasible(
                "resolution must be positive".into(),
            ));
        }
        if self.group_size < 2 {
            return Err(Error::ConfigInfeasible(
                "group_size must be at least 2".into(),
            ));
        }
        self.outlier_config(0).validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub method: Method,
    /// Infinite when the method failed.
    pub d_test: f64,
    pub iou: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTrialRecord {
    pub trial: usize,
    pub geodesic: f64,
    pub total_variance: f64,
    pub preshape_variance: f64,
    pub index_gpa_variance: f64,
    pub iterations: usize,
    pub converged: bool,
    pub initial: usize,
}

/// Five-number summary plus mean; quartiles by linear interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| {
            let pos = p * (v.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            if lo == hi {
                v[lo]
            } else {
                v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
            }
        };
        Some(Self {
            n: v.len(),
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MethodSummary {
    pub method: Method,
    pub d_test: Summary,
    pub iou: Option<Summary>,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub geodesic: Summary,
    pub total_variance: Summary,
    pub preshape_variance: Summary,
    pub index_gpa_variance: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub condition: Condition,
    pub config: ExperimentConfig,
    pub trials: Vec<TrialRecord>,
    pub group_trials: Vec<GroupTrialRecord>,
    pub summary: Vec<MethodSummary>,
    pub group_summary: Option<GroupSummary>,
}

impl ExperimentReport {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.summary.iter().find(|s| s.method == method)
    }

    pub fn records(&self, method: Method) -> impl Iterator<Item = &TrialRecord> {
        self.trials.iter().filter(move |t| t.method == method)
    }
}

struct TrialSeeds {
    family: u64,
    outliers: u64,
    shuffle_reference: u64,
    shuffle_target: u64,
}

fn trial_seeds(seed: u64, trial: usize) -> TrialSeeds {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64 + 1);
    TrialSeeds {
        family: rng.random(),
        outliers: rng.random(),
        shuffle_reference: rng.random(),
        shuffle_target: rng.random(),
    }
}

pub fn run_experiment(condition: Condition, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let template = femur_like_template(cfg.template_points)?;
    if condition == Condition::Groupwise {
        return run_group(cfg, &template);
    }

    let mut methods = vec![Method::Proposed, Method::ProposedUnweighted, Method::Icp];
    if condition.shuffled() {
        methods.push(Method::ProposedSorted);
    }
    let per_trial: Vec<Result<Vec<TrialRecord>>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| run_pair_trial(condition, cfg, &template, trial, &methods))
        .collect();
    let mut trials = Vec::new();
    for r in per_trial {
        trials.extend(r?);
    }

    let summary = methods
        .iter()
        .map(|&method| {
            let rows: Vec<&TrialRecord> = trials.iter().filter(|t| t.method == method).collect();
            let d: Vec<f64> = rows.iter().map(|t| t.d_test).collect();
            let i: Vec<f64> = rows.iter().filter_map(|t| t.iou).collect();
            MethodSummary {
                method,
                d_test: Summary::of(&d).expect("at least one trial"),
                iou: Summary::of(&i),
                failures: rows.iter().filter(|t| t.error.is_some()).count(),
            }
        })
        .collect();
    Ok(ExperimentReport {
        condition,
        config: cfg.clone(),
        trials,
        group_trials: Vec::new(),
        summary,
        group_summary: None,
    })
}

fn run_pair_trial(
    condition: Condition,
    cfg: &ExperimentConfig,
    template: &Contour,
    trial: usize,
    methods: &[Method],
) -> Result<Vec<TrialRecord>> {
    let seeds = trial_seeds(cfg.seed, trial);
    let family = generate_family(&SynthFamilyConfig {
        base: template.clone(),
        m: 2,
        deform_sigma: cfg.deform_sigma,
        pose_ranges: cfg.pose_ranges.clone(),
        truncation_frac: cfg.truncation_frac,
        seed: seeds.family,
    })?;
    let clean = family.samples[0].clone();
    let perturbed = if condition.outliers() {
        inject_outliers(&clean, &cfg.outlier_config(seeds.outliers))?.0
    } else {
        clean.clone()
    };

    let (reference, target) = if condition.shuffled() {
        let r = recover_order(shuffle_points(template, seeds.shuffle_reference).points());
        let t = recover_order(shuffle_points(&perturbed, seeds.shuffle_target).points());
        match (r, t) {
            (Ok(r), Ok(t)) => (Ok(r), t),
            (Err(e), _) | (_, Err(e)) => (Err(e), perturbed.clone()),
        }
    } else {
        (Ok(template.clone()), perturbed.clone())
    };

    let score = |method: Method, outcome: Result<(Pose, usize, bool)>| match outcome {
        Ok((pose, iterations, converged)) => {
            let moved = transform(&clean, &pose);
            let d = d_test(template.points(), moved.points())?;
            let i = iou(template.points(), moved.points(), cfg.resolution).ok();
            Ok(TrialRecord {
                trial,
                method,
                d_test: d,
                iou: i,
                iterations,
                converged,
                error: None,
            })
        }
        Err(e) => Ok(TrialRecord {
            trial,
            method,
            d_test: f64::INFINITY,
            iou: None,
            iterations: 0,
            converged: false,
            error: Some(e.to_string()),
        }),
    };

    let pair = |reference: &Contour, target: &Contour, weighting: Weighting| {
        let stop = cfg.stop_for(&[reference, target])?;
        let options = PairOptions {
            weighting,
            band: cfg.band,
        };
        register_pair_with(reference, target, &stop, &options)
            .map(|r| (r.pose, r.iterations, r.converged))
    };

    methods
        .iter()
        .map(|&method| {
            let outcome = match method {
                Method::ProposedSorted => pair(template, &perturbed, Weighting::Probabilistic),
                _ => reference
                    .as_ref()
                    .map_err(|e| Error::OrderRecoveryFailed(e.to_string()))
                    .and_then(|reference| match method {
                        Method::Proposed => pair(reference, &target, Weighting::Probabilistic),
                        Method::ProposedUnweighted => pair(reference, &target, Weighting::Uniform),
                        _ => {
                            let stop = cfg.stop_for(&[reference, &target])?;
                            register_icp(reference, &target, &stop)
                                .map(|r| (r.pose, r.iterations, r.converged))
                        }
                    }),
            };
            score(method, outcome)
        })
        .collect()
}

fn run_group(cfg: &ExperimentConfig, template: &Contour) -> Result<ExperimentReport> {
    let per_trial: Vec<Result<GroupTrialRecord>> = (0..cfg.trials)
        .map(|trial| run_group_trial(cfg, template, trial))
        .collect();
    let group_trials = per_trial.into_iter().collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&GroupTrialRecord) -> f64| {
        Summary::of(&group_trials.iter().map(f).collect::<Vec<_>>()).expect("at least one trial")
    };
    let group_summary = GroupSummary {
        geodesic: pick(|t| t.geodesic),
        total_variance: pick(|t| t.total_variance),
        preshape_variance: pick(|t| t.preshape_variance),
        index_gpa_variance: pick(|t| t.index_gpa_variance),
    };
    Ok(ExperimentReport {
        condition: Condition::Groupwise,
        config: cfg.clone(),
        trials: Vec::new(),
        group_summary: Some(group_summary),
        group_trials,
        summary: Vec::new(),
    })
}

/// One group trial: register `group_size` family samples and measure the
/// recovered mean against the template over the initial sample's extent.
pub fn run_group_trial(
    cfg: &ExperimentConfig,
    template: &Contour,
    trial: usize,
) -> Result<GroupTrialRecord> {
    let seeds = trial_seeds(cfg.seed, trial);
    let family = generate_family(&SynthFamilyConfig {
        base: template.clone(),
        m: cfg.group_size,
        deform_sigma: cfg.deform_sigma,
        pose_ranges: cfg.pose_ranges.clone(),
        truncation_frac: cfg.group_truncation_frac,
        seed: seeds.family,
    })?;
    let default = default_group_stop(&family.samples)?;
    let stop = StopCriteria::new(
        cfg.i_max.unwrap_or(default.i_max),
        cfg.c_min.unwrap_or(default.c_min),
    )?;
    let g = register_group(&family.samples, &stop)?;
    let kept = family.truth[g.initial].kept;
    let truth = to_preshape(&template.points()[kept.0..kept.1])?.0;
    let geodesic = geodesic_distance(&g.mean, &truth)?;
    let len = g.mean.len();
    Ok(GroupTrialRecord {
        trial,
        geodesic,
        total_variance: total_variance(&g),
        preshape_variance: preshape_baseline(&family.samples, len)?.total_variance(),
        index_gpa_variance: index_gpa(&family.samples, len, &stop)?.total_variance(),
        iterations: g.iterations,
        converged: g.converged,
        initial: g.initial,
    })
}
