//! Subcommand implementations.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use shapereg_core::contour::{load_contour, write_contour};
use shapereg_core::experiment::{run_experiment, Condition, ExperimentConfig};
use shapereg_core::groupwise::{learn_model, register_group_with, GroupOptions};
use shapereg_core::synth::{
    femur_like_template, generate_family, inject_outliers, recover_order, shuffle_points,
    OutlierConfig, SynthFamilyConfig,
};
use shapereg_core::{
    default_stop, register_icp, register_pair_with, transform, Contour, Error, MetricReport,
    PairOptions, StopCriteria, Weighting,
};

use crate::output::OutputSet;
use crate::svg::{self, Layer};
use crate::{
    ExperimentArgs, GroupArgs, MethodArg, MetricsArgs, RegisterArgs, StopArgs, SynthCommand,
};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }

    pub fn from_json(e: serde_json::Error) -> Self {
        CliError::Core(Error::Json(e))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => f.write_str(m),
            CliError::Core(e) => e.fmt(f),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn stop_rule(contours: &[&Contour], args: &StopArgs) -> Result<StopCriteria> {
    let d = default_stop(contours)?;
    Ok(StopCriteria::new(
        args.imax.unwrap_or(d.i_max),
        args.cmin.unwrap_or(d.c_min),
    )?)
}

fn pair_options(method: MethodArg, band: Option<usize>) -> PairOptions {
    PairOptions {
        weighting: match method {
            MethodArg::DtwUnweighted => Weighting::Uniform,
            _ => Weighting::Probabilistic,
        },
        band,
    }
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::Dtw => "dtw",
        MethodArg::DtwUnweighted => "dtw-unweighted",
        MethodArg::Icp => "icp",
    }
}

fn contour_csv(c: &Contour) -> Vec<u8> {
    let mut buf = Vec::new();
    write_contour(c, &mut buf).expect("writing to memory");
    buf
}

fn check_resolution(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(CliError::Usage(format!(
            "--resolution must be positive, got {r}"
        )))
    }
}

pub fn register(args: &RegisterArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    check_resolution(args.resolution)?;
    let mut reference = load_contour(&args.reference)?;
    let mut target = load_contour(&args.target)?;
    if args.recover_order {
        reference = recover_order(reference.points())?;
        target = recover_order(target.points())?;
    }
    let stop = stop_rule(&[&reference, &target], &args.stop)?;

    let (result, registered, pose) = match args.method {
        MethodArg::Icp => {
            let r = register_icp(&reference, &target, &stop)?;
            (
                serde_json::to_value(&r).map_err(CliError::from_json)?,
                r.registered,
                r.pose,
            )
        }
        m => {
            let r = register_pair_with(&reference, &target, &stop, &pair_options(m, args.band))?;
            (
                serde_json::to_value(&r).map_err(CliError::from_json)?,
                r.registered,
                r.pose,
            )
        }
    };

    let mut out = OutputSet::create(&args.out, "register", started)?;
    out.input(&args.reference)?;
    out.input(&args.target)?;
    let metrics =
        match MetricReport::evaluate(reference.points(), registered.points(), args.resolution) {
            Ok(m) => Some(m),
            Err(e) => {
                out.warn(format!("metrics unavailable: {e}"));
                None
            }
        };
    let config = json!({
        "method": method_name(args.method),
        "stop": stop,
        "band": args.band,
        "resolution": args.resolution,
        "recover_order": args.recover_order,
    });
    out.write_json(
        "result.json",
        &json!({
            "method": method_name(args.method),
            "stop": stop,
            "pose": pose,
            "result": result,
            "metrics": metrics,
        }),
    )?;
    out.write("registered.csv", &contour_csv(&registered))?;
    if args.svg {
        let plot = svg::render(&[
            Layer {
                label: "reference",
                points: reference.points(),
                stroke: "black",
                width: 2.0,
                dash: None,
                opacity: 1.0,
            },
            Layer {
                label: "initial target",
                points: target.points(),
                stroke: "gray",
                width: 1.0,
                dash: Some("4 3"),
                opacity: 0.8,
            },
            Layer {
                label: "registered target",
                points: registered.points(),
                stroke: "crimson",
                width: 1.5,
                dash: None,
                opacity: 1.0,
            },
        ]);
        out.write("overlay.svg", plot.as_bytes())?;
    }
    out.finish(argv, &config, None)
}

fn is_contour_file(p: &Path) -> bool {
    p.is_file()
        && p.extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("csv") || e.eq_ignore_ascii_case("json"))
}

fn list_contours(dir: &Path) -> Result<Vec<PathBuf>> {
    let io = |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io)? {
        let p = entry.map_err(io)?.path();
        if is_contour_file(&p) {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

pub fn group(args: &GroupArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    if args.method == MethodArg::Icp {
        return Err(CliError::Usage(
            "group registration supports dtw and dtw-unweighted".into(),
        ));
    }
    let files = list_contours(&args.dir)?;
    if files.len() < 2 {
        return Err(CliError::Usage(format!(
            "{}: need at least 2 contour files, found {}",
            args.dir.display(),
            files.len()
        )));
    }
    let samples = files
        .iter()
        .map(|p| load_contour(p))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let initial = match &args.init {
        None => None,
        Some(init) => {
            let want = fs::canonicalize(init).map_err(|source| CliError::Io {
                path: init.clone(),
                source,
            })?;
            let found = files
                .iter()
                .position(|p| fs::canonicalize(p).is_ok_and(|c| c == want));
            Some(found.ok_or_else(|| {
                CliError::Usage(format!(
                    "--init {}: not one of the samples in {}",
                    init.display(),
                    args.dir.display()
                ))
            })?)
        }
    };
    let refs: Vec<&Contour> = samples.iter().collect();
    let d = default_stop(&refs)?;
    let gd = shapereg_core::groupwise::default_group_stop(&samples)?;
    let stop = StopCriteria::new(
        args.stop.imax.unwrap_or(gd.i_max),
        args.stop.cmin.unwrap_or(gd.c_min),
    )?;
    let options = GroupOptions {
        initial,
        pair: pair_options(args.method, args.band),
        pair_stop: None,
    };
    let g = register_group_with(&samples, &stop, &options)?;

    let mut out = OutputSet::create(&args.out, "group", started)?;
    for f in &files {
        out.input(f)?;
    }
    let names: Vec<String> = files
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        })
        .collect();
    out.write_json("group.json", &json!({ "files": names, "group": g }))?;
    match learn_model(&g) {
        Ok(model) => out.write_json("model.json", &model)?,
        Err(e) => out.warn(format!("shape model not written: {e}")),
    }
    out.write("mean.csv", &contour_csv(&g.mean.to_contour()))?;

    let registered: Vec<Contour> = samples
        .iter()
        .zip(&g.per_sample)
        .map(|(s, r)| transform(s, &r.pose))
        .collect();
    let mut layers: Vec<Layer> = registered
        .iter()
        .zip(&names)
        .map(|(c, n)| Layer {
            label: n,
            points: c.points(),
            stroke: "steelblue",
            width: 1.0,
            dash: None,
            opacity: 0.5,
        })
        .collect();
    layers.push(Layer {
        label: "mean",
        points: g.mean.points(),
        stroke: "black",
        width: 2.5,
        dash: None,
        opacity: 1.0,
    });
    out.write("overlay.svg", svg::render(&layers).as_bytes())?;

    let config = json!({
        "method": method_name(args.method),
        "stop": stop,
        "pixel_stop": d,
        "band": args.band,
        "initial": g.initial,
    });
    out.finish(argv, &config, None)
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

#[derive(Serialize)]
struct ExperimentSummary<'a> {
    condition: Condition,
    config: &'a ExperimentConfig,
    summary: &'a [shapereg_core::experiment::MethodSummary],
    group_summary: &'a Option<shapereg_core::experiment::GroupSummary>,
}

pub fn experiment(args: &ExperimentArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    let mut cfg = match &args.config {
        Some(p) => load_config(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(r) = args.resolution {
        check_resolution(r)?;
        cfg.resolution = r;
    }
    if args.band.is_some() {
        cfg.band = args.band;
    }
    if args.stop.imax.is_some() {
        cfg.i_max = args.stop.imax;
    }
    if args.stop.cmin.is_some() {
        cfg.c_min = args.stop.cmin;
    }
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let report = run_experiment(args.name, &cfg)?;

    let mut out = OutputSet::create(&args.out, "experiment", started)?;
    if let Some(p) = &args.config {
        out.input(p)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Usage(format!("csv: {e}"));
    if args.name == Condition::Groupwise {
        for r in &report.group_trials {
            w.serialize(r).map_err(csv_err)?;
        }
    } else {
        for r in &report.trials {
            w.serialize(r).map_err(csv_err)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| CliError::Usage(format!("csv: {e}")))?;
    out.write("trials.csv", &bytes)?;
    out.write_json(
        "summary.json",
        &ExperimentSummary {
            condition: report.condition,
            config: &report.config,
            summary: &report.summary,
            group_summary: &report.group_summary,
        },
    )?;
    for s in &report.summary {
        eprintln!(
            "{:<16} median d_test {:.4}  failures {}",
            s.method.name(),
            s.d_test.median,
            s.failures
        );
    }
    if let Some(g) = &report.group_summary {
        eprintln!(
            "groupwise        median geodesic {:.4}  median total variance {:.3e}",
            g.geodesic.median, g.total_variance.median
        );
    }
    out.finish(
        argv,
        &json!({ "condition": args.name, "config": cfg }),
        Some(cfg.seed),
    )
}

pub fn metrics(args: &MetricsArgs, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    check_resolution(args.resolution)?;
    let reference = load_contour(&args.reference)?;
    let target = load_contour(&args.target)?;
    let report = MetricReport::evaluate(reference.points(), target.points(), args.resolution)?;
    let text = serde_json::to_string_pretty(&report).map_err(CliError::from_json)?;
    println!("{text}");
    if let Some(dir) = &args.out {
        let mut out = OutputSet::create(dir, "metrics", started)?;
        out.input(&args.reference)?;
        out.input(&args.target)?;
        out.write_json("metrics.json", &report)?;
        out.finish(argv, &json!({ "resolution": args.resolution }), None)?;
    }
    Ok(())
}

pub fn synth(cmd: &SynthCommand, argv: &[String]) -> Result<()> {
    let started = Instant::now();
    match cmd {
        SynthCommand::Family {
            out: dir,
            m,
            points,
            seed,
            deform_sigma,
            truncation,
        } => {
            let base = femur_like_template(*points)?;
            let cfg = SynthFamilyConfig {
                base: base.clone(),
                m: *m,
                deform_sigma: *deform_sigma,
                pose_ranges: ExperimentConfig::default().pose_ranges,
                truncation_frac: *truncation,
                seed: *seed,
            };
            cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let family = generate_family(&cfg)?;
            let mut out = OutputSet::create(dir, "synth family", started)?;
            out.write("template.csv", &contour_csv(&base))?;
            let samples_dir = dir.join("samples");
            fs::create_dir_all(&samples_dir).map_err(|source| CliError::Io {
                path: samples_dir.clone(),
                source,
            })?;
            for (k, s) in family.samples.iter().enumerate() {
                out.write(&format!("samples/sample_{k:03}.csv"), &contour_csv(s))?;
            }
            out.write_json("truth.json", &family.truth)?;
            let config = json!({
                "m": m, "points": points, "deform_sigma": deform_sigma,
                "truncation": truncation, "pose_ranges": cfg.pose_ranges,
            });
            out.finish(argv, &config, Some(*seed))
        }
        SynthCommand::Outliers {
            input,
            out: dir,
            seed,
        } => {
            let c = load_contour(input)?;
            let cfg = OutlierConfig::standard(*seed);
            let (noisy, mask) = inject_outliers(&c, &cfg)?;
            let mut out = OutputSet::create(dir, "synth outliers", started)?;
            out.input(input)?;
            out.write("outliers.csv", &contour_csv(&noisy))?;
            out.write_json("outlier_mask.json", &mask)?;
            out.finish(argv, &cfg, Some(*seed))
        }
        SynthCommand::Shuffle {
            input,
            out: dir,
            seed,
        } => {
            let c = load_contour(input)?;
            let shuffled = shuffle_points(&c, *seed);
            let mut out = OutputSet::create(dir, "synth shuffle", started)?;
            out.input(input)?;
            out.write("shuffled.csv", &contour_csv(&shuffled))?;
            out.finish(argv, &json!({}), Some(*seed))
        }
    }
}
