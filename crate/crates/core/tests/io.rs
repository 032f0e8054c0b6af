use std::fs;

use num_complex::Complex64;
use shapereg_core::contour::{load_contour, read_contour, save_contour, ContourDocument};
use shapereg_core::groupwise::{default_group_stop, learn_model, register_group};
use shapereg_core::synth::femur_like_template;
use shapereg_core::{transform, Contour, Error, Pose};

fn wiggly() -> Contour {
    Contour::new(
        (0..40)
            .map(|k| {
                let t = k as f64 * 0.1;
                Complex64::new(t.cos() * 10.0 + 0.1 / 3.0, t.sin() * 7.0 - 1e-17)
            })
            .collect(),
    )
    .unwrap()
}

#[test]
fn csv_round_trip_is_exact() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.csv");
    let c = wiggly();
    save_contour(&c, &path).unwrap();
    assert_eq!(load_contour(&path).unwrap(), c);
}

#[test]
fn json_documents_load_by_extension() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    let c = wiggly();
    fs::write(
        &path,
        serde_json::to_string(&ContourDocument::new("w", &c)).unwrap(),
    )
    .unwrap();
    assert_eq!(load_contour(&path).unwrap(), c);

    fs::write(&path, r#"{"points": [[0, 0], [1, 2], [3, 1]]}"#).unwrap();
    assert_eq!(load_contour(&path).unwrap().len(), 3);
}

#[test]
fn missing_file_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nope.csv");
    let err = load_contour(&path).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("nope.csv"));
}

#[test]
fn bad_rows_report_their_line() {
    let err = read_contour("0,0\n\n1,1\n2\n".as_bytes()).unwrap_err();
    assert!(matches!(err, Error::MalformedRow { line: 4, found: 1 }));
    let err = read_contour("0,0\n1,x\n".as_bytes()).unwrap_err();
    assert!(matches!(err, Error::ParseError { line: 2, .. }));
    let err = read_contour("0,0\nnan,1\n".as_bytes()).unwrap_err();
    assert!(matches!(err, Error::ParseError { line: 2, .. }));
}

#[test]
fn group_and_model_json_layout() {
    let base = femur_like_template(60).unwrap();
    let samples: Vec<Contour> = (0..3)
        .map(|k| {
            let p = Pose::from_parts(
                1.0 + 0.1 * k as f64,
                0.2 * k as f64,
                Complex64::new(5.0, 1.0),
            );
            transform(&base, &p)
        })
        .collect();
    let g = register_group(&samples, &default_group_stop(&samples).unwrap()).unwrap();
    let v = serde_json::to_value(&g).unwrap();
    for key in [
        "mean",
        "iterations",
        "converged",
        "support_counts",
        "mask",
        "samples",
    ] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["mask"].as_array().unwrap().len(), 3);
    assert!(v["samples"][0]["pose"]["r"]["re"].is_number());

    let model = learn_model(&g).unwrap();
    let v = serde_json::to_value(&model).unwrap();
    let n = base.len();
    assert_eq!(v["dim"], n);
    assert_eq!(v["covariance"].as_array().unwrap().len(), n * n);
    assert_eq!(v["covariance"][0].as_array().unwrap().len(), 2);
}
