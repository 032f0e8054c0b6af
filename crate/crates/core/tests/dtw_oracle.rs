//! DTW against exhaustive enumeration of every warping path on small inputs.

use proptest::prelude::*;
use shapereg_core::{dtw_path, Complex64, Contour, WarpingPath};

fn all_paths(n1: usize, n2: usize) -> Vec<Vec<(usize, usize)>> {
    fn walk(
        i: usize,
        j: usize,
        n1: usize,
        n2: usize,
        cur: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        cur.push((i, j));
        if i == n1 - 1 && j == n2 - 1 {
            out.push(cur.clone());
        } else {
            if i + 1 < n1 && j + 1 < n2 {
                walk(i + 1, j + 1, n1, n2, cur, out);
            }
            if i + 1 < n1 {
                walk(i + 1, j, n1, n2, cur, out);
            }
            if j + 1 < n2 {
                walk(i, j + 1, n1, n2, cur, out);
            }
        }
        cur.pop();
    }
    let mut out = Vec::new();
    walk(0, 0, n1, n2, &mut Vec::new(), &mut out);
    out
}

fn cost(x1: &[Complex64], x2: &[Complex64], path: &[(usize, usize)]) -> f64 {
    path.iter().map(|&(i, j)| (x1[i] - x2[j]).norm_sqr()).sum()
}

fn contour(values: &[(f64, f64)]) -> Contour {
    Contour::from_xy(values).unwrap()
}

#[test]
fn enumeration_counts_are_delannoy_numbers() {
    // D(m, n) counts lattice paths with unit, up and diagonal steps.
    assert_eq!(all_paths(2, 2).len(), 3);
    assert_eq!(all_paths(3, 3).len(), 13);
    assert_eq!(all_paths(4, 4).len(), 63);
    assert_eq!(all_paths(3, 4).len(), 25);
}

#[test]
fn every_enumerated_path_validates() {
    for p in all_paths(4, 3) {
        WarpingPath::new(p, 4, 3).unwrap();
    }
}

fn points() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dtw_cost_is_the_exhaustive_minimum(a in points(), b in points()) {
        let (x1, x2) = (contour(&a), contour(&b));
        let (path, c) = dtw_path(&x1, &x2, None).unwrap();
        let best = all_paths(x1.len(), x2.len())
            .iter()
            .map(|p| cost(x1.points(), x2.points(), p))
            .fold(f64::INFINITY, f64::min);
        prop_assert!((c - best).abs() <= 1e-9 * (1.0 + best));
        prop_assert!((path.cost(x1.points(), x2.points()) - c).abs() <= 1e-9 * (1.0 + c));
    }

    #[test]
    fn banded_cost_is_the_minimum_within_the_band(a in points(), b in points(), band in 0usize..5) {
        let (x1, x2) = (contour(&a), contour(&b));
        let required = x1.len().abs_diff(x2.len());
        let result = dtw_path(&x1, &x2, Some(band));
        if band < required {
            prop_assert!(result.is_err());
        } else {
            let (path, c) = result.unwrap();
            prop_assert!(path.pairs().iter().all(|&(i, j)| i.abs_diff(j) <= band));
            let best = all_paths(x1.len(), x2.len())
                .iter()
                .filter(|p| p.iter().all(|&(i, j)| i.abs_diff(j) <= band))
                .map(|p| cost(x1.points(), x2.points(), p))
                .fold(f64::INFINITY, f64::min);
            prop_assert!((c - best).abs() <= 1e-9 * (1.0 + best));
        }
    }
}

#[test]
fn ties_prefer_diagonal_steps() {
    // All points equal: every path costs 0, and the preferred one is the
    // shortest (diagonal first, then vertical).
    let x1 = contour(&[(1.0, 1.0); 4]);
    let x2 = contour(&[(1.0, 1.0); 3]);
    let (path, c) = dtw_path(&x1, &x2, None).unwrap();
    assert_eq!(c, 0.0);
    assert_eq!(path.len(), 4);
    assert_eq!(path.pairs(), &[(0, 0), (1, 0), (2, 1), (3, 2)]);
}
