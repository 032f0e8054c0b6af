//! Dynamic time warping between two contours.
//!
//! Local cost is the squared distance `|x1[i] - x2[j]|^2`. Admissible paths
//! start at `(0, 0)`, end at `(n1 - 1, n2 - 1)`, and advance by `(1, 0)`,
//! `(0, 1)` or `(1, 1)`.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::contour::Contour;
use crate::error::{Error, Result};

/// Ordered list of `(n1, n2)` index pairs, 0-based.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WarpingPath {
    pairs: Vec<(usize, usize)>,
}

impl WarpingPath {
    /// Build a path and check the boundary, monotonicity and step-size
    /// conditions against contour lengths `n1` and `n2`.
    pub fn new(pairs: Vec<(usize, usize)>, n1: usize, n2: usize) -> Result<Self> {
        let path = Self { pairs };
        path.validate(n1, n2)?;
        Ok(path)
    }

    /// Build a path from pairs without knowing the contour lengths. Only the
    /// start and step conditions are checked.
    pub fn from_pairs(pairs: Vec<(usize, usize)>) -> Result<Self> {
        let (n1, n2) = match pairs.last() {
            Some(&(a, b)) => (a + 1, b + 1),
            None => return Err(Error::InvalidPath("empty path".into())),
        };
        Self::new(pairs, n1, n2)
    }

    /// The strictly diagonal path of length `n`.
    pub fn diagonal(n: usize) -> Self {
        Self {
            pairs: (0..n).map(|i| (i, i)).collect(),
        }
    }

    pub fn validate(&self, n1: usize, n2: usize) -> Result<()> {
        let pairs = &self.pairs;
        let (first, last) = match (pairs.first(), pairs.last()) {
            (Some(f), Some(l)) => (*f, *l),
            _ => return Err(Error::InvalidPath("empty path".into())),
        };
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidPath("zero-length contour".into()));
        }
        if first != (0, 0) {
            return Err(Error::InvalidPath(format!("path starts at {first:?}")));
        }
        if last != (n1 - 1, n2 - 1) {
            return Err(Error::InvalidPath(format!(
                "path ends at {last:?}, expected {:?}",
                (n1 - 1, n2 - 1)
            )));
        }
        for (l, w) in pairs.windows(2).enumerate() {
            let step = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!(step, (1, 0) | (0, 1) | (1, 1)) {
                return Err(Error::InvalidPath(format!(
                    "illegal step {:?} -> {:?} at l = {}",
                    w[0],
                    w[1],
                    l + 1
                )));
            }
        }
        Ok(())
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Index sequence of one side: `0` for the first contour, `1` for the second.
    pub fn side(&self, side: usize) -> impl Iterator<Item = usize> + '_ {
        self.pairs
            .iter()
            .map(move |&(a, b)| if side == 0 { a } else { b })
    }

    /// Same path with the roles of the two contours swapped.
    pub fn transposed(&self) -> Self {
        Self {
            pairs: self.pairs.iter().map(|&(a, b)| (b, a)).collect(),
        }
    }

    /// Sum of squared distances along the path.
    pub fn cost(&self, x1: &[Complex64], x2: &[Complex64]) -> f64 {
        self.pairs
            .iter()
            .map(|&(i, j)| (x1[i] - x2[j]).norm_sqr())
            .sum()
    }
}

/// Serialized as `[[n1, n2], ...]` with 1-based indices.
impl Serialize for WarpingPath {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_seq(self.pairs.iter().map(|&(a, b)| [a + 1, b + 1]))
    }
}

impl<'de> Deserialize<'de> for WarpingPath {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<[usize; 2]>::deserialize(d)?;
        let pairs = raw
            .into_iter()
            .map(|[a, b]| {
                if a == 0 || b == 0 {
                    Err(D::Error::custom("warping path indices are 1-based"))
                } else {
                    Ok((a - 1, b - 1))
                }
            })
            .collect::<std::result::Result<Vec<_>, _>>()?;
        WarpingPath::from_pairs(pairs).map_err(D::Error::custom)
    }
}

/// Two sequences in one-to-one correspondence along a warping path.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedPair {
    pub a: Vec<Complex64>,
    pub b: Vec<Complex64>,
    pub path: WarpingPath,
}

/// Accumulated-cost table with an optional Sakoe-Chiba band.
///
/// Cell `(i, j)` holds the minimal cost of an admissible path from `(0, 0)`
/// to `(i, j)`; cells outside the band are infinite.
#[derive(Debug, Clone)]
pub struct CostTable {
    n1: usize,
    n2: usize,
    band: Option<usize>,
    width: usize,
    cells: Vec<f64>,
}

impl CostTable {
    pub fn compute(x1: &[Complex64], x2: &[Complex64], band: Option<usize>) -> Result<Self> {
        let (n1, n2) = (x1.len(), x2.len());
        if n1 == 0 || n2 == 0 {
            return Err(Error::InvalidArgument("empty sequence".into()));
        }
        let required = n1.abs_diff(n2);
        if let Some(b) = band {
            if b < required {
                return Err(Error::BandTooNarrow { band: b, required });
            }
        }
        let width = match band {
            Some(b) => (2 * b + 1).min(n2),
            None => n2,
        };
        let mut table = Self {
            n1,
            n2,
            band,
            width,
            cells: vec![f64::INFINITY; n1 * width],
        };
        for i in 0..n1 {
            let (lo, hi) = table.columns(i);
            for j in lo..hi {
                let local = (x1[i] - x2[j]).norm_sqr();
                let best = if i == 0 && j == 0 {
                    0.0
                } else {
                    let diag = if i > 0 && j > 0 {
                        table.get(i - 1, j - 1)
                    } else {
                        f64::INFINITY
                    };
                    let up = if i > 0 {
                        table.get(i - 1, j)
                    } else {
                        f64::INFINITY
                    };
                    let left = if j > 0 {
                        table.get(i, j - 1)
                    } else {
                        f64::INFINITY
                    };
                    diag.min(up).min(left)
                };
                let k = table.offset(i, j);
                table.cells[k] = local + best;
            }
        }
        Ok(table)
    }

    /// Half-open column range stored for row `i`.
    fn columns(&self, i: usize) -> (usize, usize) {
        match self.band {
            None => (0, self.n2),
            Some(b) => {
                let lo = i.saturating_sub(b);
                let hi = (i + b + 1).min(self.n2);
                (lo.min(self.n2), hi)
            }
        }
    }

    fn row_start(&self, i: usize) -> usize {
        match self.band {
            None => 0,
            Some(b) => i.saturating_sub(b).min(self.n2.saturating_sub(self.width)),
        }
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        i * self.width + (j - self.row_start(i))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (lo, hi) = self.columns(i);
        if i >= self.n1 || j < lo || j >= hi {
            return f64::INFINITY;
        }
        self.cells[self.offset(i, j)]
    }

    pub fn total(&self) -> f64 {
        self.get(self.n1 - 1, self.n2 - 1)
    }

    /// Optimal path ending at `(i, j)`. Ties prefer the diagonal predecessor,
    /// then `(i - 1, j)`, then `(i, j - 1)`.
    pub fn backtrack_from(&self, mut i: usize, mut j: usize) -> WarpingPath {
        let mut pairs = vec![(i, j)];
        while i > 0 || j > 0 {
            let diag = if i > 0 && j > 0 {
                self.get(i - 1, j - 1)
            } else {
                f64::INFINITY
            };
            let up = if i > 0 {
                self.get(i - 1, j)
            } else {
                f64::INFINITY
            };
            let left = if j > 0 {
                self.get(i, j - 1)
            } else {
                f64::INFINITY
            };
            if diag <= up && diag <= left {
                i -= 1;
                j -= 1;
            } else if up <= left {
                i -= 1;
            } else {
                j -= 1;
            }
            pairs.push((i, j));
        }
        pairs.reverse();
        WarpingPath { pairs }
    }

    pub fn backtrack(&self) -> WarpingPath {
        self.backtrack_from(self.n1 - 1, self.n2 - 1)
    }
}

/// Minimal-cost warping path between two contours and its cost.
///
/// With `band = Some(b)` only cells with `|i - j| <= b` are admissible, which
/// requires `b >= |n1 - n2|`.
pub fn dtw_path(x1: &Contour, x2: &Contour, band: Option<usize>) -> Result<(WarpingPath, f64)> {
    let table = CostTable::compute(x1.points(), x2.points(), band)?;
    Ok((table.backtrack(), table.total()))
}

/// Sequences `a[l] = x1[n1(l)]`, `b[l] = x2[n2(l)]`.
pub fn apply_path(x1: &Contour, x2: &Contour, path: &WarpingPath) -> Result<AlignedPair> {
    let (len1, len2) = (x1.len(), x2.len());
    let mut a = Vec::with_capacity(path.len());
    let mut b = Vec::with_capacity(path.len());
    for &(n1, n2) in path.pairs() {
        if n1 >= len1 || n2 >= len2 {
            return Err(Error::IndexOutOfRange { n1, n2, len1, len2 });
        }
        a.push(x1.points()[n1]);
        b.push(x2.points()[n2]);
    }
    Ok(AlignedPair {
        a,
        b,
        path: path.clone(),
    })
}
