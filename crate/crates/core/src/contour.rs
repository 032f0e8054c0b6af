//! Contours as complex vectors, similarity poses, preshapes, and contour files.
//!
//! A point `(x, y)` in pixels is stored as `x + iy`. Indexing is 0-based
//! throughout; only the JSON form of a warping path is 1-based.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::serde_complex;

/// Relative threshold below which a centered contour counts as a single point.
const DEGENERATE_REL: f64 = 1e-12;

/// An ordered sequence of at least two finite points.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    points: Vec<Complex64>,
}

impl Contour {
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidContour(format!(
                "need at least 2 points, got {}",
                points.len()
            )));
        }
        if let Some(n) = points
            .iter()
            .position(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::InvalidContour(format!(
                "non-finite point at index {n}"
            )));
        }
        Ok(Self { points })
    }

    pub fn from_xy(xy: &[(f64, f64)]) -> Result<Self> {
        Self::new(xy.iter().map(|&(x, y)| Complex64::new(x, y)).collect())
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Complex64> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Euclidean norm of the complex vector.
    pub fn norm(&self) -> f64 {
        norm(&self.points)
    }

    pub fn centroid(&self) -> Complex64 {
        centroid(&self.points)
    }
}

impl AsRef<[Complex64]> for Contour {
    fn as_ref(&self) -> &[Complex64] {
        &self.points
    }
}

/// Complex similarity `z -> r z + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    #[serde(with = "serde_complex::object")]
    pub r: Complex64,
    #[serde(with = "serde_complex::object")]
    pub t: Complex64,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub const fn new(r: Complex64, t: Complex64) -> Self {
        Self { r, t }
    }

    pub const fn identity() -> Self {
        Self {
            r: Complex64::new(1.0, 0.0),
            t: Complex64::new(0.0, 0.0),
        }
    }

    /// Pose from scale, rotation angle in radians, and translation.
    pub fn from_parts(scale: f64, angle: f64, t: Complex64) -> Self {
        Self {
            r: Complex64::from_polar(scale, angle),
            t,
        }
    }

    pub fn scale(&self) -> f64 {
        self.r.norm()
    }

    pub fn angle(&self) -> f64 {
        self.r.arg()
    }

    #[inline]
    pub fn apply(&self, z: Complex64) -> Complex64 {
        self.r * z + self.t
    }

    /// `(1/r, -t/r)`. Undefined for `r == 0`.
    pub fn inverse(&self) -> Self {
        let inv = self.r.inv();
        Self {
            r: inv,
            t: -self.t * inv,
        }
    }

    /// Pose equal to applying `self` first and then `after`.
    pub fn then(&self, after: &Pose) -> Self {
        Self {
            r: after.r * self.r,
            t: after.r * self.t + after.t,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.t.is_finite()
    }
}

/// Apply a pose to every point: `out[n] = r c[n] + t`.
pub fn transform(c: &Contour, p: &Pose) -> Contour {
    Contour {
        points: c.points.iter().map(|&z| p.apply(z)).collect(),
    }
}

/// A centered, unit-norm complex vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Preshape {
    #[serde(with = "serde_complex::pairs")]
    points: Vec<Complex64>,
}

impl Preshape {
    /// Wrap points that are already a preshape, checking both invariants.
    pub fn new(points: Vec<Complex64>) -> Result<Self> {
        let n = points.len();
        if n < 2 {
            return Err(Error::InvalidContour(format!(
                "need at least 2 points, got {n}"
            )));
        }
        let sum: Complex64 = points.iter().sum();
        let nrm = norm(&points);
        if sum.norm() / n as f64 > 1e-9 * n as f64 || (nrm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidContour(
                "points are not centered with unit norm".into(),
            ));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// The preshape viewed as an ordinary contour in preshape coordinates.
    pub fn to_contour(&self) -> Contour {
        Contour {
            points: self.points.clone(),
        }
    }

    /// Hermitian inner product `other^H self`.
    pub fn inner(&self, other: &Preshape) -> Complex64 {
        inner(&other.points, &self.points)
    }
}

/// Preshape of a contour plus the removed centroid and norm.
///
/// `c[n] = scale * tau[n] + centroid`.
pub fn to_preshape(c: &[Complex64]) -> Result<(Preshape, Complex64, f64)> {
    if c.len() < 2 {
        return Err(Error::InvalidContour(format!(
            "need at least 2 points, got {}",
            c.len()
        )));
    }
    let mu = centroid(c);
    let centered: Vec<Complex64> = c.iter().map(|&z| z - mu).collect();
    let scale = norm(&centered);
    let magnitude = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !scale.is_finite() || scale <= DEGENERATE_REL * magnitude.max(f64::MIN_POSITIVE) {
        return Err(Error::DegenerateContour);
    }
    let points = centered.into_iter().map(|z| z / scale).collect();
    Ok((Preshape { points }, mu, scale))
}

/// Great-circle distance `acos |b^H a|` between two preshapes, in `[0, pi/2]`.
pub fn geodesic_distance(a: &Preshape, b: &Preshape) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    // Chord form of acos|b^H a|: accurate near zero where acos is not.
    let z = inner(&b.points, &a.points);
    let mag = z.norm();
    if mag == 0.0 {
        return Ok(std::f64::consts::FRAC_PI_2);
    }
    let u = z / mag;
    let chord = a
        .points
        .iter()
        .zip(&b.points)
        .map(|(&x, &y)| (x - u * y).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok((2.0 * (0.5 * chord).min(1.0).asin()).min(std::f64::consts::FRAC_PI_2))
}

/// `a^H b`.
pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub(crate) fn norm(z: &[Complex64]) -> f64 {
    z.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub(crate) fn centroid(z: &[Complex64]) -> Complex64 {
    z.iter().sum::<Complex64>() / z.len() as f64
}

// ---------------------------------------------------------------------------
// File formats

/// Read a contour from `x,y` lines. Blank lines are skipped.
pub fn read_contour<R: Read>(reader: R) -> Result<Contour> {
    let mut points = Vec::new();
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::ParseError {
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(Error::MalformedRow {
                line: line_no,
                found: fields.len(),
            });
        }
        let parse = |s: &str| {
            s.parse::<f64>().map_err(|e| Error::ParseError {
                line: line_no,
                message: format!("{s:?}: {e}"),
            })
        };
        let (x, y) = (parse(fields[0])?, parse(fields[1])?);
        if !x.is_finite() || !y.is_finite() {
            return Err(Error::ParseError {
                line: line_no,
                message: "non-finite coordinate".into(),
            });
        }
        points.push(Complex64::new(x, y));
    }
    Contour::new(points)
}

/// Write `x,y` lines using shortest round-trip float formatting.
pub fn write_contour<W: Write>(c: &Contour, writer: W) -> std::io::Result<()> {
    write_points(c.points(), writer)
}

pub(crate) fn write_points<W: Write>(points: &[Complex64], writer: W) -> std::io::Result<()> {
    let mut w = BufWriter::new(writer);
    for z in points {
        writeln!(w, "{},{}", z.re, z.im)?;
    }
    w.flush()
}

/// JSON contour document: `{"name", "pixel_size_mm"?, "points": [[x, y], ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourDocument {
    #[serde(default)]
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_size_mm: Option<f64>,
    #[serde(with = "serde_complex::pairs")]
    pub points: Vec<Complex64>,
}

impl ContourDocument {
    pub fn new(name: impl Into<String>, contour: &Contour) -> Self {
        Self {
            name: name.into(),
            pixel_size_mm: None,
            points: contour.points().to_vec(),
        }
    }

    pub fn contour(&self) -> Result<Contour> {
        Contour::new(self.points.clone())
    }
}

pub fn read_contour_json<R: Read>(reader: R) -> Result<ContourDocument> {
    let doc: ContourDocument = serde_json::from_reader(BufReader::new(reader))?;
    doc.contour()?;
    Ok(doc)
}

/// Read a contour file, choosing the format by extension (`.json` or CSV).
pub fn load_contour(path: &Path) -> Result<Contour> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let is_json = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if is_json {
        read_contour_json(file)?.contour()
    } else {
        read_contour(file)
    }
}

pub fn save_contour(c: &Contour, path: &Path) -> Result<()> {
    let io_err = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(io_err)?;
    write_contour(c, file).map_err(io_err)
}
