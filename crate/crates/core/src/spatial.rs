//! Uniform hash grid for nearest-point queries on planar point sets.

use num_complex::Complex64;

#[derive(Debug, Clone)]
pub struct NearestGrid {
    points: Vec<Complex64>,
    origin: Complex64,
    cell: f64,
    nx: usize,
    ny: usize,
    /// CSR layout: indices of cell `k` are `order[start[k]..start[k + 1]]`.
    start: Vec<usize>,
    order: Vec<usize>,
}

impl NearestGrid {
    /// Panics if `points` is empty.
    pub fn new(points: &[Complex64]) -> Self {
        assert!(!points.is_empty(), "nearest-point grid needs points");
        let (mut lo, mut hi) = (points[0], points[0]);
        for z in points {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        let (w, h) = (hi.re - lo.re, hi.im - lo.im);
        let n = points.len() as f64;
        let mut cell = if w > 0.0 && h > 0.0 {
            (w * h / n).sqrt()
        } else {
            w.max(h) / n
        };
        // Keep the grid from exploding for very elongated sets.
        cell = cell.max(w.max(h) / 4096.0);
        if !(cell > 0.0) || !cell.is_finite() {
            cell = 1.0;
        }
        let nx = (w / cell) as usize + 1;
        let ny = (h / cell) as usize + 1;
        let mut counts = vec![0usize; nx * ny + 1];
        let key = |z: Complex64| {
            let ix = (((z.re - lo.re) / cell) as usize).min(nx - 1);
            let iy = (((z.im - lo.im) / cell) as usize).min(ny - 1);
            iy * nx + ix
        };
        for &z in points {
            counts[key(z) + 1] += 1;
        }
        for k in 1..counts.len() {
            counts[k] += counts[k - 1];
        }
        let start = counts.clone();
        let mut fill = counts;
        let mut order = vec![0; points.len()];
        for (i, &z) in points.iter().enumerate() {
            let k = key(z);
            order[fill[k]] = i;
            fill[k] += 1;
        }
        Self {
            points: points.to_vec(),
            origin: lo,
            cell,
            nx,
            ny,
            start,
            order,
        }
    }

    /// Index and squared distance of the point nearest to `q`.
    /// Ties resolve to the lowest index.
    pub fn nearest(&self, q: Complex64) -> (usize, f64) {
        let cx = ((q.re - self.origin.re) / self.cell).floor() as i64;
        let cy = ((q.im - self.origin.im) / self.cell).floor() as i64;
        let (nx, ny) = (self.nx as i64, self.ny as i64);
        let outside = |c: i64, n: i64| {
            if c < 0 {
                -c
            } else if c >= n {
                c - n + 1
            } else {
                0
            }
        };
        let first_ring = outside(cx, nx).max(outside(cy, ny));
        let last_ring = (cx.max(nx - 1 - cx))
            .max(cy.max(ny - 1 - cy))
            .max(first_ring);

        let mut best = (usize::MAX, f64::INFINITY);
        for ring in first_ring..=last_ring {
            let mut visit = |ix: i64, iy: i64| {
                if ix < 0 || iy < 0 || ix >= nx || iy >= ny {
                    return;
                }
                let k = iy as usize * self.nx + ix as usize;
                for &i in &self.order[self.start[k]..self.start[k + 1]] {
                    let d = (self.points[i] - q).norm_sqr();
                    if d < best.1 || (d == best.1 && i < best.0) {
                        best = (i, d);
                    }
                }
            };
            if ring == 0 {
                visit(cx, cy);
            } else {
                for ix in cx - ring..=cx + ring {
                    visit(ix, cy - ring);
                    visit(ix, cy + ring);
                }
                for iy in cy - ring + 1..cy + ring {
                    visit(cx - ring, iy);
                    visit(cx + ring, iy);
                }
            }
            // Cells in ring k + 1 and beyond are at least k cells away.
            let reach = ring as f64 * self.cell;
            if best.0 != usize::MAX && best.1 <= reach * reach {
                break;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute(points: &[Complex64], q: Complex64) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        for (i, p) in points.iter().enumerate() {
            let d = (p - q).norm_sqr();
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in [1usize, 2, 7, 100, 1500] {
            let pts: Vec<Complex64> = (0..n)
                .map(|k| {
                    let t = k as f64 / n as f64 * 6.0;
                    Complex64::new(100.0 * t.cos(), 40.0 * t.sin())
                        + Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
                .collect();
            let grid = NearestGrid::new(&pts);
            for _ in 0..500 {
                let q = Complex64::new(
                    rng.random_range(-300.0..300.0),
                    rng.random_range(-200.0..200.0),
                );
                assert_eq!(grid.nearest(q), brute(&pts, q));
            }
        }
    }

    #[test]
    fn degenerate_layouts() {
        let line: Vec<Complex64> = (0..50).map(|k| Complex64::new(k as f64, 3.0)).collect();
        let grid = NearestGrid::new(&line);
        assert_eq!(grid.nearest(Complex64::new(10.2, 50.0)).0, 10);
        let same = vec![Complex64::new(2.0, 2.0); 4];
        assert_eq!(
            NearestGrid::new(&same).nearest(Complex64::new(0.0, 0.0)),
            (0, 8.0)
        );
    }
}
