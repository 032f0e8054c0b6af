//! Synthetic contours and perturbations: a femur-like template, families drawn
//! from `x = r(mu + delta) + t`, segment outliers, shuffling and order recovery.
//!
//! All generators use ChaCha8 seeded from a `u64`. Independent draws live on
//! separate ChaCha streams of the same key: stream 0 for per-point noise,
//! stream `s + 1` for segment or sample `s`. Output depends only on
//! `(inputs, seed)`.

use std::collections::VecDeque;
use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::contour::{Contour, Pose};
use crate::error::{Error, Result};
use crate::serde_complex;

fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draw from CN(0, var): independent real and imaginary parts of variance var/2.
fn complex_normal(rng: &mut impl Rng, sigma: f64) -> Complex64 {
    if sigma == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let d = Normal::new(0.0, sigma * FRAC_1_SQRT_2).expect("finite sigma");
    Complex64::new(d.sample(rng), d.sample(rng))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierConfig {
    /// Std of the complex displacement of each segment (pixels).
    pub sigma_t: f64,
    /// Std of the complex noise added to every point (pixels).
    pub sigma_n: f64,
    pub n_segments: usize,
    /// Segment length range as fractions of the contour length.
    pub seg_len_frac: (f64, f64),
    pub seed: u64,
}

impl OutlierConfig {
    pub fn standard(seed: u64) -> Self {
        Self {
            sigma_t: 12.0,
            sigma_n: 1.0,
            n_segments: 10,
            seg_len_frac: (0.01, 0.10),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.seg_len_frac;
        if !(self.sigma_t >= 0.0 && self.sigma_t.is_finite()) {
            return Err(Error::ConfigInfeasible(format!(
                "sigma_t must be >= 0, got {}",
                self.sigma_t
            )));
        }
        if !(self.sigma_n >= 0.0 && self.sigma_n.is_finite()) {
            return Err(Error::ConfigInfeasible(format!(
                "sigma_n must be >= 0, got {}",
                self.sigma_n
            )));
        }
        if !(0.0 < lo && lo <= hi && hi < 1.0) {
            return Err(Error::ConfigInfeasible(format!(
                "segment length fractions must satisfy 0 < min <= max < 1, got ({lo}, {hi})"
            )));
        }
        if self.n_segments == 0 {
            return Err(Error::ConfigInfeasible(
                "n_segments must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Add CN(0, sigma_n^2) noise to every point, then displace `n_segments`
/// random segments by one CN(0, sigma_t^2) draw each. Segments may overlap.
/// The mask marks points belonging to at least one segment.
pub fn inject_outliers(c: &Contour, cfg: &OutlierConfig) -> Result<(Contour, Vec<bool>)> {
    cfg.validate()?;
    let n = c.len();
    let min_len = ((cfg.seg_len_frac.0 * n as f64).round() as usize).max(1);
    if cfg.n_segments * min_len > n {
        return Err(Error::ConfigInfeasible(format!(
            "{} segments of at least {min_len} points do not fit in {n} points",
            cfg.n_segments
        )));
    }

    let mut noise = stream(cfg.seed, 0);
    let mut points: Vec<Complex64> = c
        .points()
        .iter()
        .map(|&z| z + complex_normal(&mut noise, cfg.sigma_n))
        .collect();

    let mut mask = vec![false; n];
    for s in 0..cfg.n_segments {
        let mut rng = stream(cfg.seed, s as u64 + 1);
        let frac = rng.random_range(cfg.seg_len_frac.0..=cfg.seg_len_frac.1);
        let len = ((frac * n as f64).round() as usize).clamp(1, n);
        let start = rng.random_range(0..=n - len);
        let beta = complex_normal(&mut rng, cfg.sigma_t);
        for k in start..start + len {
            points[k] += beta;
            mask[k] = true;
        }
    }
    Ok((Contour::new(points)?, mask))
}

pub fn shuffle_points(c: &Contour, seed: u64) -> Contour {
    let mut points = c.points().to_vec();
    points.shuffle(&mut stream(seed, 0));
    Contour::new(points).expect("permutation of a valid contour")
}

// ---------------------------------------------------------------------------
// Order recovery

const KNN: usize = 4;

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, mut i: usize) -> usize {
        while self.0[i] != i {
            self.0[i] = self.0[self.0[i]];
            i = self.0[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return false;
        }
        self.0[a.max(b)] = a.min(b);
        true
    }
}

fn sorted_edges(mut edges: Vec<(f64, usize, usize)>) -> Vec<(f64, usize, usize)> {
    edges.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    edges.dedup_by(|a, b| a.1 == b.1 && a.2 == b.2);
    edges
}

/// Minimum spanning tree of the symmetric k-nearest-neighbour graph; if that
/// graph is disconnected the components are joined by the shortest edges
/// between them.
fn spanning_tree(points: &[Complex64]) -> Vec<Vec<(usize, f64)>> {
    let n = points.len();
    let k = KNN.min(n - 1);
    let mut edges = Vec::with_capacity(n * k);
    let mut dists: Vec<(f64, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        dists.clear();
        dists.extend(
            (0..n)
                .filter(|&j| j != i)
                .map(|j| ((points[i] - points[j]).norm(), j)),
        );
        dists.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(d, j) in &dists[..k] {
            edges.push((d, i.min(j), i.max(j)));
        }
    }

    let mut uf = UnionFind((0..n).collect());
    let mut adj = vec![Vec::new(); n];
    let mut joined = 0;
    for (d, a, b) in sorted_edges(edges) {
        if uf.union(a, b) {
            adj[a].push((b, d));
            adj[b].push((a, d));
            joined += 1;
        }
    }
    if joined + 1 < n {
        let mut all = Vec::with_capacity(n * (n - 1) / 2);
        for a in 0..n {
            for b in a + 1..n {
                if uf.find(a) != uf.find(b) {
                    all.push(((points[a] - points[b]).norm(), a, b));
                }
            }
        }
        for (d, a, b) in sorted_edges(all) {
            if uf.union(a, b) {
                adj[a].push((b, d));
                adj[b].push((a, d));
            }
        }
    }
    adj
}

/// Distances and parents from `root` over the tree.
fn tree_distances(adj: &[Vec<(usize, f64)>], root: usize) -> (Vec<f64>, Vec<usize>) {
    let n = adj.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    dist[root] = 0.0;
    let mut stack = vec![root];
    while let Some(u) = stack.pop() {
        for &(v, d) in &adj[u] {
            if dist[v].is_infinite() {
                dist[v] = dist[u] + d;
                parent[v] = u;
                stack.push(v);
            }
        }
    }
    (dist, parent)
}

fn farthest(dist: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in dist.iter().enumerate() {
        if d > dist[best] {
            best = i;
        }
    }
    best
}

fn signed_area(points: &[Complex64]) -> f64 {
    let n = points.len();
    (0..n)
        .map(|k| (points[k].conj() * points[(k + 1) % n]).im)
        .sum::<f64>()
        * 0.5
}

/// Approximate traversal order of an unordered, curve-like point set.
///
/// The longest path through the spanning tree of the k-nearest-neighbour
/// graph forms the chain; points on short side branches are inserted where
/// they lengthen the chain least. The result runs anti-clockwise (positive
/// signed area, y up). A closed chain starts at the point closest to the
/// bounding-box border.
pub fn recover_order(points: &[Complex64]) -> Result<Contour> {
    let n = points.len();
    if n < 3 {
        return Err(Error::OrderRecoveryFailed(format!(
            "need at least 3 points, got {n}"
        )));
    }
    if points
        .iter()
        .any(|z| !z.re.is_finite() || !z.im.is_finite())
    {
        return Err(Error::InvalidContour("non-finite coordinate".into()));
    }
    let adj = spanning_tree(points);
    let (d0, _) = tree_distances(&adj, 0);
    let u = farthest(&d0);
    let (du, parent) = tree_distances(&adj, u);
    let v = farthest(&du);
    let mut chain = vec![v];
    while *chain.last().unwrap() != u {
        chain.push(parent[*chain.last().unwrap()]);
    }

    let mut on_chain = vec![false; n];
    for &i in &chain {
        on_chain[i] = true;
    }
    // Side branches, nearest first; reject chain points carrying large ones.
    let mut pending = Vec::new();
    let mut seen = on_chain.clone();
    for &c in &chain {
        let mut attached = 0;
        for &(start, _) in &adj[c] {
            if seen[start] {
                continue;
            }
            let mut branch = Vec::new();
            let mut queue = VecDeque::from([start]);
            seen[start] = true;
            while let Some(x) = queue.pop_front() {
                branch.push(x);
                for &(y, _) in &adj[x] {
                    if !seen[y] {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            attached += branch.len();
            if attached > n / 4 {
                return Err(Error::OrderRecoveryFailed(format!(
                    "{attached} points branch off the main chain at one point"
                )));
            }
            pending.extend(branch);
        }
    }

    let mut order: Vec<usize> = chain;
    let dist = |a: usize, b: usize| (points[a] - points[b]).norm();
    for p in pending {
        let last = order.len() - 1;
        let mut best = (dist(p, order[0]), 0usize);
        let tail = dist(p, order[last]);
        if tail < best.0 {
            best = (tail, last + 1);
        }
        for k in 0..last {
            let cost = dist(order[k], p) + dist(p, order[k + 1]) - dist(order[k], order[k + 1]);
            if cost < best.0 {
                best = (cost, k + 1);
            }
        }
        order.insert(best.1, p);
    }

    let mut out: Vec<Complex64> = order.iter().map(|&i| points[i]).collect();
    if signed_area(&out) < 0.0 {
        out.reverse();
    }

    let mut steps: Vec<f64> = out.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    steps.sort_by(f64::total_cmp);
    let median = steps[steps.len() / 2];
    let gap = (out[0] - out[n - 1]).norm();
    if gap <= 3.0 * median {
        let (mut lo, mut hi) = (out[0], out[0]);
        for z in &out {
            lo = Complex64::new(lo.re.min(z.re), lo.im.min(z.im));
            hi = Complex64::new(hi.re.max(z.re), hi.im.max(z.im));
        }
        let border = |z: &Complex64| {
            (z.re - lo.re)
                .min(hi.re - z.re)
                .min(z.im - lo.im)
                .min(hi.im - z.im)
        };
        let mut start = 0;
        for (k, z) in out.iter().enumerate() {
            if border(z) < border(&out[start]) {
                start = k;
            }
        }
        out.rotate_left(start);
    }
    Contour::new(out)
}

// ---------------------------------------------------------------------------
// Template and families

/// Smooth open outline of a proximal femur (medial shaft, head, neck,
/// greater trochanter, lateral shaft), anti-clockwise, `n` points spaced
/// 1 pixel apart along the curve.
pub fn femur_like_template(n: usize) -> Result<Contour> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "template needs at least 4 points, got {n}"
        )));
    }
    let keys: [(f64, f64); 20] = [
        (100.0, 0.0),
        (102.0, 80.0),
        (100.0, 150.0),
        (92.0, 188.0),
        (78.0, 204.0),
        (86.0, 222.0),
        (70.0, 250.0),
        (42.0, 258.0),
        (20.0, 288.0),
        (24.0, 328.0),
        (54.0, 352.0),
        (90.0, 342.0),
        (112.0, 316.0),
        (140.0, 302.0),
        (164.0, 322.0),
        (186.0, 312.0),
        (192.0, 272.0),
        (182.0, 200.0),
        (173.0, 120.0),
        (170.0, 0.0),
    ];
    let k: Vec<Complex64> = keys.iter().map(|&(x, y)| Complex64::new(x, y)).collect();
    let per = 64;
    let mut dense = Vec::with_capacity(per * (k.len() - 1) + 1);
    for i in 0..k.len() - 1 {
        let p0 = k[i.saturating_sub(1)];
        let (p1, p2) = (k[i], k[i + 1]);
        let p3 = k[(i + 2).min(k.len() - 1)];
        for s in 0..per {
            let t = s as f64 / per as f64;
            let (t2, t3) = (t * t, t * t * t);
            dense.push(
                0.5 * (p1 * 2.0
                    + (p2 - p0) * t
                    + (p0 * 2.0 - p1 * 5.0 + p2 * 4.0 - p3) * t2
                    + (p1 * 3.0 - p0 - p2 * 3.0 + p3) * t3),
            );
        }
    }
    dense.push(k[k.len() - 1]);

    let mut arc = vec![0.0];
    for w in dense.windows(2) {
        arc.push(arc.last().unwrap() + (w[1] - w[0]).norm());
    }
    let total = *arc.last().unwrap();
    let scale = (n - 1) as f64 / total;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    for i in 0..n {
        let s = total * i as f64 / (n - 1) as f64;
        while j + 2 < arc.len() && arc[j + 1] < s {
            j += 1;
        }
        let f = ((s - arc[j]) / (arc[j + 1] - arc[j])).clamp(0.0, 1.0);
        let z = dense[j] * (1.0 - f) + dense[j + 1] * f;
        out.push(z * scale + Complex64::new(100.0, 60.0));
    }
    if signed_area(&out) < 0.0 {
        out.reverse();
    }
    Contour::new(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRanges {
    pub scale: (f64, f64),
    /// Rotation drawn from `[-max_rotation, max_rotation]` radians.
    pub max_rotation: f64,
    pub translation_x: (f64, f64),
    pub translation_y: (f64, f64),
}

impl PoseRanges {
    pub fn identity() -> Self {
        Self {
            scale: (1.0, 1.0),
            max_rotation: 0.0,
            translation_x: (0.0, 0.0),
            translation_y: (0.0, 0.0),
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> Pose {
        let uniform = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        };
        let s = uniform(rng, self.scale);
        let a = uniform(rng, (-self.max_rotation, self.max_rotation));
        let tx = uniform(rng, self.translation_x);
        let ty = uniform(rng, self.translation_y);
        Pose::from_parts(s, a, Complex64::new(tx, ty))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthFamilyConfig {
    pub base: Contour,
    pub m: usize,
    /// Std of each coordinate of the deformation (pixels).
    pub deform_sigma: f64,
    pub pose_ranges: PoseRanges,
    /// Fraction of points removed from one randomly chosen end.
    pub truncation_frac: (f64, f64),
    pub seed: u64,
}

impl SynthFamilyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::ConfigInfeasible(msg));
        let p = &self.pose_ranges;
        if self.m < 2 {
            return bad(format!("need at least 2 samples, got {}", self.m));
        }
        if !(p.scale.0 > 0.0 && p.scale.0 <= p.scale.1 && p.scale.1.is_finite()) {
            return bad(format!(
                "scale range must satisfy 0 < lo <= hi, got {:?}",
                p.scale
            ));
        }
        if !(p.max_rotation >= 0.0 && p.max_rotation.is_finite()) {
            return bad(format!("max_rotation must be >= 0, got {}", p.max_rotation));
        }
        for r in [p.translation_x, p.translation_y] {
            if !(r.0 <= r.1 && r.0.is_finite() && r.1.is_finite()) {
                return bad(format!("invalid translation range {r:?}"));
            }
        }
        if !(self.deform_sigma >= 0.0 && self.deform_sigma.is_finite()) {
            return bad(format!(
                "deform_sigma must be >= 0, got {}",
                self.deform_sigma
            ));
        }
        let (lo, hi) = self.truncation_frac;
        if !(0.0 <= lo && lo <= hi && hi < 1.0) {
            return bad(format!(
                "truncation fractions must satisfy 0 <= min <= max < 1, got ({lo}, {hi})"
            ));
        }
        let n = self.base.len();
        if n - (hi * n as f64).round() as usize >= n.min(3) && n >= 3 {
            Ok(())
        } else {
            bad(format!("truncating {hi} of {n} points leaves fewer than 3"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTruth {
    /// `sample = pose(base[kept] + deformation)`.
    pub pose: Pose,
    #[serde(with = "serde_complex::pairs")]
    pub deformation: Vec<Complex64>,
    /// Retained half-open index range of the base template.
    pub kept: (usize, usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub samples: Vec<Contour>,
    pub truth: Vec<SampleTruth>,
}

pub fn generate_family(cfg: &SynthFamilyConfig) -> Result<Family> {
    cfg.validate()?;
    let base = cfg.base.points();
    let n = base.len();
    let mut samples = Vec::with_capacity(cfg.m);
    let mut truth = Vec::with_capacity(cfg.m);
    for m in 0..cfg.m {
        let mut rng = stream(cfg.seed, m as u64 + 1);
        let pose = cfg.pose_ranges.draw(&mut rng);
        let (lo, hi) = cfg.truncation_frac;
        let frac = if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        };
        let cut = (frac * n as f64).round() as usize;
        let kept = if rng.random_bool(0.5) {
            (cut, n)
        } else {
            (0, n - cut)
        };
        let normal = Normal::new(0.0, cfg.deform_sigma).expect("validated sigma");
        let deformation: Vec<Complex64> = (0..n)
            .map(|_| {
                if cfg.deform_sigma == 0.0 {
                    Complex64::new(0.0, 0.0)
                } else {
                    Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng))
                }
            })
            .collect();
        let points: Vec<Complex64> = (kept.0..kept.1)
            .map(|k| pose.apply(base[k] + deformation[k]))
            .collect();
        samples.push(Contour::new(points)?);
        truth.push(SampleTruth {
            pose,
            deformation: deformation[kept.0..kept.1].to_vec(),
            kept,
        });
    }
    Ok(Family { samples, truth })
}
