//! Trajectory anchors: K-means over an ego-frame trajectory corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Pose2, Vec2};

const MAX_ITERATIONS: usize = 200;
const SHIFT_TOLERANCE: f64 = 1e-6;
/// Segments shorter than this keep the previous heading.
const MIN_HEADING_SEGMENT: f64 = 0.1;

/// Ego-frame trajectories (origin at the ego pose at t = 0, +x forward),
/// each holding the H future waypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCorpus {
    trajectories: Vec<Vec<Vec2>>,
    horizon: usize,
}

impl TrajectoryCorpus {
    pub fn new(trajectories: Vec<Vec<Vec2>>) -> Result<Self> {
        let horizon = trajectories.first().ok_or(Error::Empty("corpus"))?.len();
        if horizon == 0 {
            return Err(Error::invalid("corpus", "trajectories must have at least one waypoint"));
        }
        for (i, t) in trajectories.iter().enumerate() {
            if t.len() != horizon {
                return Err(Error::LengthMismatch {
                    what: format!("corpus trajectory {i}"),
                    expected: horizon,
                    actual: t.len(),
                });
            }
            if t.iter().any(|p| !p.is_finite()) {
                return Err(Error::invalid(format!("corpus trajectory {i}"), "non-finite waypoint"));
            }
        }
        Ok(TrajectoryCorpus { trajectories, horizon })
    }

    pub fn trajectories(&self) -> &[Vec<Vec2>] {
        &self.trajectories
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("corpus 1\n{} {}\n", self.len(), self.horizon);
        for t in &self.trajectories {
            out.push_str(&flat_line(t));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, rows) = parse_table(text, "corpus")?;
        let [n, h] = header_fields::<2>(&header, "corpus")?;
        let trajectories = parse_rows(rows, n as usize, h as usize, "corpus")?;
        Self::new(trajectories)
    }
}

/// The fitted anchor vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSet {
    anchors: Vec<Vec<Vec2>>,
    seed: u64,
}

/// Per-iteration record of a K-means fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Within-cluster sum of squares after each centroid update.
    pub sse: Vec<f64>,
    pub converged: bool,
}

impl AnchorSet {
    pub fn new(anchors: Vec<Vec<Vec2>>, seed: u64) -> Result<Self> {
        let corpus = TrajectoryCorpus::new(anchors)?;
        let flat: Vec<Vec<f64>> = corpus.trajectories.iter().map(|t| flatten(t)).collect();
        for i in 0..flat.len() {
            for j in 0..i {
                if sq_dist(&flat[i], &flat[j]).sqrt() <= 1e-9 {
                    return Err(Error::invalid(format!("anchors[{i}]"), format!("duplicates anchors[{j}]")));
                }
            }
        }
        Ok(AnchorSet {
            anchors: corpus.trajectories,
            seed,
        })
    }

    pub fn anchors(&self) -> &[Vec<Vec2>] {
        &self.anchors
    }

    pub fn k(&self) -> usize {
        self.anchors.len()
    }

    pub fn horizon(&self) -> usize {
        self.anchors[0].len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Anchor `i` as ego-frame poses, headings taken from consecutive waypoints.
    pub fn poses(&self, i: usize) -> Vec<Pose2> {
        waypoints_to_poses(&self.anchors[i])
    }

    /// Index of the anchor closest in flattened L2, lowest index on ties.
    pub fn nearest(&self, traj: &[Vec2]) -> Result<(usize, f64)> {
        if traj.len() != self.horizon() {
            return Err(Error::HorizonMismatch {
                expected: self.horizon(),
                actual: traj.len(),
            });
        }
        let mut best = (0, f64::INFINITY);
        for (i, a) in self.anchors.iter().enumerate() {
            let d: f64 = a.iter().zip(traj).map(|(p, q)| p.distance(*q).powi(2)).sum();
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok((best.0, best.1.sqrt()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("anchors 1\n{} {} {}\n", self.k(), self.horizon(), self.seed);
        for a in &self.anchors {
            out.push_str(&flat_line(a));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let (header, rows) = parse_table(text, "anchors")?;
        let [k, h, seed] = header_fields::<3>(&header, "anchors")?;
        let anchors = parse_rows(rows, k as usize, h as usize, "anchors")?;
        Self::new(anchors, seed)
    }
}

pub fn nearest_anchor(traj: &[Vec2], anchors: &AnchorSet) -> Result<(usize, f64)> {
    anchors.nearest(traj)
}

/// Headings follow the segment leading into each waypoint; the first
/// waypoint uses the segment from the origin. Very short segments inherit
/// the previous heading (0 at the start).
pub fn waypoints_to_poses(points: &[Vec2]) -> Vec<Pose2> {
    let mut heading = 0.0;
    let mut prev = Vec2::new(0.0, 0.0);
    let mut out: Vec<Pose2> = points
        .iter()
        .map(|&p| {
            let d = p - prev;
            if d.norm() >= MIN_HEADING_SEGMENT {
                heading = d.y.atan2(d.x);
            }
            prev = p;
            Pose2::from_position(p, heading)
        })
        .collect();
    // The final segment copies the heading of the one before it.
    let n = out.len();
    if n >= 2 {
        let h = out[n - 2].heading();
        out[n - 1].set_heading(h);
    }
    out
}

pub fn fit_anchors(corpus: &TrajectoryCorpus, k: usize, seed: u64) -> Result<AnchorSet> {
    fit_anchors_traced(corpus, k, seed).map(|(a, _)| a)
}

pub fn fit_anchors_traced(corpus: &TrajectoryCorpus, k: usize, seed: u64) -> Result<(AnchorSet, FitTrace)> {
    if k == 0 {
        return Err(Error::invalid("k", "must be at least 1"));
    }
    let points: Vec<Vec<f64>> = corpus.trajectories.iter().map(|t| flatten(t)).collect();
    let distinct = count_distinct(&points);
    if distinct < k {
        return Err(Error::CorpusTooSmall {
            available: distinct,
            requested: k,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_pp(&points, k, &mut rng);
    let mut assign = vec![0usize; points.len()];
    let mut trace = FitTrace {
        sse: Vec::new(),
        converged: false,
    };

    for _ in 0..MAX_ITERATIONS {
        for (a, p) in assign.iter_mut().zip(&points) {
            *a = nearest_index(p, &centroids);
        }
        reseed_empty(&points, &centroids, &mut assign, k);

        let dim = points[0].len();
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assign) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        let mut max_shift: f64 = 0.0;
        for c in 0..k {
            let mean: Vec<f64> = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            max_shift = max_shift.max(max_waypoint_shift(&mean, &centroids[c]));
            centroids[c] = mean;
        }
        let sse = points
            .iter()
            .zip(&assign)
            .map(|(p, &a)| sq_dist(p, &centroids[a]))
            .sum();
        trace.sse.push(sse);
        if max_shift < SHIFT_TOLERANCE {
            trace.converged = true;
            break;
        }
    }

    let anchors = centroids.iter().map(|c| unflatten(c)).collect();
    Ok((AnchorSet::new(anchors, seed)?, trace))
}

fn kmeans_pp(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let first = rng.random_range(0..points.len());
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        // Fall back to the last positive-weight point if rounding overshoots.
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("distinct points remain");
        for (i, &d) in d2.iter().enumerate() {
            acc += d;
            if d > 0.0 && acc > target {
                pick = i;
                break;
            }
        }
        let c = points[pick].clone();
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &c));
        }
        centroids.push(c);
    }
    centroids
}

/// Moves the point farthest from its own centroid into each empty cluster.
fn reseed_empty(points: &[Vec<f64>], centroids: &[Vec<f64>], assign: &mut [usize], k: usize) {
    let mut counts = vec![0usize; k];
    for &a in assign.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[assign[i]] <= 1 {
                continue;
            }
            let d = sq_dist(p, &centroids[assign[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            counts[assign[i]] -= 1;
            assign[i] = c;
            counts[c] = 1;
        }
    }
}

fn nearest_index(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best.0
}

fn max_waypoint_shift(a: &[f64], b: &[f64]) -> f64 {
    a.chunks(2)
        .zip(b.chunks(2))
        .map(|(p, q)| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt())
        .fold(0.0, f64::max)
}

fn count_distinct(points: &[Vec<f64>]) -> usize {
    let mut sorted: Vec<&Vec<f64>> = points.iter().collect();
    sorted.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    sorted.dedup();
    sorted.len()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn flatten(t: &[Vec2]) -> Vec<f64> {
    t.iter().flat_map(|p| [p.x, p.y]).collect()
}

fn unflatten(v: &[f64]) -> Vec<Vec2> {
    v.chunks(2).map(|c| Vec2::new(c[0], c[1])).collect()
}

fn flat_line(t: &[Vec2]) -> String {
    let mut line = flatten(t).iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ");
    line.push('\n');
    line
}

fn parse_table<'a>(text: &'a str, magic: &str) -> Result<(Vec<&'a str>, Vec<&'a str>)> {
    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    let first = lines.next().ok_or_else(|| Error::parse(magic, "empty input"))?;
    if first != format!("{magic} 1") {
        return Err(Error::parse(magic, format!("expected header `{magic} 1`, got `{first}`")));
    }
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(magic, "missing size line"))?
        .split_whitespace()
        .collect();
    Ok((header, lines.collect()))
}

fn header_fields<const N: usize>(fields: &[&str], ctx: &str) -> Result<[u64; N]> {
    if fields.len() != N {
        return Err(Error::parse(ctx, format!("size line needs {N} fields")));
    }
    let mut out = [0u64; N];
    for (o, f) in out.iter_mut().zip(fields) {
        *o = f.parse().map_err(|e| Error::parse(ctx, format!("`{f}`: {e}")))?;
    }
    Ok(out)
}

fn parse_rows(rows: Vec<&str>, n: usize, h: usize, ctx: &str) -> Result<Vec<Vec<Vec2>>> {
    if rows.len() != n {
        return Err(Error::LengthMismatch {
            what: format!("{ctx} rows"),
            expected: n,
            actual: rows.len(),
        });
    }
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let vals = row
                .split_whitespace()
                .map(|v| v.parse::<f64>().map_err(|e| Error::parse(ctx, format!("row {i}: `{v}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if vals.len() != 2 * h {
                return Err(Error::LengthMismatch {
                    what: format!("{ctx} row {i}"),
                    expected: 2 * h,
                    actual: vals.len(),
                });
            }
            Ok(unflatten(&vals))
        })
        .collect()
}
