//! Planar primitives and the exact predicates the metrics are built on.
//!
//! Everything lives in a top-down metric frame: x/y in meters, headings in
//! radians measured counter-clockwise from +x and kept in (-π, π].

use std::f64::consts::{PI, TAU};
use std::fmt::Write as _;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wraps an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let r = angle.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Vec2 { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Vec2::new(c, s)
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_sq(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Rotates counter-clockwise by `angle`.
    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = angle.sin_cos();
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl From<[f64; 2]> for Vec2 {
    fn from([x, y]: [f64; 2]) -> Self {
        Vec2::new(x, y)
    }
}

impl From<Vec2> for [f64; 2] {
    fn from(v: Vec2) -> Self {
        [v.x, v.y]
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl AddAssign for Vec2 {
    fn add_assign(&mut self, o: Vec2) {
        self.x += o.x;
        self.y += o.y;
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, o: Vec2) -> Vec2 {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, k: f64) -> Vec2 {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

/// A planar pose. Serialized as `[x, y, heading]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    heading: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Pose2 {
            x,
            y,
            heading: normalize_angle(heading),
        }
    }

    pub fn from_position(p: Vec2, heading: f64) -> Self {
        Pose2::new(p.x, p.y, heading)
    }

    pub fn heading(&self) -> f64 {
        self.heading
    }

    pub fn set_heading(&mut self, heading: f64) {
        self.heading = normalize_angle(heading);
    }

    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    pub fn direction(&self) -> Vec2 {
        Vec2::from_angle(self.heading)
    }

    /// Maps a point given in this pose's local frame into the parent frame.
    pub fn transform_point(&self, local: Vec2) -> Vec2 {
        self.position() + local.rotate(self.heading)
    }

    /// Maps a point in the parent frame into this pose's local frame.
    pub fn inverse_transform_point(&self, world: Vec2) -> Vec2 {
        (world - self.position()).rotate(-self.heading)
    }

    /// Composes `self ∘ local`: `local` is expressed in this pose's frame.
    pub fn compose(&self, local: &Pose2) -> Pose2 {
        Pose2::from_position(
            self.transform_point(local.position()),
            self.heading + local.heading,
        )
    }

    /// Expresses `world` in this pose's frame.
    pub fn relative(&self, world: &Pose2) -> Pose2 {
        Pose2::from_position(
            self.inverse_transform_point(world.position()),
            world.heading - self.heading,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite()
    }
}

impl From<[f64; 3]> for Pose2 {
    fn from([x, y, h]: [f64; 3]) -> Self {
        Pose2::new(x, y, h)
    }
}

impl From<Pose2> for [f64; 3] {
    fn from(p: Pose2) -> Self {
        [p.x, p.y, p.heading]
    }
}

/// A rectangle centered on `pose` and aligned with its heading.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrientedBox {
    pub pose: Pose2,
    pub half_length: f64,
    pub half_width: f64,
}

impl OrientedBox {
    pub fn new(pose: Pose2, half_length: f64, half_width: f64) -> Self {
        debug_assert!(half_length > 0.0 && half_width > 0.0);
        OrientedBox {
            pose,
            half_length,
            half_width,
        }
    }

    /// Box from full length and width.
    pub fn from_dims(pose: Pose2, length: f64, width: f64) -> Self {
        OrientedBox::new(pose, 0.5 * length, 0.5 * width)
    }

    pub fn center(&self) -> Vec2 {
        self.pose.position()
    }

    /// Unit vectors along the box length and width.
    pub fn axes(&self) -> [Vec2; 2] {
        let u = self.pose.direction();
        [u, Vec2::new(-u.y, u.x)]
    }

    /// Corners in the order front-left, front-right, rear-right, rear-left.
    pub fn corners(&self) -> [Vec2; 4] {
        let (l, w) = (self.half_length, self.half_width);
        [
            self.pose.transform_point(Vec2::new(l, w)),
            self.pose.transform_point(Vec2::new(l, -w)),
            self.pose.transform_point(Vec2::new(-l, -w)),
            self.pose.transform_point(Vec2::new(-l, w)),
        ]
    }

    pub fn edges(&self) -> [(Vec2, Vec2); 4] {
        let c = self.corners();
        [(c[0], c[1]), (c[1], c[2]), (c[2], c[3]), (c[3], c[0])]
    }

    /// Grows both half extents by `margin`.
    pub fn inflated(&self, margin: f64) -> OrientedBox {
        OrientedBox::new(
            self.pose,
            self.half_length + margin,
            self.half_width + margin,
        )
    }

    /// Closed containment test.
    pub fn contains(&self, p: Vec2) -> bool {
        let local = self.pose.inverse_transform_point(p);
        local.x.abs() <= self.half_length && local.y.abs() <= self.half_width
    }

    fn projection_radius(&self, axis: Vec2) -> f64 {
        let [u, v] = self.axes();
        self.half_length * u.dot(axis).abs() + self.half_width * v.dot(axis).abs()
    }
}

/// Separating-axis test over the four edge normals. Touching boxes overlap.
pub fn obb_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    let d = b.center() - a.center();
    a.axes().into_iter().chain(b.axes()).all(|axis| {
        d.dot(axis).abs() <= a.projection_radius(axis) + b.projection_radius(axis)
    })
}

pub fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    let t = if len_sq > 0.0 {
        ((p - a).dot(ab) / len_sq).clamp(0.0, 1.0)
    } else {
        0.0
    };
    p.distance(a + ab * t)
}

/// Minimum distance between the boundaries of two boxes, 0 when they overlap.
pub fn min_distance(a: &OrientedBox, b: &OrientedBox) -> f64 {
    if obb_overlap(a, b) {
        return 0.0;
    }
    // Disjoint convex polygons: the closest pair always involves a vertex.
    let one_way = |p: &OrientedBox, q: &OrientedBox| {
        let edges = q.edges();
        p.corners()
            .into_iter()
            .flat_map(|c| edges.iter().map(move |&(e0, e1)| point_segment_distance(c, e0, e1)))
            .fold(f64::INFINITY, f64::min)
    };
    one_way(a, b).min(one_way(b, a))
}

/// Proper or touching intersection of two closed segments.
pub fn segments_intersect(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> bool {
    let d1 = (p1 - p0).cross(q0 - p0);
    let d2 = (p1 - p0).cross(q1 - p0);
    let d3 = (q1 - q0).cross(p0 - q0);
    let d4 = (q1 - q0).cross(p1 - q0);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    let on_segment = |a: Vec2, b: Vec2, p: Vec2| {
        p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
    };
    (d1 == 0.0 && on_segment(p0, p1, q0))
        || (d2 == 0.0 && on_segment(p0, p1, q1))
        || (d3 == 0.0 && on_segment(q0, q1, p0))
        || (d4 == 0.0 && on_segment(q0, q1, p1))
}

pub fn segment_intersects_box(a: Vec2, b: Vec2, bx: &OrientedBox) -> bool {
    bx.contains(a)
        || bx.contains(b)
        || bx
            .edges()
            .iter()
            .any(|&(e0, e1)| segments_intersect(a, b, e0, e1))
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Vec2, polygon: &[Vec2]) -> bool {
    let n = polygon.len();
    let mut inside = false;
    let mut j = n.wrapping_sub(1);
    for i in 0..n {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn distance_to_polygon(p: Vec2, polygon: &[Vec2]) -> f64 {
    if point_in_polygon(p, polygon) {
        return 0.0;
    }
    (0..polygon.len())
        .map(|i| point_segment_distance(p, polygon[i], polygon[(i + 1) % polygon.len()]))
        .fold(f64::INFINITY, f64::min)
}

/// The nine sampling points of a box: center, the four corners
/// (front-left, front-right, rear-right, rear-left) and the four edge
/// midpoints (front, right, rear, left).
pub fn ego_keypoints(b: &OrientedBox) -> [Vec2; 9] {
    let (l, w) = (b.half_length, b.half_width);
    [
        (0.0, 0.0),
        (l, w),
        (l, -w),
        (-l, -w),
        (-l, w),
        (l, 0.0),
        (0.0, -w),
        (-l, 0.0),
        (0.0, w),
    ]
    .map(|(x, y)| b.pose.transform_point(Vec2::new(x, y)))
}

/// Axis-aligned raster of probabilities, row-major with row 0 at the lowest y.
///
/// Cell `(col, row)` covers `[ox + col·res, ox + (col+1)·res] × [oy + row·res, oy + (row+1)·res]`
/// and its value is attached to the cell center.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbGrid {
    origin: Vec2,
    resolution: f64,
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl ProbGrid {
    pub fn new(
        origin: Vec2,
        resolution: f64,
        width: usize,
        height: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !origin.is_finite() {
            return Err(Error::invalid("grid.origin", "must be finite"));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::invalid("grid.resolution", "must be positive"));
        }
        if width < 2 || height < 2 {
            return Err(Error::invalid("grid.width/height", "need at least 2x2 cells"));
        }
        if values.len() != width * height {
            return Err(Error::LengthMismatch {
                what: "grid.values".into(),
                expected: width * height,
                actual: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(
                format!("grid.values[{i}]"),
                format!("{} is not a probability", values[i]),
            ));
        }
        Ok(ProbGrid {
            origin,
            resolution,
            width,
            height,
            values,
        })
    }

    /// Grid filled with a constant value.
    pub fn uniform(origin: Vec2, resolution: f64, width: usize, height: usize, value: f64) -> Result<Self> {
        ProbGrid::new(origin, resolution, width, height, vec![value; width * height])
    }

    /// Rasterizes `f` at every cell center.
    pub fn from_fn(
        origin: Vec2,
        resolution: f64,
        width: usize,
        height: usize,
        mut f: impl FnMut(Vec2) -> f64,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                values.push(f(Self::center_of(origin, resolution, col, row)));
            }
        }
        ProbGrid::new(origin, resolution, width, height, values)
    }

    fn center_of(origin: Vec2, res: f64, col: usize, row: usize) -> Vec2 {
        Vec2::new(
            origin.x + (col as f64 + 0.5) * res,
            origin.y + (row as f64 + 0.5) * res,
        )
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }
    pub fn resolution(&self) -> f64 {
        self.resolution
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn cell_center(&self, col: usize, row: usize) -> Vec2 {
        Self::center_of(self.origin, self.resolution, col, row)
    }

    /// True when `p` lies in the closed physical footprint of the grid.
    pub fn in_footprint(&self, p: Vec2) -> bool {
        let local = p - self.origin;
        local.x >= 0.0
            && local.y >= 0.0
            && local.x <= self.width as f64 * self.resolution
            && local.y <= self.height as f64 * self.resolution
    }

    /// Bilinear interpolation between the four surrounding cell centers.
    /// Points beyond the outer cell centers are clamped onto them first.
    pub fn bilinear_sample(&self, p: Vec2) -> f64 {
        let fx = ((p.x - self.origin.x) / self.resolution - 0.5).clamp(0.0, (self.width - 1) as f64);
        let fy = ((p.y - self.origin.y) / self.resolution - 0.5).clamp(0.0, (self.height - 1) as f64);
        let c0 = (fx.floor() as usize).min(self.width - 2);
        let r0 = (fy.floor() as usize).min(self.height - 2);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;
        let v00 = self.value(c0, r0);
        let v10 = self.value(c0 + 1, r0);
        let v01 = self.value(c0, r0 + 1);
        let v11 = self.value(c0 + 1, r0 + 1);
        let v = (1.0 - tx) * (1.0 - ty) * v00
            + tx * (1.0 - ty) * v10
            + (1.0 - tx) * ty * v01
            + tx * ty * v11;
        // keep round-off inside the convex hull of the corner values
        let lo = v00.min(v10).min(v01).min(v11);
        let hi = v00.max(v10).max(v01).max(v11);
        v.clamp(lo, hi)
    }

    /// Drivable probability at `p`: bilinear inside the footprint, 0 outside it.
    pub fn sample_or_zero(&self, p: Vec2) -> f64 {
        if self.in_footprint(p) {
            self.bilinear_sample(p)
        } else {
            0.0
        }
    }

    /// Text form: a `probgrid 1` tag line, a header line
    /// `origin_x origin_y resolution width height`, then one line per row.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("probgrid 1\n");
        let _ = writeln!(
            out,
            "{} {} {} {} {}",
            self.origin.x, self.origin.y, self.resolution, self.width, self.height
        );
        for row in self.values.chunks(self.width) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let tag = lines.next().ok_or_else(|| Error::parse("probgrid", "empty input"))?;
        if tag.trim() != "probgrid 1" {
            return Err(Error::parse("probgrid", format!("unsupported header {tag:?}")));
        }
        let header: Vec<&str> = lines
            .next()
            .ok_or_else(|| Error::parse("probgrid", "missing header line"))?
            .split_whitespace()
            .collect();
        if header.len() != 5 {
            return Err(Error::parse("probgrid header", "expected 5 fields"));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>().map_err(|e| Error::parse(format!("probgrid {what}"), e))
        };
        let count = |s: &str, what: &str| -> Result<usize> {
            s.parse::<usize>().map_err(|e| Error::parse(format!("probgrid {what}"), e))
        };
        let origin = Vec2::new(num(header[0], "origin_x")?, num(header[1], "origin_y")?);
        let resolution = num(header[2], "resolution")?;
        let width = count(header[3], "width")?;
        let height = count(header[4], "height")?;
        let mut values = Vec::with_capacity(width.saturating_mul(height));
        for (row, line) in lines.enumerate() {
            for tok in line.split_whitespace() {
                values.push(num(tok, &format!("row {row}"))?);
            }
        }
        ProbGrid::new(origin, resolution, width, height, values)
    }
}

/// Result of projecting a point onto a polyline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    /// Arc length from the first point to the foot point.
    pub s: f64,
    /// Unsigned distance to the polyline.
    pub distance: f64,
    /// Signed lateral offset, positive to the left of the travel direction.
    pub lateral: f64,
    /// Unit tangent of the segment holding the foot point.
    pub tangent: Vec2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct Polyline {
    points: Vec<Vec2>,
    cumulative: Vec<f64>,
}

impl Polyline {
    pub const MIN_SEPARATION: f64 = 1e-9;

    pub fn new(points: Vec<Vec2>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("polyline", "needs at least 2 points"));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(format!("polyline[{i}]"), "non-finite point"));
        }
        let mut cumulative = Vec::with_capacity(points.len());
        cumulative.push(0.0);
        for (i, w) in points.windows(2).enumerate() {
            let d = w[0].distance(w[1]);
            if d <= Self::MIN_SEPARATION {
                return Err(Error::invalid(
                    format!("polyline[{}]", i + 1),
                    "repeats the previous point",
                ));
            }
            cumulative.push(cumulative[i] + d);
        }
        Ok(Polyline { points, cumulative })
    }

    pub fn points(&self) -> &[Vec2] {
        &self.points
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }

    pub fn project(&self, p: Vec2) -> Projection {
        let mut best = Projection {
            s: 0.0,
            distance: f64::INFINITY,
            lateral: 0.0,
            tangent: Vec2::new(1.0, 0.0),
        };
        for (i, w) in self.points.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let ab = b - a;
            let len = self.cumulative[i + 1] - self.cumulative[i];
            let t = ((p - a).dot(ab) / ab.norm_sq()).clamp(0.0, 1.0);
            let foot = a + ab * t;
            let d = p.distance(foot);
            if d < best.distance {
                let tangent = ab * (1.0 / ab.norm());
                best = Projection {
                    s: self.cumulative[i] + t * len,
                    distance: d,
                    lateral: tangent.cross(p - foot),
                    tangent,
                };
            }
        }
        best
    }

    /// Point at arc length `s`, clamped to the ends.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let total = *self.cumulative.last().unwrap();
        let s = s.clamp(0.0, total);
        let i = match self.cumulative.binary_search_by(|c| c.total_cmp(&s)) {
            Ok(i) => return self.points[i],
            Err(i) => i.max(1) - 1,
        };
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        self.points[i].lerp(self.points[i + 1], (s - self.cumulative[i]) / seg)
    }
}

impl TryFrom<Vec<Vec2>> for Polyline {
    type Error = Error;
    fn try_from(points: Vec<Vec2>) -> Result<Self> {
        Polyline::new(points)
    }
}

impl From<Polyline> for Vec<Vec2> {
    fn from(p: Polyline) -> Self {
        p.points
    }
}

pub fn arc_length(p: &Polyline) -> f64 {
    p.arc_length()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn unit_box(x: f64, y: f64, heading: f64) -> OrientedBox {
        OrientedBox::new(Pose2::new(x, y, heading), 0.5, 0.5)
    }

    #[test]
    fn heading_normalization() {
        assert_eq!(normalize_angle(PI), PI);
        assert_eq!(normalize_angle(-PI), PI);
        assert_abs_diff_eq!(normalize_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(Pose2::new(0.0, 0.0, 7.0).heading(), 7.0 - TAU, epsilon = 1e-12);
    }

    #[test]
    fn overlap_basic_cases() {
        let a = OrientedBox::from_dims(Pose2::new(0.0, 0.0, 0.0), 4.0, 2.0);
        assert!(obb_overlap(&a, &a));
        let b = OrientedBox::from_dims(Pose2::new(10.0, 0.0, 0.0), 4.0, 2.0);
        assert!(!obb_overlap(&a, &b));
        // face contact counts as overlap
        let c = OrientedBox::from_dims(Pose2::new(4.0, 0.0, 0.0), 4.0, 2.0);
        assert!(obb_overlap(&a, &c));
    }

    #[test]
    fn rotated_boxes_separated_only_on_diagonal_axis() {
        // AABB test would report overlap, but the rotated box's own axis separates them.
        let a = unit_box(0.0, 0.0, 0.0);
        let b = unit_box(1.15, 1.15, PI / 4.0);
        assert!(!obb_overlap(&a, &b));
        assert!(min_distance(&a, &b) > 0.0);
    }

    #[test]
    fn min_distance_examples() {
        assert_eq!(min_distance(&unit_box(0.0, 0.0, 0.0), &unit_box(0.3, 0.0, 1.0)), 0.0);
        assert_abs_diff_eq!(
            min_distance(&unit_box(0.0, 0.0, 0.0), &unit_box(3.0, 0.0, 0.0)),
            2.0,
            epsilon = 1e-12
        );
        // corner-to-face
        let d = min_distance(&unit_box(0.0, 0.0, 0.0), &unit_box(3.0, 0.0, PI / 4.0));
        assert_abs_diff_eq!(d, 3.0 - 0.5 - 0.5 * 2f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn bilinear_examples() {
        let g = ProbGrid::new(Vec2::ZERO, 1.0, 2, 2, vec![0.0, 0.0, 1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(g.bilinear_sample(Vec2::new(1.0, 1.0)), 0.5, epsilon = 1e-15);
        assert_eq!(g.bilinear_sample(g.cell_center(1, 1)), 1.0);
        assert_eq!(g.bilinear_sample(g.cell_center(0, 0)), 0.0);
        // between the footprint edge and the outer centers: clamped
        assert_eq!(g.sample_or_zero(Vec2::new(0.1, 1.9)), 1.0);
        // outside the footprint: not drivable
        assert_eq!(g.sample_or_zero(Vec2::new(-0.1, 1.5)), 0.0);
        assert_eq!(g.sample_or_zero(Vec2::new(2.0, 2.0)), 1.0);
    }

    #[test]
    fn grid_validation() {
        assert!(ProbGrid::new(Vec2::ZERO, 1.0, 1, 2, vec![0.0; 2]).is_err());
        assert!(ProbGrid::new(Vec2::ZERO, 0.0, 2, 2, vec![0.0; 4]).is_err());
        assert!(ProbGrid::new(Vec2::ZERO, 1.0, 2, 2, vec![0.0; 3]).is_err());
        assert!(ProbGrid::new(Vec2::ZERO, 1.0, 2, 2, vec![0.0, 0.0, 1.5, 0.0]).is_err());
    }

    #[test]
    fn grid_text_round_trip() {
        let g = ProbGrid::from_fn(Vec2::new(-3.25, 1.5), 0.25, 5, 3, |p| (p.x.sin() * p.y.cos()).abs()).unwrap();
        let text = g.to_text();
        let back = ProbGrid::from_text(&text).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.to_text(), text);
        assert!(ProbGrid::from_text("probgrid 2\n").is_err());
    }

    #[test]
    fn keypoints_axis_aligned_unit_box() {
        let k = ego_keypoints(&unit_box(0.0, 0.0, 0.0));
        let expected = [
            (0.0, 0.0),
            (0.5, 0.5),
            (0.5, -0.5),
            (-0.5, -0.5),
            (-0.5, 0.5),
            (0.5, 0.0),
            (0.0, -0.5),
            (-0.5, 0.0),
            (0.0, 0.5),
        ];
        for (p, (x, y)) in k.iter().zip(expected) {
            assert_abs_diff_eq!(p.x, x, epsilon = 1e-15);
            assert_abs_diff_eq!(p.y, y, epsilon = 1e-15);
        }
    }

    #[test]
    fn keypoints_quarter_turn_match_rotation_matrix() {
        let b = OrientedBox::new(Pose2::new(2.0, -1.0, PI / 2.0), 2.0, 1.0);
        let base = ego_keypoints(&OrientedBox::new(Pose2::new(0.0, 0.0, 0.0), 2.0, 1.0));
        for (p, q) in ego_keypoints(&b).iter().zip(base) {
            // [0 -1; 1 0] applied by hand
            assert_abs_diff_eq!(p.x, 2.0 - q.y, epsilon = 1e-12);
            assert_abs_diff_eq!(p.y, -1.0 + q.x, epsilon = 1e-12);
        }
    }

    #[test]
    fn polyline_lengths_and_projection() {
        let p = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(3.0, 4.0)]).unwrap();
        assert_eq!(arc_length(&p), 5.0);
        let q = Polyline::new(vec![Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), Vec2::new(1.0, 1.0)]).unwrap();
        assert_eq!(q.arc_length(), 2.0);
        let proj = q.project(Vec2::new(0.5, 0.2));
        assert_abs_diff_eq!(proj.s, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.lateral, 0.2, epsilon = 1e-12);
        let proj = q.project(Vec2::new(1.3, 0.6));
        assert_abs_diff_eq!(proj.s, 1.6, epsilon = 1e-12);
        assert_abs_diff_eq!(proj.lateral, -0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(q.point_at(1.5).y, 0.5, epsilon = 1e-12);
        assert!(Polyline::new(vec![Vec2::ZERO]).is_err());
        assert!(Polyline::new(vec![Vec2::ZERO, Vec2::new(0.0, 1e-12)]).is_err());
    }

    #[test]
    fn segment_and_polygon_helpers() {
        let b = OrientedBox::from_dims(Pose2::new(0.0, 0.0, 0.0), 4.0, 2.0);
        assert!(segment_intersects_box(Vec2::new(1.0, -5.0), Vec2::new(1.0, 5.0), &b));
        assert!(!segment_intersects_box(Vec2::new(3.0, -5.0), Vec2::new(3.0, 5.0), &b));
        let square = [Vec2::new(0.0, 0.0), Vec2::new(2.0, 0.0), Vec2::new(2.0, 2.0), Vec2::new(0.0, 2.0)];
        assert!(point_in_polygon(Vec2::new(1.0, 1.0), &square));
        assert!(!point_in_polygon(Vec2::new(3.0, 1.0), &square));
        assert_abs_diff_eq!(distance_to_polygon(Vec2::new(3.0, 1.0), &square), 1.0, epsilon = 1e-12);
    }

    fn arb_box() -> impl Strategy<Value = OrientedBox> {
        (-5.0..5.0f64, -5.0..5.0f64, -PI..PI, 0.1..3.0f64, 0.1..3.0f64)
            .prop_map(|(x, y, h, l, w)| OrientedBox::new(Pose2::new(x, y, h), l, w))
    }

    proptest! {
        #[test]
        fn overlap_is_symmetric(a in arb_box(), b in arb_box()) {
            prop_assert_eq!(obb_overlap(&a, &b), obb_overlap(&b, &a));
        }

        #[test]
        fn distance_zero_iff_overlap(a in arb_box(), b in arb_box()) {
            let d = min_distance(&a, &b);
            prop_assert!(d >= 0.0);
            prop_assert_eq!(d == 0.0, obb_overlap(&a, &b));
            prop_assert!((d - min_distance(&b, &a)).abs() < 1e-12);
        }

        #[test]
        fn overlap_invariant_under_rigid_motion(
            a in arb_box(), b in arb_box(),
            tx in -50.0..50.0f64, ty in -50.0..50.0f64, rot in -PI..PI,
        ) {
            // skip pairs within 1e-9 m of touching
            let robust_gap = min_distance(&a, &b) > 1e-9;
            let robust_hit = obb_overlap(&a.inflated(-1e-9), &b.inflated(-1e-9));
            prop_assume!(robust_gap || robust_hit);
            let motion = Pose2::new(tx, ty, rot);
            let move_box = |bx: &OrientedBox| OrientedBox::new(motion.compose(&bx.pose), bx.half_length, bx.half_width);
            prop_assert_eq!(obb_overlap(&move_box(&a), &move_box(&b)), obb_overlap(&a, &b));
        }

        #[test]
        fn bilinear_stays_within_value_range(
            w in 2usize..6, h in 2usize..6, seed in any::<u64>(),
            fx in -0.5..1.5f64, fy in -0.5..1.5f64,
        ) {
            let mut s = seed;
            let g = ProbGrid::from_fn(Vec2::new(1.0, -2.0), 0.5, w, h, |_| {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (s >> 11) as f64 / (1u64 << 53) as f64
            }).unwrap();
            let p = Vec2::new(1.0 + fx * 0.5 * w as f64, -2.0 + fy * 0.5 * h as f64);
            let v = g.bilinear_sample(p);
            let lo = g.values().iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = g.values().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(v >= lo && v <= hi);
        }

        #[test]
        fn keypoint_corners_at_half_diagonal(b in arb_box()) {
            let k = ego_keypoints(&b);
            let r = b.half_length.hypot(b.half_width);
            for c in &k[1..5] {
                prop_assert!((c.distance(b.center()) - r).abs() < 1e-12);
            }
            let centroid = k.iter().fold(Vec2::ZERO, |acc, p| acc + *p) * (1.0 / 9.0);
            prop_assert!(centroid.distance(b.center()) < 1e-12);
        }
    }
}
