//! Planar geometry in the registered micrometre frame.

use serde::{Deserialize, Serialize};

/// A point in micrometres.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn translate(self, dx: f64, dy: f64) -> Point {
        Point::new(self.x + dx, self.y + dy)
    }

    fn sub(self, o: Point) -> (f64, f64) {
        (self.x - o.x, self.y - o.y)
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point::new(x, y)
    }
}

/// Angle at `vertex` between the rays towards `a` and `b`, in degrees in `[0, 180]`.
///
/// Returns `None` when either ray has zero length.
pub fn angle_deg(a: Point, vertex: Point, b: Point) -> Option<f64> {
    let (ax, ay) = a.sub(vertex);
    let (bx, by) = b.sub(vertex);
    if (ax == 0.0 && ay == 0.0) || (bx == 0.0 && by == 0.0) {
        return None;
    }
    // atan2 of cross/dot is accurate at both 0 and 180 degrees.
    let cross = ax * by - ay * bx;
    let dot = ax * bx + ay * by;
    Some(cross.abs().atan2(dot).to_degrees())
}

/// Axis-aligned square window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub center: Point,
    pub size: f64,
}

impl Window {
    pub fn new(center: Point, size: f64) -> Self {
        Window { center, size }
    }

    pub fn contains(&self, p: Point) -> bool {
        let h = self.size / 2.0;
        (p.x - self.center.x).abs() <= h && (p.y - self.center.y).abs() <= h
    }

    pub fn area(&self) -> f64 {
        self.size * self.size
    }

    pub fn min(&self) -> Point {
        self.center.translate(-self.size / 2.0, -self.size / 2.0)
    }

    pub fn max(&self) -> Point {
        self.center.translate(self.size / 2.0, self.size / 2.0)
    }
}

/// Closed polygon given by its vertices; the closing edge is implicit.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Point>,
}

impl Polygon {
    pub fn new(vertices: Vec<Point>) -> Self {
        Polygon { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn on_boundary(&self, p: Point) -> bool {
        self.edges().any(|(a, b)| on_segment(p, a, b))
    }

    /// Even-odd test; points on the boundary are not inside.
    pub fn contains_strict(&self, p: Point) -> bool {
        if self.vertices.len() < 3 || self.on_boundary(p) {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Euclidean distance from `p` to the nearest point of the boundary.
    pub fn boundary_distance(&self, p: Point) -> f64 {
        self.edges().map(|(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// True when no two non-adjacent edges intersect and no edge is degenerate.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let edges: Vec<_> = self.edges().collect();
        if edges.iter().any(|(a, b)| a == b) {
            return false;
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                let (a, b) = edges[i];
                let (c, d) = edges[j];
                if adjacent {
                    // Adjacent edges may only share their common vertex.
                    let (other_i, other_j) = if j == i + 1 { (a, d) } else { (b, c) };
                    if on_segment(other_j, a, b) || on_segment(other_i, c, d) {
                        return false;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    /// Area of the intersection with an axis-aligned window.
    pub fn intersection_area(&self, window: &Window) -> f64 {
        signed_area(&clip_to_rect(&self.vertices, window.min(), window.max())).abs()
    }
}

fn signed_area(v: &[Point]) -> f64 {
    let n = v.len();
    if n < 3 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..n {
        let a = v[i];
        let b = v[(i + 1) % n];
        s += a.x * b.y - b.x * a.y;
    }
    s / 2.0
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    cross(a, b, p) == 0.0 && p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let (abx, aby) = b.sub(a);
    let len2 = abx * abx + aby * aby;
    if len2 == 0.0 {
        return p.distance(a);
    }
    let (apx, apy) = p.sub(a);
    let t = ((apx * abx + apy * aby) / len2).clamp(0.0, 1.0);
    p.distance(Point::new(a.x + t * abx, a.y + t * aby))
}

/// Sutherland-Hodgman clipping against a convex rectangle. The subject may be
/// concave; the result can contain zero-width bridges but its area is exact.
fn clip_to_rect(subject: &[Point], lo: Point, hi: Point) -> Vec<Point> {
    #[derive(Clone, Copy)]
    enum Side {
        Left,
        Right,
        Bottom,
        Top,
    }
    let inside = |p: Point, s: Side| match s {
        Side::Left => p.x >= lo.x,
        Side::Right => p.x <= hi.x,
        Side::Bottom => p.y >= lo.y,
        Side::Top => p.y <= hi.y,
    };
    let intersect = |a: Point, b: Point, s: Side| -> Point {
        match s {
            Side::Left | Side::Right => {
                let x = if matches!(s, Side::Left) { lo.x } else { hi.x };
                let t = (x - a.x) / (b.x - a.x);
                Point::new(x, a.y + t * (b.y - a.y))
            }
            Side::Bottom | Side::Top => {
                let y = if matches!(s, Side::Bottom) { lo.y } else { hi.y };
                let t = (y - a.y) / (b.y - a.y);
                Point::new(a.x + t * (b.x - a.x), y)
            }
        }
    };

    let mut output = subject.to_vec();
    for side in [Side::Left, Side::Right, Side::Bottom, Side::Top] {
        if output.is_empty() {
            break;
        }
        let input = std::mem::take(&mut output);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            match (inside(prev, side), inside(cur, side)) {
                (true, true) => output.push(cur),
                (true, false) => output.push(intersect(prev, cur, side)),
                (false, true) => {
                    output.push(intersect(prev, cur, side));
                    output.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    output
}
