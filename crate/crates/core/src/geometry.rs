//! Planar primitives shared by every layer of the model.

use core::fmt;
use core::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::math;

/// Tolerance used by the orientation and boundary predicates.
pub const EPSILON: f64 = 1e-9;

/// Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(from = "[f64; 2]", into = "[f64; 2]"))]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Unit vector at `angle` radians counterclockwise from +x.
    pub fn from_angle(angle: f64) -> Self {
        Self::new(math::cos(angle), math::sin(angle))
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm_squared(self) -> f64 {
        self.dot(self)
    }

    pub fn norm(self) -> f64 {
        math::sqrt(self.norm_squared())
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Unit vector in the same direction, or `None` for the zero vector.
    pub fn normalize(self) -> Option<Vec2> {
        let n = self.norm();
        if n > 0.0 && n.is_finite() {
            Some(self / n)
        } else {
            None
        }
    }

    pub fn normalize_or_zero(self) -> Vec2 {
        self.normalize().unwrap_or(Vec2::ZERO)
    }

    /// Counterclockwise perpendicular.
    pub fn perp(self) -> Vec2 {
        Vec2::new(-self.y, self.x)
    }

    pub fn rotate(self, angle: f64) -> Vec2 {
        let (s, c) = (math::sin(angle), math::cos(angle));
        Vec2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    /// Angle of the vector in (-π, π].
    pub fn angle(self) -> f64 {
        math::atan2(self.y, self.x)
    }

    /// Signed angle from `self` to `other` in (-π, π].
    pub fn angle_to(self, other: Vec2) -> f64 {
        math::atan2(self.cross(other), self.dot(other))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Clamp the length to at most `max`.
    pub fn clamp_norm(self, max: f64) -> Vec2 {
        let n = self.norm();
        if n > max && n > 0.0 {
            self * (max / n)
        } else {
            self
        }
    }

    pub fn lerp(self, other: Vec2, t: f64) -> Vec2 {
        self + (other - self) * t
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

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
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

impl SubAssign for Vec2 {
    fn sub_assign(&mut self, o: Vec2) {
        self.x -= o.x;
        self.y -= o.y;
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, s: f64) -> Vec2 {
        Vec2::new(self.x * s, self.y * s)
    }
}

impl Mul<Vec2> for f64 {
    type Output = Vec2;
    fn mul(self, v: Vec2) -> Vec2 {
        v * self
    }
}

impl Div<f64> for Vec2 {
    type Output = Vec2;
    fn div(self, s: f64) -> Vec2 {
        Vec2::new(self.x / s, self.y / s)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl core::iter::Sum for Vec2 {
    fn sum<I: Iterator<Item = Vec2>>(iter: I) -> Vec2 {
        iter.fold(Vec2::ZERO, Add::add)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GeometryError {
    /// Heading vector has zero length, so the orientation is undefined.
    ZeroHeading,
    DegenerateSegment,
    InvalidFieldOfView { half_angle: f64, range: f64 },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::ZeroHeading => f.write_str("observer heading is the zero vector"),
            GeometryError::DegenerateSegment => f.write_str("segment endpoints coincide"),
            GeometryError::InvalidFieldOfView { half_angle, range } => write!(
                f,
                "field of view needs 0 < half_angle <= pi and range > 0 (got {half_angle}, {range})"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for GeometryError {}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self, GeometryError> {
        if a == b {
            return Err(GeometryError::DegenerateSegment);
        }
        Ok(Self { a, b })
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    pub fn closest_point(&self, p: Vec2) -> Vec2 {
        closest_point_on_segment(self.a, self.b, p)
    }
}

/// Observation cone of a road user.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FieldOfView {
    /// Half opening angle in radians.
    pub half_angle: f64,
    /// Meters.
    pub range: f64,
}

impl FieldOfView {
    pub fn new(half_angle: f64, range: f64) -> Result<Self, GeometryError> {
        let fov = Self { half_angle, range };
        fov.validate()?;
        Ok(fov)
    }

    pub fn from_degrees(half_angle_deg: f64, range: f64) -> Result<Self, GeometryError> {
        Self::new(half_angle_deg.to_radians(), range)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.half_angle > 0.0
            && self.half_angle <= core::f64::consts::PI
            && self.range > 0.0
            && self.range.is_finite();
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidFieldOfView {
                half_angle: self.half_angle,
                range: self.range,
            })
        }
    }

    pub fn pedestrian_default() -> Self {
        Self {
            half_angle: 85f64.to_radians(),
            range: 10.0,
        }
    }

    pub fn vehicle_default() -> Self {
        Self {
            half_angle: 60f64.to_radians(),
            range: 20.0,
        }
    }
}

/// True iff `target` is within range and within ±half_angle of the heading.
/// Both bounds are closed.
pub fn in_field_of_view(
    observer_pos: Vec2,
    observer_heading: Vec2,
    fov: FieldOfView,
    target: Vec2,
) -> Result<bool, GeometryError> {
    if observer_heading.norm_squared() == 0.0 {
        return Err(GeometryError::ZeroHeading);
    }
    let offset = target - observer_pos;
    let dist = offset.norm();
    if dist > fov.range * (1.0 + EPSILON) {
        return Ok(false);
    }
    if dist == 0.0 {
        return Ok(true);
    }
    let angle = observer_heading.angle_to(offset).abs();
    Ok(angle <= fov.half_angle + EPSILON)
}

/// Orientation of the triple (a, b, c): +1 counterclockwise, -1 clockwise,
/// 0 collinear within tolerance.
pub fn orientation(a: Vec2, b: Vec2, c: Vec2) -> i8 {
    let ab = b - a;
    let ac = c - a;
    let cross = ab.cross(ac);
    let scale = ab.norm() * ac.norm();
    if cross.abs() <= EPSILON * scale.max(EPSILON) {
        0
    } else if cross > 0.0 {
        1
    } else {
        -1
    }
}

// c is collinear with (a, b); is it inside their bounding box?
fn on_segment(a: Vec2, b: Vec2, c: Vec2) -> bool {
    c.x <= a.x.max(b.x) + EPSILON
        && c.x >= a.x.min(b.x) - EPSILON
        && c.y <= a.y.max(b.y) + EPSILON
        && c.y >= a.y.min(b.y) - EPSILON
}

/// True iff the closed segments share at least one point. Collinear overlap
/// counts as an intersection.
pub fn segments_intersect(s1: Segment, s2: Segment) -> bool {
    let (p1, q1, p2, q2) = (s1.a, s1.b, s2.a, s2.b);
    let o1 = orientation(p1, q1, p2);
    let o2 = orientation(p1, q1, q2);
    let o3 = orientation(p2, q2, p1);
    let o4 = orientation(p2, q2, q1);

    if o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0 {
        return true;
    }
    (o1 == 0 && on_segment(p1, q1, p2))
        || (o2 == 0 && on_segment(p1, q1, q2))
        || (o3 == 0 && on_segment(p2, q2, p1))
        || (o4 == 0 && on_segment(p2, q2, q1))
}

/// True iff the segments cross at a single point interior to both.
pub fn segments_cross_properly(s1: Segment, s2: Segment) -> bool {
    let o1 = orientation(s1.a, s1.b, s2.a);
    let o2 = orientation(s1.a, s1.b, s2.b);
    let o3 = orientation(s2.a, s2.b, s1.a);
    let o4 = orientation(s2.a, s2.b, s1.b);
    o1 * o2 < 0 && o3 * o4 < 0
}

/// Intersection point of the infinite lines through the two segments, if
/// they are not parallel, along with the parameters along each segment.
pub fn line_intersection(s1: Segment, s2: Segment) -> Option<(Vec2, f64, f64)> {
    let r = s1.b - s1.a;
    let s = s2.b - s2.a;
    let denom = r.cross(s);
    if denom.abs() <= EPSILON * r.norm() * s.norm() {
        return None;
    }
    let qp = s2.a - s1.a;
    let t = qp.cross(s) / denom;
    let u = qp.cross(r) / denom;
    Some((s1.a + r * t, t, u))
}

pub fn closest_point_on_segment(a: Vec2, b: Vec2, p: Vec2) -> Vec2 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return a;
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    a + ab * t
}

/// Twice the signed area; positive for counterclockwise vertex order.
pub fn signed_area2(vertices: &[Vec2]) -> f64 {
    let n = vertices.len();
    (0..n)
        .map(|i| vertices[i].cross(vertices[(i + 1) % n]))
        .sum()
}

/// True iff `p` lies on the polygon outline (within tolerance).
pub fn on_polygon_boundary(vertices: &[Vec2], p: Vec2) -> bool {
    let n = vertices.len();
    (0..n).any(|i| {
        let a = vertices[i];
        let b = vertices[(i + 1) % n];
        closest_point_on_segment(a, b, p).distance(p) <= EPSILON * (1.0 + a.distance(b))
    })
}

/// Strict interior test: points on the outline are not inside.
pub fn point_in_polygon(vertices: &[Vec2], p: Vec2) -> bool {
    if on_polygon_boundary(vertices, p) {
        return false;
    }
    let n = vertices.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (vi, vj) = (vertices[i], vertices[j]);
        if (vi.y > p.y) != (vj.y > p.y) {
            let x = vj.x + (p.y - vj.y) * (vi.x - vj.x) / (vi.y - vj.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Closest point of the polygon outline to `p`.
pub fn closest_point_on_polygon(vertices: &[Vec2], p: Vec2) -> Vec2 {
    let n = vertices.len();
    let mut best = vertices[0];
    let mut best_d = f64::INFINITY;
    for i in 0..n {
        let c = closest_point_on_segment(vertices[i], vertices[(i + 1) % n], p);
        let d = c.distance(p);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use core::f64::consts::PI;
    use proptest::prelude::*;

    fn seg(ax: f64, ay: f64, bx: f64, by: f64) -> Segment {
        Segment::new(Vec2::new(ax, ay), Vec2::new(bx, by)).unwrap()
    }

    #[test]
    fn fov_ahead_and_behind() {
        let fov = FieldOfView::from_degrees(85.0, 10.0).unwrap();
        let heading = Vec2::new(1.0, 0.0);
        assert!(in_field_of_view(Vec2::ZERO, heading, fov, Vec2::new(1.0, 0.0)).unwrap());
        assert!(!in_field_of_view(Vec2::ZERO, heading, fov, Vec2::new(-1.0, 0.0)).unwrap());
    }

    #[test]
    fn fov_boundary_is_closed() {
        let fov = FieldOfView::from_degrees(85.0, 10.0).unwrap();
        let heading = Vec2::new(0.3, -0.7);
        let pos = Vec2::new(2.0, 5.0);
        let dir = heading.normalize().unwrap().rotate(fov.half_angle);
        let target = pos + dir * fov.range;
        assert!(in_field_of_view(pos, heading, fov, target).unwrap());
        // Just outside either bound.
        let beyond = pos + dir * (fov.range + 1e-3);
        assert!(!in_field_of_view(pos, heading, fov, beyond).unwrap());
        let wider = pos + heading.normalize().unwrap().rotate(fov.half_angle + 1e-3) * 5.0;
        assert!(!in_field_of_view(pos, heading, fov, wider).unwrap());
    }

    #[test]
    fn fov_zero_heading_is_error() {
        let fov = FieldOfView::pedestrian_default();
        assert_eq!(
            in_field_of_view(Vec2::ZERO, Vec2::ZERO, fov, Vec2::new(1.0, 0.0)),
            Err(GeometryError::ZeroHeading)
        );
    }

    #[test]
    fn fov_rejects_bad_parameters() {
        assert!(FieldOfView::new(0.0, 1.0).is_err());
        assert!(FieldOfView::new(PI + 0.1, 1.0).is_err());
        assert!(FieldOfView::new(1.0, 0.0).is_err());
        assert!(FieldOfView::new(PI, 1.0).is_ok());
    }

    #[test]
    fn segment_cases() {
        assert!(segments_intersect(seg(0.0, 0.0, 2.0, 0.0), seg(1.0, -1.0, 1.0, 1.0)));
        assert!(!segments_intersect(seg(0.0, 0.0, 1.0, 0.0), seg(0.0, 1.0, 1.0, 1.0)));
        assert!(segments_intersect(seg(0.0, 0.0, 2.0, 0.0), seg(1.0, 0.0, 3.0, 0.0)));
        // collinear but disjoint
        assert!(!segments_intersect(seg(0.0, 0.0, 1.0, 0.0), seg(2.0, 0.0, 3.0, 0.0)));
        // touching at an endpoint
        assert!(segments_intersect(seg(0.0, 0.0, 1.0, 1.0), seg(1.0, 1.0, 2.0, 0.0)));
        assert!(!segments_cross_properly(seg(0.0, 0.0, 1.0, 1.0), seg(1.0, 1.0, 2.0, 0.0)));
    }

    #[test]
    fn degenerate_segment_rejected() {
        assert_eq!(
            Segment::new(Vec2::new(1.0, 1.0), Vec2::new(1.0, 1.0)),
            Err(GeometryError::DegenerateSegment)
        );
    }

    #[test]
    fn polygon_predicates() {
        let square = [
            Vec2::new(0.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
        ];
        assert!(signed_area2(&square) > 0.0);
        assert!(point_in_polygon(&square, Vec2::new(1.0, 1.0)));
        assert!(!point_in_polygon(&square, Vec2::new(2.0, 1.0)));
        assert!(!point_in_polygon(&square, Vec2::new(3.0, 1.0)));
        assert_eq!(
            closest_point_on_polygon(&square, Vec2::new(3.0, 1.0)),
            Vec2::new(2.0, 1.0)
        );
    }

    fn coord() -> impl Strategy<Value = f64> {
        (-20i32..20).prop_map(|v| v as f64 * 0.5)
    }

    proptest! {
        #[test]
        fn fov_rigid_motion_invariant(
            tx in -10.0f64..10.0, ty in -10.0f64..10.0,
            hx in -1.0f64..1.0, hy in -1.0f64..1.0,
            dx in -12.0f64..12.0, dy in -12.0f64..12.0,
            rot in -PI..PI, sx in -50.0f64..50.0, sy in -50.0f64..50.0,
        ) {
            let heading = Vec2::new(hx, hy);
            prop_assume!(heading.norm() > 1e-3);
            let fov = FieldOfView::from_degrees(85.0, 10.0).unwrap();
            let pos = Vec2::new(tx, ty);
            let target = pos + Vec2::new(dx, dy);
            // keep away from the boundaries where rounding could flip the result
            let off = target - pos;
            prop_assume!((off.norm() - fov.range).abs() > 1e-6);
            prop_assume!((heading.angle_to(off).abs() - fov.half_angle).abs() > 1e-6);
            let before = in_field_of_view(pos, heading, fov, target).unwrap();
            let shift = Vec2::new(sx, sy);
            let after = in_field_of_view(
                pos.rotate(rot) + shift,
                heading.rotate(rot),
                fov,
                target.rotate(rot) + shift,
            ).unwrap();
            prop_assert_eq!(before, after);
        }

        #[test]
        fn segment_intersection_symmetric(
            a in (coord(), coord()), b in (coord(), coord()),
            c in (coord(), coord()), d in (coord(), coord()),
        ) {
            let (a, b, c, d) = (Vec2::new(a.0, a.1), Vec2::new(b.0, b.1), Vec2::new(c.0, c.1), Vec2::new(d.0, d.1));
            prop_assume!(a != b && c != d);
            let s1 = Segment::new(a, b).unwrap();
            let s2 = Segment::new(c, d).unwrap();
            let r = segments_intersect(s1, s2);
            prop_assert_eq!(r, segments_intersect(s2, s1));
            prop_assert_eq!(r, segments_intersect(Segment::new(b, a).unwrap(), s2));
            prop_assert_eq!(r, segments_intersect(s1, Segment::new(d, c).unwrap()));
        }
    }
}
