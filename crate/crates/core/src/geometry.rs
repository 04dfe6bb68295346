//! Spatial calculus over axis-aligned bounding boxes, points, skeletal
//! segments and polygonal regions.
//!
//! Pixel space with the origin at the top-left corner, x growing rightward
//! and y growing downward. A box `(x, y, w, h)` denotes the closed set
//! `[x, x + w] × [y, y + h]`; its interior is the open rectangle.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid bounding box ({x}, {y}, {w}, {h}): width and height must be positive and all coordinates finite")]
    InvalidBox { x: f64, y: f64, w: f64, h: f64 },
    #[error("direction is undefined for boxes with coincident centroids")]
    CoincidentCentroids,
    #[error("segment has zero length")]
    ZeroLengthSegment,
    #[error("invalid region: {0}")]
    InvalidRegion(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn scaled(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Self { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

/// Axis-aligned detector box, top-left corner plus size.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let finite = self.x.is_finite() && self.y.is_finite() && self.w.is_finite() && self.h.is_finite();
        if finite && self.w > 0.0 && self.h > 0.0 {
            Ok(())
        } else {
            Err(GeometryError::InvalidBox { x: self.x, y: self.y, w: self.w, h: self.h })
        }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    pub fn centroid(&self) -> Point {
        Point::new(self.x + self.w / 2.0, self.y + self.h / 2.0)
    }

    /// Width over height.
    pub fn aspect_ratio(&self) -> f64 {
        self.w / self.h
    }

    pub fn intersection_area(&self, other: &BoundingBox) -> f64 {
        let w = self.right().min(other.right()) - self.x.max(other.x);
        let h = self.bottom().min(other.bottom()) - self.y.max(other.y);
        if w > 0.0 && h > 0.0 {
            w * h
        } else {
            0.0
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k, self.w * k, self.h * k)
    }
}

/// Topological classes derived from the nine-intersection model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpatialRelationClass {
    Disjoint,
    Touch,
    Contains,
    Intersect,
    Within,
    CoveredBy,
    Crosses,
    Overlap,
    Inside,
}

impl SpatialRelationClass {
    pub const ALL: [SpatialRelationClass; 9] = [
        Self::Disjoint,
        Self::Touch,
        Self::Contains,
        Self::Intersect,
        Self::Within,
        Self::CoveredBy,
        Self::Crosses,
        Self::Overlap,
        Self::Inside,
    ];

    fn bit(self) -> u16 {
        1 << (self as u16)
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Disjoint => "disjoint",
            Self::Touch => "touch",
            Self::Contains => "contains",
            Self::Intersect => "intersect",
            Self::Within => "within",
            Self::CoveredBy => "covered_by",
            Self::Crosses => "crosses",
            Self::Overlap => "overlap",
            Self::Inside => "inside",
        }
    }
}

/// Set of [`SpatialRelationClass`] values packed into a bitmask.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TopologySet(u16);

impl TopologySet {
    pub const EMPTY: TopologySet = TopologySet(0);

    pub fn contains(self, class: SpatialRelationClass) -> bool {
        self.0 & class.bit() != 0
    }

    pub fn insert(&mut self, class: SpatialRelationClass) {
        self.0 |= class.bit();
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = SpatialRelationClass> {
        SpatialRelationClass::ALL.into_iter().filter(move |c| self.contains(*c))
    }

    pub fn bits(self) -> u16 {
        self.0
    }
}

impl FromIterator<SpatialRelationClass> for TopologySet {
    fn from_iter<I: IntoIterator<Item = SpatialRelationClass>>(iter: I) -> Self {
        let mut set = TopologySet::EMPTY;
        for c in iter {
            set.insert(c);
        }
        set
    }
}

impl fmt::Debug for TopologySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl fmt::Display for TopologySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.iter().map(|c| c.name()).collect();
        write!(f, "{}", names.join("|"))
    }
}

/// Four-sector fixed orientation classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DirectionClass {
    Above,
    Below,
    Left,
    Right,
}

impl DirectionClass {
    pub fn opposite(self) -> Self {
        match self {
            Self::Above => Self::Below,
            Self::Below => Self::Above,
            Self::Left => Self::Right,
            Self::Right => Self::Left,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Above => "above",
            Self::Below => "below",
            Self::Left => "left",
            Self::Right => "right",
        }
    }
}

/// Every topological class that holds between `a` and `b` (read "a R b").
pub fn topology(a: &BoundingBox, b: &BoundingBox) -> TopologySet {
    use SpatialRelationClass::*;

    let closed_x = a.x <= b.right() && b.x <= a.right();
    let closed_y = a.y <= b.bottom() && b.y <= a.bottom();
    let open_x = a.x < b.right() && b.x < a.right();
    let open_y = a.y < b.bottom() && b.y < a.bottom();

    let disjoint = !(closed_x && closed_y);
    let interiors_meet = open_x && open_y;
    let a_contains_b = a.x <= b.x && b.right() <= a.right() && a.y <= b.y && b.bottom() <= a.bottom();
    let b_contains_a = b.x <= a.x && a.right() <= b.right() && b.y <= a.y && a.bottom() <= b.bottom();
    let a_inside_b = b.x < a.x && a.right() < b.right() && b.y < a.y && a.bottom() < b.bottom();

    let mut set = TopologySet::EMPTY;
    if disjoint {
        set.insert(Disjoint);
        return set;
    }
    set.insert(Intersect);
    if !interiors_meet {
        set.insert(Touch);
    }
    if a_contains_b {
        set.insert(Contains);
    }
    if b_contains_a {
        set.insert(Within);
        if a_inside_b {
            set.insert(Inside);
        } else {
            set.insert(CoveredBy);
        }
    }
    if interiors_meet && !a_contains_b && !b_contains_a {
        set.insert(Overlap);
    }
    set
}

/// Fraction of `a`'s area covered by `b`. Asymmetric on purpose.
pub fn overlap_ratio(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let area = a.area();
    if area <= 0.0 {
        return 0.0;
    }
    (a.intersection_area(b) / area).clamp(0.0, 1.0)
}

/// Intersection over union.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Direction of `a` relative to `b` on centroids. Vertical wins ties.
pub fn direction(a: &BoundingBox, b: &BoundingBox) -> Result<DirectionClass, GeometryError> {
    direction_of_points(a.centroid(), b.centroid())
}

pub fn direction_of_points(a: Point, b: Point) -> Result<DirectionClass, GeometryError> {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    if dx == 0.0 && dy == 0.0 {
        return Err(GeometryError::CoincidentCentroids);
    }
    Ok(if dy.abs() >= dx.abs() {
        if dy < 0.0 {
            DirectionClass::Above
        } else {
            DirectionClass::Below
        }
    } else if dx > 0.0 {
        DirectionClass::Right
    } else {
        DirectionClass::Left
    })
}

pub fn centroid_distance(a: &BoundingBox, b: &BoundingBox) -> f64 {
    point_distance(a.centroid(), b.centroid())
}

pub fn point_distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

/// Directed line segment, e.g. one bone of a skeleton.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub from: Point,
    pub to: Point,
}

impl Segment {
    pub const fn new(from: Point, to: Point) -> Self {
        Self { from, to }
    }

    fn vector(&self) -> (f64, f64) {
        (self.to.x - self.from.x, self.to.y - self.from.y)
    }
}

/// Unsigned angle in degrees between the direction vectors of two segments.
pub fn segment_angle(u: &Segment, v: &Segment) -> Result<f64, GeometryError> {
    let (ux, uy) = u.vector();
    let (vx, vy) = v.vector();
    let nu = ux.hypot(uy);
    let nv = vx.hypot(vy);
    if nu == 0.0 || nv == 0.0 || !nu.is_finite() || !nv.is_finite() {
        return Err(GeometryError::ZeroLengthSegment);
    }
    let cos = ((ux * vx + uy * vy) / (nu * nv)).clamp(-1.0, 1.0);
    Ok(cos.acos().to_degrees().clamp(0.0, 180.0))
}

/// Simple polygon in pixel space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Region {
    vertices: Vec<Point>,
}

impl Region {
    pub fn new(vertices: Vec<Point>) -> Result<Self, GeometryError> {
        if vertices.len() < 3 {
            return Err(GeometryError::InvalidRegion(format!(
                "need at least 3 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(p) = vertices.iter().find(|p| !p.is_finite()) {
            return Err(GeometryError::InvalidRegion(format!("non-finite vertex {p:?}")));
        }
        let region = Self { vertices };
        if region.signed_area().abs() <= f64::EPSILON {
            return Err(GeometryError::InvalidRegion("zero area".into()));
        }
        if region.self_intersects() {
            return Err(GeometryError::InvalidRegion("polygon edges cross".into()));
        }
        Ok(region)
    }

    /// Axis-aligned rectangle region.
    pub fn rect(x: f64, y: f64, w: f64, h: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Point::new(x, y),
            Point::new(x + w, y),
            Point::new(x + w, y + h),
            Point::new(x, y + h),
        ])
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn scaled(&self, k: f64) -> Result<Self, GeometryError> {
        Self::new(self.vertices.iter().map(|p| p.scaled(k)).collect())
    }

    fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    fn signed_area(&self) -> f64 {
        self.edges().map(|(p, q)| p.x * q.y - q.x * p.y).sum::<f64>() / 2.0
    }

    fn self_intersects(&self) -> bool {
        let n = self.vertices.len();
        let edges: Vec<(Point, Point)> = self.edges().collect();
        for i in 0..n {
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                if segments_intersect(edges[i], edges[j]) {
                    return true;
                }
            }
        }
        false
    }

    /// Strict containment: points on the boundary are outside.
    pub fn contains_strict(&self, p: Point) -> bool {
        if self.edges().any(|(a, b)| on_segment(p, a, b)) {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }
}

impl TryFrom<Vec<Point>> for Region {
    type Error = GeometryError;

    fn try_from(vertices: Vec<Point>) -> Result<Self, Self::Error> {
        Region::new(vertices)
    }
}

impl From<Region> for Vec<Point> {
    fn from(r: Region) -> Self {
        r.vertices
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

fn on_segment(p: Point, a: Point, b: Point) -> bool {
    cross(a, b, p) == 0.0
        && p.x >= a.x.min(b.x)
        && p.x <= a.x.max(b.x)
        && p.y >= a.y.min(b.y)
        && p.y <= a.y.max(b.y)
}

fn segments_intersect((p1, p2): (Point, Point), (q1, q2): (Point, Point)) -> bool {
    let d1 = cross(q1, q2, p1);
    let d2 = cross(q1, q2, p2);
    let d3 = cross(p1, p2, q1);
    let d4 = cross(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(p1, q1, q2))
        || (d2 == 0.0 && on_segment(p2, q1, q2))
        || (d3 == 0.0 && on_segment(q1, p1, p2))
        || (d4 == 0.0 && on_segment(q2, p1, p2))
}

/// True iff the box centroid lies strictly inside the region.
pub fn inside_region(b: &BoundingBox, region: &Region) -> bool {
    region.contains_strict(b.centroid())
}

#[cfg(test)]
mod tests {
    use super::SpatialRelationClass::*;
    use super::*;

    fn bb(x: f64, y: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(x, y, w, h)
    }

    fn set(classes: &[SpatialRelationClass]) -> TopologySet {
        classes.iter().copied().collect()
    }

    #[test]
    fn topology_examples() {
        assert_eq!(topology(&bb(0., 0., 10., 10.), &bb(20., 20., 5., 5.)), set(&[Disjoint]));
        assert_eq!(topology(&bb(0., 0., 10., 10.), &bb(10., 0., 10., 10.)), set(&[Touch, Intersect]));
        let a = bb(0., 0., 10., 10.);
        let b = bb(2., 2., 4., 4.);
        assert_eq!(topology(&a, &b), set(&[Contains, Intersect]));
        assert_eq!(topology(&b, &a), set(&[Within, Inside, Intersect]));
    }

    #[test]
    fn topology_equal_and_flush_boxes() {
        let a = bb(0., 0., 10., 10.);
        assert_eq!(topology(&a, &a), set(&[Contains, Within, CoveredBy, Intersect]));
        // flush against the left edge: covered, not inside
        let b = bb(0., 2., 4., 4.);
        assert_eq!(topology(&b, &a), set(&[Within, CoveredBy, Intersect]));
        // corner contact
        assert_eq!(topology(&a, &bb(10., 10., 3., 3.)), set(&[Touch, Intersect]));
        // partial overlap
        assert_eq!(topology(&a, &bb(5., 5., 10., 10.)), set(&[Overlap, Intersect]));
        assert!(!topology(&a, &bb(5., 5., 10., 10.)).contains(Crosses));
    }

    #[test]
    fn overlap_ratio_examples() {
        assert_eq!(overlap_ratio(&bb(0., 0., 10., 10.), &bb(0., 0., 10., 10.)), 1.0);
        assert_eq!(overlap_ratio(&bb(0., 0., 10., 10.), &bb(5., 0., 10., 10.)), 0.5);
        assert_eq!(overlap_ratio(&bb(0., 0., 4., 4.), &bb(100., 100., 4., 4.)), 0.0);
        // touching boxes share no area
        assert_eq!(overlap_ratio(&bb(0., 0., 10., 10.), &bb(10., 0., 10., 10.)), 0.0);
        assert!((iou(&bb(0., 0., 10., 10.), &bb(5., 0., 10., 10.)) - 50.0 / 150.0).abs() < 1e-12);
    }

    fn centred(cx: f64, cy: f64) -> BoundingBox {
        bb(cx - 1.0, cy - 1.0, 2.0, 2.0)
    }

    #[test]
    fn direction_examples() {
        assert_eq!(direction(&centred(50., 10.), &centred(50., 90.)).unwrap(), DirectionClass::Above);
        assert_eq!(direction(&centred(90., 50.), &centred(10., 50.)).unwrap(), DirectionClass::Right);
        assert_eq!(direction(&centred(10., 10.), &centred(12., 90.)).unwrap(), DirectionClass::Above);
        assert_eq!(direction(&centred(10., 10.), &centred(20., 20.)).unwrap(), DirectionClass::Above);
        assert_eq!(direction(&centred(5., 5.), &centred(5., 5.)), Err(GeometryError::CoincidentCentroids));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(centroid_distance(&centred(0., 0.), &centred(3., 4.)), 5.0);
        assert_eq!(centroid_distance(&centred(7., 7.), &centred(7., 7.)), 0.0);
        assert_eq!(centroid_distance(&centred(1., 1.), &centred(4., 5.)), 5.0);
        assert_eq!(point_distance(Point::new(0., 0.), Point::new(0., 0.)), 0.0);
        assert_eq!(point_distance(Point::new(0., 0.), Point::new(6., 8.)), 10.0);
        assert_eq!(point_distance(Point::new(2., 3.), Point::new(5., 7.)), 5.0);
    }

    #[test]
    fn segment_angle_examples() {
        let o = Point::new(0., 0.);
        let seg = |x, y| Segment::new(o, Point::new(x, y));
        assert!((segment_angle(&seg(1., 0.), &seg(0., 1.)).unwrap() - 90.0).abs() < 1e-12);
        assert_eq!(segment_angle(&seg(1., 0.), &seg(1., 0.)).unwrap(), 0.0);
        assert!((segment_angle(&seg(1., 0.), &seg(-1., 1.)).unwrap() - 135.0).abs() < 1e-12);
        assert_eq!(segment_angle(&seg(0., 0.), &seg(1., 0.)), Err(GeometryError::ZeroLengthSegment));
    }

    #[test]
    fn inside_region_examples() {
        let reg = Region::rect(0., 0., 10., 10.).unwrap();
        assert!(inside_region(&centred(5., 5.), &reg));
        assert!(!inside_region(&centred(50., 50.), &reg));
        assert!(!inside_region(&centred(10., 5.), &reg));
        assert!(!inside_region(&centred(0., 0.), &reg));
    }

    #[test]
    fn concave_region() {
        // U shape opening upward
        let reg = Region::new(vec![
            Point::new(0., 0.),
            Point::new(3., 0.),
            Point::new(3., 8.),
            Point::new(7., 8.),
            Point::new(7., 0.),
            Point::new(10., 0.),
            Point::new(10., 10.),
            Point::new(0., 10.),
        ])
        .unwrap();
        assert!(reg.contains_strict(Point::new(1., 5.)));
        assert!(!reg.contains_strict(Point::new(5., 5.)));
        assert!(reg.contains_strict(Point::new(5., 9.)));
    }

    #[test]
    fn region_validation() {
        assert!(Region::new(vec![Point::new(0., 0.), Point::new(1., 1.)]).is_err());
        assert!(Region::new(vec![Point::new(0., 0.), Point::new(1., 1.), Point::new(2., 2.)]).is_err());
        // bow tie
        let bow = vec![Point::new(0., 0.), Point::new(10., 10.), Point::new(10., 0.), Point::new(0., 10.)];
        assert!(Region::new(bow).is_err());
        let parsed: Result<Region, _> = serde_json::from_str("[[0,0],[4,0],[4,4]]");
        assert!(parsed.is_ok());
        let bad: Result<Region, _> = serde_json::from_str("[[0,0],[4,0]]");
        assert!(bad.is_err());
    }

    #[test]
    fn box_validation() {
        assert!(bb(0., 0., 1., 1.).validate().is_ok());
        assert!(bb(0., 0., 0., 1.).validate().is_err());
        assert!(bb(0., 0., 1., -1.).validate().is_err());
        assert!(bb(f64::NAN, 0., 1., 1.).validate().is_err());
    }
}
