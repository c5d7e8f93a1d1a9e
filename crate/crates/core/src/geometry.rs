//! Planar geometric primitives.
//!
//! Everything downstream works in planar meters. Geographic (WGS84 lon/lat)
//! inputs are brought into the plane with a local equirectangular projection
//! about a caller-chosen origin, see [`project_to_plane`].

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Mean Earth radius used by the local projection, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;

/// Meters per international mile.
pub const METERS_PER_MILE: f64 = 1609.344;

/// Projection is refused at or beyond this absolute latitude.
pub const MAX_PROJECTION_LAT: f64 = 89.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("non-finite coordinate ({x}, {y})")]
    NonFinite { x: f64, y: f64 },
    #[error("polyline needs at least 2 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("polyline has identical consecutive vertices at index {0}")]
    RepeatedVertex(usize),
    #[error("geographic coordinate out of range (lon {lon}, lat {lat})")]
    GeoOutOfRange { lon: f64, lat: f64 },
    #[error("latitude {0} too close to a pole for local projection")]
    PolarLatitude(f64),
    #[error("convex hull of an empty point set")]
    EmptyHull,
}

/// A planar coordinate in meters (easting, northing).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    /// Builds a point without checking finiteness. Use [`Point2D::try_new`]
    /// at data boundaries.
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn try_new(x: f64, y: f64) -> Result<Self, GeometryError> {
        if x.is_finite() && y.is_finite() {
            Ok(Self { x, y })
        } else {
            Err(GeometryError::NonFinite { x, y })
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Coordinate along axis 0 (x) or 1 (y).
    #[inline]
    pub fn coord(&self, axis: usize) -> f64 {
        if axis == 0 {
            self.x
        } else {
            self.y
        }
    }

    pub fn lerp(&self, other: &Point2D, t: f64) -> Point2D {
        Point2D::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }
}

impl fmt::Display for Point2D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Straight-line distance in meters.
#[inline]
pub fn euclidean_distance(a: Point2D, b: Point2D) -> f64 {
    let dx = a.x - b.x;
    let dy = a.y - b.y;
    (dx * dx + dy * dy).sqrt()
}

/// Distance from `p` to the closed segment `a`-`b`.
pub fn point_segment_distance(p: Point2D, a: Point2D, b: Point2D) -> f64 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    if len2 == 0.0 {
        return euclidean_distance(p, a);
    }
    let t = (((p.x - a.x) * dx + (p.y - a.y) * dy) / len2).clamp(0.0, 1.0);
    euclidean_distance(p, a.lerp(&b, t))
}

/// An open polyline with at least two vertices and no zero-length edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polyline {
    vertices: Vec<Point2D>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point2D>) -> Result<Self, GeometryError> {
        if vertices.len() < 2 {
            return Err(GeometryError::TooFewVertices(vertices.len()));
        }
        for (i, v) in vertices.iter().enumerate() {
            if !v.is_finite() {
                return Err(GeometryError::NonFinite { x: v.x, y: v.y });
            }
            if i > 0 && vertices[i - 1] == *v {
                return Err(GeometryError::RepeatedVertex(i));
            }
        }
        Ok(Self { vertices })
    }

    /// Like [`Polyline::new`] but first collapses runs of identical
    /// consecutive vertices, which GIS exports routinely contain.
    pub fn new_dedup(mut vertices: Vec<Point2D>) -> Result<Self, GeometryError> {
        vertices.dedup();
        Self::new(vertices)
    }

    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point2D, Point2D)> + '_ {
        self.vertices.windows(2).map(|w| (w[0], w[1]))
    }

    pub fn arc_length(&self) -> f64 {
        polyline_arc_length(self)
    }

    pub fn midpoint(&self) -> Point2D {
        polyline_midpoint(self)
    }

    /// Shortest distance from `p` to any point of the polyline.
    pub fn distance_to(&self, p: Point2D) -> f64 {
        self.edges()
            .map(|(a, b)| point_segment_distance(p, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn polyline_arc_length(p: &Polyline) -> f64 {
    p.edges().map(|(a, b)| euclidean_distance(a, b)).sum()
}

/// The point at half the arc length of `p`. This is what the rest of the
/// crate calls a wire centroid.
pub fn polyline_midpoint(p: &Polyline) -> Point2D {
    let half = polyline_arc_length(p) / 2.0;
    let mut walked = 0.0;
    for (a, b) in p.edges() {
        let len = euclidean_distance(a, b);
        if walked + len >= half {
            let t = ((half - walked) / len).clamp(0.0, 1.0);
            return a.lerp(&b, t);
        }
        walked += len;
    }
    // Only reachable through rounding on the final edge.
    *p.vertices.last().expect("polyline has vertices")
}

/// WGS84 longitude/latitude in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeometryError> {
        let ok = lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat);
        if ok {
            Ok(Self { lon, lat })
        } else {
            Err(GeometryError::GeoOutOfRange { lon, lat })
        }
    }
}

/// Local equirectangular projection of `g` about `origin`.
///
/// `x = R·Δlon·cos(lat₀)`, `y = R·Δlat`, angles in radians. Exact at the
/// origin; distortion grows with distance from it, which is negligible at the
/// few-hundred-kilometer extents of a utility territory.
pub fn project_to_plane(g: GeoPoint, origin: GeoPoint) -> Result<Point2D, GeometryError> {
    for lat in [g.lat, origin.lat] {
        if lat.abs() >= MAX_PROJECTION_LAT {
            return Err(GeometryError::PolarLatitude(lat));
        }
    }
    let cos0 = origin.lat.to_radians().cos();
    Ok(Point2D::new(
        EARTH_RADIUS_M * (g.lon - origin.lon).to_radians() * cos0,
        EARTH_RADIUS_M * (g.lat - origin.lat).to_radians(),
    ))
}

/// Inverse of [`project_to_plane`] for the same origin.
pub fn unproject_from_plane(p: Point2D, origin: GeoPoint) -> Result<GeoPoint, GeometryError> {
    if origin.lat.abs() >= MAX_PROJECTION_LAT {
        return Err(GeometryError::PolarLatitude(origin.lat));
    }
    let cos0 = origin.lat.to_radians().cos();
    let lon = origin.lon + (p.x / (EARTH_RADIUS_M * cos0)).to_degrees();
    let lat = origin.lat + (p.y / EARTH_RADIUS_M).to_degrees();
    GeoPoint::new(lon, lat)
}

/// A closed ring: first vertex repeated as the last. Degenerate rings (a
/// single point, or a segment traversed out and back) are allowed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring {
    vertices: Vec<Point2D>,
}

impl Ring {
    pub fn vertices(&self) -> &[Point2D] {
        &self.vertices
    }

    /// Number of distinct corners (closing vertex not counted).
    pub fn corner_count(&self) -> usize {
        self.vertices.len() - 1
    }

    /// True when the ring encloses no area (point or segment hull).
    pub fn is_degenerate(&self) -> bool {
        self.corner_count() < 3
    }

    /// Boundary-inclusive containment test for a convex counterclockwise ring.
    pub fn contains_convex(&self, p: Point2D, tol: f64) -> bool {
        match self.corner_count() {
            1 => euclidean_distance(p, self.vertices[0]) <= tol,
            2 => point_segment_distance(p, self.vertices[0], self.vertices[1]) <= tol,
            _ => self.vertices.windows(2).all(|w| {
                let (a, b) = (w[0], w[1]);
                let len = euclidean_distance(a, b);
                // signed distance of p to the left of a->b
                cross(a, b, p) / len >= -tol
            }),
        }
    }
}

#[inline]
fn cross(o: Point2D, a: Point2D, b: Point2D) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counterclockwise convex hull (Andrew's monotone chain), returned closed.
pub fn convex_hull(points: &[Point2D]) -> Result<Ring, GeometryError> {
    if points.is_empty() {
        return Err(GeometryError::EmptyHull);
    }
    let mut pts: Vec<Point2D> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() == 1 {
        return Ok(Ring {
            vertices: vec![pts[0], pts[0]],
        });
    }

    let mut lower: Vec<Point2D> = Vec::with_capacity(pts.len());
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point2D> = Vec::with_capacity(pts.len());
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    let mut hull = lower;
    hull.extend(upper);
    // all collinear: monotone chain yields the two extremes
    let first = hull[0];
    hull.push(first);
    Ok(Ring { vertices: hull })
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BBox {
    pub min: Point2D,
    pub max: Point2D,
}

impl BBox {
    pub fn of(points: &[Point2D]) -> Option<BBox> {
        let first = *points.first()?;
        let mut bb = BBox {
            min: first,
            max: first,
        };
        for p in &points[1..] {
            bb.min.x = bb.min.x.min(p.x);
            bb.min.y = bb.min.y.min(p.y);
            bb.max.x = bb.max.x.max(p.x);
            bb.max.y = bb.max.y.max(p.y);
        }
        Some(bb)
    }
}

/// Arithmetic mean of a non-empty point set.
pub fn mean_point(points: &[Point2D]) -> Option<Point2D> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
    Some(Point2D::new(sx / n, sy / n))
}
