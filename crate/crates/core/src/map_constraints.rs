//! Lane polygons, the in-lane indicator and its Monte Carlo expectation
//! under a Gaussian position estimate.

use alloc::vec::Vec;

use libm::sqrt;
use nalgebra::{Matrix2, Vector2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
pub enum MapError {
    #[error("lane polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("lane polygon is self-intersecting")]
    SelfIntersecting,
    #[error("lane polygon has non-finite vertices")]
    NonFinite,
    #[error("covariance is not symmetric positive semidefinite")]
    NotPositiveSemidefinite,
}

/// Simple polygon in the horizontal ENU plane.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    vertices: Vec<Vector2<f64>>,
    bbox_min: Vector2<f64>,
    bbox_max: Vector2<f64>,
}

fn orient(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: &Vector2<f64>, b: &Vector2<f64>, p: &Vector2<f64>, eps: f64) -> bool {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm() <= eps;
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (a + ab * t - p).norm() <= eps
}

fn segments_cross(a: &Vector2<f64>, b: &Vector2<f64>, c: &Vector2<f64>, d: &Vector2<f64>) -> bool {
    let (o1, o2) = (orient(a, b, c), orient(a, b, d));
    let (o3, o4) = (orient(c, d, a), orient(c, d, b));
    if ((o1 > 0.0 && o2 < 0.0) || (o1 < 0.0 && o2 > 0.0)) && ((o3 > 0.0 && o4 < 0.0) || (o3 < 0.0 && o4 > 0.0)) {
        return true;
    }
    (o1 == 0.0 && on_segment(a, b, c, 0.0))
        || (o2 == 0.0 && on_segment(a, b, d, 0.0))
        || (o3 == 0.0 && on_segment(c, d, a, 0.0))
        || (o4 == 0.0 && on_segment(c, d, b, 0.0))
}

impl Polygon {
    pub fn new(vertices: Vec<Vector2<f64>>) -> Result<Self, MapError> {
        let n = vertices.len();
        if n < 3 {
            return Err(MapError::TooFewVertices(n));
        }
        if vertices.iter().any(|v| !v.x.is_finite() || !v.y.is_finite()) {
            return Err(MapError::NonFinite);
        }
        for i in 0..n {
            let (a, b) = (&vertices[i], &vertices[(i + 1) % n]);
            for j in (i + 1)..n {
                // adjacent edges share a vertex by construction
                if j == i + 1 || (i == 0 && j == n - 1) {
                    continue;
                }
                let (c, d) = (&vertices[j], &vertices[(j + 1) % n]);
                if segments_cross(a, b, c, d) {
                    return Err(MapError::SelfIntersecting);
                }
            }
        }
        let mut bbox_min = vertices[0];
        let mut bbox_max = vertices[0];
        for v in &vertices {
            bbox_min = bbox_min.inf(v);
            bbox_max = bbox_max.sup(v);
        }
        Ok(Self {
            vertices,
            bbox_min,
            bbox_max,
        })
    }

    /// Axis-aligned rectangle.
    pub fn rectangle(min: Vector2<f64>, max: Vector2<f64>) -> Result<Self, MapError> {
        Self::new(alloc::vec![
            min,
            Vector2::new(max.x, min.y),
            max,
            Vector2::new(min.x, max.y)
        ])
    }

    pub fn vertices(&self) -> &[Vector2<f64>] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (&Vector2<f64>, &Vector2<f64>)> {
        let n = self.vertices.len();
        (0..n).map(move |i| (&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    /// Even-odd crossing test; points on the boundary count as inside.
    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        if p.x < self.bbox_min.x || p.y < self.bbox_min.y || p.x > self.bbox_max.x || p.y > self.bbox_max.y {
            return false;
        }
        let mut inside = false;
        for (a, b) in self.edges() {
            if on_segment(a, b, p, 1e-12) {
                return true;
            }
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Euclidean distance from `p` to the polygon boundary.
    pub fn boundary_distance(&self, p: &Vector2<f64>) -> f64 {
        self.edges()
            .map(|(a, b)| {
                let ab = b - a;
                let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
                (a + ab * t - p).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// One drivable area with an optional map altitude.
#[derive(Debug, Clone, PartialEq)]
pub struct Lane {
    pub polygon: Polygon,
    pub altitude: Option<f64>,
}

/// Union of lane polygons.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LaneMap {
    pub lanes: Vec<Lane>,
}

impl LaneMap {
    pub fn new(lanes: Vec<Lane>) -> Self {
        Self { lanes }
    }

    /// Two orthogonal two-lane roads crossing at the origin, east-west and
    /// north-south, each `2 * lane_width` wide and reaching `half_length`
    /// from the centre. The drivable area (both lanes of both roads plus the
    /// junction box) is a single cross-shaped polygon.
    pub fn intersection(lane_width: f64, half_length: f64) -> Self {
        let w = lane_width;
        let l = half_length;
        let v = Vector2::new;
        let cross = alloc::vec![
            v(l, -w),
            v(l, w),
            v(w, w),
            v(w, l),
            v(-w, l),
            v(-w, w),
            v(-l, w),
            v(-l, -w),
            v(-w, -w),
            v(-w, -l),
            v(w, -l),
            v(w, -w),
        ];
        Self::new(alloc::vec![Lane {
            polygon: Polygon::new(cross).expect("cross is simple"),
            altitude: Some(0.0),
        }])
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Map altitude at `p` (first lane containing it), if known.
    pub fn altitude_at(&self, p: &Vector2<f64>) -> Option<f64> {
        self.lanes
            .iter()
            .find(|l| l.polygon.contains(p))
            .and_then(|l| l.altitude)
    }

    /// Signed distance to the lane boundary, positive inside.
    ///
    /// Inside: depth within the deepest containing polygon, which can
    /// underestimate the distance to the edge of the union where lanes
    /// overlap. Outside: distance to the nearest polygon.
    pub fn signed_distance(&self, p: &Vector2<f64>) -> f64 {
        let mut depth = f64::NEG_INFINITY;
        let mut gap = f64::INFINITY;
        for lane in &self.lanes {
            let d = lane.polygon.boundary_distance(p);
            if lane.polygon.contains(p) {
                depth = depth.max(d);
            } else {
                gap = gap.min(d);
            }
        }
        if depth > f64::NEG_INFINITY {
            depth
        } else {
            -gap
        }
    }
}

/// The in-lane indicator ε(x, y).
pub fn point_in_lane(map: &LaneMap, x: f64, y: f64) -> bool {
    let p = Vector2::new(x, y);
    map.lanes.iter().any(|l| l.polygon.contains(&p))
}

/// Square-root factor `L` with `L Lᵀ = cov`.
///
/// Cholesky when positive definite; rank-deficient matrices fall back to the
/// eigen-decomposition with negative round-off clamped to zero.
pub fn covariance_factor(cov: &Matrix2<f64>) -> Result<Matrix2<f64>, MapError> {
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    if cov.iter().any(|v| !v.is_finite()) {
        return Err(MapError::NotPositiveSemidefinite);
    }
    let scale = a.abs().max(c.abs()).max(1e-300);
    if (cov[(0, 1)] - cov[(1, 0)]).abs() > 1e-9 * scale {
        return Err(MapError::NotPositiveSemidefinite);
    }
    if a > 0.0 {
        let l11 = sqrt(a);
        let l21 = b / l11;
        let rem = c - l21 * l21;
        if rem > 1e-12 * scale {
            return Ok(Matrix2::new(l11, 0.0, l21, sqrt(rem)));
        }
    }
    // closed-form symmetric 2x2 eigen-decomposition
    let mean = 0.5 * (a + c);
    let radius = sqrt(0.25 * (a - c) * (a - c) + b * b);
    let (l1, l2) = (mean + radius, mean - radius);
    if l2 < -1e-9 * scale {
        return Err(MapError::NotPositiveSemidefinite);
    }
    let v1 = if b.abs() > 1e-300 {
        Vector2::new(l1 - c, b).normalize()
    } else if a >= c {
        Vector2::new(1.0, 0.0)
    } else {
        Vector2::new(0.0, 1.0)
    };
    let v2 = Vector2::new(-v1.y, v1.x);
    let s1 = sqrt(l1.max(0.0));
    let s2 = sqrt(l2.max(0.0));
    Ok(Matrix2::from_columns(&[v1 * s1, v2 * s2]))
}

/// `(1/N) Σ ε(s_l)` with `s_l ~ N(mean, cov)`: Monte Carlo estimate of the
/// probability that the vehicle lies on a lane.
pub fn containment_probability<R: Rng + ?Sized>(
    mean: &Vector2<f64>,
    cov: &Matrix2<f64>,
    map: &LaneMap,
    n_samples: usize,
    rng: &mut R,
) -> Result<f64, MapError> {
    let l = covariance_factor(cov)?;
    if n_samples == 0 {
        return Ok(if point_in_lane(map, mean.x, mean.y) { 1.0 } else { 0.0 });
    }
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let z = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng));
        let s = mean + l * z;
        if point_in_lane(map, s.x, s.y) {
            hits += 1;
        }
    }
    Ok(hits as f64 / n_samples as f64)
}
