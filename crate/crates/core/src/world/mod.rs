//! Static 2D geometry, the builtin arenas and exact lidar raycasting.
//!
//! Obstacles are solid: a point inside a circle or polygon has zero clearance.
//! The outer boundary is a closed polygon made of segments.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod file;

pub use file::{load_world, save_world, WorldFile};

/// Tolerance used when matching boundary endpoints.
const VERTEX_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum WorldError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid world: {0}")]
    Invalid(String),
    #[error("point ({x}, {y}) is outside the world boundary")]
    OutsideBounds { x: f64, y: f64 },
    #[error("max_range must be positive, got {0}")]
    BadRange(f64),
    #[error("unknown builtin scenario {0} (expected 1, 2 or 3)")]
    UnknownScenario(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(angle: f64) -> Self {
        Self::new(angle.cos(), angle.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3D cross product.
    pub fn cross(self, other: Vec2) -> f64 {
        self.x * other.y - self.y * other.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    /// Rotates counter-clockwise about the origin.
    pub fn rotated(self, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    fn approx_eq(self, other: Vec2) -> bool {
        (self.x - other.x).abs() <= VERTEX_EPS && (self.y - other.y).abs() <= VERTEX_EPS
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

impl Neg for Vec2 {
    type Output = Vec2;
    fn neg(self) -> Vec2 {
        Vec2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Vec2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
}

impl Segment {
    pub fn new(a: Vec2, b: Vec2) -> Result<Self, WorldError> {
        if !a.is_finite() || !b.is_finite() {
            return Err(WorldError::Invalid(format!("segment {a}-{b} has non-finite endpoints")));
        }
        if a.approx_eq(b) {
            return Err(WorldError::Invalid(format!("segment {a}-{b} has zero length")));
        }
        Ok(Self { a, b })
    }

    /// Distance along the ray to the first intersection, if any.
    /// `dir` must be a unit vector.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let edge = self.b - self.a;
        let rel = self.a - origin;
        let denom = dir.cross(edge);
        if denom.abs() < 1e-15 {
            // Parallel. Only a collinear segment can be hit, at its nearer endpoint.
            if rel.cross(dir).abs() > 1e-12 {
                return None;
            }
            let ta = rel.dot(dir);
            let tb = (self.b - origin).dot(dir);
            // An origin lying on the segment itself slides along it without a hit.
            return (ta > 0.0 && tb > 0.0).then(|| ta.min(tb));
        }
        let t = rel.cross(edge) / denom;
        let u = rel.cross(dir) / denom;
        if t > 0.0 && (0.0..=1.0).contains(&u) {
            Some(t)
        } else {
            None
        }
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        let edge = self.b - self.a;
        let s = ((p - self.a).dot(edge) / edge.dot(edge)).clamp(0.0, 1.0);
        p.distance(self.a + edge * s)
    }

    fn rotated(&self, angle: f64) -> Segment {
        Segment { a: self.a.rotated(angle), b: self.b.rotated(angle) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Circle {
    pub center: Vec2,
    pub radius: f64,
}

impl Circle {
    pub fn new(center: Vec2, radius: f64) -> Result<Self, WorldError> {
        if !center.is_finite() || !(radius.is_finite() && radius > 0.0) {
            return Err(WorldError::Invalid(format!(
                "circle at {center} must have a finite positive radius, got {radius}"
            )));
        }
        Ok(Self { center, radius })
    }

    /// Nearest positive root of |origin + t·dir − center| = radius.
    /// A tangent ray has a double root and resolves to it.
    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        let f = origin - self.center;
        let b = f.dot(dir);
        let c = f.dot(f) - self.radius * self.radius;
        let disc = b * b - c;
        if disc < 0.0 {
            return None;
        }
        let sq = disc.sqrt();
        let near = -b - sq;
        let far = -b + sq;
        if near > 0.0 {
            Some(near)
        } else if far > 0.0 {
            Some(far)
        } else {
            None
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.distance(self.center) < self.radius
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        (p.distance(self.center) - self.radius).max(0.0)
    }
}

/// One static obstacle. Polygons are closed and solid.
#[derive(Debug, Clone, PartialEq)]
pub enum Obstacle {
    Segment(Segment),
    Circle(Circle),
    Polygon(Vec<Vec2>),
}

impl Obstacle {
    fn polygon_edges(vertices: &[Vec2]) -> impl Iterator<Item = Segment> + '_ {
        (0..vertices.len()).map(move |i| Segment {
            a: vertices[i],
            b: vertices[(i + 1) % vertices.len()],
        })
    }

    pub fn ray_hit(&self, origin: Vec2, dir: Vec2) -> Option<f64> {
        match self {
            Obstacle::Segment(s) => s.ray_hit(origin, dir),
            Obstacle::Circle(c) => c.ray_hit(origin, dir),
            Obstacle::Polygon(v) => Self::polygon_edges(v)
                .filter_map(|e| e.ray_hit(origin, dir))
                .min_by(f64::total_cmp),
        }
    }

    /// Distance to the obstacle surface, zero inside solid shapes.
    pub fn distance_to(&self, p: Vec2) -> f64 {
        match self {
            Obstacle::Segment(s) => s.distance_to(p),
            Obstacle::Circle(c) => c.distance_to(p),
            Obstacle::Polygon(v) => {
                if point_in_polygon(p, Self::polygon_edges(v)) {
                    0.0
                } else {
                    Self::polygon_edges(v).map(|e| e.distance_to(p)).fold(f64::INFINITY, f64::min)
                }
            }
        }
    }

    pub fn rotated(&self, angle: f64) -> Obstacle {
        match self {
            Obstacle::Segment(s) => Obstacle::Segment(s.rotated(angle)),
            Obstacle::Circle(c) => Obstacle::Circle(Circle {
                center: c.center.rotated(angle),
                radius: c.radius,
            }),
            Obstacle::Polygon(v) => Obstacle::Polygon(v.iter().map(|p| p.rotated(angle)).collect()),
        }
    }
}

/// Axis-aligned rectangle `[xmin, ymin, xmax, ymax]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub min: Vec2,
    pub max: Vec2,
}

impl Rect {
    pub fn new(xmin: f64, ymin: f64, xmax: f64, ymax: f64) -> Result<Self, WorldError> {
        let ok = [xmin, ymin, xmax, ymax].iter().all(|v| v.is_finite()) && xmin <= xmax && ymin <= ymax;
        if !ok {
            return Err(WorldError::Invalid(format!(
                "rectangle [{xmin}, {ymin}, {xmax}, {ymax}] is not ordered or not finite"
            )));
        }
        Ok(Self { min: Vec2::new(xmin, ymin), max: Vec2::new(xmax, ymax) })
    }

    pub fn corners(&self) -> [Vec2; 4] {
        [
            self.min,
            Vec2::new(self.max.x, self.min.y),
            self.max,
            Vec2::new(self.min.x, self.max.y),
        ]
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= self.min.x && p.x <= self.max.x && p.y >= self.min.y && p.y <= self.max.y
    }

    /// Shrinks every side by `margin`; `None` if nothing is left.
    pub fn inset(&self, margin: f64) -> Option<Rect> {
        let r = Rect {
            min: Vec2::new(self.min.x + margin, self.min.y + margin),
            max: Vec2::new(self.max.x - margin, self.max.y - margin),
        };
        (r.min.x <= r.max.x && r.min.y <= r.max.y).then_some(r)
    }

    pub fn to_array(self) -> [f64; 4] {
        [self.min.x, self.min.y, self.max.x, self.max.y]
    }
}

fn point_in_polygon(p: Vec2, edges: impl Iterator<Item = Segment>) -> bool {
    let mut inside = false;
    for e in edges {
        let (a, b) = (e.a, e.b);
        if (a.y > p.y) != (b.y > p.y) {
            let x_cross = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
            if p.x < x_cross {
                inside = !inside;
            }
        }
    }
    inside
}

fn segments_intersect(s: &Segment, t: &Segment) -> bool {
    let d1 = s.b - s.a;
    let d2 = t.b - t.a;
    let denom = d1.cross(d2);
    if denom.abs() < 1e-15 {
        return false;
    }
    let rel = t.a - s.a;
    let u = rel.cross(d2) / denom;
    let v = rel.cross(d1) / denom;
    (0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)
}

/// A validated, immutable scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    name: String,
    bounds: Vec<Segment>,
    obstacles: Vec<Obstacle>,
    spawn_region: Rect,
    goal_region: Rect,
}

impl World {
    /// Builds a world from explicit boundary segments, checking that they close.
    pub fn new(
        name: impl Into<String>,
        bounds: Vec<Segment>,
        obstacles: Vec<Obstacle>,
        spawn_region: Rect,
        goal_region: Rect,
    ) -> Result<Self, WorldError> {
        check_closed(&bounds)?;
        for (i, o) in obstacles.iter().enumerate() {
            if let Obstacle::Polygon(v) = o {
                if v.len() < 3 {
                    return Err(WorldError::Invalid(format!("polygon obstacle {i} has fewer than 3 vertices")));
                }
                for e in Obstacle::polygon_edges(v) {
                    Segment::new(e.a, e.b)?;
                }
            }
        }
        // Canonical order (segments, circles, polygons) so file round-trips compare equal.
        let mut obstacles = obstacles;
        obstacles.sort_by_key(|o| match o {
            Obstacle::Segment(_) => 0,
            Obstacle::Circle(_) => 1,
            Obstacle::Polygon(_) => 2,
        });
        let world = Self { name: name.into(), bounds, obstacles, spawn_region, goal_region };
        world.check_region("spawn_region", spawn_region)?;
        world.check_region("goal_region", goal_region)?;
        Ok(world)
    }

    /// Builds a world whose boundary is the closed polygon through `vertices`.
    pub fn from_vertices(
        name: impl Into<String>,
        vertices: &[Vec2],
        obstacles: Vec<Obstacle>,
        spawn_region: Rect,
        goal_region: Rect,
    ) -> Result<Self, WorldError> {
        if vertices.len() < 3 {
            return Err(WorldError::Invalid("bounds need at least 3 vertices".into()));
        }
        let bounds = (0..vertices.len())
            .map(|i| Segment::new(vertices[i], vertices[(i + 1) % vertices.len()]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(name, bounds, obstacles, spawn_region, goal_region)
    }

    fn check_region(&self, label: &str, r: Rect) -> Result<(), WorldError> {
        for c in r.corners() {
            if !self.contains(c) || self.bounds.iter().any(|s| s.distance_to(c) < VERTEX_EPS) {
                return Err(WorldError::Invalid(format!(
                    "{label} corner {c} is not strictly inside the boundary"
                )));
            }
        }
        let corners = r.corners();
        for i in 0..4 {
            let side = Segment { a: corners[i], b: corners[(i + 1) % 4] };
            if self.bounds.iter().any(|b| segments_intersect(&side, b)) {
                return Err(WorldError::Invalid(format!("{label} crosses the boundary")));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn bounds(&self) -> &[Segment] {
        &self.bounds
    }

    pub fn obstacles(&self) -> &[Obstacle] {
        &self.obstacles
    }

    pub fn spawn_region(&self) -> Rect {
        self.spawn_region
    }

    pub fn goal_region(&self) -> Rect {
        self.goal_region
    }

    /// Whether `p` lies inside the boundary polygon.
    pub fn contains(&self, p: Vec2) -> bool {
        point_in_polygon(p, self.bounds.iter().copied())
    }

    /// Axis-aligned bounding box of the boundary.
    pub fn bounding_box(&self) -> Rect {
        let mut min = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for s in &self.bounds {
            for p in [s.a, s.b] {
                min = Vec2::new(min.x.min(p.x), min.y.min(p.y));
                max = Vec2::new(max.x.max(p.x), max.y.max(p.y));
            }
        }
        Rect { min, max }
    }

    /// Length of the bounding-box diagonal.
    pub fn diagonal(&self) -> f64 {
        let bb = self.bounding_box();
        bb.max.distance(bb.min)
    }

    /// Distance from `origin` along `angle` to the first boundary or obstacle hit,
    /// clipped to `max_range`.
    pub fn ray_cast(&self, origin: Vec2, angle: f64, max_range: f64) -> Result<f64, WorldError> {
        if !(max_range.is_finite() && max_range > 0.0) {
            return Err(WorldError::BadRange(max_range));
        }
        if !origin.is_finite() || !self.contains(origin) {
            return Err(WorldError::OutsideBounds { x: origin.x, y: origin.y });
        }
        Ok(self.ray_cast_unchecked(origin, angle, max_range))
    }

    pub(crate) fn ray_cast_unchecked(&self, origin: Vec2, angle: f64, max_range: f64) -> f64 {
        let dir = Vec2::from_angle(angle);
        let walls = self.bounds.iter().filter_map(|s| s.ray_hit(origin, dir));
        let obstacles = self.obstacles.iter().filter_map(|o| o.ray_hit(origin, dir));
        walls.chain(obstacles).fold(max_range, f64::min)
    }

    /// Clearance from `point` to the nearest wall or obstacle (zero inside a solid obstacle).
    pub fn min_obstacle_distance(&self, point: Vec2) -> f64 {
        let walls = self.bounds.iter().map(|s| s.distance_to(point));
        let obstacles = self.obstacles.iter().map(|o| o.distance_to(point));
        walls.chain(obstacles).fold(f64::INFINITY, f64::min)
    }

    /// Boundary vertices in traversal order.
    pub fn boundary_vertices(&self) -> Vec<Vec2> {
        // Validation guarantees a single closed loop, so chaining by endpoint always succeeds.
        let mut remaining: Vec<Segment> = self.bounds[1..].to_vec();
        let mut out = vec![self.bounds[0].a];
        let mut cursor = self.bounds[0].b;
        while !remaining.is_empty() {
            out.push(cursor);
            let idx = remaining
                .iter()
                .position(|s| s.a.approx_eq(cursor) || s.b.approx_eq(cursor))
                .expect("validated boundary is a closed loop");
            let s = remaining.swap_remove(idx);
            cursor = if s.a.approx_eq(cursor) { s.b } else { s.a };
        }
        out
    }

    /// Rotates every element about the origin. Regions are replaced by `region`
    /// since a rotated rectangle is no longer axis-aligned.
    pub fn rotated(&self, angle: f64, region: Rect) -> Result<World, WorldError> {
        World::new(
            self.name.clone(),
            self.bounds.iter().map(|s| s.rotated(angle)).collect(),
            self.obstacles.iter().map(|o| o.rotated(angle)).collect(),
            region,
            region,
        )
    }
}

fn check_closed(bounds: &[Segment]) -> Result<(), WorldError> {
    if bounds.len() < 3 {
        return Err(WorldError::Invalid("bounds need at least 3 segments".into()));
    }
    for s in bounds {
        Segment::new(s.a, s.b)?;
    }
    let endpoints: Vec<Vec2> = bounds.iter().flat_map(|s| [s.a, s.b]).collect();
    for p in &endpoints {
        let shared = endpoints.iter().filter(|q| q.approx_eq(*p)).count();
        if shared != 2 {
            return Err(WorldError::Invalid(format!(
                "boundary vertex {p} is shared by {shared} segment endpoints; the boundary is not closed"
            )));
        }
    }
    // Each vertex having degree two can still mean several disjoint loops.
    let mut visited = 1;
    let mut prev = 0;
    let mut cursor = bounds[0].b;
    loop {
        let next = (0..bounds.len())
            .find(|&i| i != prev && (bounds[i].a.approx_eq(cursor) || bounds[i].b.approx_eq(cursor)))
            .expect("degree-two vertices always continue");
        if next == 0 {
            break;
        }
        visited += 1;
        cursor = if bounds[next].a.approx_eq(cursor) { bounds[next].b } else { bounds[next].a };
        prev = next;
    }
    if visited != bounds.len() {
        return Err(WorldError::Invalid("boundary consists of more than one loop".into()));
    }
    Ok(())
}

/// Side length of every builtin arena.
pub const ARENA_SIDE: f64 = 4.0;

fn square(center: Vec2, width: f64, height: f64) -> Obstacle {
    let (hw, hh) = (width / 2.0, height / 2.0);
    Obstacle::Polygon(vec![
        Vec2::new(center.x - hw, center.y - hh),
        Vec2::new(center.x + hw, center.y - hh),
        Vec2::new(center.x + hw, center.y + hh),
        Vec2::new(center.x - hw, center.y + hh),
    ])
}

/// One of the three evaluation arenas: 1 is empty, 2 has four small square
/// blocks, 3 mixes long rectangular walls with round posts.
pub fn builtin_scenario(id: u32) -> Result<World, WorldError> {
    let h = ARENA_SIDE / 2.0;
    let vertices = [Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)];
    let region = Rect::new(-1.6, -1.6, 1.6, 1.6)?;
    let (name, obstacles) = match id {
        1 => ("stage-1", vec![]),
        2 => (
            "stage-2",
            [(-0.6, -0.6), (0.6, -0.6), (0.6, 0.6), (-0.6, 0.6)]
                .into_iter()
                .map(|(x, y)| square(Vec2::new(x, y), 0.3, 0.3))
                .collect(),
        ),
        3 => (
            "stage-3",
            vec![
                square(Vec2::new(0.0, 0.8), 0.8, 0.2),
                square(Vec2::new(0.0, -0.8), 0.8, 0.2),
                Obstacle::Circle(Circle::new(Vec2::new(-0.8, 0.0), 0.2)?),
                Obstacle::Circle(Circle::new(Vec2::new(0.8, 0.0), 0.2)?),
            ],
        ),
        other => return Err(WorldError::UnknownScenario(other)),
    };
    World::from_vertices(name, &vertices, obstacles, region, region)
}
