//! TOML world files.
//!
//! ```toml
//! name = "room"
//! bounds = [[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]]
//! segments = [[[0.0, 0.5], [0.5, 0.5]]]
//! circles = [[1.0, 1.0, 0.2]]
//! polygons = [[[-1.0, -1.0], [-0.7, -1.0], [-0.7, -0.7]]]
//! spawn_region = [-1.5, -1.5, 1.5, 1.5]
//! goal_region = [-1.5, -1.5, 1.5, 1.5]
//! ```
//!
//! `bounds` is normally a vertex list closed implicitly. A list of explicit
//! `[[x1, y1], [x2, y2]]` segments is also accepted and must close on its own.

use serde::{Deserialize, Serialize};

use super::{Circle, Obstacle, Rect, Segment, Vec2, World, WorldError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BoundsSpec {
    Vertices(Vec<[f64; 2]>),
    Segments(Vec<[[f64; 2]; 2]>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldFile {
    pub name: String,
    pub bounds: BoundsSpec,
    #[serde(default)]
    pub segments: Vec<[[f64; 2]; 2]>,
    #[serde(default)]
    pub circles: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub polygons: Vec<Vec<[f64; 2]>>,
    pub spawn_region: [f64; 4],
    pub goal_region: [f64; 4],
}

fn v([x, y]: [f64; 2]) -> Vec2 {
    Vec2::new(x, y)
}

fn rect(label: &str, [a, b, c, d]: [f64; 4]) -> Result<Rect, WorldError> {
    Rect::new(a, b, c, d).map_err(|e| WorldError::Invalid(format!("{label}: {e}")))
}

impl WorldFile {
    pub fn into_world(self) -> Result<World, WorldError> {
        let mut obstacles = Vec::with_capacity(self.segments.len() + self.circles.len() + self.polygons.len());
        for (i, [a, b]) in self.segments.into_iter().enumerate() {
            let s = Segment::new(v(a), v(b)).map_err(|e| WorldError::Invalid(format!("segments[{i}]: {e}")))?;
            obstacles.push(Obstacle::Segment(s));
        }
        for (i, [cx, cy, r]) in self.circles.into_iter().enumerate() {
            let c = Circle::new(Vec2::new(cx, cy), r).map_err(|e| WorldError::Invalid(format!("circles[{i}]: {e}")))?;
            obstacles.push(Obstacle::Circle(c));
        }
        for poly in self.polygons {
            obstacles.push(Obstacle::Polygon(poly.into_iter().map(v).collect()));
        }
        let spawn = rect("spawn_region", self.spawn_region)?;
        let goal = rect("goal_region", self.goal_region)?;
        match self.bounds {
            BoundsSpec::Vertices(vs) => {
                let vs: Vec<Vec2> = vs.into_iter().map(v).collect();
                World::from_vertices(self.name, &vs, obstacles, spawn, goal)
            }
            BoundsSpec::Segments(ss) => {
                let segs = ss
                    .into_iter()
                    .enumerate()
                    .map(|(i, [a, b])| {
                        Segment::new(v(a), v(b)).map_err(|e| WorldError::Invalid(format!("bounds[{i}]: {e}")))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                World::new(self.name, segs, obstacles, spawn, goal)
            }
        }
    }

    pub fn from_world(world: &World) -> Self {
        let mut segments = Vec::new();
        let mut circles = Vec::new();
        let mut polygons = Vec::new();
        for o in world.obstacles() {
            match o {
                Obstacle::Segment(s) => segments.push([[s.a.x, s.a.y], [s.b.x, s.b.y]]),
                Obstacle::Circle(c) => circles.push([c.center.x, c.center.y, c.radius]),
                Obstacle::Polygon(vs) => polygons.push(vs.iter().map(|p| [p.x, p.y]).collect()),
            }
        }
        Self {
            name: world.name().to_owned(),
            bounds: BoundsSpec::Vertices(world.boundary_vertices().iter().map(|p| [p.x, p.y]).collect()),
            segments,
            circles,
            polygons,
            spawn_region: world.spawn_region().to_array(),
            goal_region: world.goal_region().to_array(),
        }
    }
}

/// Parses and validates a world file.
pub fn load_world(text: &str) -> Result<World, WorldError> {
    let file: WorldFile = toml::from_str(text).map_err(|e| WorldError::Parse(e.to_string()))?;
    file.into_world()
}

/// Serializes a world to the TOML world-file format.
pub fn save_world(world: &World) -> String {
    toml::to_string(&WorldFile::from_world(world)).expect("world files always serialize")
}
