//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use qnav::world::{Circle, Obstacle, Rect, Segment};
use qnav::{Mlp, Vec2, World};
use rand::Rng;

pub const MARCH_STEP: f64 = 1e-4;

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

/// Proper or touching intersection of segments `p0p1` and `q0q1`.
pub fn crosses(p0: Vec2, p1: Vec2, q0: Vec2, q1: Vec2) -> bool {
    let d1 = orient(q0, q1, p0);
    let d2 = orient(q0, q1, p1);
    let d3 = orient(p0, p1, q0);
    let d4 = orient(p0, p1, q1);
    (d1 * d2 <= 0.0) && (d3 * d4 <= 0.0) && !(d1 == 0.0 && d2 == 0.0 && d3 == 0.0 && d4 == 0.0)
}

fn edges(world: &World) -> Vec<(Vec2, Vec2)> {
    let mut out: Vec<(Vec2, Vec2)> = world.bounds().iter().map(|s| (s.a, s.b)).collect();
    for o in world.obstacles() {
        match o {
            Obstacle::Segment(s) => out.push((s.a, s.b)),
            Obstacle::Polygon(v) => {
                for i in 0..v.len() {
                    out.push((v[i], v[(i + 1) % v.len()]));
                }
            }
            Obstacle::Circle(_) => {}
        }
    }
    out
}

fn circles(world: &World) -> Vec<(Vec2, f64)> {
    world
        .obstacles()
        .iter()
        .filter_map(|o| match o {
            Obstacle::Circle(c) => Some((c.center, c.radius)),
            _ => None,
        })
        .collect()
}

/// Walks the ray in fixed increments and reports the first increment that
/// crosses an edge or lands inside a circle.
pub fn march(world: &World, origin: Vec2, angle: f64, max_range: f64) -> f64 {
    let (dx, dy) = (angle.cos(), angle.sin());
    let edges = edges(world);
    let circles = circles(world);
    let n = (max_range / MARCH_STEP).ceil() as usize;
    let mut prev = origin;
    for k in 1..=n {
        let t = (k as f64 * MARCH_STEP).min(max_range);
        let p = Vec2::new(origin.x + t * dx, origin.y + t * dy);
        let hit_edge = edges.iter().any(|&(a, b)| crosses(prev, p, a, b));
        let hit_circle = circles.iter().any(|&(c, r)| (p.x - c.x).hypot(p.y - c.y) <= r);
        if hit_edge || hit_circle {
            return t;
        }
        prev = p;
    }
    max_range
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let (abx, aby) = (b.x - a.x, b.y - a.y);
    let t = (((p.x - a.x) * abx + (p.y - a.y) * aby) / (abx * abx + aby * aby)).clamp(0.0, 1.0);
    (p.x - a.x - t * abx).hypot(p.y - a.y - t * aby)
}

/// Distance to the nearest edge or circle rim.
pub fn surface_distance(world: &World, p: Vec2) -> f64 {
    let e = edges(world).into_iter().map(|(a, b)| point_segment_distance(p, a, b));
    let c = circles(world).into_iter().map(|(c, r)| ((p.x - c.x).hypot(p.y - c.y) - r).abs());
    e.chain(c).fold(f64::INFINITY, f64::min)
}

/// Whether `p` lies inside a circle or polygon obstacle (crossing-number test
/// written independently of the library).
pub fn inside_solid(world: &World, p: Vec2) -> bool {
    world.obstacles().iter().any(|o| match o {
        Obstacle::Circle(c) => (p.x - c.center.x).hypot(p.y - c.center.y) < c.radius,
        Obstacle::Polygon(v) => {
            let mut inside = false;
            let mut j = v.len() - 1;
            for i in 0..v.len() {
                let (a, b) = (v[i], v[j]);
                if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
                    inside = !inside;
                }
                j = i;
            }
            inside
        }
        Obstacle::Segment(_) => false,
    })
}

/// Square arena of half-width `h` with a handful of random obstacles.
pub fn random_world<R: Rng>(rng: &mut R) -> World {
    let h = rng.gen_range(1.0..3.0);
    let vertices = [Vec2::new(-h, -h), Vec2::new(h, -h), Vec2::new(h, h), Vec2::new(-h, h)];
    let mut obstacles = Vec::new();
    let inner = h * 0.9;
    for _ in 0..rng.gen_range(0..7) {
        let c = Vec2::new(rng.gen_range(-inner..inner), rng.gen_range(-inner..inner));
        match rng.gen_range(0..3) {
            0 => obstacles.push(Obstacle::Circle(Circle::new(c, rng.gen_range(0.05..0.5)).unwrap())),
            1 => {
                let d = Vec2::new(rng.gen_range(-0.8..0.8), rng.gen_range(-0.8..0.8));
                if d.norm() > 1e-3 {
                    obstacles.push(Obstacle::Segment(Segment::new(c, c + d).unwrap()));
                }
            }
            _ => {
                let (w, l) = (rng.gen_range(0.05..0.6), rng.gen_range(0.05..0.6));
                let poly: Vec<Vec2> = [(-w, -l), (w, -l), (w, l), (-w, l)]
                    .iter()
                    .map(|&(x, y)| c + Vec2::new(x, y).rotated(rng.gen_range(0.0..6.3)))
                    .collect();
                obstacles.push(Obstacle::Polygon(poly));
            }
        }
    }
    let region = Rect::new(-h / 2.0, -h / 2.0, h / 2.0, h / 2.0).unwrap();
    World::from_vertices("random", &vertices, obstacles, region, region).unwrap()
}

/// A point strictly inside the arena, outside every solid and at least
/// `margin` from every surface.
pub fn free_point<R: Rng>(world: &World, margin: f64, rng: &mut R) -> Vec2 {
    let bb = world.bounding_box();
    loop {
        let p = Vec2::new(rng.gen_range(bb.min.x..bb.max.x), rng.gen_range(bb.min.y..bb.max.y));
        if world.contains(p) && !inside_solid(world, p) && surface_distance(world, p) > margin {
            return p;
        }
    }
}

/// Forward pass written with plain loops over the stored parameters.
#[allow(clippy::needless_range_loop)]
pub fn naive_forward(net: &Mlp, input: &[f64]) -> Vec<f64> {
    let layers = net.layers();
    let mut x = input.to_vec();
    for (li, layer) in layers.iter().enumerate() {
        let (rows, cols) = layer.weights.dim();
        let mut y = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = layer.bias[r];
            for c in 0..cols {
                acc += layer.weights[[r, c]] * x[c];
            }
            y[r] = if li + 1 < layers.len() { acc.max(0.0) } else { acc };
        }
        x = y;
    }
    x
}

/// Chi-square statistic of observed counts against a uniform distribution.
pub fn chi_square_uniform(counts: &[u64]) -> f64 {
    let total: u64 = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum()
}

/// Upper-tail critical value of the chi-square distribution.
pub fn chi_square_critical(dof: usize, alpha: f64) -> f64 {
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    ChiSquared::new(dof as f64).unwrap().inverse_cdf(1.0 - alpha)
}

/// Signs of every hidden pre-activation, used to detect when a perturbation
/// crosses a ReLU kink (where finite differences are meaningless).
pub fn relu_pattern(net: &Mlp, input: &[f64]) -> Vec<bool> {
    let layers = net.layers();
    let mut x = input.to_vec();
    let mut pattern = Vec::new();
    for layer in &layers[..layers.len() - 1] {
        let (rows, cols) = layer.weights.dim();
        x = (0..rows)
            .map(|r| {
                let z = layer.bias[r] + (0..cols).map(|c| layer.weights[[r, c]] * x[c]).sum::<f64>();
                pattern.push(z > 0.0);
                z.max(0.0)
            })
            .collect();
    }
    pattern
}

pub const FD_STEP: f64 = 1e-6;
/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const FD_FLOOR: f64 = 1e-3;

#[derive(Debug, Default, Clone, Copy)]
pub struct FdReport {
    pub checked: usize,
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
}

/// Compares analytic gradients of `(target - q[action])^2` with central
/// differences on the listed parameter indices.
pub fn finite_difference_check(net: &Mlp, input: &[f64], action: usize, target: f64, indices: &[usize]) -> FdReport {
    let (_, grads) = net.backward(input, action, target).unwrap();
    let analytic: Vec<f64> = grads.values().copied().collect();
    let loss = |n: &Mlp| {
        let q = naive_forward(n, input);
        (target - q[action]).powi(2)
    };
    let base = relu_pattern(net, input);
    let mut work = net.clone();
    let mut report = FdReport::default();
    for &i in indices {
        let original = *work.params().nth(i).unwrap();
        *work.params_mut().nth(i).unwrap() = original + FD_STEP;
        let (plus, kink_plus) = (loss(&work), relu_pattern(&work, input) != base);
        *work.params_mut().nth(i).unwrap() = original - FD_STEP;
        let (minus, kink_minus) = (loss(&work), relu_pattern(&work, input) != base);
        *work.params_mut().nth(i).unwrap() = original;
        if kink_plus || kink_minus {
            report.skipped_kinks += 1;
            continue;
        }
        let numeric = (plus - minus) / (2.0 * FD_STEP);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR);
        report.max_rel_error = report.max_rel_error.max(rel);
        report.checked += 1;
    }
    report
}

/// A random architecture with the navigation input and output widths.
pub fn random_small_dims<R: Rng>(rng: &mut R) -> Vec<usize> {
    let mut dims = vec![26];
    for _ in 0..rng.gen_range(1..=3) {
        dims.push(rng.gen_range(1..=16));
    }
    dims.push(5);
    dims
}
