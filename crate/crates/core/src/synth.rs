//! Synthetic colored shapes and graded distortions, for tests, the acceptance
//! suite and benchmarks where no real database is at hand.

use std::f32::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::model_io::{PointCloud, TexturedMesh, Triangle, Vec3};
use crate::raster::{Raster, Rgb};
use crate::sampling::SeededRng;

pub const SHAPE_COUNT: usize = 10;
pub const DISTORTION_LEVELS: usize = 6;

const SHAPE_NAMES: [&str; SHAPE_COUNT] = [
    "sphere", "cube", "torus", "cylinder", "cone", "ellipsoid", "octahedron", "capsule", "dumbbell", "bumpy",
];

pub fn shape_name(index: usize) -> &'static str {
    SHAPE_NAMES[index % SHAPE_COUNT]
}

fn unit_sphere(rng: &mut SeededRng) -> Vec3 {
    let z: f32 = rng.random_range(-1.0..1.0);
    let t: f32 = rng.random_range(0.0..2.0 * PI);
    let r = (1.0 - z * z).sqrt();
    [r * t.cos(), r * t.sin(), z]
}

fn surface_point(shape: usize, rng: &mut SeededRng) -> Vec3 {
    match shape {
        0 => unit_sphere(rng),
        1 => {
            let face = rng.random_range(0..6);
            let (a, b): (f32, f32) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            let s = if face % 2 == 0 { 1.0 } else { -1.0 };
            match face / 2 {
                0 => [s, a, b],
                1 => [a, s, b],
                _ => [a, b, s],
            }
        }
        2 => {
            let (u, v): (f32, f32) = (rng.random_range(0.0..2.0 * PI), rng.random_range(0.0..2.0 * PI));
            let (big, small) = (0.7, 0.3);
            [(big + small * v.cos()) * u.cos(), (big + small * v.cos()) * u.sin(), small * v.sin()]
        }
        3 => {
            let t: f32 = rng.random_range(0.0..2.0 * PI);
            let pick: f32 = rng.random_range(0.0..1.0);
            if pick < 0.6 {
                [0.6 * t.cos(), rng.random_range(-1.0..1.0), 0.6 * t.sin()]
            } else {
                let r = 0.6 * rng.random_range(0.0f32..1.0).sqrt();
                let y = if pick < 0.8 { 1.0 } else { -1.0 };
                [r * t.cos(), y, r * t.sin()]
            }
        }
        4 => {
            let t: f32 = rng.random_range(0.0..2.0 * PI);
            if rng.random_range(0.0f32..1.0) < 0.75 {
                let h = 1.0 - rng.random_range(0.0f32..1.0).sqrt();
                let r = 0.8 * (1.0 - h);
                [r * t.cos(), 2.0 * h - 1.0, r * t.sin()]
            } else {
                let r = 0.8 * rng.random_range(0.0f32..1.0).sqrt();
                [r * t.cos(), -1.0, r * t.sin()]
            }
        }
        5 => {
            let p = unit_sphere(rng);
            [p[0], 0.55 * p[1], 0.8 * p[2]]
        }
        6 => {
            let (a, b): (f32, f32) = (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let (a, b) = if a + b > 1.0 { (1.0 - a, 1.0 - b) } else { (a, b) };
            let c = 1.0 - a - b;
            let sign = |r: &mut SeededRng| if r.random_bool(0.5) { 1.0 } else { -1.0 };
            [a * sign(rng), b * sign(rng), c * sign(rng)]
        }
        7 => {
            if rng.random_range(0.0f32..1.0) < 0.5 {
                let t: f32 = rng.random_range(0.0..2.0 * PI);
                [0.5 * t.cos(), rng.random_range(-0.5..0.5), 0.5 * t.sin()]
            } else {
                let p = unit_sphere(rng);
                let shift = if p[1] >= 0.0 { 0.5 } else { -0.5 };
                [0.5 * p[0], 0.5 * p[1] + shift, 0.5 * p[2]]
            }
        }
        8 => {
            let p = unit_sphere(rng);
            let shift = if rng.random_bool(0.5) { 0.55 } else { -0.55 };
            [0.45 * p[0] + shift, 0.45 * p[1], 0.45 * p[2]]
        }
        _ => {
            let p = unit_sphere(rng);
            let theta = p[2].acos();
            let phi = p[1].atan2(p[0]);
            let r = 1.0 + 0.15 * (5.0 * theta).sin() * (5.0 * phi).sin();
            [r * p[0], r * p[1], r * p[2]]
        }
    }
}

/// Smooth position-dependent coloring, different per shape.
fn shape_color(shape: usize, p: Vec3) -> Rgb {
    let k = shape as f32;
    let f = 2.0 + 0.5 * k;
    [
        0.5 + 0.35 * (f * p[0] + 0.7 * k).sin(),
        0.5 + 0.35 * (f * p[1] + 1.3 * k + 1.0).sin(),
        0.5 + 0.35 * (f * p[2] + 2.1 * k + 2.0).sin(),
    ]
}

/// Reference shape `index` (modulo [`SHAPE_COUNT`]) sampled with `points`
/// surface points.
pub fn reference_shape(index: usize, points: usize, seed: u64) -> PointCloud {
    let shape = index % SHAPE_COUNT;
    let mut rng = SeededRng::new(seed);
    let positions: Vec<Vec3> = (0..points.max(1)).map(|_| surface_point(shape, &mut rng)).collect();
    let colors = positions.iter().map(|&p| shape_color(shape, p)).collect();
    PointCloud::new(positions, colors).expect("synthetic shapes are finite")
}

/// Distortion `level` (0 = pristine, 5 = worst): geometry jitter, color noise
/// and point dropping, all growing with the level.
pub fn distort(cloud: &PointCloud, level: usize, seed: u64) -> PointCloud {
    if level == 0 {
        return cloud.clone();
    }
    let l = level as f32;
    let mut rng = SeededRng::new(seed);
    let keep = (1.0 - 0.13 * l).max(0.05) as f64;
    let geo = Normal::new(0.0f32, 0.004 * l).expect("positive sigma");
    let col = Normal::new(0.0f32, 0.05 * l).expect("positive sigma");
    let mut positions = Vec::new();
    let mut colors = Vec::new();
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        if !rng.random_bool(keep) {
            continue;
        }
        positions.push([p[0] + geo.sample(&mut rng), p[1] + geo.sample(&mut rng), p[2] + geo.sample(&mut rng)]);
        colors.push([
            (c[0] + col.sample(&mut rng)).clamp(0.0, 1.0),
            (c[1] + col.sample(&mut rng)).clamp(0.0, 1.0),
            (c[2] + col.sample(&mut rng)).clamp(0.0, 1.0),
        ]);
    }
    if positions.is_empty() {
        positions.push(cloud.positions()[0]);
        colors.push(cloud.colors()[0]);
    }
    PointCloud::new(positions, colors).expect("distortion keeps values finite")
}

/// Synthetic quality dataset: every reference shape at every distortion
/// level, as `(id, group, label, cloud)` with label = 5 - level.
pub fn graded_dataset(shapes: usize, points: usize, seed: u64) -> Vec<(String, String, f64, PointCloud)> {
    let mut out = Vec::with_capacity(shapes * DISTORTION_LEVELS);
    for s in 0..shapes {
        let reference = reference_shape(s, points, seed.wrapping_add(s as u64));
        for level in 0..DISTORTION_LEVELS {
            let d = distort(&reference, level, seed ^ ((s * 31 + level) as u64 + 1));
            out.push((
                format!("{}-{s}-L{level}", shape_name(s)),
                format!("ref{s}"),
                (DISTORTION_LEVELS - 1 - level) as f64,
                d,
            ));
        }
    }
    out
}

/// Surface voxels of an `n` x `n` x `n` cube, all one color.
pub fn voxel_cube(n: usize, color: Rgb) -> PointCloud {
    let mut positions = Vec::new();
    let last = n.saturating_sub(1);
    for x in 0..n {
        for y in 0..n {
            for z in 0..n {
                if x == 0 || y == 0 || z == 0 || x == last || y == last || z == last {
                    positions.push([x as f32, y as f32, z as f32]);
                }
            }
        }
    }
    let colors = vec![color; positions.len()];
    PointCloud::new(positions, colors).expect("voxel cube is non-empty")
}

/// `n` points uniformly inside the unit cube with random colors.
pub fn random_cloud(n: usize, seed: u64) -> PointCloud {
    let mut rng = SeededRng::new(seed);
    let positions: Vec<Vec3> = (0..n.max(1))
        .map(|_| [rng.random(), rng.random(), rng.random()])
        .collect();
    let colors = (0..positions.len()).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
    PointCloud::new(positions, colors).expect("finite")
}

/// `n` points on a unit sphere sharing one color.
pub fn uniform_color_sphere(n: usize, color: Rgb, seed: u64) -> PointCloud {
    let mut rng = SeededRng::new(seed);
    let positions: Vec<Vec3> = (0..n.max(1)).map(|_| unit_sphere(&mut rng)).collect();
    let colors = vec![color; positions.len()];
    PointCloud::new(positions, colors).expect("finite")
}

/// Axis-aligned cube spanning [-1, 1]^3 with every face mapped to the whole
/// `texture`.
pub fn textured_cube(texture: Raster) -> TexturedMesh {
    let mut vertices = Vec::new();
    let uvs = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
    let mut faces = Vec::new();
    for axis in 0..3 {
        for s in [-1.0f32, 1.0] {
            let base = vertices.len() as u32;
            for (a, b) in [(-1.0f32, -1.0f32), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                let mut p = [0.0; 3];
                p[axis] = s;
                p[(axis + 1) % 3] = a;
                p[(axis + 2) % 3] = b;
                vertices.push(p);
            }
            faces.push(Triangle {
                vertices: [base, base + 1, base + 2],
                uvs: [0, 1, 2],
            });
            faces.push(Triangle {
                vertices: [base, base + 2, base + 3],
                uvs: [0, 2, 3],
            });
        }
    }
    TexturedMesh::new(vertices, uvs, faces, texture).expect("cube indices are in range")
}
