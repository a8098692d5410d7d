//! Seeded synthetic scenes: dense colored surface samples, a uniform sparse
//! subset, and an outward-looking camera ring.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{self, PlyFormat};
use crate::render;
use crate::spatial::KdIndex;
use crate::types::{CameraView, ColoredPoint, GaussianPrimitive, ImageBuffer, Pose, Quat, Vec3};

pub const HEURISTIC_OPACITY: f64 = 0.8;
/// Horizontal field of view of every ring camera, in degrees.
pub const CAMERA_FOV_DEG: f64 = 90.0;
/// Ring cameras sit this high above the ground plane (y = 0, y up).
pub const CAMERA_HEIGHT: f64 = 1.5;
const MIN_HEURISTIC_SCALE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Layout {
    StreetCorridor,
    BoxRoom,
    RandomPrimitives,
}

impl Layout {
    pub const ALL: [Layout; 3] = [Layout::StreetCorridor, Layout::BoxRoom, Layout::RandomPrimitives];
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "street-corridor" => Ok(Layout::StreetCorridor),
            "box-room" => Ok(Layout::BoxRoom),
            "random-primitives" => Ok(Layout::RandomPrimitives),
            other => Err(Error::Config(format!(
                "unknown layout '{other}' (expected street-corridor, box-room or random-primitives)"
            ))),
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Layout::StreetCorridor => "street-corridor",
            Layout::BoxRoom => "box-room",
            Layout::RandomPrimitives => "random-primitives",
        })
    }
}

/// Number of procedural textures understood by [`SceneSpec::texture`].
pub const TEXTURE_COUNT: u32 = 3;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub seed: u64,
    pub layout: Layout,
    pub dense_count: usize,
    pub sparse_fraction: f64,
    pub camera_count: usize,
    pub ring_radius: f64,
    /// 0: checker, 1: stripes, 2: blotches.
    pub texture: u32,
    pub width: usize,
    pub height: usize,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            seed: 0,
            layout: Layout::BoxRoom,
            dense_count: 50_000,
            sparse_fraction: 0.05,
            camera_count: 12,
            ring_radius: 0.5,
            texture: 0,
            width: 160,
            height: 120,
        }
    }
}

impl SceneSpec {
    pub fn sparse_count(&self) -> usize {
        (self.sparse_fraction * self.dense_count as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sparse_fraction > 0.0 && self.sparse_fraction <= 1.0) {
            return Err(Error::Config(format!("sparse fraction must be in (0, 1], got {}", self.sparse_fraction)));
        }
        if self.sparse_count() < 4 {
            return Err(Error::Config(format!("scene would have {} sparse points; at least 4 needed", self.sparse_count())));
        }
        if self.camera_count < 2 {
            return Err(Error::Config("camera ring needs at least 2 cameras".into()));
        }
        if !(self.ring_radius >= 0.0 && self.ring_radius.is_finite()) {
            return Err(Error::Config("ring radius must be finite and non-negative".into()));
        }
        if self.texture >= TEXTURE_COUNT {
            return Err(Error::Config(format!("texture id must be below {TEXTURE_COUNT}")));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("image resolution must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub dense: Vec<ColoredPoint>,
    /// Ascending indices into `dense`.
    pub sparse_ids: Vec<usize>,
    pub sparse: Vec<ColoredPoint>,
    pub cameras: Vec<CameraView>,
}

#[derive(Debug, Clone, Copy)]
enum Surface {
    /// `origin + a·u + b·v` for `a, b ∈ [0, 1]`.
    Patch { origin: Vec3, u: Vec3, v: Vec3 },
    Sphere { center: Vec3, radius: f64 },
}

impl Surface {
    fn area(&self) -> f64 {
        match *self {
            Surface::Patch { u, v, .. } => u.cross(&v).norm(),
            Surface::Sphere { radius, .. } => 4.0 * std::f64::consts::PI * radius * radius,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec3 {
        match *self {
            Surface::Patch { origin, u, v } => origin + u * rng.gen::<f64>() + v * rng.gen::<f64>(),
            Surface::Sphere { center, radius } => {
                let z: f64 = rng.gen_range(-1.0..1.0);
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                center + Vec3::new(r * phi.cos(), z, r * phi.sin()) * radius
            }
        }
    }
}

fn patch(origin: [f64; 3], u: [f64; 3], v: [f64; 3]) -> Surface {
    Surface::Patch { origin: Vec3::from(origin), u: Vec3::from(u), v: Vec3::from(v) }
}

/// Axis-aligned box resting on the ground; the bottom face is omitted.
fn box_faces(min: Vec3, size: Vec3, out: &mut Vec<Surface>) {
    let (x, y, z) = (Vec3::new(size.x, 0.0, 0.0), Vec3::new(0.0, size.y, 0.0), Vec3::new(0.0, 0.0, size.z));
    for (o, u, v) in [(min, x, y), (min + z, x, y), (min, z, y), (min + x, z, y), (min + y, x, z)] {
        out.push(Surface::Patch { origin: o, u, v });
    }
}

fn layout_surfaces(layout: Layout, rng: &mut ChaCha8Rng) -> Vec<Surface> {
    match layout {
        Layout::BoxRoom => vec![
            patch([-5.0, 0.0, -5.0], [10.0, 0.0, 0.0], [0.0, 0.0, 10.0]),
            patch([-5.0, 3.0, -5.0], [10.0, 0.0, 0.0], [0.0, 0.0, 10.0]),
            patch([-5.0, 0.0, -5.0], [10.0, 0.0, 0.0], [0.0, 3.0, 0.0]),
            patch([-5.0, 0.0, 5.0], [10.0, 0.0, 0.0], [0.0, 3.0, 0.0]),
            patch([-5.0, 0.0, -5.0], [0.0, 0.0, 10.0], [0.0, 3.0, 0.0]),
            patch([5.0, 0.0, -5.0], [0.0, 0.0, 10.0], [0.0, 3.0, 0.0]),
        ],
        Layout::StreetCorridor => vec![
            patch([-4.0, 0.0, -25.0], [8.0, 0.0, 0.0], [0.0, 0.0, 50.0]),
            patch([-4.0, 0.0, -25.0], [0.0, 0.0, 50.0], [0.0, 8.0, 0.0]),
            patch([4.0, 0.0, -25.0], [0.0, 0.0, 50.0], [0.0, 8.0, 0.0]),
            patch([-4.0, 0.0, -25.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]),
            patch([-4.0, 0.0, 25.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]),
        ],
        Layout::RandomPrimitives => {
            let mut out = vec![patch([-9.0, 0.0, -9.0], [18.0, 0.0, 0.0], [0.0, 0.0, 18.0])];
            for _ in 0..12 {
                let angle = rng.gen_range(0.0..std::f64::consts::TAU);
                let dist = rng.gen_range(2.5..7.0);
                let base = Vec3::new(dist * angle.cos(), 0.0, dist * angle.sin());
                if rng.gen_bool(0.5) {
                    let radius = rng.gen_range(0.4..1.2);
                    out.push(Surface::Sphere { center: base + Vec3::new(0.0, radius, 0.0), radius });
                } else {
                    let size = Vec3::new(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.5), rng.gen_range(0.5..2.0));
                    box_faces(base - Vec3::new(size.x / 2.0, 0.0, size.z / 2.0), size, &mut out);
                }
            }
            out
        }
    }
}

fn hash_unit(a: i64, b: i64, c: i64, salt: u64) -> f64 {
    let mut h = (a as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (b as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
        ^ (c as u64).wrapping_mul(0x1656_67B1_9E37_79F9)
        ^ salt;
    h ^= h >> 33;
    h = h.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    h ^= h >> 33;
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// Procedural color of a surface point, in `[0.05, 0.95]`.
fn texture_color(texture: u32, surface: usize, p: &Vec3, base: &Vec3) -> Vec3 {
    let modulation = match texture {
        0 => {
            let cell = (p / 0.5).map(f64::floor);
            if (cell.x + cell.y + cell.z) as i64 % 2 == 0 { 1.0 } else { 0.45 }
        }
        1 => 0.7 + 0.3 * (p.x * 4.0 + p.y * 3.0 + p.z * 5.0).sin(),
        _ => {
            let cell = (p / 0.7).map(f64::floor);
            0.4 + 0.6 * hash_unit(cell.x as i64, cell.y as i64, cell.z as i64, surface as u64)
        }
    };
    (base * modulation).map(|c| c.clamp(0.05, 0.95))
}

/// Yaw of ring camera `k` in degrees, measured from +z toward +x.
pub fn camera_yaw_deg(k: usize, count: usize) -> f64 {
    360.0 * k as f64 / count as f64
}

pub fn camera_ring(spec: &SceneSpec) -> Result<Vec<CameraView>> {
    (0..spec.camera_count)
        .map(|k| {
            let yaw = camera_yaw_deg(k, spec.camera_count).to_radians();
            let forward = Vec3::new(yaw.sin(), 0.0, yaw.cos());
            let eye = Vec3::new(0.0, CAMERA_HEIGHT, 0.0) + forward * spec.ring_radius;
            let pose = Pose::look_at(eye, eye + forward, Vec3::new(0.0, 1.0, 0.0));
            CameraView::with_fov(pose, spec.width, spec.height, CAMERA_FOV_DEG)
        })
        .collect()
}

pub fn generate_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let surfaces = layout_surfaces(spec.layout, &mut rng);
    let bases: Vec<Vec3> = surfaces
        .iter()
        .map(|_| Vec3::new(rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0), rng.gen_range(0.2..1.0)))
        .collect();
    let chooser = WeightedIndex::new(surfaces.iter().map(Surface::area))
        .map_err(|e| Error::Config(format!("layout surfaces: {e}")))?;
    let dense: Vec<ColoredPoint> = (0..spec.dense_count)
        .map(|_| {
            let s = chooser.sample(&mut rng);
            let p = surfaces[s].sample(&mut rng);
            ColoredPoint::new(p, texture_color(spec.texture, s, &p, &bases[s]))
        })
        .collect();
    let mut sparse_ids = index::sample(&mut rng, spec.dense_count, spec.sparse_count()).into_vec();
    sparse_ids.sort_unstable();
    let sparse = sparse_ids.iter().map(|&i| dense[i]).collect();
    Ok(Scene { dense, sparse_ids, sparse, cameras: camera_ring(spec)? })
}

/// One isotropic primitive per point, sized by the mean distance to its
/// three nearest other points.
pub fn heuristic_gaussians(points: &[ColoredPoint]) -> Result<Vec<GaussianPrimitive>> {
    if points.len() < 4 {
        return Err(Error::InsufficientInput { required: 4, available: points.len() });
    }
    let positions: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let index = KdIndex::build(&positions)?;
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let found = index.knn(&p.position, 4)?;
            let dists: Vec<f64> = found.iter().filter(|n| n.id != i).take(3).map(|n| n.distance).collect();
            let scale = (dists.iter().sum::<f64>() / dists.len() as f64).max(MIN_HEURISTIC_SCALE);
            Ok(GaussianPrimitive {
                mean: p.position,
                scale: Vec3::repeat(scale),
                rotation: Quat::IDENTITY,
                opacity: HEURISTIC_OPACITY,
                color: p.color,
            })
        })
        .collect()
}

pub fn reference_images(gaussians: &[GaussianPrimitive], cameras: &[CameraView]) -> Vec<ImageBuffer> {
    cameras.iter().map(|c| render::render(gaussians, c)).collect()
}

pub const DENSE_FILE: &str = "dense.ply";
pub const SPARSE_FILE: &str = "sparse.ply";
pub const GT_FILE: &str = "gt_gaussians.ply";
pub const CAMERAS_FILE: &str = "cameras.txt";
pub const VIEWS_DIR: &str = "views";

pub fn view_file_name(k: usize) -> String {
    format!("{k:02}.ppm")
}

/// Writes the scene directory layout. Reference views are rendered from
/// `gt` as stored on disk, so they match what readers of the directory see.
pub fn write_scene_dir(dir: impl AsRef<Path>, scene: &Scene, gt: &[GaussianPrimitive]) -> Result<Vec<ImageBuffer>> {
    let dir = dir.as_ref();
    let views = dir.join(VIEWS_DIR);
    fs::create_dir_all(&views).map_err(|e| Error::io(&views, e))?;
    io::write_point_cloud(&scene.dense, dir.join(DENSE_FILE), PlyFormat::BinaryLittleEndian)?;
    io::write_point_cloud(&scene.sparse, dir.join(SPARSE_FILE), PlyFormat::BinaryLittleEndian)?;
    io::write_gaussians_3dgs_ply(gt, dir.join(GT_FILE))?;
    io::write_cameras(&scene.cameras, dir.join(CAMERAS_FILE))?;
    let stored_gt = io::read_gaussians_3dgs_ply(dir.join(GT_FILE))?;
    let images = reference_images(&stored_gt, &scene.cameras);
    for (k, img) in images.iter().enumerate() {
        io::write_ppm(img, views.join(view_file_name(k)))?;
    }
    Ok(images)
}
