//! CPU splatting renderer.
//!
//! Each primitive is projected to a 2D Gaussian footprint (first-order
//! covariance propagation through the pinhole projection), splats are
//! sorted front to back, and every pixel composites
//! `C = Σ cᵢ αᵢ Πⱼ<ᵢ (1 − αⱼ)` with `αᵢ = opacityᵢ · G₂ᵢ(pixel)`.
//! Pixel `(x, y)` samples image-plane coordinate `(x, y)`.

pub mod metrics;

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::types::{CameraView, GaussianPrimitive, ImageBuffer, Mat3, Vec3};

pub use metrics::{psnr, ssim, PSNR_CAP_DB};

/// Splats closer than this camera-space depth are culled.
pub const NEAR_PLANE: f64 = 0.01;
/// Added to the footprint diagonal (pixel²) before inversion.
pub const LOW_PASS_FLOOR: f64 = 0.3;
/// Compositing stops once transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Footprints are rasterized over a box of this many standard deviations.
pub const EXTENT_SIGMAS: f64 = 3.0;
/// Splats whose mean lies outside the frustum widened by this factor
/// (per side, in tangent space) are culled.
const FRUSTUM_GUARD: f64 = 1.3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplattedGaussian {
    pub pixel_mean: [f64; 2],
    /// Projected covariance `J·W·Σ·Wᵀ·Jᵀ` in pixel², before the low-pass floor.
    pub cov2d: [[f64; 2]; 2],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
}

impl SplattedGaussian {
    /// Covariance actually rasterized: `cov2d` plus the low-pass floor.
    pub fn footprint(&self) -> [[f64; 2]; 2] {
        let c = self.cov2d;
        [[c[0][0] + LOW_PASS_FLOOR, c[0][1]], [c[1][0], c[1][1] + LOW_PASS_FLOOR]]
    }

    /// Inverse footprint as `(a, b, c)` for `a·dx² + 2b·dx·dy + c·dy²`.
    fn conic(&self) -> Option<[f64; 3]> {
        let f = self.footprint();
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        (det > 0.0 && det.is_finite()).then(|| [f[1][1] / det, -f[0][1] / det, f[0][0] / det])
    }

    fn radius(&self) -> f64 {
        let f = self.footprint();
        let mid = 0.5 * (f[0][0] + f[1][1]);
        let det = f[0][0] * f[1][1] - f[0][1] * f[1][0];
        let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
        (EXTENT_SIGMAS * lambda_max.sqrt()).ceil()
    }

    /// Opacity contribution at pixel `(x, y)`; zero outside the raster box.
    pub fn alpha_at(&self, x: f64, y: f64) -> f64 {
        let Some([a, b, c]) = self.conic() else { return 0.0 };
        let r = self.radius();
        let [mx, my] = self.pixel_mean;
        if x < (mx - r).floor() || x > (mx + r).ceil() || y < (my - r).floor() || y > (my + r).ceil() {
            return 0.0;
        }
        let (dx, dy) = (x - mx, y - my);
        let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
        if power > 0.0 {
            return 0.0;
        }
        self.opacity * power.exp()
    }
}

/// Projects a primitive into `view`; `None` when it lies behind the near
/// plane or outside the guard band around the frustum.
pub fn project(primitive: &GaussianPrimitive, view: &CameraView) -> Option<SplattedGaussian> {
    let w = &view.pose.rotation;
    let t = view.pose.transform(&primitive.mean);
    if !(t.z > NEAR_PLANE) {
        return None;
    }
    let k = &view.intrinsics;
    let u = k.fx * t.x / t.z + k.cx;
    let v = k.fy * t.y / t.z + k.cy;

    // Far outside the frustum the linearized footprint is meaningless and
    // near-plane splats would smear across the whole image.
    let (tx, ty) = (t.x / t.z, t.y / t.z);
    let (w_px, h_px) = (view.width as f64, view.height as f64);
    if tx < -FRUSTUM_GUARD * k.cx / k.fx
        || tx > FRUSTUM_GUARD * (w_px - k.cx) / k.fx
        || ty < -FRUSTUM_GUARD * k.cy / k.fy
        || ty > FRUSTUM_GUARD * (h_px - k.cy) / k.fy
    {
        return None;
    }
    let jac = nalgebra::Matrix2x3::new(
        k.fx / t.z,
        0.0,
        -k.fx * tx / t.z,
        0.0,
        k.fy / t.z,
        -k.fy * ty / t.z,
    );
    let sigma: Mat3 = primitive.covariance().ok()?;
    let cov = jac * (w * sigma * w.transpose()) * jac.transpose();
    let off = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    Some(SplattedGaussian {
        pixel_mean: [u, v],
        cov2d: [[cov[(0, 0)], off], [off, cov[(1, 1)]]],
        depth: t.z,
        opacity: primitive.opacity,
        color: [primitive.color.x, primitive.color.y, primitive.color.z],
    })
}

/// Projects and sorts front to back. Equal depths fall back to comparing
/// the primitives' attributes so the order never depends on input order.
pub fn project_sorted(primitives: &[GaussianPrimitive], view: &CameraView) -> Vec<SplattedGaussian> {
    let mut splats: Vec<(SplattedGaussian, [f64; 14])> = primitives
        .par_iter()
        .filter_map(|p| project(p, view).map(|s| (s, p.to_array())))
        .collect();
    splats.sort_by(|a, b| {
        a.0.depth.total_cmp(&b.0.depth).then_with(|| {
            a.1.iter().zip(b.1.iter()).map(|(x, y)| x.total_cmp(y)).find(|o| *o != Ordering::Equal).unwrap_or(Ordering::Equal)
        })
    });
    splats.into_iter().map(|(s, _)| s).collect()
}

/// Reference per-pixel compositor over depth-sorted splats. Returns the
/// color and each splat's blending weight `αᵢ Πⱼ<ᵢ(1−αⱼ)`.
pub fn composite_pixel(sorted: &[SplattedGaussian], x: f64, y: f64) -> ([f64; 3], Vec<f64>) {
    let mut color = [0.0; 3];
    let mut weights = vec![0.0; sorted.len()];
    let mut transmittance = 1.0;
    for (s, w) in sorted.iter().zip(weights.iter_mut()) {
        let alpha = s.alpha_at(x, y);
        if alpha <= 0.0 {
            continue;
        }
        *w = alpha * transmittance;
        for c in 0..3 {
            color[c] += s.color[c] * *w;
        }
        transmittance *= 1.0 - alpha;
        if transmittance < MIN_TRANSMITTANCE {
            break;
        }
    }
    (color, weights)
}

struct RasterSplat {
    splat: SplattedGaussian,
    conic: [f64; 3],
    x0: usize,
    x1: usize,
}

pub fn render(primitives: &[GaussianPrimitive], view: &CameraView) -> ImageBuffer {
    render_splats(&project_sorted(primitives, view), view.width, view.height)
}

/// Rasterizes depth-sorted splats. Rows are independent and processed in
/// parallel; within a row, splats are visited front to back.
pub fn render_splats(sorted: &[SplattedGaussian], width: usize, height: usize) -> ImageBuffer {
    let mut rows: Vec<Vec<u32>> = vec![Vec::new(); height];
    let mut raster = Vec::with_capacity(sorted.len());
    for s in sorted {
        let Some(conic) = s.conic() else { continue };
        let r = s.radius();
        let [mx, my] = s.pixel_mean;
        let (xa, xb) = ((mx - r).floor(), (mx + r).ceil());
        let (ya, yb) = ((my - r).floor(), (my + r).ceil());
        if xb < 0.0 || ya > (height - 1) as f64 || yb < 0.0 || xa > (width - 1) as f64 || !(xa.is_finite() && yb.is_finite()) {
            continue;
        }
        let id = raster.len() as u32;
        let (y0, y1) = (ya.max(0.0) as usize, yb.min((height - 1) as f64) as usize);
        raster.push(RasterSplat { splat: *s, conic, x0: xa.max(0.0) as usize, x1: xb.min((width - 1) as f64) as usize });
        for row in &mut rows[y0..=y1] {
            row.push(id);
        }
    }

    let mut pixels = vec![[0.0; 3]; width * height];
    pixels.par_chunks_mut(width).zip(rows.par_iter()).enumerate().for_each(|(y, (out, ids))| {
        let mut transmittance = vec![1.0f64; width];
        let yf = y as f64;
        for &id in ids {
            let rs = &raster[id as usize];
            let [a, b, c] = rs.conic;
            let [mx, my] = rs.splat.pixel_mean;
            let dy = yf - my;
            for x in rs.x0..=rs.x1 {
                let t = transmittance[x];
                if t < MIN_TRANSMITTANCE {
                    continue;
                }
                let dx = x as f64 - mx;
                let power = -0.5 * (a * dx * dx + 2.0 * b * dx * dy + c * dy * dy);
                if power > 0.0 {
                    continue;
                }
                let alpha = rs.splat.opacity * power.exp();
                if alpha <= 0.0 {
                    continue;
                }
                let w = alpha * t;
                for ch in 0..3 {
                    out[x][ch] += rs.splat.color[ch] * w;
                }
                transmittance[x] = t * (1.0 - alpha);
            }
        }
        for px in out.iter_mut() {
            for ch in px.iter_mut() {
                *ch = ch.clamp(0.0, 1.0);
            }
        }
    });
    ImageBuffer { width, height, pixels }
}

/// Camera-space position of a world point, for callers that need depth.
pub fn to_camera(view: &CameraView, p: &Vec3) -> Vec3 {
    view.pose.transform(p)
}
