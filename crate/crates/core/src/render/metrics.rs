//! Image fidelity metrics on `[0, 1]` RGB images.

use crate::error::{Error, Result};
use crate::types::ImageBuffer;

/// Reported PSNR for identical images, and the ceiling for all others.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

fn check_same_shape(a: &ImageBuffer, b: &ImageBuffer) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(Error::Shape(format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)));
    }
    Ok(())
}

pub fn mse(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same_shape(a, b)?;
    let n = (a.pixels.len() * 3) as f64;
    let sum: f64 = a
        .pixels
        .iter()
        .flatten()
        .zip(b.pixels.iter().flatten())
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(sum / n)
}

/// `10·log10(1 / MSE)` with peak 1, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut w = [0.0; SSIM_WINDOW];
    for (i, v) in w.iter_mut().enumerate() {
        let d = i as f64 - half;
        *v = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.map(|v| v / s)
}

/// Separable "valid" filtering of a `width × height` plane.
fn filter_valid(plane: &[f64], width: usize, height: usize, w: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut horiz = vec![0.0; ow * height];
    for y in 0..height {
        for x in 0..ow {
            horiz[y * ow + x] = (0..SSIM_WINDOW).map(|k| w[k] * plane[y * width + x + k]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..SSIM_WINDOW).map(|k| w[k] * horiz[(y + k) * ow + x]).sum();
        }
    }
    out
}

/// Mean local SSIM over an 11×11 Gaussian window (σ = 1.5), computed per
/// channel and averaged.
pub fn ssim(a: &ImageBuffer, b: &ImageBuffer) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(Error::Shape(format!("image {}x{} smaller than the {SSIM_WINDOW}px window", a.width, a.height)));
    }
    let w = gaussian_window();
    let (width, height) = (a.width, a.height);
    let mut total = 0.0;
    for ch in 0..3 {
        let pa: Vec<f64> = a.pixels.iter().map(|p| p[ch]).collect();
        let pb: Vec<f64> = b.pixels.iter().map(|p| p[ch]).collect();
        let aa: Vec<f64> = pa.iter().map(|v| v * v).collect();
        let bb: Vec<f64> = pb.iter().map(|v| v * v).collect();
        let ab: Vec<f64> = pa.iter().zip(&pb).map(|(x, y)| x * y).collect();
        let mu_a = filter_valid(&pa, width, height, &w);
        let mu_b = filter_valid(&pb, width, height, &w);
        let e_aa = filter_valid(&aa, width, height, &w);
        let e_bb = filter_valid(&bb, width, height, &w);
        let e_ab = filter_valid(&ab, width, height, &w);
        let n = mu_a.len() as f64;
        let sum: f64 = (0..mu_a.len())
            .map(|i| {
                let (ma, mb) = (mu_a[i], mu_b[i]);
                let var_a = e_aa[i] - ma * ma;
                let var_b = e_bb[i] - mb * mb;
                let cov = e_ab[i] - ma * mb;
                ((2.0 * ma * mb + SSIM_C1) * (2.0 * cov + SSIM_C2))
                    / ((ma * ma + mb * mb + SSIM_C1) * (var_a + var_b + SSIM_C2))
            })
            .sum();
        total += sum / n;
    }
    Ok(total / 3.0)
}
