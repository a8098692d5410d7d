//! Held-out view comparison of initialization strategies.

use std::fmt::{self, Write as _};
use std::time::Instant;

use crate::error::{Error, Result};
use crate::net::NetworkWeights;
use crate::render::{self, psnr, ssim};
use crate::synth::heuristic_gaussians;
use crate::train::predict_scene;
use crate::types::{CameraView, ColoredPoint, GaussianPrimitive, ImageBuffer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Strategy {
    SparseHeuristic,
    GsnetPredicted,
    DenseGtOracle,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::SparseHeuristic, Strategy::GsnetPredicted, Strategy::DenseGtOracle];
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::SparseHeuristic => "sparse-heuristic",
            Strategy::GsnetPredicted => "gsnet-predicted",
            Strategy::DenseGtOracle => "dense-gt-oracle",
        })
    }
}

/// Ring indices never used for fitting: 1, 3, 5, ... (0-based), i.e. the
/// even positions when the ring is numbered from 1.
pub fn held_out_views(camera_count: usize) -> Vec<usize> {
    (1..camera_count).step_by(2).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub view: usize,
    pub strategy: Strategy,
    pub psnr: f64,
    pub ssim: f64,
    pub primitives: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
    /// Seconds spent building each strategy's primitives.
    pub timings: Vec<(Strategy, f64)>,
}

impl EvalReport {
    pub const CSV_HEADER: &'static str = "view,strategy,psnr,ssim,primitives";

    pub fn rows_for(&self, strategy: Strategy) -> impl Iterator<Item = &EvalRow> {
        self.rows.iter().filter(move |r| r.strategy == strategy)
    }

    pub fn mean_psnr(&self, strategy: Strategy) -> f64 {
        mean(self.rows_for(strategy).map(|r| r.psnr))
    }

    pub fn mean_ssim(&self, strategy: Strategy) -> f64 {
        mean(self.rows_for(strategy).map(|r| r.ssim))
    }

    pub fn primitive_count(&self, strategy: Strategy) -> usize {
        self.rows_for(strategy).next().map_or(0, |r| r.primitives)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            let _ = writeln!(out, "{},{},{:.6},{:.6},{}", r.view, r.strategy, r.psnr, r.ssim, r.primitives);
        }
        out
    }

    /// Per-strategy means and counts as `key=value` lines. Timings are
    /// left out so the block is reproducible.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for s in Strategy::ALL {
            let _ = writeln!(out, "{s}.psnr_mean={:.6}", self.mean_psnr(s));
            let _ = writeln!(out, "{s}.ssim_mean={:.6}", self.mean_ssim(s));
            let _ = writeln!(out, "{s}.primitives={}", self.primitive_count(s));
        }
        let gain = self.mean_psnr(Strategy::GsnetPredicted) - self.mean_psnr(Strategy::SparseHeuristic);
        let _ = writeln!(out, "psnr_gain_db={gain:.6}");
        out
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 { f64::NAN } else { sum / n as f64 }
}

/// Renders every strategy on the held-out cameras and scores it against
/// the dense ground truth rendered from the same cameras.
pub fn evaluate(
    sparse: &[ColoredPoint],
    dense_gt: &[GaussianPrimitive],
    cameras: &[CameraView],
    weights: &NetworkWeights,
) -> Result<EvalReport> {
    let views = held_out_views(cameras.len());
    if views.is_empty() {
        return Err(Error::Config("evaluation needs at least two ring cameras".into()));
    }
    let references: Vec<ImageBuffer> = views.iter().map(|&k| render::render(dense_gt, &cameras[k])).collect();

    let mut report = EvalReport::default();
    for strategy in Strategy::ALL {
        let start = Instant::now();
        let primitives = match strategy {
            Strategy::SparseHeuristic => heuristic_gaussians(sparse)?,
            Strategy::GsnetPredicted => predict_scene(sparse, weights)?,
            Strategy::DenseGtOracle => dense_gt.to_vec(),
        };
        report.timings.push((strategy, start.elapsed().as_secs_f64()));
        for (&k, reference) in views.iter().zip(&references) {
            let image = render::render(&primitives, &cameras[k]);
            report.rows.push(EvalRow {
                view: k,
                strategy,
                psnr: psnr(&image, reference)?,
                ssim: ssim(&image, reference)?,
                primitives: primitives.len(),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Architecture;
    use crate::render::PSNR_CAP_DB;
    use crate::synth::{generate_scene, Layout, SceneSpec};

    #[test]
    fn held_out_are_odd_indices() {
        assert_eq!(held_out_views(12), vec![1, 3, 5, 7, 9, 11]);
        assert_eq!(held_out_views(2), vec![1]);
    }

    #[test]
    fn report_shape_and_oracle_cap() {
        let spec = SceneSpec { layout: Layout::BoxRoom, dense_count: 3000, width: 24, height: 16, ..SceneSpec::default() };
        let scene = generate_scene(&spec).unwrap();
        let gt = heuristic_gaussians(&scene.dense).unwrap();
        let weights = NetworkWeights::random(Architecture::default(), 1);
        let report = evaluate(&scene.sparse, &gt, &scene.cameras, &weights).unwrap();
        assert_eq!(report.rows.len(), 18);
        for r in report.rows_for(Strategy::DenseGtOracle) {
            assert_eq!(r.psnr, PSNR_CAP_DB);
        }
        assert_eq!(report.primitive_count(Strategy::GsnetPredicted), 5 * report.primitive_count(Strategy::SparseHeuristic));
        let from_rows: f64 = report.rows_for(Strategy::SparseHeuristic).map(|r| r.psnr).sum::<f64>() / 6.0;
        assert!((from_rows - report.mean_psnr(Strategy::SparseHeuristic)).abs() < 1e-9);
        assert_eq!(report.to_csv().lines().count(), 19);
        assert!(report.summary().contains("gsnet-predicted.primitives=750"));
    }
}
