//! Output head: raw decoder groups to primitives, and the regression loss.
//!
//! Each group of 14 raw outputs is `(Δμ 3, scale 3, quaternion 4, opacity 1,
//! ΔC 3)`. Position and color are offsets from the anchor, scale goes
//! through a sigmoid times the scene scale, the quaternion is normalized,
//! and opacity is `(tanh + 1) / 2`.

use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::spatial::TrainingSample;
use crate::types::{ColoredPoint, GaussianPrimitive, Quat, Vec3, PRIMITIVE_DIM};

/// Below this norm a raw quaternion is treated as zero.
const DEGENERATE_QUAT_NORM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RawGroup {
    pub position_delta: [f64; 3],
    pub scale: [f64; 3],
    pub rotation: [f64; 4],
    pub opacity: f64,
    pub color_delta: [f64; 3],
}

impl RawGroup {
    pub fn from_slice(v: &[f64]) -> Self {
        assert_eq!(v.len(), PRIMITIVE_DIM);
        RawGroup {
            position_delta: [v[0], v[1], v[2]],
            scale: [v[3], v[4], v[5]],
            rotation: [v[6], v[7], v[8], v[9]],
            opacity: v[10],
            color_delta: [v[11], v[12], v[13]],
        }
    }

    pub fn to_array(&self) -> [f64; PRIMITIVE_DIM] {
        let mut out = [0.0; PRIMITIVE_DIM];
        out[0..3].copy_from_slice(&self.position_delta);
        out[3..6].copy_from_slice(&self.scale);
        out[6..10].copy_from_slice(&self.rotation);
        out[10] = self.opacity;
        out[11..14].copy_from_slice(&self.color_delta);
        out
    }
}

/// Pre-activation decoder output for one anchor: `T` groups of 14.
#[derive(Debug, Clone, PartialEq)]
pub struct RawPrediction {
    pub groups: Vec<RawGroup>,
}

impl RawPrediction {
    pub fn from_flat(v: &[f64]) -> Self {
        assert_eq!(v.len() % PRIMITIVE_DIM, 0);
        RawPrediction { groups: v.chunks_exact(PRIMITIVE_DIM).map(RawGroup::from_slice).collect() }
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.groups.iter().flat_map(|g| g.to_array()).collect()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Unit quaternion from raw output; `None` when the raw vector is zero.
fn unit_rotation(raw: &[f64; 4]) -> Option<(Quat, f64)> {
    let q = Quat(*raw);
    let n = q.norm();
    (n > DEGENERATE_QUAT_NORM).then(|| (Quat(raw.map(|c| c / n)), n))
}

fn opacity(raw: f64) -> f64 {
    (0.5 * (raw.tanh() + 1.0)).clamp(0.0, 1.0)
}

fn scale(raw: &[f64; 3], scene_scale: f64) -> Vec3 {
    // Floor keeps the invariant scale > 0 even when the sigmoid underflows.
    Vec3::from(raw.map(|r| (scene_scale * sigmoid(r)).max(f64::MIN_POSITIVE)))
}

/// Primitives for one anchor and the number of zero quaternions replaced
/// by the identity.
pub fn activate(raw: &RawPrediction, anchor: &ColoredPoint, scene_scale: f64) -> (Vec<GaussianPrimitive>, usize) {
    let mut degenerate = 0;
    let prims = raw
        .groups
        .iter()
        .map(|g| {
            let rotation = match unit_rotation(&g.rotation) {
                Some((q, _)) => q,
                None => {
                    degenerate += 1;
                    Quat::IDENTITY
                }
            };
            GaussianPrimitive {
                mean: anchor.position + Vec3::from(g.position_delta),
                scale: scale(&g.scale, scene_scale),
                rotation,
                opacity: opacity(g.opacity),
                color: (anchor.color + Vec3::from(g.color_delta)).map(|c| c.clamp(0.0, 1.0)),
            }
        })
        .collect();
    (prims, degenerate)
}

/// Per-attribute loss terms. Each is averaged over the `T` slots, so
/// [`LossBreakdown::total`] is the regression loss of one sample.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub position: f64,
    pub color: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
    pub degenerate: usize,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.position + self.color + self.opacity + self.scale + self.rotation
    }

    pub fn scaled(&self, f: f64) -> Self {
        LossBreakdown {
            position: self.position * f,
            color: self.color * f,
            opacity: self.opacity * f,
            scale: self.scale * f,
            rotation: self.rotation * f,
            degenerate: self.degenerate,
        }
    }
}

impl Add for LossBreakdown {
    type Output = LossBreakdown;

    fn add(self, o: LossBreakdown) -> LossBreakdown {
        LossBreakdown {
            position: self.position + o.position,
            color: self.color + o.color,
            opacity: self.opacity + o.opacity,
            scale: self.scale + o.scale,
            rotation: self.rotation + o.rotation,
            degenerate: self.degenerate + o.degenerate,
        }
    }
}

impl AddAssign for LossBreakdown {
    fn add_assign(&mut self, o: LossBreakdown) {
        *self = *self + o;
    }
}

fn mse_grad<const N: usize>(pred: &[f64; N], target: &[f64; N], grad: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    for i in 0..N {
        let d = pred[i] - target[i];
        sum += d * d;
        grad[i] = 2.0 * d / N as f64;
    }
    sum / N as f64
}

/// Loss of one output slot against its target, and `dloss/draw` for the
/// slot's 14 raw values. Position and color are compared as offsets from
/// the anchor; opacity, scale and rotation as absolute values.
pub fn slot_loss(
    raw: &RawGroup,
    target: &GaussianPrimitive,
    position_delta: &Vec3,
    color_delta: &Vec3,
    scene_scale: f64,
) -> (LossBreakdown, [f64; PRIMITIVE_DIM]) {
    let mut grad = [0.0; PRIMITIVE_DIM];
    let mut loss = LossBreakdown::default();

    loss.position = mse_grad(&raw.position_delta, &(*position_delta).into(), &mut grad[0..3]);
    loss.color = mse_grad(&raw.color_delta, &(*color_delta).into(), &mut grad[11..14]);

    let t = raw.opacity.tanh();
    let a = 0.5 * (t + 1.0);
    let da = a - target.opacity;
    loss.opacity = da * da;
    grad[10] = 2.0 * da * 0.5 * (1.0 - t * t);

    let sig = raw.scale.map(sigmoid);
    let pred_scale = sig.map(|s| scene_scale * s);
    let mut g_scale = [0.0; 3];
    loss.scale = mse_grad(&pred_scale, &target.scale.into(), &mut g_scale);
    for i in 0..3 {
        grad[3 + i] = g_scale[i] * scene_scale * sig[i] * (1.0 - sig[i]);
    }

    match unit_rotation(&raw.rotation) {
        Some((q, norm)) => {
            // q and -q are the same rotation; compare against the closer sign.
            let target_q = if q.dot(&target.rotation) < 0.0 { target.rotation.0.map(|c| -c) } else { target.rotation.0 };
            let mut g_q = [0.0; 4];
            loss.rotation = mse_grad(&q.0, &target_q, &mut g_q);
            // Jacobian of q/|q|: (I - q̂q̂ᵀ)/|q|.
            let proj: f64 = g_q.iter().zip(q.0.iter()).map(|(g, c)| g * c).sum();
            for i in 0..4 {
                grad[6 + i] = (g_q[i] - q.0[i] * proj) / norm;
            }
        }
        None => {
            let target_q = if Quat::IDENTITY.dot(&target.rotation) < 0.0 {
                target.rotation.0.map(|c| -c)
            } else {
                target.rotation.0
            };
            let mut unused = [0.0; 4];
            loss.rotation = mse_grad(&Quat::IDENTITY.0, &target_q, &mut unused);
            loss.degenerate = 1;
        }
    }
    (loss, grad)
}

/// Sample loss (mean over slots) and its gradient with respect to the
/// decoder output.
pub(crate) fn loss_and_output_grad(
    output: &[f64],
    sample: &TrainingSample,
    densify: usize,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if sample.targets.len() != densify || output.len() != densify * PRIMITIVE_DIM {
        return Err(Error::Shape(format!(
            "sample has {} targets, network predicts {} slots",
            sample.targets.len(),
            output.len() / PRIMITIVE_DIM
        )));
    }
    let inv_t = 1.0 / densify as f64;
    let mut total = LossBreakdown::default();
    let mut grad = vec![0.0; output.len()];
    for (k, (chunk, g)) in output.chunks_exact(PRIMITIVE_DIM).zip(grad.chunks_exact_mut(PRIMITIVE_DIM)).enumerate() {
        let delta = &sample.target_deltas[k];
        let (l, gs) = slot_loss(&RawGroup::from_slice(chunk), &sample.targets[k], &delta.position, &delta.color, sample.scene_scale);
        total += l;
        for (dst, src) in g.iter_mut().zip(gs) {
            *dst = src * inv_t;
        }
    }
    let mut loss = total.scaled(inv_t);
    loss.degenerate = total.degenerate;
    if !loss.total().is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    Ok((loss, grad))
}
