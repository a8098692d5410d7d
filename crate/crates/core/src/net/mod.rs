//! The densification network.
//!
//! Encoder: a shared point-wise affine layer lifts each of the anchor and
//! its three nearest sparse neighbors from `(position, color)` to 16
//! features; the four feature vectors are concatenated anchor-first and a
//! second layer fuses them into 128 features. Decoder: three affine layers
//! (ReLU between them) map 128 features to `14·T` raw outputs, which the
//! head in [`head`] turns into `T` Gaussian primitives.
//!
//! Gradients are computed by a hand-written reverse pass over this fixed
//! graph.

mod head;
mod layer;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use head::{activate, slot_loss, LossBreakdown, RawGroup, RawPrediction};
pub use layer::Affine;

use crate::error::{Error, Result};
use crate::spatial::TrainingSample;
use crate::types::{ColoredPoint, GaussianPrimitive, PRIMITIVE_DIM};

/// Primitives emitted per input point.
pub const DENSIFY_FACTOR: usize = 5;
/// Per-point encoder input: position then color.
pub const POINT_FEATURES: usize = 6;
/// Neighbors fused with each anchor.
pub const ENCODER_NEIGHBORS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Architecture {
    pub point_width: usize,
    pub fused_width: usize,
    pub decoder_hidden: [usize; 2],
    pub densify: usize,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { point_width: 16, fused_width: 128, decoder_hidden: [96, 48], densify: DENSIFY_FACTOR }
    }
}

impl Architecture {
    pub fn output_width(&self) -> usize {
        PRIMITIVE_DIM * self.densify
    }

    /// `(inputs, outputs)` for enc1, enc2, dec1, dec2, dec3.
    pub fn layer_dims(&self) -> [(usize, usize); 5] {
        let [h1, h2] = self.decoder_hidden;
        [
            (POINT_FEATURES, self.point_width),
            ((ENCODER_NEIGHBORS + 1) * self.point_width, self.fused_width),
            (self.fused_width, h1),
            (h1, h2),
            (h2, self.output_width()),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.layer_dims().iter().map(|(i, o)| i * o + o).sum()
    }

    /// Recovers an architecture from a layer list, checking the chain.
    pub fn from_layer_dims(dims: &[(usize, usize)]) -> Result<Self> {
        let bad = |msg: String| Error::CheckpointIncompatible(msg);
        let [(i0, o0), (i1, o1), (i2, o2), (i3, o3), (i4, o4)] = dims else {
            return Err(bad(format!("expected 5 layers, found {}", dims.len())));
        };
        if *i0 != POINT_FEATURES {
            return Err(bad(format!("encoder input width {i0}, expected {POINT_FEATURES}")));
        }
        if *i1 != (ENCODER_NEIGHBORS + 1) * o0 {
            return Err(bad(format!("fusion input width {i1} does not match 4×{o0}")));
        }
        if i2 != o1 || i3 != o2 || i4 != o3 {
            return Err(bad("layer widths do not chain".into()));
        }
        if *o4 == 0 || o4 % PRIMITIVE_DIM != 0 {
            return Err(bad(format!("output width {o4} is not a multiple of {PRIMITIVE_DIM}")));
        }
        let arch = Architecture { point_width: *o0, fused_width: *o1, decoder_hidden: [*o2, *o3], densify: o4 / PRIMITIVE_DIM };
        if dims.iter().any(|(i, o)| *i == 0 || *o == 0) {
            return Err(bad("zero-width layer".into()));
        }
        Ok(arch)
    }
}

/// All learnable parameters: `[enc1, enc2, dec1, dec2, dec3]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    pub arch: Architecture,
    pub layers: Vec<Affine>,
}

/// Gradient accumulator with the same shapes as [`NetworkWeights`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Affine>,
}

impl NetworkWeights {
    pub fn zeros(arch: Architecture) -> Self {
        let layers = arch.layer_dims().iter().map(|(i, o)| Affine::zeros(*i, *o)).collect();
        NetworkWeights { arch, layers }
    }

    pub fn random(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = arch.layer_dims().iter().map(|(i, o)| Affine::glorot(*i, *o, &mut rng)).collect();
        NetworkWeights { arch, layers }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Affine::param_count).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Affine::params)
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers.iter_mut().flat_map(Affine::params_mut)
    }

    pub fn zero_gradients(&self) -> Gradients {
        Gradients { layers: self.layers.iter().map(|l| Affine::zeros(l.inputs, l.outputs)).collect() }
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }
}

impl Gradients {
    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().flat_map(Affine::params)
    }

    pub fn add_assign(&mut self, other: &Gradients) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            for (x, y) in a.params_mut().zip(b.params()) {
                *x += y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.params_mut().for_each(|p| *p *= factor);
        }
    }
}

fn point_input(p: &ColoredPoint) -> [f64; POINT_FEATURES] {
    [p.position.x, p.position.y, p.position.z, p.color.x, p.color.y, p.color.z]
}

fn check_finite(v: &[f64], what: &str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.to_string()))
    }
}

/// Activations kept from the forward pass for the reverse pass.
struct Trace {
    inputs: [[f64; POINT_FEATURES]; ENCODER_NEIGHBORS + 1],
    point_pre: Vec<Vec<f64>>,
    fused_in: Vec<f64>,
    fused_pre: Vec<f64>,
    features: Vec<f64>,
    hidden_pre: [Vec<f64>; 2],
    hidden: [Vec<f64>; 2],
    output: Vec<f64>,
}

fn forward_trace(weights: &NetworkWeights, anchor: &ColoredPoint, neighbors: &[ColoredPoint]) -> Result<Trace> {
    if neighbors.len() != ENCODER_NEIGHBORS {
        return Err(Error::Arity { expected: ENCODER_NEIGHBORS, actual: neighbors.len() });
    }
    let [enc1, enc2, dec1, dec2, dec3] = weights.layers.as_slice() else {
        return Err(Error::Shape(format!("expected 5 layers, found {}", weights.layers.len())));
    };
    let inputs = [point_input(anchor), point_input(&neighbors[0]), point_input(&neighbors[1]), point_input(&neighbors[2])];
    check_finite(inputs.as_flattened(), "encoder input")?;

    let width = enc1.outputs;
    let mut point_pre = Vec::with_capacity(inputs.len());
    let mut fused_in = vec![0.0; width * inputs.len()];
    for (x, chunk) in inputs.iter().zip(fused_in.chunks_mut(width)) {
        let mut pre = vec![0.0; width];
        enc1.forward(x, &mut pre);
        chunk.copy_from_slice(&pre);
        layer::relu_in_place(chunk);
        point_pre.push(pre);
    }
    check_finite(&fused_in, "point-wise features")?;

    let mut fused_pre = vec![0.0; enc2.outputs];
    enc2.forward(&fused_in, &mut fused_pre);
    let mut features = fused_pre.clone();
    layer::relu_in_place(&mut features);
    check_finite(&features, "fused features")?;

    let mut h1_pre = vec![0.0; dec1.outputs];
    dec1.forward(&features, &mut h1_pre);
    let mut h1 = h1_pre.clone();
    layer::relu_in_place(&mut h1);
    check_finite(&h1, "decoder layer 1")?;

    let mut h2_pre = vec![0.0; dec2.outputs];
    dec2.forward(&h1, &mut h2_pre);
    let mut h2 = h2_pre.clone();
    layer::relu_in_place(&mut h2);
    check_finite(&h2, "decoder layer 2")?;

    let mut output = vec![0.0; dec3.outputs];
    dec3.forward(&h2, &mut output);
    check_finite(&output, "decoder output")?;

    Ok(Trace {
        inputs,
        point_pre,
        fused_in,
        fused_pre,
        features,
        hidden_pre: [h1_pre, h2_pre],
        hidden: [h1, h2],
        output,
    })
}

/// 128 fused features for an anchor and its three neighbors (nearest first).
pub fn encode(weights: &NetworkWeights, anchor: &ColoredPoint, neighbors: &[ColoredPoint]) -> Result<Vec<f64>> {
    if neighbors.len() != ENCODER_NEIGHBORS {
        return Err(Error::Arity { expected: ENCODER_NEIGHBORS, actual: neighbors.len() });
    }
    let [enc1, enc2, ..] = weights.layers.as_slice() else {
        return Err(Error::Shape("missing encoder layers".into()));
    };
    let mut fused_in = Vec::with_capacity(enc2.inputs);
    for p in std::iter::once(anchor).chain(neighbors) {
        let mut h = vec![0.0; enc1.outputs];
        enc1.forward(&point_input(p), &mut h);
        layer::relu_in_place(&mut h);
        fused_in.extend(h);
    }
    let mut features = vec![0.0; enc2.outputs];
    enc2.forward(&fused_in, &mut features);
    layer::relu_in_place(&mut features);
    Ok(features)
}

pub fn decode(weights: &NetworkWeights, features: &[f64]) -> Result<RawPrediction> {
    let [_, _, dec1, dec2, dec3] = weights.layers.as_slice() else {
        return Err(Error::Shape("missing decoder layers".into()));
    };
    if features.len() != dec1.inputs {
        return Err(Error::Shape(format!("decoder expects {} features, got {}", dec1.inputs, features.len())));
    }
    let mut h1 = vec![0.0; dec1.outputs];
    dec1.forward(features, &mut h1);
    layer::relu_in_place(&mut h1);
    let mut h2 = vec![0.0; dec2.outputs];
    dec2.forward(&h1, &mut h2);
    layer::relu_in_place(&mut h2);
    let mut out = vec![0.0; dec3.outputs];
    dec3.forward(&h2, &mut out);
    Ok(RawPrediction::from_flat(&out))
}

/// `T` primitives for one anchor; the second value counts degenerate
/// (zero) quaternions replaced by the identity.
pub fn predict_anchor(
    weights: &NetworkWeights,
    anchor: &ColoredPoint,
    neighbors: &[ColoredPoint],
    scene_scale: f64,
) -> Result<(Vec<GaussianPrimitive>, usize)> {
    let trace = forward_trace(weights, anchor, neighbors)?;
    Ok(activate(&RawPrediction::from_flat(&trace.output), anchor, scene_scale))
}

/// Loss of one sample without touching gradients.
pub fn sample_loss(sample: &TrainingSample, weights: &NetworkWeights) -> Result<LossBreakdown> {
    let trace = forward_trace(weights, &sample.anchor, &sample.neighbors)?;
    let (loss, _) = head::loss_and_output_grad(&trace.output, sample, weights.arch.densify)?;
    Ok(loss)
}

/// Loss of one sample; its gradient with respect to every parameter is
/// added into `grads`.
pub fn forward_backward(sample: &TrainingSample, weights: &NetworkWeights, grads: &mut Gradients) -> Result<LossBreakdown> {
    let trace = forward_trace(weights, &sample.anchor, &sample.neighbors)?;
    let (loss, g_out) = head::loss_and_output_grad(&trace.output, sample, weights.arch.densify)?;
    let [enc1, enc2, dec1, dec2, dec3] = weights.layers.as_slice() else { unreachable!() };
    let [g_enc1, g_enc2, g_dec1, g_dec2, g_dec3] = grads.layers.as_mut_slice() else {
        return Err(Error::Shape("gradient accumulator has wrong layer count".into()));
    };

    let mut g_h2 = vec![0.0; dec3.inputs];
    dec3.backward(&trace.hidden[1], &g_out, g_dec3, Some(&mut g_h2));
    layer::relu_backward(&trace.hidden_pre[1], &mut g_h2);

    let mut g_h1 = vec![0.0; dec2.inputs];
    dec2.backward(&trace.hidden[0], &g_h2, g_dec2, Some(&mut g_h1));
    layer::relu_backward(&trace.hidden_pre[0], &mut g_h1);

    let mut g_feat = vec![0.0; dec1.inputs];
    dec1.backward(&trace.features, &g_h1, g_dec1, Some(&mut g_feat));
    layer::relu_backward(&trace.fused_pre, &mut g_feat);

    let mut g_fused_in = vec![0.0; enc2.inputs];
    enc2.backward(&trace.fused_in, &g_feat, g_enc2, Some(&mut g_fused_in));

    for ((x, pre), g) in trace.inputs.iter().zip(&trace.point_pre).zip(g_fused_in.chunks_mut(enc1.outputs)) {
        layer::relu_backward(pre, g);
        enc1.backward(x, g, g_enc1, None);
    }
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Vec3;

    fn pt(x: f64, y: f64, z: f64, c: f64) -> ColoredPoint {
        ColoredPoint::new(Vec3::new(x, y, z), Vec3::repeat(c))
    }

    fn affine_oracle(layer: &Affine, x: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(layer.outputs);
        for o in 0..layer.outputs {
            let mut acc = layer.bias[o];
            for i in 0..layer.inputs {
                acc += layer.weights[o * layer.inputs + i] * x[i];
            }
            y.push(acc);
        }
        y
    }

    fn relu(v: Vec<f64>) -> Vec<f64> {
        v.into_iter().map(|x| if x > 0.0 { x } else { 0.0 }).collect()
    }

    #[test]
    fn default_architecture_counts() {
        let arch = Architecture::default();
        assert_eq!(arch.output_width(), 70);
        assert_eq!(arch.param_count(), 6 * 16 + 16 + 64 * 128 + 128 + 128 * 96 + 96 + 96 * 48 + 48 + 48 * 70 + 70);
        assert_eq!(arch.param_count(), 28_902);
        assert_eq!(Architecture::from_layer_dims(&arch.layer_dims()).unwrap(), arch);
        let mut dims = arch.layer_dims();
        dims[2].0 = 127;
        assert!(Architecture::from_layer_dims(&dims).is_err());
    }

    #[test]
    fn zero_weights_give_zero_features_and_outputs() {
        let w = NetworkWeights::zeros(Architecture::default());
        let n = [pt(1.0, 2.0, 3.0, 0.1), pt(-1.0, 0.0, 0.5, 0.9), pt(4.0, 4.0, 4.0, 0.5)];
        let f = encode(&w, &pt(0.3, 0.2, 0.1, 0.7), &n).unwrap();
        assert_eq!(f, vec![0.0; 128]);
        let raw = decode(&w, &f).unwrap();
        assert_eq!(raw.groups.len(), 5);
        assert!(raw.to_flat().iter().all(|v| *v == 0.0));
        assert_eq!(raw.to_flat().len(), 70);
    }

    #[test]
    fn encode_checks_arity() {
        let w = NetworkWeights::zeros(Architecture::default());
        let a = pt(0.0, 0.0, 0.0, 0.5);
        assert!(matches!(encode(&w, &a, &[a, a]), Err(Error::Arity { expected: 3, actual: 2 })));
    }

    #[test]
    fn identity_like_first_layer_copies_inputs() {
        let mut w = NetworkWeights::zeros(Architecture::default());
        for i in 0..6 {
            w.layers[0].weights[i * 6 + i] = 1.0;
        }
        let mut pre = vec![0.0; 16];
        w.layers[0].forward(&point_input(&ColoredPoint::new(Vec3::new(1.0, 2.0, 3.0), Vec3::repeat(0.5))), &mut pre);
        assert_eq!(&pre[..6], &[1.0, 2.0, 3.0, 0.5, 0.5, 0.5]);
        assert!(pre[6..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn encode_decode_match_scalar_loop_oracle() {
        let w = NetworkWeights::random(Architecture::default(), 11);
        for l in &w.layers {
            assert!(l.weights.iter().any(|v| *v != 0.0));
        }
        let anchor = pt(0.1, -0.2, 0.3, 0.6);
        let n = [pt(0.15, -0.2, 0.3, 0.5), pt(0.0, -0.25, 0.35, 0.7), pt(0.2, -0.1, 0.3, 0.2)];

        let mut concat = Vec::new();
        for p in std::iter::once(&anchor).chain(&n) {
            concat.extend(relu(affine_oracle(&w.layers[0], &point_input(p))));
        }
        let features = relu(affine_oracle(&w.layers[1], &concat));
        let got = encode(&w, &anchor, &n).unwrap();
        for (a, b) in got.iter().zip(&features) {
            assert!((a - b).abs() < 1e-12);
        }

        let h1 = relu(affine_oracle(&w.layers[2], &features));
        let h2 = relu(affine_oracle(&w.layers[3], &h1));
        let out = affine_oracle(&w.layers[4], &h2);
        let raw = decode(&w, &got).unwrap().to_flat();
        assert_eq!(raw.len(), out.len());
        for (a, b) in raw.iter().zip(&out) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn random_init_is_seeded_and_bounded() {
        let arch = Architecture::default();
        assert_eq!(NetworkWeights::random(arch, 3), NetworkWeights::random(arch, 3));
        assert_ne!(NetworkWeights::random(arch, 3), NetworkWeights::random(arch, 4));
        let w = NetworkWeights::random(arch, 3);
        for l in &w.layers {
            let limit = (6.0 / (l.inputs + l.outputs) as f64).sqrt();
            assert!(l.weights.iter().all(|v| v.abs() <= limit));
            assert!(l.bias.iter().all(|b| *b == 0.0));
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let w = NetworkWeights::random(Architecture::default(), 1);
        let a = pt(f64::NAN, 0.0, 0.0, 0.5);
        let sample = crate::spatial::TrainingSample::synthetic(a, [a; 3], vec![head::tests::target(Vec3::zeros(), 0.5); 5], 1.0);
        let mut g = w.zero_gradients();
        match forward_backward(&sample, &w, &mut g) {
            Err(Error::NonFinite(what)) => assert_eq!(what, "encoder input"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
