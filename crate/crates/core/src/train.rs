//! Mini-batch training across scenes and dense prediction for new scenes.
//!
//! Every scene is mapped into a shared frame before it reaches the network:
//! positions are centered on the sparse centroid and divided by the
//! bounding-sphere radius of the sparse cloud. Prediction applies the same
//! map to the input and inverts it on the output.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::net::{self, Architecture, Gradients, LossBreakdown, NetworkWeights, ENCODER_NEIGHBORS};
use crate::spatial::{encoder_neighbors, mean_neighbor_distance, KdIndex, TargetDelta, TrainingSample};
use crate::types::{ColoredPoint, GaussianPrimitive, Vec3};

/// Samples per parallel work unit. Partial gradients are summed in chunk
/// order, so results do not depend on the thread count.
const GRADIENT_CHUNK: usize = 8;
/// Training stops with a divergence error above this multiple of the
/// initial loss.
pub const DIVERGENCE_FACTOR: f64 = 1e6;
/// Smallest cloud `predict_scene` accepts: an anchor plus three neighbors.
pub const MIN_PREDICT_POINTS: usize = ENCODER_NEIGHBORS + 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}' (expected sgd or adam)"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub scenes: Vec<PathBuf>,
    pub validation_fraction: f64,
    pub architecture: Architecture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            scenes: Vec::new(),
            validation_fraction: 0.1,
            architecture: Architecture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(Error::Config(format!("validation_fraction must be in [0, 1), got {}", self.validation_fraction)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("adam needs beta1, beta2 in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }

    /// Parses `key = value` lines over the defaults. `#` starts a comment;
    /// `-` and `_` are interchangeable in keys.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = TrainConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", i + 1)))?;
            config.set(key.trim(), value.trim()).map_err(|e| match e {
                Error::Config(msg) => Error::Config(format!("line {}: {msg}", i + 1)),
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
        }
        let key = key.replace('-', "_");
        match key.as_str() {
            "epochs" => self.epochs = num(&key, value)?,
            "batch_size" => self.batch_size = num(&key, value)?,
            "learning_rate" => self.learning_rate = num(&key, value)?,
            "optimizer" => self.optimizer = value.parse()?,
            "beta1" => self.beta1 = num(&key, value)?,
            "beta2" => self.beta2 = num(&key, value)?,
            "epsilon" => self.epsilon = num(&key, value)?,
            "seed" => self.seed = num(&key, value)?,
            "validation_fraction" => self.validation_fraction = num(&key, value)?,
            "scenes" => {
                self.scenes = value.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect()
            }
            "point_width" => self.architecture.point_width = num(&key, value)?,
            "fused_width" => self.architecture.fused_width = num(&key, value)?,
            "decoder_hidden" => {
                let parts: Vec<usize> = value.split(',').map(|v| num(&key, v.trim())).collect::<Result<_>>()?;
                self.architecture.decoder_hidden =
                    parts.try_into().map_err(|_| Error::Config("decoder_hidden takes two widths".into()))?;
            }
            other => return Err(Error::Config(format!("unknown key '{other}'"))),
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let scenes: Vec<String> = self.scenes.iter().map(|p| p.display().to_string()).collect();
        let [h1, h2] = self.architecture.decoder_hidden;
        format!(
            "epochs = {}\nbatch_size = {}\nlearning_rate = {:?}\noptimizer = {}\nbeta1 = {:?}\nbeta2 = {:?}\n\
             epsilon = {:?}\nseed = {}\nvalidation_fraction = {:?}\nscenes = {}\npoint_width = {}\n\
             fused_width = {}\ndecoder_hidden = {h1},{h2}\n",
            self.epochs,
            self.batch_size,
            self.learning_rate,
            self.optimizer,
            self.beta1,
            self.beta2,
            self.epsilon,
            self.seed,
            self.validation_fraction,
            scenes.join(","),
            self.architecture.point_width,
            self.architecture.fused_width,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    /// `None` when nothing was held out.
    pub validation_loss: Option<f64>,
    /// Mean per-attribute terms over the epoch's training samples.
    pub breakdown: LossBreakdown,
    pub seconds: f64,
    pub degenerate: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub initial_loss: Option<f64>,
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,val_loss,loss_position,loss_color,loss_opacity,loss_scale,loss_rotation,seconds,degenerate";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for r in &self.epochs {
            let val = r.validation_loss.map(|v| format!("{v:e}")).unwrap_or_default();
            let b = &r.breakdown;
            let _ = writeln!(
                out,
                "{},{:e},{val},{:e},{:e},{:e},{:e},{:e},{:.3},{}",
                r.epoch, r.train_loss, b.position, b.color, b.opacity, b.scale, b.rotation, r.seconds, r.degenerate
            );
        }
        out
    }

    pub fn final_train_loss(&self) -> Option<f64> {
        self.epochs.last().map(|r| r.train_loss)
    }
}

/// Similarity map from scene coordinates into the shared training frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneFrame {
    pub center: Vec3,
    pub radius: f64,
}

impl SceneFrame {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Self {
        let points: Vec<&Vec3> = points.into_iter().collect();
        if points.is_empty() {
            return SceneFrame { center: Vec3::zeros(), radius: 1.0 };
        }
        let center = points.iter().fold(Vec3::zeros(), |acc, p| acc + **p) / points.len() as f64;
        let radius = points.iter().map(|p| (**p - center).norm()).fold(0.0, f64::max);
        SceneFrame { center, radius: if radius > 0.0 && radius.is_finite() { radius } else { 1.0 } }
    }

    pub fn from_samples(samples: &[TrainingSample]) -> Self {
        Self::from_points(samples.iter().map(|s| &s.anchor.position))
    }

    pub fn to_frame(&self, p: &Vec3) -> Vec3 {
        (p - self.center) / self.radius
    }

    pub fn from_frame(&self, p: &Vec3) -> Vec3 {
        self.center + p * self.radius
    }

    fn point(&self, p: &ColoredPoint) -> ColoredPoint {
        ColoredPoint { position: self.to_frame(&p.position), color: p.color }
    }

    pub fn normalize_sample(&self, s: &TrainingSample) -> TrainingSample {
        let r = self.radius;
        TrainingSample {
            anchor: self.point(&s.anchor),
            neighbors: s.neighbors.map(|n| self.point(&n)),
            targets: s
                .targets
                .iter()
                .map(|t| GaussianPrimitive { mean: self.to_frame(&t.mean), scale: t.scale / r, ..*t })
                .collect(),
            target_ids: s.target_ids.clone(),
            target_distances: s.target_distances.iter().map(|d| d / r).collect(),
            target_deltas: s
                .target_deltas
                .iter()
                .map(|d| TargetDelta { position: d.position / r, color: d.color })
                .collect(),
            scene_scale: s.scene_scale / r,
        }
    }

    pub fn denormalize(&self, g: &GaussianPrimitive) -> GaussianPrimitive {
        GaussianPrimitive { mean: self.from_frame(&g.mean), scale: g.scale * self.radius, ..*g }
    }
}

/// First-order optimizer state over the flattened parameter vector.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    steps: i32,
}

impl Optimizer {
    pub fn new(config: &TrainConfig, param_count: usize) -> Self {
        let moments = if config.optimizer == OptimizerKind::Adam { param_count } else { 0 };
        Optimizer {
            kind: config.optimizer,
            learning_rate: config.learning_rate,
            beta1: config.beta1,
            beta2: config.beta2,
            epsilon: config.epsilon,
            m: vec![0.0; moments],
            v: vec![0.0; moments],
            steps: 0,
        }
    }

    pub fn step(&mut self, weights: &mut NetworkWeights, grads: &Gradients) {
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (w, g) in weights.params_mut().zip(grads.params()) {
                    *w -= self.learning_rate * g;
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - self.beta1.powi(self.steps);
                let c2 = 1.0 - self.beta2.powi(self.steps);
                let (b1, b2, eps, lr) = (self.beta1, self.beta2, self.epsilon, self.learning_rate);
                for (((w, g), m), v) in weights.params_mut().zip(grads.params()).zip(&mut self.m).zip(&mut self.v) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let m_hat = *m / c1;
                    let v_hat = *v / c2;
                    *w -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

/// Summed gradient and loss over `batch`, computed chunk-parallel.
fn batch_gradient(batch: &[&TrainingSample], weights: &NetworkWeights) -> Result<(Gradients, LossBreakdown)> {
    let partials: Vec<(Gradients, LossBreakdown)> = batch
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| {
            let mut grads = weights.zero_gradients();
            let mut loss = LossBreakdown::default();
            for s in chunk {
                loss += net::forward_backward(s, weights, &mut grads)?;
            }
            Ok((grads, loss))
        })
        .collect::<Result<_>>()?;
    let mut iter = partials.into_iter();
    let (mut grads, mut loss) = iter.next().unwrap_or_else(|| (weights.zero_gradients(), LossBreakdown::default()));
    for (g, l) in iter {
        grads.add_assign(&g);
        loss += l;
    }
    Ok((grads, loss))
}

/// Mean loss over `samples`, chunk-parallel with ordered reduction.
pub fn mean_loss(samples: &[&TrainingSample], weights: &NetworkWeights) -> Result<LossBreakdown> {
    if samples.is_empty() {
        return Ok(LossBreakdown::default());
    }
    let partials: Vec<LossBreakdown> = samples
        .par_chunks(GRADIENT_CHUNK)
        .map(|chunk| chunk.iter().try_fold(LossBreakdown::default(), |acc, s| Ok(acc + net::sample_loss(s, weights)?)))
        .collect::<Result<_>>()?;
    let total = partials.into_iter().fold(LossBreakdown::default(), |a, b| a + b);
    Ok(total.scaled(1.0 / samples.len() as f64))
}

fn held_out_count(n: usize, fraction: f64) -> usize {
    if fraction <= 0.0 || n < 2 {
        return 0;
    }
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

fn divergence(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite(_) => Error::Divergence { epoch, loss: f64::NAN },
        other => other,
    }
}

/// Trains from a seeded initialization. Each scene is normalized into its
/// own frame and split into training and validation samples.
pub fn train(
    scenes: &BTreeMap<String, Vec<TrainingSample>>,
    config: &TrainConfig,
) -> Result<(NetworkWeights, TrainReport)> {
    train_from(scenes, config, NetworkWeights::random(config.architecture, config.seed))
}

/// As [`train`], continuing from `weights`.
pub fn train_from(
    scenes: &BTreeMap<String, Vec<TrainingSample>>,
    config: &TrainConfig,
    mut weights: NetworkWeights,
) -> Result<(NetworkWeights, TrainReport)> {
    config.validate()?;
    if scenes.is_empty() {
        return Err(Error::Config("training needs at least one scene".into()));
    }
    let total: usize = scenes.values().map(Vec::len).sum();
    if total < config.batch_size {
        return Err(Error::InsufficientInput { required: config.batch_size, available: total });
    }
    if weights.arch != config.architecture {
        return Err(Error::Config("initial weights do not match the configured architecture".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut train_set = Vec::with_capacity(total);
    let mut val_set = Vec::new();
    for samples in scenes.values() {
        let frame = SceneFrame::from_samples(samples);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut rng);
        let held = held_out_count(samples.len(), config.validation_fraction);
        for (rank, &i) in order.iter().enumerate() {
            let s = frame.normalize_sample(&samples[i]);
            if rank < held {
                val_set.push(s);
            } else {
                train_set.push(s);
            }
        }
    }

    let mut report = TrainReport::default();
    if config.epochs == 0 {
        return Ok((weights, report));
    }
    let mut train_refs: Vec<&TrainingSample> = train_set.iter().collect();
    let val_refs: Vec<&TrainingSample> = val_set.iter().collect();
    let initial = mean_loss(&train_refs, &weights).map_err(|e| divergence(0, e))?.total();
    if !initial.is_finite() {
        return Err(Error::Divergence { epoch: 0, loss: initial });
    }
    report.initial_loss = Some(initial);

    let mut optimizer = Optimizer::new(config, weights.param_count());
    for epoch in 1..=config.epochs {
        let start = Instant::now();
        train_refs.shuffle(&mut rng);
        let mut epoch_loss = LossBreakdown::default();
        for batch in train_refs.chunks(config.batch_size) {
            let (mut grads, loss) = batch_gradient(batch, &weights).map_err(|e| divergence(epoch, e))?;
            grads.scale(1.0 / batch.len() as f64);
            optimizer.step(&mut weights, &grads);
            epoch_loss += loss;
        }
        let breakdown = epoch_loss.scaled(1.0 / train_refs.len() as f64);
        let train_loss = breakdown.total();
        if !train_loss.is_finite() || train_loss > DIVERGENCE_FACTOR * initial || !weights.is_finite() {
            return Err(Error::Divergence { epoch, loss: train_loss });
        }
        let validation_loss = if val_refs.is_empty() {
            None
        } else {
            Some(mean_loss(&val_refs, &weights).map_err(|e| divergence(epoch, e))?.total())
        };
        log::debug!("epoch {epoch}: train {train_loss:.6e} val {validation_loss:?}");
        report.epochs.push(EpochRecord {
            epoch,
            train_loss,
            validation_loss,
            breakdown,
            seconds: start.elapsed().as_secs_f64(),
            degenerate: epoch_loss.degenerate,
        });
    }
    Ok((weights, report))
}

/// `T` primitives per sparse point, grouped contiguously per anchor, plus
/// the number of degenerate quaternions replaced by the identity.
pub fn predict_scene_counted(sparse: &[ColoredPoint], weights: &NetworkWeights) -> Result<(Vec<GaussianPrimitive>, usize)> {
    if sparse.len() < MIN_PREDICT_POINTS {
        return Err(Error::InsufficientInput { required: MIN_PREDICT_POINTS, available: sparse.len() });
    }
    let positions: Vec<Vec3> = sparse.iter().map(|p| p.position).collect();
    let index = KdIndex::build(&positions)?;
    let neighbors = encoder_neighbors(&index, sparse)?;
    let frame = SceneFrame::from_points(&positions);
    let scene_scale = mean_neighbor_distance(sparse, &neighbors) / frame.radius;

    let groups: Vec<(Vec<GaussianPrimitive>, usize)> = sparse
        .par_iter()
        .zip(neighbors.par_iter())
        .map(|(anchor, ns)| {
            let ns = ns.map(|j| frame.point(&sparse[j]));
            let (prims, degenerate) = net::predict_anchor(weights, &frame.point(anchor), &ns, scene_scale)?;
            Ok((prims.iter().map(|g| frame.denormalize(g)).collect(), degenerate))
        })
        .collect::<Result<_>>()?;
    let degenerate = groups.iter().map(|g| g.1).sum();
    Ok((groups.into_iter().flat_map(|g| g.0).collect(), degenerate))
}

pub fn predict_scene(sparse: &[ColoredPoint], weights: &NetworkWeights) -> Result<Vec<GaussianPrimitive>> {
    predict_scene_counted(sparse, weights).map(|(p, _)| p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::build_training_set;
    use crate::types::Quat;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> Vec<ColoredPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                ColoredPoint::new(
                    Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-1.0..1.0), rng.gen_range(3.0..6.0)),
                    Vec3::new(rng.gen(), rng.gen(), rng.gen()),
                )
            })
            .collect()
    }

    fn dense_gt(points: &[ColoredPoint], seed: u64) -> Vec<GaussianPrimitive> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        points
            .iter()
            .flat_map(|p| {
                (0..3)
                    .map(|_| GaussianPrimitive {
                        mean: p.position + Vec3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)),
                        scale: Vec3::repeat(rng.gen_range(0.02..0.08)),
                        rotation: Quat::IDENTITY,
                        opacity: 0.8,
                        color: p.color,
                    })
                    .collect::<Vec<_>>()
            })
            .collect()
    }

    fn fixture(n: usize, seed: u64) -> BTreeMap<String, Vec<TrainingSample>> {
        let sparse = cloud(n, seed);
        let samples = build_training_set(&sparse, &dense_gt(&sparse, seed + 1)).unwrap();
        BTreeMap::from([("scene".to_string(), samples)])
    }

    fn small_config(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 8, validation_fraction: 0.0, ..TrainConfig::default() }
    }

    #[test]
    fn zero_epochs_returns_initial_weights() {
        let config = small_config(0);
        let (weights, report) = train(&fixture(16, 1), &config).unwrap();
        assert_eq!(weights, NetworkWeights::random(config.architecture, config.seed));
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn adam_step_with_zero_gradient_is_identity() {
        let mut weights = NetworkWeights::random(Architecture::default(), 3);
        let before = weights.clone();
        let mut opt = Optimizer::new(&TrainConfig::default(), weights.param_count());
        let zero = weights.zero_gradients();
        opt.step(&mut weights, &zero);
        assert_eq!(weights, before);
    }

    #[test]
    fn sgd_step_moves_against_gradient() {
        let mut weights = NetworkWeights::zeros(Architecture::default());
        let mut grads = weights.zero_gradients();
        grads.layers[0].bias[0] = 2.0;
        let config = TrainConfig { optimizer: OptimizerKind::Sgd, learning_rate: 0.5, ..TrainConfig::default() };
        Optimizer::new(&config, weights.param_count()).step(&mut weights, &grads);
        assert_eq!(weights.layers[0].bias[0], -1.0);
    }

    #[test]
    fn loss_decreases_on_small_fixture() {
        for seed in 0..5 {
            let config = TrainConfig { seed, ..small_config(40) };
            let (_, report) = train(&fixture(32, 10 + seed), &config).unwrap();
            assert_eq!(report.epochs.len(), 40);
            assert!(report.final_train_loss().unwrap() < report.initial_loss.unwrap(), "seed {seed}");
        }
    }

    #[test]
    fn training_is_deterministic_across_thread_counts() {
        let data = fixture(24, 4);
        let config = small_config(3);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(|| train(&data, &config).unwrap().0)
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn preconditions() {
        let data = fixture(6, 2);
        assert!(matches!(train(&data, &TrainConfig { batch_size: 7, ..small_config(1) }), Err(Error::InsufficientInput { .. })));
        assert!(train(&BTreeMap::new(), &small_config(1)).is_err());
        assert!(train(&data, &TrainConfig { learning_rate: 0.0, ..small_config(1) }).is_err());
        assert!(train(&data, &TrainConfig { validation_fraction: 1.0, ..small_config(1) }).is_err());
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let config = TrainConfig { optimizer: OptimizerKind::Sgd, learning_rate: 1e12, ..small_config(5) };
        match train(&fixture(16, 5), &config) {
            Err(Error::Divergence { epoch, .. }) => assert!(epoch >= 1),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn validation_split_is_per_scene() {
        assert_eq!(held_out_count(10, 0.1), 1);
        assert_eq!(held_out_count(3, 0.1), 1);
        assert_eq!(held_out_count(2, 0.9), 1);
        assert_eq!(held_out_count(1, 0.5), 0);
        assert_eq!(held_out_count(50, 0.0), 0);
        let mut scenes = fixture(20, 6);
        scenes.insert("other".into(), fixture(20, 7).remove("scene").unwrap());
        let config = TrainConfig { validation_fraction: 0.1, ..small_config(1) };
        let (_, report) = train(&scenes, &config).unwrap();
        assert!(report.epochs[0].validation_loss.unwrap().is_finite());
    }

    #[test]
    fn scene_frame_round_trip() {
        let pts = cloud(10, 8);
        let frame = SceneFrame::from_points(pts.iter().map(|p| &p.position));
        let max = pts.iter().map(|p| frame.to_frame(&p.position).norm()).fold(0.0, f64::max);
        assert!((max - 1.0).abs() < 1e-12);
        for p in &pts {
            assert!((frame.from_frame(&frame.to_frame(&p.position)) - p.position).norm() < 1e-12);
        }
        assert_eq!(SceneFrame::from_points(&[Vec3::new(1.0, 2.0, 3.0)]).radius, 1.0);
    }

    #[test]
    fn predict_counts_and_grouping() {
        let weights = NetworkWeights::random(Architecture::default(), 9);
        for n in [4, 37] {
            assert_eq!(predict_scene(&cloud(n, n as u64), &weights).unwrap().len(), 5 * n);
        }
        assert!(matches!(predict_scene(&cloud(3, 1), &weights), Err(Error::InsufficientInput { required: 4, available: 3 })));
    }

    #[test]
    fn zero_weights_keep_anchor_colors() {
        let mut pts = cloud(8, 11);
        for p in &mut pts {
            p.color = Vec3::repeat(0.5);
        }
        let out = predict_scene(&pts, &NetworkWeights::zeros(Architecture::default())).unwrap();
        for (i, g) in out.iter().enumerate() {
            assert_eq!(g.color, Vec3::repeat(0.5));
            assert!((g.mean - pts[i / 5].position).norm() < 1e-12);
        }
    }

    #[test]
    fn permuting_input_permutes_groups() {
        let weights = NetworkWeights::random(Architecture::default(), 12);
        let pts = cloud(12, 13);
        let mut order: Vec<usize> = (0..pts.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(1));
        let permuted: Vec<ColoredPoint> = order.iter().map(|&i| pts[i]).collect();
        let a = predict_scene(&pts, &weights).unwrap();
        let b = predict_scene(&permuted, &weights).unwrap();
        for (k, &i) in order.iter().enumerate() {
            for t in 0..5 {
                let (x, y) = (a[5 * i + t], b[5 * k + t]);
                assert!((x.mean - y.mean).norm() < 1e-9 && (x.scale - y.scale).norm() < 1e-9);
                assert_eq!(x.color, y.color);
            }
        }
    }

    #[test]
    fn config_text_round_trip() {
        let text = "# run\nepochs = 20\nbatch-size=16\nlearning_rate = 5e-4\noptimizer = sgd\nscenes = a, b\n";
        let c = TrainConfig::parse(text).unwrap();
        assert_eq!((c.epochs, c.batch_size, c.optimizer), (20, 16, OptimizerKind::Sgd));
        assert_eq!(c.scenes, vec![PathBuf::from("a"), PathBuf::from("b")]);
        assert_eq!(TrainConfig::parse(&c.to_text()).unwrap(), c);
        let err = TrainConfig::parse("epochs = 1\nbogus = 2\n").unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn report_csv_has_one_row_per_epoch() {
        let (_, report) = train(&fixture(16, 14), &small_config(3)).unwrap();
        let csv = report.to_csv();
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.starts_with(TrainReport::CSV_HEADER));
    }
}
