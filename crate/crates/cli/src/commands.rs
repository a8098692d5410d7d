use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use gsnet_core::eval::evaluate;
use gsnet_core::io::{self, PlyFormat, PointFormat};
use gsnet_core::synth::{self, SceneSpec};
use gsnet_core::train::{self, TrainConfig};
use gsnet_core::{build_training_set, render, CameraView, ColoredPoint, Error, GaussianPrimitive, NetworkWeights, DENSIFY_FACTOR};

use crate::{Cli, Command, EvalArgs, GenArgs, IngestArgs, PairArgs, PredictArgs, RenderArgs, TrainArgs};

pub const WEIGHTS_FILE: &str = "weights.gsnw";
pub const TRAIN_REPORT_FILE: &str = "train_report.csv";
pub const TRAIN_CONFIG_FILE: &str = "train_config.txt";
pub const PAIRS_FILE: &str = "pairs.csv";
pub const PREDICTED_FILE: &str = "predicted.ply";
pub const EVAL_TABLE_FILE: &str = "eval.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval_summary.txt";

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Gen(a) => gen(a, cli.seed),
        Command::Ingest(a) => ingest(a),
        Command::Pair(a) => pair(a),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Predict(a) => predict(a),
        Command::Render(a) => render_cmd(a),
        Command::Eval(a) => eval(a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.to_path_buf(), source: e }).map_err(Into::into)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e }.into())
}

struct SceneData {
    sparse: Vec<ColoredPoint>,
    gt: Vec<GaussianPrimitive>,
    cameras: Vec<CameraView>,
}

fn load_scene(dir: &Path) -> Result<SceneData> {
    let ctx = || format!("reading scene {}", dir.display());
    Ok(SceneData {
        sparse: io::read_point_cloud(dir.join(synth::SPARSE_FILE), PointFormat::Ply).with_context(ctx)?,
        gt: io::read_gaussians_3dgs_ply(dir.join(synth::GT_FILE)).with_context(ctx)?,
        cameras: io::read_cameras(dir.join(synth::CAMERAS_FILE)).with_context(ctx)?,
    })
}

fn load_checked_weights(path: &Path) -> Result<NetworkWeights> {
    let weights = io::load_weights(path).with_context(|| format!("loading {}", path.display()))?;
    if weights.arch.densify != DENSIFY_FACTOR {
        return Err(Error::Config(format!(
            "checkpoint predicts {} primitives per point but scenes are paired with {DENSIFY_FACTOR}",
            weights.arch.densify
        ))
        .into());
    }
    Ok(weights)
}

fn gen(a: &GenArgs, seed: u64) -> Result<()> {
    let spec = SceneSpec {
        seed,
        layout: a.layout,
        dense_count: a.dense_count,
        sparse_fraction: a.sparse_fraction,
        camera_count: a.cameras,
        ring_radius: a.ring_radius,
        texture: a.texture,
        width: a.width,
        height: a.height,
    };
    let scene = synth::generate_scene(&spec)?;
    let gt = synth::heuristic_gaussians(&scene.dense)?;
    synth::write_scene_dir(&a.out, &scene, &gt)?;
    println!(
        "scene={}\nlayout={}\ndense={}\nsparse={}\ncameras={}",
        a.out.display(),
        spec.layout,
        scene.dense.len(),
        scene.sparse.len(),
        scene.cameras.len()
    );
    Ok(())
}

fn ingest(a: &IngestArgs) -> Result<()> {
    let points = io::read_point_cloud(&a.input, a.format)?;
    for (i, p) in points.iter().enumerate() {
        p.validate().with_context(|| format!("point {i}"))?;
    }
    create_dir(&a.out)?;
    let path = a.out.join(synth::SPARSE_FILE);
    io::write_point_cloud(&points, &path, PlyFormat::BinaryLittleEndian)?;
    println!("points={}\nwritten={}", points.len(), path.display());
    Ok(())
}

fn pair(a: &PairArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let samples = build_training_set(&scene.sparse, &scene.gt)?;
    create_dir(&a.out)?;
    let mut csv = String::from("anchor,target_ids,target_distances\n");
    for (i, s) in samples.iter().enumerate() {
        let ids: Vec<String> = s.target_ids.iter().map(usize::to_string).collect();
        let dists: Vec<String> = s.target_distances.iter().map(|d| format!("{d:e}")).collect();
        let _ = writeln!(csv, "{i},{},{}", ids.join(" "), dists.join(" "));
    }
    write_text(&a.out.join(PAIRS_FILE), &csv)?;
    println!("samples={}\nscene_scale={:e}", samples.len(), samples.first().map_or(0.0, |s| s.scene_scale));
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let mut config = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            TrainConfig::parse(&text)?
        }
        None => TrainConfig::default(),
    };
    config.seed = seed;
    config.scenes = a.scenes.clone();
    if let Some(v) = a.epochs {
        config.epochs = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = a.optimizer {
        config.optimizer = v;
    }
    if let Some(v) = a.validation_fraction {
        config.validation_fraction = v;
    }
    config.validate()?;

    let mut scenes = BTreeMap::new();
    for (i, dir) in a.scenes.iter().enumerate() {
        let scene = load_scene(dir)?;
        let samples = build_training_set(&scene.sparse, &scene.gt)?;
        log::info!("{}: {} samples", dir.display(), samples.len());
        // Keyed by position so repeated directories stay distinct.
        scenes.insert(format!("{i:04}:{}", dir.display()), samples);
    }
    let initial = match &a.init {
        Some(path) => {
            let w = load_checked_weights(path)?;
            config.architecture = w.arch;
            w
        }
        None => NetworkWeights::random(config.architecture, config.seed),
    };

    let start = Instant::now();
    let (weights, report) = train::train_from(&scenes, &config, initial)?;
    create_dir(&a.out)?;
    io::save_weights(&weights, a.out.join(WEIGHTS_FILE))?;
    write_text(&a.out.join(TRAIN_REPORT_FILE), &report.to_csv())?;
    write_text(&a.out.join(TRAIN_CONFIG_FILE), &config.to_text())?;
    println!(
        "epochs={}\ninitial_loss={}\nfinal_loss={}\nseconds={:.3}",
        report.epochs.len(),
        report.initial_loss.map_or("none".into(), |v| format!("{v:e}")),
        report.final_train_loss().map_or("none".into(), |v| format!("{v:e}")),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn predict(a: &PredictArgs) -> Result<()> {
    let input: PathBuf = match (&a.input, &a.scene) {
        (Some(p), _) => p.clone(),
        (None, Some(dir)) => dir.join(synth::SPARSE_FILE),
        (None, None) => unreachable!("clap requires one of --input/--scene"),
    };
    let sparse = io::read_point_cloud(&input, PointFormat::Ply)?;
    let weights = load_checked_weights(&a.weights)?;
    let start = Instant::now();
    let (primitives, degenerate) = train::predict_scene_counted(&sparse, &weights)?;
    create_dir(&a.out)?;
    io::write_gaussians_3dgs_ply(&primitives, a.out.join(PREDICTED_FILE))?;
    println!(
        "input_points={}\nprimitives={}\ndegenerate_rotations={degenerate}\nseconds={:.3}",
        sparse.len(),
        primitives.len(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn render_cmd(a: &RenderArgs) -> Result<()> {
    let primitives = io::read_gaussians_3dgs_ply(&a.gaussians)?;
    let cameras = io::read_cameras(&a.cameras)?;
    create_dir(&a.out)?;
    for (k, cam) in cameras.iter().enumerate() {
        io::write_ppm(&render::render(&primitives, cam), a.out.join(synth::view_file_name(k)))?;
    }
    println!("views={}", cameras.len());
    Ok(())
}

fn eval(a: &EvalArgs) -> Result<()> {
    let scene = load_scene(&a.scene)?;
    let weights = load_checked_weights(&a.weights)?;
    let report = evaluate(&scene.sparse, &scene.gt, &scene.cameras, &weights)?;
    create_dir(&a.out)?;
    write_text(&a.out.join(EVAL_TABLE_FILE), &report.to_csv())?;
    write_text(&a.out.join(EVAL_SUMMARY_FILE), &report.summary())?;
    print!("{}", report.summary());
    for (s, secs) in &report.timings {
        println!("{s}.build_seconds={secs:.3}");
    }
    Ok(())
}
