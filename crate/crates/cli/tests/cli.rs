use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn gsnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsnet")).args(args).output().expect("spawn gsnet")
}

fn ok(args: &[&str]) -> String {
    let out = gsnet(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn gen_small(dir: &Path, seed: u64, layout: &str) {
    let seed = seed.to_string();
    ok(&[
        "--seed", &seed, "gen", "--layout", layout, "--dense-count", "3000", "--cameras", "4", "--width", "40",
        "--height", "30", "--out", dir.to_str().unwrap(),
    ]);
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_writes_scene_files() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("s");
    gen_small(&scene, 1, "street-corridor");
    for f in ["dense.ply", "sparse.ply", "gt_gaussians.ply", "cameras.txt", "views/00.ppm", "views/03.ppm"] {
        assert!(scene.join(f).is_file(), "missing {f}");
    }
}

#[test]
fn gen_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(&tmp.path().join("a"), 9, "random-primitives");
    gen_small(&tmp.path().join("b"), 9, "random-primitives");
    for f in ["dense.ply", "sparse.ply", "gt_gaussians.ply", "cameras.txt", "views/01.ppm"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(gsnet(&["gen"]).status.code(), Some(2));
    assert_eq!(gsnet(&["gen", "--layout", "cave", "--out", "x"]).status.code(), Some(2));
}

#[test]
fn unreadable_scene_exits_1_with_module_tag() {
    let tmp = tempfile::tempdir().unwrap();
    let out = gsnet(&["pair", "--scene", p(&tmp.path().join("nope")), "--out", p(tmp.path())]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.starts_with("error [io]"), "{err}");
}

#[test]
fn zero_epochs_keeps_initialization() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("s");
    gen_small(&scene, 2, "box-room");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["--seed", "4", "train", "--scene", p(&scene), "--epochs", "0", "--out", p(&a)]);
    ok(&["--seed", "4", "train", "--scene", p(&scene), "--epochs", "0", "--out", p(&b)]);
    assert_eq!(fs::read(a.join("weights.gsnw")).unwrap(), fs::read(b.join("weights.gsnw")).unwrap());
    let report = fs::read_to_string(a.join("train_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 1);

    ok(&["--seed", "5", "train", "--scene", p(&scene), "--epochs", "0", "--out", p(&b)]);
    assert_ne!(fs::read(a.join("weights.gsnw")).unwrap(), fs::read(b.join("weights.gsnw")).unwrap());
}

#[test]
fn training_report_has_one_row_per_epoch() {
    let tmp = tempfile::tempdir().unwrap();
    let (s1, s2, out) = (tmp.path().join("s1"), tmp.path().join("s2"), tmp.path().join("t"));
    gen_small(&s1, 1, "box-room");
    gen_small(&s2, 2, "street-corridor");
    let stdout = ok(&["train", "--scene", p(&s1), p(&s2), "--epochs", "50", "--batch-size", "32", "--out", p(&out)]);
    assert!(stdout.contains("epochs=50"));
    let report = fs::read_to_string(out.join("train_report.csv")).unwrap();
    let lines: Vec<&str> = report.lines().collect();
    assert_eq!(lines.len(), 51);
    assert!(lines[0].starts_with("epoch,train_loss,val_loss"));
    let first: f64 = lines[1].split(',').nth(1).unwrap().parse().unwrap();
    let last: f64 = lines[50].split(',').nth(1).unwrap().parse().unwrap();
    assert!(last < first);
}

#[test]
fn config_file_is_read_and_flags_override() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("s");
    gen_small(&scene, 3, "box-room");
    let cfg = tmp.path().join("train.cfg");
    fs::write(&cfg, "# small run\nepochs = 3\nbatch-size = 16\noptimizer = sgd\nlearning_rate = 0.01\n").unwrap();
    let out = tmp.path().join("t");
    ok(&["train", "--scene", p(&scene), "--config", p(&cfg), "--epochs", "2", "--out", p(&out)]);
    let written = fs::read_to_string(out.join("train_config.txt")).unwrap();
    assert!(written.contains("epochs = 2\n"), "{written}");
    assert!(written.contains("optimizer = sgd\n") && written.contains("batch_size = 16\n"), "{written}");

    fs::write(&cfg, "epochs = many\n").unwrap();
    let bad = gsnet(&["train", "--scene", p(&scene), "--config", p(&cfg), "--out", p(&out)]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("line 1"));
}

#[test]
fn predict_and_eval_report_expected_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let (scene, t, pr, ev) = (tmp.path().join("s"), tmp.path().join("t"), tmp.path().join("p"), tmp.path().join("e"));
    gen_small(&scene, 6, "box-room");
    ok(&["train", "--scene", p(&scene), "--epochs", "2", "--batch-size", "32", "--out", p(&t)]);
    let weights = t.join("weights.gsnw");
    let stdout = ok(&["predict", "--scene", p(&scene), "--weights", p(&weights), "--out", p(&pr)]);
    assert!(stdout.contains("input_points=150"), "{stdout}");
    assert!(stdout.contains("primitives=750"), "{stdout}");

    let views = tmp.path().join("v");
    ok(&["render", "--gaussians", p(&pr.join("predicted.ply")), "--cameras", p(&scene.join("cameras.txt")), "--out", p(&views)]);
    assert!(views.join("03.ppm").is_file());

    ok(&["eval", "--scene", p(&scene), "--weights", p(&weights), "--out", p(&ev)]);
    let csv = fs::read_to_string(ev.join("eval.csv")).unwrap();
    // Two held-out views per strategy with four cameras.
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    for line in csv.lines().skip(1).filter(|l| l.contains("dense")) {
        let psnr: f64 = line.split(',').nth(2).unwrap().parse().unwrap();
        assert_eq!(psnr, 99.0);
    }
    let summary = fs::read_to_string(ev.join("eval_summary.txt")).unwrap();
    assert!(summary.contains("psnr_gain_db"));
}
