use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tokmerge::io::{read_ppm, read_tensor, write_ppm, RgbImage};

const TINY: &str = "\
[model]
attention_mode = joint_space_time
layers = 2
embed_dim = 16
heads = 2
frames = 4
tubelet_t = 2
patch = 4
image_size = 16
has_class_token = true
proportional_attention = true
num_classes = 5

[plan]
strategy = merge
schedule = constant
r = 0
seed = 1

[io]
weights = w.vwts
out_dir = out
";

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_tokmerge"));
    c.env_remove("TOKMERGE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn write_config(dir: &Path, text: &str) -> PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, text).unwrap();
    p
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn genweights(cfg: &Path) {
    let o = run(&["genweights", cfg.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn every_subcommand_has_help() {
    for (cmd, flags) in [
        ("bench", &["--iters", "--warmup", "--sweep", "--no-isolation"][..]),
        ("forward", &[]),
        ("viz", &[]),
        ("probe", &["--layer"]),
        ("schedule", &[]),
        ("genweights", &["--seed"]),
    ] {
        let o = run(&[cmd, "--help"]);
        assert!(o.status.success(), "{cmd}");
        let text = stdout(&o);
        for f in flags {
            assert!(text.contains(f), "{cmd} help lacks {f}");
        }
    }
}

#[test]
fn unknown_flag_is_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let o = run(&["schedule", cfg.to_str().unwrap(), "--fast"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--fast"));
}

#[test]
fn schedule_prints_clamped_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let text = TINY
        .replace("layers = 2", "layers = 12")
        .replace("embed_dim = 16", "embed_dim = 768")
        .replace("heads = 2", "heads = 12")
        .replace("frames = 4", "frames = 16")
        .replace("patch = 4", "patch = 16")
        .replace("image_size = 16", "image_size = 224")
        .replace("has_class_token = true", "has_class_token = false")
        .replace("r = 0", "r = 150");
    let cfg = write_config(dir.path(), &text);
    let o = run(&["schedule", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains(&format!("r = {}", ["150"; 12].join(", "))), "{out}");
    assert!(out.contains("tokens = 1568, 1418, 1268,"), "{out}");
    assert!(out.contains(", 218, 109, 55, 28\n"), "{out}");
}

#[test]
fn genweights_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    genweights(&cfg);
    let first = fs::read(dir.path().join("w.vwts")).unwrap();
    genweights(&cfg);
    assert_eq!(first, fs::read(dir.path().join("w.vwts")).unwrap());
    let o = run(&["genweights", cfg.to_str().unwrap(), "--seed", "4"]);
    assert!(o.status.success());
    assert_ne!(first, fs::read(dir.path().join("w.vwts")).unwrap());
}

#[test]
fn missing_weights_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("weights = w.vwts\n", ""));
    let o = run(&["bench", cfg.to_str().unwrap(), "--sweep", "0"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("weights"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), TINY);
    let o = run(&["forward", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("weights"), "{}", stderr(&o));
}

#[test]
fn config_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("seed = 1", "seed = 1\nspeed = 2"));
    let o = run(&["schedule", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("plan.speed"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), &TINY.replace("num_classes = 5\n", ""));
    let o = run(&["schedule", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("model.num_classes"), "{}", stderr(&o));

    let o = run(&["schedule", dir.path().join("absent.cfg").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn forward_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("r = 0", "r = 4"));
    genweights(&cfg);
    let o = run(&["forward", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("per_layer_counts=29,25"), "{}", stdout(&o));
    let logits = fs::read(dir.path().join("out/logits.vten")).unwrap();
    assert_eq!(read_tensor(dir.path().join("out/logits.vten")).unwrap().dims(), &[5]);
    let o = run(&["forward", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(logits, fs::read(dir.path().join("out/logits.vten")).unwrap());
}

#[test]
fn viz_without_merging_colors_every_patch() {
    let dir = tempfile::tempdir().unwrap();
    let frames = dir.path().join("clip");
    fs::create_dir(&frames).unwrap();
    for i in 0..4 {
        write_ppm(frames.join(format!("{i}.ppm")), &RgbImage::new(16, 16)).unwrap();
    }
    let cfg = write_config(dir.path(), &TINY.replace("[io]\n", "[io]\nvideo_dir = clip\n"));
    genweights(&cfg);
    let o = run(&["viz", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let mut colors = HashSet::new();
    for i in 0..4 {
        let img = read_ppm(dir.path().join(format!("out/clusters_{i:04}.ppm"))).unwrap();
        colors.extend(img.pixels.chunks_exact(3).map(|p| [p[0], p[1], p[2]]));
    }
    assert_eq!(colors.len(), 32);
}

#[test]
fn probe_writes_frames() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &TINY.replace("r = 0", "r = 5"));
    genweights(&cfg);
    let o = run(&["probe", cfg.to_str().unwrap(), "--layer", "1"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("tokens = 23"), "{}", stdout(&o));
    assert!(dir.path().join("out/clusters_0003.ppm").exists());
    let o = run(&["probe", cfg.to_str().unwrap(), "--layer", "2"]);
    assert_eq!(o.status.code(), Some(1));
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r_fraction,predicted_speedup,measured_speedup"));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn bench_sweep_zero() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    genweights(&cfg);
    let o = run(&["bench", cfg.to_str().unwrap(), "--sweep", "0", "--iters", "3", "--warmup", "0"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0][..2], [0.0, 1.0]);
    let results = fs::read_to_string(dir.path().join("out/bench_r0.txt")).unwrap();
    for key in ["config_hash=", "fps=", "speedup=", "flops=", "per_layer_counts=33,33"] {
        assert!(results.contains(key), "{results}");
    }
}

#[test]
fn bench_sweep_predictions_monotone() {
    // ViViT-like layout at reduced width and clip length.
    let dir = tempfile::tempdir().unwrap();
    let text = TINY
        .replace("layers = 2", "layers = 12")
        .replace("embed_dim = 16", "embed_dim = 96")
        .replace("heads = 2", "heads = 4")
        .replace("patch = 4", "patch = 16")
        .replace("image_size = 16", "image_size = 224");
    let cfg = write_config(dir.path(), &text);
    genweights(&cfg);
    let o = bin()
        .args([
            "bench",
            cfg.to_str().unwrap(),
            "--sweep",
            "0,150,300",
            "--iters",
            "3",
            "--warmup",
            "0",
            "--no-isolation",
        ])
        .env("TOKMERGE_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let rows = csv_rows(&dir.path().join("out/sweep.csv"));
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[0][1], 1.0);
    assert!(rows[0][1] < rows[1][1] && rows[1][1] < rows[2][1], "{rows:?}");
}

#[test]
fn bad_thread_count_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    genweights(&cfg);
    let o = bin()
        .args(["bench", cfg.to_str().unwrap(), "--iters", "3"])
        .env("TOKMERGE_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("TOKMERGE_THREADS"));
    let o = run(&["bench", cfg.to_str().unwrap(), "--iters", "2"]);
    assert_eq!(o.status.code(), Some(1));
}
