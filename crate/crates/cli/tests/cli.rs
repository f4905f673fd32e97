use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rangeseg"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// The `occluded` count printed on the line starting with `label`.
fn occluded(text: &str, label: &str) -> usize {
    let line = text.lines().find(|l| l.starts_with(label)).unwrap();
    let words: Vec<&str> = line.split_whitespace().collect();
    let at = words.iter().position(|w| *w == "occluded").unwrap();
    words[at + 1].parse().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let o = run(&["project", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    assert_eq!(run(&[]).status.code(), Some(2));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_is_a_runtime_error_naming_the_path() {
    let o = run(&["project", "/no/such/scan.bin", "--out", "/tmp/x.rimg"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/no/such/scan.bin"), "{}", stderr(&o));
}

#[test]
fn synth_then_project_unfold_has_no_occlusions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let o = run(&[
        "synth",
        "--random",
        "1",
        "--seed",
        "3",
        "--out-dir",
        d.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bin = d.join("random_3.bin");
    let label = d.join("random_3.label");
    let rimg = d.join("out.rimg");
    let pgm = d.join("out.pgm");
    let ppm = d.join("out.ppm");
    let o = run(&[
        "project",
        bin.to_str().unwrap(),
        "--labels",
        label.to_str().unwrap(),
        "--out",
        rimg.to_str().unwrap(),
        "--preview",
        pgm.to_str().unwrap(),
        "--class-preview",
        ppm.to_str().unwrap(),
        "--mode",
        "unfold",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(occluded(&stdout(&o), "unfold"), 0);
    let img = rangeseg::cloud_io::read_range_image(&rimg).unwrap();
    assert_eq!((img.height(), img.width()), (64, 2048));
    assert!(std::fs::read(&pgm).unwrap().starts_with(b"P5\n2048 64\n255\n"));
    assert!(std::fs::read(&ppm).unwrap().starts_with(b"P6\n2048 64\n255\n"));

    let ego = d.join("random_3.ego.bin");
    let o = run(&[
        "project",
        ego.to_str().unwrap(),
        "--out",
        rimg.to_str().unwrap(),
        "--mode",
        "ego",
        "--fov-down",
        "-25",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(occluded(&stdout(&o), "ego") > 0);
}

#[test]
fn stats_reports_more_ego_occlusions() {
    let o = run(&["stats", "--random", "2", "--velocity", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let blocks: Vec<&str> = text.split("random_").skip(1).collect();
    assert_eq!(blocks.len(), 2);
    for b in blocks {
        assert!(occluded(b, "ego") > occluded(b, "unfold"), "{b}");
    }
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

#[test]
fn train_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("train.toml");
    write(
        &cfg,
        r#"
steps = 2
batch_size = 1
[network]
filters = [4, 4, 4, 4, 4, 4]
blocks = [1, 0, 0, 0, 0, 0]
num_classes = 4
[data]
scans = 2
height = 8
width = 64
"#,
    );
    let run_dir = d.join("run");
    let o = run(&["train", cfg.to_str().unwrap(), "--out-dir", run_dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("trained 2 steps"));
    let report: toml::Table = std::fs::read_to_string(run_dir.join("report.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(report["loss_trace"].as_array().unwrap().len(), 2);
    assert!(report.contains_key("val"));

    let weights = run_dir.join("weights.bin");
    let o = run(&[
        "eval",
        cfg.to_str().unwrap(),
        "--weights",
        weights.to_str().unwrap(),
        "--split",
        "train",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("pixel mIoU"));

    let o = run(&["eval", "--weights", weights.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "default network does not fit the saved weights"
    );
    assert!(stderr(&o).contains("stem.conv.weight"), "{}", stderr(&o));
}

#[test]
fn bad_config_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    write(&cfg, "steps = 0\n");
    let o = run(&["train", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("bad.toml"), "{}", stderr(&o));
}

#[test]
fn bench_prints_ratio() {
    let o = run(&[
        "bench",
        "--height",
        "4",
        "--width",
        "64",
        "--reps",
        "1",
        "--configs",
        "A,D,R*",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("time(D) / time(R*)"));
}
