use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cylsar::container::{load_cube, sha256_file};

const GOLDEN_CUBE_SHA256: &str = "da0ff28c922d669ee71b304a36f2c069bbce092d060eda1a42472ffec70752d3";

fn cylsar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cylsar"))
        .args(args)
        .output()
        .expect("spawn cylsar")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn field(report: &str, key: &str) -> f64 {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from\n{report}"))
        .parse()
        .unwrap()
}

#[test]
fn golden_cube_checksum() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cube.bin");
    let o = cylsar(&["simulate", s(&scenario("golden.toml")), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(sha256_file(&out).unwrap(), GOLDEN_CUBE_SHA256);
    let meta = fs::read_to_string(dir.path().join("cube.bin.meta.toml")).unwrap();
    assert!(meta.contains("seed = 20240611"));
    assert!(meta.contains(&sha256_file(&scenario("golden.toml")).unwrap()));
}

#[test]
fn unknown_flag_and_subcommand_are_usage_errors() {
    assert_eq!(cylsar(&["simulate", "--frobnicate"]).status.code(), Some(2));
    assert_eq!(cylsar(&["bogus"]).status.code(), Some(2));
    assert_eq!(cylsar(&[]).status.code(), Some(2));
}

#[test]
fn zero_fov_is_usage_error() {
    let o = cylsar(&["resolution", "--fov-deg", "30,0"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(cylsar(&["resolution", "--fov-deg", "400"]).status.code(), Some(2));
}

#[test]
fn missing_seed_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("golden.toml")).unwrap();
    let bad = dir.path().join("noseed.toml");
    fs::write(&bad, text.replace("seed = 20240611\n", "")).unwrap();
    let o = cylsar(&["simulate", s(&bad), "-o", s(&dir.path().join("c.bin"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn missing_input_file_is_validation_error() {
    let o = cylsar(&["motion", "/nonexistent/cube.bin"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn empty_noiseless_scene_gives_zero_cube() {
    let dir = tempfile::tempdir().unwrap();
    let sc = dir.path().join("empty.toml");
    fs::write(&sc, "schema = \"cylsar-scenario/1\"\nseed = 1\nnoise_std = 0.0\n").unwrap();
    let out = dir.path().join("c.bin");
    let o = cylsar(&["simulate", s(&sc), "-o", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cube = load_cube(&out).unwrap();
    assert!(!cube.samples().is_empty());
    assert!(cube.samples().iter().all(|c| c.re == 0.0 && c.im == 0.0));
}

#[test]
fn resolution_csv_is_monotone_and_in_degrees() {
    let o = cylsar(&["resolution", "--fov-deg", "30,60,90,180"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<(f64, f64)> = text
        .lines()
        .skip(1)
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let (a, b) = l.split_once(',').unwrap();
            (a.parse().unwrap(), b.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), [30.0, 60.0, 90.0, 180.0]);
    assert!(rows.windows(2).all(|w| w[1].1 < w[0].1), "{text}");
    assert!(text.contains("# closed_form_deg=0.97"), "{text}");
}

#[test]
fn omni_full_turn_matches_closed_form() {
    let o = cylsar(&["resolution", "--fov-deg", "360", "--pattern", "omni"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let width: f64 = text.lines().nth(1).unwrap().split(',').nth(1).unwrap().parse().unwrap();
    let closed = 0.36f64 * 0.0038 / 0.08;
    assert!((width.to_radians() / closed - 1.0).abs() < 0.03, "{width}");
}

#[test]
fn static_pipeline_reports_zero_speed() {
    let dir = tempfile::tempdir().unwrap();
    let o = cylsar(&["pipeline", s(&scenario("static5.toml")), "--out-dir", s(dir.path())]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report = stdout(&o);
    assert!(field(&report, "imaging_speed_m_s") < 0.01, "{report}");
    assert!(field(&report, "chamfer_3d_m") < 0.05, "{report}");
    assert!(dir.path().join("cloud.ply").exists());
    assert!(dir.path().join("report.txt.meta.toml").exists());
    assert!(!dir.path().join("cube.bin").exists());
}

#[test]
fn compensation_beats_no_compensation() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(scenario("golden.toml")).unwrap();
    let sc = dir.path().join("fast.toml");
    fs::write(&sc, text.replace("speed_m_s = 0.3", "speed_m_s = 0.4")).unwrap();
    let run = |extra: &[&str]| {
        let out = dir.path().join(extra.len().to_string());
        let mut args = vec!["pipeline", s(&sc), "--out-dir", s(&out)];
        args.extend_from_slice(extra);
        let o = cylsar(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        field(&stdout(&o), "chamfer_3d_m")
    };
    let with = run(&[]);
    let without = run(&["--no-compensation"]);
    assert!(without > with, "{without} vs {with}");
}

#[test]
fn composed_subcommands_match_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = |n: &str| dir.path().join(n);
    let golden = scenario("golden.toml");
    assert!(cylsar(&["pipeline", s(&golden), "--out-dir", s(&d("p"))]).status.success());
    assert!(cylsar(&["simulate", s(&golden), "-o", s(&d("c.bin"))]).status.success());
    let o = cylsar(&["motion", s(&d("c.bin")), "-o", s(&d("m.txt")), "--spectrograms", s(&d("spec"))]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(d("spec").join("peaks.csv").exists());
    let o = cylsar(&[
        "image", s(&d("c.bin")), "-o", s(&d("h.bin")), "--motion", s(&d("m.txt")),
        "--azimuth-bins", "256", "--elevation-bins", "8", "--range-bins", "160",
        "--elevation-min-deg", "-10", "--elevation-max-deg", "10",
        "--range-image", s(&d("ri.pgm")),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        sha256_file(&d("h.bin")).unwrap(),
        sha256_file(&d("p").join("heatmap.bin")).unwrap()
    );
    assert!(cylsar(&["pointcloud", s(&d("h.bin")), "-o", s(&d("x.ply"))]).status.success());
    let o = cylsar(&["metrics", s(&d("x.ply")), "--truth", s(&d("p").join("cloud.ply"))]);
    assert_eq!(field(&stdout(&o), "chamfer_3d_m"), 0.0);
    let o = cylsar(&["metrics", s(&d("ri.pgm")), "--truth", s(&d("p").join("range_image.pgm"))]);
    assert_eq!(field(&stdout(&o), "range_mae_m"), 0.0);
}

#[test]
fn image_motion_arguments_are_exclusive() {
    let o = cylsar(&["image", "c.bin", "-o", "h.bin", "--no-compensation", "--speed", "0.1", "--heading-deg", "3"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cylsar(&["image", "c.bin", "-o", "h.bin", "--speed", "0.1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = cylsar(&["image", "c.bin", "-o", "h.bin"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn sweep_zero_row_equals_ground_truth_pipeline() {
    let o = cylsar(&["sweep-motion-error", s(&scenario("static5.toml")), "--dv-mm-s", "0,8.48", "--dtheta-deg", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert!((rows[1][0] - 0.00848).abs() < 1e-9);
    let dir = tempfile::tempdir().unwrap();
    let p = cylsar(&[
        "pipeline", s(&scenario("static5.toml")), "--out-dir", s(dir.path()),
        "--motion-source", "ground-truth",
    ]);
    let base = field(&stdout(&p), "chamfer_3d_m");
    assert!((rows[0][3] - base).abs() < 1e-6, "{} vs {base}", rows[0][3]);
    assert!(rows[1][3] < 1.2 * rows[0][3], "{text}");
}
