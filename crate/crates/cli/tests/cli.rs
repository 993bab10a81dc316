//! Exit-code and flag plumbing tests for the binary.

use std::process::{Command, Output};

use toonpair_core::fixtures::generate_fixture_corpus;
use toonpair_core::manifest::DatasetManifest;
use toonpair_core::ImageBuffer;

fn toonpair(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toonpair"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(output: &Output) -> i32 {
    output.status.code().expect("exit code present")
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let out = toonpair(&["build"]);
    assert_eq!(code(&out), 2);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--config"), "no usage text: {stderr}");
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = toonpair(&["frobnicate"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn nonexistent_config_is_a_runtime_error() {
    let out = toonpair(&["build", "--config", "/nonexistent/config.json"]);
    assert_eq!(code(&out), 1);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error"), "{stderr}");
}

#[test]
fn validate_is_clean_on_fixture_tree_and_strict_on_damage() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture_corpus(dir.path(), 4, 64, 19).unwrap();
    let config = corpus.config_path.to_str().unwrap().to_string();

    let out = toonpair(&["validate", "--config", &config]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("4 records valid"));

    // Damage one mask; non-strict still exits 0, strict exits 1.
    image::GrayImage::from_pixel(8, 8, image::Luma([255]))
        .save(dir.path().join("mask/rec001.png"))
        .unwrap();
    let out = toonpair(&["validate", "--config", &config]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("DimensionMismatch"));
    let out = toonpair(&["validate", "--config", &config, "--strict"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn cartoonize_subcommand_writes_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let output = dir.path().join("out.png");
    ImageBuffer::from_fn(24, 24, |x, y| {
        [(x as f32) / 23.0, (y as f32) / 23.0, 0.5]
    })
    .save(&input)
    .unwrap();

    let out = toonpair(&[
        "cartoonize",
        "--input",
        input.to_str().unwrap(),
        "--output",
        output.to_str().unwrap(),
        "--quant-levels",
        "4",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let result = ImageBuffer::load(&output).unwrap();
    assert_eq!(result.dimensions(), (24, 24));
    // 4-level quantizer: at most 4 distinct 8-bit values per channel.
    for c in 0..3 {
        let mut values: Vec<u8> = result.to_bytes_rgb8().into_iter().skip(c).step_by(3).collect();
        values.sort_unstable();
        values.dedup();
        assert!(values.len() <= 4, "channel {c} has {} levels", values.len());
    }
}

#[test]
fn build_flags_override_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture_corpus(dir.path(), 4, 64, 23).unwrap();
    let out_dir = dir.path().join("custom_out");

    let out = toonpair(&[
        "build",
        "--config",
        corpus.config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--seed",
        "999",
        "--cutface-ratio",
        "0.5",
        "--feather-radius",
        "1",
        "--jobs",
        "2",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = DatasetManifest::load(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.global_seed, 999);
    assert_eq!(manifest.feather_radius, 1);
    assert_eq!(manifest.summary.composed, 4);
    assert_eq!(manifest.summary.cutface, 2);
}

#[test]
fn analyze_runs_over_a_built_dataset(){
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture_corpus(dir.path(), 4, 64, 29).unwrap();
    let out_dir = dir.path().join("out");
    let report_dir = dir.path().join("report");

    let out = toonpair(&[
        "build",
        "--config",
        corpus.config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let manifest_path = out_dir.join("manifest.json");
    let out = toonpair(&[
        "analyze",
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--out",
        report_dir.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("emd per comparison"), "{stdout}");
    assert!(stdout.contains("background fraction"), "{stdout}");
    assert!(report_dir.join("summary.json").exists());
    assert!(report_dir.join("emd.csv").exists());
}

#[test]
fn external_backend_flags_reach_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate_fixture_corpus(dir.path(), 2, 64, 31).unwrap();
    let out_dir = dir.path().join("out");

    let out = toonpair(&[
        "build",
        "--config",
        corpus.config_path.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--cutface-ratio",
        "0",
        "--backend",
        "external",
        "--backend-template",
        "cp {in} {out}",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest = DatasetManifest::load(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(manifest.summary.composed, 2);

    // Template without placeholders fails config validation at startup.
    let out = toonpair(&[
        "build",
        "--config",
        corpus.config_path.to_str().unwrap(),
        "--out",
        dir.path().join("out2").to_str().unwrap(),
        "--backend",
        "external",
        "--backend-template",
        "cp a b",
    ]);
    assert_eq!(code(&out), 1);
}
