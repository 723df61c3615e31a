use std::process::{Command, Output};

use overlay_sim::bench::corpus::synthetic_image;
use overlay_sim::bench::pgm::write_pgm;
use overlay_sim::overlay::EDGE_DETECT_TOML;

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bench")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(bench(&["--help"]).status.code(), Some(0));
    assert_eq!(bench(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bench(&["run", "--reps", "lots"]).status.code(), Some(1));
}

#[test]
fn run_prints_table_in_each_format() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("img.pgm");
    write_pgm(&img, &synthetic_image(96, 64, 2)).unwrap();
    let img = img.to_str().unwrap();

    let out = bench(&["run", "--image", img, "--reps", "3", "--format", "markdown"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let md = stdout(&out);
    assert!(md.starts_with("| Configuration | Time (s) | Speedup |"));
    assert_eq!(md.lines().count(), 6);
    assert!(md.contains("| naive-1t |") && md.contains("| 1.00 |"));

    let out = bench(&["run", "--image", img, "--reps", "3", "--configs", "naive-1t,optimized", "--format", "csv"]);
    let text = stdout(&out);
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.records().count(), 2);

    let out = bench(&["run", "--image", img, "--reps", "3"]);
    let text = stdout(&out);
    assert!(text.contains("fabric-pipeline time = DMA in"));
    assert!(text.contains("output digest"));
}

#[test]
fn too_few_repetitions_fail() {
    let out = bench(&["run", "--reps", "2", "--configs", "naive-1t"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains('3'));
}

#[test]
fn digest_mismatch_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let overlay = dir.path().join("identity.toml");
    let identity = "taps = [[0,0,0,0,0],[0,0,0,0,0],[0,0,1,0,0],[0,0,0,0,0],[0,0,0,0,0]]\ndivisor = 1";
    std::fs::write(&overlay, EDGE_DETECT_TOML.replacen("pipeline_depth = 4", &format!("pipeline_depth = 4\n{identity}"), 1))
        .unwrap();
    let img = dir.path().join("img.pgm");
    write_pgm(&img, &synthetic_image(64, 48, 3)).unwrap();
    let out = bench(&["verify", "--image", img.to_str().unwrap(), "--overlay", overlay.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("fabric-pipeline"));
}

#[test]
fn cycles_reports_model_and_simulation() {
    let out = bench(&["cycles", "--width", "64", "--height", "48"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    let value = |label: &str| -> u64 {
        let line = text.lines().find(|l| l.starts_with(label)).unwrap();
        line.split_whitespace().last().unwrap().parse().unwrap()
    };
    assert_eq!(value("with register hops"), value("simulated"));
}

#[test]
fn corpus_writes_images() {
    let dir = tempfile::tempdir().unwrap();
    let out = bench(&["corpus", "--out", dir.path().to_str().unwrap(), "--count", "2"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().count(), 2);
}
