//! Benchmark every native configuration on one image and print the
//! speedup table in all three formats.

use overlay_sim::bench::corpus::{seed_from_env, synthetic_image, CORPUS_HEIGHT, CORPUS_WIDTH};
use overlay_sim::bench::{render, run_benchmark, BenchOptions, ReportFormat};
use overlay_sim::overlay::{LoadedOverlay, EDGE_DETECT_TOML};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let img = synthetic_image(CORPUS_WIDTH, CORPUS_HEIGHT, seed_from_env());
    let mut overlay = LoadedOverlay::from_toml(EDGE_DETECT_TOML)?;
    let opts = BenchOptions { repetitions: 3, ..BenchOptions::default() };
    let report = run_benchmark(&img, Some(&mut overlay), &opts)?;
    println!("{}", render(&report, ReportFormat::Text));
    println!("{}", render(&report, ReportFormat::Markdown));
    print!("{}", render(&report, ReportFormat::Csv));
    Ok(())
}
