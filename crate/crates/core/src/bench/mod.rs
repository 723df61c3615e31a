//! Benchmark harness: run the software and fabric configurations on one
//! image, check that they agree, and build a speedup table.
//!
//! Software configurations are timed on the wall clock. The fabric
//! configuration is timed as simulated DMA-in + pipeline cycles at the
//! fabric clock + simulated DMA-out + the measured wall time of the host's
//! register and transfer setup calls.

pub mod corpus;
pub mod pgm;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub use report::{render, ReportFormat};

use crate::kernels::{EdgeMap, KernelError, KernelKind, PixelImage};
use crate::overlay::{LoadedOverlay, OverlayError};
use crate::reference::{edge_detect_naive, edge_detect_optimized, edge_detect_threaded, PipelineParams};
use crate::switch::{Endpoint, PortId};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("cannot access `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("bad image: {0}")]
    Format(String),
    #[error("baseline `{0}` has no time")]
    MissingBaseline(String),
    #[error("`{config}` has non-positive time {seconds}")]
    NonPositiveTime { config: String, seconds: f64 },
    #[error("output digest of `{config}` is {actual}, expected {expected}")]
    DigestMismatch { config: String, expected: String, actual: String },
    #[error("configuration `{0}` is unavailable")]
    ConfigUnavailable(String),
    #[error("unknown configuration `{0}`")]
    UnknownConfig(String),
    #[error("need at least {min} repetitions, got {got}")]
    TooFewRepetitions { min: usize, got: usize },
    #[error("bad script timings file: {0}")]
    ScriptTimings(String),
    #[error(transparent)]
    Overlay(#[from] OverlayError),
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

impl BenchError {
    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        BenchError::Io { path: path.display().to_string(), message: e.to_string() }
    }
}

pub const MIN_REPETITIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BenchConfigId {
    Naive1t,
    Threaded2t,
    Optimized,
    FabricPipeline,
    /// Optimized pipeline driven from a host script.
    ScriptOptimized,
    /// Fabric pipeline driven from a host script.
    ScriptFabric,
}

impl BenchConfigId {
    pub const ALL: [BenchConfigId; 6] = [
        BenchConfigId::Naive1t,
        BenchConfigId::Threaded2t,
        BenchConfigId::Optimized,
        BenchConfigId::FabricPipeline,
        BenchConfigId::ScriptOptimized,
        BenchConfigId::ScriptFabric,
    ];

    /// The configurations this crate can run by itself.
    pub const NATIVE: [BenchConfigId; 4] =
        [BenchConfigId::Naive1t, BenchConfigId::Threaded2t, BenchConfigId::Optimized, BenchConfigId::FabricPipeline];

    pub fn name(self) -> &'static str {
        match self {
            BenchConfigId::Naive1t => "naive-1t",
            BenchConfigId::Threaded2t => "threaded-2t",
            BenchConfigId::Optimized => "optimized",
            BenchConfigId::FabricPipeline => "fabric-pipeline",
            BenchConfigId::ScriptOptimized => "script-optimized",
            BenchConfigId::ScriptFabric => "script-fabric",
        }
    }

    pub fn parse(s: &str) -> Result<Self, BenchError> {
        Self::ALL.into_iter().find(|c| c.name() == s.trim()).ok_or_else(|| BenchError::UnknownConfig(s.to_string()))
    }

    pub fn parse_list(s: &str) -> Result<Vec<Self>, BenchError> {
        s.split(',').filter(|p| !p.trim().is_empty()).map(Self::parse).collect()
    }

    pub fn is_script(self) -> bool {
        matches!(self, BenchConfigId::ScriptOptimized | BenchConfigId::ScriptFabric)
    }
}

impl fmt::Display for BenchConfigId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `time(baseline) / time(c)` for every entry.
pub fn compute_speedups<K: Ord + Clone + fmt::Display>(
    times: &BTreeMap<K, f64>,
    baseline: &K,
) -> Result<BTreeMap<K, f64>, BenchError> {
    let base = *times.get(baseline).ok_or_else(|| BenchError::MissingBaseline(baseline.to_string()))?;
    for (k, t) in times {
        if !(t.is_finite() && *t > 0.0) {
            return Err(BenchError::NonPositiveTime { config: k.to_string(), seconds: *t });
        }
    }
    Ok(times.iter().map(|(k, t)| (k.clone(), base / t)).collect())
}

/// Hex SHA-256 of the edge map bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest(edges: &EdgeMap) -> String {
    digest_bytes(edges.as_bytes())
}

/// Component-wise time of one fabric frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FabricBreakdown {
    pub dma_in_seconds: f64,
    pub compute_seconds: f64,
    pub dma_out_seconds: f64,
    pub host_overhead_seconds: f64,
    pub pipeline_cycles: u64,
    pub fabric_clock_hz: f64,
}

impl FabricBreakdown {
    pub fn total(&self) -> f64 {
        self.dma_in_seconds + self.compute_seconds + self.dma_out_seconds + self.host_overhead_seconds
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub config: BenchConfigId,
    /// Median over the timed repetitions.
    pub seconds: f64,
    pub speedup: f64,
    pub digest: String,
    pub samples: Vec<f64>,
    /// Median-time frame of the fabric configuration.
    pub breakdown: Option<FabricBreakdown>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub baseline: BenchConfigId,
    pub results: Vec<BenchResult>,
    /// Configurations that were requested but skipped, with the reason.
    pub notices: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub configs: Vec<BenchConfigId>,
    pub repetitions: usize,
    pub warmup: usize,
    pub params: PipelineParams,
    /// Worker threads for the threaded and optimized configurations.
    pub threads: usize,
    /// CSV with `config,seconds,digest` rows from the scripted host.
    pub script_timings: Option<PathBuf>,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            configs: BenchConfigId::NATIVE.to_vec(),
            repetitions: 5,
            warmup: 1,
            params: PipelineParams::default(),
            threads: 2,
            script_timings: None,
        }
    }
}

pub fn median(samples: &[f64]) -> f64 {
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

fn time_software(
    f: impl Fn() -> Result<EdgeMap, KernelError>,
    warmup: usize,
    reps: usize,
) -> Result<(Vec<f64>, String), BenchError> {
    let mut out = None;
    for _ in 0..warmup {
        out = Some(f()?);
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let t = Instant::now();
        let e = f()?;
        samples.push(t.elapsed().as_secs_f64());
        out = Some(e);
    }
    Ok((samples, digest(out.as_ref().expect("at least one run"))))
}

/// Push `img` through the overlay with the given threshold; returns the
/// output bytes and the frame's time breakdown.
pub fn run_fabric_frame(
    overlay: &mut LoadedOverlay,
    img: &PixelImage,
    threshold: u32,
) -> Result<(Vec<u8>, FabricBreakdown), BenchError> {
    let canny: Vec<String> =
        overlay.descriptor().kernels.iter().filter(|k| k.kind == KernelKind::Canny.name()).map(|k| k.name.clone()).collect();
    let control = Instant::now();
    for name in &canny {
        overlay.set_threshold(name, threshold)?;
    }
    let setup = control.elapsed();
    let (source, sink) = overlay
        .default_channels()
        .ok_or_else(|| BenchError::ConfigUnavailable("overlay has no source and sink DMA channels".into()))?;
    let run = overlay.process_frame(&source, &sink, img)?;
    let breakdown = FabricBreakdown {
        dma_in_seconds: run.sent.simulated_seconds,
        compute_seconds: run.compute_seconds(),
        dma_out_seconds: run.received.simulated_seconds,
        host_overhead_seconds: (run.host_overhead + setup).as_secs_f64(),
        pipeline_cycles: run.pipeline_cycles,
        fabric_clock_hz: run.fabric_clock_hz,
    };
    Ok((run.output, breakdown))
}

fn read_script_timings(path: &Path) -> Result<BTreeMap<BenchConfigId, (f64, String)>, BenchError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| BenchError::ScriptTimings(e.to_string()))?;
    let mut out = BTreeMap::new();
    for row in reader.records() {
        let row = row.map_err(|e| BenchError::ScriptTimings(e.to_string()))?;
        let (Some(config), Some(seconds), Some(digest)) = (row.get(0), row.get(1), row.get(2)) else {
            return Err(BenchError::ScriptTimings(format!("expected config,seconds,digest, got {row:?}")));
        };
        let config = BenchConfigId::parse(config)?;
        let seconds: f64 = seconds.trim().parse().map_err(|_| BenchError::ScriptTimings(format!("bad seconds `{seconds}`")))?;
        out.insert(config, (seconds, digest.trim().to_string()));
    }
    Ok(out)
}

/// Run every requested configuration, verify digest unanimity, and build
/// the speedup table. The baseline is `naive-1t` when present, else the
/// first configuration that ran.
pub fn run_benchmark(
    img: &PixelImage,
    mut overlay: Option<&mut LoadedOverlay>,
    opts: &BenchOptions,
) -> Result<BenchReport, BenchError> {
    if opts.repetitions < MIN_REPETITIONS {
        return Err(BenchError::TooFewRepetitions { min: MIN_REPETITIONS, got: opts.repetitions });
    }
    let threaded = opts.params.clone().with_threads(opts.threads);
    let naive = opts.params.clone().with_threads(1);
    let script = match &opts.script_timings {
        Some(p) => Some(read_script_timings(p)?),
        None => None,
    };
    let mut notices = Vec::new();
    let mut rows: Vec<(BenchConfigId, Vec<f64>, String, Option<FabricBreakdown>)> = Vec::new();
    for &config in &opts.configs {
        let (samples, digest, breakdown) = match config {
            BenchConfigId::Naive1t => {
                let (s, d) = time_software(|| edge_detect_naive(img, &naive), opts.warmup, opts.repetitions)?;
                (s, d, None)
            }
            BenchConfigId::Threaded2t => {
                let (s, d) = time_software(|| edge_detect_threaded(img, &threaded), opts.warmup, opts.repetitions)?;
                (s, d, None)
            }
            BenchConfigId::Optimized => {
                let (s, d) = time_software(|| edge_detect_optimized(img, &threaded), opts.warmup, opts.repetitions)?;
                (s, d, None)
            }
            BenchConfigId::FabricPipeline => {
                let o = overlay
                    .as_deref_mut()
                    .ok_or_else(|| BenchError::ConfigUnavailable("fabric-pipeline needs an overlay".into()))?;
                for _ in 0..opts.warmup {
                    run_fabric_frame(o, img, opts.params.threshold)?;
                }
                let mut frames = Vec::new();
                let mut output = Vec::new();
                for _ in 0..opts.repetitions {
                    let (bytes, b) = run_fabric_frame(o, img, opts.params.threshold)?;
                    frames.push(b);
                    output = bytes;
                }
                let samples: Vec<f64> = frames.iter().map(FabricBreakdown::total).collect();
                let med = median(&samples);
                let closest = frames
                    .iter()
                    .min_by(|a, b| (a.total() - med).abs().total_cmp(&(b.total() - med).abs()))
                    .copied();
                (samples, digest_bytes(&output), closest)
            }
            BenchConfigId::ScriptOptimized | BenchConfigId::ScriptFabric => {
                match script.as_ref().and_then(|s| s.get(&config)) {
                    Some((seconds, d)) => (vec![*seconds], d.clone(), None),
                    None => {
                        notices.push(format!(
                            "{config} skipped: no timing from the scripted host (run the host scripts and pass --script-timings)"
                        ));
                        continue;
                    }
                }
            }
        };
        if let Some(expected) = rows.first().map(|r| r.2.clone()) {
            if digest != expected {
                return Err(BenchError::DigestMismatch { config: config.name().into(), expected, actual: digest });
            }
        }
        rows.push((config, samples, digest, breakdown));
    }
    let Some(first) = rows.first() else {
        return Err(BenchError::ConfigUnavailable("no configuration could run".into()));
    };
    let baseline = if rows.iter().any(|r| r.0 == BenchConfigId::Naive1t) { BenchConfigId::Naive1t } else { first.0 };
    let times: BTreeMap<BenchConfigId, f64> = rows.iter().map(|r| (r.0, median(&r.1))).collect();
    let speedups = compute_speedups(&times, &baseline)?;
    let results = rows
        .into_iter()
        .map(|(config, samples, digest, breakdown)| BenchResult {
            config,
            seconds: times[&config],
            speedup: speedups[&config],
            digest,
            samples,
            breakdown,
        })
        .collect();
    Ok(BenchReport { baseline, results, notices })
}

/// One kernel on the active route from the source channel to the sink.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageLatency {
    pub name: String,
    pub kind: KernelKind,
    pub pipeline_depth: u32,
    pub latency: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleModel {
    pub width: usize,
    pub height: usize,
    pub stages: Vec<StageLatency>,
}

impl CycleModel {
    pub fn pixels(&self) -> u64 {
        (self.width * self.height) as u64
    }

    /// `pixels + sum of kernel latencies`: one pixel per cycle plus the
    /// fill time of every line buffer and register chain.
    pub fn ideal(&self) -> u64 {
        self.pixels() + self.stages.iter().map(|s| s.latency).sum::<u64>()
    }

    /// [`CycleModel::ideal`] plus one switch register hop per kernel and
    /// one for the sink channel to retire the last token. This is the exact
    /// count from arming the source DMA to the sink's completion.
    pub fn predicted(&self) -> u64 {
        self.ideal() + self.stages.len() as u64 + 1
    }

    pub fn seconds(&self, clock_hz: f64) -> f64 {
        self.predicted() as f64 / clock_hz
    }
}

/// Follow the overlay's routes from its source DMA channel and collect the
/// latency of every kernel on the way to the sink.
pub fn cycle_model(overlay: &LoadedOverlay, width: usize, height: usize) -> Result<CycleModel, BenchError> {
    let (source, _) = overlay
        .default_channels()
        .ok_or_else(|| BenchError::ConfigUnavailable("overlay has no source and sink DMA channels".into()))?;
    let fabric = overlay.fabric();
    let sw = fabric.switch();
    let mut producer: PortId = sw.find(&Endpoint::new(&source, "stream")).expect("channel port exists");
    let mut stages = Vec::new();
    for _ in 0..=fabric.kernels().len() {
        let consumer = sw
            .config()
            .consumer_of(producer)
            .ok_or_else(|| BenchError::ConfigUnavailable(format!("route from port {producer} is open")))?;
        let component = &sw.endpoint(consumer).map_err(OverlayError::from)?.component;
        let Some(id) = fabric.kernel_by_name(component) else {
            return Ok(CycleModel { width, height, stages });
        };
        let slot = fabric.kernel(id).expect("id from lookup");
        let kind = slot.kernel.kind();
        let pipeline_depth = slot.kernel.params().pipeline_depth;
        stages.push(StageLatency {
            name: slot.name.clone(),
            kind,
            pipeline_depth,
            latency: kind.latency(width, pipeline_depth)?,
        });
        producer = slot.output;
    }
    Err(BenchError::ConfigUnavailable("routes form a loop".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::overlay::{OverlayDescriptor, EDGE_DETECT_TOML};

    fn edge() -> LoadedOverlay {
        LoadedOverlay::from_descriptor(OverlayDescriptor::parse(EDGE_DETECT_TOML).unwrap()).unwrap()
    }

    #[test]
    fn speedup_of_baseline_is_one() {
        let times = BTreeMap::from([("a", 0.3), ("b", 0.1)]);
        let s = compute_speedups(&times, &"a").unwrap();
        assert_eq!(s["a"], 1.0);
        assert!((s["b"] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn missing_baseline() {
        let times = BTreeMap::from([("a", 0.3)]);
        assert_eq!(compute_speedups(&times, &"z"), Err(BenchError::MissingBaseline("z".into())));
        let times = BTreeMap::from([("a", 0.3), ("b", 0.0)]);
        assert!(matches!(compute_speedups(&times, &"a"), Err(BenchError::NonPositiveTime { .. })));
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn config_names_round_trip() {
        for c in BenchConfigId::ALL {
            assert_eq!(BenchConfigId::parse(c.name()).unwrap(), c);
        }
        assert!(BenchConfigId::parse("gpu").is_err());
        assert_eq!(BenchConfigId::parse_list("naive-1t, optimized").unwrap().len(), 2);
    }

    #[test]
    fn model_matches_simulation() {
        let mut o = edge();
        let img = corpus::synthetic_image(40, 12, 1);
        let model = cycle_model(&o, 40, 12).unwrap();
        assert_eq!(model.stages.len(), 2);
        let (_, b) = run_fabric_frame(&mut o, &img, 128).unwrap();
        assert_eq!(b.pipeline_cycles, model.predicted());
    }

    #[test]
    fn too_few_reps() {
        let img = PixelImage::filled(8, 8, 0);
        let opts = BenchOptions { repetitions: 2, ..Default::default() };
        assert_eq!(
            run_benchmark(&img, None, &opts).unwrap_err(),
            BenchError::TooFewRepetitions { min: 3, got: 2 }
        );
    }

    #[test]
    fn script_rows_skipped_with_notice() {
        let img = corpus::synthetic_image(16, 16, 2);
        let opts = BenchOptions {
            configs: vec![BenchConfigId::Naive1t, BenchConfigId::ScriptFabric],
            repetitions: 3,
            warmup: 0,
            ..Default::default()
        };
        let r = run_benchmark(&img, None, &opts).unwrap();
        assert_eq!(r.results.len(), 1);
        assert_eq!(r.notices.len(), 1);
    }
}
