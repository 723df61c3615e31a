//! `bench`: run the edge-detection configurations and print a speedup table.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use overlay_sim::bench::{
    corpus, cycle_model, pgm, render, run_benchmark, run_fabric_frame, BenchConfigId, BenchError, BenchOptions,
    ReportFormat,
};
use overlay_sim::kernels::{PixelImage, DEFAULT_THRESHOLD};
use overlay_sim::overlay::{load_overlay, LoadedOverlay, EDGE_DETECT_TOML};
use overlay_sim::reference::PipelineParams;

#[derive(Parser)]
#[command(name = "bench", about = "Edge-detection benchmark on a simulated overlay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Input {
    /// Binary PGM input; defaults to a synthetic 1024x768 image seeded by BENCH_SEED.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Overlay descriptor; defaults to the built-in edge-detect overlay.
    #[arg(long)]
    overlay: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Time the configurations and print the speedup table.
    Run {
        #[command(flatten)]
        input: Input,
        #[arg(long, default_value = "naive-1t,threaded-2t,optimized,fabric-pipeline")]
        configs: String,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        #[arg(long, default_value = "text")]
        format: String,
        /// Worker threads for threaded-2t and optimized.
        #[arg(long, default_value_t = 2)]
        threads: usize,
        /// CSV of `config,seconds,digest` rows recorded by the host scripts.
        #[arg(long)]
        script_timings: Option<PathBuf>,
    },
    /// Check that every configuration produces the same edge map.
    Verify {
        #[command(flatten)]
        input: Input,
    },
    /// Print the cycle model of the overlay's pipeline and check it by simulation.
    Cycles {
        #[arg(long)]
        overlay: Option<PathBuf>,
        #[arg(long, default_value_t = corpus::CORPUS_WIDTH)]
        width: usize,
        #[arg(long, default_value_t = corpus::CORPUS_HEIGHT)]
        height: usize,
    },
    /// Write synthetic 1024x768 corpus images.
    Corpus {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 3)]
        count: usize,
    },
}

fn overlay(path: Option<&PathBuf>) -> Result<LoadedOverlay, BenchError> {
    Ok(match path {
        Some(p) => load_overlay(p)?,
        None => LoadedOverlay::from_toml(EDGE_DETECT_TOML)?,
    })
}

fn image(input: &Input) -> Result<PixelImage, BenchError> {
    match &input.image {
        Some(p) => pgm::read_pgm(p),
        None => Ok(corpus::synthetic_image(corpus::CORPUS_WIDTH, corpus::CORPUS_HEIGHT, corpus::seed_from_env())),
    }
}

fn run(command: Command) -> Result<(), BenchError> {
    match command {
        Command::Run { input, configs, reps, warmup, format, threads, script_timings } => {
            let format = ReportFormat::parse(&format)?;
            let configs = BenchConfigId::parse_list(&configs)?;
            let img = image(&input)?;
            let mut o = if configs.contains(&BenchConfigId::FabricPipeline) {
                Some(overlay(input.overlay.as_ref())?)
            } else {
                None
            };
            let opts = BenchOptions {
                configs,
                repetitions: reps,
                warmup,
                params: PipelineParams::default().with_threshold(input.threshold),
                threads,
                script_timings,
            };
            let report = run_benchmark(&img, o.as_mut(), &opts)?;
            print!("{}", render(&report, format));
        }
        Command::Verify { input } => {
            let img = image(&input)?;
            let mut o = overlay(input.overlay.as_ref())?;
            let opts = BenchOptions {
                repetitions: 3,
                warmup: 0,
                params: PipelineParams::default().with_threshold(input.threshold),
                ..BenchOptions::default()
            };
            let report = run_benchmark(&img, Some(&mut o), &opts)?;
            for r in &report.results {
                println!("{:<18} {}", r.config.name(), r.digest);
            }
            println!("all {} configurations agree", report.results.len());
        }
        Command::Cycles { overlay: path, width, height } => {
            let mut o = overlay(path.as_ref())?;
            let model = cycle_model(&o, width, height)?;
            println!("frame {width}x{height}: {} pixels", model.pixels());
            for s in &model.stages {
                println!("  {:<10} {:<12} depth {:>2}  latency {}", s.name, s.kind.name(), s.pipeline_depth, s.latency);
            }
            println!("pixels + latencies        {}", model.ideal());
            println!("with register hops        {}", model.predicted());
            let img = corpus::synthetic_image(width, height, corpus::seed_from_env());
            let (_, b) = run_fabric_frame(&mut o, &img, DEFAULT_THRESHOLD)?;
            println!("simulated                 {}", b.pipeline_cycles);
            println!("compute time at {:.0} MHz  {:.6} s", b.fabric_clock_hz / 1e6, b.compute_seconds);
        }
        Command::Corpus { out, count } => {
            for p in corpus::write_corpus(&out, count, corpus::seed_from_env())? {
                println!("{}", p.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                BenchError::DigestMismatch { .. } => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
