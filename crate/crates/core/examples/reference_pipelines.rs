//! Run the three software pipelines on the same image, time them and check
//! that their outputs are identical.

use std::time::Instant;

use overlay_sim::bench::corpus::{seed_from_env, synthetic_image, CORPUS_HEIGHT, CORPUS_WIDTH};
use overlay_sim::bench::digest;
use overlay_sim::kernels::{EdgeMap, KernelError, PixelImage};
use overlay_sim::reference::{edge_detect_naive, edge_detect_optimized, edge_detect_threaded, PipelineParams};

type Pipeline = fn(&PixelImage, &PipelineParams) -> Result<EdgeMap, KernelError>;

fn main() -> Result<(), KernelError> {
    let img = synthetic_image(CORPUS_WIDTH, CORPUS_HEIGHT, seed_from_env());
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get().max(2));
    let runs: [(&str, PipelineParams, Pipeline); 3] = [
        ("naive", PipelineParams::default(), edge_detect_naive),
        ("threaded", PipelineParams::default().with_threads(threads), edge_detect_threaded),
        ("optimized", PipelineParams::default().with_threads(threads), edge_detect_optimized),
    ];
    let mut digests = Vec::new();
    for (name, params, f) in runs {
        let t = Instant::now();
        let edges = f(&img, &params)?;
        let secs = t.elapsed().as_secs_f64();
        let d = digest(&edges);
        println!("{name:<10} {secs:.4} s  {} edges  {}", edges.edge_count(), &d[..16]);
        digests.push(d);
    }
    println!("all identical: {}", digests.windows(2).all(|w| w[0] == w[1]));
    Ok(())
}
