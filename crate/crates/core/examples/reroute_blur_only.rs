//! Reconfigure the switch at run time so the blur output goes straight to
//! the receive DMA, bypassing the edge detector.

use overlay_sim::bench::corpus::synthetic_image;
use overlay_sim::kernels::{conv2d_reference, make_gaussian_5x5};
use overlay_sim::overlay::{LoadedOverlay, EDGE_DETECT_TOML};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut overlay = LoadedOverlay::from_toml(EDGE_DETECT_TOML)?;
    overlay.reconfigure_route("conv", "dma_out")?;
    for r in overlay.routes() {
        println!("route {} -> {}", r.from, r.to);
    }

    let img = synthetic_image(320, 240, 7);
    let run = overlay.process_frame("dma_in", "dma_out", &img)?;
    let golden = conv2d_reference(&img, &make_gaussian_5x5())?;
    println!("blur-only output matches reference: {}", run.output == golden.samples());
    println!("pipeline cycles: {}", run.pipeline_cycles);

    // restore the full pipeline and print the live description
    overlay.reconfigure_route("conv", "canny")?;
    overlay.reconfigure_route("canny", "dma_out")?;
    print!("{}", overlay.describe().to_toml());
    Ok(())
}
