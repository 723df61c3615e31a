//! Load the edge-detection overlay, configure it through its registers,
//! push one 1024x768 frame through DMA and compare the result with the
//! software reference.

use overlay_sim::bench::corpus::{synthetic_image, CORPUS_HEIGHT, CORPUS_WIDTH, DEFAULT_SEED};
use overlay_sim::bench::cycle_model;
use overlay_sim::kernels::{edge_detect_reference, make_gaussian_5x5, DEFAULT_THRESHOLD};
use overlay_sim::overlay::{LoadedOverlay, EDGE_DETECT_TOML, REG_STATUS, REG_THRESHOLD, STATUS_DONE};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut overlay = LoadedOverlay::from_toml(EDGE_DETECT_TOML)?;
    println!("overlay `{}` at {} MHz", overlay.name(), overlay.clock_hz() / 1e6);
    for (addr, value) in overlay.route_register_writes("conv", "canny")? {
        println!("route register 0x{addr:08x} <- {value}");
    }

    // the threshold is an ordinary register write
    let canny = overlay.base_of("canny").expect("canny is declared");
    overlay.mmio_write(canny + REG_THRESHOLD, DEFAULT_THRESHOLD)?;

    let img = synthetic_image(CORPUS_WIDTH, CORPUS_HEIGHT, DEFAULT_SEED);
    let run = overlay.process_frame("dma_in", "dma_out", &img)?;
    overlay.step()?;
    println!("canny status after frame: {:#x} (done = {})", overlay.mmio_read(canny + REG_STATUS)?, overlay.mmio_read(canny + REG_STATUS)? & STATUS_DONE != 0);

    let golden = edge_detect_reference(&img, &make_gaussian_5x5(), DEFAULT_THRESHOLD)?;
    println!("fabric output matches reference: {}", run.output == golden.values());
    println!("edge pixels: {}", golden.edge_count());

    let model = cycle_model(&overlay, img.width(), img.height())?;
    println!("pipeline cycles {} (model {}, ideal {})", run.pipeline_cycles, model.predicted(), model.ideal());
    println!(
        "time = DMA {:.6} s + compute {:.6} s + host {:.6} s = {:.6} s",
        run.dma_seconds(),
        run.compute_seconds(),
        run.host_overhead.as_secs_f64(),
        run.total_seconds()
    );
    let mem = overlay.fabric().memory();
    println!("host memory transfers: {} ({} bytes read, {} written)", mem.transfers(), mem.bytes_read(), mem.bytes_written());
    Ok(())
}
