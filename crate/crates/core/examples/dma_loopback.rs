//! Send a buffer through the loopback overlay and compare the simulated
//! transfer time against the bandwidth/latency cost model.

use overlay_sim::dma::{transfer_cost, DmaBuffer};
use overlay_sim::overlay::{LoadedOverlay, OverlayError, LOOPBACK_TOML};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut o = LoadedOverlay::from_toml(LOOPBACK_TOML)?;
    let data: Vec<u8> = (0..4096u32).map(|i| (i * 7 % 251) as u8).collect();

    let rx = o.dma_transfer("dma_out", DmaBuffer::zeroed(data.len())?)?;
    let tx = o.dma_transfer("dma_in", DmaBuffer::new(data.clone())?)?;
    let sent = o.dma_wait(tx, 100_000)?;
    let got = o.dma_wait(rx, 100_000)?;

    println!("bytes moved: {} out, {} back", sent.bytes_moved, got.bytes_moved);
    println!("identical: {}", got.data.as_deref() == Some(&data[..]));
    println!(
        "simulated {:.9} s, model {:.9} s, stalls {}",
        sent.simulated_seconds,
        transfer_cost(data.len(), 400e6, 50e-6),
        sent.stall_cycles
    );
    println!("one 1024x768 frame costs {:.6} s each way", transfer_cost(1024 * 768, 400e6, 50e-6));

    // receive buffer smaller than the frame
    let rx = o.dma_transfer("dma_out", DmaBuffer::zeroed(16)?)?;
    o.dma_transfer("dma_in", DmaBuffer::new(vec![1; 32])?)?;
    match o.dma_wait(rx, 1_000) {
        Err(e @ OverlayError::Sim(_)) => println!("short buffer: {e}"),
        other => println!("unexpected: {other:?}"),
    }
    // the sender is now stalled behind the rejected tokens
    println!("fabric still busy: {}", o.fabric().busy());
    Ok(())
}
