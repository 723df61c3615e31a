//! Route tokens through the stream switch by hand, hold the consumer to
//! create backpressure, and read the per-route counters.

use overlay_sim::switch::{Endpoint, PortDirection, StreamToken, Switch, SwitchError};

fn main() -> Result<(), SwitchError> {
    let mut sw = Switch::new();
    let src = sw.attach_port(Endpoint::new("src", "out"), PortDirection::Producer)?;
    let dst = sw.attach_port(Endpoint::new("dst", "in"), PortDirection::Consumer)?;
    sw.configure_route(src, dst)?;

    // the consumer is not ready for the first 3 cycles
    sw.hold(dst, 3)?;
    let frame = [10u8, 20, 30, 40];
    let mut sent = 0;
    let mut received = Vec::new();
    let mut cycle = 0;
    while received.len() < frame.len() {
        cycle += 1;
        if sent < frame.len() && sw.offer(src, StreamToken::pixel(frame[sent], sent + 1 == frame.len()))? {
            sent += 1;
        }
        sw.step();
        if let Some(t) = sw.take(dst)? {
            println!("cycle {cycle}: received {} (last = {})", t.payload, t.last);
            received.push(t.payload as u8);
        }
    }
    let stats = sw.stats();
    println!("moved {} tokens, {} stall cycles, frames delivered {:?}", stats.total_moved(), stats.total_stalls(), stats.frames_delivered);

    // a second producer may not drive the same consumer
    let other = sw.attach_port(Endpoint::new("other", "out"), PortDirection::Producer)?;
    println!("fan-in: {}", sw.configure_route(other, dst).unwrap_err());
    Ok(())
}
