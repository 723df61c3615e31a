//! Map two register regions, write and read them by handle and by absolute
//! address, and show the alignment, range and overlap checks.

use overlay_sim::mmio::{Mmio, MmioError};

fn main() -> Result<(), MmioError> {
    let mut mmio = Mmio::new(0);
    let ctrl = mmio.map_region(0x4000_0000, 0x20, "ctrl")?;
    let dma = mmio.map_region(0x4040_0000, 0x20, "dma")?;

    mmio.write(ctrl, 0x08, 1024)?;
    mmio.write_addr(0x4040_0008, 786_432)?;
    println!("ctrl+0x08 = {}", mmio.read(ctrl, 0x08)?);
    println!("dma+0x08  = {}", mmio.read(dma, 0x08)?);
    println!("never written reads the reset value: {}", mmio.read(ctrl, 0x10)?);

    for err in [
        mmio.write(ctrl, 0x02, 7).unwrap_err(),
        mmio.read(ctrl, 0x20).unwrap_err(),
        mmio.map_region(0x4000_0010, 0x10, "clash").unwrap_err(),
        mmio.read_addr(0x1000_0000).unwrap_err(),
    ] {
        println!("rejected: {err}");
    }

    println!("snapshot:");
    for (addr, value) in mmio.snapshot() {
        println!("  0x{addr:08x} = {value}");
    }
    Ok(())
}
