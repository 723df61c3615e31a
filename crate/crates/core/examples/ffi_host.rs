//! Drive the overlay through the C interface, the way a foreign host
//! language would: load by path, poke registers, stream a frame over DMA
//! and read error messages back.

use std::ffi::{CStr, CString};
use std::io::Write;

use overlay_sim::ffi::*;
use overlay_sim::overlay::{EDGE_DETECT_TOML, REG_WIDTH};

fn last_error() -> String {
    let mut buf = vec![0u8; 256];
    unsafe { ovs_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    CStr::from_bytes_until_nul(&buf).map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn check(code: i32) -> Result<(), String> {
    if code == 0 {
        return Ok(());
    }
    let name = unsafe { CStr::from_ptr(ovs_status_name(code)) }.to_string_lossy();
    Err(format!("{name}: {}", last_error()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut file = tempfile::NamedTempFile::new()?;
    file.write_all(EDGE_DETECT_TOML.as_bytes())?;
    let path = CString::new(file.path().to_str().expect("temp path is UTF-8"))?;

    let mut h = 0u64;
    check(unsafe { ovs_load(path.as_ptr(), &mut h) })?;
    let mut conv = 0u32;
    check(unsafe { ovs_base_of(h, c"conv".as_ptr(), &mut conv) })?;
    check(ovs_mmio_write(h, conv + REG_WIDTH, 64))?;
    let mut width = 0u32;
    check(unsafe { ovs_mmio_read(h, conv + REG_WIDTH, &mut width) })?;
    println!("conv base 0x{conv:08x}, WIDTH register reads {width}");

    let (w, h_px) = (64u32, 48u32);
    let pixels: Vec<u8> = (0..w * h_px).map(|i| if (i % w) < w / 2 { 30 } else { 220 }).collect();
    for k in [c"conv", c"canny"] {
        check(unsafe { ovs_start_kernel(h, k.as_ptr(), w, h_px) })?;
    }
    let (mut rx, mut tx) = (0u64, 0u64);
    check(unsafe { ovs_dma_transfer(h, c"dma_out".as_ptr(), std::ptr::null(), pixels.len(), &mut rx) })?;
    check(unsafe { ovs_dma_transfer(h, c"dma_in".as_ptr(), pixels.as_ptr(), pixels.len(), &mut tx) })?;
    let mut secs = 0.0;
    check(unsafe { ovs_dma_wait(h, tx, 1_000_000, std::ptr::null_mut(), 0, std::ptr::null_mut(), &mut secs) })?;
    let mut fabric = vec![0u8; pixels.len()];
    let mut n = 0usize;
    check(unsafe { ovs_dma_wait(h, rx, 1_000_000, fabric.as_mut_ptr(), fabric.len(), &mut n, std::ptr::null_mut()) })?;
    println!("sent in {secs:.9} s, received {n} bytes");

    let mut host = vec![0u8; pixels.len()];
    check(unsafe { ovs_edge_detect_optimized(pixels.as_ptr(), w, h_px, 128, 2, host.as_mut_ptr()) })?;
    let mut hex = [0u8; 65];
    check(unsafe { ovs_digest(fabric.as_ptr(), fabric.len(), hex.as_mut_ptr().cast(), hex.len()) })?;
    println!("fabric digest {}", CStr::from_bytes_until_nul(&hex)?.to_string_lossy());
    println!("fabric == host optimized: {}", fabric == host);

    check(ovs_release(h))?;
    match check(ovs_mmio_write(h, conv, 1)) {
        Err(e) => println!("after release: {e}"),
        Ok(()) => println!("after release: unexpectedly accepted"),
    }
    Ok(())
}
