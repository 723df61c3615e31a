use std::ffi::{c_char, CStr, CString};
use std::ptr::{null, null_mut};

use overlay_sim::bench::corpus::synthetic_image;
use overlay_sim::bench::digest_bytes;
use overlay_sim::ffi::*;
use overlay_sim::kernels::{edge_detect_reference, make_gaussian_5x5};
use overlay_sim::overlay::{LoadedOverlay, EDGE_DETECT_TOML, LOOPBACK_TOML, REG_WIDTH};

struct Loaded {
    handle: u64,
    _dir: tempfile::TempDir,
}

fn load(text: &str) -> Loaded {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("overlay.toml");
    std::fs::write(&path, text).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    let mut handle = 0;
    assert_eq!(unsafe { ovs_load(c.as_ptr(), &mut handle) }, 0);
    Loaded { handle, _dir: dir }
}

fn last_error() -> String {
    let mut buf = [0u8; 512];
    unsafe { ovs_last_error(buf.as_mut_ptr().cast(), buf.len()) };
    CStr::from_bytes_until_nul(&buf).unwrap().to_string_lossy().into_owned()
}

#[test]
fn load_errors_carry_codes_and_messages() {
    let mut h = 0;
    let missing = CString::new("/nonexistent/overlay.toml").unwrap();
    assert_eq!(unsafe { ovs_load(missing.as_ptr(), &mut h) }, OvsStatus::Io as i32);
    assert!(last_error().contains("/nonexistent/overlay.toml"));
    assert_eq!(unsafe { ovs_load(null(), &mut h) }, OvsStatus::InvalidArgument as i32);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, EDGE_DETECT_TOML.replace("port_count = 6", "port_count = 2")).unwrap();
    let c = CString::new(path.to_str().unwrap()).unwrap();
    assert_eq!(unsafe { ovs_load(c.as_ptr(), &mut h) }, OvsStatus::Validation as i32);
}

#[test]
fn released_handle_is_closed() {
    let o = load(LOOPBACK_TOML);
    assert_eq!(ovs_release(o.handle), 0);
    assert_eq!(ovs_release(o.handle), OvsStatus::ClosedHandle as i32);
    let mut v = 0;
    assert_eq!(unsafe { ovs_mmio_read(o.handle, 0x4000_0000, &mut v) }, OvsStatus::ClosedHandle as i32);
    assert_eq!(ovs_mmio_write(0xdead_beef, 0, 0), OvsStatus::ClosedHandle as i32);
    assert!(last_error().contains("closed"));
}

#[test]
fn mmio_through_ffi_matches_native() {
    let o = load(EDGE_DETECT_TOML);
    let mut native = LoadedOverlay::from_toml(EDGE_DETECT_TOML).unwrap();
    let mut conv = 0;
    assert_eq!(unsafe { ovs_base_of(o.handle, c"conv".as_ptr(), &mut conv) }, 0);
    assert_eq!(Some(conv), native.base_of("conv"));
    assert_eq!(ovs_mmio_write(o.handle, conv + REG_WIDTH, 320), 0);
    native.mmio_write(conv + REG_WIDTH, 320).unwrap();

    assert_eq!(ovs_mmio_write(o.handle, conv + 2, 1), OvsStatus::MmioAlignment as i32);
    assert_eq!(ovs_mmio_write(o.handle, 0x1000, 1), OvsStatus::MmioUnmapped as i32);
    assert_eq!(unsafe { ovs_base_of(o.handle, c"nope".as_ptr(), &mut conv) }, OvsStatus::UnknownEndpoint as i32);

    let mut len = 0;
    assert_eq!(unsafe { ovs_snapshot(o.handle, null_mut(), null_mut(), 0, &mut len) }, OvsStatus::BufferTooSmall as i32);
    let (mut addrs, mut values) = (vec![0u32; len], vec![0u32; len]);
    assert_eq!(unsafe { ovs_snapshot(o.handle, addrs.as_mut_ptr(), values.as_mut_ptr(), len, &mut len) }, 0);
    let ffi: Vec<(u32, u32)> = addrs.into_iter().zip(values).collect();
    assert_eq!(ffi, native.snapshot());
    ovs_release(o.handle);
}

#[test]
fn describe_and_reroute() {
    let o = load(EDGE_DETECT_TOML);
    assert_eq!(unsafe { ovs_reconfigure_route(o.handle, c"conv".as_ptr(), c"dma_out".as_ptr()) }, 0);
    assert_eq!(
        unsafe { ovs_reconfigure_route(o.handle, c"conv".as_ptr(), c"ghost".as_ptr()) },
        OvsStatus::UnknownEndpoint as i32
    );
    let mut need = 0;
    let mut tiny = [0 as c_char; 4];
    assert_eq!(unsafe { ovs_describe(o.handle, tiny.as_mut_ptr(), tiny.len(), &mut need) }, OvsStatus::BufferTooSmall as i32);
    let mut buf = vec![0u8; need];
    assert_eq!(unsafe { ovs_describe(o.handle, buf.as_mut_ptr().cast(), buf.len(), &mut need) }, 0);
    let text = CStr::from_bytes_until_nul(&buf).unwrap().to_str().unwrap();
    let reloaded = LoadedOverlay::from_toml(text).unwrap();
    assert!(reloaded.routes().iter().any(|r| r.from == "conv" && r.to == "dma_out"));
    ovs_release(o.handle);
}

#[test]
fn frame_over_ffi_matches_reference_and_host_path() {
    let o = load(EDGE_DETECT_TOML);
    let img = synthetic_image(40, 32, 8);
    let n = img.len();
    for k in [c"conv", c"canny"] {
        assert_eq!(unsafe { ovs_start_kernel(o.handle, k.as_ptr(), 40, 32) }, 0);
    }
    let (mut rx, mut tx) = (0, 0);
    assert_eq!(unsafe { ovs_dma_transfer(o.handle, c"dma_out".as_ptr(), null(), n, &mut rx) }, 0);
    assert_eq!(unsafe { ovs_dma_transfer(o.handle, c"dma_in".as_ptr(), img.samples().as_ptr(), n, &mut tx) }, 0);
    let (mut moved, mut secs) = (0usize, 0f64);
    assert_eq!(unsafe { ovs_dma_wait(o.handle, tx, 100_000, null_mut(), 0, &mut moved, &mut secs) }, 0);
    assert_eq!(moved, n);
    assert!((secs - (50e-6 + n as f64 / 400e6)).abs() < 1e-12);

    let mut small = vec![0u8; 8];
    assert_eq!(
        unsafe { ovs_dma_wait(o.handle, rx, 100_000, small.as_mut_ptr(), small.len(), null_mut(), null_mut()) },
        OvsStatus::BufferTooSmall as i32
    );
    let golden = edge_detect_reference(&img, &make_gaussian_5x5(), 128).unwrap();
    let mut host = vec![0u8; n];
    assert_eq!(unsafe { ovs_edge_detect_optimized(img.samples().as_ptr(), 40, 32, 128, 3, host.as_mut_ptr()) }, 0);
    assert_eq!(host, golden.values());

    let mut hex = [0u8; 65];
    assert_eq!(unsafe { ovs_digest(host.as_ptr(), n, hex.as_mut_ptr().cast(), hex.len()) }, 0);
    assert_eq!(CStr::from_bytes_until_nul(&hex).unwrap().to_str().unwrap(), digest_bytes(golden.values()));
    ovs_release(o.handle);
}

#[test]
fn dma_errors_map_to_codes() {
    let o = load(LOOPBACK_TOML);
    let mut t = 0;
    let data = [1u8; 4];
    assert_eq!(unsafe { ovs_dma_transfer(o.handle, c"dma_in".as_ptr(), data.as_ptr(), 0, &mut t) }, OvsStatus::DmaEmptyBuffer as i32);
    assert_eq!(unsafe { ovs_dma_transfer(o.handle, c"dma_in".as_ptr(), null(), 4, &mut t) }, OvsStatus::InvalidArgument as i32);
    assert_eq!(unsafe { ovs_dma_transfer(o.handle, c"dma_in".as_ptr(), data.as_ptr(), 4, &mut t) }, 0);
    assert_eq!(unsafe { ovs_dma_transfer(o.handle, c"dma_in".as_ptr(), data.as_ptr(), 4, &mut t) }, OvsStatus::DmaBusy as i32);
    // nothing drains the stream, so the sender cannot finish
    assert_eq!(unsafe { ovs_dma_wait(o.handle, t, 50, null_mut(), 0, null_mut(), null_mut()) }, OvsStatus::Timeout as i32);
    assert_eq!(unsafe { ovs_dma_wait(o.handle, 99 << 32, 50, null_mut(), 0, null_mut(), null_mut()) }, OvsStatus::DmaUnknownChannel as i32);
    ovs_release(o.handle);
}

#[test]
fn host_edge_detect_rejects_bad_input() {
    let px = [0u8; 16];
    let mut out = [0u8; 16];
    assert_eq!(unsafe { ovs_edge_detect_optimized(px.as_ptr(), 4, 4, 128, 1, out.as_mut_ptr()) }, OvsStatus::ImageTooSmall as i32);
    assert_eq!(unsafe { ovs_edge_detect_optimized(null(), 4, 4, 128, 1, out.as_mut_ptr()) }, OvsStatus::InvalidArgument as i32);
    let mut hex = [0u8; 8];
    assert_eq!(unsafe { ovs_digest(px.as_ptr(), 16, hex.as_mut_ptr().cast(), hex.len()) }, OvsStatus::BufferTooSmall as i32);
}

#[test]
fn status_names_are_distinct_and_match_header() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/overlay_sim.h")).unwrap();
    let mut declared = Vec::new();
    for line in header.lines() {
        let line = line.trim().trim_end_matches(',');
        if let Some((name, value)) = line.strip_prefix("OVS_").and_then(|l| l.split_once(" = ")) {
            declared.push((name.to_ascii_lowercase(), value.parse::<i32>().unwrap()));
        }
    }
    let ours: Vec<(String, i32)> = ALL_STATUSES
        .iter()
        .map(|s| (unsafe { CStr::from_ptr(ovs_status_name(*s as i32)) }.to_str().unwrap().to_string(), *s as i32))
        .collect();
    assert_eq!(declared, ours);
    assert!(ovs_status_name(-7).is_null());
    for f in ["ovs_load", "ovs_release", "ovs_mmio_read", "ovs_mmio_write", "ovs_dma_transfer", "ovs_dma_wait", "ovs_describe"] {
        assert!(header.contains(&format!("{f}(")), "{f} missing from header");
    }
}
