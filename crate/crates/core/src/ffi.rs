//! C ABI over the overlay runtime, for host-language bindings.
//!
//! Overlays are addressed by opaque `u64` handles. Every function returns an
//! [`OvsStatus`] code; on failure the message is kept per thread and can be
//! copied out with [`ovs_last_error`]. Output strings are NUL-terminated;
//! when a caller's buffer is too small the call fails with
//! [`OvsStatus::BufferTooSmall`] and reports the needed size in `out_len`.
//!
//! Transfer tickets pack the channel index in the high 32 bits and the
//! channel's sequence number in the low 32 bits.

use std::cell::RefCell;
use std::collections::HashMap;
use std::ffi::{c_char, CStr};
use std::sync::{Mutex, OnceLock};

use crate::bench::digest_bytes;
use crate::dma::{ChannelId, DmaBuffer, DmaDirection, DmaError, TransferTicket};
use crate::fabric::SimError;
use crate::kernels::{KernelError, PixelImage};
use crate::mmio::MmioError;
use crate::overlay::{load_overlay, LoadedOverlay, OverlayError};
use crate::reference::{edge_detect_optimized, PipelineParams};

/// Status codes. Each native error variant has its own code.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OvsStatus {
    Ok = 0,
    Io = 1,
    Parse = 2,
    Validation = 3,
    UnknownEndpoint = 4,
    Busy = 5,
    BadRouteRegister = 6,
    MmioOverlap = 10,
    MmioAlignment = 11,
    MmioRange = 12,
    MmioUnmapped = 13,
    MmioUnknownRegion = 14,
    Timeout = 20,
    Kernel = 21,
    Switch = 22,
    DmaDirection = 30,
    DmaBusy = 31,
    DmaLength = 32,
    DmaEmptyBuffer = 33,
    DmaTiming = 34,
    DmaUnknownChannel = 35,
    DmaUnknownTicket = 36,
    ClosedHandle = 40,
    InvalidArgument = 41,
    BufferTooSmall = 42,
    ImageTooSmall = 43,
}

impl OvsStatus {
    pub fn name(self) -> &'static CStr {
        match self {
            OvsStatus::Ok => c"ok",
            OvsStatus::Io => c"io",
            OvsStatus::Parse => c"parse",
            OvsStatus::Validation => c"validation",
            OvsStatus::UnknownEndpoint => c"unknown_endpoint",
            OvsStatus::Busy => c"busy",
            OvsStatus::BadRouteRegister => c"bad_route_register",
            OvsStatus::MmioOverlap => c"mmio_overlap",
            OvsStatus::MmioAlignment => c"mmio_alignment",
            OvsStatus::MmioRange => c"mmio_range",
            OvsStatus::MmioUnmapped => c"mmio_unmapped",
            OvsStatus::MmioUnknownRegion => c"mmio_unknown_region",
            OvsStatus::Timeout => c"timeout",
            OvsStatus::Kernel => c"kernel",
            OvsStatus::Switch => c"switch",
            OvsStatus::DmaDirection => c"dma_direction",
            OvsStatus::DmaBusy => c"dma_busy",
            OvsStatus::DmaLength => c"dma_length",
            OvsStatus::DmaEmptyBuffer => c"dma_empty_buffer",
            OvsStatus::DmaTiming => c"dma_timing",
            OvsStatus::DmaUnknownChannel => c"dma_unknown_channel",
            OvsStatus::DmaUnknownTicket => c"dma_unknown_ticket",
            OvsStatus::ClosedHandle => c"closed_handle",
            OvsStatus::InvalidArgument => c"invalid_argument",
            OvsStatus::BufferTooSmall => c"buffer_too_small",
            OvsStatus::ImageTooSmall => c"image_too_small",
        }
    }
}

fn mmio_status(e: &MmioError) -> OvsStatus {
    match e {
        MmioError::Overlap { .. } => OvsStatus::MmioOverlap,
        MmioError::Alignment(_) => OvsStatus::MmioAlignment,
        MmioError::Range { .. } => OvsStatus::MmioRange,
        MmioError::Unmapped(_) => OvsStatus::MmioUnmapped,
        MmioError::UnknownRegion(_) => OvsStatus::MmioUnknownRegion,
    }
}

fn dma_status(e: &DmaError) -> OvsStatus {
    match e {
        DmaError::PortDirectionMismatch { .. } => OvsStatus::DmaDirection,
        DmaError::Busy => OvsStatus::DmaBusy,
        DmaError::LengthMismatch { .. } => OvsStatus::DmaLength,
        DmaError::EmptyBuffer => OvsStatus::DmaEmptyBuffer,
        DmaError::InvalidTiming => OvsStatus::DmaTiming,
        DmaError::UnknownChannel(_) => OvsStatus::DmaUnknownChannel,
        DmaError::UnknownTicket(_) => OvsStatus::DmaUnknownTicket,
    }
}

fn kernel_status(e: &KernelError) -> OvsStatus {
    match e {
        KernelError::ImageTooSmall { .. } => OvsStatus::ImageTooSmall,
        _ => OvsStatus::Kernel,
    }
}

fn sim_status(e: &SimError) -> OvsStatus {
    match e {
        SimError::Timeout { .. } => OvsStatus::Timeout,
        SimError::Kernel { source, .. } => kernel_status(source),
        SimError::Dma(d) => dma_status(d),
        SimError::Switch(_) => OvsStatus::Switch,
    }
}

pub fn overlay_status(e: &OverlayError) -> OvsStatus {
    match e {
        OverlayError::Io { .. } => OvsStatus::Io,
        OverlayError::Parse { .. } => OvsStatus::Parse,
        OverlayError::Validation(_) => OvsStatus::Validation,
        OverlayError::UnknownEndpoint(_) => OvsStatus::UnknownEndpoint,
        OverlayError::Busy => OvsStatus::Busy,
        OverlayError::BadRouteRegister { .. } => OvsStatus::BadRouteRegister,
        OverlayError::Mmio(m) => mmio_status(m),
        OverlayError::Sim(s) => sim_status(s),
    }
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn fail(status: OvsStatus, message: impl Into<String>) -> i32 {
    LAST_ERROR.with(|e| *e.borrow_mut() = message.into());
    status as i32
}

fn fail_overlay(e: OverlayError) -> i32 {
    fail(overlay_status(&e), e.to_string())
}

fn registry() -> &'static Mutex<(u64, HashMap<u64, LoadedOverlay>)> {
    static REGISTRY: OnceLock<Mutex<(u64, HashMap<u64, LoadedOverlay>)>> = OnceLock::new();
    REGISTRY.get_or_init(|| Mutex::new((1, HashMap::new())))
}

fn with_overlay(handle: u64, f: impl FnOnce(&mut LoadedOverlay) -> i32) -> i32 {
    let mut reg = registry().lock().unwrap_or_else(|p| p.into_inner());
    match reg.1.get_mut(&handle) {
        Some(o) => f(o),
        None => fail(OvsStatus::ClosedHandle, format!("handle {handle} is closed or was never opened")),
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, i32> {
    if p.is_null() {
        return Err(fail(OvsStatus::InvalidArgument, format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(OvsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn put<T>(p: *mut T, value: T) {
    if !p.is_null() {
        *p = value;
    }
}

/// Copy `s` plus a NUL terminator into `buf`.
unsafe fn put_str(s: &str, buf: *mut c_char, cap: usize, out_len: *mut usize) -> i32 {
    put(out_len, s.len() + 1);
    if buf.is_null() || cap < s.len() + 1 {
        return fail(OvsStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1));
    }
    std::ptr::copy_nonoverlapping(s.as_ptr(), buf as *mut u8, s.len());
    *buf.add(s.len()) = 0;
    OvsStatus::Ok as i32
}

fn encode_ticket(t: TransferTicket) -> u64 {
    ((t.channel.0 as u64) << 32) | (t.seq & 0xFFFF_FFFF)
}

fn decode_ticket(v: u64) -> TransferTicket {
    TransferTicket { channel: ChannelId((v >> 32) as usize), seq: v & 0xFFFF_FFFF }
}

/// Load a descriptor file and return a handle in `out_handle`.
///
/// # Safety
/// `path` must be a valid NUL-terminated string; `out_handle` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ovs_load(path: *const c_char, out_handle: *mut u64) -> i32 {
    let path = match str_arg(path, "path") {
        Ok(p) => p,
        Err(code) => return code,
    };
    match load_overlay(path) {
        Ok(o) => {
            let mut reg = registry().lock().unwrap_or_else(|p| p.into_inner());
            let id = reg.0;
            reg.0 += 1;
            reg.1.insert(id, o);
            put(out_handle, id);
            OvsStatus::Ok as i32
        }
        Err(e) => fail_overlay(e),
    }
}

/// Release a handle. Releasing twice reports a closed handle.
#[no_mangle]
pub extern "C" fn ovs_release(handle: u64) -> i32 {
    let mut reg = registry().lock().unwrap_or_else(|p| p.into_inner());
    match reg.1.remove(&handle) {
        Some(_) => OvsStatus::Ok as i32,
        None => fail(OvsStatus::ClosedHandle, format!("handle {handle} is closed or was never opened")),
    }
}

/// # Safety
/// `out_value` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn ovs_mmio_read(handle: u64, addr: u32, out_value: *mut u32) -> i32 {
    with_overlay(handle, |o| match o.mmio_read(addr) {
        Ok(v) => {
            put(out_value, v);
            OvsStatus::Ok as i32
        }
        Err(e) => fail_overlay(e),
    })
}

#[no_mangle]
pub extern "C" fn ovs_mmio_write(handle: u64, addr: u32, value: u32) -> i32 {
    with_overlay(handle, |o| match o.mmio_write(addr, value) {
        Ok(()) => OvsStatus::Ok as i32,
        Err(e) => fail_overlay(e),
    })
}

/// Register base of a component (or `"switch"`).
///
/// # Safety
/// `name` must be a valid NUL-terminated string; `out_base` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ovs_base_of(handle: u64, name: *const c_char, out_base: *mut u32) -> i32 {
    let name = match str_arg(name, "name") {
        Ok(n) => n,
        Err(code) => return code,
    };
    with_overlay(handle, |o| match o.base_of(name) {
        Some(b) => {
            put(out_base, b);
            OvsStatus::Ok as i32
        }
        None => fail(OvsStatus::UnknownEndpoint, format!("unknown endpoint `{name}`")),
    })
}

/// # Safety
/// Both names must be valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn ovs_reconfigure_route(handle: u64, producer: *const c_char, consumer: *const c_char) -> i32 {
    let (p, c) = match (str_arg(producer, "producer"), str_arg(consumer, "consumer")) {
        (Ok(p), Ok(c)) => (p, c),
        (Err(code), _) | (_, Err(code)) => return code,
    };
    with_overlay(handle, |o| match o.reconfigure_route(p, c) {
        Ok(()) => OvsStatus::Ok as i32,
        Err(e) => fail_overlay(e),
    })
}

/// Write the live descriptor, as TOML, into `buf`.
///
/// # Safety
/// `buf` must be null or hold `cap` writable bytes; `out_len` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ovs_describe(handle: u64, buf: *mut c_char, cap: usize, out_len: *mut usize) -> i32 {
    with_overlay(handle, |o| put_str(&o.describe().to_toml(), buf, cap, out_len))
}

/// Copy the register file as parallel address/value arrays.
///
/// # Safety
/// `addrs` and `values` must be null or hold `cap` writable elements.
#[no_mangle]
pub unsafe extern "C" fn ovs_snapshot(
    handle: u64,
    addrs: *mut u32,
    values: *mut u32,
    cap: usize,
    out_len: *mut usize,
) -> i32 {
    with_overlay(handle, |o| {
        let snap = o.snapshot();
        put(out_len, snap.len());
        if addrs.is_null() || values.is_null() || cap < snap.len() {
            return fail(OvsStatus::BufferTooSmall, format!("need {} entries", snap.len()));
        }
        for (i, (a, v)) in snap.into_iter().enumerate() {
            *addrs.add(i) = a;
            *values.add(i) = v;
        }
        OvsStatus::Ok as i32
    })
}

/// Arm a kernel for one frame through its registers.
///
/// # Safety
/// `name` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ovs_start_kernel(handle: u64, name: *const c_char, width: u32, height: u32) -> i32 {
    let name = match str_arg(name, "name") {
        Ok(n) => n,
        Err(code) => return code,
    };
    with_overlay(handle, |o| match o.start_kernel(name, width as usize, height as usize) {
        Ok(()) => OvsStatus::Ok as i32,
        Err(e) => fail_overlay(e),
    })
}

/// Arm DMA channel `channel`. A host-to-fabric channel sends `len` bytes
/// from `data`; a fabric-to-host channel receives into a `len`-byte buffer
/// and ignores `data`.
///
/// # Safety
/// `channel` must be a valid NUL-terminated string; `data` must hold `len`
/// readable bytes for a sending channel; `out_ticket` null or writable.
#[no_mangle]
pub unsafe extern "C" fn ovs_dma_transfer(
    handle: u64,
    channel: *const c_char,
    data: *const u8,
    len: usize,
    out_ticket: *mut u64,
) -> i32 {
    let name = match str_arg(channel, "channel") {
        Ok(n) => n,
        Err(code) => return code,
    };
    with_overlay(handle, |o| {
        let id = match o.channel_id(name) {
            Ok(id) => id,
            Err(e) => return fail_overlay(e),
        };
        let direction = o.fabric().channel(id).map(|c| c.direction()).unwrap_or(DmaDirection::ToFabric);
        let bytes = match direction {
            DmaDirection::ToFabric if data.is_null() && len > 0 => {
                return fail(OvsStatus::InvalidArgument, "data is null");
            }
            DmaDirection::ToFabric if len > 0 => std::slice::from_raw_parts(data, len).to_vec(),
            _ => vec![0; len],
        };
        let buffer = match DmaBuffer::new(bytes) {
            Ok(b) => b,
            Err(e) => return fail(dma_status(&e), e.to_string()),
        };
        match o.dma_transfer(name, buffer) {
            Ok(t) => {
                put(out_ticket, encode_ticket(t));
                OvsStatus::Ok as i32
            }
            Err(e) => fail_overlay(e),
        }
    })
}

/// Step until a transfer completes. Received bytes are copied into `out`
/// (at most `cap`); `out_bytes` gets the bytes moved and `out_seconds` the
/// simulated transfer time.
///
/// # Safety
/// `out` must be null or hold `cap` writable bytes; the other outputs null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn ovs_dma_wait(
    handle: u64,
    ticket: u64,
    max_cycles: u64,
    out: *mut u8,
    cap: usize,
    out_bytes: *mut usize,
    out_seconds: *mut f64,
) -> i32 {
    with_overlay(handle, |o| match o.dma_wait(decode_ticket(ticket), max_cycles) {
        Ok(rec) => {
            put(out_bytes, rec.bytes_moved);
            put(out_seconds, rec.simulated_seconds);
            if let Some(data) = &rec.data {
                if out.is_null() || cap < data.len() {
                    return fail(OvsStatus::BufferTooSmall, format!("need {} bytes", data.len()));
                }
                std::ptr::copy_nonoverlapping(data.as_ptr(), out, data.len());
            }
            OvsStatus::Ok as i32
        }
        Err(e) => fail_overlay(e),
    })
}

/// Host-side optimized edge detection of a `width`x`height` image into `out`.
///
/// # Safety
/// `pixels` must hold `width * height` readable bytes and `out` as many
/// writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ovs_edge_detect_optimized(
    pixels: *const u8,
    width: u32,
    height: u32,
    threshold: u32,
    threads: u32,
    out: *mut u8,
) -> i32 {
    let n = width as usize * height as usize;
    if pixels.is_null() || out.is_null() {
        return fail(OvsStatus::InvalidArgument, "null image buffer");
    }
    let img = match PixelImage::new(width as usize, height as usize, std::slice::from_raw_parts(pixels, n).to_vec()) {
        Ok(i) => i,
        Err(e) => return fail(kernel_status(&e), e.to_string()),
    };
    let params = PipelineParams::default().with_threshold(threshold).with_threads(threads as usize);
    match edge_detect_optimized(&img, &params) {
        Ok(e) => {
            std::ptr::copy_nonoverlapping(e.as_bytes().as_ptr(), out, n);
            OvsStatus::Ok as i32
        }
        Err(e) => fail(kernel_status(&e), e.to_string()),
    }
}

/// Hex SHA-256 of `len` bytes into `out_hex` (65 bytes with the NUL).
///
/// # Safety
/// `data` must hold `len` readable bytes; `out_hex` must be null or hold
/// `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ovs_digest(data: *const u8, len: usize, out_hex: *mut c_char, cap: usize) -> i32 {
    if data.is_null() && len > 0 {
        return fail(OvsStatus::InvalidArgument, "data is null");
    }
    let bytes = if len == 0 { &[][..] } else { std::slice::from_raw_parts(data, len) };
    put_str(&digest_bytes(bytes), out_hex, cap, std::ptr::null_mut())
}

/// Copy this thread's last error message into `buf`. Returns the message
/// length, excluding the NUL.
///
/// # Safety
/// `buf` must be null or hold `cap` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ovs_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static name of a status code, or null for an unknown code.
#[no_mangle]
pub extern "C" fn ovs_status_name(code: i32) -> *const c_char {
    ALL_STATUSES.iter().find(|s| **s as i32 == code).map_or(std::ptr::null(), |s| s.name().as_ptr())
}

pub const ALL_STATUSES: [OvsStatus; 26] = [
    OvsStatus::Ok,
    OvsStatus::Io,
    OvsStatus::Parse,
    OvsStatus::Validation,
    OvsStatus::UnknownEndpoint,
    OvsStatus::Busy,
    OvsStatus::BadRouteRegister,
    OvsStatus::MmioOverlap,
    OvsStatus::MmioAlignment,
    OvsStatus::MmioRange,
    OvsStatus::MmioUnmapped,
    OvsStatus::MmioUnknownRegion,
    OvsStatus::Timeout,
    OvsStatus::Kernel,
    OvsStatus::Switch,
    OvsStatus::DmaDirection,
    OvsStatus::DmaBusy,
    OvsStatus::DmaLength,
    OvsStatus::DmaEmptyBuffer,
    OvsStatus::DmaTiming,
    OvsStatus::DmaUnknownChannel,
    OvsStatus::DmaUnknownTicket,
    OvsStatus::ClosedHandle,
    OvsStatus::InvalidArgument,
    OvsStatus::BufferTooSmall,
    OvsStatus::ImageTooSmall,
];
