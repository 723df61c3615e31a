//! Overlay runtime: instantiate a fabric from a descriptor, map its control
//! registers, and drive it the way a host program drives a loaded bitstream.
//!
//! # Register map
//!
//! Switch region, one 32-bit route register per port at `4 * port_id`.
//! A consumer port's register holds the id of the producer port that drives
//! it, or [`ROUTE_NONE`]. Registers of producer ports and spare ports are
//! ignored and read as `ROUTE_NONE`. Port ids are assigned in declaration
//! order: every kernel gets `<name>.in` then `<name>.out`, then every DMA
//! channel gets `<name>.stream`.
//!
//! Kernel region ([`KERNEL_REGION_BYTES`] bytes):
//!
//! | offset | register |
//! |--------|----------|
//! | 0x00 | CTRL, write [`CTRL_START`] to arm one frame |
//! | 0x04 | STATUS, [`STATUS_IDLE`] / [`STATUS_BUSY`] / [`STATUS_DONE`] / [`STATUS_ERROR`] |
//! | 0x08 | frame width |
//! | 0x0C | frame height |
//! | 0x10 | edge threshold |
//! | 0x14 | frames completed |
//!
//! DMA region ([`DMA_REGION_BYTES`] bytes): CTRL 0x00, STATUS 0x04,
//! LENGTH 0x08, BYTES_MOVED 0x0C. Buffers live in host memory, so a
//! transfer is armed through [`LoadedOverlay::dma_transfer`], which also
//! mirrors the length and start bit into these registers.
//!
//! Host writes become visible to fabric components on the next
//! [`LoadedOverlay::step`]. Route changes are frame-aligned by the switch.

mod descriptor;

use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

pub use descriptor::{
    DmaDesc, KernelDesc, OverlayDescriptor, RouteDesc, SwitchDesc, DMA_REGION_BYTES, FORMAT_TAG, FORMAT_VERSION,
    KERNEL_REGION_BYTES,
};

use crate::dma::{ChannelId, ChannelState, CompletionRecord, DmaBuffer, DmaDirection, TransferTicket};
use crate::fabric::{Fabric, KernelId, SimError};
use crate::kernels::{make_streaming, KernelParams, KernelState, PixelImage};
use crate::mmio::{Mmio, MmioError, RegionHandle};
use crate::switch::{CycleStats, Endpoint, PortDirection, PortId, SwitchConfig, SwitchError};

/// The shipped Gaussian + Canny descriptor.
pub const EDGE_DETECT_TOML: &str = include_str!("../../overlays/edge_detect.toml");
/// The shipped DMA loopback descriptor.
pub const LOOPBACK_TOML: &str = include_str!("../../overlays/loopback.toml");

pub const ROUTE_NONE: u32 = 0xFFFF_FFFF;

pub const REG_CTRL: u32 = 0x00;
pub const REG_STATUS: u32 = 0x04;
pub const REG_WIDTH: u32 = 0x08;
pub const REG_HEIGHT: u32 = 0x0C;
pub const REG_THRESHOLD: u32 = 0x10;
pub const REG_FRAMES: u32 = 0x14;

pub const REG_DMA_CTRL: u32 = 0x00;
pub const REG_DMA_STATUS: u32 = 0x04;
pub const REG_DMA_LENGTH: u32 = 0x08;
pub const REG_DMA_BYTES: u32 = 0x0C;

pub const CTRL_START: u32 = 1;
pub const STATUS_IDLE: u32 = 1;
pub const STATUS_BUSY: u32 = 2;
pub const STATUS_DONE: u32 = 4;
pub const STATUS_ERROR: u32 = 8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OverlayError {
    #[error("cannot read `{path}`: {message}")]
    Io { path: String, message: String },
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid overlay: {0}")]
    Validation(String),
    #[error("unknown endpoint `{0}`")]
    UnknownEndpoint(String),
    #[error("overlay is mid-frame; routes can only change between frames")]
    Busy,
    #[error("route register {port} holds {value:#x}, which is not a producer port")]
    BadRouteRegister { port: u32, value: u32 },
    #[error(transparent)]
    Mmio(#[from] MmioError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

impl From<SwitchError> for OverlayError {
    fn from(e: SwitchError) -> Self {
        OverlayError::Sim(SimError::Switch(e))
    }
}

#[derive(Debug, Clone)]
struct KernelBinding {
    name: String,
    id: KernelId,
    region: RegionHandle,
    last_state: KernelState,
}

#[derive(Debug, Clone)]
struct ChannelBinding {
    name: String,
    id: ChannelId,
    region: RegionHandle,
    last_state: ChannelState,
}

/// Result of pushing one frame through the overlay from the host.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRun {
    pub output: Vec<u8>,
    pub sent: CompletionRecord,
    pub received: CompletionRecord,
    /// Fabric cycles from arming the source transfer to the sink's last byte.
    pub pipeline_cycles: u64,
    pub fabric_clock_hz: f64,
    /// Wall time the host spent on register writes and transfer setup.
    pub host_overhead: Duration,
    pub stats: CycleStats,
}

impl FrameRun {
    pub fn compute_seconds(&self) -> f64 {
        self.pipeline_cycles as f64 / self.fabric_clock_hz
    }

    pub fn dma_seconds(&self) -> f64 {
        self.sent.simulated_seconds + self.received.simulated_seconds
    }

    /// DMA in + pipeline cycles at the fabric clock + DMA out + host overhead.
    pub fn total_seconds(&self) -> f64 {
        self.dma_seconds() + self.compute_seconds() + self.host_overhead.as_secs_f64()
    }
}

#[derive(Debug, Clone)]
pub struct LoadedOverlay {
    descriptor: OverlayDescriptor,
    fabric: Fabric,
    mmio: Mmio,
    switch_region: RegionHandle,
    kernels: Vec<KernelBinding>,
    channels: Vec<ChannelBinding>,
    dirty: bool,
}

/// Read, parse, validate and instantiate a descriptor file.
pub fn load_overlay(path: impl AsRef<Path>) -> Result<LoadedOverlay, OverlayError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| OverlayError::Io { path: path.display().to_string(), message: e.to_string() })?;
    LoadedOverlay::from_descriptor(OverlayDescriptor::parse(&text)?)
}

impl LoadedOverlay {
    /// Parse and instantiate descriptor text.
    pub fn from_toml(text: &str) -> Result<Self, OverlayError> {
        Self::from_descriptor(OverlayDescriptor::parse(text)?)
    }

    pub fn from_descriptor(descriptor: OverlayDescriptor) -> Result<Self, OverlayError> {
        descriptor.validate()?;
        let mut fabric = Fabric::new(descriptor.fabric_clock_hz);
        let mut mmio = Mmio::new(0);
        let mut handles = Vec::new();
        for (base, len, owner) in descriptor.regions() {
            handles.push(mmio.map_region(base, len, owner)?);
        }
        let switch_region = handles[0];
        let mut kernels = Vec::new();
        for (k, region) in descriptor.kernels.iter().zip(&handles[1..]) {
            let kind = k.kind()?;
            let mut params = KernelParams::for_kind(kind);
            if let Some(d) = k.pipeline_depth {
                params.pipeline_depth = d;
            }
            if let Some(t) = k.threshold {
                params.threshold = t;
            }
            params.conv = k.conv_kernel()?;
            let threshold = params.threshold;
            let id = fabric.add_kernel(&k.name, make_streaming(kind, params))?;
            mmio.write(*region, REG_STATUS, STATUS_IDLE)?;
            mmio.write(*region, REG_THRESHOLD, threshold)?;
            kernels.push(KernelBinding { name: k.name.clone(), id, region: *region, last_state: KernelState::Idle });
        }
        let mut channels = Vec::new();
        for (d, region) in descriptor.dma_channels.iter().zip(&handles[1 + kernels.len()..]) {
            let id = fabric.add_dma(&d.name, d.direction()?, d.bandwidth_bytes_per_sec, d.setup_latency_sec)?;
            mmio.write(*region, REG_DMA_STATUS, STATUS_IDLE)?;
            channels.push(ChannelBinding { name: d.name.clone(), id, region: *region, last_state: ChannelState::Idle });
        }
        for port in 0..descriptor.switch.port_count {
            mmio.write(switch_region, 4 * port, ROUTE_NONE)?;
        }
        let mut overlay = Self { descriptor, fabric, mmio, switch_region, kernels, channels, dirty: true };
        for r in overlay.descriptor.default_routes.clone() {
            for (addr, value) in overlay.route_register_writes(&r.from, &r.to)? {
                overlay.mmio.write_addr(addr, value)?;
            }
        }
        overlay.sync_registers()?;
        Ok(overlay)
    }

    pub fn descriptor(&self) -> &OverlayDescriptor {
        &self.descriptor
    }

    pub fn name(&self) -> &str {
        &self.descriptor.name
    }

    pub fn fabric(&self) -> &Fabric {
        &self.fabric
    }

    /// Direct fabric access, for backpressure injection and inspection.
    pub fn fabric_mut(&mut self) -> &mut Fabric {
        &mut self.fabric
    }

    pub fn mmio(&self) -> &Mmio {
        &self.mmio
    }

    pub fn clock_hz(&self) -> f64 {
        self.descriptor.fabric_clock_hz
    }

    /// Register base address of a component, or of `"switch"`.
    pub fn base_of(&self, component: &str) -> Option<u32> {
        self.mmio.map().regions().find(|(_, r)| r.owner == component).map(|(_, r)| r.base)
    }

    pub fn region_of(&self, component: &str) -> Option<RegionHandle> {
        self.mmio.map().regions().find(|(_, r)| r.owner == component).map(|(h, _)| h)
    }

    pub fn mmio_write(&mut self, addr: u32, value: u32) -> Result<(), OverlayError> {
        self.mmio.write_addr(addr, value)?;
        self.dirty = true;
        Ok(())
    }

    pub fn mmio_read(&self, addr: u32) -> Result<u32, OverlayError> {
        Ok(self.mmio.read_addr(addr)?)
    }

    /// `(address, value)` pairs of the register file, sorted by address.
    pub fn snapshot(&self) -> Vec<(u32, u32)> {
        self.mmio.snapshot()
    }

    fn port_of(&self, name: &str, direction: PortDirection) -> Result<PortId, OverlayError> {
        let port = if self.descriptor.kernels.iter().any(|k| k.name == name) {
            match direction {
                PortDirection::Producer => "out",
                PortDirection::Consumer => "in",
            }
        } else {
            "stream"
        };
        let id = self
            .fabric
            .switch()
            .find(&Endpoint::new(name, port))
            .ok_or_else(|| OverlayError::UnknownEndpoint(name.to_string()))?;
        if self.fabric.switch().direction(id)? != direction {
            return Err(OverlayError::UnknownEndpoint(format!("{name}.{port}")));
        }
        Ok(id)
    }

    /// The documented raw register writes that route `producer` into
    /// `consumer`: first clear any consumer register that names the
    /// producer, then point the consumer's register at it.
    pub fn route_register_writes(&self, producer: &str, consumer: &str) -> Result<Vec<(u32, u32)>, OverlayError> {
        let p = self.port_of(producer, PortDirection::Producer)?;
        let c = self.port_of(consumer, PortDirection::Consumer)?;
        let mut writes = Vec::new();
        for port in 0..self.descriptor.switch.port_count {
            let addr = self.mmio.map().address_of(self.switch_region, 4 * port)?;
            if port != c.0 && self.mmio.read_addr(addr)? == p.0 {
                writes.push((addr, ROUTE_NONE));
            }
        }
        writes.push((self.mmio.map().address_of(self.switch_region, 4 * c.0)?, p.0));
        Ok(writes)
    }

    /// Route `producer`'s output into `consumer`'s input, by name.
    pub fn reconfigure_route(&mut self, producer: &str, consumer: &str) -> Result<(), OverlayError> {
        let writes = self.route_register_writes(producer, consumer)?;
        if self.fabric.busy() {
            return Err(OverlayError::Busy);
        }
        for (addr, value) in writes {
            self.mmio_write(addr, value)?;
        }
        self.sync_registers()
    }

    /// Disconnect whatever drives `consumer`.
    pub fn clear_route(&mut self, consumer: &str) -> Result<(), OverlayError> {
        let c = self.port_of(consumer, PortDirection::Consumer)?;
        if self.fabric.busy() {
            return Err(OverlayError::Busy);
        }
        let addr = self.mmio.map().address_of(self.switch_region, 4 * c.0)?;
        self.mmio_write(addr, ROUTE_NONE)?;
        self.sync_registers()
    }

    /// Current routes as `(producer, consumer)` component names.
    pub fn routes(&self) -> Vec<RouteDesc> {
        let sw = self.fabric.switch();
        let mut routes: Vec<(PortId, PortId)> = sw.config().routes().map(|(p, c)| (p, c)).collect();
        routes.sort_by_key(|&(_, c)| c);
        routes
            .into_iter()
            .map(|(p, c)| {
                let name = |id| sw.endpoint(id).map(|e| e.component.clone()).unwrap_or_default();
                RouteDesc::new(name(p), name(c))
            })
            .collect()
    }

    /// The live overlay as a descriptor: declared structure plus current
    /// routes and threshold registers.
    pub fn describe(&self) -> OverlayDescriptor {
        let mut d = self.descriptor.clone();
        let current = self.routes();
        // keep declaration order for routes that are unchanged
        let mut routes: Vec<RouteDesc> =
            d.default_routes.iter().filter(|r| current.contains(r)).cloned().collect();
        routes.extend(current.into_iter().filter(|r| !d.default_routes.contains(r)));
        d.default_routes = routes;
        for (k, b) in d.kernels.iter_mut().zip(&self.kernels) {
            let reg = self.mmio.read(b.region, REG_THRESHOLD).unwrap_or(0);
            let declared = k.threshold.unwrap_or(KernelParams::for_kind(k.kind().expect("validated")).threshold);
            if reg != declared {
                k.threshold = Some(reg);
            }
        }
        d
    }

    /// Latch host register writes into the fabric.
    fn sync_registers(&mut self) -> Result<(), OverlayError> {
        if !self.dirty {
            return Ok(());
        }
        self.dirty = false;
        let sw = self.fabric.switch();
        let mut pairs = Vec::new();
        for port in 0..sw.port_count() as u32 {
            let value = self.mmio.read(self.switch_region, 4 * port)?;
            if value == ROUTE_NONE || sw.direction(PortId(port))? != PortDirection::Consumer {
                continue;
            }
            match sw.direction(PortId(value)) {
                Ok(PortDirection::Producer) => pairs.push((PortId(value), PortId(port))),
                _ => return Err(OverlayError::BadRouteRegister { port, value }),
            }
        }
        let config = SwitchConfig::from_consumer_map(pairs.into_iter().map(|(p, c)| (c, p)))?;
        if &config != self.fabric.switch().config() {
            self.fabric.switch_mut().set_config(config)?;
        }
        for i in 0..self.kernels.len() {
            let b = self.kernels[i].clone();
            if self.mmio.read(b.region, REG_CTRL)? & CTRL_START == 0 {
                continue;
            }
            self.mmio.write(b.region, REG_CTRL, 0)?;
            let width = self.mmio.read(b.region, REG_WIDTH)? as usize;
            let height = self.mmio.read(b.region, REG_HEIGHT)? as usize;
            let threshold = self.mmio.read(b.region, REG_THRESHOLD)?;
            let slot = self.fabric.kernel_mut(b.id).expect("bound kernel");
            slot.kernel.set_threshold(threshold);
            if let Err(source) = slot.kernel.begin_frame(width, height) {
                self.mmio.write(b.region, REG_STATUS, STATUS_ERROR)?;
                return Err(SimError::Kernel { name: b.name, source }.into());
            }
        }
        self.publish_status()
    }

    /// Mirror component state changes into status registers.
    fn publish_status(&mut self) -> Result<(), OverlayError> {
        for b in &mut self.kernels {
            let kernel = &self.fabric.kernel(b.id).expect("bound kernel").kernel;
            let state = kernel.state();
            if state != b.last_state {
                let status = match state {
                    KernelState::Idle => STATUS_IDLE,
                    KernelState::Running => STATUS_BUSY,
                    KernelState::Done => STATUS_IDLE | STATUS_DONE,
                };
                self.mmio.write(b.region, REG_STATUS, status)?;
                self.mmio.write(b.region, REG_FRAMES, kernel.frames_completed() as u32)?;
                b.last_state = state;
            }
        }
        for b in &mut self.channels {
            let ch = self.fabric.channel(b.id).map_err(SimError::from)?;
            let state = ch.state();
            if state != b.last_state {
                let status = match state {
                    ChannelState::Idle => STATUS_IDLE,
                    ChannelState::Busy => STATUS_BUSY,
                    ChannelState::Done => STATUS_IDLE | STATUS_DONE,
                };
                self.mmio.write(b.region, REG_DMA_STATUS, status)?;
                self.mmio.write(b.region, REG_DMA_BYTES, ch.bytes_moved() as u32)?;
                b.last_state = state;
            }
        }
        Ok(())
    }

    /// One fabric cycle, preceded by latching any pending register writes.
    pub fn step(&mut self) -> Result<CycleStats, OverlayError> {
        self.sync_registers()?;
        let delta = self.fabric.step()?;
        self.publish_status()?;
        Ok(delta)
    }

    fn channel(&self, name: &str) -> Result<&ChannelBinding, OverlayError> {
        self.channels.iter().find(|c| c.name == name).ok_or_else(|| OverlayError::UnknownEndpoint(name.to_string()))
    }

    pub fn channel_id(&self, name: &str) -> Result<ChannelId, OverlayError> {
        Ok(self.channel(name)?.id)
    }

    /// Arm DMA channel `name` with `buffer`.
    pub fn dma_transfer(&mut self, name: &str, buffer: DmaBuffer) -> Result<TransferTicket, OverlayError> {
        let b = self.channel(name)?.clone();
        let len = buffer.len() as u32;
        self.sync_registers()?;
        let ticket = self.fabric.dma_transfer(b.id, buffer)?;
        self.mmio.write(b.region, REG_DMA_LENGTH, len)?;
        self.mmio.write(b.region, REG_DMA_CTRL, CTRL_START)?;
        self.publish_status()?;
        Ok(ticket)
    }

    /// Step until the transfer completes, or fail after `max_cycles`.
    pub fn dma_wait(&mut self, ticket: TransferTicket, max_cycles: u64) -> Result<CompletionRecord, OverlayError> {
        let start = self.fabric.cycle();
        loop {
            if !self.fabric.channel(ticket.channel).map_err(SimError::from)?.state().eq(&ChannelState::Busy) {
                let record = self.fabric.dma_wait(ticket, 0)?;
                if let Some(b) = self.channels.iter().find(|c| c.id == ticket.channel) {
                    self.mmio.write(b.region, REG_DMA_CTRL, 0)?;
                }
                self.publish_status()?;
                return Ok(record);
            }
            if self.fabric.cycle() - start >= max_cycles {
                return Err(SimError::Timeout { cycles: max_cycles }.into());
            }
            self.step()?;
        }
    }

    /// Arm a kernel for one `width`×`height` frame through its registers.
    pub fn start_kernel(&mut self, name: &str, width: usize, height: usize) -> Result<(), OverlayError> {
        let b = self
            .kernels
            .iter()
            .find(|k| k.name == name)
            .ok_or_else(|| OverlayError::UnknownEndpoint(name.to_string()))?;
        let region = b.region;
        let base = self.mmio.map().region(region)?.base;
        self.mmio_write(base + REG_WIDTH, width as u32)?;
        self.mmio_write(base + REG_HEIGHT, height as u32)?;
        self.mmio_write(base + REG_CTRL, CTRL_START)
    }

    pub fn set_threshold(&mut self, name: &str, threshold: u32) -> Result<(), OverlayError> {
        let base = self.base_of(name).ok_or_else(|| OverlayError::UnknownEndpoint(name.to_string()))?;
        if !self.descriptor.kernels.iter().any(|k| k.name == name) {
            return Err(OverlayError::UnknownEndpoint(name.to_string()));
        }
        self.mmio_write(base + REG_THRESHOLD, threshold)
    }

    /// Host control sequence for one frame: arm every kernel, arm the sink
    /// channel, send the image from the source channel, wait for both.
    pub fn process_frame(&mut self, source: &str, sink: &str, img: &PixelImage) -> Result<FrameRun, OverlayError> {
        let (w, h) = (img.width(), img.height());
        let names: Vec<String> = self.kernels.iter().map(|k| k.name.clone()).collect();
        let before = self.fabric.stats().clone();
        let control_start = Instant::now();
        for name in &names {
            self.start_kernel(name, w, h)?;
        }
        let rx = self.dma_transfer(sink, DmaBuffer::zeroed(img.len()).map_err(SimError::from)?)?;
        let tx = self.dma_transfer(source, DmaBuffer::new(img.samples().to_vec()).map_err(SimError::from)?)?;
        let host_overhead = control_start.elapsed();
        let budget = 4 * img.len() as u64 + 1_000_000;
        let sent = self.dma_wait(tx, budget)?;
        let received = self.dma_wait(rx, budget)?;
        let output = received.data.clone().unwrap_or_default();
        let pipeline_cycles = received.end_cycle - sent.start_cycle;
        Ok(FrameRun {
            output,
            sent,
            received,
            pipeline_cycles,
            fabric_clock_hz: self.clock_hz(),
            host_overhead,
            stats: self.fabric.stats().since(&before),
        })
    }

    /// Names of the first source and sink DMA channels.
    pub fn default_channels(&self) -> Option<(String, String)> {
        let find = |dir| {
            self.descriptor
                .dma_channels
                .iter()
                .find(|d| d.direction().ok() == Some(dir))
                .map(|d| d.name.clone())
        };
        Some((find(DmaDirection::ToFabric)?, find(DmaDirection::FromFabric)?))
    }
}
