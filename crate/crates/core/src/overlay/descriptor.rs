//! Overlay descriptor file: a TOML document that stands in for a bitstream.
//!
//! ```toml
//! format = "overlay-descriptor"
//! version = 1
//! name = "edge-detect"
//! fabric_clock_hz = 200e6
//! cpu_clock_hz = 667e6
//!
//! [switch]
//! port_count = 6
//! base = 0x4000_0000
//!
//! [[kernel]]
//! name = "conv"
//! kind = "conv"            # conv | canny | passthrough
//! base = 0x4001_0000
//! pipeline_depth = 4       # optional, per-kind default
//!
//! [[dma]]
//! name = "dma_in"
//! direction = "to_fabric"  # to_fabric | from_fabric
//! base = 0x4040_0000
//! bandwidth_bytes_per_sec = 400e6
//! setup_latency_sec = 50e-6
//!
//! [[route]]
//! from = "dma_in"
//! to = "conv"
//! ```

use serde::{Deserialize, Serialize};

use super::OverlayError;
use crate::dma::DmaDirection;
use crate::kernels::{ConvKernel, KernelKind, CONV_TAPS};
use crate::mmio::AddressMap;

pub const FORMAT_TAG: &str = "overlay-descriptor";
pub const FORMAT_VERSION: u32 = 1;

/// Bytes of register space per kernel and per DMA channel.
pub const KERNEL_REGION_BYTES: u32 = 0x20;
pub const DMA_REGION_BYTES: u32 = 0x20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverlayDescriptor {
    pub format: String,
    pub version: u32,
    pub name: String,
    pub fabric_clock_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cpu_clock_hz: Option<f64>,
    pub switch: SwitchDesc,
    #[serde(default, rename = "kernel", skip_serializing_if = "Vec::is_empty")]
    pub kernels: Vec<KernelDesc>,
    #[serde(default, rename = "dma", skip_serializing_if = "Vec::is_empty")]
    pub dma_channels: Vec<DmaDesc>,
    #[serde(default, rename = "route", skip_serializing_if = "Vec::is_empty")]
    pub default_routes: Vec<RouteDesc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchDesc {
    pub port_count: u32,
    pub base: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelDesc {
    pub name: String,
    pub kind: String,
    pub base: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pipeline_depth: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taps: Option<Vec<Vec<i32>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub divisor: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmaDesc {
    pub name: String,
    pub direction: String,
    pub base: u32,
    pub bandwidth_bytes_per_sec: f64,
    pub setup_latency_sec: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteDesc {
    pub from: String,
    pub to: String,
}

impl RouteDesc {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self { from: from.into(), to: to.into() }
    }
}

impl KernelDesc {
    pub fn kind(&self) -> Result<KernelKind, OverlayError> {
        KernelKind::parse(&self.kind).ok_or_else(|| {
            OverlayError::Validation(format!("kernel `{}`: unknown kind `{}`", self.name, self.kind))
        })
    }

    pub fn conv_kernel(&self) -> Result<ConvKernel, OverlayError> {
        let invalid = |m: String| OverlayError::Validation(format!("kernel `{}`: {m}", self.name));
        match (&self.taps, self.divisor) {
            (None, None) => Ok(ConvKernel::default()),
            (Some(rows), Some(divisor)) => {
                if rows.len() != CONV_TAPS || rows.iter().any(|r| r.len() != CONV_TAPS) {
                    return Err(invalid(format!("taps must be {CONV_TAPS}x{CONV_TAPS}")));
                }
                let mut taps = [[0; CONV_TAPS]; CONV_TAPS];
                for (dst, src) in taps.iter_mut().zip(rows) {
                    dst.copy_from_slice(src);
                }
                ConvKernel::new(taps, divisor).map_err(|e| invalid(e.to_string()))
            }
            _ => Err(invalid("taps and divisor must be given together".into())),
        }
    }
}

impl DmaDesc {
    pub fn direction(&self) -> Result<DmaDirection, OverlayError> {
        DmaDirection::parse(&self.direction).ok_or_else(|| {
            OverlayError::Validation(format!("dma `{}`: unknown direction `{}`", self.name, self.direction))
        })
    }
}

/// Which side of the switch a named component can appear on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Sides {
    pub produces: bool,
    pub consumes: bool,
}

impl OverlayDescriptor {
    pub fn parse(text: &str) -> Result<Self, OverlayError> {
        let desc: OverlayDescriptor = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => line_col(text, span.start),
                None => (0, 0),
            };
            OverlayError::Parse { line, column, message: e.message().trim().to_string() }
        })?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("descriptor is always representable as TOML")
    }

    pub(crate) fn sides(&self, name: &str) -> Option<Sides> {
        if self.kernels.iter().any(|k| k.name == name) {
            return Some(Sides { produces: true, consumes: true });
        }
        self.dma_channels.iter().find(|d| d.name == name).map(|d| match d.direction() {
            Ok(DmaDirection::ToFabric) => Sides { produces: true, consumes: false },
            Ok(DmaDirection::FromFabric) => Sides { produces: false, consumes: true },
            Err(_) => Sides { produces: false, consumes: false },
        })
    }

    /// Ports the switch needs: two per kernel, one per DMA channel.
    pub fn required_ports(&self) -> u32 {
        2 * self.kernels.len() as u32 + self.dma_channels.len() as u32
    }

    pub fn validate(&self) -> Result<(), OverlayError> {
        let fail = |m: String| Err(OverlayError::Validation(m));
        if self.format != FORMAT_TAG {
            return fail(format!("format must be `{FORMAT_TAG}`, found `{}`", self.format));
        }
        if self.version != FORMAT_VERSION {
            return fail(format!("unsupported version {}", self.version));
        }
        if !(self.fabric_clock_hz.is_finite() && self.fabric_clock_hz > 0.0) {
            return fail(format!("fabric_clock_hz must be positive, found {}", self.fabric_clock_hz));
        }
        if let Some(cpu) = self.cpu_clock_hz {
            if !(cpu.is_finite() && cpu > 0.0) {
                return fail(format!("cpu_clock_hz must be positive, found {cpu}"));
            }
        }
        let mut names: Vec<&str> = self.kernels.iter().map(|k| k.name.as_str()).collect();
        names.extend(self.dma_channels.iter().map(|d| d.name.as_str()));
        for (i, n) in names.iter().enumerate() {
            if n.is_empty() || n.contains('.') {
                return fail(format!("invalid component name `{n}`"));
            }
            if names[..i].contains(n) {
                return fail(format!("duplicate component name `{n}`"));
            }
        }
        for k in &self.kernels {
            k.kind()?;
            k.conv_kernel()?;
        }
        for d in &self.dma_channels {
            d.direction()?;
            if !(d.bandwidth_bytes_per_sec.is_finite() && d.bandwidth_bytes_per_sec > 0.0) {
                return fail(format!("dma `{}`: bandwidth must be positive", d.name));
            }
            if !(d.setup_latency_sec.is_finite() && d.setup_latency_sec >= 0.0) {
                return fail(format!("dma `{}`: setup latency must be non-negative", d.name));
            }
        }
        if self.switch.port_count < self.required_ports() {
            return fail(format!(
                "switch has {} ports but the components need {}",
                self.switch.port_count,
                self.required_ports()
            ));
        }
        self.address_map()?;
        let mut driven: Vec<&str> = Vec::new();
        let mut driving: Vec<&str> = Vec::new();
        for r in &self.default_routes {
            match self.sides(&r.from) {
                Some(s) if s.produces => {}
                Some(_) => return fail(format!("route source `{}` has no output port", r.from)),
                None => return fail(format!("route source `{}` is not declared", r.from)),
            }
            match self.sides(&r.to) {
                Some(s) if s.consumes => {}
                Some(_) => return fail(format!("route target `{}` has no input port", r.to)),
                None => return fail(format!("route target `{}` is not declared", r.to)),
            }
            if driven.contains(&r.to.as_str()) {
                return fail(format!("`{}` is driven by more than one route", r.to));
            }
            if driving.contains(&r.from.as_str()) {
                return fail(format!("`{}` drives more than one route", r.from));
            }
            driven.push(&r.to);
            driving.push(&r.from);
        }
        Ok(())
    }

    /// Register regions in declaration order: switch, kernels, DMA channels.
    pub(crate) fn regions(&self) -> Vec<(u32, u32, String)> {
        let mut out = vec![(self.switch.base, 4 * self.switch.port_count.max(1), "switch".to_string())];
        out.extend(self.kernels.iter().map(|k| (k.base, KERNEL_REGION_BYTES, k.name.clone())));
        out.extend(self.dma_channels.iter().map(|d| (d.base, DMA_REGION_BYTES, d.name.clone())));
        out
    }

    pub(crate) fn address_map(&self) -> Result<AddressMap, OverlayError> {
        let mut map = AddressMap::new();
        for (base, len, owner) in self.regions() {
            map.map_region(base, len, owner.clone())
                .map_err(|e| OverlayError::Validation(format!("register base of `{owner}`: {e}")))?;
        }
        Ok(map)
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map(|i| offset - i).unwrap_or(offset + 1);
    (line, column)
}
