//! Word-addressed control-register space of the fabric.
//!
//! An [`AddressMap`] hands out non-overlapping regions to fabric components;
//! a [`RegisterFile`] holds the 32-bit words behind them. [`Mmio`] bundles the
//! two and is what the host talks to. Accesses are 32 bits wide and must be
//! 4-byte aligned; narrower accesses are rejected rather than widened.
//! Reads have no side effects.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Width of every register access, in bytes.
pub const WORD_BYTES: u32 = 4;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MmioError {
    #[error("region 0x{base:08x}+0x{length:x} overlaps region `{owner}`")]
    Overlap { base: u32, length: u32, owner: String },
    #[error("0x{0:x} is not 4-byte aligned")]
    Alignment(u64),
    #[error("offset 0x{offset:x} outside region of length 0x{length:x}")]
    Range { offset: u32, length: u32 },
    #[error("address 0x{0:08x} is not mapped")]
    Unmapped(u32),
    #[error("unknown region handle {0}")]
    UnknownRegion(usize),
}

/// Opaque handle to a mapped region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RegionHandle(usize);

impl RegionHandle {
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for RegionHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "region#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub base: u32,
    pub length: u32,
    pub owner: String,
}

impl Region {
    fn end(&self) -> u64 {
        self.base as u64 + self.length as u64
    }

    fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (addr as u64) < self.end()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AddressMap {
    regions: Vec<Region>,
}

impl AddressMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn map_region(
        &mut self,
        base: u32,
        length: u32,
        owner: impl Into<String>,
    ) -> Result<RegionHandle, MmioError> {
        if base % WORD_BYTES != 0 {
            return Err(MmioError::Alignment(base as u64));
        }
        if length == 0 || length % WORD_BYTES != 0 {
            return Err(MmioError::Alignment(length as u64));
        }
        let candidate = Region { base, length, owner: owner.into() };
        if candidate.end() > u32::MAX as u64 + 1 {
            return Err(MmioError::Range { offset: length, length: u32::MAX - base });
        }
        if let Some(clash) = self
            .regions
            .iter()
            .find(|r| (candidate.base as u64) < r.end() && (r.base as u64) < candidate.end())
        {
            return Err(MmioError::Overlap { base, length, owner: clash.owner.clone() });
        }
        self.regions.push(candidate);
        Ok(RegionHandle(self.regions.len() - 1))
    }

    pub fn region(&self, handle: RegionHandle) -> Result<&Region, MmioError> {
        self.regions.get(handle.0).ok_or(MmioError::UnknownRegion(handle.0))
    }

    pub fn regions(&self) -> impl Iterator<Item = (RegionHandle, &Region)> {
        self.regions.iter().enumerate().map(|(i, r)| (RegionHandle(i), r))
    }

    /// Region handle and region-relative offset of an absolute address.
    pub fn resolve(&self, addr: u32) -> Option<(RegionHandle, u32)> {
        self.regions()
            .find(|(_, r)| r.contains(addr))
            .map(|(h, r)| (h, addr - r.base))
    }

    /// Absolute address of `offset` inside `handle`, checking alignment and range.
    pub fn address_of(&self, handle: RegionHandle, offset: u32) -> Result<u32, MmioError> {
        let region = self.region(handle)?;
        if offset % WORD_BYTES != 0 {
            return Err(MmioError::Alignment(offset as u64));
        }
        if offset as u64 + WORD_BYTES as u64 > region.length as u64 {
            return Err(MmioError::Range { offset, length: region.length });
        }
        Ok(region.base + offset)
    }
}

/// Sparse storage of 32-bit registers keyed by absolute word-aligned address.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegisterFile {
    storage: BTreeMap<u32, u32>,
    reset_value: u32,
}

impl Default for RegisterFile {
    fn default() -> Self {
        Self::new(0)
    }
}

impl RegisterFile {
    pub fn new(reset_value: u32) -> Self {
        Self { storage: BTreeMap::new(), reset_value }
    }

    pub fn reset_value(&self) -> u32 {
        self.reset_value
    }

    pub fn load(&self, addr: u32) -> u32 {
        debug_assert_eq!(addr % WORD_BYTES, 0);
        self.storage.get(&addr).copied().unwrap_or(self.reset_value)
    }

    pub fn store(&mut self, addr: u32, value: u32) {
        debug_assert_eq!(addr % WORD_BYTES, 0);
        self.storage.insert(addr, value);
    }

    /// Every register that has been written, in address order.
    pub fn written(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.storage.iter().map(|(a, v)| (*a, *v))
    }
}

/// Address map plus register file: the host-visible MMIO space.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mmio {
    map: AddressMap,
    regs: RegisterFile,
}

impl Mmio {
    pub fn new(reset_value: u32) -> Self {
        Self { map: AddressMap::new(), regs: RegisterFile::new(reset_value) }
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn registers(&self) -> &RegisterFile {
        &self.regs
    }

    pub fn map_region(
        &mut self,
        base: u32,
        length: u32,
        owner: impl Into<String>,
    ) -> Result<RegionHandle, MmioError> {
        self.map.map_region(base, length, owner)
    }

    pub fn write(&mut self, region: RegionHandle, offset: u32, value: u32) -> Result<(), MmioError> {
        let addr = self.map.address_of(region, offset)?;
        self.regs.store(addr, value);
        Ok(())
    }

    pub fn read(&self, region: RegionHandle, offset: u32) -> Result<u32, MmioError> {
        let addr = self.map.address_of(region, offset)?;
        Ok(self.regs.load(addr))
    }

    /// Write by absolute bus address.
    pub fn write_addr(&mut self, addr: u32, value: u32) -> Result<(), MmioError> {
        if addr % WORD_BYTES != 0 {
            return Err(MmioError::Alignment(addr as u64));
        }
        let (region, offset) = self.map.resolve(addr).ok_or(MmioError::Unmapped(addr))?;
        self.write(region, offset, value)
    }

    pub fn read_addr(&self, addr: u32) -> Result<u32, MmioError> {
        if addr % WORD_BYTES != 0 {
            return Err(MmioError::Alignment(addr as u64));
        }
        let (region, offset) = self.map.resolve(addr).ok_or(MmioError::Unmapped(addr))?;
        self.read(region, offset)
    }

    /// `(address, value)` for every word of every mapped region.
    pub fn snapshot(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for (_, region) in self.map.regions() {
            for offset in (0..region.length).step_by(WORD_BYTES as usize) {
                let addr = region.base + offset;
                out.push((addr, self.regs.load(addr)));
            }
        }
        out.sort_unstable();
        out
    }
}
