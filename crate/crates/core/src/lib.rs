//! Cycle-approximate simulator of a processor + programmable-fabric overlay.
//!
//! The fabric side is a word-addressed register space ([`mmio`]), a stream
//! crossbar ([`switch`]) stepped one clock at a time ([`fabric`]),
//! line-buffered streaming image kernels ([`kernels`]) and DMA engines with a
//! bandwidth/latency cost model ([`dma`]). An [`overlay`] descriptor wires
//! them together the way a bitstream would. The host side has CPU reference
//! pipelines ([`reference`]) and a benchmark harness ([`bench`]) that times
//! every configuration and prints a speedup table.

pub mod bench;
pub mod dma;
pub mod fabric;
pub mod ffi;
pub mod kernels;
pub mod mmio;
pub mod overlay;
pub mod reference;
pub mod switch;
