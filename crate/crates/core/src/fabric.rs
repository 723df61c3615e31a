//! The stepped fabric: stream switch plus the kernels and DMA channels
//! attached to it.
//!
//! One call to [`Fabric::step`] is one fabric clock cycle. Every component
//! ticks against its port registers, then the switch moves tokens along its
//! routes. The loop is single-threaded and deterministic.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::dma::{ChannelId, ChannelState, CompletionRecord, DmaBuffer, DmaChannel, DmaDirection, DmaError, TransferTicket};
use crate::kernels::{KernelError, StreamingKernel};
use crate::switch::{CycleStats, Endpoint, PortDirection, PortId, Switch, SwitchError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("no end-of-frame after {cycles} cycles (deadlock or miswired route)")]
    Timeout { cycles: u64 },
    #[error("kernel `{name}`: {source}")]
    Kernel { name: String, source: KernelError },
    #[error(transparent)]
    Dma(#[from] DmaError),
    #[error(transparent)]
    Switch(#[from] SwitchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct KernelId(pub usize);

#[derive(Debug, Clone)]
pub struct KernelSlot {
    pub name: String,
    pub kernel: StreamingKernel,
    pub input: PortId,
    pub output: PortId,
}

/// One host-memory access made by a DMA engine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryAccess {
    pub channel: String,
    pub direction: DmaDirection,
    pub bytes: usize,
}

/// Host-memory traffic. Only DMA engines touch host memory; tokens that
/// travel kernel to kernel over a switch route never appear here.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryTraffic {
    pub accesses: Vec<MemoryAccess>,
}

impl MemoryTraffic {
    pub fn transfers(&self) -> usize {
        self.accesses.len()
    }

    pub fn bytes_read(&self) -> usize {
        self.accesses.iter().filter(|a| a.direction == DmaDirection::ToFabric).map(|a| a.bytes).sum()
    }

    pub fn bytes_written(&self) -> usize {
        self.accesses.iter().filter(|a| a.direction == DmaDirection::FromFabric).map(|a| a.bytes).sum()
    }
}

#[derive(Debug, Clone)]
pub struct Fabric {
    clock_hz: f64,
    cycle: u64,
    switch: Switch,
    kernels: Vec<KernelSlot>,
    channels: Vec<DmaChannel>,
    records: BTreeMap<(usize, u64), Result<CompletionRecord, DmaError>>,
    memory: MemoryTraffic,
    drains: Vec<PortId>,
}

impl Fabric {
    pub fn new(clock_hz: f64) -> Self {
        Self {
            clock_hz,
            cycle: 0,
            switch: Switch::new(),
            kernels: Vec::new(),
            channels: Vec::new(),
            records: BTreeMap::new(),
            memory: MemoryTraffic::default(),
            drains: Vec::new(),
        }
    }

    pub fn clock_hz(&self) -> f64 {
        self.clock_hz
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn switch(&self) -> &Switch {
        &self.switch
    }

    pub fn switch_mut(&mut self) -> &mut Switch {
        &mut self.switch
    }

    pub fn memory(&self) -> &MemoryTraffic {
        &self.memory
    }

    pub fn stats(&self) -> &CycleStats {
        self.switch.stats()
    }

    /// Attach a kernel as `<name>.in` (consumer) and `<name>.out` (producer).
    pub fn add_kernel(&mut self, name: impl Into<String>, kernel: StreamingKernel) -> Result<KernelId, SimError> {
        let name = name.into();
        let input = self.switch.attach_port(Endpoint::new(&name, "in"), PortDirection::Consumer)?;
        let output = self.switch.attach_port(Endpoint::new(&name, "out"), PortDirection::Producer)?;
        self.kernels.push(KernelSlot { name, kernel, input, output });
        Ok(KernelId(self.kernels.len() - 1))
    }

    pub fn kernels(&self) -> &[KernelSlot] {
        &self.kernels
    }

    pub fn kernel(&self, id: KernelId) -> Option<&KernelSlot> {
        self.kernels.get(id.0)
    }

    pub fn kernel_mut(&mut self, id: KernelId) -> Option<&mut KernelSlot> {
        self.kernels.get_mut(id.0)
    }

    pub fn kernel_by_name(&self, name: &str) -> Option<KernelId> {
        self.kernels.iter().position(|k| k.name == name).map(KernelId)
    }

    /// Bind a DMA channel to an already-attached switch port.
    pub fn dma_init(
        &mut self,
        name: impl Into<String>,
        direction: DmaDirection,
        port: PortId,
        bandwidth_bytes_per_sec: f64,
        setup_latency_sec: f64,
    ) -> Result<ChannelId, SimError> {
        let (needed, label) = match direction {
            DmaDirection::ToFabric => (PortDirection::Producer, "producer"),
            DmaDirection::FromFabric => (PortDirection::Consumer, "consumer"),
        };
        if self.switch.direction(port)? != needed {
            return Err(DmaError::PortDirectionMismatch { direction, port, needed: label }.into());
        }
        if self.channels.iter().any(|c| c.port() == port) {
            return Err(SwitchError::DuplicateAttach(self.switch.endpoint(port)?.clone()).into());
        }
        let ch = DmaChannel::new(name.into(), direction, port, bandwidth_bytes_per_sec, setup_latency_sec, self.clock_hz)?;
        self.channels.push(ch);
        Ok(ChannelId(self.channels.len() - 1))
    }

    /// Attach a port named `<name>.stream` and bind a channel to it.
    pub fn add_dma(
        &mut self,
        name: impl Into<String>,
        direction: DmaDirection,
        bandwidth_bytes_per_sec: f64,
        setup_latency_sec: f64,
    ) -> Result<ChannelId, SimError> {
        let name = name.into();
        let port_dir = match direction {
            DmaDirection::ToFabric => PortDirection::Producer,
            DmaDirection::FromFabric => PortDirection::Consumer,
        };
        let port = self.switch.attach_port(Endpoint::new(&name, "stream"), port_dir)?;
        self.dma_init(name, direction, port, bandwidth_bytes_per_sec, setup_latency_sec)
    }

    /// Attach `<name>.in`, a consumer port that accepts and discards one
    /// token per cycle.
    pub fn add_drain(&mut self, name: impl Into<String>) -> Result<PortId, SimError> {
        let port = self.switch.attach_port(Endpoint::new(name, "in"), PortDirection::Consumer)?;
        self.drains.push(port);
        Ok(port)
    }

    pub fn channels(&self) -> &[DmaChannel] {
        &self.channels
    }

    pub fn channel(&self, id: ChannelId) -> Result<&DmaChannel, DmaError> {
        self.channels.get(id.0).ok_or(DmaError::UnknownChannel(id.0))
    }

    pub fn channel_by_name(&self, name: &str) -> Option<ChannelId> {
        self.channels.iter().position(|c| c.name() == name).map(ChannelId)
    }

    /// Arm a channel with a buffer. Host→fabric channels start emitting on
    /// the next cycle; fabric→host channels start draining their port.
    pub fn dma_transfer(&mut self, id: ChannelId, buffer: DmaBuffer) -> Result<TransferTicket, SimError> {
        let cycle = self.cycle;
        let ch = self.channels.get_mut(id.0).ok_or(DmaError::UnknownChannel(id.0))?;
        if ch.state() == ChannelState::Busy {
            return Err(DmaError::Busy.into());
        }
        let seq = ch.start(buffer, cycle)?;
        Ok(TransferTicket { channel: id, seq })
    }

    /// Step until the ticket's transfer completes. Idempotent once complete.
    pub fn dma_wait(&mut self, ticket: TransferTicket, max_cycles: u64) -> Result<CompletionRecord, SimError> {
        let key = (ticket.channel.0, ticket.seq);
        let start = self.cycle;
        loop {
            if let Some(r) = self.records.get(&key) {
                return r.clone().map_err(SimError::from);
            }
            let ch = self.channels.get_mut(ticket.channel.0).ok_or(DmaError::UnknownChannel(ticket.channel.0))?;
            if let Some(result) = ch.collect(ticket.seq) {
                if let Ok(rec) = &result {
                    self.memory.accesses.push(MemoryAccess {
                        channel: ch.name().to_string(),
                        direction: ch.direction(),
                        bytes: rec.bytes_moved,
                    });
                }
                self.records.insert(key, result);
                continue;
            }
            if !ch.is_pending(ticket.seq) {
                return Err(DmaError::UnknownTicket(ticket.seq).into());
            }
            if self.cycle - start >= max_cycles {
                return Err(SimError::Timeout { cycles: max_cycles });
            }
            self.step()?;
        }
    }

    /// True while any kernel, channel or route is mid-frame.
    pub fn busy(&self) -> bool {
        self.switch.in_frame()
            || self.kernels.iter().any(|k| k.kernel.is_busy())
            || self.channels.iter().any(|c| c.state() == ChannelState::Busy && c.bytes_moved() > 0)
    }

    /// One fabric clock cycle.
    pub fn step(&mut self) -> Result<CycleStats, SimError> {
        self.cycle += 1;
        let cycle = self.cycle;
        for slot in &mut self.kernels {
            let mut input = self.switch.take_slot(slot.input);
            let mut output = self.switch.take_slot(slot.output);
            let result = slot.kernel.tick(cycle, &mut input, &mut output);
            self.switch.put_slot(slot.input, input);
            self.switch.put_slot(slot.output, output);
            result.map_err(|source| SimError::Kernel { name: slot.name.clone(), source })?;
        }
        for ch in &mut self.channels {
            let mut reg = self.switch.take_slot(ch.port());
            ch.tick(cycle, &mut reg);
            self.switch.put_slot(ch.port(), reg);
        }
        for port in &self.drains {
            self.switch.take_slot(*port);
        }
        Ok(self.switch.step())
    }

    /// Step until `sink` receives an end-of-frame token.
    pub fn run_frame(&mut self, sink: PortId, max_cycles: u64) -> Result<CycleStats, SimError> {
        if self.switch.direction(sink)? != PortDirection::Consumer {
            return Err(SwitchError::WrongDirection { port: sink, actual: PortDirection::Producer }.into());
        }
        let before = self.switch.stats().clone();
        for _ in 0..max_cycles {
            let delta = self.step()?;
            if delta.frames_delivered.contains_key(&sink) {
                return Ok(self.switch.stats().since(&before));
            }
        }
        Err(SimError::Timeout { cycles: max_cycles })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dma::{transfer_cost, DEFAULT_BANDWIDTH_BYTES_PER_SEC as BW, DEFAULT_SETUP_LATENCY_SEC as SETUP};
    use crate::kernels::{make_streaming, KernelKind, KernelParams};
    use proptest::prelude::*;

    const CLOCK: f64 = 200e6;

    fn loopback() -> (Fabric, ChannelId, ChannelId) {
        let mut f = Fabric::new(CLOCK);
        let tx = f.add_dma("dma_in", DmaDirection::ToFabric, BW, SETUP).unwrap();
        let rx = f.add_dma("dma_out", DmaDirection::FromFabric, BW, SETUP).unwrap();
        let (p, c) = (f.channel(tx).unwrap().port(), f.channel(rx).unwrap().port());
        f.switch_mut().configure_route(p, c).unwrap();
        (f, tx, rx)
    }

    fn round_trip(f: &mut Fabric, tx: ChannelId, rx: ChannelId, data: &[u8]) -> (CompletionRecord, CompletionRecord) {
        let r = f.dma_transfer(rx, DmaBuffer::zeroed(data.len()).unwrap()).unwrap();
        let t = f.dma_transfer(tx, DmaBuffer::new(data.to_vec()).unwrap()).unwrap();
        let sent = f.dma_wait(t, 10 * data.len() as u64 + 100).unwrap();
        let got = f.dma_wait(r, 10 * data.len() as u64 + 100).unwrap();
        (sent, got)
    }

    #[test]
    fn passthrough_frame_cycle_count() {
        // dma_in -> id -> dma_out, 4x4 frame, register chain depth d.
        // cycle 1: source fills its register, switch delivers token 0 to id.in
        // cycle 2: id accepts token 0; with d = 0 it is offered and delivered to the sink
        // so token i reaches the sink in cycle i + 2 + d, the last one in 16 + 1 + d.
        for depth in [0u32, 3] {
            let mut f = Fabric::new(CLOCK);
            let tx = f.add_dma("dma_in", DmaDirection::ToFabric, BW, SETUP).unwrap();
            let mut params = KernelParams::for_kind(KernelKind::Passthrough);
            params.pipeline_depth = depth;
            let mut k = make_streaming(KernelKind::Passthrough, params);
            k.begin_frame(4, 4).unwrap();
            let id = f.add_kernel("id", k).unwrap();
            let sink = f.add_drain("sink").unwrap();
            let src = f.channel(tx).unwrap().port();
            let (kin, kout) = (f.kernel(id).unwrap().input, f.kernel(id).unwrap().output);
            f.switch_mut().configure_route(src, kin).unwrap();
            f.switch_mut().configure_route(kout, sink).unwrap();
            f.dma_transfer(tx, DmaBuffer::new((0..16).collect()).unwrap()).unwrap();
            let stats = f.run_frame(sink, 1000).unwrap();
            let latency = KernelKind::Passthrough.latency(4, depth).unwrap();
            assert_eq!(stats.cycles_elapsed, 16 + latency + 1, "depth {depth}");
            assert_eq!(stats.moved(src, kin), 16);
            assert!(stats.moved(kout, sink) <= stats.cycles_elapsed);
        }
    }

    #[test]
    fn unrouted_sink_times_out() {
        let mut f = Fabric::new(CLOCK);
        let tx = f.add_dma("dma_in", DmaDirection::ToFabric, BW, SETUP).unwrap();
        let sink = f.add_drain("sink").unwrap();
        f.dma_transfer(tx, DmaBuffer::new(vec![1, 2, 3]).unwrap()).unwrap();
        assert_eq!(f.run_frame(sink, 50), Err(SimError::Timeout { cycles: 50 }));
    }

    #[test]
    fn dma_port_direction_checked() {
        let mut f = Fabric::new(CLOCK);
        let consumer = f.switch_mut().attach_port(Endpoint::new("x", "in"), PortDirection::Consumer).unwrap();
        let producer = f.switch_mut().attach_port(Endpoint::new("y", "out"), PortDirection::Producer).unwrap();
        assert!(matches!(
            f.dma_init("tx", DmaDirection::ToFabric, consumer, BW, SETUP),
            Err(SimError::Dma(DmaError::PortDirectionMismatch { .. }))
        ));
        let a = f.dma_init("tx", DmaDirection::ToFabric, producer, BW, SETUP).unwrap();
        let b = f.dma_init("rx", DmaDirection::FromFabric, consumer, BW, SETUP).unwrap();
        assert_ne!(a, b);
        assert_eq!(f.channel(a).unwrap().state(), ChannelState::Idle);
        assert_eq!(f.channel(b).unwrap().state(), ChannelState::Idle);
    }

    #[test]
    fn loopback_is_identity() {
        let (mut f, tx, rx) = loopback();
        let data: Vec<u8> = (0..=255).cycle().take(1000).collect();
        let (sent, got) = round_trip(&mut f, tx, rx, &data);
        assert_eq!(sent.bytes_moved, 1000);
        assert_eq!(got.bytes_moved, 1000);
        assert_eq!(got.data.as_deref(), Some(&data[..]));
        assert_eq!(sent.stall_cycles, 0);
        assert!((sent.simulated_seconds - transfer_cost(1000, BW, SETUP)).abs() < 1e-15);
        assert_eq!(f.memory().transfers(), 2);
    }

    #[test]
    fn busy_and_idempotent_wait() {
        let (mut f, tx, rx) = loopback();
        let r = f.dma_transfer(rx, DmaBuffer::zeroed(8).unwrap()).unwrap();
        let t = f.dma_transfer(tx, DmaBuffer::new(vec![9; 8]).unwrap()).unwrap();
        assert_eq!(f.dma_transfer(tx, DmaBuffer::new(vec![1]).unwrap()), Err(SimError::Dma(DmaError::Busy)));
        let a = f.dma_wait(r, 100).unwrap();
        let b = f.dma_wait(r, 100).unwrap();
        assert_eq!(a, b);
        f.dma_wait(t, 100).unwrap();
        assert_eq!(f.channel(tx).unwrap().state(), ChannelState::Idle);
        assert_eq!(f.memory().transfers(), 2);
    }

    #[test]
    fn stall_time_is_charged() {
        let (mut f, tx, rx) = loopback();
        let rx_port = f.channel(rx).unwrap().port();
        let tx_port = f.channel(tx).unwrap().port();
        let r = f.dma_transfer(rx, DmaBuffer::zeroed(64).unwrap()).unwrap();
        let t = f.dma_transfer(tx, DmaBuffer::new(vec![5; 64]).unwrap()).unwrap();
        f.switch_mut().hold(rx_port, 100).unwrap();
        let before = f.stats().clone();
        let sent = f.dma_wait(t, 10_000).unwrap();
        f.dma_wait(r, 10_000).unwrap();
        let stalls = f.stats().since(&before).stalls(tx_port, rx_port);
        assert_eq!(stalls, 100);
        assert_eq!(sent.stall_cycles, stalls);
        let expected = transfer_cost(64, BW, SETUP) + 100.0 / CLOCK;
        assert!((sent.simulated_seconds - expected).abs() < 1e-15);
    }

    #[test]
    fn oversize_frame_is_length_mismatch() {
        let (mut f, tx, rx) = loopback();
        let r = f.dma_transfer(rx, DmaBuffer::zeroed(4).unwrap()).unwrap();
        f.dma_transfer(tx, DmaBuffer::new(vec![1; 10]).unwrap()).unwrap();
        assert_eq!(f.dma_wait(r, 1000), Err(SimError::Dma(DmaError::LengthMismatch { buffer: 4 })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn loopback_round_trip(data in prop::collection::vec(any::<u8>(), 1..600)) {
            let (mut f, tx, rx) = loopback();
            let (_, got) = round_trip(&mut f, tx, rx, &data);
            prop_assert_eq!(got.data.unwrap(), data);
            // conservation: everything that entered the route left it
            let s = f.stats();
            let (p, c) = (f.channel(tx).unwrap().port(), f.channel(rx).unwrap().port());
            prop_assert_eq!(s.moved(p, c) as usize, f.memory().bytes_written());
        }
    }
}
