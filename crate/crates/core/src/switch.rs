//! Configurable stream crossbar between kernel and DMA ports.
//!
//! Every attached port owns a one-token register. A producer's register is
//! filled by its component; a consumer's register is drained by its
//! component. Each [`Switch::step`] moves at most one token per route, and
//! only when the producer register is full and the consumer register is
//! empty (backpressure). A token delivered in cycle `t` is visible to the
//! consuming component in cycle `t + 1`.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// One beat on a stream: a zero-extended pixel plus end-of-frame marker.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct StreamToken {
    pub payload: u32,
    pub last: bool,
}

impl StreamToken {
    pub fn pixel(p: u8, last: bool) -> Self {
        Self { payload: p as u32, last }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PortId(pub u32);

impl fmt::Display for PortId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "port{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PortDirection {
    Producer,
    Consumer,
}

/// Component-side identity of a port, e.g. `conv.out` or `dma_in.stream`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Endpoint {
    pub component: String,
    pub port: String,
}

impl Endpoint {
    pub fn new(component: impl Into<String>, port: impl Into<String>) -> Self {
        Self { component: component.into(), port: port.into() }
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.component, self.port)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SwitchError {
    #[error("endpoint {0} is already attached")]
    DuplicateAttach(Endpoint),
    #[error("unknown port {0}")]
    UnknownPort(PortId),
    #[error("consumer {consumer} is already driven by {driver}")]
    FanInConflict { consumer: PortId, driver: PortId },
    #[error("producer {producer} already drives {consumer}")]
    FanOut { producer: PortId, consumer: PortId },
    #[error("{port} is a {actual:?} port")]
    WrongDirection { port: PortId, actual: PortDirection },
}

/// Producer → consumer routing table. No fan-in, no fan-out.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SwitchConfig {
    routes: BTreeMap<PortId, PortId>,
}

impl SwitchConfig {
    pub fn routes(&self) -> impl Iterator<Item = (PortId, PortId)> + '_ {
        self.routes.iter().map(|(p, c)| (*p, *c))
    }

    pub fn consumer_of(&self, producer: PortId) -> Option<PortId> {
        self.routes.get(&producer).copied()
    }

    pub fn driver_of(&self, consumer: PortId) -> Option<PortId> {
        self.routes.iter().find(|(_, c)| **c == consumer).map(|(p, _)| *p)
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    fn insert(&mut self, producer: PortId, consumer: PortId) -> Result<(), SwitchError> {
        if let Some(driver) = self.driver_of(consumer) {
            return Err(SwitchError::FanInConflict { consumer, driver });
        }
        if let Some(existing) = self.consumer_of(producer) {
            return Err(SwitchError::FanOut { producer, consumer: existing });
        }
        self.routes.insert(producer, consumer);
        Ok(())
    }

    /// Build a config from consumer → producer pairs, rejecting fan-out.
    pub fn from_consumer_map(pairs: impl IntoIterator<Item = (PortId, PortId)>) -> Result<Self, SwitchError> {
        let mut cfg = Self::default();
        for (consumer, producer) in pairs {
            cfg.insert(producer, consumer)?;
        }
        Ok(cfg)
    }
}

/// Cycle and per-route counters. Routes are keyed `(producer, consumer)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CycleStats {
    pub cycles_elapsed: u64,
    pub tokens_moved: BTreeMap<(PortId, PortId), u64>,
    pub stall_cycles: BTreeMap<(PortId, PortId), u64>,
    /// Consumer ports that received an end-of-frame token.
    pub frames_delivered: BTreeMap<PortId, u64>,
}

impl CycleStats {
    pub fn moved(&self, producer: PortId, consumer: PortId) -> u64 {
        self.tokens_moved.get(&(producer, consumer)).copied().unwrap_or(0)
    }

    pub fn stalls(&self, producer: PortId, consumer: PortId) -> u64 {
        self.stall_cycles.get(&(producer, consumer)).copied().unwrap_or(0)
    }

    pub fn total_moved(&self) -> u64 {
        self.tokens_moved.values().sum()
    }

    pub fn total_stalls(&self) -> u64 {
        self.stall_cycles.values().sum()
    }

    pub fn accumulate(&mut self, other: &CycleStats) {
        self.cycles_elapsed += other.cycles_elapsed;
        for (k, v) in &other.tokens_moved {
            *self.tokens_moved.entry(*k).or_default() += v;
        }
        for (k, v) in &other.stall_cycles {
            *self.stall_cycles.entry(*k).or_default() += v;
        }
        for (k, v) in &other.frames_delivered {
            *self.frames_delivered.entry(*k).or_default() += v;
        }
    }

    /// Counters accumulated since `earlier` was taken.
    pub fn since(&self, earlier: &CycleStats) -> CycleStats {
        CycleStats {
            cycles_elapsed: self.cycles_elapsed - earlier.cycles_elapsed,
            tokens_moved: counter_diff(&self.tokens_moved, &earlier.tokens_moved),
            stall_cycles: counter_diff(&self.stall_cycles, &earlier.stall_cycles),
            frames_delivered: counter_diff(&self.frames_delivered, &earlier.frames_delivered),
        }
    }
}

fn counter_diff<K: Ord + Copy>(now: &BTreeMap<K, u64>, then: &BTreeMap<K, u64>) -> BTreeMap<K, u64> {
    now.iter()
        .map(|(k, v)| (*k, v - then.get(k).copied().unwrap_or(0)))
        .filter(|(_, v)| *v > 0)
        .collect()
}

#[derive(Debug, Clone)]
struct Port {
    endpoint: Endpoint,
    direction: PortDirection,
    slot: Option<StreamToken>,
    hold: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Switch {
    ports: Vec<Port>,
    active: SwitchConfig,
    pending: Option<SwitchConfig>,
    /// Routes that have moved part of a frame.
    mid_frame: BTreeMap<PortId, bool>,
    stats: CycleStats,
}

impl Switch {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach_port(&mut self, endpoint: Endpoint, direction: PortDirection) -> Result<PortId, SwitchError> {
        if self.ports.iter().any(|p| p.endpoint == endpoint) {
            return Err(SwitchError::DuplicateAttach(endpoint));
        }
        self.ports.push(Port { endpoint, direction, slot: None, hold: 0 });
        Ok(PortId(self.ports.len() as u32 - 1))
    }

    pub fn port_count(&self) -> usize {
        self.ports.len()
    }

    pub fn ports(&self) -> impl Iterator<Item = (PortId, &Endpoint, PortDirection)> {
        self.ports.iter().enumerate().map(|(i, p)| (PortId(i as u32), &p.endpoint, p.direction))
    }

    pub fn find(&self, endpoint: &Endpoint) -> Option<PortId> {
        self.ports.iter().position(|p| &p.endpoint == endpoint).map(|i| PortId(i as u32))
    }

    fn port(&self, id: PortId) -> Result<&Port, SwitchError> {
        self.ports.get(id.0 as usize).ok_or(SwitchError::UnknownPort(id))
    }

    fn port_mut(&mut self, id: PortId) -> Result<&mut Port, SwitchError> {
        self.ports.get_mut(id.0 as usize).ok_or(SwitchError::UnknownPort(id))
    }

    pub fn direction(&self, id: PortId) -> Result<PortDirection, SwitchError> {
        Ok(self.port(id)?.direction)
    }

    pub fn endpoint(&self, id: PortId) -> Result<&Endpoint, SwitchError> {
        Ok(&self.port(id)?.endpoint)
    }

    fn expect_direction(&self, id: PortId, want: PortDirection) -> Result<(), SwitchError> {
        let actual = self.direction(id)?;
        if actual != want {
            return Err(SwitchError::WrongDirection { port: id, actual });
        }
        Ok(())
    }

    /// The configuration new frames will use: pending if staged, else active.
    pub fn config(&self) -> &SwitchConfig {
        self.pending.as_ref().unwrap_or(&self.active)
    }

    pub fn active_config(&self) -> &SwitchConfig {
        &self.active
    }

    /// Add a route. Takes effect at the next frame boundary.
    pub fn configure_route(&mut self, producer: PortId, consumer: PortId) -> Result<(), SwitchError> {
        self.expect_direction(producer, PortDirection::Producer)?;
        self.expect_direction(consumer, PortDirection::Consumer)?;
        let mut next = self.config().clone();
        next.insert(producer, consumer)?;
        self.stage(next);
        Ok(())
    }

    /// Remove whatever route drives `consumer`.
    pub fn clear_consumer(&mut self, consumer: PortId) -> Result<(), SwitchError> {
        self.port(consumer)?;
        let mut next = self.config().clone();
        next.routes.retain(|_, c| *c != consumer);
        self.stage(next);
        Ok(())
    }

    /// Replace the whole routing table. Takes effect at the next frame boundary.
    pub fn set_config(&mut self, config: SwitchConfig) -> Result<(), SwitchError> {
        for (p, c) in config.routes() {
            self.expect_direction(p, PortDirection::Producer)?;
            self.expect_direction(c, PortDirection::Consumer)?;
        }
        self.stage(config);
        Ok(())
    }

    fn stage(&mut self, next: SwitchConfig) {
        if next == self.active {
            self.pending = None;
        } else {
            self.pending = Some(next);
        }
        self.apply_pending();
    }

    /// True when some route has carried part of a frame but not its end.
    pub fn in_frame(&self) -> bool {
        self.mid_frame.values().any(|m| *m)
    }

    fn apply_pending(&mut self) {
        if self.in_frame() {
            return;
        }
        if let Some(next) = self.pending.take() {
            self.active = next;
            self.mid_frame.clear();
        }
    }

    /// Keep `consumer` not-ready for the next `cycles` steps (backpressure injection).
    pub fn hold(&mut self, consumer: PortId, cycles: u64) -> Result<(), SwitchError> {
        self.expect_direction(consumer, PortDirection::Consumer)?;
        self.port_mut(consumer)?.hold = cycles;
        Ok(())
    }

    pub fn slot(&self, id: PortId) -> Option<StreamToken> {
        self.ports.get(id.0 as usize).and_then(|p| p.slot)
    }

    /// Detach a port's register for a component tick; pair with [`Switch::put_slot`].
    pub(crate) fn take_slot(&mut self, id: PortId) -> Option<StreamToken> {
        self.ports[id.0 as usize].slot.take()
    }

    pub(crate) fn put_slot(&mut self, id: PortId, slot: Option<StreamToken>) {
        self.ports[id.0 as usize].slot = slot;
    }

    /// Place a token in a producer's register if it is empty.
    pub fn offer(&mut self, producer: PortId, token: StreamToken) -> Result<bool, SwitchError> {
        self.expect_direction(producer, PortDirection::Producer)?;
        let port = self.port_mut(producer)?;
        if port.slot.is_some() {
            return Ok(false);
        }
        port.slot = Some(token);
        Ok(true)
    }

    /// Remove the token waiting in a consumer's register.
    pub fn take(&mut self, consumer: PortId) -> Result<Option<StreamToken>, SwitchError> {
        self.expect_direction(consumer, PortDirection::Consumer)?;
        Ok(self.port_mut(consumer)?.slot.take())
    }

    pub fn stats(&self) -> &CycleStats {
        &self.stats
    }

    /// Advance one fabric cycle. Returns this cycle's counters.
    pub fn step(&mut self) -> CycleStats {
        self.apply_pending();
        let mut delta = CycleStats { cycles_elapsed: 1, ..Default::default() };
        let routes: Vec<(PortId, PortId)> = self.active.routes().collect();
        for (p, c) in routes {
            let (pi, ci) = (p.0 as usize, c.0 as usize);
            let Some(token) = self.ports[pi].slot else { continue };
            let ready = self.ports[ci].slot.is_none() && self.ports[ci].hold == 0;
            if ready {
                self.ports[ci].slot = Some(token);
                self.ports[pi].slot = None;
                *delta.tokens_moved.entry((p, c)).or_default() += 1;
                self.mid_frame.insert(p, !token.last);
                if token.last {
                    *delta.frames_delivered.entry(c).or_default() += 1;
                }
            } else {
                *delta.stall_cycles.entry((p, c)).or_default() += 1;
            }
        }
        for port in &mut self.ports {
            port.hold = port.hold.saturating_sub(1);
        }
        self.stats.accumulate(&delta);
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_port() -> (Switch, PortId, PortId) {
        let mut sw = Switch::new();
        let p = sw.attach_port(Endpoint::new("src", "out"), PortDirection::Producer).unwrap();
        let c = sw.attach_port(Endpoint::new("dst", "in"), PortDirection::Consumer).unwrap();
        sw.configure_route(p, c).unwrap();
        (sw, p, c)
    }

    #[test]
    fn attach_ids() {
        let mut sw = Switch::new();
        assert_eq!(sw.attach_port(Endpoint::new("a", "out"), PortDirection::Producer).unwrap(), PortId(0));
        assert!(matches!(
            sw.attach_port(Endpoint::new("a", "out"), PortDirection::Producer),
            Err(SwitchError::DuplicateAttach(_))
        ));
        let ids: Vec<_> = ["b", "c", "d"]
            .iter()
            .map(|n| sw.attach_port(Endpoint::new(*n, "in"), PortDirection::Consumer).unwrap())
            .collect();
        assert_eq!(ids, vec![PortId(1), PortId(2), PortId(3)]);
        assert_eq!(sw.port_count(), 4);
    }

    #[test]
    fn edge_pipeline_routes() {
        let mut sw = Switch::new();
        let dma_in = sw.attach_port(Endpoint::new("dma_in", "stream"), PortDirection::Producer).unwrap();
        let conv_in = sw.attach_port(Endpoint::new("conv", "in"), PortDirection::Consumer).unwrap();
        let conv_out = sw.attach_port(Endpoint::new("conv", "out"), PortDirection::Producer).unwrap();
        let canny_in = sw.attach_port(Endpoint::new("canny", "in"), PortDirection::Consumer).unwrap();
        let canny_out = sw.attach_port(Endpoint::new("canny", "out"), PortDirection::Producer).unwrap();
        let dma_out = sw.attach_port(Endpoint::new("dma_out", "stream"), PortDirection::Consumer).unwrap();
        sw.configure_route(dma_in, conv_in).unwrap();
        sw.configure_route(conv_out, canny_in).unwrap();
        sw.configure_route(canny_out, dma_out).unwrap();
        assert_eq!(sw.config().len(), 3);
        assert_eq!(
            sw.configure_route(dma_in, canny_in),
            Err(SwitchError::FanInConflict { consumer: canny_in, driver: conv_out })
        );
        assert_eq!(sw.configure_route(PortId(99), dma_out), Err(SwitchError::UnknownPort(PortId(99))));
        assert!(matches!(sw.configure_route(conv_in, dma_out), Err(SwitchError::WrongDirection { .. })));
    }

    #[test]
    fn fan_out_rejected() {
        let (mut sw, p, _) = two_port();
        let c2 = sw.attach_port(Endpoint::new("other", "in"), PortDirection::Consumer).unwrap();
        assert!(matches!(sw.configure_route(p, c2), Err(SwitchError::FanOut { .. })));
    }

    #[test]
    fn step_moves_one_token() {
        let (mut sw, p, c) = two_port();
        sw.offer(p, StreamToken::pixel(7, false)).unwrap();
        let d = sw.step();
        assert_eq!(d.moved(p, c), 1);
        assert_eq!(sw.take(c).unwrap(), Some(StreamToken::pixel(7, false)));
    }

    #[test]
    fn stalled_consumer_records_stall() {
        let (mut sw, p, c) = two_port();
        sw.offer(p, StreamToken::pixel(1, false)).unwrap();
        sw.step();
        // consumer never drained: second token stalls
        sw.offer(p, StreamToken::pixel(2, false)).unwrap();
        let d = sw.step();
        assert_eq!(d.moved(p, c), 0);
        assert_eq!(d.stalls(p, c), 1);
        assert_eq!(sw.stats().stalls(p, c), 1);
        // hold injection
        sw.take(c).unwrap();
        sw.hold(c, 3).unwrap();
        for _ in 0..3 {
            assert_eq!(sw.step().stalls(p, c), 1);
        }
        assert_eq!(sw.step().moved(p, c), 1);
    }

    #[test]
    fn empty_config_step_is_noop() {
        let mut sw = Switch::new();
        let d = sw.step();
        assert_eq!(d.cycles_elapsed, 1);
        assert_eq!(d.total_moved(), 0);
        assert_eq!(sw.stats().cycles_elapsed, 1);
    }

    #[test]
    fn reroute_waits_for_frame_boundary() {
        let (mut sw, p, c) = two_port();
        let c2 = sw.attach_port(Endpoint::new("other", "in"), PortDirection::Consumer).unwrap();
        sw.offer(p, StreamToken::pixel(1, false)).unwrap();
        sw.step();
        sw.take(c).unwrap();
        assert!(sw.in_frame());
        sw.clear_consumer(c).unwrap();
        sw.configure_route(p, c2).unwrap();
        // still the old route until the frame ends
        assert_eq!(sw.active_config().consumer_of(p), Some(c));
        sw.offer(p, StreamToken::pixel(2, true)).unwrap();
        assert_eq!(sw.step().moved(p, c), 1);
        assert!(!sw.in_frame());
        sw.offer(p, StreamToken::pixel(3, true)).unwrap();
        assert_eq!(sw.step().moved(p, c2), 1);
    }

    #[test]
    fn stats_since() {
        let (mut sw, p, c) = two_port();
        let before = sw.stats().clone();
        for i in 0..5u8 {
            sw.offer(p, StreamToken::pixel(i, i == 4)).unwrap();
            sw.step();
            sw.take(c).unwrap();
        }
        let d = sw.stats().since(&before);
        assert_eq!(d.cycles_elapsed, 5);
        assert_eq!(d.moved(p, c), 5);
        assert_eq!(d.frames_delivered.get(&c), Some(&1));
    }
}
