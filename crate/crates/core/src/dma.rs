//! DMA channels moving host byte buffers to and from stream ports.
//!
//! A host→fabric channel (MM2S) emits one byte per token, one token per
//! cycle whenever its producer register is free. A fabric→host channel
//! (S2MM) drains its consumer register into the host buffer until it sees
//! the end-of-frame token. Simulated cost of a transfer is
//! `setup_latency + length / bandwidth` plus any backpressure stall cycles
//! converted at the fabric clock.

use thiserror::Error;

use crate::switch::{PortId, StreamToken};

pub const DEFAULT_BANDWIDTH_BYTES_PER_SEC: f64 = 400e6;
pub const DEFAULT_SETUP_LATENCY_SEC: f64 = 50e-6;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DmaError {
    #[error("{direction:?} channel cannot use {port}: it is not a {needed} port")]
    PortDirectionMismatch { direction: DmaDirection, port: PortId, needed: &'static str },
    #[error("channel is busy with an outstanding transfer")]
    Busy,
    #[error("incoming frame is larger than the {buffer}-byte buffer")]
    LengthMismatch { buffer: usize },
    #[error("DMA buffers must not be empty")]
    EmptyBuffer,
    #[error("bandwidth and setup latency must be finite, bandwidth positive")]
    InvalidTiming,
    #[error("unknown channel {0}")]
    UnknownChannel(usize),
    #[error("unknown transfer ticket {0}")]
    UnknownTicket(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DmaDirection {
    /// Host memory to stream (MM2S).
    ToFabric,
    /// Stream to host memory (S2MM).
    FromFabric,
}

impl DmaDirection {
    pub fn name(self) -> &'static str {
        match self {
            DmaDirection::ToFabric => "to_fabric",
            DmaDirection::FromFabric => "from_fabric",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "to_fabric" => Some(DmaDirection::ToFabric),
            "from_fabric" => Some(DmaDirection::FromFabric),
            _ => None,
        }
    }
}

/// Contiguous, non-empty host buffer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmaBuffer {
    bytes: Vec<u8>,
}

impl DmaBuffer {
    pub fn new(bytes: Vec<u8>) -> Result<Self, DmaError> {
        if bytes.is_empty() {
            return Err(DmaError::EmptyBuffer);
        }
        Ok(Self { bytes })
    }

    pub fn zeroed(length: usize) -> Result<Self, DmaError> {
        Self::new(vec![0; length])
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelState {
    Idle,
    Busy,
    Done,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ChannelId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransferTicket {
    pub channel: ChannelId,
    pub seq: u64,
}

/// Outcome of a finished transfer.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRecord {
    pub bytes_moved: usize,
    /// `setup_latency + bytes_moved / bandwidth + stall_cycles / fabric_clock`
    pub simulated_seconds: f64,
    pub stall_cycles: u64,
    pub start_cycle: u64,
    pub end_cycle: u64,
    /// Payload of a fabric→host transfer.
    pub data: Option<Vec<u8>>,
}

#[derive(Debug, Clone)]
struct Transfer {
    seq: u64,
    buffer: Vec<u8>,
    position: usize,
    stalls: u64,
    start_cycle: u64,
}

#[derive(Debug, Clone)]
pub struct DmaChannel {
    name: String,
    direction: DmaDirection,
    port: PortId,
    bandwidth_bytes_per_sec: f64,
    setup_latency_sec: f64,
    state: ChannelState,
    current: Option<Transfer>,
    finished: Option<(u64, Result<CompletionRecord, DmaError>)>,
    next_seq: u64,
    fabric_clock_hz: f64,
}

impl DmaChannel {
    pub(crate) fn new(
        name: String,
        direction: DmaDirection,
        port: PortId,
        bandwidth_bytes_per_sec: f64,
        setup_latency_sec: f64,
        fabric_clock_hz: f64,
    ) -> Result<Self, DmaError> {
        if !(bandwidth_bytes_per_sec.is_finite() && bandwidth_bytes_per_sec > 0.0)
            || !(setup_latency_sec.is_finite() && setup_latency_sec >= 0.0)
        {
            return Err(DmaError::InvalidTiming);
        }
        Ok(Self {
            name,
            direction,
            port,
            bandwidth_bytes_per_sec,
            setup_latency_sec,
            state: ChannelState::Idle,
            current: None,
            finished: None,
            next_seq: 0,
            fabric_clock_hz,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn direction(&self) -> DmaDirection {
        self.direction
    }

    pub fn port(&self) -> PortId {
        self.port
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth_bytes_per_sec
    }

    pub fn setup_latency(&self) -> f64 {
        self.setup_latency_sec
    }

    pub fn state(&self) -> ChannelState {
        self.state
    }

    /// Bytes transferred so far in the current or last transfer.
    pub fn bytes_moved(&self) -> usize {
        match (&self.current, &self.finished) {
            (Some(t), _) => t.position,
            (None, Some((_, Ok(r)))) => r.bytes_moved,
            _ => 0,
        }
    }

    /// Bandwidth-model cost of moving `length` bytes, without stalls.
    pub fn transfer_cost(&self, length: usize) -> f64 {
        transfer_cost(length, self.bandwidth_bytes_per_sec, self.setup_latency_sec)
    }

    pub(crate) fn start(&mut self, buffer: DmaBuffer, cycle: u64) -> Result<u64, DmaError> {
        if self.state == ChannelState::Busy {
            return Err(DmaError::Busy);
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.current = Some(Transfer { seq, buffer: buffer.into_vec(), position: 0, stalls: 0, start_cycle: cycle });
        self.finished = None;
        self.state = ChannelState::Busy;
        Ok(seq)
    }

    fn complete(&mut self, cycle: u64, result: Result<(), DmaError>) {
        let t = self.current.take().expect("completing an active transfer");
        let record = result.map(|_| CompletionRecord {
            bytes_moved: t.position,
            simulated_seconds: self.transfer_cost(t.position) + t.stalls as f64 / self.fabric_clock_hz,
            stall_cycles: t.stalls,
            start_cycle: t.start_cycle,
            end_cycle: cycle,
            data: match self.direction {
                DmaDirection::FromFabric => Some(t.buffer[..t.position].to_vec()),
                DmaDirection::ToFabric => None,
            },
        });
        self.finished = Some((t.seq, record));
        self.state = ChannelState::Done;
    }

    /// One fabric cycle against the channel's port register.
    pub(crate) fn tick(&mut self, cycle: u64, slot: &mut Option<StreamToken>) {
        if self.state != ChannelState::Busy {
            return;
        }
        let t = self.current.as_mut().expect("busy channel has a transfer");
        match self.direction {
            DmaDirection::ToFabric => {
                if slot.is_some() {
                    t.stalls += 1;
                    return;
                }
                if t.position == t.buffer.len() {
                    // last token has left the register
                    self.complete(cycle, Ok(()));
                    return;
                }
                let last = t.position + 1 == t.buffer.len();
                *slot = Some(StreamToken::pixel(t.buffer[t.position], last));
                t.position += 1;
            }
            DmaDirection::FromFabric => {
                let Some(token) = slot.take() else { return };
                if t.position == t.buffer.len() {
                    let buffer = t.buffer.len();
                    self.complete(cycle, Err(DmaError::LengthMismatch { buffer }));
                    return;
                }
                t.buffer[t.position] = (token.payload & 0xFF) as u8;
                t.position += 1;
                if token.last {
                    self.complete(cycle, Ok(()));
                }
            }
        }
    }

    /// Completed record for `seq`, returning the channel to idle.
    pub(crate) fn collect(&mut self, seq: u64) -> Option<Result<CompletionRecord, DmaError>> {
        match &self.finished {
            Some((s, r)) if *s == seq => {
                self.state = ChannelState::Idle;
                Some(r.clone())
            }
            _ => None,
        }
    }

    pub(crate) fn is_pending(&self, seq: u64) -> bool {
        self.current.as_ref().map(|t| t.seq == seq).unwrap_or(false)
    }
}

/// `setup + length / bandwidth`, in seconds.
pub fn transfer_cost(length: usize, bandwidth_bytes_per_sec: f64, setup_latency_sec: f64) -> f64 {
    setup_latency_sec + length as f64 / bandwidth_bytes_per_sec
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn frame_cost() {
        let cost = transfer_cost(786_432, DEFAULT_BANDWIDTH_BYTES_PER_SEC, DEFAULT_SETUP_LATENCY_SEC);
        // 786432 / 400e6 + 50e-6
        assert!((cost - 0.002_016_08).abs() < 1e-12, "{cost}");
        assert_eq!(format!("{cost:.6}"), "0.002016");
    }

    #[test]
    fn empty_buffer_rejected() {
        assert_eq!(DmaBuffer::new(vec![]), Err(DmaError::EmptyBuffer));
    }

    #[test]
    fn invalid_timing_rejected() {
        let mk = |bw, setup| DmaChannel::new("c".into(), DmaDirection::ToFabric, PortId(0), bw, setup, 200e6);
        assert!(mk(0.0, 0.0).is_err());
        assert!(mk(f64::NAN, 0.0).is_err());
        assert!(mk(1.0, -1.0).is_err());
        assert!(mk(1.0, 0.0).is_ok());
    }

    #[test]
    fn busy_channel_rejects() {
        let mut ch = DmaChannel::new("c".into(), DmaDirection::ToFabric, PortId(0), 1e6, 0.0, 200e6).unwrap();
        ch.start(DmaBuffer::zeroed(4).unwrap(), 0).unwrap();
        assert_eq!(ch.start(DmaBuffer::zeroed(4).unwrap(), 0).unwrap_err(), DmaError::Busy);
    }

    #[test]
    fn s2mm_overflow_is_length_mismatch() {
        let mut ch = DmaChannel::new("c".into(), DmaDirection::FromFabric, PortId(0), 1e6, 0.0, 200e6).unwrap();
        let t = ch.start(DmaBuffer::zeroed(2).unwrap(), 0).unwrap();
        for (i, last) in [false, false, true].into_iter().enumerate() {
            let mut slot = Some(StreamToken::pixel(i as u8, last));
            ch.tick(i as u64, &mut slot);
        }
        assert_eq!(ch.collect(t), Some(Err(DmaError::LengthMismatch { buffer: 2 })));
    }

    proptest! {
        #[test]
        fn cost_is_monotone(a in 1usize..10_000_000, b in 1usize..10_000_000, bw in 1e3f64..1e10) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(transfer_cost(lo, bw, 50e-6) <= transfer_cost(hi, bw, 50e-6));
        }
    }
}
