//! Line-buffered streaming kernels: one pixel in, one pixel out per cycle.
//!
//! Each window stage keeps `K` rows of storage (`K - 1` complete line
//! buffers plus the row currently being filled) and forms its `K x K`
//! window from them. Output pixel `o` is computed as soon as input pixel
//! `o + D` has arrived, where `D = (K-1)/2 * width + (K-1)/2` is the offset
//! of the bottom-right window corner from the centre. Clamped (replicated)
//! border reads only ever look at earlier pixels, so the same rule holds at
//! the borders; the last `D` outputs drain after the final input.
//!
//! After the window stage a fixed `pipeline_depth` register chain models
//! the arithmetic pipeline, giving
//! `latency = (K-1)/2 * width + (K-1)/2 + pipeline_depth` between accepting
//! input `o + D` and offering output `o`.

use std::collections::VecDeque;

use super::golden::{clamp_index, finish_conv, ConvKernel, GradientDir, CONV_TAPS, DEFAULT_THRESHOLD};
use super::{EdgeMap, KernelError, PixelImage};
use crate::switch::StreamToken;

/// Kernels the fabric knows how to instantiate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelKind {
    /// 5x5 integer convolution (Gaussian by default).
    Conv,
    /// Sobel gradient + non-max suppression + threshold.
    Canny,
    /// Wire with an optional register chain; used for plumbing tests.
    Passthrough,
}

impl KernelKind {
    pub const fn default_pipeline_depth(self) -> u32 {
        match self {
            KernelKind::Conv => 4,
            KernelKind::Canny => 6,
            KernelKind::Passthrough => 0,
        }
    }

    /// Window sizes of the chained window stages.
    pub const fn windows(self) -> &'static [usize] {
        match self {
            KernelKind::Conv => &[CONV_TAPS],
            // gradient window, then a second window over magnitudes for NMS
            KernelKind::Canny => &[3, 3],
            KernelKind::Passthrough => &[],
        }
    }

    /// Smallest frame side the kernel accepts.
    pub const fn min_side(self) -> usize {
        match self {
            KernelKind::Conv => CONV_TAPS,
            KernelKind::Canny => 3,
            KernelKind::Passthrough => 1,
        }
    }

    /// Fill latency in cycles for a frame of `width` pixels.
    pub fn latency(self, width: usize, pipeline_depth: u32) -> Result<u64, KernelError> {
        let windows = self.windows();
        if let Some(k) = windows.iter().copied().max() {
            if width < k {
                return Err(KernelError::WidthTooSmall { width, window: k });
            }
        }
        let fill: u64 = windows.iter().map(|k| window_delay(*k, width) as u64).sum();
        Ok(fill + pipeline_depth as u64)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelKind::Conv => "conv",
            KernelKind::Canny => "canny",
            KernelKind::Passthrough => "passthrough",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "conv" => Some(KernelKind::Conv),
            "canny" => Some(KernelKind::Canny),
            "passthrough" => Some(KernelKind::Passthrough),
            _ => None,
        }
    }
}

/// `latency` with the default pipeline depth of `kind`.
pub fn latency_of(kind: KernelKind, frame_width: usize) -> Result<u64, KernelError> {
    kind.latency(frame_width, kind.default_pipeline_depth())
}

#[inline]
fn window_delay(k: usize, width: usize) -> usize {
    let half = (k - 1) / 2;
    half * width + half
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KernelParams {
    pub pipeline_depth: u32,
    pub conv: ConvKernel,
    pub threshold: u32,
}

impl KernelParams {
    pub fn for_kind(kind: KernelKind) -> Self {
        Self {
            pipeline_depth: kind.default_pipeline_depth(),
            conv: ConvKernel::default(),
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// `K` rows of storage addressed by absolute (row, col).
#[derive(Debug, Clone)]
struct LineBuffer<T> {
    width: usize,
    rows: usize,
    data: Vec<T>,
}

impl<T: Copy + Default> LineBuffer<T> {
    fn new(rows: usize, width: usize) -> Self {
        Self { width, rows, data: vec![T::default(); rows * width] }
    }

    #[inline]
    fn put(&mut self, index: usize, value: T) {
        let (r, c) = (index / self.width, index % self.width);
        self.data[(r % self.rows) * self.width + c] = value;
    }

    #[inline]
    fn get(&self, row: usize, col: usize) -> T {
        self.data[(row % self.rows) * self.width + col]
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Gradient {
    mag: i32,
    dir: GradientDir,
}

/// What a window stage computes from its line buffer.
#[derive(Debug, Clone)]
enum WindowOp {
    Conv(ConvKernel),
    Sobel,
    Nms { threshold: u32 },
}

#[derive(Debug, Clone)]
enum Lines {
    Pixels(LineBuffer<u8>),
    Gradients(LineBuffer<Gradient>),
}

#[derive(Debug, Clone, Copy)]
enum Sample {
    Pixel(u8),
    Gradient(Gradient),
}

/// One line-buffered window stage over a raster stream.
#[derive(Debug, Clone)]
struct WindowStage {
    op: WindowOp,
    k: usize,
    width: usize,
    height: usize,
    delay: usize,
    received: usize,
    next_out: usize,
    lines: Lines,
    window: Vec<i32>,
}

impl WindowStage {
    fn new(op: WindowOp, width: usize, height: usize) -> Self {
        let k = match op {
            WindowOp::Conv(_) => CONV_TAPS,
            WindowOp::Sobel | WindowOp::Nms { .. } => 3,
        };
        let lines = match op {
            WindowOp::Nms { .. } => Lines::Gradients(LineBuffer::new(k, width)),
            _ => Lines::Pixels(LineBuffer::new(k, width)),
        };
        Self {
            op,
            k,
            width,
            height,
            delay: window_delay(k, width),
            received: 0,
            next_out: 0,
            lines,
            window: vec![0; k * k],
        }
    }

    fn total(&self) -> usize {
        self.width * self.height
    }

    fn can_accept(&self) -> bool {
        self.received < self.total() && self.received <= self.next_out + self.delay
    }

    fn accept(&mut self, sample: Sample) {
        debug_assert!(self.can_accept());
        match (&mut self.lines, sample) {
            (Lines::Pixels(lb), Sample::Pixel(p)) => lb.put(self.received, p),
            (Lines::Gradients(lb), Sample::Gradient(g)) => lb.put(self.received, g),
            _ => unreachable!("stage wired to the wrong sample type"),
        }
        self.received += 1;
    }

    fn output_ready(&self) -> bool {
        self.next_out < self.total()
            && (self.received > self.next_out + self.delay || self.received == self.total())
    }

    fn produce(&mut self) -> Sample {
        debug_assert!(self.output_ready());
        let (w, h) = (self.width, self.height);
        let (r, c) = (self.next_out / w, self.next_out % w);
        self.next_out += 1;
        let interior = r >= 1 && c >= 1 && r + 1 < h && c + 1 < w;
        match (&self.op, &self.lines) {
            (WindowOp::Conv(k), Lines::Pixels(lb)) => {
                let half = (self.k / 2) as isize;
                // gather the replicated window, then the MAC tree
                for dy in 0..self.k {
                    let rr = clamp_index(r as isize + dy as isize - half, h);
                    for dx in 0..self.k {
                        let cc = clamp_index(c as isize + dx as isize - half, w);
                        self.window[dy * self.k + dx] = lb.get(rr, cc) as i32;
                    }
                }
                let acc: i32 = k
                    .taps()
                    .iter()
                    .flatten()
                    .zip(&self.window)
                    .map(|(t, p)| t * p)
                    .sum();
                Sample::Pixel(finish_conv(acc, k.divisor()))
            }
            (WindowOp::Sobel, Lines::Pixels(lb)) => {
                if !interior {
                    return Sample::Gradient(Gradient::default());
                }
                let p = |dr: usize, dc: usize| lb.get(r + dr - 1, c + dc - 1) as i32;
                let gx = (p(0, 2) + 2 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2 * p(1, 0) + p(2, 0));
                let gy = (p(2, 0) + 2 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2 * p(0, 1) + p(0, 2));
                Sample::Gradient(Gradient { mag: gx.abs() + gy.abs(), dir: GradientDir::quantize(gx, gy) })
            }
            (WindowOp::Nms { threshold }, Lines::Gradients(lb)) => {
                if !interior {
                    return Sample::Pixel(0);
                }
                let g = lb.get(r, c);
                if (g.mag as i64) < *threshold as i64 {
                    return Sample::Pixel(0);
                }
                let ((br, bc), (ar, ac)) = g.dir.neighbours();
                let at = |dr: isize, dc: isize| {
                    lb.get((r as isize + dr) as usize, (c as isize + dc) as usize).mag
                };
                let keep = g.dir.survives(g.mag, at(br, bc), at(ar, ac));
                Sample::Pixel(if keep { EdgeMap::EDGE } else { 0 })
            }
            _ => unreachable!("stage wired to the wrong line buffer"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelState {
    /// Waiting for a frame declaration.
    Idle,
    /// Streaming a frame.
    Running,
    /// Last token of the frame has been offered.
    Done,
}

/// A streaming kernel instance, attachable to the stream switch.
#[derive(Debug, Clone)]
pub struct StreamingKernel {
    kind: KernelKind,
    params: KernelParams,
    frame: Option<(usize, usize)>,
    state: KernelState,
    stages: Vec<WindowStage>,
    received: usize,
    produced: usize,
    emitted: usize,
    /// `(cycle at which the value leaves the pipeline, value)`
    pipeline: VecDeque<(u64, u8)>,
    first_accept: Option<u64>,
    first_emit: Option<u64>,
    frames_completed: u64,
}

/// Build a streaming kernel of the given kind.
pub fn make_streaming(kind: KernelKind, params: KernelParams) -> StreamingKernel {
    StreamingKernel {
        kind,
        params,
        frame: None,
        state: KernelState::Idle,
        stages: Vec::new(),
        received: 0,
        produced: 0,
        emitted: 0,
        pipeline: VecDeque::new(),
        first_accept: None,
        first_emit: None,
        frames_completed: 0,
    }
}

impl StreamingKernel {
    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    pub fn set_threshold(&mut self, threshold: u32) {
        self.params.threshold = threshold;
    }

    pub fn state(&self) -> KernelState {
        self.state
    }

    pub fn frames_completed(&self) -> u64 {
        self.frames_completed
    }

    /// True while a frame is partially streamed.
    pub fn is_busy(&self) -> bool {
        self.state == KernelState::Running && (self.received > 0 || !self.pipeline.is_empty())
    }

    /// Declare the frame dimensions and arm the kernel for one frame.
    pub fn begin_frame(&mut self, width: usize, height: usize) -> Result<(), KernelError> {
        let min = self.kind.min_side();
        if width < min || height < min || width * height == 0 {
            return Err(KernelError::ImageTooSmall { width, height, min });
        }
        if self.is_busy() {
            return Err(KernelError::Busy);
        }
        let ops: Vec<WindowOp> = match self.kind {
            KernelKind::Conv => vec![WindowOp::Conv(self.params.conv.clone())],
            KernelKind::Canny => {
                vec![WindowOp::Sobel, WindowOp::Nms { threshold: self.params.threshold }]
            }
            KernelKind::Passthrough => vec![],
        };
        self.stages = ops.into_iter().map(|op| WindowStage::new(op, width, height)).collect();
        self.frame = Some((width, height));
        self.state = KernelState::Running;
        self.received = 0;
        self.produced = 0;
        self.emitted = 0;
        self.pipeline.clear();
        self.first_accept = None;
        self.first_emit = None;
        Ok(())
    }

    pub fn frame(&self) -> Option<(usize, usize)> {
        self.frame
    }

    fn total(&self) -> usize {
        self.frame.map(|(w, h)| w * h).unwrap_or(0)
    }

    /// Cycles between the first accepted token and the first offered token
    /// of the current (or last) frame.
    pub fn observed_latency(&self) -> Option<u64> {
        Some(self.first_emit? - self.first_accept?)
    }

    fn pipeline_capacity(&self) -> usize {
        self.params.pipeline_depth as usize + 1
    }

    fn can_accept(&self) -> bool {
        if self.state != KernelState::Running || self.received >= self.total() {
            return false;
        }
        match self.stages.first() {
            Some(s) => s.can_accept(),
            // passthrough: accept whenever the register chain has room
            None => self.pipeline.len() < self.pipeline_capacity(),
        }
    }

    /// One forward pass over the stage chain: every stage hands on at most
    /// one sample per cycle, and a sample may cross all stages in one cycle.
    fn advance_stages(&mut self, cycle: u64) {
        let n = self.stages.len();
        for i in 0..n {
            let room = if i + 1 < n {
                self.stages[i + 1].can_accept()
            } else {
                self.pipeline.len() < self.pipeline_capacity()
            };
            if !room || !self.stages[i].output_ready() {
                continue;
            }
            let sample = self.stages[i].produce();
            if i + 1 < n {
                self.stages[i + 1].accept(sample);
            } else if let Sample::Pixel(p) = sample {
                self.pipeline.push_back((cycle + self.params.pipeline_depth as u64, p));
                self.produced += 1;
            }
        }
    }

    /// One fabric cycle. `input` is the kernel's consumer-port register,
    /// `output` its producer-port register.
    pub fn tick(
        &mut self,
        cycle: u64,
        input: &mut Option<StreamToken>,
        output: &mut Option<StreamToken>,
    ) -> Result<(), KernelError> {
        if self.state != KernelState::Running {
            return Ok(());
        }
        let total = self.total();
        if input.is_some() && self.can_accept() {
            let token = input.take().expect("checked");
            let index = self.received;
            if token.last != (index + 1 == total) {
                self.state = KernelState::Idle;
                return Err(KernelError::DimensionMismatch {
                    expected: total,
                    received: if token.last { index + 1 } else { index + 2 },
                });
            }
            let pixel = (token.payload & 0xFF) as u8;
            self.first_accept.get_or_insert(cycle);
            self.received += 1;
            match self.stages.first_mut() {
                Some(stage) => stage.accept(Sample::Pixel(pixel)),
                None => {
                    self.pipeline.push_back((cycle + self.params.pipeline_depth as u64, pixel));
                    self.produced += 1;
                }
            }
        }
        self.advance_stages(cycle);
        if output.is_none() {
            if let Some(&(ready, value)) = self.pipeline.front() {
                if ready <= cycle {
                    self.pipeline.pop_front();
                    self.emitted += 1;
                    self.first_emit.get_or_insert(cycle);
                    let last = self.emitted == total;
                    *output = Some(StreamToken { payload: value as u32, last });
                    if last {
                        self.state = KernelState::Done;
                        self.frames_completed += 1;
                    }
                }
            }
        }
        Ok(())
    }

    /// Stream `tokens` through the kernel with an always-ready source and
    /// sink. Returns the output tokens and the number of cycles taken.
    pub fn run_isolated(&mut self, tokens: &[StreamToken]) -> Result<(Vec<StreamToken>, u64), KernelError> {
        let (w, h) = self.frame.ok_or(KernelError::NotConfigured)?;
        let total = w * h;
        let mut out = Vec::with_capacity(total);
        let mut feed = tokens.iter().copied();
        let mut input = feed.next();
        let mut output = None;
        let mut cycle = 0u64;
        let budget = 4 * total as u64 + 64 + self.kind.latency(w, self.params.pipeline_depth).unwrap_or(0);
        while out.len() < total {
            cycle += 1;
            self.tick(cycle, &mut input, &mut output)?;
            if let Some(t) = output.take() {
                out.push(t);
            }
            if input.is_none() {
                input = feed.next();
            }
            if cycle > budget {
                return Err(KernelError::DimensionMismatch { expected: total, received: self.received });
            }
        }
        Ok((out, cycle))
    }
}

/// Row-major pixels as a token stream with `last` on the final pixel.
pub fn image_tokens(img: &PixelImage) -> Vec<StreamToken> {
    let n = img.len();
    img.samples()
        .iter()
        .enumerate()
        .map(|(i, p)| StreamToken { payload: *p as u32, last: i + 1 == n })
        .collect()
}

/// Run a whole frame through a fresh streaming kernel in isolation.
pub fn stream_image(kind: KernelKind, params: KernelParams, img: &PixelImage) -> Result<Vec<u8>, KernelError> {
    let mut k = make_streaming(kind, params);
    k.begin_frame(img.width(), img.height())?;
    let (out, _) = k.run_isolated(&image_tokens(img))?;
    Ok(out.into_iter().map(|t| t.payload as u8).collect())
}
