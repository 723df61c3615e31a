//! Host CPU edge-detection pipelines: naive, row-band threaded, and
//! optimized (separable blur, fused gradient + suppression, threaded).
//!
//! All three compute exactly `canny_reference(conv2d_reference(img))`.
//! Bands split the output rows; each band re-reads the rows around it
//! (two for the 5x5 blur, one for Sobel, one more for suppression) from
//! the shared input and writes only its own rows.

use std::num::NonZeroUsize;
use std::ops::Range;

use crate::kernels::{
    clamp_index, finish_conv, ConvKernel, EdgeMap, GradientDir, KernelError, PixelImage, CONV_TAPS,
    DEFAULT_THRESHOLD,
};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineParams {
    pub conv: ConvKernel,
    pub threshold: u32,
    pub thread_count: NonZeroUsize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self { conv: ConvKernel::default(), threshold: DEFAULT_THRESHOLD, thread_count: NonZeroUsize::MIN }
    }
}

impl PipelineParams {
    pub fn with_threads(mut self, threads: usize) -> Self {
        self.thread_count = NonZeroUsize::new(threads.max(1)).expect("max(1)");
        self
    }

    pub fn with_threshold(mut self, threshold: u32) -> Self {
        self.threshold = threshold;
        self
    }
}

const HALF: usize = CONV_TAPS / 2;

/// Blurred rows a band needs: its own rows plus two on each side.
fn blur_rows(rows: &Range<usize>, h: usize) -> Range<usize> {
    rows.start.saturating_sub(2)..(rows.end + 2).min(h)
}

fn direct_blur_row(img: &PixelImage, k: &ConvKernel, r: usize, out: &mut [u8]) {
    let (w, h) = (img.width(), img.height());
    for (c, o) in out.iter_mut().enumerate() {
        let mut acc = 0i32;
        for (dy, taps) in k.taps().iter().enumerate() {
            let src = img.row(clamp_index(r as isize + dy as isize - HALF as isize, h));
            for (dx, tap) in taps.iter().enumerate() {
                acc += tap * src[clamp_index(c as isize + dx as isize - HALF as isize, w)] as i32;
            }
        }
        *o = finish_conv(acc, k.divisor());
    }
}

#[inline]
fn sobel(rows: [&[u8]; 3], c: usize) -> (i32, i32) {
    let p = |r: usize, dc: usize| rows[r][c + dc - 1] as i32;
    let gx = (p(0, 2) + 2 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2 * p(1, 0) + p(2, 0));
    let gy = (p(2, 0) + 2 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2 * p(0, 1) + p(0, 2));
    (gx, gy)
}

/// Unfused band: blur, then gradients, then suppression, each a full pass.
fn direct_band(img: &PixelImage, params: &PipelineParams, rows: Range<usize>, out: &mut [u8]) {
    let (w, h) = (img.width(), img.height());
    let brows = blur_rows(&rows, h);
    let mut blurred = vec![0u8; brows.len() * w];
    for (i, r) in brows.clone().enumerate() {
        direct_blur_row(img, &params.conv, r, &mut blurred[i * w..(i + 1) * w]);
    }
    let brow = |r: usize| &blurred[(r - brows.start) * w..(r - brows.start + 1) * w];

    // gradient rows cover the band plus one row each side
    let grows = rows.start.saturating_sub(1)..(rows.end + 1).min(h);
    let mut mag = vec![0i32; grows.len() * w];
    let mut dir = vec![GradientDir::Horizontal; grows.len() * w];
    for r in grows.clone() {
        if r == 0 || r + 1 >= h {
            continue;
        }
        let src = [brow(r - 1), brow(r), brow(r + 1)];
        for c in 1..w - 1 {
            let (gx, gy) = sobel(src, c);
            let i = (r - grows.start) * w + c;
            mag[i] = gx.abs() + gy.abs();
            dir[i] = GradientDir::quantize(gx, gy);
        }
    }
    let at = |r: usize, c: usize| mag[(r - grows.start) * w + c];
    for r in rows.clone() {
        let dst = &mut out[(r - rows.start) * w..(r - rows.start + 1) * w];
        dst.fill(0);
        if r == 0 || r + 1 >= h {
            continue;
        }
        for c in 1..w - 1 {
            let m = at(r, c);
            if (m as i64) < params.threshold as i64 {
                continue;
            }
            let d = dir[(r - grows.start) * w + c];
            let ((br, bc), (ar, ac)) = d.neighbours();
            let before = at((r as isize + br) as usize, (c as isize + bc) as usize);
            let after = at((r as isize + ar) as usize, (c as isize + ac) as usize);
            if d.survives(m, before, after) {
                dst[c] = EdgeMap::EDGE;
            }
        }
    }
}

/// Separable blur of one row: vertical taps into column sums, horizontal
/// taps over those, one floor division at the end. Sums stay in 16-bit
/// lanes when the kernel's bound allows, else in 32-bit.
struct SeparableBlur {
    kv: [i32; CONV_TAPS],
    kh: [i32; CONV_TAPS],
    divisor: i32,
    narrow: bool,
    col32: Vec<i32>,
    col16: Vec<u16>,
}

impl SeparableBlur {
    fn new(k: &ConvKernel, width: usize) -> Option<Self> {
        let (kv, kh) = k.separable_factors()?;
        let nonneg = kv.iter().chain(&kh).all(|t| *t >= 0);
        let bound = kv.iter().sum::<i32>() as i64 * kh.iter().sum::<i32>() as i64 * 255;
        Some(Self {
            kv,
            kh,
            divisor: k.divisor(),
            narrow: nonneg && bound <= u16::MAX as i64,
            col32: vec![0; width + 2 * HALF],
            col16: vec![0; width + 2 * HALF],
        })
    }

    fn row(&mut self, img: &PixelImage, r: usize, out: &mut [u8]) {
        let (w, h) = (img.width(), img.height());
        let src: [&[u8]; CONV_TAPS] =
            std::array::from_fn(|i| &img.row(clamp_index(r as isize + i as isize - HALF as isize, h))[..w]);
        // fixed-length reslices let the compiler drop bounds checks and vectorize
        let [s0, s1, s2, s3, s4] = src.map(|s| &s[..w]);
        let out = &mut out[..w];
        if self.narrow {
            let [v0, v1, v2, v3, v4] = self.kv.map(|t| t as u16);
            let [h0, h1, h2, h3, h4] = self.kh.map(|t| t as u16);
            let col = &mut self.col16[..w + 2 * HALF];
            {
                let mid = &mut col[HALF..HALF + w];
                for c in 0..w {
                    mid[c] = v0 * s0[c] as u16
                        + v1 * s1[c] as u16
                        + v2 * s2[c] as u16
                        + v3 * s3[c] as u16
                        + v4 * s4[c] as u16;
                }
            }
            let (first, last) = (col[HALF], col[HALF + w - 1]);
            col[..HALF].fill(first);
            col[HALF + w..].fill(last);
            let d = self.divisor as u16;
            let (c0, c1, c2, c3, c4) = (&col[0..w], &col[1..w + 1], &col[2..w + 2], &col[3..w + 3], &col[4..w + 4]);
            if d.is_power_of_two() {
                let shift = d.trailing_zeros();
                for c in 0..w {
                    let acc = h0 * c0[c] + h1 * c1[c] + h2 * c2[c] + h3 * c3[c] + h4 * c4[c];
                    out[c] = (acc >> shift).min(255) as u8;
                }
            } else {
                for c in 0..w {
                    let acc = h0 * c0[c] + h1 * c1[c] + h2 * c2[c] + h3 * c3[c] + h4 * c4[c];
                    out[c] = (acc / d).min(255) as u8;
                }
            }
        } else {
            let [v0, v1, v2, v3, v4] = self.kv;
            let [h0, h1, h2, h3, h4] = self.kh;
            let col = &mut self.col32[..w + 2 * HALF];
            {
                let mid = &mut col[HALF..HALF + w];
                for c in 0..w {
                    mid[c] = v0 * s0[c] as i32
                        + v1 * s1[c] as i32
                        + v2 * s2[c] as i32
                        + v3 * s3[c] as i32
                        + v4 * s4[c] as i32;
                }
            }
            let (first, last) = (col[HALF], col[HALF + w - 1]);
            col[..HALF].fill(first);
            col[HALF + w..].fill(last);
            let (c0, c1, c2, c3, c4) = (&col[0..w], &col[1..w + 1], &col[2..w + 2], &col[3..w + 3], &col[4..w + 4]);
            for c in 0..w {
                let acc = h0 * c0[c] + h1 * c1[c] + h2 * c2[c] + h3 * c3[c] + h4 * c4[c];
                out[c] = finish_conv(acc, self.divisor);
            }
        }
    }
}

/// Sobel gradients and L1 magnitude of one interior row, written so the
/// loops vectorize: a vertical [1,2,1] smooth and difference per column,
/// then horizontal taps over those.
#[derive(Debug, Clone)]
struct GradientRow {
    gx: Vec<i16>,
    gy: Vec<i16>,
    mag: Vec<i16>,
}

impl GradientRow {
    fn new(w: usize) -> Self {
        Self { gx: vec![0; w], gy: vec![0; w], mag: vec![0; w] }
    }

    fn clear(&mut self) {
        self.mag.fill(0);
    }

    fn compute(&mut self, [a, b, c]: [&[u8]; 3], smooth: &mut [i16], diff: &mut [i16]) {
        let w = self.mag.len();
        let (a, b, c) = (&a[..w], &b[..w], &c[..w]);
        let (smooth, diff) = (&mut smooth[..w], &mut diff[..w]);
        for i in 0..w {
            smooth[i] = a[i] as i16 + 2 * b[i] as i16 + c[i] as i16;
            diff[i] = c[i] as i16 - a[i] as i16;
        }
        let n = w - 2;
        let (gx, gy, mag) = (&mut self.gx[1..w - 1], &mut self.gy[1..w - 1], &mut self.mag[1..w - 1]);
        let (sl, sr) = (&smooth[0..n], &smooth[2..n + 2]);
        let (dl, dm, dr) = (&diff[0..n], &diff[1..n + 1], &diff[2..n + 2]);
        for i in 0..n {
            let x = sr[i] - sl[i];
            let y = dl[i] + 2 * dm[i] + dr[i];
            gx[i] = x;
            gy[i] = y;
            mag[i] = x.abs() + y.abs();
        }
        self.mag[0] = 0;
        self.mag[w - 1] = 0;
    }
}

/// Fused band: separable blur, then one sweep that keeps three gradient
/// rows live and suppresses the middle one. Directions are quantized only
/// where the magnitude clears the threshold.
fn optimized_band(img: &PixelImage, params: &PipelineParams, rows: Range<usize>, out: &mut [u8]) {
    let (w, h) = (img.width(), img.height());
    let k = &params.conv;
    let brows = blur_rows(&rows, h);
    let mut blurred = vec![0u8; brows.len() * w];
    match SeparableBlur::new(k, w) {
        Some(mut blur) => {
            for (i, r) in brows.clone().enumerate() {
                blur.row(img, r, &mut blurred[i * w..(i + 1) * w]);
            }
        }
        None => {
            for (i, r) in brows.clone().enumerate() {
                direct_blur_row(img, k, r, &mut blurred[i * w..(i + 1) * w]);
            }
        }
    }
    let brow = |r: usize| &blurred[(r - brows.start) * w..(r - brows.start + 1) * w];

    let (mut smooth, mut diff) = (vec![0i16; w], vec![0i16; w]);
    // ring slots: 0 = r-1, 1 = r, 2 = r+1
    let mut ring = [GradientRow::new(w), GradientRow::new(w), GradientRow::new(w)];
    let threshold = params.threshold.min(i16::MAX as u32) as i16;
    let mut primed = false;
    for r in rows.clone() {
        let dst = &mut out[(r - rows.start) * w..(r - rows.start + 1) * w];
        dst.fill(0);
        if r == 0 || r + 1 >= h {
            continue;
        }
        if primed {
            ring.rotate_left(1);
        } else {
            for (slot, g) in [r - 1, r].into_iter().enumerate() {
                if g == 0 {
                    ring[slot].clear();
                } else {
                    ring[slot].compute([brow(g - 1), brow(g), brow(g + 1)], &mut smooth, &mut diff);
                }
            }
            primed = true;
        }
        if r + 2 == h {
            ring[2].clear();
        } else {
            ring[2].compute([brow(r), brow(r + 1), brow(r + 2)], &mut smooth, &mut diff);
        }
        if params.threshold > i16::MAX as u32 {
            continue;
        }
        let [up, mid, down] = &ring;
        let (up, m, down) = (&up.mag, &mid.mag, &down.mag);
        for c in 1..w - 1 {
            let mag = m[c];
            if mag < threshold {
                continue;
            }
            let d = GradientDir::quantize(mid.gx[c] as i32, mid.gy[c] as i32);
            let (before, after) = match d {
                GradientDir::Horizontal => (m[c - 1], m[c + 1]),
                GradientDir::Vertical => (up[c], down[c]),
                GradientDir::Diagonal => (up[c - 1], down[c + 1]),
                GradientDir::AntiDiagonal => (up[c + 1], down[c - 1]),
            };
            if d.survives(mag as i32, before as i32, after as i32) {
                dst[c] = EdgeMap::EDGE;
            }
        }
    }
}

type BandFn = fn(&PixelImage, &PipelineParams, Range<usize>, &mut [u8]);

fn run_banded(img: &PixelImage, params: &PipelineParams, threads: usize, band: BandFn) -> Result<EdgeMap, KernelError> {
    img.require_at_least(CONV_TAPS)?;
    let (w, h) = (img.width(), img.height());
    let mut out = vec![0u8; w * h];
    let threads = threads.clamp(1, h);
    if threads == 1 {
        band(img, params, 0..h, &mut out);
    } else {
        let rows_per = h.div_ceil(threads);
        std::thread::scope(|s| {
            for (i, chunk) in out.chunks_mut(rows_per * w).enumerate() {
                let start = i * rows_per;
                let rows = start..start + chunk.len() / w;
                s.spawn(move || band(img, params, rows, chunk));
            }
        });
    }
    Ok(EdgeMap::from_raw(w, h, out))
}

/// Direct 5x5 blur then Sobel and suppression, one thread, no fusion.
pub fn edge_detect_naive(img: &PixelImage, params: &PipelineParams) -> Result<EdgeMap, KernelError> {
    run_banded(img, params, 1, direct_band)
}

/// [`edge_detect_naive`] split into `thread_count` row bands.
pub fn edge_detect_threaded(img: &PixelImage, params: &PipelineParams) -> Result<EdgeMap, KernelError> {
    run_banded(img, params, params.thread_count.get(), direct_band)
}

/// Separable blur and fused gradient + suppression over `thread_count` bands.
pub fn edge_detect_optimized(img: &PixelImage, params: &PipelineParams) -> Result<EdgeMap, KernelError> {
    run_banded(img, params, params.thread_count.get(), optimized_band)
}
