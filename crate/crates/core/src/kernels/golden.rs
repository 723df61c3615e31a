//! Whole-image reference implementations of the two fabric kernels.
//!
//! These are the golden models every other implementation (streaming,
//! threaded, separable) is checked against.

use super::{EdgeMap, KernelError, PixelImage};

/// Window size of the convolution kernel.
pub const CONV_TAPS: usize = 5;

/// Binomial row used to build the 5x5 Gaussian.
pub const BINOMIAL_5: [i32; 5] = [1, 4, 6, 4, 1];

/// Default Canny magnitude threshold (L1 magnitude units).
pub const DEFAULT_THRESHOLD: u32 = 128;

/// tan(22.5°) in 1/256 units, used for direction binning.
const TAN_22_5_Q8: i32 = 106;

/// 5x5 integer convolution taps with a positive divisor equal to their sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvKernel {
    taps: [[i32; CONV_TAPS]; CONV_TAPS],
    divisor: i32,
}

impl ConvKernel {
    pub fn new(taps: [[i32; CONV_TAPS]; CONV_TAPS], divisor: i32) -> Result<Self, KernelError> {
        if divisor <= 0 {
            return Err(KernelError::InvalidKernel(format!("divisor {divisor} must be positive")));
        }
        let sum: i64 = taps.iter().flatten().map(|t| *t as i64).sum();
        if sum != divisor as i64 {
            return Err(KernelError::InvalidKernel(format!(
                "taps sum to {sum}, divisor is {divisor}"
            )));
        }
        Ok(Self { taps, divisor })
    }

    pub fn taps(&self) -> &[[i32; CONV_TAPS]; CONV_TAPS] {
        &self.taps
    }

    pub fn divisor(&self) -> i32 {
        self.divisor
    }

    /// `Some((column, row))` factors when the taps are an outer product.
    pub fn separable_factors(&self) -> Option<([i32; CONV_TAPS], [i32; CONV_TAPS])> {
        let t = &self.taps;
        let (i0, j0) = (0..CONV_TAPS * CONV_TAPS).map(|k| (k / CONV_TAPS, k % CONV_TAPS)).find(|&(i, j)| t[i][j] != 0)?;
        let g = t[i0].iter().fold(0, |g, x| gcd(g, x.abs()));
        let sign = t[i0][j0].signum();
        let row = t[i0].map(|x| x / g * sign);
        let mut col = [0; CONV_TAPS];
        for (i, c) in col.iter_mut().enumerate() {
            if t[i][j0] % row[j0] != 0 {
                return None;
            }
            *c = t[i][j0] / row[j0];
        }
        let exact = (0..CONV_TAPS).all(|i| (0..CONV_TAPS).all(|j| col[i] * row[j] == t[i][j]));
        exact.then_some((col, row))
    }

    /// Largest possible |accumulator| for 8-bit input.
    pub fn accumulator_bound(&self) -> i64 {
        self.taps.iter().flatten().map(|t| (*t as i64).abs() * 255).sum()
    }
}

impl Default for ConvKernel {
    fn default() -> Self {
        make_gaussian_5x5()
    }
}

/// Outer product of `[1, 4, 6, 4, 1]` with itself, divisor 256.
pub fn make_gaussian_5x5() -> ConvKernel {
    let mut taps = [[0; CONV_TAPS]; CONV_TAPS];
    for (r, row) in taps.iter_mut().enumerate() {
        for (c, t) in row.iter_mut().enumerate() {
            *t = BINOMIAL_5[r] * BINOMIAL_5[c];
        }
    }
    ConvKernel { taps, divisor: 256 }
}

fn gcd(a: i32, b: i32) -> i32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

#[inline]
pub(crate) fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Floor division by the divisor, then saturation to 0..=255.
#[inline]
pub(crate) fn finish_conv(acc: i32, divisor: i32) -> u8 {
    acc.div_euclid(divisor).clamp(0, 255) as u8
}

/// Direct 5x5 convolution with edge replication and 32-bit accumulation.
pub fn conv2d_reference(img: &PixelImage, k: &ConvKernel) -> Result<PixelImage, KernelError> {
    img.require_at_least(CONV_TAPS)?;
    debug_assert!(k.accumulator_bound() < i32::MAX as i64);
    let (w, h) = (img.width(), img.height());
    let half = (CONV_TAPS / 2) as isize;
    Ok(PixelImage::from_fn(w, h, |r, c| {
        let mut acc: i32 = 0;
        for (dy, row) in k.taps.iter().enumerate() {
            let rr = clamp_index(r as isize + dy as isize - half, h);
            for (dx, tap) in row.iter().enumerate() {
                let cc = clamp_index(c as isize + dx as isize - half, w);
                acc += tap * img.get(rr, cc) as i32;
            }
        }
        finish_conv(acc, k.divisor)
    }))
}

/// Quantized gradient direction. Names give the direction of the gradient,
/// which is perpendicular to the edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum GradientDir {
    /// 0°: compare left/right neighbours.
    #[default]
    Horizontal,
    /// 45° with gx and gy of the same sign: compare up-left/down-right.
    Diagonal,
    /// 90°: compare up/down neighbours.
    Vertical,
    /// 135°: compare up-right/down-left.
    AntiDiagonal,
}

impl GradientDir {
    /// Integer four-bin quantization. Boundary ties go to the axis bins so
    /// that swapping `gx` and `gy` swaps `Horizontal` and `Vertical` exactly.
    #[inline]
    pub fn quantize(gx: i32, gy: i32) -> Self {
        let (ax, ay) = (gx.abs(), gy.abs());
        if 256 * ay <= TAN_22_5_Q8 * ax {
            GradientDir::Horizontal
        } else if 256 * ax <= TAN_22_5_Q8 * ay {
            GradientDir::Vertical
        } else if (gx > 0) == (gy > 0) {
            GradientDir::Diagonal
        } else {
            GradientDir::AntiDiagonal
        }
    }

    /// `(before, after)` neighbour offsets as `(drow, dcol)`.
    #[inline]
    pub fn neighbours(self) -> ((isize, isize), (isize, isize)) {
        match self {
            GradientDir::Horizontal => ((0, -1), (0, 1)),
            GradientDir::Vertical => ((-1, 0), (1, 0)),
            GradientDir::Diagonal => ((-1, -1), (1, 1)),
            GradientDir::AntiDiagonal => ((-1, 1), (1, -1)),
        }
    }

    /// Non-max suppression test against the two neighbours along the
    /// gradient. The earlier neighbour must be strictly smaller so a
    /// symmetric ridge keeps one pixel; the anti-diagonal pair maps onto
    /// itself under transposition and uses `>=` on both sides.
    #[inline]
    pub fn survives(self, mag: i32, before: i32, after: i32) -> bool {
        match self {
            GradientDir::AntiDiagonal => mag >= before && mag >= after,
            _ => mag > before && mag >= after,
        }
    }
}

/// 3x3 Sobel gradients at an interior pixel.
#[inline]
pub fn sobel_at(img: &PixelImage, r: usize, c: usize) -> (i32, i32) {
    let p = |dr: usize, dc: usize| img.get(r + dr - 1, c + dc - 1) as i32;
    let gx = (p(0, 2) + 2 * p(1, 2) + p(2, 2)) - (p(0, 0) + 2 * p(1, 0) + p(2, 0));
    let gy = (p(2, 0) + 2 * p(2, 1) + p(2, 2)) - (p(0, 0) + 2 * p(0, 1) + p(0, 2));
    debug_assert!(gx.abs() <= 4 * 255 && gy.abs() <= 4 * 255);
    (gx, gy)
}

/// Sobel gradient + non-max suppression + single threshold.
///
/// Gradients exist only where the full 3x3 window lies inside the image;
/// the one-pixel border has magnitude 0 and is never an edge.
pub fn canny_reference(img: &PixelImage, threshold: u32) -> Result<EdgeMap, KernelError> {
    img.require_at_least(3)?;
    let (w, h) = (img.width(), img.height());
    let mut mag = vec![0i32; w * h];
    let mut dir = vec![GradientDir::Horizontal; w * h];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let (gx, gy) = sobel_at(img, r, c);
            mag[r * w + c] = gx.abs() + gy.abs();
            dir[r * w + c] = GradientDir::quantize(gx, gy);
        }
    }
    let mut out = vec![0u8; w * h];
    for r in 1..h - 1 {
        for c in 1..w - 1 {
            let i = r * w + c;
            let m = mag[i];
            if (m as i64) < threshold as i64 {
                continue;
            }
            let ((br, bc), (ar, ac)) = dir[i].neighbours();
            let before = mag[(r as isize + br) as usize * w + (c as isize + bc) as usize];
            let after = mag[(r as isize + ar) as usize * w + (c as isize + ac) as usize];
            if dir[i].survives(m, before, after) {
                out[i] = EdgeMap::EDGE;
            }
        }
    }
    Ok(EdgeMap::from_raw(w, h, out))
}

/// `canny_reference(conv2d_reference(img))`: the full edge-detection pipeline.
pub fn edge_detect_reference(
    img: &PixelImage,
    k: &ConvKernel,
    threshold: u32,
) -> Result<EdgeMap, KernelError> {
    canny_reference(&conv2d_reference(img, k)?, threshold)
}
