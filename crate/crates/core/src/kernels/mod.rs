//! Gaussian convolution and Canny gradient/NMS kernels, as whole-image
//! golden models and as line-buffered streaming hardware models.

mod golden;
mod image;
mod streaming;

use thiserror::Error;

pub use golden::{
    canny_reference, conv2d_reference, edge_detect_reference, make_gaussian_5x5, sobel_at, ConvKernel,
    GradientDir, BINOMIAL_5, CONV_TAPS, DEFAULT_THRESHOLD,
};
pub(crate) use golden::{clamp_index, finish_conv};
pub use image::{EdgeMap, PixelImage};
pub use streaming::{
    image_tokens, latency_of, make_streaming, stream_image, KernelKind, KernelParams, KernelState,
    StreamingKernel,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum KernelError {
    #[error("image {width}x{height} is smaller than the {min}x{min} minimum")]
    ImageTooSmall { width: usize, height: usize, min: usize },
    #[error("expected {expected} samples, got {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error("edge map value {0} is neither 0 nor 255")]
    NotBinary(u8),
    #[error("invalid convolution kernel: {0}")]
    InvalidKernel(String),
    #[error("frame declared {expected} pixels but the stream carried {received}")]
    DimensionMismatch { expected: usize, received: usize },
    #[error("frame width {width} is narrower than the {window}-pixel window")]
    WidthTooSmall { width: usize, window: usize },
    #[error("frame dimensions were not declared before streaming")]
    NotConfigured,
    #[error("kernel is mid-frame")]
    Busy,
}
