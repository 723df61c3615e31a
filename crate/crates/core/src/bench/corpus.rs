//! Deterministic synthetic grayscale images for benchmarking and tests.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{pgm, BenchError};
use crate::kernels::PixelImage;

pub const DEFAULT_SEED: u64 = 0x5EED_2017;
pub const CORPUS_WIDTH: usize = 1024;
pub const CORPUS_HEIGHT: usize = 768;

/// Seed from `BENCH_SEED` (decimal or `0x` hex), else [`DEFAULT_SEED`].
pub fn seed_from_env() -> u64 {
    std::env::var("BENCH_SEED").ok().and_then(|s| parse_seed(&s)).unwrap_or(DEFAULT_SEED)
}

pub fn parse_seed(s: &str) -> Option<u64> {
    let s = s.trim();
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16).ok(),
        None => s.parse().ok(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusImage {
    pub path: Option<PathBuf>,
    pub image: PixelImage,
}

impl CorpusImage {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, BenchError> {
        let path = path.as_ref();
        Ok(Self { path: Some(path.to_path_buf()), image: pgm::read_pgm(path)? })
    }
}

/// A scene-like image: shaded background, filled rectangles and discs,
/// and mild noise, so edge detection has real structure to find.
pub fn synthetic_image(width: usize, height: usize, seed: u64) -> PixelImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let base: u8 = rng.gen_range(40..120);
    let (gx, gy) = (rng.gen_range(-60.0..60.0f64), rng.gen_range(-60.0..60.0f64));
    let mut px: Vec<f64> = (0..width * height)
        .map(|i| {
            let (r, c) = ((i / width) as f64 / height as f64, (i % width) as f64 / width as f64);
            base as f64 + gx * c + gy * r
        })
        .collect();
    let shapes = rng.gen_range(12..24);
    for _ in 0..shapes {
        let value = rng.gen_range(0.0..255.0);
        let (cx, cy) = (rng.gen_range(0..width) as f64, rng.gen_range(0..height) as f64);
        let size = rng.gen_range(8.0..(width.min(height) as f64 / 3.0).max(9.0));
        let disc = rng.gen_bool(0.5);
        let (r0, r1) = (((cy - size).max(0.0)) as usize, ((cy + size) as usize).min(height));
        let (c0, c1) = (((cx - size).max(0.0)) as usize, ((cx + size) as usize).min(width));
        for r in r0..r1 {
            for c in c0..c1 {
                let (dy, dx) = (r as f64 - cy, c as f64 - cx);
                if !disc || dx * dx + dy * dy <= size * size {
                    px[r * width + c] = value;
                }
            }
        }
    }
    let samples = px.into_iter().map(|v| (v + rng.gen_range(-6.0..6.0)).round().clamp(0.0, 255.0) as u8).collect();
    PixelImage::new(width, height, samples).expect("sized to width * height")
}

/// Uniform random pixels.
pub fn random_frame(rng: &mut impl Rng, width: usize, height: usize) -> PixelImage {
    let mut samples = vec![0u8; width * height];
    rng.fill(&mut samples[..]);
    PixelImage::new(width, height, samples).expect("sized to width * height")
}

/// `count` 1024x768 corpus images derived from `seed`.
pub fn corpus(count: usize, seed: u64) -> Vec<CorpusImage> {
    (0..count)
        .map(|i| CorpusImage { path: None, image: synthetic_image(CORPUS_WIDTH, CORPUS_HEIGHT, seed.wrapping_add(i as u64)) })
        .collect()
}

/// Write [`corpus`] into `dir` as `corpus-<i>.pgm`.
pub fn write_corpus(dir: impl AsRef<Path>, count: usize, seed: u64) -> Result<Vec<PathBuf>, BenchError> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    corpus(count, seed)
        .into_iter()
        .enumerate()
        .map(|(i, c)| {
            let path = dir.join(format!("corpus-{i}.pgm"));
            pgm::write_pgm(&path, &c.image)?;
            Ok(path)
        })
        .collect()
}
