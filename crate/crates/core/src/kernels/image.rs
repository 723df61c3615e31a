use super::KernelError;

/// Row-major 8-bit grayscale raster.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PixelImage {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl std::fmt::Debug for PixelImage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PixelImage({}x{})", self.width, self.height)
    }
}

impl PixelImage {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self, KernelError> {
        if samples.len() != width * height {
            return Err(KernelError::SizeMismatch { expected: width * height, actual: samples.len() });
        }
        Ok(Self { width, height, samples })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self { width, height, samples: vec![value; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                samples.push(f(r, c));
            }
        }
        Self { width, height, samples }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<u8> {
        self.samples
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.samples[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[u8] {
        &self.samples[row * self.width..(row + 1) * self.width]
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.height, self.width, |r, c| self.get(c, r))
    }

    pub(crate) fn require_at_least(&self, min: usize) -> Result<(), KernelError> {
        if self.width < min || self.height < min {
            return Err(KernelError::ImageTooSmall { width: self.width, height: self.height, min });
        }
        Ok(())
    }
}

/// Binary edge map: every value is 0 (no edge) or 255 (edge).
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct EdgeMap {
    width: usize,
    height: usize,
    values: Vec<u8>,
}

impl std::fmt::Debug for EdgeMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "EdgeMap({}x{}, {} edges)", self.width, self.height, self.edge_count())
    }
}

impl EdgeMap {
    pub const EDGE: u8 = 255;

    pub fn new(width: usize, height: usize, values: Vec<u8>) -> Result<Self, KernelError> {
        if values.len() != width * height {
            return Err(KernelError::SizeMismatch { expected: width * height, actual: values.len() });
        }
        if let Some(bad) = values.iter().find(|v| **v != 0 && **v != Self::EDGE) {
            return Err(KernelError::NotBinary(*bad));
        }
        Ok(Self { width, height, values })
    }

    pub(crate) fn from_raw(width: usize, height: usize, values: Vec<u8>) -> Self {
        debug_assert!(values.iter().all(|v| *v == 0 || *v == Self::EDGE));
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[u8] {
        &self.values
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.values
    }

    pub fn is_edge(&self, row: usize, col: usize) -> bool {
        self.values[row * self.width + col] == Self::EDGE
    }

    pub fn edge_count(&self) -> usize {
        self.values.iter().filter(|v| **v == Self::EDGE).count()
    }

    pub fn transpose(&self) -> Self {
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.width {
            for c in 0..self.height {
                values.push(self.values[c * self.width + r]);
            }
        }
        Self { width: self.height, height: self.width, values }
    }

    pub fn to_image(&self) -> PixelImage {
        PixelImage { width: self.width, height: self.height, samples: self.values.clone() }
    }
}
