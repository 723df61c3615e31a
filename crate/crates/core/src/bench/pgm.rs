//! Binary PGM (P5, maxval 255) reading and writing.

use std::path::Path;

use super::BenchError;
use crate::kernels::{EdgeMap, PixelImage};

fn format_err(m: impl Into<String>) -> BenchError {
    BenchError::Format(m.into())
}

/// Parse a P5 image from memory.
pub fn decode_pgm(bytes: &[u8]) -> Result<PixelImage, BenchError> {
    let mut pos = 0;
    let field = |pos: &mut usize| -> Result<String, BenchError> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|b| *b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err(format_err("truncated header")),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    let magic = field(&mut pos)?;
    if magic != "P5" {
        return Err(format_err(format!("expected binary PGM magic P5, found `{magic}`")));
    }
    let mut number = |what: &str| -> Result<usize, BenchError> {
        let f = field(&mut pos)?;
        f.parse().map_err(|_| format_err(format!("bad {what} `{f}`")))
    };
    let width = number("width")?;
    let height = number("height")?;
    let maxval = number("maxval")?;
    if maxval != 255 {
        return Err(format_err(format!("maxval must be 255, found {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(format_err("truncated header"));
    }
    pos += 1;
    let n = width.checked_mul(height).ok_or_else(|| format_err("image dimensions overflow"))?;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(format_err(format!("truncated raster: {} of {n} bytes", raster.len())));
    }
    PixelImage::new(width, height, raster[..n].to_vec()).map_err(|e| format_err(e.to_string()))
}

pub fn encode_pgm(width: usize, height: usize, samples: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(samples);
    out
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<PixelImage, BenchError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| BenchError::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn write_pgm(path: impl AsRef<Path>, img: &PixelImage) -> Result<(), BenchError> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(img.width(), img.height(), img.samples())).map_err(|e| BenchError::io(path, e))
}

pub fn write_edge_map_pgm(path: impl AsRef<Path>, edges: &EdgeMap) -> Result<(), BenchError> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm(edges.width(), edges.height(), edges.as_bytes()))
        .map_err(|e| BenchError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ascii_pgm_rejected() {
        assert!(matches!(decode_pgm(b"P2\n2 2\n255\n0 0 0 0\n"), Err(BenchError::Format(_))));
    }

    #[test]
    fn maxval_must_be_255() {
        assert!(matches!(decode_pgm(b"P5\n1 1\n65535\n\0\0"), Err(BenchError::Format(_))));
    }

    #[test]
    fn truncated_raster() {
        let mut bytes = encode_pgm(8, 8, &[7; 64]);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(decode_pgm(&bytes), Err(BenchError::Format(_))));
        assert!(matches!(decode_pgm(b"P5\n8"), Err(BenchError::Format(_))));
    }

    #[test]
    fn comments_are_skipped() {
        let img = decode_pgm(b"P5\n# made by hand\n2 1\n# max\n255\n\x01\x02").unwrap();
        assert_eq!(img.samples(), &[1, 2]);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.pgm");
        let img = PixelImage::from_fn(13, 7, |r, c| (r * 13 + c) as u8);
        write_pgm(&path, &img).unwrap();
        assert_eq!(read_pgm(&path).unwrap(), img);
        assert!(matches!(read_pgm(dir.path().join("missing.pgm")), Err(BenchError::Io { .. })));
    }

    proptest! {
        #[test]
        fn memory_round_trip(samples in prop::collection::vec(any::<u8>(), 64 * 64)) {
            let bytes = encode_pgm(64, 64, &samples);
            let img = decode_pgm(&bytes).unwrap();
            prop_assert_eq!(img.samples(), &samples[..]);
        }
    }
}
