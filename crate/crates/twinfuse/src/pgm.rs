//! Binary PGM (P5) grayscale images with maxval 255.

use std::fs;
use std::path::Path;

use twinfuse_core::hog::GrayImage;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PgmError {
    #[error("wrong magic number, expected P5")]
    BadMagic,
    #[error("malformed header")]
    BadHeader,
    #[error("unsupported maxval {0}, only 255 is read")]
    UnsupportedMaxval(u32),
    #[error("payload is truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("image {width}x{height} is too small, both sides must be at least 3")]
    TooSmall { width: usize, height: usize },
}

/// Next whitespace-separated header token, skipping `#` comments.
fn token(b: &[u8], pos: &mut usize) -> Option<u32> {
    loop {
        while *pos < b.len() && b[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < b.len() && b[*pos] == b'#' {
            while *pos < b.len() && b[*pos] != b'\n' {
                *pos += 1;
            }
        } else {
            break;
        }
    }
    let start = *pos;
    while *pos < b.len() && b[*pos].is_ascii_digit() {
        *pos += 1;
    }
    std::str::from_utf8(&b[start..*pos]).ok()?.parse().ok()
}

/// Returns width, height and pixels scaled by 1/255, row-major.
pub fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), PgmError> {
    if !bytes.starts_with(b"P5") {
        return Err(PgmError::BadMagic);
    }
    let mut pos = 2;
    let width = token(bytes, &mut pos).ok_or(PgmError::BadHeader)? as usize;
    let height = token(bytes, &mut pos).ok_or(PgmError::BadHeader)? as usize;
    let maxval = token(bytes, &mut pos).ok_or(PgmError::BadHeader)?;
    if maxval != 255 {
        return Err(PgmError::UnsupportedMaxval(maxval));
    }
    // exactly one whitespace byte separates the header from the raster
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(PgmError::Truncated {
            expected: width * height,
            found: 0,
        });
    }
    pos += 1;
    if width < 3 || height < 3 {
        return Err(PgmError::TooSmall { width, height });
    }
    let expected = width * height;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(PgmError::Truncated {
            expected,
            found: raster.len(),
        });
    }
    let pixels = raster[..expected].iter().map(|&v| f64::from(v) / 255.0).collect();
    Ok((width, height, pixels))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend(img.pixels().iter().map(|p| (p * 255.0).round().clamp(0.0, 255.0) as u8));
    out
}

/// Loads an image, optionally resampling it (nearest neighbour) to
/// `resize = (width, height)`.
pub fn load_image_gray(path: &Path, resize: Option<(usize, usize)>) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (w, h, pixels) = decode_pgm(&bytes).map_err(|source| Error::Pgm {
        path: path.to_path_buf(),
        source,
    })?;
    let img = GrayImage::new(w, h, pixels)?;
    match resize {
        Some((rw, rh)) if (rw, rh) != (w, h) => Ok(img.resize_nearest(rw, rh)?),
        _ => Ok(img),
    }
}

pub fn write_pgm(path: &Path, img: &GrayImage) -> Result<()> {
    fs::write(path, encode_pgm(img)).map_err(|e| Error::io(path, e))
}
