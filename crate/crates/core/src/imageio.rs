//! Image and sidecar file I/O. Pixel values are normalized to `[0, 1]`.
//!
//! Event-mask sidecar layout: `"EVMK"`, `u32` LE height, `u32` LE width,
//! then one bit per pixel, row-major, LSB-first within each byte, `1` for an
//! event pixel.

use std::path::Path;

use image::{DynamicImage, ImageFormat, RgbImage};

use crate::cfa::EventMask;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MASK_MAGIC: &[u8; 4] = b"EVMK";

fn open(path: &Path) -> Result<DynamicImage> {
    image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Reads an 8- or 16-bit PNG, PPM or PGM as `H x W x 3`.
pub fn read_rgb(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = open(path)?.to_rgb32f();
    let (w, h) = img.dimensions();
    Tensor::new(vec![h as usize, w as usize, 3], img.into_raw())
}

/// Reads a single-channel image as `H x W x 1`.
pub fn read_gray(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let img = open(path)?;
    if img.color().channel_count() != 1 {
        return Err(Error::Image { path: path.to_path_buf(), message: "expected a single-channel image".into() });
    }
    let img = img.to_luma32f();
    let (w, h) = img.dimensions();
    Tensor::new(vec![h as usize, w as usize, 1], img.into_raw())
}

fn quantize(v: f32, max: f32) -> f32 {
    (v.clamp(0.0, 1.0) * max).round()
}

/// Writes `H x W x 3` as an 8-bit PNG.
pub fn write_png_rgb8(path: impl AsRef<Path>, img: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let (h, w, c) = img.hwc()?;
    if c != 3 {
        return Err(Error::shape(format!("PNG writer expects 3 channels, got {c}")));
    }
    let bytes = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
    let buf = RgbImage::from_raw(w as u32, h as u32, bytes).expect("buffer matches dimensions");
    buf.save_with_format(path, ImageFormat::Png).map_err(|e| Error::Image { path: path.to_path_buf(), message: e.to_string() })
}

/// Binary 16-bit PGM bytes for an `H x W x 1` tensor.
pub fn encode_pgm16(raw: &Tensor) -> Result<Vec<u8>> {
    let (h, w, c) = raw.hwc()?;
    if c != 1 {
        return Err(Error::shape(format!("PGM writer expects 1 channel, got {c}")));
    }
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    for &v in raw.data() {
        out.extend_from_slice(&(quantize(v, 65535.0) as u16).to_be_bytes());
    }
    Ok(out)
}

pub fn write_pgm16(path: impl AsRef<Path>, raw: &Tensor) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_pgm16(raw)?).map_err(|e| Error::io(path, e))
}

/// Rounds every value to the 16-bit grid a PGM round trip produces.
pub fn quantize16(raw: &Tensor) -> Tensor {
    raw.map(|v| quantize(v, 65535.0) / 65535.0)
}

pub fn encode_mask(mask: &EventMask) -> Vec<u8> {
    let (h, w) = (mask.height(), mask.width());
    let mut out = Vec::with_capacity(12 + (h * w).div_ceil(8));
    out.extend_from_slice(MASK_MAGIC);
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    let mut bytes = vec![0u8; (h * w).div_ceil(8)];
    for (i, &b) in mask.bits().iter().enumerate() {
        if b {
            bytes[i / 8] |= 1 << (i % 8);
        }
    }
    out.extend(bytes);
    out
}

pub fn decode_mask(bytes: &[u8]) -> Result<EventMask> {
    if bytes.len() < 12 || &bytes[..4] != MASK_MAGIC {
        return Err(Error::Format("not an event-mask file (bad magic)".into()));
    }
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let body = &bytes[12..];
    if body.len() != (h * w).div_ceil(8) {
        return Err(Error::Format(format!("mask body has {} bytes, {h} x {w} needs {}", body.len(), (h * w).div_ceil(8))));
    }
    let bits = (0..h * w).map(|i| body[i / 8] >> (i % 8) & 1 == 1).collect();
    EventMask::from_bits(h, w, bits)
}

pub fn write_mask(path: impl AsRef<Path>, mask: &EventMask) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_mask(mask)).map_err(|e| Error::io(path, e))
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<EventMask> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_mask(&bytes).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm16_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.pgm");
        let raw = Tensor::from_fn(vec![3, 5, 1], |i| i as f32 / 14.0).unwrap();
        write_pgm16(&p, &raw).unwrap();
        let back = read_gray(&p).unwrap();
        assert_eq!(back, quantize16(&raw));
    }

    #[test]
    fn png_roundtrip_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.png");
        let img = Tensor::from_fn(vec![2, 3, 3], |i| (i * 15) as f32 / 255.0).unwrap();
        write_png_rgb8(&p, &img).unwrap();
        let back = read_rgb(&p).unwrap();
        for (a, b) in back.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn mask_roundtrip_and_errors() {
        let m = EventMask::from_fn(3, 7, |y, x| (y + x) % 3 == 0);
        let bytes = encode_mask(&m);
        assert_eq!(bytes.len(), 12 + 3);
        assert_eq!(decode_mask(&bytes).unwrap(), m);
        assert!(decode_mask(&bytes[..bytes.len() - 1]).is_err());
        assert!(decode_mask(b"XXXX\0\0\0\0\0\0\0\0").is_err());
    }
}
