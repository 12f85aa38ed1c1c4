//! Minimal binary PGM (P5) / PPM (P6) support, 8-bit only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Write one `[H, W]` plane with values in `[0, 1]` as an 8-bit P5 image.
pub fn write_pgm(path: impl AsRef<Path>, plane: &[f64], height: usize, width: usize) -> Result<()> {
    if plane.len() != height * width {
        return Err(Error::shape(height * width, plane.len()));
    }
    let mut bytes = format!("P5\n{width} {height}\n255\n").into_bytes();
    bytes.extend(
        plane
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Read a P5 or P6 image as a `[3, H, W]` tensor in `[0, 1]` (grey images
/// are replicated across the three channels).
pub fn read_pnm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pnm(&bytes)
}

fn parse_pnm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PNM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM type {other}"))),
    };
    let mut number = || -> Result<usize> {
        token()?
            .parse()
            .map_err(|_| Error::Format("bad PNM header field".into()))
    };
    let width = number()?;
    let height = number()?;
    let maxval = number()?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported maxval {maxval}")));
    }
    let start = pos + 1;
    let needed = width * height * channels;
    let payload = bytes.get(start..).unwrap_or(&[]);
    if payload.len() < needed {
        return Err(Error::Truncated {
            needed,
            found: payload.len(),
        });
    }
    let plane = width * height;
    let scale = maxval as f64;
    Ok(Tensor::from_fn(&[3, height, width], |i| {
        let (c, p) = (i / plane, i % plane);
        let src = if channels == 1 { p } else { p * 3 + c };
        payload[src] as f64 / scale
    }))
}

/// Write a `[3, H, W]` tensor in `[0, 1]` as an 8-bit P6 image.
pub fn write_ppm(path: impl AsRef<Path>, rgb: &Tensor) -> Result<()> {
    let [c, h, w] = rgb.dims3()?;
    if c != 3 {
        return Err(Error::shape("3 channels", c));
    }
    let mut bytes = format!("P6\n{w} {h}\n255\n").into_bytes();
    for p in 0..h * w {
        for k in 0..3 {
            bytes.push((rgb.data()[k * h * w + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    let path = path.as_ref();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
