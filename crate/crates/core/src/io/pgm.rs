//! Binary (P5) portable graymaps.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::Image;

/// Parses a P5 graymap; samples are scaled by `1 / maxval` into `[0, 1]`.
pub fn decode_pgm(bytes: &[u8]) -> Result<Image> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(0, "not a binary PGM (expected P5 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for (i, field) in fields.iter_mut().enumerate() {
        // whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        let text = std::str::from_utf8(&bytes[start..pos]).expect("ascii digits");
        *field = text.parse().map_err(|_| {
            let name = ["width", "height", "maxval"][i];
            Error::format(start as u64, format!("expected {name}"))
        })?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(Error::format(2, "PGM dimensions must be positive"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(Error::format(pos as u64, format!("maxval {maxval} outside 1..=65535")));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::format(
            pos as u64,
            "expected one whitespace byte before the raster",
        ));
    }
    pos += 1;
    let sample_bytes = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * sample_bytes;
    let raster = &bytes[pos..];
    if raster.len() < expected {
        return Err(Error::format(
            (pos + raster.len()) as u64,
            format!("raster holds {} bytes, {expected} needed", raster.len()),
        ));
    }
    let scale = maxval as f64;
    let mut data = Vec::with_capacity(width * height);
    for (i, chunk) in raster[..expected].chunks_exact(sample_bytes).enumerate() {
        let v = if sample_bytes == 1 {
            usize::from(chunk[0])
        } else {
            usize::from(u16::from_be_bytes([chunk[0], chunk[1]]))
        };
        if v > maxval {
            return Err(Error::format(
                (pos + i * sample_bytes) as u64,
                format!("sample {v} exceeds maxval {maxval}"),
            ));
        }
        data.push(v as f64 / scale);
    }
    Image::new(width, height, data)
}

pub fn read_pgm(path: &Path) -> Result<Image> {
    decode_pgm(&fs::read(path)?)
}

/// 16-bit P5 encoding of an image in `[0, 1]`; values outside are clamped.
pub fn encode_pgm16(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for &v in image.data() {
        let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: &Path, image: &Image) -> Result<()> {
    fs::write(path, encode_pgm16(image))?;
    Ok(())
}

/// 8-bit P5 encoding of an image in `[0, 1]`.
pub fn encode_pgm8(image: &Image) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.data().iter().map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}
