//! Binary image formats.
//!
//! * PGM P5: `P5`, ASCII width, height and maxval (must be 255), one
//!   whitespace byte, then `width * height` raw bytes. `#` comments are
//!   accepted in the header.
//! * LLF1: 8-byte magic `LLFLOAT1`, little-endian `u32` width and height,
//!   then `width * height` little-endian `f32` values in `[0, 1]`.
//!
//! Masks are stored as PGM with 0 / 255.

use std::fs;
use std::path::Path;

use super::{quantize_byte, GrayImage, Scale, ValidityMask};
use crate::{Error, Result};

const LLF1_MAGIC: &[u8; 8] = b"LLFLOAT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Llf1,
}

impl ImageFormat {
    /// `.pgm` selects PGM; anything else selects LLF1.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => ImageFormat::Pgm,
            _ => ImageFormat::Llf1,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Llf1 => "llf1",
        }
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(LLF1_MAGIC) {
        decode_llf1(&bytes)
    } else {
        decode_pgm(&bytes)
    }
}

/// Writes PGM for `.pgm` paths, LLF1 otherwise.
pub fn save_image(path: impl AsRef<Path>, img: &GrayImage) -> Result<()> {
    let path = path.as_ref();
    let bytes = match ImageFormat::from_path(path) {
        ImageFormat::Pgm => encode_pgm(img),
        ImageFormat::Llf1 => encode_llf1(img),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Any nonzero PGM level counts as valid.
pub fn load_mask(path: impl AsRef<Path>) -> Result<ValidityMask> {
    let img = load_image(path)?;
    let (w, h) = img.dims();
    ValidityMask::new(w, h, img.pixels().iter().map(|&v| v > 0.0).collect())
}

pub fn save_mask(path: impl AsRef<Path>, mask: &ValidityMask) -> Result<()> {
    let path = path.as_ref();
    let bytes: Vec<u8> = mask
        .bits()
        .iter()
        .map(|&b| if b { 255 } else { 0 })
        .collect();
    let img = GrayImage::from_bytes(mask.width(), mask.height(), &bytes)?;
    fs::write(path, encode_pgm(&img)).map_err(|e| Error::io(path, e))
}

/// Unit images are quantized (x255, round half up).
pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    match img.scale() {
        Scale::Byte => out.extend(img.pixels().iter().map(|&v| quantize_byte(v))),
        Scale::Unit => out.extend(img.pixels().iter().map(|&v| quantize_byte(v * 255.0))),
    }
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    if magic != b"P5" {
        return Err(Error::Format("missing P5 magic".into()));
    }
    let width = parse_header_number(bytes, &mut pos, "width")?;
    let height = parse_header_number(bytes, &mut pos, "height")?;
    let maxval = parse_header_number(bytes, &mut pos, "maxval")?;
    if maxval != 255 {
        return Err(Error::Format(format!("maxval must be 255, got {maxval}")));
    }
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("bad dimensions {width}x{height}")));
    }
    // exactly one whitespace byte separates the header from the raster
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::Format("truncated header".into())),
    }
    let n = width
        .checked_mul(height)
        .ok_or_else(|| Error::Format("dimensions overflow".into()))?;
    let raster = bytes
        .get(pos..pos + n)
        .ok_or_else(|| Error::Format(format!("expected {n} raster bytes")))?;
    GrayImage::from_bytes(width, height, raster)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8]> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("truncated header".into())),
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() {
            break;
        }
        *pos += 1;
    }
    if *pos == bytes.len() {
        // a header token must be followed by whitespace
        return Err(Error::Format("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn parse_header_number(bytes: &[u8], pos: &mut usize, what: &str) -> Result<usize> {
    let tok = next_token(bytes, pos)?;
    std::str::from_utf8(tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format(format!("bad {what} field")))
}

/// Byte images are converted to Unit scale before encoding.
pub fn encode_llf1(img: &GrayImage) -> Vec<u8> {
    let unit = img.to_unit();
    let mut out = Vec::with_capacity(16 + 4 * unit.pixels().len());
    out.extend_from_slice(LLF1_MAGIC);
    out.extend_from_slice(&(unit.width() as u32).to_le_bytes());
    out.extend_from_slice(&(unit.height() as u32).to_le_bytes());
    for &v in unit.pixels() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_llf1(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.len() < 16 || &bytes[..8] != LLF1_MAGIC {
        return Err(Error::Format("missing LLFLOAT1 header".into()));
    }
    let width = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    if width == 0 || height == 0 {
        return Err(Error::Format(format!("bad dimensions {width}x{height}")));
    }
    let n = width * height;
    let body = bytes
        .get(16..16 + 4 * n)
        .ok_or_else(|| Error::Format(format!("expected {n} f32 values")))?;
    let pixels = body
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
        .collect();
    GrayImage::new(width, height, pixels, Scale::Unit)
        .map_err(|e| Error::Format(format!("invalid LLF1 payload: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decodes_two_by_two_p5() {
        let mut file = b"P5\n2 2\n255\n".to_vec();
        file.extend_from_slice(&[0, 128, 255, 64]);
        let img = decode_pgm(&file).unwrap();
        assert_eq!(img.scale(), Scale::Byte);
        assert_eq!(img.pixels(), &[0.0, 128.0, 255.0, 64.0]);
        assert_eq!(encode_pgm(&img), file);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut file = b"P5 # made by hand\n2 1\n# another\n255\n".to_vec();
        file.extend_from_slice(&[7, 9]);
        assert_eq!(decode_pgm(&file).unwrap().pixels(), &[7.0, 9.0]);
    }

    #[test]
    fn truncated_inputs_are_format_errors() {
        for bad in [
            &b"P5\n2 2"[..],
            b"P5\n2 2\n255\n\x00\x01",
            b"P6\n1 1\n255\n\x00",
            b"P5\n1 1\n65535\n\x00\x00",
            b"LLFLOAT1\x01\x00\x00\x00",
        ] {
            assert!(
                matches!(
                    decode_pgm(bad).or_else(|_| decode_llf1(bad)),
                    Err(Error::Format(_))
                ),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn llf1_round_trip_is_byte_identical() {
        let img = GrayImage::from_fn(5, 3, Scale::Unit, |x, y| (x * 3 + y) as f64 / 20.0).unwrap();
        let bytes = encode_llf1(&img);
        let back = decode_llf1(&bytes).unwrap();
        assert_eq!(encode_llf1(&back), bytes);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_bytes(3, 2, &[1, 2, 3, 250, 251, 252]).unwrap();
        let p = dir.path().join("a.pgm");
        save_image(&p, &img).unwrap();
        let first = fs::read(&p).unwrap();
        let back = load_image(&p).unwrap();
        save_image(&p, &back).unwrap();
        assert_eq!(fs::read(&p).unwrap(), first);
        assert_eq!(back, img);

        let mask = ValidityMask::from_fn(4, 4, |x, y| x > y);
        let mp = dir.path().join("m.pgm");
        save_mask(&mp, &mask).unwrap();
        assert_eq!(load_mask(&mp).unwrap(), mask);
    }
}
