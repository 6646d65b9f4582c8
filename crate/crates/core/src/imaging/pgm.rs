//! Binary PGM (`P5`, maxval 255) reading and writing.

use std::path::Path;

use super::image::GrayImage;
use super::plane::Plane;
use crate::error::{Error, Result};

const FMT: &str = "PGM";

struct Header {
    width: usize,
    height: usize,
    maxval: usize,
    data_offset: usize,
}

fn skip_whitespace_and_comments(bytes: &[u8], mut pos: usize) -> usize {
    loop {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
        } else {
            return pos;
        }
    }
}

fn read_number(bytes: &[u8], pos: usize, what: &str) -> Result<(usize, usize)> {
    let start = skip_whitespace_and_comments(bytes, pos);
    let mut end = start;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end == start {
        return Err(Error::format(FMT, start, format!("expected {what}")));
    }
    let text = std::str::from_utf8(&bytes[start..end]).expect("ascii digits");
    let value = text
        .parse::<usize>()
        .map_err(|_| Error::format(FMT, start, format!("{what} out of range")))?;
    Ok((value, end))
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(Error::format(FMT, 0, "missing P5 magic"));
    }
    let (width, pos) = read_number(bytes, 2, "width")?;
    let (height, pos) = read_number(bytes, pos, "height")?;
    let (maxval, pos) = read_number(bytes, pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::format(FMT, pos, "zero image extent"));
    }
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => {}
        _ => return Err(Error::format(FMT, pos, "expected single whitespace after maxval")),
    }
    Ok(Header {
        width,
        height,
        maxval,
        data_offset: pos + 1,
    })
}

pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let h = parse_header(bytes)?;
    if h.maxval != 255 {
        return Err(Error::format(
            FMT,
            h.data_offset - 1,
            format!("unsupported maxval {} (only 255)", h.maxval),
        ));
    }
    let n = h.width * h.height;
    let payload = &bytes[h.data_offset..];
    if payload.len() < n {
        return Err(Error::format(
            FMT,
            bytes.len(),
            format!("truncated payload: {} of {n} bytes", payload.len()),
        ));
    }
    let pixels = payload[..n].iter().map(|&b| f64::from(b) / 255.0).collect();
    GrayImage::new(h.width, h.height, pixels)
}

pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    out.extend(image.pixels().iter().map(|&p| (p * 255.0).round() as u8));
    out
}

pub fn load_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn save_pgm(image: &GrayImage, path: &Path) -> Result<()> {
    std::fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

/// Min-max stretches a signed field into an 8-bit image for inspection.
/// Constant fields render mid-gray.
pub fn plane_to_display(plane: &Plane) -> Result<GrayImage> {
    let (lo, hi) = plane.min_max();
    if !lo.is_finite() || !hi.is_finite() {
        return Err(Error::NonFinite("channel export".into()));
    }
    let span = hi - lo;
    let stretched = if span > 0.0 {
        plane.map(|v| (v - lo) / span)
    } else {
        plane.map(|_| 0.5)
    };
    GrayImage::from_plane_clamped(&stretched)
}
