//! Dense displacement field and the `MEFL` file format.
//!
//! `MEFL` layout, little-endian: magic `MEFL`, `u8` version (1), `u32`
//! width, `u32` height, then row-major interleaved `(p, q)` as `f32`.

use std::path::Path;

use crate::error::{Error, Result};
use crate::imaging::Plane;

pub const FLOW_MAGIC: &[u8; 4] = b"MEFL";
pub const FLOW_VERSION: u8 = 1;

/// Horizontal (`p`) and vertical (`q`) displacement per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowField {
    pub p: Plane,
    pub q: Plane,
}

impl FlowField {
    pub fn from_planes(p: Plane, q: Plane) -> Result<Self> {
        if !p.same_extent(&q) {
            return Err(Error::shape(
                "FlowField components",
                &[p.height, p.width],
                &[q.height, q.width],
            ));
        }
        Ok(FlowField { p, q })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        FlowField {
            p: Plane::zeros(width, height),
            q: Plane::zeros(width, height),
        }
    }

    pub fn constant(width: usize, height: usize, p: f64, q: f64) -> Self {
        FlowField {
            p: Plane::from_fn(width, height, |_, _| p),
            q: Plane::from_fn(width, height, |_, _| q),
        }
    }

    pub fn width(&self) -> usize {
        self.p.width
    }

    pub fn height(&self) -> usize {
        self.p.height
    }

    pub fn is_finite(&self) -> bool {
        self.p.is_finite() && self.q.is_finite()
    }

    pub fn magnitude(&self) -> Plane {
        Plane {
            width: self.width(),
            height: self.height(),
            data: self.p.data.iter().zip(&self.q.data).map(|(p, q)| p.hypot(*q)).collect(),
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitude().data.iter().fold(0.0, |m, &v| m.max(v))
    }

    /// Per-pixel endpoint error against `truth`.
    pub fn endpoint_error(&self, truth: &FlowField) -> Result<Plane> {
        if !self.p.same_extent(&truth.p) {
            return Err(Error::shape(
                "endpoint_error",
                &[truth.height(), truth.width()],
                &[self.height(), self.width()],
            ));
        }
        Ok(Plane {
            width: self.width(),
            height: self.height(),
            data: (0..self.p.data.len())
                .map(|i| (self.p.data[i] - truth.p.data[i]).hypot(self.q.data[i] - truth.q.data[i]))
                .collect(),
        })
    }
}

pub fn encode_flow(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 8 * flow.p.data.len());
    out.extend_from_slice(FLOW_MAGIC);
    out.push(FLOW_VERSION);
    out.extend_from_slice(&(flow.width() as u32).to_le_bytes());
    out.extend_from_slice(&(flow.height() as u32).to_le_bytes());
    for (p, q) in flow.p.data.iter().zip(&flow.q.data) {
        out.extend_from_slice(&(*p as f32).to_le_bytes());
        out.extend_from_slice(&(*q as f32).to_le_bytes());
    }
    out
}

pub(crate) fn decode_header(bytes: &[u8], magic: &[u8; 4], fmt: &'static str) -> Result<(usize, usize)> {
    if bytes.len() < 13 {
        return Err(Error::format(fmt, bytes.len(), "truncated header"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(fmt, 0, "bad magic"));
    }
    if bytes[4] != FLOW_VERSION {
        return Err(Error::format(fmt, 4, format!("unsupported version {}", bytes[4])));
    }
    let w = u32::from_le_bytes(bytes[5..9].try_into().unwrap()) as usize;
    let h = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
    if w == 0 || h == 0 {
        return Err(Error::format(fmt, 5, "zero extent"));
    }
    Ok((w, h))
}

pub fn decode_flow(bytes: &[u8]) -> Result<FlowField> {
    let (w, h) = decode_header(bytes, FLOW_MAGIC, "MEFL")?;
    let payload = &bytes[13..];
    if payload.len() != 8 * w * h {
        return Err(Error::format(
            "MEFL",
            13 + payload.len().min(8 * w * h),
            format!("payload holds {} bytes, expected {}", payload.len(), 8 * w * h),
        ));
    }
    let mut p = Vec::with_capacity(w * h);
    let mut q = Vec::with_capacity(w * h);
    for c in payload.chunks_exact(8) {
        p.push(f32::from_le_bytes(c[..4].try_into().unwrap()) as f64);
        q.push(f32::from_le_bytes(c[4..].try_into().unwrap()) as f64);
    }
    FlowField::from_planes(Plane::new(w, h, p)?, Plane::new(w, h, q)?)
}

pub fn save_flow(flow: &FlowField, path: &Path) -> Result<()> {
    std::fs::write(path, encode_flow(flow)).map_err(|e| Error::io(path, e))
}

pub fn load_flow(path: &Path) -> Result<FlowField> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flow(&bytes)
}
