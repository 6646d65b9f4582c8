//! Per-pixel channels derived from a flow field: polar form and the
//! optical strain tensor.
//!
//! `MECH` layout: magic `MECH`, `u8` version (1), `u32` width, `u32`
//! height, then row-major `f32` values, little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::field::decode_header;
use crate::flow::FlowField;
use crate::imaging::pgm::plane_to_display;
use crate::imaging::{save_pgm, Plane};

pub const CHANNEL_MAGIC: &[u8; 4] = b"MECH";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    P,
    Q,
    Rho,
    Theta,
    EpsMag,
    EpsXx,
    EpsYy,
    EpsXy,
    EpsYx,
}

impl Channel {
    pub const ALL: [Channel; 9] = [
        Channel::P,
        Channel::Q,
        Channel::Rho,
        Channel::Theta,
        Channel::EpsMag,
        Channel::EpsXx,
        Channel::EpsYy,
        Channel::EpsXy,
        Channel::EpsYx,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::P => "p",
            Channel::Q => "q",
            Channel::Rho => "rho",
            Channel::Theta => "theta",
            Channel::EpsMag => "eps_mag",
            Channel::EpsXx => "eps_xx",
            Channel::EpsYy => "eps_yy",
            Channel::EpsXy => "eps_xy",
            Channel::EpsYx => "eps_yx",
        }
    }

    pub fn from_name(name: &str) -> Result<Channel> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown channel '{name}'")))
    }
}

impl std::fmt::Display for Channel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Strain tensor components `(ε_mag, ε_xx, ε_yy, ε_xy)`; `ε_yx` shares
/// `ε_xy`.
#[derive(Clone, Debug, PartialEq)]
pub struct Strain {
    pub eps_mag: Plane,
    pub eps_xx: Plane,
    pub eps_yy: Plane,
    pub eps_xy: Plane,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DerivedChannels {
    pub p: Plane,
    pub q: Plane,
    pub rho: Plane,
    pub theta: Plane,
    pub eps_mag: Plane,
    pub eps_xx: Plane,
    pub eps_yy: Plane,
    pub eps_xy: Plane,
    pub eps_yx: Plane,
}

impl DerivedChannels {
    pub fn width(&self) -> usize {
        self.p.width
    }

    pub fn height(&self) -> usize {
        self.p.height
    }

    pub fn get(&self, channel: Channel) -> &Plane {
        match channel {
            Channel::P => &self.p,
            Channel::Q => &self.q,
            Channel::Rho => &self.rho,
            Channel::Theta => &self.theta,
            Channel::EpsMag => &self.eps_mag,
            Channel::EpsXx => &self.eps_xx,
            Channel::EpsYy => &self.eps_yy,
            Channel::EpsXy => &self.eps_xy,
            Channel::EpsYx => &self.eps_yx,
        }
    }
}

/// Magnitude and full-quadrant orientation in `(−π, π]`; `θ = 0` where
/// `p = q = 0`.
pub fn to_polar(flow: &FlowField) -> Result<(Plane, Plane)> {
    if !flow.is_finite() {
        return Err(Error::NonFinite("to_polar input flow".into()));
    }
    let rho = flow.magnitude();
    let theta = Plane {
        width: flow.width(),
        height: flow.height(),
        data: flow
            .p
            .data
            .iter()
            .zip(&flow.q.data)
            .map(|(&p, &q)| polar_angle(p, q))
            .collect(),
    };
    Ok((rho, theta))
}

pub(crate) fn polar_angle(p: f64, q: f64) -> f64 {
    if p == 0.0 && q == 0.0 {
        return 0.0;
    }
    let t = q.atan2(p);
    if t <= -std::f64::consts::PI {
        std::f64::consts::PI
    } else {
        t
    }
}

fn central_dx(f: &Plane, x: usize, y: usize) -> f64 {
    let (x, y) = (x as isize, y as isize);
    0.5 * (f.get_clamped(x + 1, y) - f.get_clamped(x - 1, y))
}

fn central_dy(f: &Plane, x: usize, y: usize) -> f64 {
    let (x, y) = (x as isize, y as isize);
    0.5 * (f.get_clamped(x, y + 1) - f.get_clamped(x, y - 1))
}

pub fn compute_strain(flow: &FlowField) -> Result<Strain> {
    let (w, h) = (flow.width(), flow.height());
    if w < 3 || h < 3 {
        return Err(Error::invalid(format!("strain needs at least 3×3 pixels, got {w}×{h}")));
    }
    if !flow.is_finite() {
        return Err(Error::NonFinite("compute_strain input flow".into()));
    }
    let (p, q) = (&flow.p, &flow.q);
    let eps_xx = Plane::from_fn(w, h, |x, y| central_dx(p, x, y));
    let eps_yy = Plane::from_fn(w, h, |x, y| central_dy(q, x, y));
    let eps_xy = Plane::from_fn(w, h, |x, y| 0.5 * (central_dy(p, x, y) + central_dx(q, x, y)));
    let eps_mag = Plane {
        width: w,
        height: h,
        data: (0..w * h)
            .map(|i| {
                let (a, b, c) = (eps_xx.data[i], eps_yy.data[i], eps_xy.data[i]);
                (a * a + b * b + 2.0 * c * c).sqrt()
            })
            .collect(),
    };
    Ok(Strain {
        eps_mag,
        eps_xx,
        eps_yy,
        eps_xy,
    })
}

pub fn derive_channels(flow: &FlowField) -> Result<DerivedChannels> {
    let (rho, theta) = to_polar(flow)?;
    let s = compute_strain(flow)?;
    Ok(DerivedChannels {
        p: flow.p.clone(),
        q: flow.q.clone(),
        rho,
        theta,
        eps_mag: s.eps_mag,
        eps_xx: s.eps_xx,
        eps_yx: s.eps_xy.clone(),
        eps_xy: s.eps_xy,
        eps_yy: s.eps_yy,
    })
}

pub fn encode_channel(plane: &Plane) -> Vec<u8> {
    let mut out = Vec::with_capacity(13 + 4 * plane.data.len());
    out.extend_from_slice(CHANNEL_MAGIC);
    out.push(1);
    out.extend_from_slice(&(plane.width as u32).to_le_bytes());
    out.extend_from_slice(&(plane.height as u32).to_le_bytes());
    for v in &plane.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_channel(bytes: &[u8]) -> Result<Plane> {
    let (w, h) = decode_header(bytes, CHANNEL_MAGIC, "MECH")?;
    let payload = &bytes[13..];
    if payload.len() != 4 * w * h {
        return Err(Error::format(
            "MECH",
            13 + payload.len().min(4 * w * h),
            format!("payload holds {} bytes, expected {}", payload.len(), 4 * w * h),
        ));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Plane::new(w, h, data)
}

/// Writes every channel as `<stem>_<name>.mech` and `<stem>_<name>.pgm`
/// (min–max stretched) into `dir`.
pub fn export_channels(channels: &DerivedChannels, dir: &Path, stem: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for c in Channel::ALL {
        let plane = channels.get(c);
        let mech = dir.join(format!("{stem}_{}.mech", c.name()));
        std::fs::write(&mech, encode_channel(plane)).map_err(|e| Error::io(&mech, e))?;
        save_pgm(&plane_to_display(plane)?, &dir.join(format!("{stem}_{}.pgm", c.name())))?;
    }
    Ok(())
}
