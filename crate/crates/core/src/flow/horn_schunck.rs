//! Horn–Schunck with coarse-to-fine initialization.
//!
//! Each level minimizes
//! `E(u,v) = Σ (Ix(u-u0) + Iy(v-v0) + It)² + α² Σ_edges (Δu² + Δv²)`
//! linearized about the upsampled coarse flow `(u0, v0)`. Sweeps are
//! red–black Gauss–Seidel: every pixel update is the exact minimizer of
//! `E` in that pixel's two unknowns, so `E` never increases.

use super::config::FlowConfig;
use super::field::FlowField;
use super::ops::{build_pyramid, gradients, resize_flow, warp};
use crate::error::Result;
use crate::imaging::Plane;

/// Called with `(level, iteration, energy)` after each full sweep;
/// level 0 is the finest.
pub type EnergyObserver<'a> = &'a mut dyn FnMut(usize, usize, f64);

struct Level {
    w: usize,
    h: usize,
    ix: Vec<f64>,
    iy: Vec<f64>,
    it: Vec<f64>,
    u0: Vec<f64>,
    v0: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    alpha2: f64,
}

impl Level {
    fn energy(&self) -> f64 {
        let (w, h) = (self.w, self.h);
        let mut data = 0.0;
        let mut smooth = 0.0;
        for y in 0..h {
            for x in 0..w {
                let i = y * w + x;
                let r = self.ix[i] * (self.u[i] - self.u0[i]) + self.iy[i] * (self.v[i] - self.v0[i]) + self.it[i];
                data += r * r;
                if x + 1 < w {
                    smooth += (self.u[i + 1] - self.u[i]).powi(2) + (self.v[i + 1] - self.v[i]).powi(2);
                }
                if y + 1 < h {
                    smooth += (self.u[i + w] - self.u[i]).powi(2) + (self.v[i + w] - self.v[i]).powi(2);
                }
            }
        }
        data + self.alpha2 * smooth
    }

    fn half_sweep(&mut self, color: usize) {
        let (w, h) = (self.w, self.h);
        for y in 0..h {
            let mut x = (color + y) % 2;
            while x < w {
                let i = y * w + x;
                let (mut su, mut sv, mut n) = (0.0, 0.0, 0.0);
                if x > 0 {
                    su += self.u[i - 1];
                    sv += self.v[i - 1];
                    n += 1.0;
                }
                if x + 1 < w {
                    su += self.u[i + 1];
                    sv += self.v[i + 1];
                    n += 1.0;
                }
                if y > 0 {
                    su += self.u[i - w];
                    sv += self.v[i - w];
                    n += 1.0;
                }
                if y + 1 < h {
                    su += self.u[i + w];
                    sv += self.v[i + w];
                    n += 1.0;
                }
                if n > 0.0 {
                    let (ub, vb) = (su / n, sv / n);
                    let (gx, gy) = (self.ix[i], self.iy[i]);
                    let r = gx * (ub - self.u0[i]) + gy * (vb - self.v0[i]) + self.it[i];
                    let d = self.alpha2 * n + gx * gx + gy * gy;
                    self.u[i] = ub - gx * r / d;
                    self.v[i] = vb - gy * r / d;
                } else {
                    // 1×1 image: pure data term
                    let (gx, gy) = (self.ix[i], self.iy[i]);
                    let g2 = gx * gx + gy * gy;
                    if g2 > 0.0 {
                        let r = gx * (self.u[i] - self.u0[i]) + gy * (self.v[i] - self.v0[i]) + self.it[i];
                        self.u[i] -= gx * r / g2;
                        self.v[i] -= gy * r / g2;
                    }
                }
                x += 2;
            }
        }
    }
}

pub fn horn_schunck(onset: &Plane, apex: &Plane, config: &FlowConfig) -> Result<FlowField> {
    horn_schunck_observed(onset, apex, config, None)
}

pub fn horn_schunck_observed(
    onset: &Plane,
    apex: &Plane,
    config: &FlowConfig,
    mut observer: Option<EnergyObserver<'_>>,
) -> Result<FlowField> {
    let params = &config.horn_schunck;
    let i0 = onset.map(|v| v * 255.0);
    let i1 = apex.map(|v| v * 255.0);
    let p0 = build_pyramid(&i0, config.pyramid_levels, config.pyramid_scale)?;
    let p1 = build_pyramid(&i1, config.pyramid_levels, config.pyramid_scale)?;
    let coarsest = p0.last().unwrap();
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    for level in (0..p0.len()).rev() {
        let (a, b) = (&p0[level], &p1[level]);
        if flow.width() != a.width || flow.height() != a.height {
            flow = resize_flow(&flow, a.width, a.height)?;
        }
        let (ix, iy) = gradients(a);
        let warped = warp(b, &flow);
        let it: Vec<f64> = warped.data.iter().zip(&a.data).map(|(x, y)| x - y).collect();
        let mut lv = Level {
            w: a.width,
            h: a.height,
            ix: ix.data,
            iy: iy.data,
            it,
            u0: flow.p.data.clone(),
            v0: flow.q.data.clone(),
            u: flow.p.data.clone(),
            v: flow.q.data.clone(),
            alpha2: params.alpha * params.alpha,
        };
        if let Some(obs) = observer.as_mut() {
            obs(level, 0, lv.energy());
        }
        for iter in 1..=params.iterations {
            lv.half_sweep(0);
            lv.half_sweep(1);
            if let Some(obs) = observer.as_mut() {
                obs(level, iter, lv.energy());
            }
        }
        flow = FlowField::from_planes(Plane::new(lv.w, lv.h, lv.u)?, Plane::new(lv.w, lv.h, lv.v)?)?;
    }
    Ok(flow)
}
