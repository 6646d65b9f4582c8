//! TV-L1 by the Zach–Pock–Bischof primal–dual scheme with iterative
//! warping (0–255 intensities).

use super::config::FlowConfig;
use super::field::FlowField;
use super::ops::{build_pyramid, gradients, resize_flow, warp};
use crate::error::Result;
use crate::imaging::Plane;

/// Called with `(level, warp, &flow)` after each outer warp; level 0 is
/// the finest.
pub type WarpObserver<'a> = &'a mut dyn FnMut(usize, usize, &FlowField);

/// Forward differences, zero at the last row/column.
#[cfg(test)]
fn forward_gradient(u: &[f64], w: usize, h: usize, gx: &mut [f64], gy: &mut [f64]) {
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            gx[i] = if x + 1 < w { u[i + 1] - u[i] } else { 0.0 };
            gy[i] = if y + 1 < h { u[i + w] - u[i] } else { 0.0 };
        }
    }
}

/// Divergence at one pixel, the negative adjoint of `forward_gradient`.
#[inline]
fn div_at(px: &[f64], py: &[f64], x: usize, y: usize, w: usize, h: usize) -> f64 {
    let i = y * w + x;
    let dx = if w == 1 {
        0.0
    } else if x == 0 {
        px[i]
    } else if x + 1 == w {
        -px[i - 1]
    } else {
        px[i] - px[i - 1]
    };
    let dy = if h == 1 {
        0.0
    } else if y == 0 {
        py[i]
    } else if y + 1 == h {
        -py[i - w]
    } else {
        py[i] - py[i - w]
    };
    dx + dy
}

pub fn tvl1(onset: &Plane, apex: &Plane, config: &FlowConfig) -> Result<FlowField> {
    tvl1_observed(onset, apex, config, None)
}

pub fn tvl1_observed(
    onset: &Plane,
    apex: &Plane,
    config: &FlowConfig,
    mut observer: Option<WarpObserver<'_>>,
) -> Result<FlowField> {
    let prm = &config.tvl1;
    let i0 = onset.map(|v| v * 255.0);
    let i1 = apex.map(|v| v * 255.0);
    let p0 = build_pyramid(&i0, config.pyramid_levels, config.pyramid_scale)?;
    let p1 = build_pyramid(&i1, config.pyramid_levels, config.pyramid_scale)?;
    let coarsest = p0.last().unwrap();
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    let lt = prm.lambda * prm.theta;
    let step = prm.tau / prm.theta;
    for level in (0..p0.len()).rev() {
        let (a, b) = (&p0[level], &p1[level]);
        let (w, h) = (a.width, a.height);
        let n = w * h;
        if flow.width() != w || flow.height() != h {
            flow = resize_flow(&flow, w, h)?;
        }
        let (bx, by) = gradients(b);
        let mut p11 = vec![0.0; n];
        let mut p12 = vec![0.0; n];
        let mut p21 = vec![0.0; n];
        let mut p22 = vec![0.0; n];
        for wi in 0..prm.warps {
            let i1w = warp(b, &flow);
            let i1wx = warp(&bx, &flow);
            let i1wy = warp(&by, &flow);
            let grad: Vec<f64> = (0..n).map(|i| i1wx.data[i].powi(2) + i1wy.data[i].powi(2)).collect();
            let rho_c: Vec<f64> = (0..n)
                .map(|i| i1w.data[i] - i1wx.data[i] * flow.p.data[i] - i1wy.data[i] * flow.q.data[i] - a.data[i])
                .collect();
            let u1 = &mut flow.p.data;
            let u2 = &mut flow.q.data;
            for _ in 0..prm.inner_iterations {
                // thresholding step fused with the primal update
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let (gx, gy) = (i1wx.data[i], i1wy.data[i]);
                        let g = grad[i];
                        let rho = rho_c[i] + gx * u1[i] + gy * u2[i];
                        let (d1, d2) = if rho < -lt * g {
                            (lt * gx, lt * gy)
                        } else if rho > lt * g {
                            (-lt * gx, -lt * gy)
                        } else if g > 1e-10 {
                            (-rho * gx / g, -rho * gy / g)
                        } else {
                            (0.0, 0.0)
                        };
                        let div1 = div_at(&p11, &p12, x, y, w, h);
                        let div2 = div_at(&p21, &p22, x, y, w, h);
                        u1[i] += d1 + prm.theta * div1;
                        u2[i] += d2 + prm.theta * div2;
                    }
                }
                // dual ascent on forward differences
                for y in 0..h {
                    for x in 0..w {
                        let i = y * w + x;
                        let (a1, a2) = if x + 1 < w {
                            (u1[i + 1] - u1[i], u2[i + 1] - u2[i])
                        } else {
                            (0.0, 0.0)
                        };
                        let (b1, b2) = if y + 1 < h {
                            (u1[i + w] - u1[i], u2[i + w] - u2[i])
                        } else {
                            (0.0, 0.0)
                        };
                        let g1 = 1.0 + step * (a1 * a1 + b1 * b1).sqrt();
                        let g2 = 1.0 + step * (a2 * a2 + b2 * b2).sqrt();
                        p11[i] = (p11[i] + step * a1) / g1;
                        p12[i] = (p12[i] + step * b1) / g1;
                        p21[i] = (p21[i] + step * a2) / g2;
                        p22[i] = (p22[i] + step * b2) / g2;
                    }
                }
            }
            if let Some(obs) = observer.as_mut() {
                obs(level, wi, &flow);
            }
        }
    }
    Ok(flow)
}
