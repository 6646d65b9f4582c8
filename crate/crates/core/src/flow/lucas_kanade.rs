//! Pyramidal Lucas–Kanade.
//!
//! Per pixel, the window-averaged structure tensor of the onset frame
//! `A = mean_W [[Ix², IxIy], [IxIy, Iy²]]` is solved against
//! `b = -mean_W [Ix It, Iy It]`. Pixels whose smallest eigenvalue of `A`
//! falls below the floor are flagged and get zero flow. Intensities are
//! in `[0, 1]`.

use super::config::FlowConfig;
use super::field::FlowField;
use super::ops::{box_sum, build_pyramid, gradients, resize_flow};
use crate::error::Result;
use crate::imaging::Plane;

/// Window-averaged structure tensor entries `(a, b, c)` for
/// `[[a, b], [b, c]]`.
fn structure_tensor(ix: &Plane, iy: &Plane, radius: usize) -> (Plane, Plane, Plane) {
    let avg = |prod: Plane| {
        let (s, n) = box_sum(&prod, radius);
        Plane {
            width: s.width,
            height: s.height,
            data: s.data.iter().zip(&n.data).map(|(s, n)| s / n).collect(),
        }
    };
    let xx = ix.data.iter().map(|g| g * g).collect();
    let xy = ix.data.iter().zip(&iy.data).map(|(a, b)| a * b).collect();
    let yy = iy.data.iter().map(|g| g * g).collect();
    let mk = |d| Plane {
        width: ix.width,
        height: ix.height,
        data: d,
    };
    (avg(mk(xx)), avg(mk(xy)), avg(mk(yy)))
}

fn min_eig(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
}

/// Smallest eigenvalue of the windowed structure tensor at every pixel.
pub fn structure_tensor_min_eigenvalue(image: &Plane, radius: usize) -> Plane {
    let (ix, iy) = gradients(image);
    let (a, b, c) = structure_tensor(&ix, &iy, radius);
    Plane {
        width: image.width,
        height: image.height,
        data: (0..a.data.len())
            .map(|i| min_eig(a.data[i], b.data[i], c.data[i]))
            .collect(),
    }
}

pub fn lucas_kanade(onset: &Plane, apex: &Plane, config: &FlowConfig) -> Result<FlowField> {
    lucas_kanade_with_mask(onset, apex, config).map(|(f, _)| f)
}

/// Returns the flow and the per-pixel validity mask of the finest level
/// (`false` = ill-conditioned, flow forced to zero).
pub fn lucas_kanade_with_mask(onset: &Plane, apex: &Plane, config: &FlowConfig) -> Result<(FlowField, Vec<bool>)> {
    let params = &config.lucas_kanade;
    let p0 = build_pyramid(onset, config.pyramid_levels, config.pyramid_scale)?;
    let p1 = build_pyramid(apex, config.pyramid_levels, config.pyramid_scale)?;
    let coarsest = p0.last().unwrap();
    let mut flow = FlowField::zeros(coarsest.width, coarsest.height);
    let mut mask = Vec::new();
    for level in (0..p0.len()).rev() {
        let (i0, i1) = (&p0[level], &p1[level]);
        if flow.width() != i0.width || flow.height() != i0.height {
            flow = resize_flow(&flow, i0.width, i0.height)?;
        }
        let (ix, iy) = gradients(i0);
        let (a, b, c) = structure_tensor(&ix, &iy, params.window_radius);
        mask = (0..a.data.len())
            .map(|i| min_eig(a.data[i], b.data[i], c.data[i]) >= params.min_eigenvalue)
            .collect();
        let (w, h, r) = (i0.width, i0.height, params.window_radius);
        for y in 0..h {
            let (y0, y1) = (y.saturating_sub(r), (y + r + 1).min(h));
            for x in 0..w {
                let i = y * w + x;
                if !mask[i] {
                    continue;
                }
                let (x0, x1) = (x.saturating_sub(r), (x + r + 1).min(w));
                let n = ((y1 - y0) * (x1 - x0)) as f64;
                let (ta, tb, tc) = (a.data[i], b.data[i], c.data[i]);
                let det = ta * tc - tb * tb;
                let (mut u, mut v) = (flow.p.data[i], flow.q.data[i]);
                for _ in 0..params.iterations {
                    // whole window warped with this pixel's own estimate
                    let (mut sx, mut sy) = (0.0, 0.0);
                    for yy in y0..y1 {
                        for xx in x0..x1 {
                            let j = yy * w + xx;
                            let it = i1.sample_bilinear(xx as f64 + u, yy as f64 + v) - i0.data[j];
                            sx += ix.data[j] * it;
                            sy += iy.data[j] * it;
                        }
                    }
                    let (rx, ry) = (-sx / n, -sy / n);
                    u += (tc * rx - tb * ry) / det;
                    v += (ta * ry - tb * rx) / det;
                }
                flow.p.data[i] = u;
                flow.q.data[i] = v;
            }
        }
        for (i, ok) in mask.iter().enumerate() {
            if !ok {
                flow.p.data[i] = 0.0;
                flow.q.data[i] = 0.0;
            }
        }
    }
    Ok((flow, mask))
}
