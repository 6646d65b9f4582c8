//! Image operators shared by the estimators: derivatives, warping,
//! smoothing and pyramids.

use super::field::FlowField;
use crate::error::{Error, Result};
use crate::imaging::{resize_bilinear, Plane};

/// Central differences with replicate border: `(∂x, ∂y)`.
pub fn gradients(img: &Plane) -> (Plane, Plane) {
    let (w, h) = (img.width as isize, img.height as isize);
    let mut gx = Plane::zeros(img.width, img.height);
    let mut gy = Plane::zeros(img.width, img.height);
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            gx.data[i] = 0.5 * (img.get_clamped(x + 1, y) - img.get_clamped(x - 1, y));
            gy.data[i] = 0.5 * (img.get_clamped(x, y + 1) - img.get_clamped(x, y - 1));
        }
    }
    (gx, gy)
}

/// `out(x) = img(x + flow(x))`, bilinear, replicate border.
pub fn warp(img: &Plane, flow: &FlowField) -> Plane {
    Plane::from_fn(img.width, img.height, |x, y| {
        let i = y * img.width + x;
        img.sample_bilinear(x as f64 + flow.p.data[i], y as f64 + flow.q.data[i])
    })
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur, replicate border.
pub fn gaussian_blur(img: &Plane, sigma: f64) -> Plane {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let mut tmp = Plane::zeros(img.width, img.height);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * img.get_clamped(x + j as isize - r, y))
                .sum();
            tmp.data[y as usize * img.width + x as usize] = s;
        }
    }
    let mut out = Plane::zeros(img.width, img.height);
    for y in 0..img.height as isize {
        for x in 0..img.width as isize {
            let s: f64 = k
                .iter()
                .enumerate()
                .map(|(j, w)| w * tmp.get_clamped(x, y + j as isize - r))
                .sum();
            out.data[y as usize * img.width + x as usize] = s;
        }
    }
    out
}

/// Pyramid extents from finest (index 0) to coarsest.
pub fn pyramid_sizes(width: usize, height: usize, levels: usize, scale: f64) -> Result<Vec<(usize, usize)>> {
    if levels == 0 || !(scale > 0.0 && scale < 1.0) {
        return Err(Error::invalid(format!(
            "pyramid needs levels >= 1 and scale in (0, 1), got {levels} / {scale}"
        )));
    }
    let mut sizes = vec![(width, height)];
    for _ in 1..levels {
        let (w, h) = *sizes.last().unwrap();
        sizes.push((
            ((w as f64 * scale).round() as usize).max(1),
            ((h as f64 * scale).round() as usize).max(1),
        ));
    }
    let (cw, ch) = *sizes.last().unwrap();
    if cw.min(ch) < 8 {
        return Err(Error::invalid(format!(
            "coarsest pyramid level {cw}×{ch} is below 8 px; use fewer levels"
        )));
    }
    Ok(sizes)
}

/// Anti-aliased image pyramid, finest level first.
pub fn build_pyramid(img: &Plane, levels: usize, scale: f64) -> Result<Vec<Plane>> {
    let sizes = pyramid_sizes(img.width, img.height, levels, scale)?;
    let sigma = 0.6 * (1.0 / (scale * scale) - 1.0).sqrt();
    let mut out = vec![img.clone()];
    for &(w, h) in &sizes[1..] {
        let blurred = gaussian_blur(out.last().unwrap(), sigma);
        out.push(resize_bilinear(&blurred, w, h)?);
    }
    Ok(out)
}

/// Resamples a flow field to new extents, rescaling the vectors.
pub fn resize_flow(flow: &FlowField, width: usize, height: usize) -> Result<FlowField> {
    let sx = width as f64 / flow.width() as f64;
    let sy = height as f64 / flow.height() as f64;
    let p = resize_bilinear(&flow.p, width, height)?.map(|v| v * sx);
    let q = resize_bilinear(&flow.q, width, height)?.map(|v| v * sy);
    FlowField::from_planes(p, q)
}

/// Box sums over a `(2r+1)²` window clipped to the image, plus the
/// number of pixels each window covered.
pub fn box_sum(img: &Plane, radius: usize) -> (Plane, Plane) {
    let (w, h) = (img.width, img.height);
    let mut integral = vec![0.0; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0.0;
        for x in 0..w {
            row += img.data[y * w + x];
            integral[(y + 1) * (w + 1) + x + 1] = integral[y * (w + 1) + x + 1] + row;
        }
    }
    let mut sums = Plane::zeros(w, h);
    let mut counts = Plane::zeros(w, h);
    for y in 0..h {
        let y0 = y.saturating_sub(radius);
        let y1 = (y + radius + 1).min(h);
        for x in 0..w {
            let x0 = x.saturating_sub(radius);
            let x1 = (x + radius + 1).min(w);
            let s = integral[y1 * (w + 1) + x1] - integral[y0 * (w + 1) + x1] - integral[y1 * (w + 1) + x0]
                + integral[y0 * (w + 1) + x0];
            sums.data[y * w + x] = s;
            counts.data[y * w + x] = ((y1 - y0) * (x1 - x0)) as f64;
        }
    }
    (sums, counts)
}
