use super::plane::Plane;
use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Network input side length.
pub const INPUT_SIZE: usize = 28;

/// Bilinear resize with pixel-center alignment; an equal-size resize is
/// the identity.
pub fn resize_bilinear(plane: &Plane, width: usize, height: usize) -> Result<Plane> {
    if width == 0 || height == 0 || plane.data.is_empty() {
        return Err(Error::invalid("cannot resize an empty field"));
    }
    if plane.width == width && plane.height == height {
        return Ok(plane.clone());
    }
    let sx = plane.width as f64 / width as f64;
    let sy = plane.height as f64 / height as f64;
    Ok(Plane::from_fn(width, height, |x, y| {
        plane.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    }))
}

/// Resizes a channel to `size × size` and min-max scales it into `[-1, 1]`
/// as a `size × size × 1` tensor. Constant fields map to zeros.
pub fn normalize_to_input(channel: &Plane, size: usize) -> Result<Tensor> {
    if channel.data.is_empty() {
        return Err(Error::invalid("empty channel"));
    }
    if !channel.is_finite() {
        return Err(Error::NonFinite("channel passed to normalize_to_input".into()));
    }
    let resized = resize_bilinear(channel, size, size)?;
    let (lo, hi) = resized.min_max();
    let span = hi - lo;
    let data: Vec<f64> = if span > 0.0 {
        resized
            .data
            .iter()
            .map(|v| (2.0 * (v - lo) / span - 1.0).clamp(-1.0, 1.0))
            .collect()
    } else {
        vec![0.0; size * size]
    };
    Tensor::new(vec![size, size, 1], data)
}
