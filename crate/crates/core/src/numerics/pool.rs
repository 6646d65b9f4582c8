use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Argmax routing recorded by the forward pass.
#[derive(Clone, Debug)]
pub struct PoolCache {
    input_shape: [usize; 3],
    argmax: Vec<usize>,
}

/// Max pooling with "same" output extents `ceil(extent / stride)`.
///
/// Windows hanging over the bottom/right edge only see real pixels.
pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_forward(input, window, stride).map(|(out, _)| out)
}

pub fn maxpool2d_forward(input: &Tensor, window: usize, stride: usize) -> Result<(Tensor, PoolCache)> {
    let (h, w, c) = input.hwc()?;
    if window == 0 || stride == 0 {
        return Err(Error::invalid("maxpool window and stride must be >= 1"));
    }
    if h < window || w < window {
        return Err(Error::shape(
            "maxpool2d: input smaller than window",
            &[window, window],
            &[h, w],
        ));
    }
    let oh = h.div_ceil(stride);
    let ow = w.div_ceil(stride);
    let pad_top = ((oh - 1) * stride + window).saturating_sub(h) / 2;
    let pad_left = ((ow - 1) * stride + window).saturating_sub(w) / 2;
    let x = input.data();
    let mut out = vec![f64::NEG_INFINITY; oh * ow * c];
    let mut argmax = vec![0usize; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let y0 = (oy * stride) as isize - pad_top as isize;
            let x0 = (ox * stride) as isize - pad_left as isize;
            let base = (oy * ow + ox) * c;
            for dy in 0..window as isize {
                let iy = y0 + dy;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for dx in 0..window as isize {
                    let ix = x0 + dx;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c;
                    for ch in 0..c {
                        let v = x[src + ch];
                        if v > out[base + ch] {
                            out[base + ch] = v;
                            argmax[base + ch] = src + ch;
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(vec![oh, ow, c], out)?,
        PoolCache {
            input_shape: [h, w, c],
            argmax,
        },
    ))
}

pub fn maxpool2d_backward(cache: &PoolCache, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.len() != cache.argmax.len() {
        return Err(Error::shape(
            "maxpool2d_backward",
            &[cache.argmax.len()],
            &[grad_out.len()],
        ));
    }
    let mut gin = Tensor::zeros(&cache.input_shape);
    let gi = gin.data_mut();
    for (&src, g) in cache.argmax.iter().zip(grad_out.data()) {
        gi[src] += g;
    }
    Ok(gin)
}
