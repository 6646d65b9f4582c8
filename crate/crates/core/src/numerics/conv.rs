//! 2-D convolution over H×W×C tensors, lowered to GEMM through im2col.

use rand::Rng as _;

use super::linalg::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Weights plus bias of one layer.
///
/// Convolution weights are `kH × kW × inC × outC`; dense weights are
/// `out × in`. The bias always has one entry per output channel / unit.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Tensor,
    pub bias: Tensor,
}

impl LayerParams {
    pub fn conv(kh: usize, kw: usize, cin: usize, cout: usize, rng: &mut Rng) -> Self {
        let fan_in = kh * kw * cin;
        let fan_out = kh * kw * cout;
        LayerParams {
            weights: glorot_uniform(&[kh, kw, cin, cout], fan_in, fan_out, rng),
            bias: Tensor::zeros(&[cout]),
        }
    }

    pub fn dense(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        LayerParams {
            weights: glorot_uniform(&[outputs, inputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        LayerParams {
            weights: Tensor::zeros(self.weights.shape()),
            bias: Tensor::zeros(self.bias.shape()),
        }
    }

    pub fn add_assign(&mut self, other: &LayerParams) -> Result<()> {
        self.weights.add_assign(&other.weights)?;
        self.bias.add_assign(&other.bias)
    }
}

/// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut Rng) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::from_fn(shape, |_| rng.gen_range(-limit..limit))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Padding {
    /// Output extent `ceil(in / stride)`, zero padding split with the
    /// extra row/column at the bottom/right.
    Same,
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeometry {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, padding: Padding) -> Result<Self> {
        let (in_h, in_w, cin) = match *input {
            [h, w, c] => (h, w, c),
            _ => return Err(Error::invalid(format!("conv2d input must be H×W×C, got {input:?}"))),
        };
        let (kh, kw, kcin, cout) = match *kernel {
            [a, b, c, d] => (a, b, c, d),
            _ => {
                return Err(Error::invalid(format!(
                    "conv2d kernel must be kH×kW×inC×outC, got {kernel:?}"
                )))
            }
        };
        if kcin != cin {
            return Err(Error::shape(
                format!("conv2d: input {input:?} vs kernel {kernel:?}"),
                &[kcin],
                &[cin],
            ));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d stride must be >= 1"));
        }
        let (out_h, out_w, pad_top, pad_left) = match padding {
            Padding::Same => {
                let oh = in_h.div_ceil(stride);
                let ow = in_w.div_ceil(stride);
                let ph = ((oh - 1) * stride + kh).saturating_sub(in_h);
                let pw = ((ow - 1) * stride + kw).saturating_sub(in_w);
                (oh, ow, ph / 2, pw / 2)
            }
            Padding::Valid => {
                if kh > in_h || kw > in_w {
                    return Err(Error::shape("conv2d valid padding", kernel, input));
                }
                ((in_h - kh) / stride + 1, (in_w - kw) / stride + 1, 0, 0)
            }
        };
        Ok(ConvGeometry {
            in_h,
            in_w,
            cin,
            kh,
            kw,
            cout,
            stride,
            out_h,
            out_w,
            pad_top,
            pad_left,
        })
    }

    fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Input coordinate for output row/col `o` and tap `k`, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        let v = (o * self.stride + k) as isize - pad as isize;
        (v >= 0 && (v as usize) < extent).then_some(v as usize)
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let plen = self.patch_len();
        let mut cols = vec![0.0; self.positions() * plen];
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &mut cols[(oy * self.out_w + ox) * plen..][..plen];
                for ky in 0..self.kh {
                    let Some(iy) = self.source(oy, ky, self.pad_top, self.in_h) else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        let Some(ix) = self.source(ox, kx, self.pad_left, self.in_w) else {
                            continue;
                        };
                        let src = &input[(iy * self.in_w + ix) * self.cin..][..self.cin];
                        row[(ky * self.kw + kx) * self.cin..][..self.cin].copy_from_slice(src);
                    }
                }
            }
        }
        cols
    }

    fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        let plen = self.patch_len();
        let mut out = vec![0.0; self.in_h * self.in_w * self.cin];
        for oy in 0..self.out_h {
            for ox in 0..self.out_w {
                let row = &cols[(oy * self.out_w + ox) * plen..][..plen];
                for ky in 0..self.kh {
                    let Some(iy) = self.source(oy, ky, self.pad_top, self.in_h) else {
                        continue;
                    };
                    for kx in 0..self.kw {
                        let Some(ix) = self.source(ox, kx, self.pad_left, self.in_w) else {
                            continue;
                        };
                        let dst = &mut out[(iy * self.in_w + ix) * self.cin..][..self.cin];
                        let src = &row[(ky * self.kw + kx) * self.cin..][..self.cin];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                }
            }
        }
        out
    }
}

/// State kept from the forward pass for [`conv2d_backward`].
#[derive(Clone, Debug)]
pub struct ConvCache {
    geom: ConvGeometry,
    cols: Vec<f64>,
}

pub fn conv2d(input: &Tensor, params: &LayerParams, stride: usize, padding: Padding) -> Result<Tensor> {
    conv2d_forward(input, params, stride, padding).map(|(out, _)| out)
}

pub fn conv2d_forward(
    input: &Tensor,
    params: &LayerParams,
    stride: usize,
    padding: Padding,
) -> Result<(Tensor, ConvCache)> {
    let geom = ConvGeometry::new(input.shape(), params.weights.shape(), stride, padding)?;
    if params.bias.len() != geom.cout {
        return Err(Error::shape("conv2d bias", &[geom.cout], params.bias.shape()));
    }
    let cols = geom.im2col(input.data());
    let positions = geom.positions();
    let mut out = Vec::with_capacity(positions * geom.cout);
    for _ in 0..positions {
        out.extend_from_slice(params.bias.data());
    }
    gemm(
        positions,
        geom.patch_len(),
        geom.cout,
        1.0,
        &cols,
        false,
        params.weights.data(),
        false,
        1.0,
        &mut out,
    );
    let out = Tensor::new(vec![geom.out_h, geom.out_w, geom.cout], out)?;
    Ok((out, ConvCache { geom, cols }))
}

/// Returns `(dL/dinput, dL/dparams)` given `dL/doutput`.
pub fn conv2d_backward(cache: &ConvCache, params: &LayerParams, grad_out: &Tensor) -> Result<(Tensor, LayerParams)> {
    let g = &cache.geom;
    let expected = [g.out_h, g.out_w, g.cout];
    if grad_out.shape() != expected {
        return Err(Error::shape("conv2d_backward", &expected, grad_out.shape()));
    }
    let positions = g.positions();
    let plen = g.patch_len();
    let go = grad_out.data();

    let mut gw = vec![0.0; plen * g.cout];
    gemm(plen, positions, g.cout, 1.0, &cache.cols, true, go, false, 0.0, &mut gw);

    let mut gb = vec![0.0; g.cout];
    for row in go.chunks_exact(g.cout) {
        for (b, v) in gb.iter_mut().zip(row) {
            *b += v;
        }
    }

    let mut gcols = vec![0.0; positions * plen];
    gemm(
        positions,
        g.cout,
        plen,
        1.0,
        go,
        false,
        params.weights.data(),
        true,
        0.0,
        &mut gcols,
    );
    let gin = g.col2im(&gcols);

    Ok((
        Tensor::new(vec![g.in_h, g.in_w, g.cin], gin)?,
        LayerParams {
            weights: Tensor::new(params.weights.shape().to_vec(), gw)?,
            bias: Tensor::new(vec![g.cout], gb)?,
        },
    ))
}
