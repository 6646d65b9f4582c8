use super::conv::LayerParams;
use super::linalg::gemm;
use super::tensor::Tensor;
use crate::error::{Error, Result};

fn dense_dims(params: &LayerParams) -> Result<(usize, usize)> {
    match *params.weights.shape() {
        [o, i] if params.bias.len() == o => Ok((o, i)),
        [o, _] => Err(Error::shape("dense bias", &[o], params.bias.shape())),
        _ => Err(Error::invalid(format!(
            "dense weights must be out×in, got {:?}",
            params.weights.shape()
        ))),
    }
}

/// `W·x + b` for a flat input of any rank.
pub fn dense(input: &Tensor, params: &LayerParams) -> Result<Tensor> {
    let out = dense_batch(input.data(), 1, params)?;
    let n = out.len();
    Tensor::new(vec![n], out)
}

/// Row-wise `X·Wᵀ + b` for a `batch × in` matrix.
pub fn dense_batch(x: &[f64], batch: usize, params: &LayerParams) -> Result<Vec<f64>> {
    let (outs, ins) = dense_dims(params)?;
    if x.len() != batch * ins {
        return Err(Error::shape("dense input", &[batch, ins], &[x.len()]));
    }
    let mut y = Vec::with_capacity(batch * outs);
    for _ in 0..batch {
        y.extend_from_slice(params.bias.data());
    }
    gemm(
        batch,
        ins,
        outs,
        1.0,
        x,
        false,
        params.weights.data(),
        true,
        1.0,
        &mut y,
    );
    Ok(y)
}

/// Gradients for [`dense_batch`]: returns `(dL/dX, dL/dparams)`.
pub fn dense_batch_backward(
    x: &[f64],
    batch: usize,
    params: &LayerParams,
    grad_out: &[f64],
) -> Result<(Vec<f64>, LayerParams)> {
    let (outs, ins) = dense_dims(params)?;
    if grad_out.len() != batch * outs || x.len() != batch * ins {
        return Err(Error::shape("dense backward", &[batch, outs], &[grad_out.len()]));
    }
    let mut gx = vec![0.0; batch * ins];
    gemm(
        batch,
        outs,
        ins,
        1.0,
        grad_out,
        false,
        params.weights.data(),
        false,
        0.0,
        &mut gx,
    );
    let mut gw = vec![0.0; outs * ins];
    gemm(outs, batch, ins, 1.0, grad_out, true, x, false, 0.0, &mut gw);
    let mut gb = vec![0.0; outs];
    for row in grad_out.chunks_exact(outs) {
        for (b, g) in gb.iter_mut().zip(row) {
            *b += g;
        }
    }
    Ok((
        gx,
        LayerParams {
            weights: Tensor::new(vec![outs, ins], gw)?,
            bias: Tensor::new(vec![outs], gb)?,
        },
    ))
}
