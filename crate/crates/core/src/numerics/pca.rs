//! Principal component analysis through the SVD of the centered data.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// `dim × k`, row-major; column `j` is the `j`-th principal axis.
    pub basis: Vec<f64>,
    pub dim: usize,
    pub components: usize,
    /// Sample variance along each axis, non-increasing.
    pub variances: Vec<f64>,
    /// Set when the data has (numerically) zero variance; the basis is
    /// then an arbitrary orthonormal set.
    pub degenerate: bool,
}

/// Fits `k` components to `samples` (each row one observation).
pub fn pca_fit(samples: &[Vec<f64>], k: usize) -> Result<Pca> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::invalid(format!("pca needs at least 2 samples, got {n}")));
    }
    let dim = samples[0].len();
    if dim == 0 || samples.iter().any(|s| s.len() != dim) {
        return Err(Error::invalid("pca samples must share a positive dimension"));
    }
    if k == 0 || k > (n - 1).min(dim) {
        return Err(Error::invalid(format!(
            "pca components {k} must be in 1..={}",
            (n - 1).min(dim)
        )));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("pca samples".into()));
    }
    let mut mean = vec![0.0; dim];
    for s in samples {
        for (m, v) in mean.iter_mut().zip(s) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let centered = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
    let scale = centered.amax();
    let svd = centered.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::invalid("svd failed to produce right singular vectors"))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let variances: Vec<f64> = order[..k]
        .iter()
        .map(|&i| svd.singular_values[i].powi(2) / (n - 1) as f64)
        .collect();
    let mut basis = vec![0.0; dim * k];
    for (j, &i) in order[..k].iter().enumerate() {
        let row = v_t.row(i);
        // Sign convention: largest-magnitude coordinate positive.
        let pivot = row
            .iter()
            .copied()
            .fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for d in 0..dim {
            basis[d * k + j] = sign * row[d];
        }
    }
    let degenerate = scale == 0.0 || variances[0] <= f64::EPSILON * scale * scale;
    Ok(Pca {
        mean,
        basis,
        dim,
        components: k,
        variances,
        degenerate,
    })
}

impl Pca {
    /// `(x - mean)·basis`.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::shape("pca project", &[self.dim], &[x.len()]));
        }
        let mut out = vec![0.0; self.components];
        for (d, (v, m)) in x.iter().zip(&self.mean).enumerate() {
            let c = v - m;
            for (j, o) in out.iter_mut().enumerate() {
                *o += c * self.basis[d * self.components + j];
            }
        }
        Ok(out)
    }

    pub fn reconstruct(&self, coords: &[f64]) -> Result<Vec<f64>> {
        if coords.len() != self.components {
            return Err(Error::shape("pca reconstruct", &[self.components], &[coords.len()]));
        }
        Ok((0..self.dim)
            .map(|d| {
                self.mean[d]
                    + coords
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * self.basis[d * self.components + j])
                        .sum::<f64>()
            })
            .collect())
    }
}
