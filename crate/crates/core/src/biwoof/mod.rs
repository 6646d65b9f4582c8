//! Bi-weighted oriented optical flow features and a linear SVM.
//!
//! Each of the `B×B` blocks gets an orientation histogram of `θ` whose
//! votes are weighted by `ρ` (local weight); the block histogram is then
//! scaled by the block's mean strain magnitude (global weight). Blocks
//! are concatenated row-major and the whole vector is L2-normalized.

pub mod svm;

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use svm::{decode_svm, encode_svm, load_svm, predict_svm, save_svm, train_svm, SvmModel, SvmParams};

use crate::derivatives::DerivedChannels;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BiwoofConfig {
    pub blocks_per_side: usize,
    pub orientation_bins: usize,
}

impl Default for BiwoofConfig {
    fn default() -> Self {
        BiwoofConfig {
            blocks_per_side: 5,
            orientation_bins: 8,
        }
    }
}

impl BiwoofConfig {
    pub fn new(blocks_per_side: usize, orientation_bins: usize) -> Self {
        BiwoofConfig {
            blocks_per_side,
            orientation_bins,
        }
    }

    pub fn feature_len(&self) -> usize {
        self.blocks_per_side * self.blocks_per_side * self.orientation_bins
    }

    pub fn validate(&self) -> Result<()> {
        if self.blocks_per_side < 1 || self.orientation_bins < 2 {
            return Err(Error::invalid(format!(
                "biwoof needs blocks_per_side >= 1 and orientation_bins >= 2, got {} / {}",
                self.blocks_per_side, self.orientation_bins
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub config: BiwoofConfig,
}

/// Bin of `theta` among `bins` uniform bins on `(−π, π]`; bin `k` covers
/// `(−π + k·w, −π + (k+1)·w]`.
pub fn orientation_bin(theta: f64, bins: usize) -> usize {
    let w = std::f64::consts::TAU / bins as f64;
    let k = ((theta + std::f64::consts::PI) / w).ceil() as isize - 1;
    k.clamp(0, bins as isize - 1) as usize
}

/// Half-open pixel ranges of the `b` blocks along an axis of length `n`;
/// the last block absorbs the remainder.
pub fn block_ranges(n: usize, b: usize) -> Vec<(usize, usize)> {
    let size = n / b;
    (0..b)
        .map(|j| (j * size, if j + 1 == b { n } else { (j + 1) * size }))
        .collect()
}

/// Histogram features before the final L2 normalization.
pub fn extract_biwoof_raw(channels: &DerivedChannels, config: &BiwoofConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let (w, h) = (channels.width(), channels.height());
    for plane in [&channels.rho, &channels.theta, &channels.eps_mag] {
        if plane.width != w || plane.height != h {
            return Err(Error::shape("biwoof channels", &[h, w], &[plane.height, plane.width]));
        }
    }
    let b = config.blocks_per_side;
    if w < b || h < b {
        return Err(Error::invalid(format!("{w}×{h} field cannot hold {b}×{b} blocks")));
    }
    let bins = config.orientation_bins;
    let (cols, rows) = (block_ranges(w, b), block_ranges(h, b));
    let mut out = vec![0.0; config.feature_len()];
    for (by, &(y0, y1)) in rows.iter().enumerate() {
        for (bx, &(x0, x1)) in cols.iter().enumerate() {
            let seg = &mut out[(by * b + bx) * bins..(by * b + bx + 1) * bins];
            let mut strain = 0.0;
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = y * w + x;
                    seg[orientation_bin(channels.theta.data[i], bins)] += channels.rho.data[i];
                    strain += channels.eps_mag.data[i];
                }
            }
            let mean_strain = strain / ((y1 - y0) * (x1 - x0)) as f64;
            seg.iter_mut().for_each(|v| *v *= mean_strain);
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("biwoof histogram".into()));
    }
    Ok(out)
}

pub fn extract_biwoof(channels: &DerivedChannels, config: &BiwoofConfig) -> Result<FeatureVector> {
    let mut values = extract_biwoof_raw(channels, config)?;
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        values.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(FeatureVector {
        values,
        config: *config,
    })
}

/// Writes `video_id,label,f0,…` rows.
pub fn write_feature_csv(path: &Path, rows: &[(String, usize, Vec<f64>)]) -> Result<()> {
    let mut buf = Vec::new();
    let dim = rows.first().map_or(0, |r| r.2.len());
    write!(buf, "video_id,label").unwrap();
    for i in 0..dim {
        write!(buf, ",f{i}").unwrap();
    }
    writeln!(buf).unwrap();
    for (id, label, values) in rows {
        if values.len() != dim {
            return Err(Error::shape("feature csv row", &[dim], &[values.len()]));
        }
        write!(buf, "{id},{label}").unwrap();
        for v in values {
            write!(buf, ",{v}").unwrap();
        }
        writeln!(buf).unwrap();
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
