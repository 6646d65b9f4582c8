//! One-vs-rest linear SVM trained by Pegasos (primal stochastic
//! subgradient descent on the regularized hinge loss).
//!
//! The bias is learned as the weight of a constant unit feature and is
//! regularized along with the other weights.
//!
//! `MSVM` layout, little-endian: magic `MSVM`, `u8` version (1), `u32`
//! classes, `u32` dimension, `f64` λ, `u32` epochs, `u64` seed, then per
//! class `dimension` `f32` weights followed by one `f32` bias.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

pub const SVM_MAGIC: &[u8; 4] = b"MSVM";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmParams {
    pub lambda: f64,
    pub epochs: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            lambda: 1e-3,
            epochs: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    /// One weight vector per class.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub lambda: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl SvmModel {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn scores(&self, feature: &[f64]) -> Result<Vec<f64>> {
        if feature.len() != self.dim() {
            return Err(Error::shape("svm feature", &[self.dim()], &[feature.len()]));
        }
        Ok(self
            .weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(feature).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect())
    }
}

/// Trains `classes` one-vs-rest models. Labels must lie in `0..classes`
/// and at least two classes must occur.
pub fn train_svm(
    features: &[Vec<f64>],
    labels: &[usize],
    classes: usize,
    params: &SvmParams,
    seed: u64,
) -> Result<SvmModel> {
    if features.len() != labels.len() {
        return Err(Error::shape("svm labels", &[features.len()], &[labels.len()]));
    }
    if features.is_empty() {
        return Err(Error::invalid("svm training set is empty"));
    }
    if params.lambda.is_nan() || params.lambda <= 0.0 || params.epochs == 0 {
        return Err(Error::invalid("svm needs lambda > 0 and epochs >= 1"));
    }
    let dim = features[0].len();
    if let Some(f) = features.iter().find(|f| f.len() != dim) {
        return Err(Error::shape("svm feature", &[dim], &[f.len()]));
    }
    if let Some(l) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!("label {l} outside 0..{classes}")));
    }
    let mut present = vec![false; classes];
    labels.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|p| **p).count() < 2 {
        return Err(Error::invalid("svm training needs at least two classes"));
    }
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    for c in 0..classes {
        let mut rng = seeded(derive_seed(seed, c as u64));
        // last coordinate is the bias weight
        let mut w = vec![0.0; dim + 1];
        let mut order: Vec<usize> = (0..features.len()).collect();
        let mut t = 0u64;
        for _ in 0..params.epochs {
            order.shuffle(&mut rng);
            for &i in &order {
                t += 1;
                let eta = 1.0 / (params.lambda * t as f64);
                let y = if labels[i] == c { 1.0 } else { -1.0 };
                let x = &features[i];
                let margin = y * (w[..dim].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[dim]);
                let shrink = 1.0 - eta * params.lambda;
                w.iter_mut().for_each(|v| *v *= shrink);
                if margin < 1.0 {
                    for (wj, xj) in w[..dim].iter_mut().zip(x) {
                        *wj += eta * y * xj;
                    }
                    w[dim] += eta * y;
                }
            }
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(format!("svm class {c} weights")));
        }
        biases.push(w[dim]);
        w.truncate(dim);
        weights.push(w);
    }
    Ok(SvmModel {
        weights,
        biases,
        lambda: params.lambda,
        epochs: params.epochs,
        seed,
    })
}

/// Highest-scoring class (lowest id on ties) and all scores.
pub fn predict_svm(model: &SvmModel, feature: &[f64]) -> Result<(usize, Vec<f64>)> {
    let scores = model.scores(feature)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    Ok((best, scores))
}

pub fn encode_svm(model: &SvmModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(SVM_MAGIC);
    out.push(1);
    out.extend_from_slice(&(model.classes() as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    out.extend_from_slice(&model.lambda.to_le_bytes());
    out.extend_from_slice(&(model.epochs as u32).to_le_bytes());
    out.extend_from_slice(&model.seed.to_le_bytes());
    for (w, b) in model.weights.iter().zip(&model.biases) {
        for v in w {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&(*b as f32).to_le_bytes());
    }
    out
}

pub fn decode_svm(bytes: &[u8]) -> Result<SvmModel> {
    const HEADER: usize = 4 + 1 + 4 + 4 + 8 + 4 + 8;
    if bytes.len() < HEADER {
        return Err(Error::format("MSVM", bytes.len(), "truncated header"));
    }
    if &bytes[..4] != SVM_MAGIC {
        return Err(Error::format("MSVM", 0, "bad magic"));
    }
    if bytes[4] != 1 {
        return Err(Error::format("MSVM", 4, format!("unsupported version {}", bytes[4])));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let classes = u32_at(5);
    let dim = u32_at(9);
    let lambda = f64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let epochs = u32_at(21);
    let seed = u64::from_le_bytes(bytes[25..33].try_into().unwrap());
    let need = HEADER + classes * (dim + 1) * 4;
    if bytes.len() != need {
        return Err(Error::format(
            "MSVM",
            bytes.len().min(need),
            format!("expected {need} bytes, found {}", bytes.len()),
        ));
    }
    let vals: Vec<f64> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    for chunk in vals.chunks_exact(dim + 1) {
        weights.push(chunk[..dim].to_vec());
        biases.push(chunk[dim]);
    }
    Ok(SvmModel {
        weights,
        biases,
        lambda,
        epochs,
        seed,
    })
}

pub fn save_svm(model: &SvmModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_svm(model)).map_err(|e| Error::io(path, e))
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    decode_svm(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
