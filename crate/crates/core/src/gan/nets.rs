//! Generator and discriminator for 28×28×1 images in `[-1, 1]`.
//!
//! Generator: `[z, onehot(c)]` → dense 7×7×32 (ReLU) → ×2 nearest
//! upsample → conv 3×3 32→16 (ReLU) → ×2 upsample → conv 3×3 16→1 → tanh.
//! Discriminator: conv 5×5/2 1→16 → conv 5×5/2 16→32 → dense 256, all
//! LeakyReLU, then a logistic source head and a 3-way class head.

use crate::error::{Error, Result};
use crate::imaging::NUM_CLASSES;
use crate::numerics::activation::{
    leaky_relu_backward, leaky_relu_inplace, relu_backward, relu_inplace, sigmoid, tanh_backward, tanh_inplace,
};
use crate::numerics::{
    conv2d_backward, conv2d_forward, dense_batch, dense_batch_backward, ConvCache, LayerParams, Padding, Parameterized,
    Tensor,
};
use crate::rng::{derive_seed_str, seeded};

const SEED_SIDE: usize = 7;
const SEED_CHANNELS: usize = 32;
const SEED_LEN: usize = SEED_SIDE * SEED_SIDE * SEED_CHANNELS;
const D_HIDDEN: usize = 256;

fn upsample2(x: &Tensor) -> Tensor {
    let (h, w, c) = x.hwc().expect("rank-3 tensor");
    let src = x.data();
    Tensor::from_fn(&[2 * h, 2 * w, c], |i| {
        let ch = i % c;
        let xx = (i / c) % (2 * w);
        let y = i / (c * 2 * w);
        src[((y / 2) * w + xx / 2) * c + ch]
    })
}

/// Adjoint of [`upsample2`]: sums each 2×2 block.
fn upsample2_backward(g: &Tensor) -> Tensor {
    let (h2, w2, c) = g.hwc().expect("rank-3 tensor");
    let (h, w) = (h2 / 2, w2 / 2);
    let mut out = Tensor::zeros(&[h, w, c]);
    let o = out.data_mut();
    for y in 0..h2 {
        for x in 0..w2 {
            for ch in 0..c {
                o[((y / 2) * w + x / 2) * c + ch] += g.data()[(y * w2 + x) * c + ch];
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub noise_dim: usize,
    pub fc: LayerParams,
    pub conv1: LayerParams,
    pub conv2: LayerParams,
}

pub(crate) struct GenCache {
    input: Vec<f64>,
    h0: Vec<f64>,
    per_sample: Vec<GenSampleCache>,
}

struct GenSampleCache {
    c1: ConvCache,
    a1: Tensor,
    c2: ConvCache,
    out: Tensor,
}

impl Generator {
    pub fn new(noise_dim: usize, seed: u64) -> Self {
        let rng = |name: &str| seeded(derive_seed_str(seed, name));
        Generator {
            noise_dim,
            fc: LayerParams::dense(noise_dim + NUM_CLASSES, SEED_LEN, &mut rng("gen.fc")),
            conv1: LayerParams::conv(3, 3, SEED_CHANNELS, 16, &mut rng("gen.conv1")),
            conv2: LayerParams::conv(3, 3, 16, 1, &mut rng("gen.conv2")),
        }
    }

    fn conditioned_input(&self, noise: &[Vec<f64>], classes: &[usize]) -> Result<Vec<f64>> {
        if noise.len() != classes.len() {
            return Err(Error::shape("generator batch", &[noise.len()], &[classes.len()]));
        }
        let mut x = Vec::with_capacity(noise.len() * (self.noise_dim + NUM_CLASSES));
        for (z, &c) in noise.iter().zip(classes) {
            if z.len() != self.noise_dim {
                return Err(Error::shape("noise vector", &[self.noise_dim], &[z.len()]));
            }
            if c >= NUM_CLASSES {
                return Err(Error::invalid(format!("class {c} out of range")));
            }
            x.extend_from_slice(z);
            x.extend((0..NUM_CLASSES).map(|k| if k == c { 1.0 } else { 0.0 }));
        }
        Ok(x)
    }

    pub(crate) fn forward_cached(&self, noise: &[Vec<f64>], classes: &[usize]) -> Result<(Vec<Tensor>, GenCache)> {
        let input = self.conditioned_input(noise, classes)?;
        let n = classes.len();
        let mut h0 = dense_batch(&input, n, &self.fc)?;
        relu_inplace(&mut h0);
        let mut per_sample = Vec::with_capacity(n);
        let mut outs = Vec::with_capacity(n);
        for row in h0.chunks_exact(SEED_LEN) {
            let seed = Tensor::new(vec![SEED_SIDE, SEED_SIDE, SEED_CHANNELS], row.to_vec())?;
            let (mut a1, c1) = conv2d_forward(&upsample2(&seed), &self.conv1, 1, Padding::Same)?;
            relu_inplace(a1.data_mut());
            let (mut out, c2) = conv2d_forward(&upsample2(&a1), &self.conv2, 1, Padding::Same)?;
            tanh_inplace(out.data_mut());
            outs.push(out.clone());
            per_sample.push(GenSampleCache { c1, a1, c2, out });
        }
        Ok((outs, GenCache { input, h0, per_sample }))
    }

    /// Images for `(z, class)` pairs, each 28×28×1 in `[-1, 1]`.
    pub fn generate(&self, noise: &[Vec<f64>], classes: &[usize]) -> Result<Vec<Tensor>> {
        self.forward_cached(noise, classes).map(|(o, _)| o)
    }

    /// Parameter gradients given `dL/dimage` for every sample of a batch.
    pub(crate) fn backward(&self, cache: &GenCache, grad_images: &[Tensor]) -> Result<Vec<Tensor>> {
        let n = cache.per_sample.len();
        let mut d1 = self.conv1.zeros_like();
        let mut d2 = self.conv2.zeros_like();
        let mut gh0 = Vec::with_capacity(n * SEED_LEN);
        for (sc, g) in cache.per_sample.iter().zip(grad_images) {
            let mut g = g.clone();
            tanh_backward(sc.out.data(), g.data_mut());
            let (g, dc2) = conv2d_backward(&sc.c2, &self.conv2, &g)?;
            let mut g = upsample2_backward(&g);
            relu_backward(sc.a1.data(), g.data_mut());
            let (g, dc1) = conv2d_backward(&sc.c1, &self.conv1, &g)?;
            gh0.extend_from_slice(upsample2_backward(&g).data());
            d1.add_assign(&dc1)?;
            d2.add_assign(&dc2)?;
        }
        relu_backward(&cache.h0, &mut gh0);
        let (_, dfc) = dense_batch_backward(&cache.input, n, &self.fc, &gh0)?;
        Ok(vec![dfc.weights, dfc.bias, d1.weights, d1.bias, d2.weights, d2.bias])
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, p) in [("fc", &self.fc), ("conv1", &self.conv1), ("conv2", &self.conv2)] {
            out.push((format!("{name}.weights"), &p.weights));
            out.push((format!("{name}.bias"), &p.bias));
        }
        out
    }
}

impl Parameterized for Generator {
    fn parameters(&self) -> Vec<&Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for p in [&mut self.fc, &mut self.conv1, &mut self.conv2] {
            out.extend([&mut p.weights, &mut p.bias]);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Discriminator {
    pub conv1: LayerParams,
    pub conv2: LayerParams,
    pub fc: LayerParams,
    pub source: LayerParams,
    pub class: LayerParams,
}

/// Discriminator outputs for a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscOutput {
    /// Logits of the source score, one per sample.
    pub source_logits: Vec<f64>,
    /// `batch × 3` class logits.
    pub class_logits: Vec<f64>,
}

impl DiscOutput {
    /// `P(S = real | X)` per sample.
    pub fn source_scores(&self) -> Vec<f64> {
        self.source_logits.iter().map(|&a| sigmoid(a)).collect()
    }

    pub fn len(&self) -> usize {
        self.source_logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.source_logits.is_empty()
    }
}

pub(crate) struct DiscCache {
    per_sample: Vec<(ConvCache, Tensor, ConvCache)>,
    flat: Vec<f64>,
    hidden: Vec<f64>,
}

impl Discriminator {
    pub fn new(seed: u64) -> Self {
        let rng = |name: &str| seeded(derive_seed_str(seed, name));
        Discriminator {
            conv1: LayerParams::conv(5, 5, 1, 16, &mut rng("disc.conv1")),
            conv2: LayerParams::conv(5, 5, 16, 32, &mut rng("disc.conv2")),
            fc: LayerParams::dense(SEED_LEN, D_HIDDEN, &mut rng("disc.fc")),
            source: LayerParams::dense(D_HIDDEN, 1, &mut rng("disc.source")),
            class: LayerParams::dense(D_HIDDEN, NUM_CLASSES, &mut rng("disc.class")),
        }
    }

    pub(crate) fn forward_cached(&self, images: &[&Tensor]) -> Result<(DiscOutput, DiscCache)> {
        let n = images.len();
        let mut flat = Vec::with_capacity(n * SEED_LEN);
        let mut per_sample = Vec::with_capacity(n);
        for img in images {
            if img.shape() != [28, 28, 1] {
                return Err(Error::shape("discriminator input", &[28, 28, 1], img.shape()));
            }
            let (mut a1, c1) = conv2d_forward(img, &self.conv1, 2, Padding::Same)?;
            leaky_relu_inplace(a1.data_mut());
            let (mut a2, c2) = conv2d_forward(&a1, &self.conv2, 2, Padding::Same)?;
            leaky_relu_inplace(a2.data_mut());
            flat.extend_from_slice(a2.data());
            per_sample.push((c1, a1, c2));
        }
        let mut hidden = dense_batch(&flat, n, &self.fc)?;
        leaky_relu_inplace(&mut hidden);
        let source_logits = dense_batch(&hidden, n, &self.source)?;
        let class_logits = dense_batch(&hidden, n, &self.class)?;
        Ok((
            DiscOutput {
                source_logits,
                class_logits,
            },
            DiscCache {
                per_sample,
                flat,
                hidden,
            },
        ))
    }

    pub fn forward(&self, images: &[&Tensor]) -> Result<DiscOutput> {
        self.forward_cached(images).map(|(o, _)| o)
    }

    /// Parameter gradients and `dL/dimage` per sample, given gradients on
    /// the source logits and class logits.
    pub(crate) fn backward(
        &self,
        cache: &DiscCache,
        grad_source: &[f64],
        grad_class: &[f64],
    ) -> Result<(Vec<Tensor>, Vec<Tensor>)> {
        let n = cache.per_sample.len();
        let (mut gh, dsrc) = dense_batch_backward(&cache.hidden, n, &self.source, grad_source)?;
        let (gh_c, dcls) = dense_batch_backward(&cache.hidden, n, &self.class, grad_class)?;
        gh.iter_mut().zip(&gh_c).for_each(|(a, b)| *a += b);
        leaky_relu_backward(&cache.hidden, &mut gh);
        let (mut gflat, dfc) = dense_batch_backward(&cache.flat, n, &self.fc, &gh)?;
        leaky_relu_backward(&cache.flat, &mut gflat);
        let mut d1 = self.conv1.zeros_like();
        let mut d2 = self.conv2.zeros_like();
        let mut gimg = Vec::with_capacity(n);
        for ((c1, a1, c2), g) in cache.per_sample.iter().zip(gflat.chunks_exact(SEED_LEN)) {
            let g = Tensor::new(vec![SEED_SIDE, SEED_SIDE, 32], g.to_vec())?;
            let (mut g, dc2) = conv2d_backward(c2, &self.conv2, &g)?;
            leaky_relu_backward(a1.data(), g.data_mut());
            let (g, dc1) = conv2d_backward(c1, &self.conv1, &g)?;
            d1.add_assign(&dc1)?;
            d2.add_assign(&dc2)?;
            gimg.push(g);
        }
        let grads = vec![
            d1.weights,
            d1.bias,
            d2.weights,
            d2.bias,
            dfc.weights,
            dfc.bias,
            dsrc.weights,
            dsrc.bias,
            dcls.weights,
            dcls.bias,
        ];
        Ok((grads, gimg))
    }

    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (name, p) in [
            ("conv1", &self.conv1),
            ("conv2", &self.conv2),
            ("fc", &self.fc),
            ("source", &self.source),
            ("class", &self.class),
        ] {
            out.push((format!("{name}.weights"), &p.weights));
            out.push((format!("{name}.bias"), &p.bias));
        }
        out
    }
}

impl Parameterized for Discriminator {
    fn parameters(&self) -> Vec<&Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for p in [
            &mut self.conv1,
            &mut self.conv2,
            &mut self.fc,
            &mut self.source,
            &mut self.class,
        ] {
            out.extend([&mut p.weights, &mut p.bias]);
        }
        out
    }
}
