//! OFF-ApexNet: one conv/pool stack per flow channel, fused by
//! concatenation or elementwise product, then a three-layer dense head.
//!
//! Per stream: conv 5×5×1→6, ReLU, max-pool 2×2/2, conv 5×5×6→16, ReLU,
//! max-pool 2×2/2, giving 7×7×16 = 784 values for a 28×28×1 input.
//! Head: FC 1024, ReLU, FC 1024, ReLU (the penultimate features), FC 3.

pub mod checkpoint;
pub mod train;

use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use train::{train, write_trace_csv, EpochStats, Sample, TrainConfig, TrainTrace};

use crate::derivatives::Channel;
use crate::error::{Error, Result};
use crate::imaging::{INPUT_SIZE, NUM_CLASSES};
use crate::numerics::activation::{relu_backward, relu_inplace};
use crate::numerics::{
    conv2d_backward, conv2d_forward, dense_batch, dense_batch_backward, maxpool2d_backward, maxpool2d_forward,
    ConvCache, Differentiable, LayerParams, Padding, Parameterized, PoolCache, Tensor,
};
use crate::rng::{derive_seed_str, seeded};

pub const STREAM_FEATURES: usize = 7 * 7 * 16;
pub const HIDDEN: usize = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    Concat,
    Multiply,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub channels: Vec<Channel>,
    pub fusion: Fusion,
}

impl StreamSpec {
    pub fn new(channels: &[Channel], fusion: Fusion) -> Self {
        StreamSpec {
            channels: channels.to_vec(),
            fusion,
        }
    }

    /// The original two-stream network: `(p, q)` concatenated.
    pub fn original() -> Self {
        Self::new(&[Channel::P, Channel::Q], Fusion::Concat)
    }

    pub fn streams(&self) -> usize {
        self.channels.len()
    }

    pub fn head_input(&self) -> usize {
        match self.fusion {
            Fusion::Concat => STREAM_FEATURES * self.streams(),
            Fusion::Multiply => STREAM_FEATURES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.streams();
        if !(1..=3).contains(&n) {
            return Err(Error::invalid(format!("stream count must be 1..=3, got {n}")));
        }
        if self.fusion == Fusion::Multiply && n < 2 {
            return Err(Error::invalid("multiply fusion needs at least two streams"));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if *c == Channel::EpsYy {
                return Err(Error::invalid("eps_yy is not a stream channel"));
            }
            if self.channels[..i].contains(c) {
                return Err(Error::invalid(format!("channel {c} selected twice")));
            }
        }
        Ok(())
    }

    /// Short label such as `p+q+eps_mag/multiply`.
    pub fn label(&self) -> String {
        let names: Vec<&str> = self.channels.iter().map(|c| c.name()).collect();
        let fusion = match self.fusion {
            Fusion::Concat => "concat",
            Fusion::Multiply => "multiply",
        };
        format!("{}/{fusion}", names.join("+"))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StreamLayers {
    pub conv1: LayerParams,
    pub conv2: LayerParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffApexNet {
    pub spec: StreamSpec,
    pub streams: Vec<StreamLayers>,
    pub fc1: LayerParams,
    pub fc2: LayerParams,
    pub out: LayerParams,
}

pub fn build_network(spec: &StreamSpec, seed: u64) -> Result<OffApexNet> {
    spec.validate()?;
    let rng_for = |name: &str| seeded(derive_seed_str(seed, name));
    let streams = (0..spec.streams())
        .map(|i| StreamLayers {
            conv1: LayerParams::conv(5, 5, 1, 6, &mut rng_for(&format!("stream{i}.conv1"))),
            conv2: LayerParams::conv(5, 5, 6, 16, &mut rng_for(&format!("stream{i}.conv2"))),
        })
        .collect();
    Ok(OffApexNet {
        spec: spec.clone(),
        streams,
        fc1: LayerParams::dense(spec.head_input(), HIDDEN, &mut rng_for("fc1")),
        fc2: LayerParams::dense(HIDDEN, HIDDEN, &mut rng_for("fc2")),
        out: LayerParams::dense(HIDDEN, NUM_CLASSES, &mut rng_for("out")),
    })
}

/// Intermediate activations of one stream for one sample.
pub(crate) struct StreamCache {
    c1: ConvCache,
    a1: Tensor,
    p1: PoolCache,
    c2: ConvCache,
    a2: Tensor,
    p2: PoolCache,
    out: Vec<f64>,
}

/// Activation shapes of one stream: after conv1, pool1, conv2, pool2.
pub fn stream_shapes(layers: &StreamLayers, input: &Tensor) -> Result<Vec<Vec<usize>>> {
    let (a1, _) = conv2d_forward(input, &layers.conv1, 1, Padding::Same)?;
    let (m1, _) = maxpool2d_forward(&a1, 2, 2)?;
    let (a2, _) = conv2d_forward(&m1, &layers.conv2, 1, Padding::Same)?;
    let (m2, _) = maxpool2d_forward(&a2, 2, 2)?;
    Ok([a1, m1, a2, m2].iter().map(|t| t.shape().to_vec()).collect())
}

fn stream_forward(layers: &StreamLayers, input: &Tensor) -> Result<StreamCache> {
    if input.shape() != [INPUT_SIZE, INPUT_SIZE, 1] {
        return Err(Error::shape(
            "stream input",
            &[INPUT_SIZE, INPUT_SIZE, 1],
            input.shape(),
        ));
    }
    let (mut a1, c1) = conv2d_forward(input, &layers.conv1, 1, Padding::Same)?;
    relu_inplace(a1.data_mut());
    let (m1, p1) = maxpool2d_forward(&a1, 2, 2)?;
    let (mut a2, c2) = conv2d_forward(&m1, &layers.conv2, 1, Padding::Same)?;
    relu_inplace(a2.data_mut());
    let (m2, p2) = maxpool2d_forward(&a2, 2, 2)?;
    debug_assert_eq!(m2.shape(), [7, 7, 16]);
    Ok(StreamCache {
        c1,
        a1,
        p1,
        c2,
        a2,
        p2,
        out: m2.into_data(),
    })
}

fn stream_backward(layers: &StreamLayers, cache: &StreamCache, grad: &[f64]) -> Result<(LayerParams, LayerParams)> {
    let g = Tensor::new(vec![7, 7, 16], grad.to_vec())?;
    let mut g = maxpool2d_backward(&cache.p2, &g)?;
    relu_backward(cache.a2.data(), g.data_mut());
    let (g, d2) = conv2d_backward(&cache.c2, &layers.conv2, &g)?;
    let mut g = maxpool2d_backward(&cache.p1, &g)?;
    relu_backward(cache.a1.data(), g.data_mut());
    let (_, d1) = conv2d_backward(&cache.c1, &layers.conv1, &g)?;
    Ok((d1, d2))
}

/// Everything a backward pass needs for a batch.
pub(crate) struct BatchActivations {
    streams: Vec<Vec<StreamCache>>,
    fused: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub(crate) logits: Vec<f64>,
}

/// Parameter gradients in [`Parameterized::parameters`] order.
pub(crate) type Gradients = Vec<Tensor>;

impl OffApexNet {
    pub fn head_input(&self) -> usize {
        self.spec.head_input()
    }

    fn check_inputs(&self, inputs: &[Tensor]) -> Result<()> {
        if inputs.len() != self.streams.len() {
            return Err(Error::shape("network inputs", &[self.streams.len()], &[inputs.len()]));
        }
        Ok(())
    }

    pub(crate) fn forward_batch(&self, batch: &[&[Tensor]]) -> Result<BatchActivations> {
        let n = batch.len();
        let width = self.head_input();
        let mut fused = Vec::with_capacity(n * width);
        let mut streams = Vec::with_capacity(n);
        for inputs in batch {
            self.check_inputs(inputs)?;
            let caches = self
                .streams
                .iter()
                .zip(inputs.iter())
                .map(|(l, x)| stream_forward(l, x))
                .collect::<Result<Vec<_>>>()?;
            match self.spec.fusion {
                Fusion::Concat => caches.iter().for_each(|c| fused.extend_from_slice(&c.out)),
                Fusion::Multiply => {
                    let start = fused.len();
                    fused.extend_from_slice(&caches[0].out);
                    for c in &caches[1..] {
                        fused[start..].iter_mut().zip(&c.out).for_each(|(f, v)| *f *= v);
                    }
                }
            }
            streams.push(caches);
        }
        let mut h1 = dense_batch(&fused, n, &self.fc1)?;
        relu_inplace(&mut h1);
        let mut h2 = dense_batch(&h1, n, &self.fc2)?;
        relu_inplace(&mut h2);
        let logits = dense_batch(&h2, n, &self.out)?;
        Ok(BatchActivations {
            streams,
            fused,
            h1,
            h2,
            logits,
        })
    }

    /// Backpropagates `grad_logits` (batch × 3) through a cached batch.
    pub(crate) fn backward_batch(&self, acts: &BatchActivations, grad_logits: &[f64]) -> Result<Gradients> {
        let n = acts.streams.len();
        let (mut g2, d_out) = dense_batch_backward(&acts.h2, n, &self.out, grad_logits)?;
        relu_backward(&acts.h2, &mut g2);
        let (mut g1, d_fc2) = dense_batch_backward(&acts.h1, n, &self.fc2, &g2)?;
        relu_backward(&acts.h1, &mut g1);
        let (gx, d_fc1) = dense_batch_backward(&acts.fused, n, &self.fc1, &g1)?;

        let mut conv_grads: Vec<(LayerParams, LayerParams)> = self
            .streams
            .iter()
            .map(|l| (l.conv1.zeros_like(), l.conv2.zeros_like()))
            .collect();
        let width = self.head_input();
        for (s, caches) in acts.streams.iter().enumerate() {
            let gs = &gx[s * width..(s + 1) * width];
            for (k, cache) in caches.iter().enumerate() {
                let g_stream: Vec<f64> = match self.spec.fusion {
                    Fusion::Concat => gs[k * STREAM_FEATURES..(k + 1) * STREAM_FEATURES].to_vec(),
                    Fusion::Multiply => (0..STREAM_FEATURES)
                        .map(|i| {
                            caches
                                .iter()
                                .enumerate()
                                .filter(|(j, _)| *j != k)
                                .fold(gs[i], |acc, (_, c)| acc * c.out[i])
                        })
                        .collect(),
                };
                let (d1, d2) = stream_backward(&self.streams[k], cache, &g_stream)?;
                conv_grads[k].0.add_assign(&d1)?;
                conv_grads[k].1.add_assign(&d2)?;
            }
        }
        let mut grads = Vec::new();
        for (c1, c2) in conv_grads {
            grads.extend([c1.weights, c1.bias, c2.weights, c2.bias]);
        }
        for p in [d_fc1, d_fc2, d_out] {
            grads.extend([p.weights, p.bias]);
        }
        Ok(grads)
    }

    /// Logits and penultimate (FC2) activations for one sample.
    pub fn forward(&self, inputs: &[Tensor]) -> Result<(Vec<f64>, Vec<f64>)> {
        let acts = self.forward_batch(&[inputs])?;
        Ok((acts.logits, acts.h2))
    }

    /// The fused head input for one sample.
    pub fn fused_features(&self, inputs: &[Tensor]) -> Result<Vec<f64>> {
        Ok(self.forward_batch(&[inputs])?.fused)
    }

    /// Named parameter tensors in a fixed order.
    pub fn named_parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, s) in self.streams.iter().enumerate() {
            out.push((format!("stream{i}.conv1.weights"), &s.conv1.weights));
            out.push((format!("stream{i}.conv1.bias"), &s.conv1.bias));
            out.push((format!("stream{i}.conv2.weights"), &s.conv2.weights));
            out.push((format!("stream{i}.conv2.bias"), &s.conv2.bias));
        }
        for (name, p) in [("fc1", &self.fc1), ("fc2", &self.fc2), ("out", &self.out)] {
            out.push((format!("{name}.weights"), &p.weights));
            out.push((format!("{name}.bias"), &p.bias));
        }
        out
    }
}

impl Parameterized for OffApexNet {
    fn parameters(&self) -> Vec<&Tensor> {
        self.named_parameters().into_iter().map(|(_, t)| t).collect()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        for s in &mut self.streams {
            out.extend([
                &mut s.conv1.weights,
                &mut s.conv1.bias,
                &mut s.conv2.weights,
                &mut s.conv2.bias,
            ]);
        }
        for p in [&mut self.fc1, &mut self.fc2, &mut self.out] {
            out.extend([&mut p.weights, &mut p.bias]);
        }
        out
    }
}

impl Differentiable for OffApexNet {
    type Input = [Tensor];

    fn loss(&self, input: &[Tensor], label: usize) -> Result<f64> {
        let (logits, _) = self.forward(input)?;
        crate::numerics::softmax_xent(&logits, label).map(|(l, _)| l)
    }

    fn loss_and_gradient(&self, input: &[Tensor], label: usize) -> Result<(f64, Vec<Tensor>)> {
        let acts = self.forward_batch(&[input])?;
        let (loss, mut probs) = crate::numerics::softmax_xent(&acts.logits, label)?;
        probs[label] -= 1.0;
        Ok((loss, self.backward_batch(&acts, &probs)?))
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(net: &OffApexNet, inputs: &[Tensor]) -> Result<usize> {
    Ok(argmax(&net.forward(inputs)?.0))
}

/// Penultimate activations, one row per sample, in input order.
pub fn extract_features(net: &OffApexNet, samples: &[Sample]) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(32) {
        let batch: Vec<&[Tensor]> = chunk.iter().map(|s| s.inputs.as_slice()).collect();
        let acts = net.forward_batch(&batch)?;
        rows.extend(acts.h2.chunks_exact(HIDDEN).map(<[f64]>::to_vec));
    }
    Ok(rows)
}
