use std::io::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{argmax, OffApexNet};
use crate::error::{Error, Result};
use crate::imaging::NUM_CLASSES;
use crate::numerics::{adam_step, softmax_xent, AdamConfig, OptimState, Parameterized, Tensor};
use crate::rng::{derive_seed, seeded};

/// One training example: a 28×28×1 tensor per stream and a class id.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Tensor>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Epochs after which the checkpoint callback fires; 0 means before
    /// the first update.
    pub checkpoints: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 600,
            learning_rate: 1e-4,
            batch_size: 32,
            seed: 0,
            checkpoints: vec![100, 300, 600, 1000, 2000, 3000, 4000, 5000],
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid(format!("bad learning rate {}", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

/// Mini-batch Adam on mean softmax cross-entropy. Loss and accuracy per
/// epoch are measured on the forward passes that precede each update.
/// `on_checkpoint` is called with `(epoch, &net)` for every epoch listed in
/// the config (epochs beyond `config.epochs` are ignored).
pub fn train(
    net: &mut OffApexNet,
    data: &[Sample],
    config: &TrainConfig,
    on_checkpoint: &mut dyn FnMut(usize, &OffApexNet) -> Result<()>,
) -> Result<TrainTrace> {
    config.validate()?;
    let mut counts = [0usize; NUM_CLASSES];
    for s in data {
        if s.label >= NUM_CLASSES {
            return Err(Error::invalid(format!("label {} out of range", s.label)));
        }
        counts[s.label] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("no training samples for class {c}")));
    }
    let mut state = OptimState::new(AdamConfig::with_learning_rate(config.learning_rate), &net.parameters());
    if config.checkpoints.contains(&0) {
        on_checkpoint(0, net)?;
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut losses = vec![0.0; data.len()];
    let mut correct = vec![false; data.len()];
    let mut trace = TrainTrace::default();
    for epoch in 1..=config.epochs {
        order.sort_unstable();
        order.shuffle(&mut seeded(derive_seed(config.seed, epoch as u64)));
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[Tensor]> = chunk.iter().map(|&i| data[i].inputs.as_slice()).collect();
            let acts = net.forward_batch(&batch)?;
            let scale = 1.0 / chunk.len() as f64;
            let mut grad = Vec::with_capacity(acts.logits.len());
            for (k, &i) in chunk.iter().enumerate() {
                let logits = &acts.logits[k * NUM_CLASSES..(k + 1) * NUM_CLASSES];
                let (loss, mut probs) = softmax_xent(logits, data[i].label)?;
                if !loss.is_finite() {
                    return Err(Error::Diverged(format!("epoch {epoch}: loss is {loss}")));
                }
                losses[i] = loss;
                correct[i] = argmax(logits) == data[i].label;
                probs[data[i].label] -= 1.0;
                grad.extend(probs.iter().map(|g| g * scale));
            }
            let grads = net.backward_batch(&acts, &grad)?;
            adam_step(&mut net.parameters_mut(), &grads, &mut state)
                .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
        }
        let n = data.len() as f64;
        trace.epochs.push(EpochStats {
            epoch,
            loss: losses.iter().sum::<f64>() / n,
            train_acc: correct.iter().filter(|c| **c).count() as f64 / n,
        });
        if config.checkpoints.contains(&epoch) {
            on_checkpoint(epoch, net)?;
        }
    }
    Ok(trace)
}

/// Writes `epoch,loss,train_acc` rows.
pub fn write_trace_csv(trace: &TrainTrace, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "epoch,loss,train_acc").unwrap();
    for e in &trace.epochs {
        writeln!(buf, "{},{},{}", e.epoch, e.loss, e.train_acc).unwrap();
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cnn::{build_network, Fusion, StreamSpec};
    use crate::derivatives::Channel;

    fn toy(n: usize) -> Vec<Sample> {
        (0..n)
            .map(|i| {
                let label = i % 3;
                let x = Tensor::from_fn(&[28, 28, 1], |j| {
                    let (r, c) = (j / 28, j % 28);
                    let band = match label {
                        0 => r < 9,
                        1 => (9..19).contains(&r),
                        _ => c >= 19,
                    };
                    f64::from(u8::from(band)) + 0.05 * (((i * 31 + j * 7) % 13) as f64 / 13.0 - 0.5)
                });
                Sample { inputs: vec![x], label }
            })
            .collect()
    }

    fn single() -> StreamSpec {
        StreamSpec::new(&[Channel::P], Fusion::Concat)
    }

    #[test]
    fn zero_learning_rate_is_inert() {
        let data = toy(9);
        let mut net = build_network(&single(), 4).unwrap();
        let before = net.clone();
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 0.0,
            batch_size: 4,
            seed: 1,
            checkpoints: vec![],
        };
        let trace = train(&mut net, &data, &cfg, &mut |_, _| Ok(())).unwrap();
        assert_eq!(net, before);
        assert!(trace.epochs.iter().all(|e| e.loss == trace.epochs[0].loss));
    }

    #[test]
    fn same_seed_same_trace() {
        let data = toy(9);
        let cfg = TrainConfig {
            epochs: 3,
            learning_rate: 1e-3,
            batch_size: 4,
            seed: 7,
            checkpoints: vec![0, 2],
        };
        let run = || {
            let mut net = build_network(&single(), 5).unwrap();
            let mut seen = Vec::new();
            let t = train(&mut net, &data, &cfg, &mut |e, _| {
                seen.push(e);
                Ok(())
            })
            .unwrap();
            (t, seen, net)
        };
        let (a, seen, na) = run();
        let (b, _, nb) = run();
        assert_eq!(seen, [0, 2]);
        assert_eq!(na, nb);
        let bits = |t: &TrainTrace| t.epochs.iter().map(|e| e.loss.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn missing_class_rejected() {
        let data: Vec<Sample> = toy(6).into_iter().filter(|s| s.label != 2).collect();
        let mut net = build_network(&single(), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 1,
            ..Default::default()
        };
        assert!(train(&mut net, &data, &cfg, &mut |_, _| Ok(())).is_err());
    }

    #[test]
    fn zero_epochs_rejected() {
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
