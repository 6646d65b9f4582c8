use mexflow::cnn::{
    build_network, extract_features, load_checkpoint, predict, save_checkpoint, train, Fusion, OffApexNet, Sample,
    StreamSpec, TrainConfig,
};
use mexflow::derivatives::Channel;
use mexflow::numerics::{grad_check, LayerParams, Tensor};

fn image(seed: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
    Tensor::from_fn(&[28, 28, 1], |j| {
        let (r, c) = (j / 28, j % 28);
        f(r, c) + 0.1 * ((((seed * 7919 + j * 104_729) % 1000) as f64) / 1000.0 - 0.5)
    })
}

// Direct-loop reference: 5×5 same conv, ReLU, 2×2 max pool, HWC flatten.
fn naive_conv(x: &[f64], h: usize, w: usize, cin: usize, p: &LayerParams) -> Vec<f64> {
    let cout = p.bias.len();
    let wt = p.weights.data();
    let mut out = vec![0.0; h * w * cout];
    for y in 0..h {
        for xx in 0..w {
            for co in 0..cout {
                let mut s = p.bias.data()[co];
                for ky in 0..5 {
                    for kx in 0..5 {
                        let (iy, ix) = (y as isize + ky as isize - 2, xx as isize + kx as isize - 2);
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..cin {
                            let v = x[(iy as usize * w + ix as usize) * cin + ci];
                            s += v * wt[((ky * 5 + kx) * cin + ci) * cout + co];
                        }
                    }
                }
                out[(y * w + xx) * cout + co] = s.max(0.0);
            }
        }
    }
    out
}

fn naive_pool(x: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; (h / 2) * (w / 2) * c];
    for y in 0..h {
        for xx in 0..w {
            for ch in 0..c {
                let o = &mut out[((y / 2) * (w / 2) + xx / 2) * c + ch];
                *o = o.max(x[(y * w + xx) * c + ch]);
            }
        }
    }
    out
}

fn naive_dense(x: &[f64], p: &LayerParams, relu: bool) -> Vec<f64> {
    let n_in = x.len();
    (0..p.bias.len())
        .map(|o| {
            let s = p.bias.data()[o] + (0..n_in).map(|i| p.weights.data()[o * n_in + i] * x[i]).sum::<f64>();
            if relu {
                s.max(0.0)
            } else {
                s
            }
        })
        .collect()
}

fn naive_two_stream(net: &OffApexNet, p: &Tensor, q: &Tensor) -> Vec<f64> {
    let mut fused = Vec::new();
    for (layers, x) in net.streams.iter().zip([p, q]) {
        let a = naive_pool(&naive_conv(x.data(), 28, 28, 1, &layers.conv1), 28, 28, 6);
        let b = naive_pool(&naive_conv(&a, 14, 14, 6, &layers.conv2), 14, 14, 16);
        fused.extend(b);
    }
    let h1 = naive_dense(&fused, &net.fc1, true);
    let h2 = naive_dense(&h1, &net.fc2, true);
    naive_dense(&h2, &net.out, false)
}

#[test]
fn two_stream_concat_matches_direct_loop_reference() {
    let mut net = build_network(&StreamSpec::original(), 21).unwrap();
    // nonzero biases so every bias path is exercised
    for (i, v) in net.fc1.bias.data_mut().iter_mut().enumerate() {
        *v = ((i % 5) as f64 - 2.0) * 0.01;
    }
    net.streams[1].conv2.bias = Tensor::from_fn(&[16], |i| 0.02 * i as f64 - 0.1);
    let p = image(1, |r, c| ((r as f64) / 5.0).sin() * (c as f64 / 9.0).cos());
    let q = image(2, |r, c| (r * c) as f64 / 784.0 - 0.3);
    let (logits, _) = net.forward(&[p.clone(), q.clone()]).unwrap();
    let oracle = naive_two_stream(&net, &p, &q);
    for (a, b) in logits.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn full_network_gradient_check() {
    for (spec, seed) in [
        (StreamSpec::original(), 3u64),
        (
            StreamSpec::new(&[Channel::P, Channel::Q, Channel::EpsMag], Fusion::Multiply),
            4,
        ),
    ] {
        let mut net = build_network(&spec, seed).unwrap();
        let inputs: Vec<Tensor> = (0..spec.streams())
            .map(|s| image(s + 10, |r, c| ((r + 2 * c + 3 * s) % 11) as f64 / 5.0 - 1.0))
            .collect();
        let report = grad_check(&mut net, inputs.as_slice(), 2, 1e-5, 300, seed).unwrap();
        assert!(report.max_relative_error < 1e-4, "{}: {report:?}", spec.label());
    }
}

fn toy_set(streams: usize) -> Vec<Sample> {
    (0..30)
        .map(|i| {
            let label = i % 3;
            let inputs = (0..streams)
                .map(|s| {
                    image(i * 3 + s, |r, c| {
                        let on = match label {
                            0 => r < 10,
                            1 => c < 10,
                            _ => r + c > 34,
                        };
                        if on {
                            0.8
                        } else {
                            -0.2
                        }
                    })
                })
                .collect();
            Sample { inputs, label }
        })
        .collect()
}

#[test]
fn toy_set_overfits_and_loss_trends_down() {
    let data = toy_set(2);
    let mut net = build_network(&StreamSpec::original(), 8).unwrap();
    let cfg = TrainConfig {
        epochs: 500,
        checkpoints: vec![],
        seed: 8,
        ..Default::default()
    };
    let trace = train(&mut net, &data, &cfg, &mut |_, _| Ok(())).unwrap();
    let reached = trace.epochs.iter().position(|e| e.train_acc == 1.0);
    assert!(reached.is_some(), "never reached 100%");
    let correct = data
        .iter()
        .filter(|s| predict(&net, &s.inputs).unwrap() == s.label)
        .count();
    assert_eq!(correct, 30);
    let losses: Vec<f64> = trace.epochs.iter().map(|e| e.loss).collect();
    let ma: Vec<f64> = losses.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
    for w in ma.windows(2) {
        assert!(w[1] <= w[0], "moving average rose: {} -> {}", w[0], w[1]);
    }
}

#[test]
fn symmetric_output_layer_ties_to_class_zero() {
    let mut net = build_network(&StreamSpec::original(), 9).unwrap();
    let row: Vec<f64> = net.out.weights.data()[..1024].to_vec();
    for k in 1..3 {
        net.out.weights.data_mut()[k * 1024..(k + 1) * 1024].copy_from_slice(&row);
    }
    net.out.bias = Tensor::filled(&[3], 0.25);
    let x = image(0, |r, c| if (r + c) % 2 == 0 { 1.0 } else { 0.0 });
    let (logits, _) = net.forward(&[x.clone(), x.clone()]).unwrap();
    assert_eq!(logits[0], logits[1]);
    assert_eq!(logits[1], logits[2]);
    assert_eq!(predict(&net, &[x.clone(), x]).unwrap(), 0);
}

#[test]
fn checkpointed_predictions_match_recomputation() {
    let data = toy_set(2);
    let mut net = build_network(&StreamSpec::original(), 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        epochs: 4,
        learning_rate: 1e-3,
        checkpoints: vec![4],
        seed: 3,
        ..Default::default()
    };
    let path = dir.path().join("e4");
    train(&mut net, &data, &cfg, &mut |_, n| save_checkpoint(n, &path)).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    for s in &data {
        let a = naive_two_stream(&loaded, &s.inputs[0], &s.inputs[1]);
        let best = (0..3).fold(0, |m, i| if a[i] > a[m] { i } else { m });
        assert_eq!(predict(&net, &s.inputs).unwrap(), best);
        assert_eq!(net.forward(&s.inputs).unwrap(), loaded.forward(&s.inputs).unwrap());
    }
}

#[test]
fn feature_rows_follow_input_order() {
    let data = toy_set(1);
    let net = build_network(&StreamSpec::new(&[Channel::Rho], Fusion::Concat), 2).unwrap();
    let one = extract_features(&net, &data[..1]).unwrap();
    assert_eq!(one.len(), 1);
    assert_eq!(one[0].len(), 1024);
    let all = extract_features(&net, &data).unwrap();
    assert_eq!(all.len(), 30);
    for (i, s) in data.iter().enumerate() {
        assert_eq!(all[i], net.forward(&s.inputs).unwrap().1);
    }
}
