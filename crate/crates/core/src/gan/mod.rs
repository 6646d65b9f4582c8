//! Conditional adversarial training with auxiliary-classifier objectives.
//!
//! `L_S = E[log P(S=real|X_real)] + E[log P(S=fake|X_fake)]` and
//! `L_C = E[log P(C=c|X_real)] + E[log P(C=c|X_fake)]`. The discriminator
//! minimizes `-(L_S + L_C)`; the generator minimizes `L_S - L_C`.

pub mod augment;
pub mod nets;

use std::io::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use augment::{balance_dataset, fake_counts, generate_items, read_fake_dump, write_fake_dump, TrainingItem};
pub use nets::{DiscOutput, Discriminator, Generator};

use crate::error::{Error, Result};
use crate::imaging::NUM_CLASSES;
use crate::numerics::snapshot::{fill_slots, load_tensor_set, save_tensor_set};
use crate::numerics::{adam_step, softmax, AdamConfig, OptimState, Parameterized, Tensor};
use crate::rng::{derive_seed_str, seeded, Rng};

/// Probabilities are clamped into `[PROB_CLAMP, 1 - PROB_CLAMP]` before logs.
pub const PROB_CLAMP: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GanConfig {
    pub noise_dim: usize,
    /// Discriminator steps, and generator steps, per outer iteration.
    pub k: usize,
    /// Outer iterations.
    pub iterations: usize,
    pub batch_size: usize,
    pub lr_generator: f64,
    pub lr_discriminator: f64,
    pub seed: u64,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            noise_dim: 100,
            k: 1,
            iterations: 2000,
            batch_size: 32,
            lr_generator: 2e-4,
            lr_discriminator: 2e-4,
            seed: 0,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 1 || self.batch_size < 2 || self.noise_dim < 1 {
            return Err(Error::invalid(format!(
                "gan needs k >= 1, batch_size >= 2, noise_dim >= 1 (got {}, {}, {})",
                self.k, self.batch_size, self.noise_dim
            )));
        }
        for lr in [self.lr_generator, self.lr_discriminator] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::invalid(format!("bad learning rate {lr}")));
            }
        }
        Ok(())
    }

    fn adam(lr: f64) -> AdamConfig {
        AdamConfig {
            beta1: 0.5,
            ..AdamConfig::with_learning_rate(lr)
        }
    }
}

fn clamped(p: f64) -> (f64, bool) {
    let c = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    (c, c != p)
}

/// `log P(S = real)` or `log P(S = fake)` for one source logit, with its
/// derivative by the logit (zero where the clamp is active).
fn source_term(logit: f64, real: bool) -> (f64, f64) {
    let s = crate::numerics::activation::sigmoid(logit);
    let (p, d) = if real { (s, 1.0 - s) } else { (1.0 - s, -s) };
    let (pc, hit) = clamped(p);
    (pc.ln(), if hit { 0.0 } else { d })
}

/// `log P(C = c)` and its gradient by the class logits.
fn class_term(logits: &[f64], c: usize) -> (f64, Vec<f64>) {
    let probs = softmax(logits);
    let (pc, hit) = clamped(probs[c]);
    let grad = if hit {
        vec![0.0; logits.len()]
    } else {
        probs
            .iter()
            .enumerate()
            .map(|(k, p)| if k == c { 1.0 - p } else { -p })
            .collect()
    };
    (pc.ln(), grad)
}

fn check_labels(out: &DiscOutput, labels: &[usize]) -> Result<()> {
    if out.is_empty() || out.len() != labels.len() || out.class_logits.len() != labels.len() * NUM_CLASSES {
        return Err(Error::shape("acgan batch", &[labels.len()], &[out.len()]));
    }
    if let Some(c) = labels.iter().find(|&&c| c >= NUM_CLASSES) {
        return Err(Error::invalid(format!("class {c} out of range")));
    }
    Ok(())
}

/// Per-batch contributions `(Σ log-source, Σ log-class)` with gradients
/// scaled by `weight`.
fn batch_terms(out: &DiscOutput, labels: &[usize], real: bool, weight: f64) -> (f64, f64, Vec<f64>, Vec<f64>) {
    let mut ls = 0.0;
    let mut lc = 0.0;
    let mut gs = Vec::with_capacity(labels.len());
    let mut gc = Vec::with_capacity(labels.len() * NUM_CLASSES);
    for (i, &c) in labels.iter().enumerate() {
        let (v, d) = source_term(out.source_logits[i], real);
        ls += v;
        gs.push(d * weight);
        let (v, g) = class_term(&out.class_logits[i * NUM_CLASSES..(i + 1) * NUM_CLASSES], c);
        lc += v;
        gc.extend(g.iter().map(|x| x * weight));
    }
    (ls, lc, gs, gc)
}

/// `(L_S, L_C)` for a real batch and a fake batch.
pub fn acgan_losses(
    real: &DiscOutput,
    fake: &DiscOutput,
    real_labels: &[usize],
    fake_labels: &[usize],
) -> Result<(f64, f64)> {
    check_labels(real, real_labels)?;
    check_labels(fake, fake_labels)?;
    let (rs, rc, _, _) = batch_terms(real, real_labels, true, 0.0);
    let (fs, fc, _, _) = batch_terms(fake, fake_labels, false, 0.0);
    let (nr, nf) = (real_labels.len() as f64, fake_labels.len() as f64);
    Ok((rs / nr + fs / nf, rc / nr + fc / nf))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GanTraceRow {
    pub iteration: usize,
    pub loss_source: f64,
    pub loss_class: f64,
    pub real_score: f64,
    pub fake_score: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GanTrace {
    pub rows: Vec<GanTraceRow>,
    pub discriminator_updates: usize,
    pub generator_updates: usize,
}

impl GanTrace {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        writeln!(buf, "iteration,loss_source,loss_class,real_score,fake_score").unwrap();
        for r in &self.rows {
            writeln!(
                buf,
                "{},{},{},{},{}",
                r.iteration, r.loss_source, r.loss_class, r.real_score, r.fake_score
            )
            .unwrap();
        }
        std::fs::write(path, buf).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct GanOutcome {
    pub generator: Generator,
    pub discriminator: Discriminator,
    pub trace: GanTrace,
}

fn draw_noise(rng: &mut Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

/// Fixed real subset and fixed noise on which every trace row is measured,
/// so traces reflect parameter changes only.
struct Monitor {
    real: Vec<usize>,
    noise: Vec<Vec<f64>>,
    classes: Vec<usize>,
}

fn measure(
    gen: &Generator,
    disc: &Discriminator,
    data: &[(Tensor, usize)],
    mon: &Monitor,
    iteration: usize,
) -> Result<GanTraceRow> {
    let real_imgs: Vec<&Tensor> = mon.real.iter().map(|&i| &data[i].0).collect();
    let real_labels: Vec<usize> = mon.real.iter().map(|&i| data[i].1).collect();
    let fakes = gen.generate(&mon.noise, &mon.classes)?;
    let real_out = disc.forward(&real_imgs)?;
    let fake_out = disc.forward(&fakes.iter().collect::<Vec<_>>())?;
    let (ls, lc) = acgan_losses(&real_out, &fake_out, &real_labels, &mon.classes)?;
    if !ls.is_finite() || !lc.is_finite() {
        return Err(Error::Diverged(format!("gan iteration {iteration}: non-finite loss")));
    }
    let mean = |v: Vec<f64>| v.iter().sum::<f64>() / v.len() as f64;
    Ok(GanTraceRow {
        iteration,
        loss_source: ls,
        loss_class: lc,
        real_score: mean(real_out.source_scores()),
        fake_score: mean(fake_out.source_scores()),
    })
}

/// `-(L_S + L_C)` and its gradient by the discriminator parameters.
pub(crate) fn discriminator_objective(
    disc: &Discriminator,
    real: &[&Tensor],
    real_labels: &[usize],
    fakes: &[Tensor],
    fake_labels: &[usize],
) -> Result<(f64, Vec<Tensor>)> {
    let (real_out, real_cache) = disc.forward_cached(real)?;
    let (fake_out, fake_cache) = disc.forward_cached(&fakes.iter().collect::<Vec<_>>())?;
    check_labels(&real_out, real_labels)?;
    check_labels(&fake_out, fake_labels)?;
    let wr = 1.0 / real.len() as f64;
    let wf = 1.0 / fakes.len() as f64;
    let (rs, rc, gs, gc) = batch_terms(&real_out, real_labels, true, -wr);
    let (mut grads, _) = disc.backward(&real_cache, &gs, &gc)?;
    let (fs, fc, gs, gc) = batch_terms(&fake_out, fake_labels, false, -wf);
    let (fake_grads, _) = disc.backward(&fake_cache, &gs, &gc)?;
    for (a, b) in grads.iter_mut().zip(&fake_grads) {
        a.add_assign(b)?;
    }
    Ok((-((rs + rc) * wr + (fs + fc) * wf), grads))
}

/// The fake-batch part of `L_S - L_C` and its gradient by the generator
/// parameters; the discriminator is held fixed.
pub(crate) fn generator_objective(
    gen: &Generator,
    disc: &Discriminator,
    noise: &[Vec<f64>],
    classes: &[usize],
) -> Result<(f64, Vec<Tensor>)> {
    let (fakes, g_cache) = gen.forward_cached(noise, classes)?;
    let (fake_out, d_cache) = disc.forward_cached(&fakes.iter().collect::<Vec<_>>())?;
    let w = 1.0 / classes.len() as f64;
    let (fs, fc, gs, gc) = batch_terms(&fake_out, classes, false, w);
    let gc: Vec<f64> = gc.iter().map(|g| -g).collect();
    let (_, gimg) = disc.backward(&d_cache, &gs, &gc)?;
    Ok(((fs - fc) * w, gen.backward(&g_cache, &gimg)?))
}

/// Alternating updates: per outer iteration, `k` discriminator steps on
/// `m` real and `m` generated images, then `k` generator steps. Row 0 of
/// the trace is measured before training, row `i` after iteration `i`.
pub fn train_gan(data: &[(Tensor, usize)], config: &GanConfig) -> Result<GanOutcome> {
    config.validate()?;
    let m = config.batch_size;
    if data.len() < m {
        return Err(Error::invalid(format!(
            "gan needs at least {m} real samples, got {}",
            data.len()
        )));
    }
    for (i, (img, c)) in data.iter().enumerate() {
        if img.shape() != [28, 28, 1] {
            return Err(Error::shape(format!("gan sample {i}"), &[28, 28, 1], img.shape()));
        }
        if img.data().iter().any(|v| !(-1.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("gan sample {i} is not normalized to [-1, 1]")));
        }
        if *c >= NUM_CLASSES {
            return Err(Error::invalid(format!("gan sample {i}: class {c} out of range")));
        }
    }
    let mut gen = Generator::new(config.noise_dim, derive_seed_str(config.seed, "generator"));
    let mut disc = Discriminator::new(derive_seed_str(config.seed, "discriminator"));
    let mut g_state = OptimState::new(GanConfig::adam(config.lr_generator), &gen.parameters());
    let mut d_state = OptimState::new(GanConfig::adam(config.lr_discriminator), &disc.parameters());
    let mut rng = seeded(derive_seed_str(config.seed, "batches"));
    let mon = {
        let mut r = seeded(derive_seed_str(config.seed, "monitor"));
        Monitor {
            real: rand::seq::index::sample(&mut r, data.len(), m).into_vec(),
            noise: draw_noise(&mut r, m, config.noise_dim),
            classes: (0..m).map(|i| i % NUM_CLASSES).collect(),
        }
    };
    let mut trace = GanTrace::default();
    trace.rows.push(measure(&gen, &disc, data, &mon, 0)?);
    for it in 1..=config.iterations {
        let diverged = |e: Error| Error::Diverged(format!("gan iteration {it}: {e}"));
        for _ in 0..config.k {
            let idx = rand::seq::index::sample(&mut rng, data.len(), m).into_vec();
            let real_imgs: Vec<&Tensor> = idx.iter().map(|&i| &data[i].0).collect();
            let real_labels: Vec<usize> = idx.iter().map(|&i| data[i].1).collect();
            let noise = draw_noise(&mut rng, m, config.noise_dim);
            let classes: Vec<usize> = (0..m).map(|_| rng.gen_range(0..NUM_CLASSES)).collect();
            let fakes = gen.generate(&noise, &classes)?;
            let (_, grads) = discriminator_objective(&disc, &real_imgs, &real_labels, &fakes, &classes)?;
            adam_step(&mut disc.parameters_mut(), &grads, &mut d_state).map_err(diverged)?;
            trace.discriminator_updates += 1;
        }
        for _ in 0..config.k {
            let noise = draw_noise(&mut rng, m, config.noise_dim);
            let classes: Vec<usize> = (0..m).map(|_| rng.gen_range(0..NUM_CLASSES)).collect();
            let (_, grads) = generator_objective(&gen, &disc, &noise, &classes)?;
            adam_step(&mut gen.parameters_mut(), &grads, &mut g_state).map_err(diverged)?;
            trace.generator_updates += 1;
        }
        trace.rows.push(measure(&gen, &disc, data, &mon, it)?);
    }
    Ok(GanOutcome {
        generator: gen,
        discriminator: disc,
        trace,
    })
}

/// `n` images of class `c` from `n` independent standard-normal draws.
pub fn generate_samples(gen: &Generator, class: usize, n: usize, seed: u64) -> Result<Vec<Tensor>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let noise = draw_noise(&mut seeded(seed), n, gen.noise_dim);
    gen.generate(&noise, &vec![class; n])
}

#[derive(Serialize, Deserialize)]
struct GenMeta {
    noise_dim: usize,
}

pub fn save_generator(gen: &Generator, dir: &Path) -> Result<()> {
    save_tensor_set(
        dir,
        &GenMeta {
            noise_dim: gen.noise_dim,
        },
        &gen.named_parameters(),
    )
}

pub fn load_generator(dir: &Path) -> Result<Generator> {
    let (meta, loaded): (GenMeta, _) = load_tensor_set(dir)?;
    let mut gen = Generator::new(meta.noise_dim, 0);
    let names: Vec<String> = gen.named_parameters().into_iter().map(|(n, _)| n).collect();
    fill_slots(loaded, names.into_iter().zip(gen.parameters_mut()).collect())?;
    Ok(gen)
}

pub fn save_discriminator(disc: &Discriminator, dir: &Path) -> Result<()> {
    save_tensor_set(dir, &(), &disc.named_parameters())
}

pub fn load_discriminator(dir: &Path) -> Result<Discriminator> {
    let ((), loaded) = load_tensor_set(dir)?;
    let mut disc = Discriminator::new(0);
    let names: Vec<String> = disc.named_parameters().into_iter().map(|(n, _)| n).collect();
    fill_slots(loaded, names.into_iter().zip(disc.parameters_mut()).collect())?;
    Ok(disc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn out(logits: &[f64], classes: &[[f64; 3]]) -> DiscOutput {
        DiscOutput {
            source_logits: logits.to_vec(),
            class_logits: classes.iter().flatten().copied().collect(),
        }
    }

    #[test]
    fn uninformative_discriminator_closed_forms() {
        let o = out(&[0.0; 4], &[[0.0; 3]; 4]);
        let (ls, lc) = acgan_losses(&o, &o, &[0, 1, 2, 0], &[2, 2, 1, 0]).unwrap();
        assert!((ls - 2.0 * 0.5f64.ln()).abs() < 1e-9);
        assert!((lc - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-9);
    }

    #[test]
    fn perfect_discriminator_near_zero() {
        let real = out(&[40.0, 40.0], &[[40.0, 0.0, 0.0], [0.0, 40.0, 0.0]]);
        let fake = out(&[-40.0, -40.0], &[[0.0, 0.0, 40.0], [40.0, 0.0, 0.0]]);
        let (ls, lc) = acgan_losses(&real, &fake, &[0, 1], &[2, 0]).unwrap();
        for v in [ls, lc] {
            assert!(v <= 0.0 && v > -1e-6, "{v}");
        }
    }

    #[test]
    fn clamp_bounds_logs() {
        let real = out(&[-1e4], &[[-1e4, 0.0, 0.0]]);
        let (ls, lc) = acgan_losses(&real, &real, &[0], &[0]).unwrap();
        assert!(ls.is_finite() && lc.is_finite());
        assert!(ls >= 2.0 * PROB_CLAMP.ln() - 1e-12);
    }

    #[test]
    fn source_gradient_matches_difference() {
        for &(a, real) in &[(0.3, true), (-1.2, false), (2.0, true)] {
            let (_, d) = source_term(a, real);
            let h = 1e-6;
            let num = (source_term(a + h, real).0 - source_term(a - h, real).0) / (2.0 * h);
            assert!((d - num).abs() < 1e-8);
        }
    }

    fn fd_check<N: Parameterized>(net: &mut N, grads: &[Tensor], f: impl Fn(&N) -> f64) {
        let h = 1e-5;
        for (t, g) in grads.iter().enumerate() {
            for idx in [0, g.len() / 2, g.len() - 1] {
                let orig = net.parameters()[t].data()[idx];
                net.parameters_mut()[t].data_mut()[idx] = orig + h;
                let up = f(net);
                net.parameters_mut()[t].data_mut()[idx] = orig - h;
                let down = f(net);
                net.parameters_mut()[t].data_mut()[idx] = orig;
                let num = (up - down) / (2.0 * h);
                let an = g.data()[idx];
                let rel = (an - num).abs() / an.abs().max(num.abs()).max(1e-7);
                assert!(rel < 1e-4, "tensor {t} idx {idx}: {an} vs {num}");
            }
        }
    }

    // Zero biases put dead regions exactly on activation kinks.
    fn jitter_biases<N: Parameterized>(net: &mut N) {
        for (t, p) in net.parameters_mut().into_iter().enumerate() {
            if p.rank() == 1 {
                for (i, v) in p.data_mut().iter_mut().enumerate() {
                    *v = 0.05 * (((i * 37 + t * 11) % 23) as f64 / 11.0 - 1.0);
                }
            }
        }
    }

    fn batch() -> (Vec<Tensor>, Vec<usize>, Vec<Vec<f64>>, Vec<usize>) {
        let real: Vec<Tensor> = (0..3)
            .map(|k| Tensor::from_fn(&[28, 28, 1], |i| (((i * (k + 3)) % 19) as f64 / 9.5 - 1.0) * 0.9))
            .collect();
        let noise: Vec<Vec<f64>> = (0..3)
            .map(|k| (0..6).map(|i| ((i + k) as f64 * 0.7).sin()).collect())
            .collect();
        (real, vec![0, 1, 2], noise, vec![2, 0, 1])
    }

    #[test]
    fn discriminator_gradient_matches_differences() {
        let (real, rl, noise, fl) = batch();
        let mut gen = Generator::new(6, 3);
        jitter_biases(&mut gen);
        let fakes = gen.generate(&noise, &fl).unwrap();
        let mut disc = Discriminator::new(4);
        jitter_biases(&mut disc);
        let rr: Vec<&Tensor> = real.iter().collect();
        let (_, grads) = discriminator_objective(&disc, &rr, &rl, &fakes, &fl).unwrap();
        fd_check(&mut disc, &grads, |d| {
            discriminator_objective(d, &rr, &rl, &fakes, &fl).unwrap().0
        });
    }

    #[test]
    fn generator_gradient_matches_differences() {
        let (_, _, noise, fl) = batch();
        let mut gen = Generator::new(6, 5);
        let mut disc = Discriminator::new(6);
        jitter_biases(&mut gen);
        jitter_biases(&mut disc);
        let (_, grads) = generator_objective(&gen, &disc, &noise, &fl).unwrap();
        fd_check(&mut gen, &grads, |g| {
            generator_objective(g, &disc, &noise, &fl).unwrap().0
        });
    }

    #[test]
    fn config_validation() {
        assert!(GanConfig {
            k: 0,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GanConfig {
            batch_size: 1,
            ..Default::default()
        }
        .validate()
        .is_err());
        assert!(GanConfig::default().validate().is_ok());
    }

    #[test]
    fn generate_samples_is_seeded() {
        let g = Generator::new(8, 1);
        assert!(generate_samples(&g, 0, 0, 5).unwrap().is_empty());
        let a = generate_samples(&g, 1, 3, 5).unwrap();
        assert_eq!(a, generate_samples(&g, 1, 3, 5).unwrap());
        assert_ne!(a[0], a[1]);
        assert!(a.iter().flat_map(|t| t.data()).all(|v| (-1.0..=1.0).contains(v)));
    }
}
