//! Class balancing with generated samples, and fake-sample dumps.

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use super::{generate_samples, Generator};
use crate::derivatives::Channel;
use crate::error::{Error, Result};
use crate::imaging::{load_pgm, save_pgm, GrayImage, NUM_CLASSES};
use crate::numerics::Tensor;
use crate::rng::derive_seed_str;

/// A training sample: one 28×28×1 image per selected channel.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingItem {
    pub id: String,
    pub label: usize,
    pub channels: Vec<Tensor>,
    /// True for generated samples; these must never reach a test fold.
    pub synthetic: bool,
}

/// Fakes per class needed to lift every class to the largest class count.
pub fn fake_counts(counts: [usize; NUM_CLASSES]) -> [usize; NUM_CLASSES] {
    let max = counts.iter().copied().max().unwrap_or(0);
    counts.map(|c| max - c)
}

fn seed_label(seed_channel: Channel, class: usize) -> String {
    format!("{seed_channel}/{class}")
}

/// Real items followed by generated ones, so every class reaches the
/// largest real class count. Channel `j` of each fake comes from the
/// generator registered for `channels[j]`.
pub fn balance_dataset(
    real: &[TrainingItem],
    channels: &[Channel],
    generators: &BTreeMap<Channel, Generator>,
    seed: u64,
) -> Result<Vec<TrainingItem>> {
    let mut counts = [0usize; NUM_CLASSES];
    for item in real {
        if item.label >= NUM_CLASSES {
            return Err(Error::invalid(format!(
                "{}: class {} out of range",
                item.id, item.label
            )));
        }
        if item.channels.len() != channels.len() {
            return Err(Error::shape(
                format!("{} channels", item.id),
                &[channels.len()],
                &[item.channels.len()],
            ));
        }
        counts[item.label] += 1;
    }
    let need = fake_counts(counts);
    let mut out = real.to_vec();
    out.extend(generate_items(channels, generators, need, seed)?);
    Ok(out)
}

/// `counts[c]` generated items of each class `c`, ids `fake_c<c>_<k>`.
pub fn generate_items(
    channels: &[Channel],
    generators: &BTreeMap<Channel, Generator>,
    counts: [usize; NUM_CLASSES],
    seed: u64,
) -> Result<Vec<TrainingItem>> {
    let mut out = Vec::new();
    if counts.iter().all(|&n| n == 0) {
        return Ok(out);
    }
    for ch in channels {
        if !generators.contains_key(ch) {
            return Err(Error::invalid(format!("no generator for channel {ch}")));
        }
    }
    for (class, &n) in counts.iter().enumerate() {
        let per_channel = channels
            .iter()
            .map(|ch| {
                generate_samples(
                    &generators[ch],
                    class,
                    n,
                    derive_seed_str(seed, &seed_label(*ch, class)),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        for k in 0..n {
            out.push(TrainingItem {
                id: format!("fake_c{class}_{k:04}"),
                label: class,
                channels: per_channel.iter().map(|imgs| imgs[k].clone()).collect(),
                synthetic: true,
            });
        }
    }
    Ok(out)
}

fn to_gray(t: &Tensor) -> Result<GrayImage> {
    let px = t.data().iter().map(|v| ((v + 1.0) / 2.0).clamp(0.0, 1.0)).collect();
    let (h, w, _) = t.hwc()?;
    GrayImage::new(w, h, px)
}

/// Writes one PGM per (fake item, channel) plus `fakes.csv` with columns
/// `path,class,channel,seed,z_index,synthetic`. Real items are skipped.
pub fn write_fake_dump(dir: &Path, items: &[TrainingItem], channels: &[Channel], seed: u64) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = Vec::new();
    writeln!(csv, "path,class,channel,seed,z_index,synthetic").unwrap();
    let mut z_index = [0usize; NUM_CLASSES];
    for item in items.iter().filter(|i| i.synthetic) {
        for (ch, img) in channels.iter().zip(&item.channels) {
            let name = format!("{}_{ch}.pgm", item.id);
            save_pgm(&to_gray(img)?, &dir.join(&name))?;
            let s = derive_seed_str(seed, &seed_label(*ch, item.label));
            writeln!(csv, "{name},{},{ch},{s},{},1", item.label, z_index[item.label]).unwrap();
        }
        z_index[item.label] += 1;
    }
    let path = dir.join("fakes.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))
}

/// Reads a dump back; images come back quantized to 8 bits.
pub fn read_fake_dump(dir: &Path, channels: &[Channel]) -> Result<Vec<TrainingItem>> {
    let path = dir.join("fakes.csv");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut items: Vec<TrainingItem> = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        let bad = |why: &str| Error::format("fake dump", n, why.to_string());
        if cols.len() != 6 {
            return Err(bad("expected 6 columns"));
        }
        let class: usize = cols[1].parse().map_err(|_| bad("bad class"))?;
        let ch = Channel::from_name(cols[2]).map_err(|_| bad("bad channel"))?;
        let id = cols[0]
            .strip_suffix(&format!("_{ch}.pgm"))
            .ok_or_else(|| bad("path does not match channel"))?
            .to_string();
        let img = load_pgm(&dir.join(cols[0]))?;
        let t = Tensor::new(
            vec![img.height(), img.width(), 1],
            img.pixels().iter().map(|v| 2.0 * v - 1.0).collect(),
        )?;
        let slot = channels
            .iter()
            .position(|c| *c == ch)
            .ok_or_else(|| bad("unexpected channel"))?;
        if items.last().is_none_or(|it| it.id != id) {
            items.push(TrainingItem {
                id,
                label: class,
                channels: Vec::with_capacity(channels.len()),
                synthetic: cols[5] == "1",
            });
        }
        let it = items.last_mut().unwrap();
        if it.channels.len() != slot {
            return Err(bad("channels out of order"));
        }
        it.channels.push(t);
    }
    Ok(items)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(id: &str, label: usize) -> TrainingItem {
        TrainingItem {
            id: id.into(),
            label,
            channels: vec![Tensor::zeros(&[28, 28, 1]), Tensor::zeros(&[28, 28, 1])],
            synthetic: false,
        }
    }

    #[test]
    fn counting() {
        assert_eq!(fake_counts([10, 6, 8]), [0, 4, 2]);
        assert_eq!(fake_counts([3, 3, 3]), [0, 0, 0]);
    }

    fn gens() -> BTreeMap<Channel, Generator> {
        [(Channel::P, Generator::new(6, 1)), (Channel::Q, Generator::new(6, 2))]
            .into_iter()
            .collect()
    }

    #[test]
    fn balances_to_max_class() {
        let mut real = Vec::new();
        for (c, n) in [(0, 10), (1, 6), (2, 8)] {
            for k in 0..n {
                real.push(item(&format!("r{c}_{k}"), c));
            }
        }
        let out = balance_dataset(&real, &[Channel::P, Channel::Q], &gens(), 3).unwrap();
        let mut counts = [0; 3];
        out.iter().for_each(|i| counts[i.label] += 1);
        assert_eq!(counts, [10, 10, 10]);
        assert_eq!(out.iter().filter(|i| i.synthetic).count(), 6);
        assert_eq!(&out[..24], &real[..]);
    }

    #[test]
    fn balanced_set_unchanged_and_missing_generator_rejected() {
        let real: Vec<_> = (0..3).map(|c| item(&format!("r{c}"), c)).collect();
        assert_eq!(
            balance_dataset(&real, &[Channel::P, Channel::Q], &BTreeMap::new(), 0).unwrap(),
            real
        );
        let skewed = vec![item("a", 0), item("b", 0), item("c", 1), item("d", 2)];
        let mut g = gens();
        g.remove(&Channel::Q);
        assert!(balance_dataset(&skewed, &[Channel::P, Channel::Q], &g, 0).is_err());
    }

    #[test]
    fn dump_round_trip_keeps_flags() {
        let real = vec![item("a", 0), item("b", 0), item("c", 1), item("d", 2)];
        let chans = [Channel::P, Channel::Q];
        let out = balance_dataset(&real, &chans, &gens(), 9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_fake_dump(dir.path(), &out, &chans, 9).unwrap();
        let back = read_fake_dump(dir.path(), &chans).unwrap();
        let fakes: Vec<_> = out.iter().filter(|i| i.synthetic).collect();
        assert_eq!(back.len(), fakes.len());
        for (b, f) in back.iter().zip(&fakes) {
            assert!(b.synthetic);
            assert_eq!((&b.id, b.label), (&f.id, f.label));
            for (x, y) in b.channels.iter().zip(&f.channels) {
                let err = x
                    .data()
                    .iter()
                    .zip(y.data())
                    .map(|(a, c)| (a - c).abs())
                    .fold(0.0, f64::max);
                assert!(err <= 1.0 / 255.0 + 1e-12);
            }
        }
    }
}
