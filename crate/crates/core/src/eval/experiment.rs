//! Pipeline orchestration: per-video flow preparation, per-fold training
//! and prediction, and assembly of the pooled report.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{accumulate, compute_metrics, losocv_split, ConfusionMatrix, FoldPlan, MetricsReport};
use crate::apex::{motion_signal_with, spot_apex_dc};
use crate::biwoof::{extract_biwoof, predict_svm, train_svm, BiwoofConfig, SvmParams};
use crate::cnn::{self, build_network, extract_features, OffApexNet, Sample, StreamSpec, TrainConfig, TrainTrace};
use crate::derivatives::{derive_channels, Channel, DerivedChannels};
use crate::error::{Error, Result};
use crate::flow::{decode_flow, encode_flow, load_flow, save_flow, FlowConfig, FlowField, FlowRegistry};
use crate::gan::{balance_dataset, train_gan, GanConfig, Generator, TrainingItem};
use crate::imaging::{normalize_to_input, SampleRecord, Video, INPUT_SIZE, NUM_CLASSES};
use crate::numerics::Tensor;
use crate::rng::derive_seed_str;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApexSource {
    /// `apex_index` from the manifest.
    Annotated,
    /// Divide & Conquer over the onset-relative motion signal.
    #[default]
    Spotted,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Extractor {
    #[default]
    BiwoofSvm,
    Cnn,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub name: String,
    pub flow: FlowConfig,
    pub apex: ApexSource,
    pub smooth_signal: bool,
    pub extractor: Extractor,
    pub biwoof: BiwoofConfig,
    pub svm: SvmParams,
    pub streams: StreamSpec,
    /// Network training; inside an experiment the seed is replaced by one
    /// derived from `seed` and the test subject.
    pub train: TrainConfig,
    /// GAN class balancing of every fold's training split when present.
    pub augmentation: Option<GanConfig>,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            name: "experiment".into(),
            flow: FlowConfig::default(),
            apex: ApexSource::default(),
            smooth_signal: true,
            extractor: Extractor::default(),
            biwoof: BiwoofConfig::default(),
            svm: SvmParams::default(),
            streams: StreamSpec::original(),
            train: TrainConfig::default(),
            augmentation: None,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.flow.validate()?;
        self.biwoof.validate()?;
        self.streams.validate()?;
        self.train.validate()?;
        if let Some(g) = &self.augmentation {
            g.validate()?;
        }
        Ok(())
    }
}

/// A video reduced to its onset→apex channels.
#[derive(Clone, Debug)]
pub struct PreparedSample {
    pub record: SampleRecord,
    pub apex_index: usize,
    pub channels: DerivedChannels,
}

impl PreparedSample {
    pub fn label(&self) -> usize {
        self.record.emotion.index()
    }
}

fn cache_key(flow: &FlowConfig, apex: ApexSource, smooth: bool) -> String {
    let json = serde_json::to_string(&(flow, apex, smooth)).expect("config serializes");
    format!("{:016x}", derive_seed_str(0, &json))
}

#[derive(Serialize, Deserialize)]
struct CacheMeta {
    apex_index: usize,
}

/// Divide & Conquer apex over the frames from the onset on; returns an
/// index into the whole video.
pub fn spot_video(video: &Video, flow: &FlowConfig, smooth: bool, registry: &FlowRegistry) -> Result<usize> {
    let onset = video.record.onset_index;
    let signal = motion_signal_with(registry, &video.frames[onset..], 0, flow, smooth)?;
    Ok(onset + spot_apex_dc(&signal)?.apex_index)
}

fn prepare_one(
    video: &Video,
    flow: &FlowConfig,
    apex: ApexSource,
    smooth: bool,
    registry: &FlowRegistry,
    cache: Option<&Path>,
) -> Result<PreparedSample> {
    let rec = &video.record;
    let key = cache_key(flow, apex, smooth);
    let cached = cache.map(|dir| {
        (
            dir.join(format!("{}.{key}.mefl", rec.video_id)),
            dir.join(format!("{}.{key}.json", rec.video_id)),
        )
    });
    if let Some((fp, mp)) = &cached {
        if fp.exists() && mp.exists() {
            let text = std::fs::read_to_string(mp).map_err(|e| Error::io(mp, e))?;
            let meta: CacheMeta = serde_json::from_str(&text)?;
            let field = load_flow(fp)?;
            return Ok(PreparedSample {
                record: rec.clone(),
                apex_index: meta.apex_index,
                channels: derive_channels(&field)?,
            });
        }
    }
    let onset = rec.onset_index;
    let apex_index = match apex {
        ApexSource::Annotated => rec
            .apex_index
            .ok_or_else(|| Error::invalid("annotated apex requested but the manifest has none"))?,
        ApexSource::Spotted => spot_video(video, flow, smooth, registry)?,
    };
    let apex_index = if apex_index == onset {
        (onset + 1).min(video.frames.len() - 1)
    } else {
        apex_index
    };
    let estimated = registry.estimate(&video.frames[onset], &video.frames[apex_index], flow)?;
    // kept at file precision so cached and fresh runs agree
    let field: FlowField = decode_flow(&encode_flow(&estimated))?;
    if let Some((fp, mp)) = &cached {
        std::fs::create_dir_all(fp.parent().unwrap()).map_err(|e| Error::io(fp, e))?;
        save_flow(&field, fp)?;
        let json = serde_json::to_string(&CacheMeta { apex_index })?;
        std::fs::write(mp, json).map_err(|e| Error::io(mp, e))?;
    }
    Ok(PreparedSample {
        record: rec.clone(),
        apex_index,
        channels: derive_channels(&field)?,
    })
}

/// Flow from onset to the (annotated or spotted) apex and its derived
/// channels for every video, in input order. With `cache`, flows and apex
/// indices are stored under a key of the flow/apex settings and reused.
pub fn prepare_samples(
    videos: &[Video],
    flow: &FlowConfig,
    apex: ApexSource,
    smooth: bool,
    registry: &FlowRegistry,
    cache: Option<&Path>,
) -> Result<Vec<PreparedSample>> {
    videos
        .par_iter()
        .map(|v| {
            prepare_one(v, flow, apex, smooth, registry, cache).map_err(|e| Error::AtVideo {
                id: v.record.video_id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

/// What one fold's classifier produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FoldOutput {
    pub predictions: Vec<usize>,
    /// Test predictions at intermediate training checkpoints.
    pub by_epoch: Vec<(usize, Vec<usize>)>,
    /// Ids of generated training samples.
    pub synthetic_ids: Vec<String>,
    /// Digest of the exact test inputs the classifier consumed.
    pub test_digest: u64,
}

pub trait FoldClassifier: Sync {
    fn fit_predict(&self, train: &[&PreparedSample], test: &[&PreparedSample], seed: u64) -> Result<FoldOutput>;
}

fn digest(values: impl IntoIterator<Item = f64>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0100_0000_01b3);
        }
    }
    h
}

/// The sample's `channels`, each resized to 28×28 and scaled to [−1, 1].
pub fn network_inputs(s: &PreparedSample, channels: &[Channel]) -> Result<Vec<Tensor>> {
    channels
        .iter()
        .map(|c| normalize_to_input(s.channels.get(*c), INPUT_SIZE))
        .collect()
}

/// One generator per channel, trained on that channel of the real items.
fn fold_generators(
    items: &[TrainingItem],
    channels: &[Channel],
    config: &GanConfig,
    seed: u64,
) -> Result<BTreeMap<Channel, Generator>> {
    let mut out = BTreeMap::new();
    for (j, ch) in channels.iter().enumerate() {
        let data: Vec<(Tensor, usize)> = items.iter().map(|i| (i.channels[j].clone(), i.label)).collect();
        let cfg = GanConfig {
            seed: derive_seed_str(seed, ch.name()),
            ..config.clone()
        };
        out.insert(*ch, train_gan(&data, &cfg)?.generator);
    }
    Ok(out)
}

fn augment(
    real: Vec<TrainingItem>,
    channels: &[Channel],
    config: &Option<GanConfig>,
    seed: u64,
) -> Result<Vec<TrainingItem>> {
    match config {
        None => Ok(real),
        Some(g) => {
            let gens = fold_generators(&real, channels, g, derive_seed_str(seed, "gan"))?;
            balance_dataset(&real, channels, &gens, derive_seed_str(seed, "fakes"))
        }
    }
}

pub struct BiwoofSvmClassifier {
    pub biwoof: BiwoofConfig,
    pub svm: SvmParams,
    pub augmentation: Option<GanConfig>,
}

impl BiwoofSvmClassifier {
    fn features(&self, channels: &DerivedChannels) -> Result<Vec<f64>> {
        Ok(extract_biwoof(channels, &self.biwoof)?.values)
    }
}

impl FoldClassifier for BiwoofSvmClassifier {
    fn fit_predict(&self, train: &[&PreparedSample], test: &[&PreparedSample], seed: u64) -> Result<FoldOutput> {
        let mut feats = Vec::with_capacity(train.len());
        let mut labels = Vec::with_capacity(train.len());
        for s in train {
            feats.push(self.features(&s.channels)?);
            labels.push(s.label());
        }
        let mut synthetic_ids = Vec::new();
        if self.augmentation.is_some() {
            let pq = [Channel::P, Channel::Q];
            let real = train
                .iter()
                .map(|s| {
                    Ok(TrainingItem {
                        id: s.record.video_id.clone(),
                        label: s.label(),
                        channels: network_inputs(s, &pq)?,
                        synthetic: false,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let n_real = real.len();
            for item in augment(real, &pq, &self.augmentation, seed)?.into_iter().skip(n_real) {
                let plane = |t: &Tensor| crate::imaging::Plane::new(INPUT_SIZE, INPUT_SIZE, t.data().to_vec());
                let field = FlowField::from_planes(plane(&item.channels[0])?, plane(&item.channels[1])?)?;
                feats.push(self.features(&derive_channels(&field)?)?);
                labels.push(item.label);
                synthetic_ids.push(item.id);
            }
        }
        let model = train_svm(&feats, &labels, NUM_CLASSES, &self.svm, seed)?;
        let test_feats = test
            .iter()
            .map(|s| self.features(&s.channels))
            .collect::<Result<Vec<_>>>()?;
        let predictions = test_feats
            .iter()
            .map(|f| predict_svm(&model, f).map(|(c, _)| c))
            .collect::<Result<Vec<_>>>()?;
        Ok(FoldOutput {
            predictions,
            by_epoch: Vec::new(),
            synthetic_ids,
            test_digest: digest(test_feats.into_iter().flatten()),
        })
    }
}

pub struct FittedCnn {
    pub net: OffApexNet,
    pub synthetic_ids: Vec<String>,
    pub trace: TrainTrace,
}

pub struct CnnClassifier {
    pub streams: StreamSpec,
    pub train: TrainConfig,
    pub augmentation: Option<GanConfig>,
}

impl CnnClassifier {
    /// Trains a network on `train` with the fold seed; calls `on_checkpoint`
    /// at the configured epochs.
    pub fn fit(
        &self,
        train: &[&PreparedSample],
        seed: u64,
        on_checkpoint: &mut dyn FnMut(usize, &OffApexNet) -> Result<()>,
    ) -> Result<FittedCnn> {
        let chans = &self.streams.channels;
        let real = train
            .iter()
            .map(|s| {
                Ok(TrainingItem {
                    id: s.record.video_id.clone(),
                    label: s.label(),
                    channels: network_inputs(s, chans)?,
                    synthetic: false,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let items = augment(real, chans, &self.augmentation, seed)?;
        let synthetic_ids = items.iter().filter(|i| i.synthetic).map(|i| i.id.clone()).collect();
        let data: Vec<Sample> = items
            .into_iter()
            .map(|i| Sample {
                inputs: i.channels,
                label: i.label,
            })
            .collect();
        let mut net = build_network(&self.streams, derive_seed_str(seed, "net"))?;
        let cfg = TrainConfig {
            seed: derive_seed_str(seed, "shuffle"),
            ..self.train.clone()
        };
        let trace = cnn::train(&mut net, &data, &cfg, on_checkpoint)?;
        Ok(FittedCnn {
            net,
            synthetic_ids,
            trace,
        })
    }
}

impl FoldClassifier for CnnClassifier {
    fn fit_predict(&self, train: &[&PreparedSample], test: &[&PreparedSample], seed: u64) -> Result<FoldOutput> {
        let test_inputs = test
            .iter()
            .map(|s| {
                Ok(Sample {
                    inputs: network_inputs(s, &self.streams.channels)?,
                    label: s.label(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let predict_all = |net: &OffApexNet| -> Result<Vec<usize>> {
            test_inputs.iter().map(|s| cnn::predict(net, &s.inputs)).collect()
        };
        let mut by_epoch = Vec::new();
        let fitted = self.fit(train, seed, &mut |epoch, net| {
            by_epoch.push((epoch, predict_all(net)?));
            Ok(())
        })?;
        Ok(FoldOutput {
            predictions: predict_all(&fitted.net)?,
            by_epoch,
            synthetic_ids: fitted.synthetic_ids,
            test_digest: digest(
                test_inputs
                    .iter()
                    .flat_map(|s| s.inputs.iter().flat_map(|t| t.data().to_vec())),
            ),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub test_subject: String,
    pub train_count: usize,
    pub synthetic_count: usize,
    pub test_ids: Vec<String>,
    pub truth: Vec<usize>,
    pub predictions: Vec<usize>,
    pub by_epoch: Vec<(usize, Vec<usize>)>,
    pub test_digest: String,
    pub error: Option<String>,
}

/// Runs every fold, up to `jobs` at a time; results come back in plan
/// order whatever order they finish in.
pub fn run_folds(
    prepared: &[PreparedSample],
    plan: &FoldPlan,
    classifier: &dyn FoldClassifier,
    seed: u64,
    jobs: usize,
) -> Result<Vec<FoldResult>> {
    let index: BTreeMap<&str, &PreparedSample> = prepared.iter().map(|p| (p.record.video_id.as_str(), p)).collect();
    let lookup = |ids: &[String]| -> Result<Vec<&PreparedSample>> {
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("fold references unknown video {id}")))
            })
            .collect()
    };
    let run = |fold: &super::Fold| -> Result<FoldResult> {
        let train = lookup(&fold.train)?;
        let test = lookup(&fold.test)?;
        let fold_seed = derive_seed_str(seed, &fold.test_subject);
        let mut res = FoldResult {
            test_subject: fold.test_subject.clone(),
            train_count: train.len(),
            synthetic_count: 0,
            test_ids: fold.test.clone(),
            truth: test.iter().map(|s| s.label()).collect(),
            predictions: Vec::new(),
            by_epoch: Vec::new(),
            test_digest: String::new(),
            error: None,
        };
        match classifier.fit_predict(&train, &test, fold_seed) {
            Ok(out) if out.predictions.len() == test.len() => {
                res.synthetic_count = out.synthetic_ids.len();
                res.predictions = out.predictions;
                res.by_epoch = out.by_epoch;
                res.test_digest = format!("{:016x}", out.test_digest);
                let real: HashSet<&str> = prepared.iter().map(|p| p.record.video_id.as_str()).collect();
                if let Some(id) = out.synthetic_ids.iter().find(|id| real.contains(id.as_str())) {
                    res.error = Some(format!("generated sample id {id} collides with a real video"));
                }
            }
            Ok(out) => {
                res.error = Some(format!(
                    "{} predictions for {} test videos",
                    out.predictions.len(),
                    test.len()
                ))
            }
            Err(e) => res.error = Some(e.to_string()),
        }
        Ok(res)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
    let mut results = pool.install(|| plan.folds.par_iter().map(run).collect::<Result<Vec<_>>>())?;
    results.sort_by(|a, b| a.test_subject.cmp(&b.test_subject));
    Ok(results)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub confusion: ConfusionMatrix,
    pub accuracy: f64,
    pub macro_f1: f64,
}

/// Result of checking that no generated sample reached a test split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AugmentationAudit {
    pub folds_checked: usize,
    pub synthetic_training_samples: usize,
    pub synthetic_in_test: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: PipelineConfig,
    pub folds: Vec<FoldResult>,
    pub confusion: ConfusionMatrix,
    /// Pooled over all successful folds; absent when none succeeded.
    pub metrics: Option<MetricsReport>,
    /// Mean of per-subject accuracies.
    pub subject_mean_accuracy: Option<f64>,
    pub epochs: Vec<EpochRow>,
    pub audit: AugmentationAudit,
    pub failures: Vec<String>,
}

impl ExperimentReport {
    pub fn succeeded(&self) -> bool {
        self.failures.is_empty() && self.audit.passed
    }
}

fn pairs(truth: &[usize], pred: &[usize]) -> Vec<(usize, usize)> {
    truth.iter().copied().zip(pred.iter().copied()).collect()
}

/// Pools fold results into one report.
pub fn assemble_report(config: &PipelineConfig, folds: Vec<FoldResult>) -> Result<ExperimentReport> {
    let mut confusion = ConfusionMatrix::default();
    let mut failures = Vec::new();
    let mut per_fold = BTreeMap::new();
    let mut by_epoch: BTreeMap<usize, ConfusionMatrix> = BTreeMap::new();
    let mut audit = AugmentationAudit::default();
    for f in &folds {
        if let Some(e) = &f.error {
            failures.push(format!("{}: {e}", f.test_subject));
            continue;
        }
        let cm = accumulate(&pairs(&f.truth, &f.predictions))?;
        confusion.merge(&cm);
        per_fold.insert(f.test_subject.clone(), cm.trace() as f64 / cm.total().max(1) as f64);
        for (epoch, preds) in &f.by_epoch {
            by_epoch
                .entry(*epoch)
                .or_default()
                .merge(&accumulate(&pairs(&f.truth, preds))?);
        }
        audit.folds_checked += 1;
        audit.synthetic_training_samples += f.synthetic_count;
        audit.synthetic_in_test += f.test_ids.iter().filter(|id| id.starts_with("fake_")).count();
    }
    audit.passed = audit.synthetic_in_test == 0;
    let metrics = if confusion.total() > 0 {
        let mut m = compute_metrics(&confusion)?;
        m.per_fold = per_fold.clone();
        Some(m)
    } else {
        None
    };
    let subject_mean_accuracy = (!per_fold.is_empty()).then(|| per_fold.values().sum::<f64>() / per_fold.len() as f64);
    let epochs = by_epoch
        .into_iter()
        .map(|(epoch, cm)| {
            let m = compute_metrics(&cm)?;
            Ok(EpochRow {
                epoch,
                confusion: cm,
                accuracy: m.accuracy,
                macro_f1: m.macro_f1,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentReport {
        config: config.clone(),
        folds,
        confusion,
        metrics,
        subject_mean_accuracy,
        epochs,
        audit,
        failures,
    })
}

pub fn classifier_for(config: &PipelineConfig) -> Box<dyn FoldClassifier> {
    match config.extractor {
        Extractor::BiwoofSvm => Box::new(BiwoofSvmClassifier {
            biwoof: config.biwoof,
            svm: config.svm,
            augmentation: config.augmentation.clone(),
        }),
        Extractor::Cnn => Box::new(CnnClassifier {
            streams: config.streams.clone(),
            train: config.train.clone(),
            augmentation: config.augmentation.clone(),
        }),
    }
}

/// Full leave-one-subject-out run of one pipeline configuration.
pub fn run_experiment(
    videos: &[Video],
    config: &PipelineConfig,
    registry: &FlowRegistry,
    jobs: usize,
    cache: Option<&Path>,
) -> Result<ExperimentReport> {
    config.validate()?;
    let records: Vec<SampleRecord> = videos.iter().map(|v| v.record.clone()).collect();
    let plan = losocv_split(&records)?;
    let prepared = prepare_samples(videos, &config.flow, config.apex, config.smooth_signal, registry, cache)?;
    let folds = run_folds(&prepared, &plan, classifier_for(config).as_ref(), config.seed, jobs)?;
    assemble_report(config, folds)
}

/// Bi-WOOF + SVM accuracy and F1 for every flow method and block count,
/// preparing flows once per method.
pub fn sweep_biwoof(
    videos: &[Video],
    base: &PipelineConfig,
    methods: &[crate::flow::FlowMethod],
    blocks: &[usize],
    registry: &FlowRegistry,
    jobs: usize,
    cache: Option<&Path>,
) -> Result<Vec<(String, usize, ExperimentReport)>> {
    let records: Vec<SampleRecord> = videos.iter().map(|v| v.record.clone()).collect();
    let plan = losocv_split(&records)?;
    let mut rows = Vec::new();
    for m in methods {
        let flow = FlowConfig {
            method: m.clone(),
            ..base.flow.clone()
        };
        let prepared = prepare_samples(videos, &flow, base.apex, base.smooth_signal, registry, cache)?;
        for &b in blocks {
            let config = PipelineConfig {
                name: format!("{}_b{b}", m.name()),
                flow: flow.clone(),
                extractor: Extractor::BiwoofSvm,
                biwoof: BiwoofConfig {
                    blocks_per_side: b,
                    ..base.biwoof
                },
                ..base.clone()
            };
            config.validate()?;
            let folds = run_folds(&prepared, &plan, classifier_for(&config).as_ref(), config.seed, jobs)?;
            rows.push((m.name().to_string(), b, assemble_report(&config, folds)?));
        }
    }
    Ok(rows)
}

/// Trains one network on all samples and returns the penultimate features
/// of every sample at each checkpoint epoch (epoch 0 is the untrained net).
pub fn penultimate_snapshots(
    prepared: &[PreparedSample],
    streams: &StreamSpec,
    train: &TrainConfig,
    seed: u64,
) -> Result<Vec<(usize, Vec<Vec<f64>>)>> {
    let clf = CnnClassifier {
        streams: streams.clone(),
        train: train.clone(),
        augmentation: None,
    };
    let all: Vec<&PreparedSample> = prepared.iter().collect();
    let inputs = all
        .iter()
        .map(|s| {
            Ok(Sample {
                inputs: network_inputs(s, &streams.channels)?,
                label: s.label(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut snaps = Vec::new();
    clf.fit(&all, seed, &mut |epoch, net| {
        snaps.push((epoch, extract_features(net, &inputs)?));
        Ok(())
    })?;
    Ok(snaps)
}
