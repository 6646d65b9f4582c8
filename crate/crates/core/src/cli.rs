//! Command-line front end. Every subcommand reads a JSON config, writes
//! into `--out` and echoes the effective config there as `config.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{CommandFactory, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::biwoof::{extract_biwoof, predict_svm, save_svm, train_svm, write_feature_csv, BiwoofConfig, SvmParams};
use crate::cnn::{save_checkpoint, write_trace_csv, StreamSpec, TrainConfig};
use crate::derivatives::{export_channels, Channel};
use crate::error::{Error, Result};
use crate::eval::experiment::{
    assemble_report, classifier_for, network_inputs, penultimate_snapshots, spot_video, sweep_biwoof,
};
use crate::eval::report::{epoch_table, scatter_csv, sweep_table};
use crate::eval::{
    class_mean_silhouette, emit_report, losocv_split, pca_scatter, prepare_samples, run_folds, ApexSource,
    CnnClassifier, ExperimentReport, PipelineConfig, PreparedSample,
};
use crate::flow::{save_flow, FlowConfig, FlowField, FlowMethod, FlowRegistry};
use crate::gan::{
    generate_items, save_discriminator, save_generator, train_gan, write_fake_dump, GanConfig, Generator,
};
use crate::imaging::{generate_synthetic_corpus, load_manifest, SampleRecord, SyntheticSpec, Video, NUM_CLASSES};
use crate::rng::derive_seed_str;

pub const SEED_ENV: &str = "MEXFLOW_SEED";

#[derive(Parser, Debug)]
#[command(
    name = "mexflow",
    version,
    about = "Micro-expression recognition from onset/apex optical flow"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct RunArgs {
    /// JSON config file
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory, created if absent
    #[arg(long, short)]
    out: PathBuf,
    /// Overrides the config's seed
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads
    #[arg(long, short)]
    jobs: Option<usize>,
    /// -v info, -vv debug
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthetic corpus: manifest, PGM frames and ground truth
    Generate(RunArgs),
    /// Onset→apex flow and derived channels per video
    Flow(RunArgs),
    /// Spotted apex per video as CSV
    Spot(RunArgs),
    /// Bi-WOOF feature table
    Extract(RunArgs),
    /// Linear SVM on Bi-WOOF features of every video
    TrainSvm(RunArgs),
    /// Network on every video, with checkpoints and a loss trace
    TrainCnn(RunArgs),
    /// One conditional GAN per channel, optionally dumping fakes
    TrainGan(RunArgs),
    /// Leave-one-subject-out experiments
    Evaluate(RunArgs),
    /// Summary tables from saved reports and PCA scatter of features
    Report(RunArgs),
}

impl Command {
    fn args(&self) -> &RunArgs {
        match self {
            Command::Generate(a)
            | Command::Flow(a)
            | Command::Spot(a)
            | Command::Extract(a)
            | Command::TrainSvm(a)
            | Command::TrainCnn(a)
            | Command::TrainGan(a)
            | Command::Evaluate(a)
            | Command::Report(a) => a,
        }
    }

    fn seeded(&self) -> bool {
        !matches!(self, Command::Flow(_) | Command::Spot(_) | Command::Extract(_))
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub apex: ApexSource,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
    /// Restricts the run to these video ids; empty means all.
    #[serde(default)]
    pub videos: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpotJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtractJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub apex: ApexSource,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
    #[serde(default)]
    pub biwoof: BiwoofConfig,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSvmJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub apex: ApexSource,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
    #[serde(default)]
    pub biwoof: BiwoofConfig,
    #[serde(default)]
    pub svm: SvmParams,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainCnnJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub apex: ApexSource,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
    #[serde(default = "StreamSpec::original")]
    pub streams: StreamSpec,
    /// `train.seed` is replaced by seeds derived from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub augmentation: Option<GanConfig>,
    #[serde(default)]
    pub seed: u64,
}

fn pq() -> Vec<Channel> {
    vec![Channel::P, Channel::Q]
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainGanJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub apex: ApexSource,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
    #[serde(default = "pq")]
    pub channels: Vec<Channel>,
    /// `gan.seed` is replaced by a per-channel seed derived from `seed`.
    #[serde(default)]
    pub gan: GanConfig,
    #[serde(default)]
    pub fakes_per_class: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepJob {
    #[serde(default)]
    pub base: PipelineConfig,
    pub methods: Vec<FlowMethod>,
    pub blocks: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateJob {
    pub manifest: PathBuf,
    /// Run in order; each writes `<out>/<name>/`. Their seeds are replaced
    /// by `seed`.
    #[serde(default)]
    pub experiments: Vec<PipelineConfig>,
    #[serde(default)]
    pub sweep: Option<SweepJob>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PcaJob {
    pub manifest: PathBuf,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub apex: ApexSource,
    #[serde(default = "yes")]
    pub smooth_signal: bool,
    #[serde(default = "StreamSpec::original")]
    pub streams: StreamSpec,
    #[serde(default)]
    pub train: TrainConfig,
    /// Checkpoints to project; 0 is the untrained network.
    pub epochs: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportJob {
    /// `report.json` files or the directories holding them.
    #[serde(default)]
    pub reports: Vec<PathBuf>,
    #[serde(default)]
    pub pca: Option<PcaJob>,
    #[serde(default)]
    pub seed: u64,
}

/// Reads a config, applying `--seed` (or `MEXFLOW_SEED` when the file has
/// no seed) for commands that use one.
fn load_config<T: DeserializeOwned>(path: &Path, seed: Option<u64>, seeded: bool) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)?;
    if seeded {
        let obj = value
            .as_object_mut()
            .ok_or_else(|| Error::invalid("config must be a JSON object"))?;
        if let Some(s) = seed {
            obj.insert("seed".into(), s.into());
        } else if !obj.contains_key("seed") {
            if let Ok(env) = std::env::var(SEED_ENV) {
                let s: u64 = env
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid(format!("{SEED_ENV}={env} is not an unsigned integer")))?;
                obj.insert("seed".into(), s.into());
            }
        }
    } else if seed.is_some() {
        warn!("--seed has no effect on this command");
    }
    Ok(serde_json::from_value(value)?)
}

/// Remembers what the output directory held before the run so a failed
/// run can remove exactly what it added.
struct OutputGuard {
    dir: PathBuf,
    created: bool,
    before: BTreeSet<OsString>,
}

impl OutputGuard {
    fn new(dir: &Path) -> Result<Self> {
        let created = !dir.exists();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(OutputGuard {
            dir: dir.to_path_buf(),
            created,
            before: list_dir(dir)?,
        })
    }

    fn rollback(&self) {
        if self.created {
            let _ = std::fs::remove_dir_all(&self.dir);
            return;
        }
        for name in list_dir(&self.dir).unwrap_or_default().difference(&self.before) {
            let p = self.dir.join(name);
            let _ = if p.is_dir() {
                std::fs::remove_dir_all(&p)
            } else {
                std::fs::remove_file(&p)
            };
        }
    }
}

fn list_dir(dir: &Path) -> Result<BTreeSet<OsString>> {
    std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.file_name()).map_err(|e| Error::io(dir, e)))
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn echo_config<T: Serialize>(out: &Path, config: &T) -> Result<()> {
    write_text(
        &out.join("config.json"),
        &(serde_json::to_string_pretty(config)? + "\n"),
    )
}

fn load_videos(manifest: &Path) -> Result<Vec<Video>> {
    let records = load_manifest(manifest)?;
    records
        .par_iter()
        .map(|r| {
            Video::load(r).map_err(|e| Error::AtVideo {
                id: r.video_id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

fn prepare(
    manifest: &Path,
    flow: &FlowConfig,
    apex: ApexSource,
    smooth: bool,
) -> Result<(Vec<Video>, Vec<PreparedSample>)> {
    let videos = load_videos(manifest)?;
    info!("loaded {} videos", videos.len());
    let prepared = prepare_samples(&videos, flow, apex, smooth, &FlowRegistry::new(), None)?;
    Ok((videos, prepared))
}

/// Outcome of a command that ran to completion.
enum Status {
    Ok,
    /// Outputs written, but some folds or steps failed.
    Incomplete(String),
}

fn cmd_generate(spec: SyntheticSpec, out: &Path) -> Result<Status> {
    let corpus = generate_synthetic_corpus(&spec)?;
    corpus.write(out)?;
    echo_config(out, &spec)?;
    info!("wrote {} videos", corpus.records.len());
    Ok(Status::Ok)
}

fn cmd_flow(job: FlowJob, out: &Path) -> Result<Status> {
    let mut videos = load_videos(&job.manifest)?;
    if !job.videos.is_empty() {
        let wanted: BTreeSet<&str> = job.videos.iter().map(String::as_str).collect();
        let known: BTreeSet<&str> = videos.iter().map(|v| v.record.video_id.as_str()).collect();
        if let Some(missing) = wanted.difference(&known).next() {
            return Err(Error::invalid(format!("video {missing} is not in the manifest")));
        }
        videos.retain(|v| wanted.contains(v.record.video_id.as_str()));
    }
    let prepared = prepare_samples(
        &videos,
        &job.flow,
        job.apex,
        job.smooth_signal,
        &FlowRegistry::new(),
        None,
    )?;
    let flows = out.join("flows");
    std::fs::create_dir_all(&flows).map_err(|e| Error::io(&flows, e))?;
    let mut pairs = String::from("video_id,onset_index,apex_index\n");
    for s in &prepared {
        let id = &s.record.video_id;
        let field = FlowField::from_planes(s.channels.get(Channel::P).clone(), s.channels.get(Channel::Q).clone())?;
        save_flow(&field, &flows.join(format!("{id}.mefl")))?;
        export_channels(&s.channels, &out.join("channels"), id)?;
        writeln!(pairs, "{id},{},{}", s.record.onset_index, s.apex_index).unwrap();
    }
    write_text(&out.join("pairs.csv"), &pairs)?;
    echo_config(out, &job)?;
    Ok(Status::Ok)
}

fn cmd_spot(job: SpotJob, out: &Path) -> Result<Status> {
    let videos = load_videos(&job.manifest)?;
    let registry = FlowRegistry::new();
    let spotted = videos
        .par_iter()
        .map(|v| {
            spot_video(v, &job.flow, job.smooth_signal, &registry).map_err(|e| Error::AtVideo {
                id: v.record.video_id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut csv = String::from("video_id,spotted_apex,truth_apex,abs_error\n");
    let mut within = 0;
    let mut known = 0;
    for (v, s) in videos.iter().zip(&spotted) {
        match v.record.apex_index {
            Some(t) => {
                known += 1;
                within += usize::from(s.abs_diff(t) <= 2);
                writeln!(csv, "{},{s},{t},{}", v.record.video_id, s.abs_diff(t)).unwrap();
            }
            None => writeln!(csv, "{},{s},,", v.record.video_id).unwrap(),
        }
    }
    write_text(&out.join("apex.csv"), &csv)?;
    echo_config(out, &job)?;
    if known > 0 {
        info!("{within}/{known} spotted within 2 frames of the annotation");
    }
    Ok(Status::Ok)
}

fn biwoof_rows(prepared: &[PreparedSample], cfg: &BiwoofConfig) -> Result<Vec<(String, usize, Vec<f64>)>> {
    prepared
        .iter()
        .map(|s| {
            Ok((
                s.record.video_id.clone(),
                s.label(),
                extract_biwoof(&s.channels, cfg)?.values,
            ))
        })
        .collect()
}

fn cmd_extract(job: ExtractJob, out: &Path) -> Result<Status> {
    job.biwoof.validate()?;
    let (_, prepared) = prepare(&job.manifest, &job.flow, job.apex, job.smooth_signal)?;
    write_feature_csv(&out.join("features.csv"), &biwoof_rows(&prepared, &job.biwoof)?)?;
    echo_config(out, &job)?;
    Ok(Status::Ok)
}

fn cmd_train_svm(job: TrainSvmJob, out: &Path) -> Result<Status> {
    job.biwoof.validate()?;
    let (_, prepared) = prepare(&job.manifest, &job.flow, job.apex, job.smooth_signal)?;
    let rows = biwoof_rows(&prepared, &job.biwoof)?;
    let feats: Vec<Vec<f64>> = rows.iter().map(|r| r.2.clone()).collect();
    let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
    let model = train_svm(&feats, &labels, NUM_CLASSES, &job.svm, job.seed)?;
    save_svm(&model, &out.join("model.msvm"))?;
    let mut csv = String::from("video_id,label,predicted\n");
    for (id, label, f) in &rows {
        writeln!(csv, "{id},{label},{}", predict_svm(&model, f)?.0).unwrap();
    }
    write_text(&out.join("train_predictions.csv"), &csv)?;
    echo_config(out, &job)?;
    Ok(Status::Ok)
}

fn cmd_train_cnn(job: TrainCnnJob, out: &Path) -> Result<Status> {
    job.streams.validate()?;
    job.train.validate()?;
    let (_, prepared) = prepare(&job.manifest, &job.flow, job.apex, job.smooth_signal)?;
    let clf = CnnClassifier {
        streams: job.streams.clone(),
        train: job.train.clone(),
        augmentation: job.augmentation.clone(),
    };
    let all: Vec<&PreparedSample> = prepared.iter().collect();
    let ckpt = out.join("checkpoints");
    let fitted = clf.fit(&all, job.seed, &mut |epoch, net| {
        info!("checkpoint at epoch {epoch}");
        save_checkpoint(net, &ckpt.join(format!("epoch{epoch}")))
    })?;
    save_checkpoint(&fitted.net, &out.join("model"))?;
    write_trace_csv(&fitted.trace, &out.join("trace.csv"))?;
    if !fitted.synthetic_ids.is_empty() {
        write_text(
            &out.join("synthetic_ids.txt"),
            &(fitted.synthetic_ids.join("\n") + "\n"),
        )?;
    }
    echo_config(out, &job)?;
    Ok(Status::Ok)
}

fn cmd_train_gan(job: TrainGanJob, out: &Path) -> Result<Status> {
    job.gan.validate()?;
    if job.channels.is_empty() {
        return Err(Error::invalid("train-gan needs at least one channel"));
    }
    let (_, prepared) = prepare(&job.manifest, &job.flow, job.apex, job.smooth_signal)?;
    let mut generators: BTreeMap<Channel, Generator> = BTreeMap::new();
    for ch in &job.channels {
        let data = prepared
            .iter()
            .map(|s| Ok((network_inputs(s, &[*ch])?.remove(0), s.label())))
            .collect::<Result<Vec<_>>>()?;
        let cfg = GanConfig {
            seed: derive_seed_str(job.seed, ch.name()),
            ..job.gan.clone()
        };
        info!("training generator for {ch}");
        let trained = train_gan(&data, &cfg)?;
        let dir = out.join(ch.name());
        save_generator(&trained.generator, &dir.join("generator"))?;
        save_discriminator(&trained.discriminator, &dir.join("discriminator"))?;
        trained.trace.write_csv(&dir.join("trace.csv"))?;
        generators.insert(*ch, trained.generator);
    }
    if job.fakes_per_class > 0 {
        let seed = derive_seed_str(job.seed, "fakes");
        let items = generate_items(&job.channels, &generators, [job.fakes_per_class; NUM_CLASSES], seed)?;
        write_fake_dump(&out.join("fakes"), &items, &job.channels, seed)?;
    }
    echo_config(out, &job)?;
    Ok(Status::Ok)
}

fn summary_csv(reports: &[&ExperimentReport]) -> String {
    let mut s = String::from("name,accuracy,macro_f1,subject_mean_accuracy,failed_folds,audit_passed\n");
    for r in reports {
        let (a, f) = r
            .metrics
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |m| (m.accuracy, m.macro_f1));
        writeln!(
            s,
            "{},{a},{f},{},{},{}",
            r.config.name,
            r.subject_mean_accuracy.unwrap_or(f64::NAN),
            r.failures.len(),
            r.audit.passed
        )
        .unwrap();
    }
    s
}

fn write_tables(out: &Path, reports: &[&ExperimentReport]) -> Result<()> {
    write_text(&out.join("summary.csv"), &summary_csv(reports))?;
    let with_epochs: Vec<&ExperimentReport> = reports.iter().copied().filter(|r| !r.epochs.is_empty()).collect();
    if !with_epochs.is_empty() {
        write_text(&out.join("epochs.csv"), &epoch_table(&with_epochs))?;
    }
    Ok(())
}

fn check_names(experiments: &[PipelineConfig]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for e in experiments {
        let ok = !e.name.is_empty()
            && e.name != "."
            && e.name != ".."
            && e.name.chars().all(|c| c.is_ascii_alphanumeric() || "-_.+".contains(c));
        if !ok {
            return Err(Error::invalid(format!(
                "experiment name '{}' is not a plain file name",
                e.name
            )));
        }
        if !seen.insert(e.name.as_str()) {
            return Err(Error::invalid(format!("duplicate experiment name '{}'", e.name)));
        }
    }
    Ok(())
}

fn cmd_evaluate(mut job: EvaluateJob, out: &Path, jobs: usize) -> Result<Status> {
    for e in job.experiments.iter_mut() {
        e.seed = job.seed;
        e.validate()?;
    }
    if let Some(sw) = job.sweep.as_mut() {
        sw.base.seed = job.seed;
        sw.base.validate()?;
    }
    check_names(&job.experiments)?;
    if job.experiments.is_empty() && job.sweep.is_none() {
        return Err(Error::invalid("evaluate config lists no experiments and no sweep"));
    }
    let videos = load_videos(&job.manifest)?;
    let records: Vec<SampleRecord> = videos.iter().map(|v| v.record.clone()).collect();
    let plan = losocv_split(&records)?;
    let registry = FlowRegistry::new();
    // experiments sharing flow settings share prepared samples
    let mut prepared: BTreeMap<String, Vec<PreparedSample>> = BTreeMap::new();
    let mut reports = Vec::new();
    for exp in &job.experiments {
        let key = serde_json::to_string(&(&exp.flow, exp.apex, exp.smooth_signal))?;
        if !prepared.contains_key(&key) {
            let p = prepare_samples(&videos, &exp.flow, exp.apex, exp.smooth_signal, &registry, None)?;
            prepared.insert(key.clone(), p);
        }
        info!("running {}", exp.name);
        let folds = run_folds(&prepared[&key], &plan, classifier_for(exp).as_ref(), exp.seed, jobs)?;
        let report = assemble_report(exp, folds)?;
        emit_report(&report, &out.join(&exp.name), &[])?;
        reports.push(report);
    }
    let mut problems: Vec<String> = reports
        .iter()
        .filter(|r| !r.succeeded())
        .map(|r| {
            let mut why = r.failures.clone();
            if !r.audit.passed {
                why.push("augmentation audit failed".into());
            }
            format!("{}: {}", r.config.name, why.join("; "))
        })
        .collect();
    if !reports.is_empty() {
        write_tables(out, &reports.iter().collect::<Vec<_>>())?;
    }
    if let Some(sw) = &job.sweep {
        let rows = sweep_biwoof(&videos, &sw.base, &sw.methods, &sw.blocks, &registry, jobs, None)?;
        write_text(&out.join("sweep.csv"), &sweep_table(&rows))?;
        problems.extend(
            rows.iter()
                .filter(|r| !r.2.succeeded())
                .map(|(m, b, r)| format!("sweep {m} B={b}: {}", r.failures.join("; "))),
        );
    }
    echo_config(out, &job)?;
    Ok(if problems.is_empty() {
        Status::Ok
    } else {
        Status::Incomplete(problems.join("\n"))
    })
}

fn cmd_report(job: ReportJob, out: &Path) -> Result<Status> {
    let mut reports = Vec::new();
    for p in &job.reports {
        let path = if p.is_dir() { p.join("report.json") } else { p.clone() };
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        reports.push(serde_json::from_str::<ExperimentReport>(&text)?);
    }
    if !reports.is_empty() {
        write_tables(out, &reports.iter().collect::<Vec<_>>())?;
    }
    if let Some(pca) = &job.pca {
        pca.streams.validate()?;
        if let Some(&e) = pca.epochs.iter().find(|&&e| e > pca.train.epochs) {
            return Err(Error::invalid(format!(
                "scatter requested at epoch {e} but training stops at {}",
                pca.train.epochs
            )));
        }
        if !pca.epochs.is_empty() {
            let (_, prepared) = prepare(&pca.manifest, &pca.flow, pca.apex, pca.smooth_signal)?;
            let ids: Vec<String> = prepared.iter().map(|p| p.record.video_id.clone()).collect();
            let labels: Vec<usize> = prepared.iter().map(|p| p.label()).collect();
            let train = TrainConfig {
                checkpoints: pca.epochs.clone(),
                ..pca.train.clone()
            };
            let mut sil = String::from("epoch,silhouette,silhouette_pc12\n");
            for (epoch, feats) in penultimate_snapshots(&prepared, &pca.streams, &train, job.seed)? {
                let (points, _) = pca_scatter(&feats, &ids, &labels)?;
                write_text(&out.join(format!("scatter_epoch{epoch}.csv")), &scatter_csv(&points))?;
                let plane: Vec<Vec<f64>> = points.iter().map(|p| vec![p.pc1, p.pc2]).collect();
                writeln!(
                    sil,
                    "{epoch},{},{}",
                    class_mean_silhouette(&feats, &labels)?,
                    class_mean_silhouette(&plane, &labels)?
                )
                .unwrap();
            }
            write_text(&out.join("silhouette.csv"), &sil)?;
        }
    }
    echo_config(out, &job)?;
    Ok(Status::Ok)
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

fn run(cmd: &Command, jobs: usize) -> std::result::Result<Status, (i32, Error)> {
    let a = cmd.args();
    let cfg = |e: Error| (2, e);
    let seed = a.seed;
    let seeded = cmd.seeded();
    let out = &a.out;
    // configs are parsed before anything is written
    macro_rules! go {
        ($f:expr) => {{
            let job = load_config(&a.config, seed, seeded).map_err(cfg)?;
            let guard = OutputGuard::new(out).map_err(|e| (1, e))?;
            match $f(job) {
                Ok(s) => Ok(s),
                Err(e) => {
                    guard.rollback();
                    Err((1, e))
                }
            }
        }};
    }
    match cmd {
        Command::Generate(_) => go!(|j| cmd_generate(j, out)),
        Command::Flow(_) => go!(|j| cmd_flow(j, out)),
        Command::Spot(_) => go!(|j| cmd_spot(j, out)),
        Command::Extract(_) => go!(|j| cmd_extract(j, out)),
        Command::TrainSvm(_) => go!(|j| cmd_train_svm(j, out)),
        Command::TrainCnn(_) => go!(|j| cmd_train_cnn(j, out)),
        Command::TrainGan(_) => go!(|j| cmd_train_gan(j, out)),
        Command::Evaluate(_) => go!(|j| cmd_evaluate(j, out, jobs)),
        Command::Report(_) => go!(|j| cmd_report(j, out)),
    }
}

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 when the run failed or some folds
/// failed, 2 for usage and config errors.
pub fn dispatch<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let a = cli.command.args();
    init_logging(a.verbose);
    let jobs = a
        .jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    match pool.install(|| run(&cli.command, jobs)) {
        Ok(Status::Ok) => 0,
        Ok(Status::Incomplete(why)) => {
            eprintln!("error: some steps failed:\n{why}");
            1
        }
        Err((code, e)) => {
            eprintln!("error: {e}");
            if code == 2 {
                eprintln!("\n{}", Cli::command().render_usage());
            }
            code
        }
    }
}
