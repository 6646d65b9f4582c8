//! End-to-end acceptance run. Prints one `PASS`/`FAIL` line per criterion
//! and exits non-zero if any criterion outside `KNOWN_GAPS` fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use mexflow::apex::{spot_apex_bruteforce, spot_apex_dc, MotionSignal};
use mexflow::cnn::{build_network, predict, stream_shapes, train, Fusion, OffApexNet, Sample, StreamSpec, TrainConfig};
use mexflow::derivatives::Channel;
use mexflow::derivatives::{compute_strain, derive_channels};
use mexflow::eval::experiment::{assemble_report, classifier_for, penultimate_snapshots};
use mexflow::eval::{
    accumulate, class_mean_silhouette, compute_metrics, losocv_split, prepare_samples, run_folds, ApexSource,
    ConfusionMatrix, ExperimentReport, Extractor, PipelineConfig, PreparedSample,
};
use mexflow::flow::{estimate_flow, lucas_kanade_with_mask, FlowConfig, FlowField, FlowMethod, FlowRegistry};
use mexflow::gan::{acgan_losses, generate_samples, train_gan, Discriminator, GanConfig, Generator};
use mexflow::imaging::{generate_synthetic_corpus, GrayImage, Plane, SyntheticCorpus, SyntheticSpec, Texture};
use mexflow::numerics::{grad_check, Parameterized, Tensor};
use mexflow::rng::{derive_seed_str, seeded};
use rand::Rng;

/// Criteria expected to fail; see the README.
const KNOWN_GAPS: &[usize] = &[10];

const CORPUS_SEED: u64 = 7;

type Criterion = (usize, &'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn corpus() -> &'static SyntheticCorpus {
    static C: OnceLock<SyntheticCorpus> = OnceLock::new();
    C.get_or_init(|| generate_synthetic_corpus(&SyntheticSpec::new(12, 5, CORPUS_SEED)).unwrap())
}

/// TV-L1 onset→spotted-apex channels for the 12×5 corpus.
fn prepared() -> &'static [PreparedSample] {
    static P: OnceLock<Vec<PreparedSample>> = OnceLock::new();
    P.get_or_init(|| {
        prepare_samples(
            &corpus().videos(),
            &FlowConfig::default(),
            ApexSource::Spotted,
            true,
            &FlowRegistry::new(),
            None,
        )
        .unwrap()
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn image(plane: &Plane) -> GrayImage {
    GrayImage::from_plane_clamped(plane).unwrap()
}

// ---------------------------------------------------------------- 1

fn criterion1() -> Outcome {
    const SIZE: usize = 64;
    const MARGIN: usize = 6;
    let mut rng = seeded(101);
    let mut errors: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut sup: f64 = 0.0;
    for k in 0..50 {
        let tex = Texture::random(SIZE, 1000 + k);
        // smooth warp: translation plus a gentle affine part, |d| <= 2 px
        let (tx, ty) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let (a, b, c, d) = (
            rng.gen_range(-0.005..0.005),
            rng.gen_range(-0.005..0.005),
            rng.gen_range(-0.005..0.005),
            rng.gen_range(-0.005..0.005),
        );
        let half = SIZE as f64 / 2.0;
        let disp = |x: usize, y: usize| {
            let (u, v) = (x as f64 - half, y as f64 - half);
            (tx + a * u + b * v, ty + c * u + d * v)
        };
        let truth = FlowField::from_planes(
            Plane::from_fn(SIZE, SIZE, |x, y| disp(x, y).0),
            Plane::from_fn(SIZE, SIZE, |x, y| disp(x, y).1),
        )
        .unwrap();
        assert!(truth.max_magnitude() <= 2.0);
        let f0 = image(&tex.render_displaced(SIZE, SIZE, |_, _| (0.0, 0.0)));
        let f1 = image(&tex.render_displaced(SIZE, SIZE, disp));
        let interior =
            |x: usize, y: usize| (MARGIN..SIZE - MARGIN).contains(&x) && (MARGIN..SIZE - MARGIN).contains(&y);
        for m in FlowMethod::BUILTIN {
            let cfg = FlowConfig::with_method(m.clone());
            let (field, mask) = if m == FlowMethod::LucasKanade {
                lucas_kanade_with_mask(f0.as_plane(), f1.as_plane(), &cfg).unwrap()
            } else {
                (estimate_flow(&f0, &f1, &cfg).unwrap(), vec![true; SIZE * SIZE])
            };
            let epe = field.endpoint_error(&truth).unwrap();
            let e = errors.entry(m.name().to_string()).or_default();
            for (i, &ok) in mask.iter().enumerate() {
                if ok && interior(i % SIZE, i / SIZE) {
                    e.push(epe.data[i]);
                }
            }
            if k < 5 {
                sup = sup.max(estimate_flow(&f0, &f0, &cfg).unwrap().max_magnitude());
            }
        }
    }
    let medians: Vec<(String, f64)> = errors.into_iter().map(|(m, e)| (m, median(e))).collect();
    let pass = medians.iter().all(|(_, e)| *e < 0.2) && sup < 1e-3;
    let detail = medians
        .iter()
        .map(|(m, e)| format!("{m} median EPE {e:.4}"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(pass, format!("{detail}; identical-frame sup-norm {sup:.2e}"))
}

// ---------------------------------------------------------------- 2

fn criterion2() -> Outcome {
    let mut rng = seeded(202);
    let (w, h) = (17, 13);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let c: Vec<f64> = (0..6).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let flow = FlowField::from_planes(
            Plane::from_fn(w, h, |x, y| c[0] + c[1] * x as f64 + c[2] * y as f64),
            Plane::from_fn(w, h, |x, y| c[3] + c[4] * x as f64 + c[5] * y as f64),
        )
        .unwrap();
        let s = compute_strain(&flow).unwrap();
        let (exx, eyy, exy) = (c[1], c[5], 0.5 * (c[2] + c[4]));
        let emag = (exx * exx + eyy * eyy + 2.0 * exy * exy).sqrt();
        for y in 1..h - 1 {
            for x in 1..w - 1 {
                let i = y * w + x;
                for (got, want) in [
                    (s.eps_xx.data[i], exx),
                    (s.eps_yy.data[i], eyy),
                    (s.eps_xy.data[i], exy),
                    (s.eps_mag.data[i], emag),
                ] {
                    worst = worst.max((got - want).abs());
                }
            }
        }
    }
    let mut rigid: f64 = 0.0;
    for _ in 0..20 {
        let (p, q) = (rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
        let ch = derive_channels(&FlowField::constant(w, h, p, q)).unwrap();
        for c in [
            Channel::EpsXx,
            Channel::EpsYy,
            Channel::EpsXy,
            Channel::EpsYx,
            Channel::EpsMag,
        ] {
            rigid = rigid.max(ch.get(c).data.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        }
    }
    outcome(
        worst < 1e-10 && rigid == 0.0,
        format!("max affine strain error {worst:.2e}; translation strain max {rigid:.1e}"),
    )
}

// ---------------------------------------------------------------- 3

fn criterion3() -> Outcome {
    let c = corpus();
    let within = prepared()
        .iter()
        .filter(|s| {
            let truth = c.truth.get(&s.record.video_id).unwrap().apex_index;
            s.apex_index.abs_diff(truth) <= 2
        })
        .count();
    let rate = within as f64 / prepared().len() as f64;

    let mut rng = seeded(303);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.gen_range(1..=80);
        let peak = rng.gen_range(0..n);
        let mut v = vec![0.0; n];
        v[peak] = rng.gen_range(1.0..10.0);
        for i in (0..peak).rev() {
            v[i] = v[i + 1] - rng.gen_range(0.01..1.0);
        }
        for i in peak + 1..n {
            v[i] = v[i - 1] - rng.gen_range(0.01..1.0);
        }
        let sig = MotionSignal::new(v);
        if spot_apex_dc(&sig).unwrap().apex_index != spot_apex_bruteforce(&sig) {
            mismatches += 1;
        }
    }
    outcome(
        rate >= 0.9 && mismatches == 0,
        format!(
            "{within}/{} videos within ±2 frames ({:.1}%); D&C vs argmax mismatches {mismatches}/1000",
            prepared().len(),
            100.0 * rate
        ),
    )
}

// ---------------------------------------------------------------- 4

fn criterion4() -> Outcome {
    let mut left = vec![0.0; 40];
    left[5] = 1.0;
    let mut right = vec![0.0; 40];
    right[30] = 1.0;
    let l = spot_apex_dc(&MotionSignal::new(left)).unwrap().visited_ranges;
    let r = spot_apex_dc(&MotionSignal::new(right)).unwrap().visited_ranges;
    let pass = l[0] == (0, 39) && l[1] == (0, 19) && r[1] == (20, 39);
    outcome(pass, format!("first split kept {:?} / {:?}", l[1], r[1]))
}

// ---------------------------------------------------------------- 5

fn toy_image(seed: usize, f: impl Fn(usize, usize) -> f64) -> Tensor {
    Tensor::from_fn(&[28, 28, 1], |i| {
        let (r, c) = (i / 28, i % 28);
        f(r, c) + 0.05 * (((i * 7 + seed * 13) % 17) as f64 / 17.0 - 0.5)
    })
}

fn criterion5() -> Outcome {
    let mut notes = Vec::new();
    let net = build_network(&StreamSpec::original(), 1).unwrap();
    let shapes = stream_shapes(&net.streams[0], &toy_image(0, |_, _| 0.0)).unwrap();
    let want = vec![vec![28, 28, 6], vec![14, 14, 6], vec![14, 14, 16], vec![7, 7, 16]];
    let three = StreamSpec::new(&[Channel::P, Channel::Q, Channel::EpsMag], Fusion::Multiply);
    let heads = (StreamSpec::original().head_input(), three.head_input());
    let structural = shapes == want && heads == (1568, 784);
    notes.push(format!("shapes {shapes:?}, heads {heads:?}"));

    let mut grad_ok = true;
    for (spec, seed) in [(StreamSpec::original(), 3u64), (three.clone(), 4)] {
        let mut net = build_network(&spec, seed).unwrap();
        let inputs: Vec<Tensor> = (0..spec.streams())
            .map(|s| toy_image(s + 10, |r, c| ((r + 2 * c + 3 * s) % 11) as f64 / 5.0 - 1.0))
            .collect();
        let rep = grad_check(&mut net, inputs.as_slice(), 2, 1e-5, 300, seed).unwrap();
        grad_ok &= rep.max_relative_error < 1e-4;
        notes.push(format!("{} grad rel err {:.2e}", spec.label(), rep.max_relative_error));
    }

    let data: Vec<Sample> = (0..30)
        .map(|i| {
            let label = i % 3;
            let inputs = (0..2)
                .map(|s| {
                    toy_image(i * 3 + s, |r, c| {
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
        .collect();
    let mut net: OffApexNet = build_network(&StreamSpec::original(), 8).unwrap();
    let cfg = TrainConfig {
        epochs: 500,
        checkpoints: vec![],
        seed: 8,
        ..Default::default()
    };
    let trace = train(&mut net, &data, &cfg, &mut |_, _| Ok(())).unwrap();
    let first = trace.epochs.iter().find(|e| e.train_acc == 1.0).map(|e| e.epoch);
    let correct = data
        .iter()
        .filter(|s| predict(&net, &s.inputs).unwrap() == s.label)
        .count();
    notes.push(format!(
        "toy set 100% train accuracy at epoch {first:?}, final {correct}/30"
    ));
    outcome(
        structural && grad_ok && first.is_some() && correct == 30,
        notes.join("; "),
    )
}

// ---------------------------------------------------------------- 6

fn losocv(config: &PipelineConfig, samples: &[PreparedSample]) -> ExperimentReport {
    let records: Vec<_> = samples.iter().map(|s| s.record.clone()).collect();
    let plan = losocv_split(&records).unwrap();
    let folds = run_folds(samples, &plan, classifier_for(config).as_ref(), config.seed, 1).unwrap();
    assemble_report(config, folds).unwrap()
}

fn criterion6() -> Outcome {
    let cnn = PipelineConfig {
        name: "cnn_pq_epsmag_multiply".into(),
        extractor: Extractor::Cnn,
        streams: StreamSpec::new(&[Channel::P, Channel::Q, Channel::EpsMag], Fusion::Multiply),
        train: TrainConfig {
            epochs: 50,
            checkpoints: vec![],
            ..Default::default()
        },
        seed: 11,
        ..Default::default()
    };
    let svm = PipelineConfig {
        name: "biwoof_b5".into(),
        extractor: Extractor::BiwoofSvm,
        seed: 11,
        ..Default::default()
    };
    assert_eq!(svm.biwoof.blocks_per_side, 5);
    let rc = losocv(&cnn, prepared());
    let rs = losocv(&svm, prepared());
    let mc = rc.metrics.clone().unwrap();
    let ms = rs.metrics.clone().unwrap();
    let pass = rc.failures.is_empty()
        && rs.failures.is_empty()
        && mc.accuracy >= 0.80
        && mc.macro_f1 >= 0.75
        && ms.accuracy >= 0.70
        && rc.audit.passed
        && rs.audit.passed;
    outcome(
        pass,
        format!(
            "CNN acc {:.3} macro-F1 {:.3}; Bi-WOOF+SVM B=5 acc {:.3} macro-F1 {:.3}",
            mc.accuracy, mc.macro_f1, ms.accuracy, ms.macro_f1
        ),
    )
}

// ---------------------------------------------------------------- 7

fn recount(cm: &ConfusionMatrix) -> (f64, [f64; 3], f64) {
    let mut pairs = Vec::new();
    for (t, row) in cm.counts.iter().enumerate() {
        for (p, &n) in row.iter().enumerate() {
            pairs.extend(std::iter::repeat_n((t, p), n as usize));
        }
    }
    let correct = pairs.iter().filter(|(t, p)| t == p).count();
    let mut f1 = [0.0; 3];
    for (k, f) in f1.iter_mut().enumerate() {
        let tp = pairs.iter().filter(|&&(t, p)| t == k && p == k).count() as f64;
        let fp = pairs.iter().filter(|&&(t, p)| t != k && p == k).count() as f64;
        let fn_ = pairs.iter().filter(|&&(t, p)| t == k && p != k).count() as f64;
        let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let rec = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        *f = if prec + rec > 0.0 {
            2.0 * prec * rec / (prec + rec)
        } else {
            0.0
        };
    }
    (correct as f64 / pairs.len() as f64, f1, (f1[0] + f1[1] + f1[2]) / 3.0)
}

fn criterion7() -> Outcome {
    let mut rng = seeded(707);
    let mut differing = 0;
    for _ in 0..200 {
        let pairs: Vec<(usize, usize)> = (0..rng.gen_range(1..80))
            .map(|_| (rng.gen_range(0..3), rng.gen_range(0..3)))
            .collect();
        let cm = accumulate(&pairs).unwrap();
        let m = compute_metrics(&cm).unwrap();
        let (acc, f1, macro_f1) = recount(&cm);
        if m.accuracy != acc || m.f1 != f1 || m.macro_f1 != macro_f1 {
            differing += 1;
        }
    }
    outcome(
        differing == 0,
        format!("{differing}/200 matrices differ from the recount"),
    )
}

// ---------------------------------------------------------------- 8

fn mean_distance(images: &[Tensor], target: &Tensor) -> f64 {
    let per: Vec<f64> = images
        .iter()
        .map(|t| {
            t.data()
                .iter()
                .zip(target.data())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / t.len() as f64
        })
        .collect();
    per.iter().sum::<f64>() / per.len() as f64
}

fn criterion8() -> Outcome {
    let mut notes = Vec::new();

    let mut d = Discriminator::new(3);
    for p in d.parameters_mut() {
        p.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    let reals: Vec<Tensor> = (0..6)
        .map(|k| toy_image(k, |r, c| ((r * c) % 9) as f64 / 9.0 - 0.5))
        .collect();
    let labels: Vec<usize> = (0..6).map(|k| k % 3).collect();
    let real = d.forward(&reals.iter().collect::<Vec<_>>()).unwrap();
    let fakes = generate_samples(&Generator::new(8, 1), 1, 6, 2).unwrap();
    let fake = d.forward(&fakes.iter().collect::<Vec<_>>()).unwrap();
    let (ls, lc) = acgan_losses(&real, &fake, &labels, &[1; 6]).unwrap();
    let (es, ec) = ((ls - 2.0 * 0.5f64.ln()).abs(), (lc - 2.0 * (1.0f64 / 3.0).ln()).abs());
    let closed = es < 1e-9 && ec < 1e-9;
    notes.push(format!("closed-form errors L_S {es:.1e} L_C {ec:.1e}"));

    let target = Tensor::from_fn(&[28, 28, 1], |i| {
        let (r, c) = ((i / 28) as f64 - 13.5, (i % 28) as f64 - 13.5);
        (1.6 * (-(r * r + c * c) / 60.0).exp() - 0.8).clamp(-1.0, 1.0)
    });
    let config = GanConfig {
        iterations: 500,
        seed: 5,
        ..GanConfig::default()
    };
    let data: Vec<(Tensor, usize)> = vec![(target.clone(), 0); config.batch_size];
    let start_gen = Generator::new(config.noise_dim, derive_seed_str(config.seed, "generator"));
    let start = mean_distance(&generate_samples(&start_gen, 0, 32, 9).unwrap(), &target);
    let trained = train_gan(&data, &config).unwrap().generator;
    let end = mean_distance(&generate_samples(&trained, 0, 32, 9).unwrap(), &target);
    notes.push(format!("memorization distance {start:.4} -> {end:.4}"));

    let mut rng = seeded(808);
    let mut bounded = true;
    for gen in [&start_gen, &trained] {
        for scale in [0.0, 1.0, 10.0, 1e3] {
            let z: Vec<Vec<f64>> = (0..6)
                .map(|_| (0..gen.noise_dim).map(|_| scale * rng.gen_range(-1.0..1.0)).collect())
                .collect();
            let out = gen.generate(&z, &[0, 1, 2, 0, 1, 2]).unwrap();
            bounded &= out.iter().all(|t| t.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }
    notes.push(format!("outputs in [-1, 1]: {bounded}"));

    let augmented = PipelineConfig {
        name: "biwoof_gan".into(),
        extractor: Extractor::BiwoofSvm,
        augmentation: Some(GanConfig {
            noise_dim: 16,
            iterations: 10,
            batch_size: 8,
            ..GanConfig::default()
        }),
        seed: 13,
        ..Default::default()
    };
    let report = losocv(&augmented, prepared());
    let a = &report.audit;
    notes.push(format!(
        "audit: {} folds, {} synthetic training samples, {} in test",
        a.folds_checked, a.synthetic_training_samples, a.synthetic_in_test
    ));
    let audit_ok = a.passed && a.folds_checked == 12 && a.synthetic_training_samples > 0 && report.failures.is_empty();
    outcome(closed && end < start && bounded && audit_ok, notes.join("; "))
}

// ---------------------------------------------------------------- 9

fn tree(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn criterion9() -> Outcome {
    use serde_json::json;
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let cli = |cmd: &str, cfg: &serde_json::Value, out: &Path| -> i32 {
        let path = root.join(format!("{cmd}.json"));
        std::fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
        let args = [
            "mexflow",
            cmd,
            "--config",
            path.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        mexflow::cli::dispatch(args)
    };
    let gen = json!({ "subjects": 3, "videos_per_subject": 3, "frames_per_video": 8, "image_size": 32, "seed": 3 });
    let manifest = root.join("generate_a/manifest.json");
    let flow = json!({ "pyramid_levels": 2 });
    let base = |extra: serde_json::Value| {
        let mut v = json!({ "manifest": manifest, "flow": flow });
        v.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
        v
    };
    let small_cnn = json!({ "epochs": 3, "checkpoints": [1, 3] });
    let commands: Vec<(&str, serde_json::Value)> = vec![
        ("generate", gen),
        ("flow", base(json!({}))),
        ("spot", base(json!({}))),
        ("extract", base(json!({}))),
        ("train-svm", base(json!({ "seed": 2 }))),
        ("train-cnn", base(json!({ "train": small_cnn, "seed": 2 }))),
        (
            "train-gan",
            base(
                json!({ "gan": { "noise_dim": 8, "iterations": 3, "batch_size": 4 }, "fakes_per_class": 2, "seed": 2 }),
            ),
        ),
        (
            "evaluate",
            json!({
                "manifest": manifest,
                "experiments": [
                    { "name": "svm", "flow": flow },
                    { "name": "cnn", "flow": flow, "extractor": "cnn", "train": small_cnn },
                    { "name": "svm_gan", "flow": flow, "augmentation": { "noise_dim": 8, "iterations": 2, "batch_size": 4 } }
                ],
                "sweep": { "base": { "flow": flow }, "methods": ["horn_schunck", "lucas_kanade"], "blocks": [2] },
                "seed": 2
            }),
        ),
        (
            "report",
            json!({
                "reports": [root.join("evaluate_a/svm"), root.join("evaluate_a/cnn")],
                "pca": { "manifest": manifest, "flow": flow, "train": { "epochs": 2 }, "epochs": [0, 2] },
                "seed": 2
            }),
        ),
    ];
    let mut notes = Vec::new();
    let mut pass = true;
    for (cmd, cfg) in &commands {
        let (a, b) = (root.join(format!("{cmd}_a")), root.join(format!("{cmd}_b")));
        let codes = (cli(cmd, cfg, &a), cli(cmd, cfg, &b));
        let same = codes == (0, 0) && tree(&a) == tree(&b);
        pass &= same;
        notes.push(format!("{cmd} {}", if same { "identical" } else { "DIFFERS" }));
    }
    outcome(pass, notes.join(", "))
}

// ---------------------------------------------------------------- 10

fn criterion10() -> Outcome {
    let samples = prepared();
    let labels: Vec<usize> = samples.iter().map(|s| s.label()).collect();
    let streams = StreamSpec::new(&[Channel::P, Channel::Q, Channel::Rho], Fusion::Concat);
    let train = TrainConfig {
        epochs: 600,
        checkpoints: vec![0, 600],
        ..Default::default()
    };
    let snaps = penultimate_snapshots(samples, &streams, &train, 17).unwrap();
    let s0 = class_mean_silhouette(&snaps[0].1, &labels).unwrap();
    let s600 = class_mean_silhouette(&snaps[1].1, &labels).unwrap();
    outcome(
        snaps[0].0 == 0 && snaps[1].0 == 600 && s0 < 0.1 && s600 > 0.3,
        format!("silhouette epoch 0 {s0:.3} (needs < 0.1), epoch 600 {s600:.3} (needs > 0.3)"),
    )
}

fn main() {
    // cargo passes harness flags such as --test-threads; a filter narrows the run
    let filter: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let criteria: [Criterion; 10] = [
        (1, "flow soundness", criterion1),
        (2, "strain exactness", criterion2),
        (3, "apex recovery", criterion3),
        (4, "40-frame split", criterion4),
        (5, "CNN structure and gradients", criterion5),
        (6, "synthetic LOSOCV", criterion6),
        (7, "metric oracle", criterion7),
        (8, "AC-GAN behaviour", criterion8),
        (9, "determinism", criterion9),
        (10, "PCA separation trend", criterion10),
    ];
    let mut unexpected = Vec::new();
    for (n, name, run) in criteria {
        if !filter.is_empty() && !filter.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let o = run();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let gap = if !o.pass && KNOWN_GAPS.contains(&n) {
            " [known gap]"
        } else {
            ""
        };
        println!(
            "{status} {n:>2} {name}: {} ({:.1} s){gap}",
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass && gap.is_empty() {
            unexpected.push(n);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}
