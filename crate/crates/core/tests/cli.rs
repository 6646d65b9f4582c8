use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mexflow::cli::dispatch;
use serde_json::json;

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

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![
        "mexflow".to_string(),
        cmd.to_string(),
        "--config".into(),
        config.display().to_string(),
        "--out".into(),
        out.display().to_string(),
    ];
    if !extra.contains(&"--jobs") {
        args.extend(["--jobs".to_string(), "1".to_string()]);
    }
    args.extend(extra.iter().map(|s| s.to_string()));
    dispatch(args)
}

fn write_config(dir: &Path, name: &str, value: serde_json::Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(&value).unwrap()).unwrap();
    p
}

fn corpus_spec(subjects: usize, videos: usize) -> serde_json::Value {
    json!({
        "subjects": subjects,
        "videos_per_subject": videos,
        "frames_per_video": 6,
        "image_size": 32,
        "seed": 4
    })
}

fn small_flow() -> serde_json::Value {
    json!({ "pyramid_levels": 2 })
}

/// Generates a corpus and returns its manifest path.
fn corpus(root: &Path, subjects: usize, videos: usize) -> PathBuf {
    let cfg = write_config(root, "corpus.json", corpus_spec(subjects, videos));
    let out = root.join("corpus");
    assert_eq!(run("generate", &cfg, &out, &[]), 0);
    out.join("manifest.json")
}

#[test]
fn generate_writes_corpus_and_echo() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 2, 3);
    let out = manifest.parent().unwrap();
    assert!(out.join("truth.json").exists());
    assert!(out.join("frames/s01_v00/000.pgm").exists());
    let echo: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("config.json")).unwrap()).unwrap();
    assert_eq!(echo["subjects"], 2);
    assert_eq!(echo["seed"], 4);
    let records = mexflow::imaging::load_manifest(&manifest).unwrap();
    assert_eq!(records.len(), 6);
}

#[test]
fn seed_flag_wins_over_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", corpus_spec(1, 1));
    let out = dir.path().join("o");
    assert_eq!(run("generate", &cfg, &out, &["--seed", "99"]), 0);
    let echo = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert!(echo.contains("\"seed\": 99"));
}

#[test]
fn env_seed_only_fills_a_missing_seed() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = corpus_spec(1, 1);
    spec.as_object_mut().unwrap().remove("seed");
    let without = write_config(dir.path(), "a.json", spec);
    let with = write_config(dir.path(), "b.json", corpus_spec(1, 1));
    std::env::set_var("MEXFLOW_SEED", "31");
    let a = run("generate", &without, &dir.path().join("a"), &[]);
    let b = run("generate", &with, &dir.path().join("b"), &[]);
    std::env::remove_var("MEXFLOW_SEED");
    assert_eq!((a, b), (0, 0));
    let seed_of = |d: &str| {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(d).join("config.json")).unwrap()).unwrap();
        v["seed"].as_u64().unwrap()
    };
    assert_eq!(seed_of("a"), 31);
    assert_eq!(seed_of("b"), 4);
}

#[test]
fn usage_and_config_errors_exit_nonzero_without_output() {
    let dir = tempfile::tempdir().unwrap();
    assert_ne!(dispatch(["mexflow", "frobnicate"]), 0);
    assert_ne!(dispatch(["mexflow", "generate"]), 0);
    let bad = write_config(
        dir.path(),
        "bad.json",
        json!({ "subjects": 1, "videos_per_subject": 1, "colour": 3 }),
    );
    let out = dir.path().join("never");
    assert_eq!(run("generate", &bad, &out, &[]), 2);
    assert!(!out.exists());
    assert_eq!(run("generate", &dir.path().join("missing.json"), &out, &[]), 2);
    assert!(!out.exists());
}

#[test]
fn failed_run_removes_only_its_own_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("keep.txt"), "x").unwrap();
    let cfg = write_config(
        dir.path(),
        "e.json",
        json!({ "manifest": dir.path().join("nope.json"), "experiments": [{ "name": "a" }], "seed": 0 }),
    );
    assert_eq!(run("evaluate", &cfg, &out, &[]), 1);
    assert_eq!(tree(&out).keys().collect::<Vec<_>>(), [Path::new("keep.txt")]);
    let fresh = dir.path().join("fresh");
    assert_eq!(run("evaluate", &cfg, &fresh, &[]), 1);
    assert!(!fresh.exists());
}

#[test]
fn per_stage_commands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 2, 3);
    let base = json!({ "manifest": manifest, "flow": small_flow(), "apex": "annotated" });
    let with = |extra: serde_json::Value| {
        let mut v = base.clone();
        v.as_object_mut().unwrap().extend(extra.as_object().unwrap().clone());
        v
    };
    let cases: Vec<(&str, serde_json::Value, Vec<&str>)> = vec![
        (
            "flow",
            with(json!({ "videos": ["s01_v00"] })),
            vec!["pairs.csv", "flows/s01_v00.mefl", "channels/s01_v00_eps_mag.pgm"],
        ),
        (
            "extract",
            with(json!({ "biwoof": { "blocks_per_side": 3 } })),
            vec!["features.csv"],
        ),
        (
            "train-svm",
            with(json!({ "seed": 1 })),
            vec!["model.msvm", "train_predictions.csv"],
        ),
        (
            "train-cnn",
            with(json!({ "train": { "epochs": 2, "checkpoints": [0, 2] }, "seed": 1 })),
            vec![
                "trace.csv",
                "model/index.json",
                "checkpoints/epoch0/index.json",
                "checkpoints/epoch2/index.json",
            ],
        ),
        (
            "train-gan",
            with(
                json!({ "gan": { "noise_dim": 4, "iterations": 2, "batch_size": 4 }, "fakes_per_class": 2, "seed": 1 }),
            ),
            vec![
                "p/generator/index.json",
                "q/discriminator/index.json",
                "p/trace.csv",
                "fakes/fakes.csv",
            ],
        ),
    ];
    for (cmd, cfg, files) in cases {
        let path = write_config(dir.path(), &format!("{cmd}.json"), cfg);
        let out = dir.path().join(cmd);
        assert_eq!(run(cmd, &path, &out, &[]), 0, "{cmd}");
        assert!(out.join("config.json").exists(), "{cmd}");
        for f in files {
            assert!(out.join(f).exists(), "{cmd}: {f}");
        }
    }
    let spot = write_config(
        dir.path(),
        "spot.json",
        json!({ "manifest": manifest, "flow": small_flow() }),
    );
    assert_eq!(run("spot", &spot, &dir.path().join("spot"), &[]), 0);
    let csv = std::fs::read_to_string(dir.path().join("spot/apex.csv")).unwrap();
    assert_eq!(
        csv.lines().next().unwrap(),
        "video_id,spotted_apex,truth_apex,abs_error"
    );
    assert_eq!(csv.lines().count(), 7);
}

#[test]
fn evaluate_and_report_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = corpus(dir.path(), 3, 3);
    let eval = write_config(
        dir.path(),
        "eval.json",
        json!({
            "manifest": manifest,
            "experiments": [
                { "name": "biwoof", "flow": small_flow(), "apex": "annotated" },
                {
                    "name": "cnn",
                    "flow": small_flow(),
                    "apex": "annotated",
                    "extractor": "cnn",
                    "train": { "epochs": 2, "checkpoints": [1, 2] }
                }
            ],
            "sweep": { "base": { "flow": small_flow(), "apex": "annotated" }, "methods": ["horn_schunck"], "blocks": [2, 3] },
            "seed": 5
        }),
    );
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run("evaluate", &eval, &a, &[]), 0);
    assert_eq!(run("evaluate", &eval, &b, &["--jobs", "2"]), 0);
    let ta = tree(&a);
    assert_eq!(ta, tree(&b));
    for f in [
        "summary.csv",
        "epochs.csv",
        "sweep.csv",
        "biwoof/confusion.csv",
        "cnn/report.json",
        "config.json",
    ] {
        assert!(ta.contains_key(Path::new(f)), "{f}");
    }
    assert_eq!(
        std::str::from_utf8(&ta[Path::new("sweep.csv")])
            .unwrap()
            .lines()
            .count(),
        3
    );

    let report = write_config(
        dir.path(),
        "report.json",
        json!({
            "reports": [a.join("biwoof"), a.join("cnn/report.json")],
            "pca": {
                "manifest": manifest,
                "flow": small_flow(),
                "apex": "annotated",
                "train": { "epochs": 2 },
                "epochs": [0, 2]
            },
            "seed": 1
        }),
    );
    let (ra, rb) = (dir.path().join("ra"), dir.path().join("rb"));
    assert_eq!(run("report", &report, &ra, &[]), 0);
    assert_eq!(run("report", &report, &rb, &[]), 0);
    let t = tree(&ra);
    assert_eq!(t, tree(&rb));
    for f in [
        "summary.csv",
        "epochs.csv",
        "scatter_epoch0.csv",
        "scatter_epoch2.csv",
        "silhouette.csv",
    ] {
        assert!(t.contains_key(Path::new(f)), "{f}");
    }
}

#[test]
fn fold_failures_give_nonzero_exit_but_keep_the_report() {
    let dir = tempfile::tempdir().unwrap();
    // one video per subject: every training split misses a class
    let manifest = corpus(dir.path(), 3, 1);
    let cfg = write_config(
        dir.path(),
        "e.json",
        json!({
            "manifest": manifest,
            "experiments": [{ "name": "cnn", "flow": small_flow(), "apex": "annotated", "extractor": "cnn",
                              "train": { "epochs": 1, "checkpoints": [] } }],
            "seed": 0
        }),
    );
    let out = dir.path().join("out");
    assert_eq!(run("evaluate", &cfg, &out, &[]), 1);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("cnn/report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 3);
}

#[test]
fn shipped_configs_parse() {
    use mexflow::cli::{EvaluateJob, ReportJob, SpotJob, TrainCnnJob, TrainGanJob};
    use mexflow::imaging::SyntheticSpec;
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let read = |name: &str| std::fs::read_to_string(dir.join(name)).unwrap();
    let spec: SyntheticSpec = serde_json::from_str(&read("generate.json")).unwrap();
    spec.validate().unwrap();
    serde_json::from_str::<SpotJob>(&read("spot.json")).unwrap();
    serde_json::from_str::<TrainCnnJob>(&read("train_cnn.json")).unwrap();
    serde_json::from_str::<TrainGanJob>(&read("train_gan.json")).unwrap();
    let eval: EvaluateJob = serde_json::from_str(&read("evaluate.json")).unwrap();
    for e in &eval.experiments {
        e.validate().unwrap();
    }
    serde_json::from_str::<ReportJob>(&read("report.json")).unwrap();
}
