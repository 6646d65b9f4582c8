//! Leave-one-subject-out evaluation, confusion matrices and metrics.

pub mod experiment;
pub mod report;
pub mod silhouette;

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

pub use experiment::{
    prepare_samples, run_experiment, run_folds, ApexSource, BiwoofSvmClassifier, CnnClassifier, ExperimentReport,
    Extractor, FoldClassifier, FoldResult, PipelineConfig, PreparedSample,
};
pub use report::{emit_report, pca_scatter, ScatterPoint};
pub use silhouette::{class_mean_silhouette, silhouette_samples};

use crate::error::{Error, Result};
use crate::imaging::{SampleRecord, NUM_CLASSES};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_subject: String,
    pub train: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
}

/// One fold per subject, subjects in lexicographic order; ids keep the
/// input order within each split.
pub fn losocv_split(samples: &[SampleRecord]) -> Result<FoldPlan> {
    let mut seen = HashSet::new();
    for s in samples {
        if !seen.insert(s.video_id.as_str()) {
            return Err(Error::invalid(format!("duplicate video id {}", s.video_id)));
        }
    }
    let mut subjects: Vec<&str> = samples.iter().map(|s| s.subject_id.as_str()).collect();
    subjects.sort_unstable();
    subjects.dedup();
    if subjects.len() < 2 {
        return Err(Error::invalid(format!(
            "leave-one-subject-out needs at least 2 subjects, got {}",
            subjects.len()
        )));
    }
    let folds = subjects
        .iter()
        .map(|&subj| {
            let (test, train): (Vec<&SampleRecord>, Vec<&SampleRecord>) =
                samples.iter().partition(|s| s.subject_id == subj);
            Fold {
                test_subject: subj.to_string(),
                train: train.iter().map(|s| s.video_id.clone()).collect(),
                test: test.iter().map(|s| s.video_id.clone()).collect(),
            }
        })
        .collect();
    Ok(FoldPlan { folds })
}

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.counts[i][i]).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for i in 0..NUM_CLASSES {
            for j in 0..NUM_CLASSES {
                self.counts[i][j] += other.counts[i][j];
            }
        }
    }
}

/// Counts `(true, predicted)` pairs.
pub fn accumulate(predictions: &[(usize, usize)]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for &(t, p) in predictions {
        if t >= NUM_CLASSES || p >= NUM_CLASSES {
            return Err(Error::invalid(format!("class pair ({t}, {p}) out of range")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: [f64; NUM_CLASSES],
    pub recall: [f64; NUM_CLASSES],
    pub f1: [f64; NUM_CLASSES],
    pub macro_f1: f64,
    /// Accuracy of each test subject's fold, keyed by subject.
    pub per_fold: BTreeMap<String, f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// One-vs-rest precision, recall and F1 per class; accuracy is
/// `trace / total`. Zero denominators give 0.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("cannot compute metrics of an empty confusion matrix"));
    }
    let mut precision = [0.0; NUM_CLASSES];
    let mut recall = [0.0; NUM_CLASSES];
    let mut f1 = [0.0; NUM_CLASSES];
    for k in 0..NUM_CLASSES {
        let tp = cm.counts[k][k];
        let fp: u64 = (0..NUM_CLASSES).filter(|&i| i != k).map(|i| cm.counts[i][k]).sum();
        let fn_: u64 = (0..NUM_CLASSES).filter(|&j| j != k).map(|j| cm.counts[k][j]).sum();
        precision[k] = ratio(tp, tp + fp);
        recall[k] = ratio(tp, tp + fn_);
        let s = precision[k] + recall[k];
        f1[k] = if s > 0.0 {
            2.0 * precision[k] * recall[k] / s
        } else {
            0.0
        };
    }
    Ok(MetricsReport {
        accuracy: ratio(cm.trace(), total),
        precision,
        recall,
        macro_f1: f1.iter().sum::<f64>() / NUM_CLASSES as f64,
        f1,
        per_fold: BTreeMap::new(),
    })
}
