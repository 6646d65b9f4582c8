//! Report files: pooled metrics, confusion, predictions, per-fold and
//! per-epoch tables, PCA scatter CSVs and the config echo.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::experiment::ExperimentReport;
use crate::error::{Error, Result};
use crate::numerics::{pca_fit, Pca};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub sample_id: String,
    pub class: usize,
    pub pc1: f64,
    pub pc2: f64,
}

/// Projects features onto their first two principal axes.
pub fn pca_scatter(features: &[Vec<f64>], ids: &[String], labels: &[usize]) -> Result<(Vec<ScatterPoint>, Pca)> {
    if features.len() != ids.len() || ids.len() != labels.len() {
        return Err(Error::shape(
            "pca scatter",
            &[features.len()],
            &[ids.len(), labels.len()],
        ));
    }
    let pca = pca_fit(features, 2)?;
    let points = features
        .iter()
        .zip(ids)
        .zip(labels)
        .map(|((f, id), &class)| {
            let p = pca.project(f)?;
            Ok(ScatterPoint {
                sample_id: id.clone(),
                class,
                pc1: p[0],
                pc2: p[1],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((points, pca))
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn scatter_csv(points: &[ScatterPoint]) -> String {
    let mut s = String::from("sample_id,class,pc1,pc2\n");
    for p in points {
        writeln!(s, "{},{},{},{}", p.sample_id, p.class, p.pc1, p.pc2).unwrap();
    }
    s
}

/// Writes `report.json`, `config.json`, `metrics.csv`, `confusion.csv`,
/// `predictions.csv`, `folds.csv`, `epochs.csv` (when the run has
/// checkpoints) and one `scatter_epoch<N>.csv` per scatter set.
pub fn emit_report(report: &ExperimentReport, dir: &Path, scatter: &[(usize, Vec<ScatterPoint>)]) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write(dir, "report.json", &(serde_json::to_string_pretty(report)? + "\n"))?;
    write(
        dir,
        "config.json",
        &(serde_json::to_string_pretty(&report.config)? + "\n"),
    )?;

    let mut s = String::from("name,accuracy,macro_f1,subject_mean_accuracy,f1_negative,f1_positive,f1_surprise\n");
    if let Some(m) = &report.metrics {
        writeln!(
            s,
            "{},{},{},{},{},{},{}",
            report.config.name,
            m.accuracy,
            m.macro_f1,
            report.subject_mean_accuracy.unwrap_or(f64::NAN),
            m.f1[0],
            m.f1[1],
            m.f1[2]
        )
        .unwrap();
    }
    write(dir, "metrics.csv", &s)?;

    let mut s = String::from("true\\predicted,negative,positive,surprise\n");
    for (name, row) in ["negative", "positive", "surprise"]
        .iter()
        .zip(&report.confusion.counts)
    {
        writeln!(s, "{name},{},{},{}", row[0], row[1], row[2]).unwrap();
    }
    write(dir, "confusion.csv", &s)?;

    let mut s = String::from("video_id,test_subject,true,predicted\n");
    for f in report.folds.iter().filter(|f| f.error.is_none()) {
        for ((id, t), p) in f.test_ids.iter().zip(&f.truth).zip(&f.predictions) {
            writeln!(s, "{id},{},{t},{p}", f.test_subject).unwrap();
        }
    }
    write(dir, "predictions.csv", &s)?;

    let mut s = String::from("test_subject,train,synthetic,test,accuracy,test_digest,error\n");
    for f in &report.folds {
        let acc = report
            .metrics
            .as_ref()
            .and_then(|m| m.per_fold.get(&f.test_subject))
            .map_or(String::new(), |a| a.to_string());
        let err = f.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(
            s,
            "{},{},{},{},{acc},{},{err}",
            f.test_subject,
            f.train_count,
            f.synthetic_count,
            f.test_ids.len(),
            f.test_digest
        )
        .unwrap();
    }
    write(dir, "folds.csv", &s)?;

    if !report.epochs.is_empty() {
        write(dir, "epochs.csv", &epoch_table(&[report]))?;
    }
    for (epoch, points) in scatter {
        write(dir, &format!("scatter_epoch{epoch}.csv"), &scatter_csv(points))?;
    }
    Ok(())
}

/// Rows are epochs; two columns (`<name>_acc`, `<name>_f1`) per report.
pub fn epoch_table(reports: &[&ExperimentReport]) -> String {
    let mut epochs: Vec<usize> = reports.iter().flat_map(|r| r.epochs.iter().map(|e| e.epoch)).collect();
    epochs.sort_unstable();
    epochs.dedup();
    let mut s = String::from("epoch");
    for r in reports {
        write!(s, ",{0}_acc,{0}_f1", r.config.name).unwrap();
    }
    s.push('\n');
    for e in epochs {
        write!(s, "{e}").unwrap();
        for r in reports {
            match r.epochs.iter().find(|row| row.epoch == e) {
                Some(row) => write!(s, ",{},{}", row.accuracy, row.macro_f1).unwrap(),
                None => s.push_str(",,"),
            }
        }
        s.push('\n');
    }
    s
}

/// `flow,blocks,accuracy,macro_f1` rows.
pub fn sweep_table(rows: &[(String, usize, ExperimentReport)]) -> String {
    let mut s = String::from("flow,blocks,accuracy,macro_f1\n");
    for (flow, b, r) in rows {
        let (a, f) = r
            .metrics
            .as_ref()
            .map_or((f64::NAN, f64::NAN), |m| (m.accuracy, m.macro_f1));
        writeln!(s, "{flow},{b},{a},{f}").unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scatter_reprojects() {
        let feats: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![i as f64, (i * i % 7) as f64, (i % 3) as f64 * 2.0, 1.0])
            .collect();
        let ids: Vec<String> = (0..12).map(|i| format!("v{i}")).collect();
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let (pts, pca) = pca_scatter(&feats, &ids, &labels).unwrap();
        for (p, f) in pts.iter().zip(&feats) {
            // (x - mean)·basis computed directly
            let c: Vec<f64> = f.iter().zip(&pca.mean).map(|(a, m)| a - m).collect();
            let pc1: f64 = (0..4).map(|d| c[d] * pca.basis[d * 2]).sum();
            let pc2: f64 = (0..4).map(|d| c[d] * pca.basis[d * 2 + 1]).sum();
            assert!((p.pc1 - pc1).abs() < 1e-12 && (p.pc2 - pc2).abs() < 1e-12);
        }
        let csv = scatter_csv(&pts);
        assert_eq!(csv.lines().count(), 13);
        assert!(csv.starts_with("sample_id,class,pc1,pc2\n"));
    }
}
