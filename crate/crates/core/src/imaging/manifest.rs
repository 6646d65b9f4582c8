//! Dataset manifest: which frames make up each video, who the subject is,
//! and the emotion label.
//!
//! ```json
//! {"samples": [{"subject_id": "s01", "video_id": "s01_v0", "emotion": 1,
//!               "frames": ["frames/s01_v0/000.pgm", "..."],
//!               "onset_index": 0, "apex_index": 17, "source_db": "synthetic"}]}
//! ```
//!
//! Frame paths are resolved against the manifest's directory. When samples
//! come from more than one `source_db`, subject ids are namespaced as
//! `db:subject` so subjects of different databases never collide.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Emotion {
    Negative = 0,
    Positive = 1,
    Surprise = 2,
}

pub const NUM_CLASSES: usize = 3;

impl Emotion {
    pub const ALL: [Emotion; NUM_CLASSES] = [Emotion::Negative, Emotion::Positive, Emotion::Surprise];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Self> {
        Emotion::ALL
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("class id {i} out of range")))
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Negative => "negative",
            Emotion::Positive => "positive",
            Emotion::Surprise => "surprise",
        }
    }
}

impl TryFrom<u8> for Emotion {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        Emotion::from_index(v as usize).map_err(|_| format!("emotion must be 0, 1 or 2, got {v}"))
    }
}

impl From<Emotion> for u8 {
    fn from(e: Emotion) -> u8 {
        e as u8
    }
}

/// One video's metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub subject_id: String,
    pub video_id: String,
    pub emotion: Emotion,
    #[serde(rename = "frames")]
    pub frame_paths: Vec<PathBuf>,
    pub onset_index: usize,
    pub apex_index: Option<usize>,
    pub source_db: String,
}

impl SampleRecord {
    pub fn frame_count(&self) -> usize {
        self.frame_paths.len()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.frame_paths.len();
        if n < 2 {
            return Err(format!("needs at least 2 frames, has {n}"));
        }
        if self.onset_index >= n {
            return Err(format!("onset_index {} outside {n} frames", self.onset_index));
        }
        if let Some(apex) = self.apex_index {
            if apex <= self.onset_index {
                return Err(format!(
                    "apex_index {apex} must exceed onset_index {}",
                    self.onset_index
                ));
            }
            if apex >= n {
                return Err(format!("apex_index {apex} outside {n} frames"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestFile<T> {
    samples: Vec<T>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<SampleRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_manifest(&text, base, true)
}

/// Parses and validates manifest text. With `check_files`, every resolved
/// frame path must exist.
pub fn parse_manifest(text: &str, base_dir: &Path, check_files: bool) -> Result<Vec<SampleRecord>> {
    let raw: ManifestFile<serde_json::Value> =
        serde_json::from_str(text).map_err(|e| Error::Manifest(format!("not a manifest: {e}")))?;
    let mut problems = Vec::new();
    let mut records = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, value) in raw.samples.into_iter().enumerate() {
        let label = value
            .get("video_id")
            .and_then(|v| v.as_str())
            .map(|s| format!("record {i} ({s})"))
            .unwrap_or_else(|| format!("record {i}"));
        let mut rec: SampleRecord = match serde_json::from_value(value) {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("{label}: {e}"));
                continue;
            }
        };
        if let Err(e) = rec.validate() {
            problems.push(format!("{label}: {e}"));
            continue;
        }
        if !seen.insert(rec.video_id.clone()) {
            problems.push(format!("{label}: duplicate video_id"));
            continue;
        }
        for p in rec.frame_paths.iter_mut() {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
            if check_files && !p.is_file() {
                problems.push(format!("{label}: frame file {} does not exist", p.display()));
            }
        }
        records.push(rec);
    }
    if !problems.is_empty() {
        return Err(Error::Manifest(problems.join("; ")));
    }
    let dbs: BTreeSet<&str> = records.iter().map(|r| r.source_db.as_str()).collect();
    if dbs.len() > 1 {
        for r in records.iter_mut() {
            r.subject_id = format!("{}:{}", r.source_db, r.subject_id);
        }
    }
    Ok(records)
}

/// Writes records with frame paths made relative to `base_dir` when possible.
pub fn save_manifest(records: &[SampleRecord], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let samples: Vec<SampleRecord> = records
        .iter()
        .map(|r| {
            let mut r = r.clone();
            for p in r.frame_paths.iter_mut() {
                if let Ok(rel) = p.strip_prefix(base) {
                    *p = rel.to_path_buf();
                }
            }
            r
        })
        .collect();
    let text = serde_json::to_string_pretty(&ManifestFile { samples })?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
