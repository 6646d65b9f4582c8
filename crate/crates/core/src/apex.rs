//! Apex frame spotting by Divide & Conquer over a per-frame motion signal.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{FlowConfig, FlowRegistry};
use crate::imaging::GrayImage;

/// Mean flow magnitude of every frame relative to the onset frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionSignal {
    pub values: Vec<f64>,
}

impl MotionSignal {
    pub fn new(values: Vec<f64>) -> Self {
        MotionSignal { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApexResult {
    pub apex_index: usize,
    pub signal: MotionSignal,
    /// Inclusive `(lo, hi)` range kept at each level, starting with the
    /// whole signal.
    pub visited_ranges: Vec<(usize, usize)>,
}

/// Computes the motion signal with the built-in estimators.
pub fn motion_signal(frames: &[GrayImage], onset: usize, config: &FlowConfig, smooth: bool) -> Result<MotionSignal> {
    motion_signal_with(&FlowRegistry::new(), frames, onset, config, smooth)
}

pub fn motion_signal_with(
    registry: &FlowRegistry,
    frames: &[GrayImage],
    onset: usize,
    config: &FlowConfig,
    smooth: bool,
) -> Result<MotionSignal> {
    if frames.len() < 2 {
        return Err(Error::invalid(format!(
            "motion signal needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    if onset >= frames.len() {
        return Err(Error::invalid(format!("onset {onset} outside {} frames", frames.len())));
    }
    let raw = (0..frames.len())
        .into_par_iter()
        .map(|i| {
            if i == onset {
                return Ok(0.0);
            }
            registry
                .estimate(&frames[onset], &frames[i], config)
                .map(|f| f.magnitude().mean())
                .map_err(|e| Error::AtFrame {
                    index: i,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut values = if smooth { moving_average3(&raw) } else { raw };
    values[onset] = 0.0;
    Ok(MotionSignal { values })
}

/// Centred window-3 mean; the window is truncated at the ends.
pub fn moving_average3(v: &[f64]) -> Vec<f64> {
    (0..v.len())
        .map(|i| {
            let lo = i.saturating_sub(1);
            let hi = (i + 2).min(v.len());
            v[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

/// Interior strict local maxima; a plateau counts once, at its leftmost
/// index, when it is strictly higher than both of its neighbours.
pub fn detect_local_peaks(signal: &MotionSignal) -> Vec<(usize, f64)> {
    let v = &signal.values;
    let mut peaks = Vec::new();
    if v.len() < 3 {
        return peaks;
    }
    let mut i = 1;
    while i + 1 < v.len() {
        if v[i] > v[i - 1] {
            let mut j = i + 1;
            while j < v.len() && v[j] == v[i] {
                j += 1;
            }
            if j < v.len() && v[j] < v[i] {
                peaks.push((i, v[i]));
            }
            i = j;
        } else {
            i += 1;
        }
    }
    peaks
}

/// Leftmost global maximum.
pub fn spot_apex_bruteforce(signal: &MotionSignal) -> usize {
    let mut best = 0;
    for (i, &v) in signal.values.iter().enumerate() {
        if v > signal.values[best] {
            best = i;
        }
    }
    best
}

fn half_score(signal: &[f64], peaks: &[(usize, f64)], lo: usize, hi: usize) -> f64 {
    let inside: Vec<f64> = peaks
        .iter()
        .filter(|(i, _)| (lo..=hi).contains(i))
        .map(|(_, m)| *m)
        .collect();
    if inside.is_empty() {
        signal[lo..=hi].iter().copied().fold(f64::NEG_INFINITY, f64::max)
    } else {
        inside.iter().sum()
    }
}

pub fn spot_apex_dc(signal: &MotionSignal) -> Result<ApexResult> {
    let v = &signal.values;
    if v.is_empty() {
        return Err(Error::invalid("apex spotting needs at least one frame"));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("motion signal".into()));
    }
    let peaks = detect_local_peaks(signal);
    let (mut lo, mut hi) = (0, v.len() - 1);
    let mut visited = vec![(lo, hi)];
    while lo < hi {
        let len = hi - lo + 1;
        let mid = lo + len.div_ceil(2) - 1;
        let left = half_score(v, &peaks, lo, mid);
        let right = half_score(v, &peaks, mid + 1, hi);
        if left >= right {
            hi = mid;
        } else {
            lo = mid + 1;
        }
        visited.push((lo, hi));
    }
    Ok(ApexResult {
        apex_index: lo,
        signal: signal.clone(),
        visited_ranges: visited,
    })
}
