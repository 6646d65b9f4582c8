//! Procedural micro-expression corpus with known apex, motion and class.
//!
//! Each subject gets a smooth random texture built from Gaussian blobs.
//! Each video deforms one class-specific facial region (brows pulled down
//! for negative, lip corners pulled out and up for positive, forehead
//! raised for surprise). The displacement ramps linearly from zero at the
//! onset to `motion_amplitude` at the apex, then falls linearly to a small
//! residual at the last frame, so the per-frame motion is strictly
//! unimodal with its maximum at the apex.

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::image::GrayImage;
use super::manifest::{save_manifest, Emotion, SampleRecord};
use super::pgm::save_pgm;
use super::plane::Plane;
use super::Video;
use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::rng::{derive_seed, derive_seed_str, seeded};

fn default_frames() -> usize {
    40
}
fn default_size() -> usize {
    64
}
fn default_amplitude() -> f64 {
    1.5
}
fn default_noise() -> f64 {
    0.005
}
fn default_db() -> String {
    "synthetic".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub subjects: usize,
    pub videos_per_subject: usize,
    #[serde(default = "default_frames")]
    pub frames_per_video: usize,
    #[serde(default = "default_size")]
    pub image_size: usize,
    /// Peak displacement in pixels, reached at the apex.
    #[serde(default = "default_amplitude")]
    pub motion_amplitude: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_db")]
    pub source_db: String,
}

impl SyntheticSpec {
    pub fn new(subjects: usize, videos_per_subject: usize, seed: u64) -> Self {
        SyntheticSpec {
            subjects,
            videos_per_subject,
            frames_per_video: default_frames(),
            image_size: default_size(),
            motion_amplitude: default_amplitude(),
            noise_sigma: default_noise(),
            seed,
            source_db: default_db(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.subjects == 0 || self.videos_per_subject == 0 {
            return Err(Error::invalid(
                "synthetic corpus needs at least one subject and one video",
            ));
        }
        if self.frames_per_video < 4 {
            return Err(Error::invalid(format!(
                "frames_per_video must be >= 4, got {}",
                self.frames_per_video
            )));
        }
        if self.image_size < 16 {
            return Err(Error::invalid("image_size must be >= 16"));
        }
        if !(0.0..=self.image_size as f64 / 8.0).contains(&self.motion_amplitude) {
            return Err(Error::invalid(format!(
                "motion_amplitude {} outside [0, image_size/8]",
                self.motion_amplitude
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::invalid("noise_sigma must be a finite non-negative number"));
        }
        Ok(())
    }
}

/// One Gaussian-weighted moving patch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPatch {
    pub cx: f64,
    pub cy: f64,
    pub sigma: f64,
    /// Unit direction of motion.
    pub dx: f64,
    pub dy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoTruth {
    pub video_id: String,
    pub apex_index: usize,
    /// Region id; equals the emotion class index.
    pub region: usize,
    pub amplitude: f64,
    /// Fraction of `amplitude` applied at each frame.
    pub profile: Vec<f64>,
    pub patches: Vec<MotionPatch>,
}

impl VideoTruth {
    fn unit_field(&self, x: f64, y: f64) -> (f64, f64) {
        self.patches.iter().fold((0.0, 0.0), |(ax, ay), p| {
            let r2 = (x - p.cx).powi(2) + (y - p.cy).powi(2);
            let w = (-r2 / (2.0 * p.sigma * p.sigma)).exp();
            (ax + w * p.dx, ay + w * p.dy)
        })
    }

    /// True displacement field of `frame` relative to the onset.
    pub fn displacement(&self, frame: usize, width: usize, height: usize) -> FlowField {
        let s = self.amplitude * self.profile[frame];
        let mut p = Plane::zeros(width, height);
        let mut q = Plane::zeros(width, height);
        for y in 0..height {
            for x in 0..width {
                let (ux, uy) = self.unit_field(x as f64, y as f64);
                p.set(x, y, s * ux);
                q.set(x, y, s * uy);
            }
        }
        FlowField::from_planes(p, q).expect("matching extents")
    }

    pub fn mean_displacement_magnitude(&self, frame: usize, width: usize, height: usize) -> f64 {
        let f = self.displacement(frame, width, height);
        f.magnitude().mean()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTruth {
    pub image_size: usize,
    pub videos: Vec<VideoTruth>,
}

impl SyntheticTruth {
    pub fn get(&self, video_id: &str) -> Option<&VideoTruth> {
        self.videos.iter().find(|v| v.video_id == video_id)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub records: Vec<SampleRecord>,
    pub truth: SyntheticTruth,
    /// Frames per record, already quantized to 8-bit levels.
    pub frames: Vec<Vec<GrayImage>>,
}

impl SyntheticCorpus {
    pub fn videos(&self) -> Vec<Video> {
        self.records
            .iter()
            .zip(&self.frames)
            .map(|(r, f)| Video {
                record: r.clone(),
                frames: f.clone(),
            })
            .collect()
    }

    /// Writes `manifest.json`, `truth.json` and `frames/<video>/<t>.pgm`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (rec, frames) in self.records.iter().zip(&self.frames) {
            let vdir = dir.join("frames").join(&rec.video_id);
            std::fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
            for (img, rel) in frames.iter().zip(&rec.frame_paths) {
                save_pgm(img, &dir.join(rel))?;
            }
        }
        let records: Vec<SampleRecord> = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.frame_paths = r.frame_paths.iter().map(|p| dir.join(p)).collect();
                r
            })
            .collect();
        save_manifest(&records, &dir.join("manifest.json"))?;
        self.truth.save(&dir.join("truth.json"))
    }
}

/// Additive Gaussian-blob texture, rescaled into `[0.15, 0.85]` over the
/// generating square.
#[derive(Clone, Debug)]
pub struct Texture {
    blobs: Vec<(f64, f64, f64, f64)>,
    offset: f64,
    scale: f64,
}

impl Texture {
    pub fn random(size: usize, seed: u64) -> Self {
        let mut rng = seeded(seed);
        let s = size as f64;
        let n = (size * size) / 64;
        let blobs: Vec<_> = (0..n)
            .map(|_| {
                let cx = rng.gen_range(-0.05 * s..1.05 * s);
                let cy = rng.gen_range(-0.05 * s..1.05 * s);
                let sigma = rng.gen_range(1.5..4.0) * s / 64.0;
                let amp = rng.gen_range(-1.0..1.0);
                (cx, cy, sigma, amp)
            })
            .collect();
        let mut t = Texture {
            blobs,
            offset: 0.0,
            scale: 1.0,
        };
        let raw = Plane::from_fn(size, size, |x, y| t.raw(x as f64, y as f64));
        let (lo, hi) = raw.min_max();
        let span = (hi - lo).max(1e-9);
        t.scale = 0.7 / span;
        t.offset = 0.15 - lo * t.scale;
        t
    }

    fn raw(&self, x: f64, y: f64) -> f64 {
        self.blobs
            .iter()
            .map(|&(cx, cy, sigma, amp)| {
                let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                if r2 > 16.0 * sigma * sigma {
                    0.0
                } else {
                    amp * (-r2 / (2.0 * sigma * sigma)).exp()
                }
            })
            .sum()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.offset + self.scale * self.raw(x, y)
    }

    /// Renders `T(x - d(x))`, the texture moved by `d`, so the flow from the
    /// undisplaced rendering to this one is `d`.
    pub fn render_displaced(&self, width: usize, height: usize, d: impl Fn(usize, usize) -> (f64, f64)) -> Plane {
        Plane::from_fn(width, height, |x, y| {
            let (dx, dy) = d(x, y);
            self.eval(x as f64 - dx, y as f64 - dy)
        })
    }
}

/// Class-specific moving region in relative coordinates: `(cx, cy, dx, dy)`.
fn region_layout(emotion: Emotion) -> &'static [(f64, f64, f64, f64)] {
    match emotion {
        // brows lowered and drawn together
        Emotion::Negative => &[(0.32, 0.28, 0.5, 1.0), (0.68, 0.28, -0.5, 1.0)],
        // lip corners pulled outward and up
        Emotion::Positive => &[(0.30, 0.72, -1.0, -0.6), (0.70, 0.72, 1.0, -0.6)],
        // forehead raised across its width
        Emotion::Surprise => &[
            (0.28, 0.24, 0.0, -1.0),
            (0.50, 0.20, 0.0, -1.0),
            (0.72, 0.24, 0.0, -1.0),
        ],
    }
}

/// Linear ramp up to 1 at `apex`, then linear release to `RESIDUAL` at the
/// last frame. A tail that keeps falling leaves no flat stretch in which
/// estimator noise could form spurious peaks.
fn motion_profile(frames: usize, apex: usize) -> Vec<f64> {
    const RESIDUAL: f64 = 0.1;
    let tail = (frames - 1 - apex) as f64;
    (0..frames)
        .map(|t| {
            if t <= apex {
                t as f64 / apex as f64
            } else {
                1.0 - (1.0 - RESIDUAL) * (t - apex) as f64 / tail
            }
        })
        .collect()
}

pub fn generate_synthetic_corpus(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let size = spec.image_size;
    let s = size as f64;
    let n = spec.frames_per_video;
    let mut records = Vec::new();
    let mut truths = Vec::new();
    let mut all_frames = Vec::new();
    for subj in 0..spec.subjects {
        let subject_id = format!("s{:02}", subj + 1);
        let texture = Texture::random(size, derive_seed(spec.seed, subj as u64));
        for v in 0..spec.videos_per_subject {
            let video_id = format!("{subject_id}_v{v:02}");
            let emotion = Emotion::ALL[(v + subj) % 3];
            let mut rng = seeded(derive_seed_str(spec.seed, &video_id));
            let apex = rng.gen_range(n / 4..(3 * n / 4).max(n / 4 + 1));
            let apex = apex.clamp(1, n - 2);
            let jitter = 0.03 * s;
            let patches: Vec<MotionPatch> = region_layout(emotion)
                .iter()
                .map(|&(cx, cy, dx, dy)| {
                    let norm = (dx * dx + dy * dy).sqrt();
                    MotionPatch {
                        cx: cx * s + rng.gen_range(-jitter..=jitter),
                        cy: cy * s + rng.gen_range(-jitter..=jitter),
                        sigma: 0.16 * s,
                        dx: dx / norm,
                        dy: dy / norm,
                    }
                })
                .collect();
            let truth = VideoTruth {
                video_id: video_id.clone(),
                apex_index: apex,
                region: emotion.index(),
                amplitude: spec.motion_amplitude,
                profile: motion_profile(n, apex),
                patches,
            };
            let noise = Normal::new(0.0, spec.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
            let mut frames = Vec::with_capacity(n);
            for t in 0..n {
                let amp = truth.amplitude * truth.profile[t];
                let mut data = Vec::with_capacity(size * size);
                for y in 0..size {
                    for x in 0..size {
                        let (xf, yf) = (x as f64, y as f64);
                        let (ux, uy) = truth.unit_field(xf, yf);
                        let mut v = texture.eval(xf - amp * ux, yf - amp * uy);
                        if spec.noise_sigma > 0.0 {
                            v += noise.sample(&mut rng);
                        }
                        data.push((v.clamp(0.0, 1.0) * 255.0).round() / 255.0);
                    }
                }
                frames.push(GrayImage::new(size, size, data)?);
            }
            records.push(SampleRecord {
                subject_id: subject_id.clone(),
                video_id: video_id.clone(),
                emotion,
                frame_paths: (0..n)
                    .map(|t| Path::new("frames").join(&video_id).join(format!("{t:03}.pgm")))
                    .collect(),
                onset_index: 0,
                apex_index: Some(apex),
                source_db: spec.source_db.clone(),
            });
            truths.push(truth);
            all_frames.push(frames);
        }
    }
    Ok(SyntheticCorpus {
        records,
        truth: SyntheticTruth {
            image_size: size,
            videos: truths,
        },
        frames: all_frames,
    })
}
