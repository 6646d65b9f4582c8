//! Images, image I/O, dataset manifests, network-input normalization and
//! the synthetic corpus generator.

pub mod image;
pub mod manifest;
pub mod normalize;
pub mod pgm;
pub mod plane;
pub mod synthetic;

pub use image::GrayImage;
pub use manifest::{load_manifest, parse_manifest, save_manifest, Emotion, SampleRecord, NUM_CLASSES};
pub use normalize::{normalize_to_input, resize_bilinear, INPUT_SIZE};
pub use pgm::{decode_pgm, encode_pgm, load_pgm, save_pgm};
pub use plane::Plane;
pub use synthetic::{generate_synthetic_corpus, SyntheticCorpus, SyntheticSpec, SyntheticTruth, Texture};

use crate::error::Result;

/// A record together with its decoded frames.
#[derive(Clone, Debug)]
pub struct Video {
    pub record: SampleRecord,
    pub frames: Vec<GrayImage>,
}

impl Video {
    pub fn load(record: &SampleRecord) -> Result<Video> {
        let frames = record
            .frame_paths
            .iter()
            .map(|p| load_pgm(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Video {
            record: record.clone(),
            frames,
        })
    }
}
