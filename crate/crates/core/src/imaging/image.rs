use super::plane::Plane;
use crate::error::{Error, Result};

/// Single-channel intensity raster with pixels in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GrayImage {
    plane: Plane,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self> {
        let plane = Plane::new(width, height, pixels)?;
        if let Some(i) = plane.data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid(format!("pixel {i} = {} outside [0, 1]", plane.data[i])));
        }
        Ok(GrayImage { plane })
    }

    /// Builds an image from any field, clamping into `[0, 1]`.
    pub fn from_plane_clamped(plane: &Plane) -> Result<Self> {
        if !plane.is_finite() {
            return Err(Error::NonFinite("image pixels".into()));
        }
        Ok(GrayImage {
            plane: plane.map(|v| v.clamp(0.0, 1.0)),
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn width(&self) -> usize {
        self.plane.width
    }

    pub fn height(&self) -> usize {
        self.plane.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.plane.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.plane.get(x, y)
    }

    pub fn as_plane(&self) -> &Plane {
        &self.plane
    }

    pub fn same_extent(&self, other: &GrayImage) -> bool {
        self.plane.same_extent(&other.plane)
    }
}
