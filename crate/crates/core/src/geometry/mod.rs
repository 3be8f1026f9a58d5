//! Cameras, dense maps, projection and bilinear sampling.

mod camera;
mod dense_map;
mod sampling;

pub use camera::{
    project_point, relative_pose, unproject_depth, CameraFile, CameraView, MIN_PROJECTION_DEPTH,
};
pub use dense_map::{DenseMap, DMAP_MAGIC};
pub use sampling::{grid_sample_bilinear, BilinearTaps, EDGE_SLACK};

/// Continuous image coordinate in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PixelCoord {
    pub u: f64,
    pub v: f64,
}

impl PixelCoord {
    pub const fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    /// Center of integer pixel `(x, y)`.
    pub fn pixel_center(x: usize, y: usize) -> Self {
        Self::new(x as f64 + 0.5, y as f64 + 0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}
