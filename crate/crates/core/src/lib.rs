//! Kernels for feed-forward feature-Gaussian reconstruction.
//!
//! The crate covers the numerical core of a joint geometry + semantics
//! splatting pipeline:
//!
//! - [`geometry`]: pinhole cameras, dense maps, projection and bilinear sampling.
//! - [`scene`]: feature Gaussians and the `.fgsc` scene format.
//! - [`render`]: EWA projection and front-to-back compositing of color,
//!   features and depth.
//! - [`warp`]: geometry-guided feature warping loss with analytic gradients.
//! - [`voxel`]: semantic-aware voxelization (quantize, weight, aggregate).
//! - [`attention`]: token-wise fusion cross-attention, forward and backward.
//! - [`losses`] and [`metrics`]: the training objective and evaluation metrics.
//! - [`synth`] and [`oracle`]: deterministic synthetic scenes and independent
//!   scalar reference implementations used for verification.

pub mod attention;
pub mod error;
pub mod geometry;
pub mod gradcheck;
pub mod losses;
pub mod metrics;
pub mod oracle;
pub mod render;
pub mod scene;
pub mod synth;
pub mod voxel;
pub mod warp;

pub use error::{Error, Result};
pub use geometry::{CameraView, DenseMap, PixelCoord};
pub use scene::{GaussianPrimitive, GaussianScene};
