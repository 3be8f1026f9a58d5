use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{DenseMap, PixelCoord};

/// Points closer than this to the image plane cannot be projected.
pub const MIN_PROJECTION_DEPTH: f64 = 1e-8;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole camera with zero skew and a world-to-camera pose.
///
/// A world point `p` maps to camera coordinates `rotation * p + translation`,
/// with +z pointing forward, +x right and +y down. Pixel `(u, v)` has its
/// center at continuous coordinate `(u + 0.5, v + 0.5)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl CameraView {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: usize,
        height: usize,
        rotation: Matrix3<f64>,
        translation: Vector3<f64>,
    ) -> Result<Self> {
        let view = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            rotation,
            translation,
        };
        view.validate()?;
        Ok(view)
    }

    /// Camera at the world origin looking down +z.
    pub fn identity(fx: f64, fy: f64, width: usize, height: usize) -> Result<Self> {
        Self::new(
            fx,
            fy,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            Matrix3::identity(),
            Vector3::zeros(),
        )
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll.
    pub fn look_at(
        eye: Vector3<f64>,
        target: Vector3<f64>,
        up: Vector3<f64>,
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let forward = (target - eye)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("eye and target coincide".into()))?;
        let right = forward
            .cross(&up)
            .try_normalize(1e-12)
            .ok_or_else(|| Error::InvalidCamera("up vector parallel to view direction".into()))?;
        let down = forward.cross(&right);
        let rotation = Matrix3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        Self::new(
            focal,
            focal,
            width as f64 / 2.0,
            height as f64 / 2.0,
            width,
            height,
            rotation,
            translation,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidCamera(msg));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} must be positive", self.width, self.height));
        }
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.fx.is_finite() || !self.fy.is_finite() {
            return bad(format!("focal lengths ({}, {}) must be positive", self.fx, self.fy));
        }
        if !(self.cx > 0.0 && self.cx < self.width as f64) {
            return bad(format!("cx={} outside (0, {})", self.cx, self.width));
        }
        if !(self.cy > 0.0 && self.cy < self.height as f64) {
            return bad(format!("cy={} outside (0, {})", self.cy, self.height));
        }
        if self.rotation.iter().chain(self.translation.iter()).any(|x| !x.is_finite()) {
            return bad("pose contains non-finite values".into());
        }
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if ortho > ORTHONORMAL_TOL {
            return bad(format!("rotation is not orthonormal (|RᵀR - I| = {ortho:e})"));
        }
        let det = self.rotation.determinant();
        if (det - 1.0).abs() > ORTHONORMAL_TOL {
            return bad(format!("rotation determinant {det} != 1"));
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    pub fn world_to_camera(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn camera_to_world(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation.transpose() * (p - self.translation)
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vector3<f64> {
        -(self.rotation.transpose() * self.translation)
    }

    /// Camera-frame point at depth `depth` along the ray through `pixel`.
    pub fn backproject(&self, pixel: PixelCoord, depth: f64) -> Vector3<f64> {
        Vector3::new(
            (pixel.u - self.cx) / self.fx * depth,
            (pixel.v - self.cy) / self.fy * depth,
            depth,
        )
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: CameraFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&CameraFile::from(self)).expect("camera serializes")
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// On-disk camera layout: row-major rotation, world-to-camera.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CameraFile {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl From<&CameraView> for CameraFile {
    fn from(v: &CameraView) -> Self {
        let mut rotation = [0.0; 9];
        for r in 0..3 {
            for c in 0..3 {
                rotation[r * 3 + c] = v.rotation[(r, c)];
            }
        }
        Self {
            fx: v.fx,
            fy: v.fy,
            cx: v.cx,
            cy: v.cy,
            width: v.width,
            height: v.height,
            rotation,
            translation: [v.translation.x, v.translation.y, v.translation.z],
        }
    }
}

impl TryFrom<CameraFile> for CameraView {
    type Error = Error;

    fn try_from(f: CameraFile) -> Result<Self> {
        CameraView::new(
            f.fx,
            f.fy,
            f.cx,
            f.cy,
            f.width,
            f.height,
            Matrix3::from_row_slice(&f.rotation),
            Vector3::from(f.translation),
        )
    }
}

/// Pose taking `source` camera coordinates to `target` camera coordinates.
pub fn relative_pose(source: &CameraView, target: &CameraView) -> (Matrix3<f64>, Vector3<f64>) {
    let rotation = target.rotation * source.rotation.transpose();
    let translation = target.translation - rotation * source.translation;
    (rotation, translation)
}

/// Perspective projection of a camera-frame point. Returns the pixel and its depth.
pub fn project_point(view: &CameraView, point_cam: &Vector3<f64>) -> Result<(PixelCoord, f64)> {
    let z = point_cam.z;
    if z <= MIN_PROJECTION_DEPTH {
        return Err(Error::NonPositiveDepth(z));
    }
    let pixel = PixelCoord::new(
        view.fx * point_cam.x / z + view.cx,
        view.fy * point_cam.y / z + view.cy,
    );
    Ok((pixel, z))
}

/// World-frame points for every pixel of a single-channel depth map.
///
/// Pixels with depth `<= 0` (or non-finite) yield `None`.
pub fn unproject_depth(view: &CameraView, depth: &DenseMap) -> Result<Vec<Option<Vector3<f64>>>> {
    if depth.channels() != 1 {
        return Err(Error::ShapeMismatch(format!(
            "depth map must have 1 channel, found {}",
            depth.channels()
        )));
    }
    let mut points = Vec::with_capacity(depth.pixel_count());
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let d = depth.get(x, y, 0);
            if d > 0.0 && d.is_finite() {
                let cam = view.backproject(PixelCoord::pixel_center(x, y), d);
                points.push(Some(view.camera_to_world(&cam)));
            } else {
                points.push(None);
            }
        }
    }
    Ok(points)
}
