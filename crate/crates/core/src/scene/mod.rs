//! Feature Gaussians: center, covariance, SH color, opacity, semantic feature, confidence.

mod io;
pub mod sh;

pub use io::{load_scene, save_scene, scene_from_bytes, scene_to_bytes, SCENE_MAGIC, SCENE_VERSION};

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{shape_err, Error, Result};
use crate::geometry::{unproject_depth, CameraView, DenseMap};

pub const MAX_SH_DEGREE: usize = 3;

const SYMMETRY_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPrimitive {
    pub center: Vector3<f64>,
    pub covariance: Matrix3<f64>,
    /// `(degree + 1)²` RGB coefficient triples, DC first.
    pub sh_color: Vec<[f64; 3]>,
    pub opacity: f64,
    pub feature: Vec<f64>,
    pub confidence: f64,
}

impl GaussianPrimitive {
    /// Checks the per-primitive invariants for the given scene layout.
    pub fn check(&self, feature_dim: usize, sh_degree: usize) -> std::result::Result<(), String> {
        let finite = self.center.iter().all(|v| v.is_finite())
            && self.covariance.iter().all(|v| v.is_finite())
            && self.sh_color.iter().flatten().all(|v| v.is_finite())
            && self.feature.iter().all(|v| v.is_finite())
            && self.opacity.is_finite()
            && self.confidence.is_finite();
        if !finite {
            return Err("non-finite attribute".into());
        }
        if self.feature.len() != feature_dim {
            return Err(format!(
                "feature dimension {} != scene dimension {feature_dim}",
                self.feature.len()
            ));
        }
        if self.sh_color.len() != sh::coeff_count(sh_degree) {
            return Err(format!(
                "{} SH coefficients, degree {sh_degree} needs {}",
                self.sh_color.len(),
                sh::coeff_count(sh_degree)
            ));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(format!("opacity {} outside [0, 1]", self.opacity));
        }
        if self.confidence < 0.0 {
            return Err(format!("confidence {} is negative", self.confidence));
        }
        let asym = (self.covariance - self.covariance.transpose()).abs().max();
        if asym > SYMMETRY_TOL {
            return Err(format!("covariance asymmetric by {asym:e}"));
        }
        let eig = SymmetricEigen::new(self.covariance).eigenvalues;
        let scale = eig.abs().max().max(1.0);
        if eig.min() < -PSD_TOL * scale {
            return Err(format!("covariance not PSD (min eigenvalue {:e})", eig.min()));
        }
        Ok(())
    }

    /// RGB color seen from `view_dir` (unit vector from camera to primitive).
    pub fn color(&self, view_dir: &Vector3<f64>) -> [f64; 3] {
        sh::evaluate(&self.sh_color, view_dir)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianScene {
    pub primitives: Vec<GaussianPrimitive>,
    pub feature_dim: usize,
    pub sh_degree: usize,
}

impl GaussianScene {
    pub fn empty(feature_dim: usize, sh_degree: usize) -> Self {
        Self {
            primitives: Vec::new(),
            feature_dim,
            sh_degree,
        }
    }

    pub fn new(primitives: Vec<GaussianPrimitive>, feature_dim: usize, sh_degree: usize) -> Result<Self> {
        let scene = Self {
            primitives,
            feature_dim,
            sh_degree,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    /// Fails on the first primitive that violates an invariant.
    pub fn validate(&self) -> Result<()> {
        if self.sh_degree > MAX_SH_DEGREE {
            return Err(Error::InvalidParameter(format!(
                "SH degree {} exceeds {MAX_SH_DEGREE}",
                self.sh_degree
            )));
        }
        for (index, p) in self.primitives.iter().enumerate() {
            p.check(self.feature_dim, self.sh_degree)
                .map_err(|reason| Error::InvariantViolation { index, reason })?;
        }
        Ok(())
    }
}

/// Attribute maps for [`pixel_aligned_scene`]; all share the depth map's `H×W`.
pub struct PixelAttributes<'a> {
    pub depth: &'a DenseMap,
    pub colors: &'a DenseMap,
    pub features: &'a DenseMap,
    pub opacities: &'a DenseMap,
    pub confidences: &'a DenseMap,
}

/// One isotropic Gaussian per valid-depth pixel, centered on the unprojected depth.
///
/// The standard deviation `base_scale * depth / fx` keeps a constant
/// screen-space footprint of `base_scale` pixels.
pub fn pixel_aligned_scene(
    view: &CameraView,
    attrs: &PixelAttributes<'_>,
    base_scale: f64,
) -> Result<GaussianScene> {
    let (h, w) = (attrs.depth.height(), attrs.depth.width());
    if (h, w) != (view.height, view.width) {
        return Err(shape_err(format!(
            "depth map {h}x{w} does not match camera {}x{}",
            view.height, view.width
        )));
    }
    let check = |m: &DenseMap, name: &str, channels: Option<usize>| -> Result<()> {
        if m.height() != h || m.width() != w {
            return Err(shape_err(format!("{name} map is {}x{}, expected {h}x{w}", m.height(), m.width())));
        }
        if let Some(c) = channels {
            if m.channels() != c {
                return Err(shape_err(format!("{name} map needs {c} channels, found {}", m.channels())));
            }
        }
        Ok(())
    };
    check(attrs.colors, "color", Some(3))?;
    check(attrs.features, "feature", None)?;
    check(attrs.opacities, "opacity", Some(1))?;
    check(attrs.confidences, "confidence", Some(1))?;
    if !(base_scale > 0.0) {
        return Err(Error::InvalidParameter(format!("base_scale must be positive, got {base_scale}")));
    }

    let centers = unproject_depth(view, attrs.depth)?;
    let mut primitives = Vec::with_capacity(centers.len());
    for (p, center) in centers.into_iter().enumerate() {
        let Some(center) = center else { continue };
        let depth = attrs.depth.pixel(p)[0];
        let sigma = base_scale * depth / view.fx;
        let rgb = attrs.colors.pixel(p);
        primitives.push(GaussianPrimitive {
            center,
            covariance: Matrix3::identity() * (sigma * sigma),
            sh_color: vec![sh::dc_from_rgb([rgb[0], rgb[1], rgb[2]])],
            opacity: attrs.opacities.pixel(p)[0],
            feature: attrs.features.pixel(p).to_vec(),
            confidence: attrs.confidences.pixel(p)[0],
        });
    }
    GaussianScene::new(primitives, attrs.features.channels(), 0)
}
