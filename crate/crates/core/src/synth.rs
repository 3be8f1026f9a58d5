//! Deterministic synthetic multi-view scenes.
//!
//! All randomness comes from [`Rng`], a xoshiro256++ stream seeded through
//! SplitMix64 (`seed_from_u64`). Uniforms take the top 53 bits of each draw;
//! normals use Box–Muller with one normal per two uniforms. Nothing depends
//! on platform RNGs, so a `(seed, config)` pair names one scene exactly.

use std::f64::consts::TAU;

use nalgebra::{Matrix3, Vector3};
use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraView, DenseMap};
use crate::scene::{sh, GaussianPrimitive, GaussianScene};

/// Label used for pixels no object covers.
pub fn background_label(n_classes: usize) -> u32 {
    n_classes as u32
}

#[derive(Debug, Clone)]
pub struct Rng(Xoshiro256PlusPlus);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self(Xoshiro256PlusPlus::seed_from_u64(seed))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        (-2.0 * u1.ln()).sqrt() * (TAU * u2).cos()
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }

    pub fn unit_vector(&mut self, dim: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| self.normal()).collect();
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if n > 1e-6 {
                return v.into_iter().map(|x| x / n).collect();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_objects: usize,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub n_cameras: usize,
    pub image_size: usize,
    pub orbit_radius: f64,
    /// Camera height above the ground plane.
    pub orbit_height: f64,
    /// Focal length as a multiple of `image_size`.
    pub focal_scale: f64,
    pub gaussians_per_object: usize,
    pub opacity: f64,
    /// Fraction of Gaussians given a foreign class, color and boosted confidence.
    pub outlier_fraction: f64,
    pub outlier_confidence_boost: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_objects: 4,
            n_classes: 4,
            feature_dim: 8,
            n_cameras: 4,
            image_size: 96,
            orbit_radius: 4.0,
            orbit_height: 2.5,
            focal_scale: 1.0,
            gaussians_per_object: 12_500,
            opacity: 0.8,
            outlier_fraction: 0.0,
            outlier_confidence_boost: 3.0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_objects == 0
            || self.n_classes == 0
            || self.feature_dim == 0
            || self.n_cameras == 0
            || self.image_size == 0
            || self.gaussians_per_object == 0
        {
            return err("counts and sizes must be positive");
        }
        if self.n_classes > self.feature_dim {
            return err("n_classes must not exceed feature_dim (class features are orthonormal)");
        }
        if !(self.orbit_radius > 0.0) || !(self.focal_scale > 0.0) || !self.orbit_height.is_finite() {
            return err("orbit_radius and focal_scale must be positive");
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return err("opacity must lie in [0, 1]");
        }
        if !(0.0..=1.0).contains(&self.outlier_fraction) || !(self.outlier_confidence_boost >= 0.0) {
            return err("outlier_fraction must lie in [0, 1] and the boost must be non-negative");
        }
        Ok(())
    }
}

/// An axis-aligned box resting on `z = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxObject {
    pub min: Vector3<f64>,
    pub max: Vector3<f64>,
    pub class: usize,
    pub color: [f64; 3],
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub seed: u64,
    pub config: SynthConfig,
    pub objects: Vec<BoxObject>,
    pub gaussians: GaussianScene,
    /// Class label of every Gaussian.
    pub labels: Vec<u32>,
    /// Whether each Gaussian was generated as an outlier.
    pub outliers: Vec<bool>,
    /// One orthonormal unit feature per class.
    pub class_features: Vec<Vec<f64>>,
    pub cameras: Vec<CameraView>,
    /// Ground-truth label grid per camera (row-major, background = `n_classes`).
    pub label_maps: Vec<Vec<u32>>,
}

impl SyntheticScene {
    pub fn label_map_dense(&self, camera: usize) -> DenseMap {
        let v = &self.cameras[camera];
        let data = self.label_maps[camera].iter().map(|l| *l as f64).collect();
        DenseMap::new(v.height, v.width, 1, data).expect("label map matches camera")
    }
}

/// Orthonormal class features via Gram–Schmidt on Gaussian draws.
pub fn class_features(rng: &mut Rng, n_classes: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    while basis.len() < n_classes {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        for _ in 0..2 {
            for b in &basis {
                let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

pub fn generate(seed: u64, config: &SynthConfig) -> Result<SyntheticScene> {
    config.validate()?;
    let mut rng = Rng::new(seed);
    let features = class_features(&mut rng, config.n_classes, config.feature_dim);

    let ring = if config.n_objects == 1 { 0.0 } else { 1.0 };
    let phase = rng.uniform() * TAU;
    let objects: Vec<BoxObject> = (0..config.n_objects)
        .map(|i| {
            let angle = phase + TAU * i as f64 / config.n_objects as f64;
            let half = Vector3::new(
                rng.uniform_range(0.25, 0.4),
                rng.uniform_range(0.25, 0.4),
                rng.uniform_range(0.25, 0.5),
            );
            let c = Vector3::new(ring * angle.cos(), ring * angle.sin(), half.z);
            BoxObject {
                min: c - half,
                max: c + half,
                class: i % config.n_classes,
                color: [0; 3].map(|_| rng.uniform_range(0.2, 0.8)),
            }
        })
        .collect();

    let mut primitives = Vec::with_capacity(config.n_objects * config.gaussians_per_object);
    let mut labels = Vec::with_capacity(primitives.capacity());
    let mut outliers = Vec::with_capacity(primitives.capacity());
    for obj in &objects {
        let ext = obj.max - obj.min;
        // five visible faces (no bottom): (normal axis, at max?)
        let faces = [(0, false), (0, true), (1, false), (1, true), (2, true)];
        let areas: Vec<f64> = faces
            .iter()
            .map(|(axis, _)| ext[(axis + 1) % 3] * ext[(axis + 2) % 3])
            .collect();
        let total: f64 = areas.iter().sum();
        let spacing = (total / config.gaussians_per_object as f64).sqrt();
        let (sigma_t, sigma_n) = (spacing, 0.1 * spacing);
        for _ in 0..config.gaussians_per_object {
            let mut pick = rng.uniform() * total;
            let mut face = faces.len() - 1;
            for (k, a) in areas.iter().enumerate() {
                if pick < *a {
                    face = k;
                    break;
                }
                pick -= a;
            }
            let (axis, at_max) = faces[face];
            let mut p = obj.min + ext.component_mul(&Vector3::new(rng.uniform(), rng.uniform(), rng.uniform()));
            p[axis] = if at_max { obj.max[axis] } else { obj.min[axis] };
            let mut normal = Vector3::zeros();
            normal[axis] = 1.0;
            let nn = normal * normal.transpose();
            let covariance = (Matrix3::identity() - nn) * sigma_t * sigma_t + nn * sigma_n * sigma_n;

            let texture = 0.1 * (TAU * (p.x + p.y + p.z) / 0.6).sin();
            let mut rgb = obj.color.map(|c| (c + texture).clamp(0.0, 1.0));
            let mut class = obj.class;
            let mut confidence = rng.uniform();
            let is_outlier = config.n_classes > 1 && rng.uniform() < config.outlier_fraction;
            if is_outlier {
                class = (class + 1 + rng.below(config.n_classes - 1)) % config.n_classes;
                rgb = rgb.map(|c| 1.0 - c);
                confidence += config.outlier_confidence_boost;
            }
            primitives.push(GaussianPrimitive {
                center: p,
                covariance,
                sh_color: vec![sh::dc_from_rgb(rgb)],
                opacity: config.opacity,
                feature: features[class].clone(),
                confidence,
            });
            labels.push(class as u32);
            outliers.push(is_outlier);
        }
    }
    let gaussians = GaussianScene::new(primitives, config.feature_dim, 0)?;

    let centroid = gaussians
        .primitives
        .iter()
        .fold(Vector3::zeros(), |acc, p| acc + p.center)
        / gaussians.len() as f64;
    let cam_phase = rng.uniform() * TAU;
    let focal = config.focal_scale * config.image_size as f64;
    let cameras = (0..config.n_cameras)
        .map(|k| {
            let a = cam_phase + TAU * k as f64 / config.n_cameras as f64;
            let eye = Vector3::new(
                centroid.x + config.orbit_radius * a.cos(),
                centroid.y + config.orbit_radius * a.sin(),
                config.orbit_height,
            );
            CameraView::look_at(eye, centroid, Vector3::z(), focal, config.image_size, config.image_size)
        })
        .collect::<Result<Vec<_>>>()?;

    let label_maps = cameras
        .iter()
        .map(|c| project_labels(&gaussians, &labels, c, config.n_classes))
        .collect();

    Ok(SyntheticScene {
        seed,
        config: config.clone(),
        objects,
        gaussians,
        labels,
        outliers,
        class_features: features,
        cameras,
        label_maps,
    })
}

/// Ground-truth labels by z-buffering Gaussian footprints.
///
/// Each Gaussian claims the pixels whose centers fall within its projected
/// 2σ radius; the nearest claim wins. σ is the largest covariance eigenvalue
/// scaled to pixels, widened by the renderer's 0.3 px² screen-space blur so
/// sub-pixel splats claim what they visibly cover. Uses plain pinhole
/// arithmetic only.
pub fn project_labels(scene: &GaussianScene, labels: &[u32], view: &CameraView, n_classes: usize) -> Vec<u32> {
    let (w, h) = (view.width, view.height);
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut out = vec![background_label(n_classes); w * h];
    for (g, p) in scene.primitives.iter().enumerate() {
        let c = view.rotation * p.center + view.translation;
        if c.z <= 0.01 {
            continue;
        }
        let u = view.fx * c.x / c.z + view.cx;
        let v = view.fy * c.y / c.z + view.cy;
        let sigma = nalgebra::SymmetricEigen::new(p.covariance).eigenvalues.max().max(0.0).sqrt();
        let sigma_px = view.fx * sigma / c.z;
        let r = 2.0 * (sigma_px * sigma_px + 0.3).sqrt();
        let x0 = ((u - r - 0.5).ceil().max(0.0)) as i64;
        let x1 = ((u + r - 0.5).floor()).min(w as f64 - 1.0) as i64;
        let y0 = ((v - r - 0.5).ceil().max(0.0)) as i64;
        let y1 = ((v + r - 0.5).floor()).min(h as f64 - 1.0) as i64;
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (dx, dy) = (x as f64 + 0.5 - u, y as f64 + 0.5 - v);
                if dx * dx + dy * dy > r * r {
                    continue;
                }
                let i = y as usize * w + x as usize;
                if c.z < zbuf[i] {
                    zbuf[i] = c.z;
                    out[i] = labels[g];
                }
            }
        }
    }
    out
}

/// `n` random valid Gaussians with centers in `[-extent, extent]³`.
pub fn random_gaussians(rng: &mut Rng, n: usize, feature_dim: usize, extent: f64) -> GaussianScene {
    let prims = (0..n)
        .map(|_| {
            let a = Matrix3::from_fn(|_, _| rng.normal() * 0.05);
            GaussianPrimitive {
                center: Vector3::from_fn(|_, _| rng.uniform_range(-extent, extent)),
                covariance: a * a.transpose() + Matrix3::identity() * 1e-4,
                sh_color: vec![sh::dc_from_rgb([rng.uniform(), rng.uniform(), rng.uniform()])],
                opacity: rng.uniform(),
                feature: (0..feature_dim).map(|_| rng.normal()).collect(),
                confidence: rng.uniform() * 3.0,
            }
        })
        .collect();
    GaussianScene::new(prims, feature_dim, 0).expect("random Gaussians are valid")
}
