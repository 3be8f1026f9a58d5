//! Forward splatting of color, features, expected depth and alpha.

mod pca;

pub use pca::{pca_basis, render_feature_pca_preview, PcaBasis};

use nalgebra::{Matrix2, Matrix2x3, Vector3};
use rayon::prelude::*;

use crate::geometry::{project_point, CameraView, DenseMap, PixelCoord};
use crate::scene::{GaussianPrimitive, GaussianScene};

/// Isotropic screen-space blur added to every projected covariance (px²).
pub const LOW_PASS: f64 = 0.3;
pub const NEAR_PLANE: f64 = 0.01;
/// Upper clamp on the Gaussian falloff.
pub const MAX_FALLOFF: f64 = 0.99;
/// Compositing stops once transmittance drops below this.
pub const MIN_TRANSMITTANCE: f64 = 1e-4;
/// Splats only touch pixels inside their 3σ ellipse.
pub const COVERAGE_SIGMA: f64 = 3.0;
pub const MIN_COV_DET: f64 = 1e-12;

const TILE: usize = 16;

/// Screen-space footprint of a projected Gaussian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Splat2d {
    pub mean: PixelCoord,
    pub cov: Matrix2<f64>,
    pub depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Projection {
    Visible(Splat2d),
    Culled,
}

/// EWA projection: `cov2d = J W Σ Wᵀ Jᵀ + LOW_PASS·I` with `J` the perspective
/// Jacobian at the camera-frame mean.
pub fn project_gaussian_2d(view: &CameraView, primitive: &GaussianPrimitive) -> Projection {
    let t = view.world_to_camera(&primitive.center);
    if t.z <= NEAR_PLANE {
        return Projection::Culled;
    }
    let Ok((mean, depth)) = project_point(view, &t) else {
        return Projection::Culled;
    };
    let (iz, iz2) = (1.0 / t.z, 1.0 / (t.z * t.z));
    let j = Matrix2x3::new(
        view.fx * iz,
        0.0,
        -view.fx * t.x * iz2,
        0.0,
        view.fy * iz,
        -view.fy * t.y * iz2,
    );
    let jw = j * view.rotation;
    let mut cov = jw * primitive.covariance * jw.transpose();
    cov[(0, 1)] = 0.5 * (cov[(0, 1)] + cov[(1, 0)]);
    cov[(1, 0)] = cov[(0, 1)];
    cov[(0, 0)] += LOW_PASS;
    cov[(1, 1)] += LOW_PASS;

    let rx = COVERAGE_SIGMA * cov[(0, 0)].max(0.0).sqrt();
    let ry = COVERAGE_SIGMA * cov[(1, 1)].max(0.0).sqrt();
    let misses = mean.u + rx < 0.0
        || mean.u - rx > view.width as f64
        || mean.v + ry < 0.0
        || mean.v - ry > view.height as f64;
    if misses || !mean.is_finite() {
        return Projection::Culled;
    }
    Projection::Visible(Splat2d { mean, cov, depth })
}

/// A visible splat ready for compositing.
#[derive(Debug, Clone)]
pub(crate) struct PreparedSplat {
    pub index: usize,
    pub mean_u: f64,
    pub mean_v: f64,
    // inverse covariance (a b; b c)
    pub conic: [f64; 3],
    pub depth: f64,
    pub opacity: f64,
    pub color: [f64; 3],
    // inclusive pixel range
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

/// Per-pixel compositing breakdown.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelComposite {
    /// `(primitive index, weight)` in compositing order.
    pub contributions: Vec<(usize, f64)>,
    /// Transmittance left after the last contribution.
    pub transmittance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput {
    pub color: DenseMap,
    pub feature: DenseMap,
    /// Alpha-weighted expected depth `Σ w_i z_i`, not normalized by alpha.
    pub depth: DenseMap,
    pub alpha: DenseMap,
    /// Primitives skipped because their projected covariance was singular.
    pub singular_skipped: usize,
}

/// Projected, depth-sorted and tile-binned scene for one view.
pub struct Rasterizer<'a> {
    scene: &'a GaussianScene,
    width: usize,
    height: usize,
    splats: Vec<PreparedSplat>,
    tiles_x: usize,
    tiles: Vec<Vec<u32>>,
    singular_skipped: usize,
}

impl<'a> Rasterizer<'a> {
    pub fn new(scene: &'a GaussianScene, view: &CameraView) -> Self {
        let cam_center = view.center();
        let mut singular_skipped = 0;
        let mut splats: Vec<PreparedSplat> = scene
            .primitives
            .iter()
            .enumerate()
            .filter_map(|(index, prim)| {
                let Projection::Visible(s) = project_gaussian_2d(view, prim) else {
                    return None;
                };
                let det = s.cov.determinant();
                if !(det >= MIN_COV_DET) {
                    singular_skipped += 1;
                    return None;
                }
                let conic = [s.cov[(1, 1)] / det, -s.cov[(0, 1)] / det, s.cov[(0, 0)] / det];
                let rx = COVERAGE_SIGMA * s.cov[(0, 0)].sqrt();
                let ry = COVERAGE_SIGMA * s.cov[(1, 1)].sqrt();
                let (x0, x1) = pixel_span(s.mean.u - rx, s.mean.u + rx, view.width)?;
                let (y0, y1) = pixel_span(s.mean.v - ry, s.mean.v + ry, view.height)?;
                let dir = (prim.center - cam_center)
                    .try_normalize(1e-12)
                    .unwrap_or_else(Vector3::z);
                Some(PreparedSplat {
                    index,
                    mean_u: s.mean.u,
                    mean_v: s.mean.v,
                    conic,
                    depth: s.depth,
                    opacity: prim.opacity,
                    color: prim.color(&dir),
                    x0,
                    x1,
                    y0,
                    y1,
                })
            })
            .collect();
        splats.sort_by(|a, b| a.depth.total_cmp(&b.depth).then(a.index.cmp(&b.index)));

        let tiles_x = view.width.div_ceil(TILE);
        let tiles_y = view.height.div_ceil(TILE);
        let mut tiles = vec![Vec::new(); tiles_x * tiles_y];
        for (k, s) in splats.iter().enumerate() {
            for ty in s.y0 / TILE..=s.y1 / TILE {
                for tx in s.x0 / TILE..=s.x1 / TILE {
                    tiles[ty * tiles_x + tx].push(k as u32);
                }
            }
        }
        Self {
            scene,
            width: view.width,
            height: view.height,
            splats,
            tiles_x,
            tiles,
            singular_skipped,
        }
    }

    pub fn visible_count(&self) -> usize {
        self.splats.len()
    }

    /// Front-to-back compositing at pixel `(x, y)`; `visit` receives each
    /// splat and its weight `w = α g T`. Returns the residual transmittance.
    #[inline]
    fn composite<F: FnMut(&PreparedSplat, f64)>(&self, x: usize, y: usize, mut visit: F) -> f64 {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let tile = &self.tiles[(y / TILE) * self.tiles_x + x / TILE];
        let mut transmittance = 1.0;
        for &k in tile {
            let s = &self.splats[k as usize];
            if x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1 {
                continue;
            }
            let (dx, dy) = (px - s.mean_u, py - s.mean_v);
            let q = s.conic[0] * dx * dx + 2.0 * s.conic[1] * dx * dy + s.conic[2] * dy * dy;
            if !(q <= COVERAGE_SIGMA * COVERAGE_SIGMA) {
                continue;
            }
            let a = s.opacity * (-0.5 * q).exp().min(MAX_FALLOFF);
            visit(s, a * transmittance);
            transmittance *= 1.0 - a;
            if transmittance < MIN_TRANSMITTANCE {
                break;
            }
        }
        transmittance
    }

    /// Diagnostics hook exposing the compositing weights of one pixel.
    pub fn pixel_composite(&self, x: usize, y: usize) -> PixelComposite {
        let mut contributions = Vec::new();
        let transmittance = self.composite(x, y, |s, w| contributions.push((s.index, w)));
        PixelComposite {
            contributions,
            transmittance,
        }
    }

    pub fn render(&self, background: [f64; 3]) -> RenderOutput {
        let (w, h) = (self.width, self.height);
        let d = self.scene.feature_dim;
        let prims = &self.scene.primitives;
        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>)> = (0..h)
            .into_par_iter()
            .map(|y| {
                let mut color = vec![0.0; w * 3];
                let mut feature = vec![0.0; w * d];
                let mut depth = vec![0.0; w];
                let mut alpha = vec![0.0; w];
                for x in 0..w {
                    let mut c = [0.0; 3];
                    let f = &mut feature[x * d..(x + 1) * d];
                    let mut z = 0.0;
                    let t = self.composite(x, y, |s, wt| {
                        for ch in 0..3 {
                            c[ch] += wt * s.color[ch];
                        }
                        for (fo, fi) in f.iter_mut().zip(&prims[s.index].feature) {
                            *fo += wt * fi;
                        }
                        z += wt * s.depth;
                    });
                    for ch in 0..3 {
                        color[x * 3 + ch] = c[ch] + t * background[ch];
                    }
                    depth[x] = z;
                    alpha[x] = 1.0 - t;
                }
                (color, feature, depth, alpha)
            })
            .collect();

        let mut out = RenderOutput {
            color: DenseMap::zeros(h, w, 3),
            feature: DenseMap::zeros(h, w, d.max(1)),
            depth: DenseMap::zeros(h, w, 1),
            alpha: DenseMap::zeros(h, w, 1),
            singular_skipped: self.singular_skipped,
        };
        for (y, (c, f, z, a)) in rows.into_iter().enumerate() {
            out.color.data_mut()[y * w * 3..(y + 1) * w * 3].copy_from_slice(&c);
            if d > 0 {
                out.feature.data_mut()[y * w * d..(y + 1) * w * d].copy_from_slice(&f);
            }
            out.depth.data_mut()[y * w..(y + 1) * w].copy_from_slice(&z);
            out.alpha.data_mut()[y * w..(y + 1) * w].copy_from_slice(&a);
        }
        out
    }
}

/// Inclusive range of pixel indices whose centers fall in `[lo, hi]`.
fn pixel_span(lo: f64, hi: f64, size: usize) -> Option<(usize, usize)> {
    let first = (lo - 0.5).ceil().max(0.0);
    let last = (hi - 0.5).floor().min(size as f64 - 1.0);
    (first <= last).then(|| (first as usize, last as usize))
}

/// Renders color, features, expected depth and alpha of `scene` from `view`.
pub fn render(scene: &GaussianScene, view: &CameraView, background: [f64; 3]) -> RenderOutput {
    Rasterizer::new(scene, view).render(background)
}
