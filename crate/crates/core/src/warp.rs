//! Geometry-guided feature warping.
//!
//! Every target pixel is lifted with its depth, moved into the context camera
//! by the relative pose and reprojected. The context feature map is sampled
//! bilinearly at that location and compared with the target feature by cosine
//! distance over the pixels that land in bounds and pass a relative
//! depth-consistency test. Gradients flow into both feature maps; sampling
//! coordinates (and hence depth) are held constant.

use serde::Serialize;

use crate::error::{shape_err, Error, Result};
use crate::geometry::{project_point, relative_pose, BilinearTaps, CameraView, DenseMap, PixelCoord};

pub const DEFAULT_DEPTH_TOL: f64 = 0.05;
/// Feature norms below this count as zero: cosine 0, no gradient.
pub const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct WarpCoordinates {
    pub coords: Vec<PixelCoord>,
    /// z of each target pixel after moving into the context camera.
    pub projected_depth: Vec<f64>,
    /// Target depth was positive and the moved point lies in front of the context camera.
    pub valid_depth_input: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpMask {
    pub width: usize,
    pub height: usize,
    pub valid: Vec<bool>,
    /// Pixels whose sample footprint lies inside the context image.
    pub in_bounds_count: usize,
    /// In-bounds pixels that also pass the depth test (the valid set).
    pub depth_consistent_count: usize,
}

impl WarpMask {
    pub fn valid_count(&self) -> usize {
        self.depth_consistent_count
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WarpLossResult {
    pub loss: f64,
    pub mask: WarpMask,
    pub grad_target_features: DenseMap,
    pub grad_context_features: DenseMap,
}

/// Per-pixel reprojection of `target` into `context`.
pub fn warp_coordinates(
    target: &CameraView,
    context: &CameraView,
    target_depth: &DenseMap,
) -> Result<WarpCoordinates> {
    if target_depth.channels() != 1 {
        return Err(shape_err(format!(
            "target depth must have 1 channel, found {}",
            target_depth.channels()
        )));
    }
    if (target_depth.height(), target_depth.width()) != (target.height, target.width) {
        return Err(shape_err(format!(
            "target depth {}x{} does not match camera {}x{}",
            target_depth.height(),
            target_depth.width(),
            target.height,
            target.width
        )));
    }
    let (rot, trans) = relative_pose(target, context);
    let n = target.pixel_count();
    let mut out = WarpCoordinates {
        coords: vec![PixelCoord::default(); n],
        projected_depth: vec![0.0; n],
        valid_depth_input: vec![false; n],
    };
    for y in 0..target.height {
        for x in 0..target.width {
            let p = y * target.width + x;
            let d = target_depth.pixel(p)[0];
            if !(d > 0.0 && d.is_finite()) {
                continue;
            }
            let in_target = target.backproject(PixelCoord::pixel_center(x, y), d);
            let in_context = rot * in_target + trans;
            out.projected_depth[p] = in_context.z;
            if let Ok((coord, _)) = project_point(context, &in_context) {
                out.coords[p] = coord;
                out.valid_depth_input[p] = true;
            }
        }
    }
    Ok(out)
}

/// Cosine similarity and its gradients with respect to both arguments.
///
/// Returns `None` when either norm is below [`NORM_EPS`].
pub(crate) fn cosine_and_grads(a: &[f64], b: &[f64]) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na < NORM_EPS || nb < NORM_EPS {
        return None;
    }
    let inv = 1.0 / (na * nb);
    let cos = ab * inv;
    let ga = a.iter().zip(b).map(|(x, y)| y * inv - cos * x / aa).collect();
    let gb = a.iter().zip(b).map(|(x, y)| x * inv - cos * y / bb).collect();
    Some((cos, ga, gb))
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    let (na, nb) = (aa.sqrt(), bb.sqrt());
    if na < NORM_EPS || nb < NORM_EPS {
        0.0
    } else {
        ab / (na * nb)
    }
}

/// Masked mean cosine distance between target features and context features
/// warped into the target view, with gradients for both feature maps.
#[allow(clippy::too_many_arguments)]
pub fn warp_distance(
    target_view: &CameraView,
    context_view: &CameraView,
    target_features: &DenseMap,
    context_features: &DenseMap,
    target_depth: &DenseMap,
    context_depth: &DenseMap,
    depth_tol: f64,
) -> Result<WarpLossResult> {
    if !(depth_tol > 0.0) {
        return Err(Error::NonPositiveTolerance(depth_tol));
    }
    let d = target_features.channels();
    if context_features.channels() != d {
        return Err(shape_err(format!(
            "feature dimensions differ: target {d}, context {}",
            context_features.channels()
        )));
    }
    let check = |m: &DenseMap, v: &CameraView, name: &str| -> Result<()> {
        if (m.height(), m.width()) != (v.height, v.width) {
            return Err(shape_err(format!(
                "{name} is {}x{}, camera is {}x{}",
                m.height(),
                m.width(),
                v.height,
                v.width
            )));
        }
        Ok(())
    };
    check(target_features, target_view, "target features")?;
    check(context_features, context_view, "context features")?;
    check(context_depth, context_view, "context depth")?;
    if context_depth.channels() != 1 {
        return Err(shape_err("context depth must have 1 channel"));
    }
    let warp = warp_coordinates(target_view, context_view, target_depth)?;

    let n = target_view.pixel_count();
    let mut valid = vec![false; n];
    let mut taps = Vec::with_capacity(n);
    let mut in_bounds_count = 0;
    let mut sampled_depth = [0.0];
    for p in 0..n {
        if !warp.valid_depth_input[p] {
            continue;
        }
        let Some(t) = BilinearTaps::new(context_view.width, context_view.height, warp.coords[p]) else {
            continue;
        };
        in_bounds_count += 1;
        t.gather(context_depth, &mut sampled_depth);
        let z = warp.projected_depth[p];
        if (z - sampled_depth[0]).abs() / z < depth_tol {
            valid[p] = true;
            taps.push((p, t));
        }
    }

    let count = taps.len();
    let mut grad_t = DenseMap::zeros(target_features.height(), target_features.width(), d);
    let mut grad_c = DenseMap::zeros(context_features.height(), context_features.width(), d);
    let mut loss = 0.0;
    if count > 0 {
        let scale = 1.0 / count as f64;
        let mut warped = vec![0.0; d];
        for (p, t) in &taps {
            t.gather(context_features, &mut warped);
            let ft = target_features.pixel(*p);
            match cosine_and_grads(ft, &warped) {
                Some((cos, ga, gb)) => {
                    loss += 1.0 - cos;
                    for (g, v) in grad_t.pixel_mut(*p).iter_mut().zip(&ga) {
                        *g = -scale * v;
                    }
                    let gb: Vec<f64> = gb.iter().map(|v| -scale * v).collect();
                    t.scatter(&gb, &mut grad_c);
                }
                None => loss += 1.0,
            }
        }
        loss *= scale;
    }
    Ok(WarpLossResult {
        loss,
        mask: WarpMask {
            width: target_view.width,
            height: target_view.height,
            valid,
            in_bounds_count,
            depth_consistent_count: count,
        },
        grad_target_features: grad_t,
        grad_context_features: grad_c,
    })
}

/// One view with its rendered features and depth.
#[derive(Debug, Clone)]
pub struct ViewBundle {
    pub view: CameraView,
    pub features: DenseMap,
    pub depth: DenseMap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectedTerm {
    pub t: usize,
    pub c: usize,
    pub loss: f64,
    pub valid_px: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WarpTotal {
    pub loss: f64,
    pub per_pair: Vec<DirectedTerm>,
}

/// Bidirectional warp loss summed over view pairs (indices into `bundles`).
pub fn warp_loss_total(bundles: &[ViewBundle], pairs: &[(usize, usize)], depth_tol: f64) -> Result<WarpTotal> {
    if pairs.is_empty() {
        return Err(Error::EmptyPairSet);
    }
    let mut per_pair = Vec::with_capacity(pairs.len() * 2);
    for &(a, b) in pairs {
        for (t, c) in [(a, b), (b, a)] {
            let (bt, bc) = match (bundles.get(t), bundles.get(c)) {
                (Some(bt), Some(bc)) => (bt, bc),
                _ => {
                    return Err(Error::InvalidParameter(format!(
                        "pair ({t}, {c}) out of range for {} views",
                        bundles.len()
                    )))
                }
            };
            let r = warp_distance(&bt.view, &bc.view, &bt.features, &bc.features, &bt.depth, &bc.depth, depth_tol)?;
            per_pair.push(DirectedTerm {
                t,
                c,
                loss: r.loss,
                valid_px: r.mask.valid_count(),
            });
        }
    }
    let loss = per_pair.iter().map(|d| d.loss).sum();
    Ok(WarpTotal { loss, per_pair })
}

/// Every unordered pair `(i, j)` with `i < j`.
pub fn all_unordered_pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect()
}
