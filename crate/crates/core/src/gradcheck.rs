//! Central finite-difference checks of the analytic gradients.
//!
//! Relative error of one entry is `|a - n| / max(|a|, |n|, REL_FLOOR)`. The
//! floor keeps entries that are zero up to rounding from reporting huge
//! ratios; with `h = 1e-6` the difference quotient carries roughly `1e-10`
//! absolute noise.

use nalgebra::{DMatrix, Matrix3, Rotation3, Vector3};
use serde::Serialize;

use crate::attention::{fuse, fuse_backward, FusionParams};
use crate::error::{Error, Result};
use crate::geometry::{CameraView, DenseMap};
use crate::losses::feature_loss;
use crate::scene::{sh, GaussianPrimitive, GaussianScene};
use crate::synth::Rng;
use crate::voxel::{assign_voxels, fusion_weights, weight_gradients};
use crate::warp::warp_distance;

pub const STEP: f64 = 1e-6;
pub const REL_FLOOR: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Central difference of `f` with respect to each entry of `x`.
pub fn numeric_gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut buf = x.to_vec();
    (0..x.len())
        .map(|i| {
            let orig = buf[i];
            buf[i] = orig + STEP;
            let plus = f(&buf);
            buf[i] = orig - STEP;
            let minus = f(&buf);
            buf[i] = orig;
            (plus - minus) / (2.0 * STEP)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradEntry {
    pub name: String,
    pub count: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
}

impl GradEntry {
    pub fn compare(name: &str, analytic: &[f64], numeric: &[f64]) -> Self {
        let mut e = GradEntry {
            name: name.to_string(),
            count: analytic.len(),
            max_abs_error: 0.0,
            max_rel_error: 0.0,
        };
        for (a, n) in analytic.iter().zip(numeric) {
            e.max_abs_error = e.max_abs_error.max((a - n).abs());
            e.max_rel_error = e.max_rel_error.max(relative_error(*a, *n));
        }
        e
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub op: String,
    pub seed: u64,
    pub sizes: Vec<usize>,
    pub tolerance: f64,
    pub entries: Vec<GradEntry>,
    pub passed: bool,
}

impl GradcheckReport {
    fn new(op: &str, seed: u64, sizes: Vec<usize>, entries: Vec<GradEntry>) -> Self {
        let passed = entries.iter().all(|e| e.max_rel_error < DEFAULT_TOLERANCE);
        GradcheckReport {
            op: op.to_string(),
            seed,
            sizes,
            tolerance: DEFAULT_TOLERANCE,
            entries,
            passed,
        }
    }

    pub fn max_rel_error(&self) -> f64 {
        self.entries.iter().map(|e| e.max_rel_error).fold(0.0, f64::max)
    }
}

fn matrix(rng: &mut Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.normal())
}

fn with_data(shape: &DMatrix<f64>, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(shape.nrows(), shape.ncols(), data)
}

#[derive(Debug, Clone)]
pub struct FuseInstance {
    pub geometry: DMatrix<f64>,
    pub semantic: DMatrix<f64>,
    pub params: FusionParams,
    pub upstream: DMatrix<f64>,
}

/// `sizes = [n_tokens, d_model, d_k]`; the semantic side has `n_tokens + 1`
/// tokens of the same width and `d_v = d_k`.
pub fn random_fuse_instance(rng: &mut Rng, sizes: [usize; 3]) -> FuseInstance {
    let [n, d, dk] = sizes;
    let params = FusionParams::random(rng, d, d, dk, dk);
    FuseInstance {
        geometry: matrix(rng, n, d),
        semantic: matrix(rng, n + 1, d),
        params,
        upstream: matrix(rng, n, dk),
    }
}

/// Checks all five gradients of `⟨fuse(X, S), G⟩`.
pub fn check_fuse(seed: u64, sizes: [usize; 3]) -> Result<GradcheckReport> {
    let mut rng = Rng::new(seed);
    let inst = random_fuse_instance(&mut rng, sizes);
    let g = fuse_backward(&inst.geometry, &inst.semantic, &inst.params, &inst.upstream)?;
    let objective = |x: &DMatrix<f64>, s: &DMatrix<f64>, p: &FusionParams| -> f64 {
        fuse(x, s, p).map(|o| o.dot(&inst.upstream)).unwrap_or(f64::NAN)
    };
    let (x, s, p) = (&inst.geometry, &inst.semantic, &inst.params);
    let entries = vec![
        GradEntry::compare(
            "geometry",
            g.geometry.as_slice(),
            &numeric_gradient(x.as_slice(), |v| objective(&with_data(x, v), s, p)),
        ),
        GradEntry::compare(
            "semantic",
            g.semantic.as_slice(),
            &numeric_gradient(s.as_slice(), |v| objective(x, &with_data(s, v), p)),
        ),
        GradEntry::compare(
            "w_q",
            g.w_q.as_slice(),
            &numeric_gradient(p.w_q.as_slice(), |v| {
                let q = FusionParams {
                    w_q: with_data(&p.w_q, v),
                    ..p.clone()
                };
                objective(x, s, &q)
            }),
        ),
        GradEntry::compare(
            "w_k",
            g.w_k.as_slice(),
            &numeric_gradient(p.w_k.as_slice(), |v| {
                let q = FusionParams {
                    w_k: with_data(&p.w_k, v),
                    ..p.clone()
                };
                objective(x, s, &q)
            }),
        ),
        GradEntry::compare(
            "w_v",
            g.w_v.as_slice(),
            &numeric_gradient(p.w_v.as_slice(), |v| {
                let q = FusionParams {
                    w_v: with_data(&p.w_v, v),
                    ..p.clone()
                };
                objective(x, s, &q)
            }),
        ),
    ];
    Ok(GradcheckReport::new("fuse", seed, sizes.to_vec(), entries))
}

/// Two views of a tilted plane with random features.
#[derive(Debug, Clone)]
pub struct WarpInstance {
    pub target: CameraView,
    pub context: CameraView,
    pub target_features: DenseMap,
    pub context_features: DenseMap,
    pub target_depth: DenseMap,
    pub context_depth: DenseMap,
}

/// Depth of the plane `n·X = c` along every pixel ray of `view`.
fn plane_depth(view: &CameraView, n: &Vector3<f64>, c: f64) -> DenseMap {
    let mut out = DenseMap::zeros(view.height, view.width, 1);
    let n_cam = view.rotation * n;
    // camera-frame plane: n_cam·x = c + n_cam·T
    let rhs = c + n_cam.dot(&view.translation);
    for y in 0..view.height {
        for x in 0..view.width {
            let dir = Vector3::new(
                (x as f64 + 0.5 - view.cx) / view.fx,
                (y as f64 + 0.5 - view.cy) / view.fy,
                1.0,
            );
            out.set(x, y, 0, rhs / n_cam.dot(&dir));
        }
    }
    out
}

/// `sizes = [height, width, channels]`. Roughly one context pixel in ten gets
/// a depth outlier so that the depth test rejects part of the overlap.
pub fn random_warp_instance(rng: &mut Rng, sizes: [usize; 3]) -> Result<WarpInstance> {
    let [h, w, d] = sizes;
    let f = w.max(h) as f64;
    let target = CameraView::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h, Matrix3::identity(), Vector3::zeros())?;
    let axis = Vector3::new(rng.normal(), rng.normal(), rng.normal());
    let rot = Rotation3::from_scaled_axis(axis.normalize() * rng.uniform_range(0.02, 0.12)).into_inner();
    let trans = Vector3::new(
        rng.uniform_range(-0.3, 0.3),
        rng.uniform_range(-0.3, 0.3),
        rng.uniform_range(-0.2, 0.2),
    );
    let context = CameraView::new(f, f, w as f64 / 2.0, h as f64 / 2.0, w, h, rot, trans)?;
    let normal = Vector3::new(rng.uniform_range(-0.3, 0.3), rng.uniform_range(-0.3, 0.3), 1.0).normalize();
    let offset = rng.uniform_range(2.5, 4.0);
    let target_depth = plane_depth(&target, &normal, offset);
    let mut context_depth = plane_depth(&context, &normal, offset);
    for v in context_depth.data_mut() {
        if rng.uniform() < 0.1 {
            *v *= 1.5;
        }
    }
    let mut features = |hh, ww| DenseMap::new(hh, ww, d, (0..hh * ww * d).map(|_| rng.normal()).collect());
    Ok(WarpInstance {
        target_features: features(h, w)?,
        context_features: features(h, w)?,
        target,
        context,
        target_depth,
        context_depth,
    })
}

impl WarpInstance {
    pub fn loss_with(&self, tf: &DenseMap, cf: &DenseMap, tol: f64) -> Result<f64> {
        Ok(warp_distance(&self.target, &self.context, tf, cf, &self.target_depth, &self.context_depth, tol)?.loss)
    }
}

pub fn check_warp(seed: u64, sizes: [usize; 3], tol: f64) -> Result<GradcheckReport> {
    let mut rng = Rng::new(seed);
    let inst = random_warp_instance(&mut rng, sizes)?;
    let (tf, cf) = (&inst.target_features, &inst.context_features);
    let res = warp_distance(&inst.target, &inst.context, tf, cf, &inst.target_depth, &inst.context_depth, tol)?;
    let rebuild = |m: &DenseMap, v: &[f64]| DenseMap::new(m.height(), m.width(), m.channels(), v.to_vec());
    let num_t = numeric_gradient(tf.data(), |v| inst.loss_with(&rebuild(tf, v).unwrap(), cf, tol).unwrap());
    let num_c = numeric_gradient(cf.data(), |v| inst.loss_with(tf, &rebuild(cf, v).unwrap(), tol).unwrap());
    let entries = vec![
        GradEntry::compare("target_features", res.grad_target_features.data(), &num_t),
        GradEntry::compare("context_features", res.grad_context_features.data(), &num_c),
    ];
    Ok(GradcheckReport::new("warp", seed, sizes.to_vec(), entries))
}

/// One voxel holding `members` random primitives.
pub fn random_voxel_cell(rng: &mut Rng, members: usize, feature_dim: usize) -> GaussianScene {
    let prims = (0..members)
        .map(|_| GaussianPrimitive {
            center: Vector3::from_fn(|_, _| rng.uniform_range(0.05, 0.95)),
            covariance: Matrix3::identity() * 1e-3,
            sh_color: vec![sh::dc_from_rgb([0.5; 3])],
            opacity: 0.5,
            feature: (0..feature_dim).map(|_| rng.normal()).collect(),
            confidence: rng.uniform_range(0.0, 3.0),
        })
        .collect();
    GaussianScene::new(prims, feature_dim, 0).expect("valid cell")
}

/// `sizes = [members, feature_dim]`, λ drawn from `[0.5, 4]`.
pub fn check_voxel_weights(seed: u64, sizes: [usize; 2]) -> Result<GradcheckReport> {
    let mut rng = Rng::new(seed);
    let scene = random_voxel_cell(&mut rng, sizes[0], sizes[1]);
    let lambda = rng.uniform_range(0.5, 4.0);
    let weights_of = |s: &GaussianScene| -> Result<Vec<f64>> {
        let t = fusion_weights(&assign_voxels(s, 1.0)?, s, lambda)?;
        if t.cells.len() != 1 {
            return Err(Error::InvalidParameter("cell split under perturbation".into()));
        }
        Ok(t.cells[0].weights.clone().unwrap_or_default())
    };
    let table = fusion_weights(&assign_voxels(&scene, 1.0)?, &scene, lambda)?;
    let jac = &weight_gradients(&scene, &table, lambda)?[0];
    let (m, d) = (sizes[0], sizes[1]);
    let flat: Vec<f64> = scene.primitives.iter().flat_map(|p| p.feature.clone()).collect();
    let mut analytic = Vec::with_capacity(m * m * d);
    let mut numeric = Vec::with_capacity(m * m * d);
    for g in 0..m {
        let num = numeric_gradient(&flat, |v| {
            let mut s = scene.clone();
            for (h, p) in s.primitives.iter_mut().enumerate() {
                p.feature.copy_from_slice(&v[h * d..(h + 1) * d]);
            }
            weights_of(&s).map(|w| w[g]).unwrap_or(f64::NAN)
        });
        for h in 0..m {
            for c in 0..d {
                analytic.push(jac.get(g, h, c));
                numeric.push(num[h * d + c]);
            }
        }
    }
    let entries = vec![GradEntry::compare("weights_wrt_features", &analytic, &numeric)];
    Ok(GradcheckReport::new("voxel", seed, sizes.to_vec(), entries))
}

/// `sizes = [height, width, channels]`.
pub fn check_feature_loss(seed: u64, sizes: [usize; 3]) -> Result<GradcheckReport> {
    let mut rng = Rng::new(seed);
    let [h, w, d] = sizes;
    let mut map = || DenseMap::new(h, w, d, (0..h * w * d).map(|_| rng.normal()).collect());
    let (r, t) = (map()?, map()?);
    let res = feature_loss(&r, &t)?;
    let num = numeric_gradient(r.data(), |v| {
        feature_loss(&DenseMap::new(h, w, d, v.to_vec()).unwrap(), &t).unwrap().loss
    });
    let entries = vec![GradEntry::compare("rendered_features", res.grad.data(), &num)];
    Ok(GradcheckReport::new("feature", seed, sizes.to_vec(), entries))
}
