//! Semantic-aware voxelization.
//!
//! Primitives are bucketed by `ceil(center / ε)`. Inside each cell the fusion
//! weight of a member is a softmax over `C_g - λ·d_g`, where `d_g` is the
//! cosine distance to the cell's unweighted mean feature. Attributes merge as
//! weighted sums; covariances merge by moment matching.

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::scene::{GaussianPrimitive, GaussianScene};
use crate::warp::{cosine, cosine_and_grads};

pub type VoxelKey = [i64; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelCell {
    pub key: VoxelKey,
    /// Scene indices, ascending.
    pub members: Vec<usize>,
    /// Unweighted mean of member features.
    pub prototype: Vec<f64>,
    /// Fusion weights aligned with `members`; `None` until computed.
    pub weights: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelTable {
    pub voxel_size: f64,
    /// Sorted by key.
    pub cells: Vec<VoxelCell>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VoxelStats {
    pub n_in: usize,
    pub n_out: usize,
    pub cells: usize,
    pub mean_members: f64,
    pub max_members: usize,
}

impl VoxelTable {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn stats(&self) -> VoxelStats {
        let n_in: usize = self.cells.iter().map(|c| c.members.len()).sum();
        VoxelStats {
            n_in,
            n_out: self.cells.len(),
            cells: self.cells.len(),
            mean_members: if self.cells.is_empty() {
                0.0
            } else {
                n_in as f64 / self.cells.len() as f64
            },
            max_members: self.cells.iter().map(|c| c.members.len()).max().unwrap_or(0),
        }
    }

    /// Cell index of every scene primitive.
    pub fn cell_of(&self, n_primitives: usize) -> Vec<usize> {
        let mut out = vec![usize::MAX; n_primitives];
        for (ci, cell) in self.cells.iter().enumerate() {
            for &m in &cell.members {
                out[m] = ci;
            }
        }
        out
    }
}

pub fn voxel_key(center: &Vector3<f64>, voxel_size: f64) -> VoxelKey {
    [0, 1, 2].map(|i| (center[i] / voxel_size).ceil() as i64)
}

/// Groups primitives by quantized center and computes each cell's prototype.
pub fn assign_voxels(scene: &GaussianScene, voxel_size: f64) -> Result<VoxelTable> {
    if !(voxel_size > 0.0 && voxel_size.is_finite()) {
        return Err(Error::NonPositiveVoxelSize(voxel_size));
    }
    let mut keyed: Vec<(VoxelKey, usize)> = scene
        .primitives
        .par_iter()
        .enumerate()
        .map(|(i, p)| (voxel_key(&p.center, voxel_size), i))
        .collect();
    // (key, index) pairs are unique, so the unstable sort is deterministic
    keyed.par_sort_unstable();

    let mut groups: Vec<(VoxelKey, Vec<usize>)> = Vec::new();
    for (key, i) in keyed {
        match groups.last_mut() {
            Some((k, members)) if *k == key => members.push(i),
            _ => groups.push((key, vec![i])),
        }
    }
    let d = scene.feature_dim;
    let cells = groups
        .into_par_iter()
        .map(|(key, members)| {
            let mut prototype = vec![0.0; d];
            for &m in &members {
                for (acc, v) in prototype.iter_mut().zip(&scene.primitives[m].feature) {
                    *acc += v;
                }
            }
            let inv = 1.0 / members.len() as f64;
            prototype.iter_mut().for_each(|v| *v *= inv);
            VoxelCell {
                key,
                members,
                prototype,
                weights: None,
            }
        })
        .collect();
    Ok(VoxelTable { voxel_size, cells })
}

/// Cosine distance of every primitive to its cell prototype, indexed by scene index.
pub fn semantic_distances(table: &VoxelTable, scene: &GaussianScene) -> Vec<f64> {
    let mut out = vec![0.0; scene.len()];
    for cell in &table.cells {
        for &m in &cell.members {
            out[m] = 1.0 - cosine(&scene.primitives[m].feature, &cell.prototype);
        }
    }
    out
}

fn cell_weights(cell: &VoxelCell, scene: &GaussianScene, lambda_sem: f64) -> Vec<f64> {
    let logits: Vec<f64> = cell
        .members
        .iter()
        .map(|&m| {
            let p = &scene.primitives[m];
            p.confidence - lambda_sem * (1.0 - cosine(&p.feature, &cell.prototype))
        })
        .collect();
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

fn check_lambda(lambda_sem: f64) -> Result<()> {
    if !(lambda_sem >= 0.0 && lambda_sem.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be finite and non-negative, got {lambda_sem}"
        )));
    }
    Ok(())
}

/// Fills in fusion weights for every cell.
pub fn set_fusion_weights(table: &mut VoxelTable, scene: &GaussianScene, lambda_sem: f64) -> Result<()> {
    check_lambda(lambda_sem)?;
    table
        .cells
        .par_iter_mut()
        .for_each(|cell| cell.weights = Some(cell_weights(cell, scene, lambda_sem)));
    Ok(())
}

/// Copy of `table` with fusion weights set.
pub fn fusion_weights(table: &VoxelTable, scene: &GaussianScene, lambda_sem: f64) -> Result<VoxelTable> {
    let mut out = table.clone();
    set_fusion_weights(&mut out, scene, lambda_sem)?;
    Ok(out)
}

fn merge_cell(cell: &VoxelCell, weights: &[f64], scene: &GaussianScene) -> GaussianPrimitive {
    let first = &scene.primitives[cell.members[0]];
    let mut center = Vector3::zeros();
    let mut sh_color = vec![[0.0; 3]; first.sh_color.len()];
    let mut feature = vec![0.0; first.feature.len()];
    let (mut opacity, mut confidence) = (0.0, 0.0);
    for (&m, &w) in cell.members.iter().zip(weights) {
        let p = &scene.primitives[m];
        center += w * p.center;
        for (acc, c) in sh_color.iter_mut().zip(&p.sh_color) {
            for k in 0..3 {
                acc[k] += w * c[k];
            }
        }
        for (acc, f) in feature.iter_mut().zip(&p.feature) {
            *acc += w * f;
        }
        opacity += w * p.opacity;
        confidence += w * p.confidence;
    }
    let mut covariance = Matrix3::zeros();
    for (&m, &w) in cell.members.iter().zip(weights) {
        let p = &scene.primitives[m];
        let off = p.center - center;
        covariance += w * (p.covariance + off * off.transpose());
    }
    covariance = 0.5 * (covariance + covariance.transpose());
    GaussianPrimitive {
        center,
        covariance,
        sh_color,
        // weights sum to 1 only up to rounding
        opacity: opacity.clamp(0.0, 1.0),
        feature,
        confidence: confidence.max(0.0),
    }
}

/// One merged primitive per cell, in key order.
pub fn aggregate(scene: &GaussianScene, table: &VoxelTable) -> Result<GaussianScene> {
    let primitives = table
        .cells
        .par_iter()
        .map(|cell| {
            let w = cell.weights.as_deref().ok_or(Error::WeightsUnset)?;
            Ok(merge_cell(cell, w, scene))
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianScene::new(primitives, scene.feature_dim, scene.sh_degree)
}

/// Assign, weight and aggregate in one call.
pub fn voxelize(scene: &GaussianScene, voxel_size: f64, lambda_sem: f64) -> Result<(VoxelTable, GaussianScene)> {
    check_lambda(lambda_sem)?;
    let mut table = assign_voxels(scene, voxel_size)?;
    set_fusion_weights(&mut table, scene, lambda_sem)?;
    let merged = aggregate(scene, &table)?;
    Ok((table, merged))
}

/// Jacobian of one cell's weights with respect to its members' features.
///
/// Entry `(g, h, c)` is `∂w_g / ∂f_h[c]`, for member positions `g`, `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellJacobian {
    pub members: Vec<usize>,
    pub feature_dim: usize,
    pub data: Vec<f64>,
}

impl CellJacobian {
    pub fn get(&self, g: usize, h: usize, c: usize) -> f64 {
        let m = self.members.len();
        self.data[(g * m + h) * self.feature_dim + c]
    }
}

/// Weight Jacobians for every cell. Assignment is held fixed; the prototype is
/// differentiated as a function of all member features.
pub fn weight_gradients(scene: &GaussianScene, table: &VoxelTable, lambda_sem: f64) -> Result<Vec<CellJacobian>> {
    check_lambda(lambda_sem)?;
    table
        .cells
        .par_iter()
        .map(|cell| {
            let w = cell.weights.as_deref().ok_or(Error::WeightsUnset)?;
            Ok(cell_jacobian(cell, w, scene, lambda_sem))
        })
        .collect()
}

fn cell_jacobian(cell: &VoxelCell, w: &[f64], scene: &GaussianScene, lambda_sem: f64) -> CellJacobian {
    let m = cell.members.len();
    let d = scene.feature_dim;
    let mut data = vec![0.0; m * m * d];
    if m > 1 && lambda_sem != 0.0 {
        // A_k = ∂cos/∂f_k, B_k = ∂cos/∂prototype, zero under the norm guard
        let grads: Vec<(Vec<f64>, Vec<f64>)> = cell
            .members
            .iter()
            .map(|&k| match cosine_and_grads(&scene.primitives[k].feature, &cell.prototype) {
                Some((_, a, b)) => (a, b),
                None => (vec![0.0; d], vec![0.0; d]),
            })
            .collect();
        let inv_m = 1.0 / m as f64;
        // Σ_k w_k B_k / m, shared by every (g, h)
        let mut wb = vec![0.0; d];
        for (k, (_, b)) in grads.iter().enumerate() {
            for (acc, v) in wb.iter_mut().zip(b) {
                *acc += w[k] * v * inv_m;
            }
        }
        for g in 0..m {
            let (_, bg) = &grads[g];
            for h in 0..m {
                let (ah, _) = &grads[h];
                let out = &mut data[(g * m + h) * d..(g * m + h + 1) * d];
                for c in 0..d {
                    // Σ_k w_g (δ_gk - w_k) [δ_kh A_k + B_k / m]
                    let mut s = bg[c] * inv_m - wb[c];
                    if g == h {
                        s += ah[c];
                    }
                    s -= w[h] * ah[c];
                    out[c] = lambda_sem * w[g] * s;
                }
            }
        }
    }
    CellJacobian {
        members: cell.members.clone(),
        feature_dim: d,
        data,
    }
}
