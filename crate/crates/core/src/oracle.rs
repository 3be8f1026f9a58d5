//! Brute-force reference implementations used by the test suites.
//!
//! Everything here is written with plain scalar loops and touches only the
//! domain types of the modules it checks, never their helpers. Inputs are
//! expected to be small.

use nalgebra::DMatrix;

use crate::attention::FusionParams;
use crate::geometry::{CameraView, DenseMap};
use crate::scene::GaussianScene;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// Cosine with zero-norm guard: returns (cos, ∂cos/∂a, ∂cos/∂b), all zero under the guard.
fn cos_grads(a: &[f64], b: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    let n = a.len();
    if na < 1e-12 || nb < 1e-12 {
        return (0.0, vec![0.0; n], vec![0.0; n]);
    }
    let c = dot(a, b) / (na * nb);
    let mut ga = vec![0.0; n];
    let mut gb = vec![0.0; n];
    for i in 0..n {
        ga[i] = b[i] / (na * nb) - c * a[i] / (na * na);
        gb[i] = a[i] / (na * nb) - c * b[i] / (nb * nb);
    }
    (c, ga, gb)
}

#[derive(Debug, Clone)]
pub struct OracleWarp {
    pub loss: f64,
    pub valid: Vec<bool>,
    pub grad_target: Vec<f64>,
    pub grad_context: Vec<f64>,
    /// Continuous context coordinate per target pixel (NaN where depth input is invalid).
    pub coords: Vec<(f64, f64)>,
}

/// Masked cosine distance between target features and bilinearly warped context features.
pub fn oracle_warp(
    tv: &CameraView,
    cv: &CameraView,
    tf: &DenseMap,
    cf: &DenseMap,
    td: &DenseMap,
    cd: &DenseMap,
    tol: f64,
) -> OracleWarp {
    let (w, h, d) = (tv.width, tv.height, tf.channels());
    let (cw, ch) = (cv.width, cv.height);
    let rt = tv.rotation;
    let rc = cv.rotation;
    let mut valid = vec![false; w * h];
    let mut coords = vec![(f64::NAN, f64::NAN); w * h];
    let mut grad_t = vec![0.0; w * h * d];
    let mut grad_c = vec![0.0; cw * ch * d];
    // (pixel, texels, weights)
    let mut hits: Vec<(usize, [usize; 4], [f64; 4])> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let z = td.data()[p];
            if !(z > 0.0) {
                continue;
            }
            // target camera -> world -> context camera
            let xc = [
                (x as f64 + 0.5 - tv.cx) / tv.fx * z,
                (y as f64 + 0.5 - tv.cy) / tv.fy * z,
                z,
            ];
            let mut world = [0.0; 3];
            for i in 0..3 {
                for k in 0..3 {
                    world[i] += rt[(k, i)] * (xc[k] - tv.translation[k]);
                }
            }
            let mut pc = [0.0; 3];
            for i in 0..3 {
                pc[i] = cv.translation[i];
                for k in 0..3 {
                    pc[i] += rc[(i, k)] * world[k];
                }
            }
            if pc[2] <= 1e-8 {
                continue;
            }
            let u = cv.fx * pc[0] / pc[2] + cv.cx;
            let v = cv.fy * pc[1] / pc[2] + cv.cy;
            coords[p] = (u, v);
            let (gx, gy) = (u - 0.5, v - 0.5);
            let slack = 1e-9;
            if !(gx >= -slack && gx <= (cw - 1) as f64 + slack && gy >= -slack && gy <= (ch - 1) as f64 + slack) {
                continue;
            }
            let gx = gx.max(0.0).min((cw - 1) as f64);
            let gy = gy.max(0.0).min((ch - 1) as f64);
            let x0 = (gx.floor() as usize).min(cw - 1);
            let y0 = (gy.floor() as usize).min(ch - 1);
            let x1 = (x0 + 1).min(cw - 1);
            let y1 = (y0 + 1).min(ch - 1);
            let (ax, ay) = (gx - x0 as f64, gy - y0 as f64);
            let texels = [y0 * cw + x0, y0 * cw + x1, y1 * cw + x0, y1 * cw + x1];
            let weights = [(1.0 - ax) * (1.0 - ay), ax * (1.0 - ay), (1.0 - ax) * ay, ax * ay];
            let mut zs = 0.0;
            for k in 0..4 {
                zs += weights[k] * cd.data()[texels[k]];
            }
            if (pc[2] - zs).abs() / pc[2] < tol {
                valid[p] = true;
                hits.push((p, texels, weights));
            }
        }
    }
    let mut loss = 0.0;
    if !hits.is_empty() {
        let n = hits.len() as f64;
        for (p, texels, weights) in &hits {
            let mut warped = vec![0.0; d];
            for k in 0..4 {
                for c in 0..d {
                    warped[c] += weights[k] * cf.data()[texels[k] * d + c];
                }
            }
            let ft = &tf.data()[p * d..(p + 1) * d];
            let (cos, ga, gb) = cos_grads(ft, &warped);
            loss += 1.0 - cos;
            for c in 0..d {
                grad_t[p * d + c] = -ga[c] / n;
                for k in 0..4 {
                    grad_c[texels[k] * d + c] -= weights[k] * gb[c] / n;
                }
            }
        }
        loss /= n;
    }
    OracleWarp {
        loss,
        valid,
        grad_target: grad_t,
        grad_context: grad_c,
        coords,
    }
}

/// One merged voxel as computed by [`oracle_voxelize`].
#[derive(Debug, Clone)]
pub struct OracleVoxel {
    pub key: [i64; 3],
    pub members: Vec<usize>,
    pub weights: Vec<f64>,
    pub center: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    pub sh_color: Vec<[f64; 3]>,
    pub opacity: f64,
    pub feature: Vec<f64>,
    pub confidence: f64,
}

/// Quadratic-time grouping by quantized key, then scalar softmax and merge.
pub fn oracle_voxelize(scene: &GaussianScene, eps: f64, lambda: f64) -> Vec<OracleVoxel> {
    let prims = &scene.primitives;
    let keys: Vec<[i64; 3]> = prims
        .iter()
        .map(|p| {
            [
                (p.center[0] / eps).ceil() as i64,
                (p.center[1] / eps).ceil() as i64,
                (p.center[2] / eps).ceil() as i64,
            ]
        })
        .collect();
    let mut groups: Vec<([i64; 3], Vec<usize>)> = Vec::new();
    let mut taken = vec![false; prims.len()];
    for i in 0..prims.len() {
        if taken[i] {
            continue;
        }
        let mut members = vec![];
        for j in i..prims.len() {
            if keys[j] == keys[i] {
                members.push(j);
                taken[j] = true;
            }
        }
        groups.push((keys[i], members));
    }
    groups.sort_by(|a, b| a.0.cmp(&b.0));

    let d = scene.feature_dim;
    let mut out = Vec::new();
    for (key, members) in groups {
        let m = members.len();
        let mut proto = vec![0.0; d];
        for &g in &members {
            for c in 0..d {
                proto[c] += prims[g].feature[c];
            }
        }
        for v in proto.iter_mut() {
            *v /= m as f64;
        }
        let logits: Vec<f64> = members
            .iter()
            .map(|&g| prims[g].confidence - lambda * (1.0 - cos_grads(&prims[g].feature, &proto).0))
            .collect();
        let mut mx = f64::NEG_INFINITY;
        for l in &logits {
            if *l > mx {
                mx = *l;
            }
        }
        let mut weights: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in weights.iter_mut() {
            *w /= total;
        }
        out.push(merge(scene, key, members, weights));
    }
    out
}

fn merge(scene: &GaussianScene, key: [i64; 3], members: Vec<usize>, weights: Vec<f64>) -> OracleVoxel {
    let prims = &scene.primitives;
    let n_sh = prims[members[0]].sh_color.len();
    let d = scene.feature_dim;
    let mut v = OracleVoxel {
        key,
        members: members.clone(),
        weights: weights.clone(),
        center: [0.0; 3],
        covariance: [[0.0; 3]; 3],
        sh_color: vec![[0.0; 3]; n_sh],
        opacity: 0.0,
        feature: vec![0.0; d],
        confidence: 0.0,
    };
    for (k, &g) in members.iter().enumerate() {
        let (p, w) = (&prims[g], weights[k]);
        for i in 0..3 {
            v.center[i] += w * p.center[i];
        }
        for s in 0..n_sh {
            for c in 0..3 {
                v.sh_color[s][c] += w * p.sh_color[s][c];
            }
        }
        for c in 0..d {
            v.feature[c] += w * p.feature[c];
        }
        v.opacity += w * p.opacity;
        v.confidence += w * p.confidence;
    }
    for (k, &g) in members.iter().enumerate() {
        let (p, w) = (&prims[g], weights[k]);
        for i in 0..3 {
            for j in 0..3 {
                let spread = (p.center[i] - v.center[i]) * (p.center[j] - v.center[j]);
                v.covariance[i][j] += w * (p.covariance[(i, j)] + spread);
            }
        }
    }
    v
}

/// Confidence-only merge: softmax over confidences, no semantic term.
pub fn oracle_confidence_aggregate(scene: &GaussianScene, eps: f64) -> Vec<OracleVoxel> {
    let prims = &scene.primitives;
    let mut order: Vec<(Vec<i64>, usize)> = prims
        .iter()
        .enumerate()
        .map(|(i, p)| ((0..3).map(|k| (p.center[k] / eps).ceil() as i64).collect(), i))
        .collect();
    order.sort();
    let mut out = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end < order.len() && order[end].0 == order[start].0 {
            end += 1;
        }
        let members: Vec<usize> = order[start..end].iter().map(|e| e.1).collect();
        let top = members.iter().map(|&g| prims[g].confidence).fold(f64::NEG_INFINITY, f64::max);
        let raw: Vec<f64> = members.iter().map(|&g| (prims[g].confidence - top).exp()).collect();
        let z: f64 = raw.iter().sum();
        let key = [order[start].0[0], order[start].0[1], order[start].0[2]];
        out.push(merge(scene, key, members, raw.iter().map(|r| r / z).collect()));
        start = end;
    }
    out
}

/// Triple-loop cross-attention.
pub fn oracle_attention(x: &DMatrix<f64>, s: &DMatrix<f64>, p: &FusionParams) -> DMatrix<f64> {
    let (nx, ns) = (x.nrows(), s.nrows());
    let (dk, dv) = (p.w_q.ncols(), p.w_v.ncols());
    let proj = |m: &DMatrix<f64>, w: &DMatrix<f64>| {
        let mut out = vec![vec![0.0; w.ncols()]; m.nrows()];
        for i in 0..m.nrows() {
            for j in 0..w.ncols() {
                for k in 0..m.ncols() {
                    out[i][j] += m[(i, k)] * w[(k, j)];
                }
            }
        }
        out
    };
    let q = proj(x, &p.w_q);
    let k = proj(s, &p.w_k);
    let v = proj(s, &p.w_v);
    let mut out = DMatrix::zeros(nx, dv);
    for i in 0..nx {
        let mut logits = vec![0.0; ns];
        for j in 0..ns {
            for c in 0..dk {
                logits[j] += q[i][c] * k[j][c];
            }
            logits[j] /= (dk as f64).sqrt();
        }
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|l| (l - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        for j in 0..ns {
            for c in 0..dv {
                out[(i, c)] += e[j] / z * v[j][c];
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct OracleRender {
    pub color: Vec<f64>,
    pub feature: Vec<f64>,
    pub depth: Vec<f64>,
    pub alpha: Vec<f64>,
    /// Per pixel: Σ weights + residual transmittance.
    pub weight_sum: Vec<f64>,
}

/// Per-pixel loop over every primitive, for degree-0 SH scenes.
pub fn oracle_compositing(scene: &GaussianScene, view: &CameraView, bg: [f64; 3]) -> OracleRender {
    assert_eq!(scene.sh_degree, 0, "the compositing oracle handles degree 0 only");
    let (w, h, d) = (view.width, view.height, scene.feature_dim);
    let r = view.rotation;
    // (depth, index, u, v, inverse covariance, opacity)
    let mut splats = Vec::new();
    for (i, p) in scene.primitives.iter().enumerate() {
        let mut t = [0.0; 3];
        for a in 0..3 {
            t[a] = view.translation[a];
            for b in 0..3 {
                t[a] += r[(a, b)] * p.center[b];
            }
        }
        if t[2] <= 0.01 {
            continue;
        }
        let u = view.fx * t[0] / t[2] + view.cx;
        let v = view.fy * t[1] / t[2] + view.cy;
        let j = [
            [view.fx / t[2], 0.0, -view.fx * t[0] / (t[2] * t[2])],
            [0.0, view.fy / t[2], -view.fy * t[1] / (t[2] * t[2])],
        ];
        // M = J R, cov = M Σ Mᵀ
        let mut m = [[0.0; 3]; 2];
        for a in 0..2 {
            for b in 0..3 {
                for k in 0..3 {
                    m[a][b] += j[a][k] * r[(k, b)];
                }
            }
        }
        let mut cov = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                for k in 0..3 {
                    for l in 0..3 {
                        cov[a][b] += m[a][k] * p.covariance[(k, l)] * m[b][l];
                    }
                }
            }
        }
        cov[0][0] += 0.3;
        cov[1][1] += 0.3;
        let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
        if !(det >= 1e-12) {
            continue;
        }
        let inv = [cov[1][1] / det, -cov[0][1] / det, cov[0][0] / det];
        splats.push((t[2], i, u, v, inv, p.opacity));
    }
    splats.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));

    let mut out = OracleRender {
        color: vec![0.0; w * h * 3],
        feature: vec![0.0; w * h * d],
        depth: vec![0.0; w * h],
        alpha: vec![0.0; w * h],
        weight_sum: vec![0.0; w * h],
    };
    for y in 0..h {
        for x in 0..w {
            let px = y * w + x;
            let mut trans = 1.0;
            let mut wsum = 0.0;
            for (z, i, u, v, inv, opacity) in &splats {
                let dx = x as f64 + 0.5 - u;
                let dy = y as f64 + 0.5 - v;
                let q = inv[0] * dx * dx + 2.0 * inv[1] * dx * dy + inv[2] * dy * dy;
                if !(q <= 9.0) {
                    continue;
                }
                let g = (-0.5 * q).exp();
                let a = opacity * if g > 0.99 { 0.99 } else { g };
                let wt = a * trans;
                wsum += wt;
                let prim = &scene.primitives[*i];
                for c in 0..3 {
                    let rgb = 0.282_094_791_773_878_14 * prim.sh_color[0][c] + 0.5;
                    out.color[px * 3 + c] += wt * if rgb > 0.0 { rgb } else { 0.0 };
                }
                for c in 0..d {
                    out.feature[px * d + c] += wt * prim.feature[c];
                }
                out.depth[px] += wt * z;
                trans *= 1.0 - a;
                if trans < 1e-4 {
                    break;
                }
            }
            for c in 0..3 {
                out.color[px * 3 + c] += trans * bg[c];
            }
            out.alpha[px] = 1.0 - trans;
            out.weight_sum[px] = wsum + trans;
        }
    }
    out
}
