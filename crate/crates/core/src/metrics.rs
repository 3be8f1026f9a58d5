//! Image and segmentation metrics.

use crate::error::{shape_err, Error, Result};
use crate::geometry::DenseMap;
use crate::warp::cosine;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// PSNR for images in `[0, 1]`, capped at [`PSNR_CAP`].
pub fn psnr(a: &DenseMap, b: &DenseMap) -> Result<f64> {
    a.ensure_shape(b, "second image")?;
    let n = a.data().len();
    if n == 0 {
        return Err(shape_err("empty image"));
    }
    let mse = a.data().iter().zip(b.data()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Separable valid-mode filter of one channel.
fn filter_valid(img: &[f64], h: usize, w: usize, k: &[f64]) -> (Vec<f64>, usize, usize) {
    let n = k.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for y in 0..h {
        for x in 0..ow {
            rows[y * ow + x] = (0..n).map(|i| k[i] * img[y * w + x + i]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for y in 0..oh {
        for x in 0..ow {
            out[y * ow + x] = (0..n).map(|i| k[i] * rows[(y + i) * ow + x]).sum();
        }
    }
    (out, oh, ow)
}

/// Mean SSIM over valid 11×11 Gaussian windows (σ = 1.5) and channels.
pub fn ssim(a: &DenseMap, b: &DenseMap) -> Result<f64> {
    a.ensure_shape(b, "second image")?;
    let (h, w, c) = a.shape();
    if h < SSIM_WINDOW || w < SSIM_WINDOW || c == 0 {
        return Err(shape_err(format!(
            "SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {h}x{w}"
        )));
    }
    let k = gaussian_window();
    let mut total = 0.0;
    let mut count = 0usize;
    for ch in 0..c {
        let x: Vec<f64> = (0..h * w).map(|p| a.data()[p * c + ch]).collect();
        let y: Vec<f64> = (0..h * w).map(|p| b.data()[p * c + ch]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
        let (mx, _, _) = filter_valid(&x, h, w, &k);
        let (my, _, _) = filter_valid(&y, h, w, &k);
        let (sxx, _, _) = filter_valid(&xx, h, w, &k);
        let (syy, _, _) = filter_valid(&yy, h, w, &k);
        let (sxy, _, _) = filter_valid(&xy, h, w, &k);
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            total += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
        }
        count += mx.len();
    }
    Ok(total / count as f64)
}

/// Mean IoU over the labels that occur in `gt`.
///
/// Labels range over `0..=n_classes`; the background label `n_classes` is
/// scored like any other class.
pub fn miou(pred: &[u32], gt: &[u32], n_classes: usize) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch {
            expected: gt.len(),
            found: pred.len(),
        });
    }
    let k = n_classes + 1;
    if let Some(bad) = pred.iter().chain(gt).find(|l| **l as usize >= k) {
        return Err(Error::InvalidParameter(format!("label {bad} exceeds {n_classes}")));
    }
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    let mut present = vec![false; k];
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p as usize, g as usize);
        present[g] = true;
        if p == g {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    let classes: Vec<usize> = (0..k).filter(|c| present[*c]).collect();
    if classes.is_empty() {
        return Err(Error::InvalidParameter("ground truth is empty".into()));
    }
    let sum: f64 = classes
        .iter()
        .map(|&c| tp[c] as f64 / (tp[c] + fp[c] + fn_[c]) as f64)
        .sum();
    Ok(sum / classes.len() as f64)
}

/// Per-pixel argmax of cosine similarity against class features.
///
/// Pixels with `alpha <= 0.5` get the background label `class_features.len()`;
/// ties go to the lower class index.
pub fn label_by_cosine(features: &DenseMap, alpha: &DenseMap, class_features: &[Vec<f64>]) -> Result<Vec<u32>> {
    if alpha.channels() != 1 || (alpha.height(), alpha.width()) != (features.height(), features.width()) {
        return Err(shape_err("alpha must be a single-channel map matching the features"));
    }
    if let Some(f) = class_features.iter().find(|f| f.len() != features.channels()) {
        return Err(Error::DimensionMismatch(format!(
            "class feature has {} dims, map has {}",
            f.len(),
            features.channels()
        )));
    }
    let bg = class_features.len() as u32;
    Ok((0..features.pixel_count())
        .map(|p| {
            if alpha.data()[p] <= 0.5 {
                return bg;
            }
            let f = features.pixel(p);
            let mut best = (bg, f64::NEG_INFINITY);
            for (k, cf) in class_features.iter().enumerate() {
                let s = cosine(f, cf);
                if s > best.1 {
                    best = (k as u32, s);
                }
            }
            best.0
        })
        .collect())
}
