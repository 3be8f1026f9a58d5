//! Training objective terms and their analytic gradients.

use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};
use crate::geometry::DenseMap;
use crate::warp::cosine_and_grads;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_lpips: f64,
    pub lambda_feat: f64,
    pub lambda_warp: f64,
    pub lambda_depth: f64,
    pub lambda_pose: f64,
    pub huber_delta: f64,
    pub depth_mask_fraction: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_lpips: 0.05,
            lambda_feat: 0.1,
            lambda_warp: 0.1,
            lambda_depth: 1.0,
            lambda_pose: 10.0,
            huber_delta: 1.0,
            depth_mask_fraction: 0.9,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_lpips", self.lambda_lpips),
            ("lambda_feat", self.lambda_feat),
            ("lambda_warp", self.lambda_warp),
            ("lambda_depth", self.lambda_depth),
            ("lambda_pose", self.lambda_pose),
        ];
        for (name, v) in named {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if !(self.huber_delta > 0.0 && self.huber_delta.is_finite()) {
            return Err(Error::Config(format!("huber_delta must be > 0, got {}", self.huber_delta)));
        }
        if !(self.depth_mask_fraction > 0.0 && self.depth_mask_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "depth_mask_fraction must be in (0, 1], got {}",
                self.depth_mask_fraction
            )));
        }
        Ok(())
    }
}

/// Differentiable image-similarity penalty attached to the RGB term.
pub trait PerceptualScorer {
    /// Score and gradient with respect to `rendered`.
    fn score(&self, rendered: &DenseMap, target: &DenseMap) -> Result<(f64, DenseMap)>;
}

/// Stand-in scorer that always returns zero.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroScorer;

impl PerceptualScorer for ZeroScorer {
    fn score(&self, rendered: &DenseMap, _target: &DenseMap) -> Result<(f64, DenseMap)> {
        let (h, w, c) = rendered.shape();
        Ok((0.0, DenseMap::zeros(h, w, c)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossWithGrad {
    pub loss: f64,
    pub grad: DenseMap,
}

/// Mean absolute error plus `lambda_lpips` times the perceptual score.
pub fn rgb_loss(
    rendered: &DenseMap,
    target: &DenseMap,
    perceptual: Option<&dyn PerceptualScorer>,
    lambda_lpips: f64,
) -> Result<LossWithGrad> {
    if rendered.channels() != 3 {
        return Err(shape_err(format!("rgb loss needs 3 channels, found {}", rendered.channels())));
    }
    rendered.ensure_shape(target, "target image")?;
    let n = rendered.data().len();
    let (h, w, c) = rendered.shape();
    let mut grad = DenseMap::zeros(h, w, c);
    let mut sum = 0.0;
    if n > 0 {
        let inv = 1.0 / n as f64;
        for ((g, r), t) in grad.data_mut().iter_mut().zip(rendered.data()).zip(target.data()) {
            let diff = r - t;
            sum += diff.abs();
            *g = if diff > 0.0 {
                inv
            } else if diff < 0.0 {
                -inv
            } else {
                0.0
            };
        }
        sum *= inv;
    }
    let mut loss = sum;
    if let Some(scorer) = perceptual {
        let (s, sg) = scorer.score(rendered, target)?;
        sg.ensure_shape(rendered, "perceptual gradient")?;
        loss += lambda_lpips * s;
        for (g, v) in grad.data_mut().iter_mut().zip(sg.data()) {
            *g += lambda_lpips * v;
        }
    }
    Ok(LossWithGrad { loss, grad })
}

/// Mean over pixels of `1 - cos(rendered, target)`.
pub fn feature_loss(rendered: &DenseMap, target: &DenseMap) -> Result<LossWithGrad> {
    rendered.ensure_shape(target, "target features")?;
    let (h, w, c) = rendered.shape();
    let n = h * w;
    let mut grad = DenseMap::zeros(h, w, c);
    if n == 0 {
        return Ok(LossWithGrad { loss: 0.0, grad });
    }
    let inv = 1.0 / n as f64;
    let mut loss = 0.0;
    for p in 0..n {
        match cosine_and_grads(rendered.pixel(p), target.pixel(p)) {
            Some((cos, ga, _)) => {
                loss += 1.0 - cos;
                for (g, v) in grad.pixel_mut(p).iter_mut().zip(&ga) {
                    *g = -inv * v;
                }
            }
            None => loss += 1.0,
        }
    }
    Ok(LossWithGrad { loss: loss * inv, grad })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthLoss {
    pub loss: f64,
    pub grad: DenseMap,
    pub mask: Vec<bool>,
    /// Smallest confidence admitted to the mask.
    pub threshold: f64,
}

/// Confidence threshold selecting the top `fraction` of finite values.
///
/// The cut sits at the `ceil(fraction·n)`-th largest confidence; every pixel
/// at or above it is kept, so ties can admit more than the nominal count.
pub fn confidence_threshold(confidence: &[f64], fraction: f64) -> Result<f64> {
    let mut finite: Vec<f64> = confidence.iter().cloned().filter(|c| c.is_finite()).collect();
    if finite.is_empty() {
        return Err(Error::EmptyMask);
    }
    finite.sort_by(|a, b| b.total_cmp(a));
    let k = ((fraction * finite.len() as f64).ceil() as usize).clamp(1, finite.len());
    Ok(finite[k - 1])
}

/// Mean squared error between rendered and pseudo depth over the most confident pixels.
pub fn depth_distill_loss(
    rendered: &DenseMap,
    pseudo: &DenseMap,
    confidence: &DenseMap,
    mask_fraction: f64,
) -> Result<DepthLoss> {
    if rendered.channels() != 1 {
        return Err(shape_err("rendered depth must have 1 channel"));
    }
    rendered.ensure_shape(pseudo, "pseudo depth")?;
    rendered.ensure_shape(confidence, "confidence")?;
    if !(mask_fraction > 0.0 && mask_fraction <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "mask fraction must be in (0, 1], got {mask_fraction}"
        )));
    }
    let threshold = confidence_threshold(confidence.data(), mask_fraction)?;
    let mask: Vec<bool> = confidence.data().iter().map(|c| c.is_finite() && *c >= threshold).collect();
    let count = mask.iter().filter(|m| **m).count();
    let inv = 1.0 / count as f64;
    let (h, w, _) = rendered.shape();
    let mut grad = DenseMap::zeros(h, w, 1);
    let mut loss = 0.0;
    for (p, keep) in mask.iter().enumerate() {
        if *keep {
            let r = rendered.data()[p] - pseudo.data()[p];
            loss += r * r;
            grad.data_mut()[p] = 2.0 * r * inv;
        }
    }
    Ok(DepthLoss {
        loss: loss * inv,
        grad,
        mask,
        threshold,
    })
}

pub fn huber(r: f64, delta: f64) -> f64 {
    let a = r.abs();
    if a <= delta {
        0.5 * r * r
    } else {
        delta * (a - 0.5 * delta)
    }
}

fn huber_slope(r: f64, delta: f64) -> f64 {
    r.clamp(-delta, delta)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoseLoss {
    pub loss: f64,
    /// Gradient with respect to each predicted encoding.
    pub grad: Vec<Vec<f64>>,
}

/// `(1/N) Σ_i Σ_k huber(pseudo_ik - pred_ik)`.
pub fn pose_distill_loss(pred: &[Vec<f64>], pseudo: &[Vec<f64>], huber_delta: f64) -> Result<PoseLoss> {
    if pred.len() != pseudo.len() {
        return Err(Error::LengthMismatch {
            expected: pred.len(),
            found: pseudo.len(),
        });
    }
    if !(huber_delta > 0.0 && huber_delta.is_finite()) {
        return Err(Error::InvalidParameter(format!("huber delta must be > 0, got {huber_delta}")));
    }
    for (a, b) in pred.iter().zip(pseudo) {
        if a.len() != b.len() {
            return Err(Error::LengthMismatch {
                expected: a.len(),
                found: b.len(),
            });
        }
    }
    if pred.is_empty() {
        return Ok(PoseLoss {
            loss: 0.0,
            grad: Vec::new(),
        });
    }
    let inv = 1.0 / pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .iter()
        .zip(pseudo)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(p, t)| {
                    let r = t - p;
                    loss += huber(r, huber_delta);
                    -huber_slope(r, huber_delta) * inv
                })
                .collect()
        })
        .collect();
    Ok(PoseLoss { loss: loss * inv, grad })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossComponents {
    pub rgb: f64,
    pub feat: f64,
    pub warp: f64,
    pub depth: f64,
    pub pose: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossReport {
    pub rgb: f64,
    pub feat: f64,
    pub warp: f64,
    pub depth: f64,
    pub pose: f64,
    pub total: f64,
    /// Factor each component's gradient is scaled by in the total.
    pub grad_scale: LossComponents,
}

pub fn total_loss(c: &LossComponents, weights: &LossWeights) -> Result<LossReport> {
    weights.validate()?;
    for (name, v) in [
        ("rgb", c.rgb),
        ("feat", c.feat),
        ("warp", c.warp),
        ("depth", c.depth),
        ("pose", c.pose),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFiniteComponent(name));
        }
    }
    let total = c.rgb
        + weights.lambda_feat * c.feat
        + weights.lambda_warp * c.warp
        + weights.lambda_depth * c.depth
        + weights.lambda_pose * c.pose;
    Ok(LossReport {
        rgb: c.rgb,
        feat: c.feat,
        warp: c.warp,
        depth: c.depth,
        pose: c.pose,
        total,
        grad_scale: LossComponents {
            rgb: 1.0,
            feat: weights.lambda_feat,
            warp: weights.lambda_warp,
            depth: weights.lambda_depth,
            pose: weights.lambda_pose,
        },
    })
}
