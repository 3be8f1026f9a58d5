use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::geometry::DenseMap;

/// Top principal directions of a feature map's pixel vectors.
#[derive(Debug, Clone)]
pub struct PcaBasis {
    pub mean: DVector<f64>,
    /// Unit directions, strongest first; the largest-magnitude loading of each is positive.
    pub components: Vec<DVector<f64>>,
    /// Variance captured along each component.
    pub variances: Vec<f64>,
}

/// Principal directions of the per-pixel feature vectors (population covariance).
pub fn pca_basis(feature: &DenseMap, count: usize) -> Result<PcaBasis> {
    let d = feature.channels();
    if count > d {
        return Err(Error::DimensionMismatch(format!(
            "requested {count} components from {d}-dimensional features"
        )));
    }
    let n = feature.pixel_count();
    let mut mean = DVector::zeros(d);
    for p in 0..n {
        mean += DVector::from_column_slice(feature.pixel(p));
    }
    mean /= n as f64;
    let mut cov = DMatrix::zeros(d, d);
    for p in 0..n {
        let x = DVector::from_column_slice(feature.pixel(p)) - &mean;
        cov.syger(1.0, &x, &x, 1.0);
    }
    cov /= n as f64;
    cov.fill_lower_triangle_with_upper_triangle();

    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    // descending eigenvalue, then ascending index for determinism
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(count);
    let mut variances = Vec::with_capacity(count);
    for &k in order.iter().take(count) {
        let mut v = eig.eigenvectors.column(k).into_owned();
        let lead = v.iter().cloned().enumerate().fold((0, 0.0f64), |best, (i, x)| {
            if x.abs() > best.1.abs() {
                (i, x)
            } else {
                best
            }
        });
        if lead.1 < 0.0 {
            v.neg_mut();
        }
        components.push(v);
        variances.push(eig.eigenvalues[k].max(0.0));
    }
    Ok(PcaBasis {
        mean,
        components,
        variances,
    })
}

/// Three-channel preview of a feature map: top-3 principal components,
/// each min-max normalized to `[0, 1]`.
///
/// Flat components (zero range) map to 0.5; a constant map is mid-gray.
pub fn render_feature_pca_preview(feature: &DenseMap) -> Result<DenseMap> {
    if feature.channels() < 3 {
        return Err(Error::DimensionMismatch(format!(
            "PCA preview needs at least 3 feature channels, found {}",
            feature.channels()
        )));
    }
    let (h, w) = (feature.height(), feature.width());
    let basis = pca_basis(feature, 3)?;
    let mut out = DenseMap::filled(h, w, 3, 0.5);
    if basis.variances.iter().all(|v| *v == 0.0) {
        return Ok(out);
    }
    for (ch, comp) in basis.components.iter().enumerate() {
        let proj: Vec<f64> = (0..h * w)
            .map(|p| {
                feature
                    .pixel(p)
                    .iter()
                    .zip(basis.mean.iter())
                    .zip(comp.iter())
                    .map(|((x, m), c)| (x - m) * c)
                    .sum()
            })
            .collect();
        let lo = proj.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = proj.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= 0.0 || basis.variances[ch] == 0.0 {
            continue;
        }
        for (p, v) in proj.iter().enumerate() {
            out.pixel_mut(p)[ch] = (v - lo) / (hi - lo);
        }
    }
    Ok(out)
}
