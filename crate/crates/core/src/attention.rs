//! Single-head cross-attention where geometry tokens query semantic tokens.
//!
//! `O = softmax((X W_q)(S W_k)ᵀ / √d_k) · (S W_v)`, softmax taken per row.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::synth::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    /// d × d_k
    pub w_q: DMatrix<f64>,
    /// d_s × d_k
    pub w_k: DMatrix<f64>,
    /// d_s × d_v
    pub w_v: DMatrix<f64>,
}

impl FusionParams {
    pub fn new(w_q: DMatrix<f64>, w_k: DMatrix<f64>, w_v: DMatrix<f64>) -> Result<Self> {
        let p = FusionParams { w_q, w_k, w_v };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.w_q.ncols() == 0 {
            return Err(Error::DimensionMismatch("d_k must be positive".into()));
        }
        if self.w_k.ncols() != self.w_q.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "W_q has d_k={} but W_k has {}",
                self.w_q.ncols(),
                self.w_k.ncols()
            )));
        }
        if self.w_v.nrows() != self.w_k.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "W_k expects d_s={} but W_v has {} rows",
                self.w_k.nrows(),
                self.w_v.nrows()
            )));
        }
        if [&self.w_q, &self.w_k, &self.w_v].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidParameter("non-finite projection weight".into()));
        }
        Ok(())
    }

    /// Gaussian init with standard deviation `1/√fan_in`.
    pub fn random(rng: &mut Rng, d: usize, d_s: usize, d_k: usize, d_v: usize) -> Self {
        let mut init = |r: usize, c: usize| {
            let s = 1.0 / (r.max(1) as f64).sqrt();
            DMatrix::from_fn(r, c, |_, _| s * rng.normal())
        };
        let w_q = init(d, d_k);
        let w_k = init(d_s, d_k);
        let w_v = init(d_s, d_v);
        FusionParams { w_q, w_k, w_v }
    }

    pub fn d_k(&self) -> usize {
        self.w_q.ncols()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionOutput {
    pub output: DMatrix<f64>,
    /// Row-stochastic attention matrix, N_geometry × N_semantic.
    pub attention: DMatrix<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionGrads {
    pub geometry: DMatrix<f64>,
    pub semantic: DMatrix<f64>,
    pub w_q: DMatrix<f64>,
    pub w_k: DMatrix<f64>,
    pub w_v: DMatrix<f64>,
}

fn check_inputs(geometry: &DMatrix<f64>, semantic: &DMatrix<f64>, params: &FusionParams) -> Result<()> {
    params.validate()?;
    if geometry.ncols() != params.w_q.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "geometry tokens have {} columns, W_q expects {}",
            geometry.ncols(),
            params.w_q.nrows()
        )));
    }
    if semantic.ncols() != params.w_k.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "semantic tokens have {} columns, W_k expects {}",
            semantic.ncols(),
            params.w_k.nrows()
        )));
    }
    if semantic.nrows() == 0 {
        return Err(Error::DimensionMismatch("no semantic tokens".into()));
    }
    if geometry.iter().chain(semantic.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("non-finite token value".into()));
    }
    Ok(())
}

/// Row-wise softmax with max subtraction.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut a = logits.clone();
    for mut row in a.row_iter_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        row.iter_mut().for_each(|v| *v = (*v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
    a
}

/// Forward pass, also returning the attention matrix.
pub fn fuse_with_attention(
    geometry: &DMatrix<f64>,
    semantic: &DMatrix<f64>,
    params: &FusionParams,
) -> Result<FusionOutput> {
    check_inputs(geometry, semantic, params)?;
    let q = geometry * &params.w_q;
    let k = semantic * &params.w_k;
    let v = semantic * &params.w_v;
    let scale = 1.0 / (params.d_k() as f64).sqrt();
    let attention = softmax_rows(&((q * k.transpose()) * scale));
    let output = &attention * v;
    Ok(FusionOutput { output, attention })
}

pub fn fuse(geometry: &DMatrix<f64>, semantic: &DMatrix<f64>, params: &FusionParams) -> Result<DMatrix<f64>> {
    Ok(fuse_with_attention(geometry, semantic, params)?.output)
}

/// Gradients of `⟨fuse(X, S), G⟩` with respect to every input.
pub fn fuse_backward(
    geometry: &DMatrix<f64>,
    semantic: &DMatrix<f64>,
    params: &FusionParams,
    upstream: &DMatrix<f64>,
) -> Result<FusionGrads> {
    check_inputs(geometry, semantic, params)?;
    if upstream.shape() != (geometry.nrows(), params.w_v.ncols()) {
        return Err(Error::DimensionMismatch(format!(
            "upstream gradient is {:?}, output is {:?}",
            upstream.shape(),
            (geometry.nrows(), params.w_v.ncols())
        )));
    }
    let q = geometry * &params.w_q;
    let k = semantic * &params.w_k;
    let v = semantic * &params.w_v;
    let scale = 1.0 / (params.d_k() as f64).sqrt();
    let a = softmax_rows(&((&q * k.transpose()) * scale));

    let d_v = a.transpose() * upstream;
    let d_a = upstream * v.transpose();
    // softmax backward, row by row
    let mut d_logits = d_a.component_mul(&a);
    for (i, mut row) in d_logits.row_iter_mut().enumerate() {
        let s = row.sum();
        for (j, x) in row.iter_mut().enumerate() {
            *x -= a[(i, j)] * s;
        }
    }
    let d_q = (&d_logits * &k) * scale;
    let d_k = (d_logits.transpose() * &q) * scale;

    Ok(FusionGrads {
        geometry: &d_q * params.w_q.transpose(),
        semantic: &d_k * params.w_k.transpose() + &d_v * params.w_v.transpose(),
        w_q: geometry.transpose() * d_q,
        w_k: semantic.transpose() * d_k,
        w_v: semantic.transpose() * d_v,
    })
}
