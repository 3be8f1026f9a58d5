use crate::geometry::{DenseMap, PixelCoord};

/// The four texels and weights of one bilinear lookup.
///
/// `texels` are linear pixel indices (`y * width + x`); weights sum to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilinearTaps {
    pub texels: [usize; 4],
    pub weights: [f64; 4],
}

impl BilinearTaps {
    /// Bilinear taps for a continuous coordinate on a `width × height` grid.
    ///
    /// Texel centers sit at `integer + 0.5`. Returns `None` when the 2×2
    /// neighbourhood would leave the grid, i.e. when the coordinate is
    /// outside `[0.5, width - 0.5] × [0.5, height - 0.5]`.
    pub fn new(width: usize, height: usize, coord: PixelCoord) -> Option<Self> {
        let (x0, tx) = axis_taps(coord.u, width)?;
        let (y0, ty) = axis_taps(coord.v, height)?;
        let x1 = (x0 + 1).min(width - 1);
        let y1 = (y0 + 1).min(height - 1);
        Some(Self {
            texels: [y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1],
            weights: [
                (1.0 - tx) * (1.0 - ty),
                tx * (1.0 - ty),
                (1.0 - tx) * ty,
                tx * ty,
            ],
        })
    }

    /// Weighted sum of the tapped texels, written into `out` (length = channels).
    pub fn gather(&self, map: &DenseMap, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (texel, w) in self.texels.iter().zip(self.weights) {
            for (o, v) in out.iter_mut().zip(map.pixel(*texel)) {
                *o += w * v;
            }
        }
    }

    /// Adjoint of [`gather`](Self::gather): accumulates `grad` into the tapped texels.
    pub fn scatter(&self, grad: &[f64], into: &mut DenseMap) {
        for (texel, w) in self.texels.iter().zip(self.weights) {
            for (o, g) in into.pixel_mut(*texel).iter_mut().zip(grad) {
                *o += w * g;
            }
        }
    }
}

/// Slack (px) on the valid sampling range, absorbing round-off of
/// reprojected pixel centers that sit exactly on the border.
pub const EDGE_SLACK: f64 = 1e-9;

fn axis_taps(coord: f64, size: usize) -> Option<(usize, f64)> {
    let last = (size - 1) as f64;
    let x = coord - 0.5;
    if !(x >= -EDGE_SLACK && x <= last + EDGE_SLACK) {
        return None;
    }
    let x = x.clamp(0.0, last);
    let x0 = (x.floor() as usize).min(size - 1);
    Some((x0, x - x0 as f64))
}

/// Bilinear samples of `map` at `coords`; invalid samples are zero-filled.
pub fn grid_sample_bilinear(map: &DenseMap, coords: &[PixelCoord]) -> (Vec<Vec<f64>>, Vec<bool>) {
    let mut values = Vec::with_capacity(coords.len());
    let mut valid = Vec::with_capacity(coords.len());
    for coord in coords {
        let mut v = vec![0.0; map.channels()];
        match BilinearTaps::new(map.width(), map.height(), *coord) {
            Some(taps) => {
                taps.gather(map, &mut v);
                valid.push(true);
            }
            None => valid.push(false),
        }
        values.push(v);
    }
    (values, valid)
}
