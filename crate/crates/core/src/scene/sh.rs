//! Real spherical-harmonic color, degrees 0 through 3.
//!
//! Follows the usual splatting convention: `rgb = max(0, Σ basis·coeff + 0.5)`.

use nalgebra::Vector3;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

pub fn degree_for_count(count: usize) -> Option<usize> {
    (0..=super::MAX_SH_DEGREE).find(|d| coeff_count(*d) == count)
}

/// DC coefficient reproducing `rgb` under [`evaluate`].
pub fn dc_from_rgb(rgb: [f64; 3]) -> [f64; 3] {
    rgb.map(|c| (c - 0.5) / SH_C0)
}

/// Basis values for `count` coefficients along a unit direction.
pub fn basis(count: usize, dir: &Vector3<f64>) -> [f64; 16] {
    let mut b = [0.0; 16];
    b[0] = SH_C0;
    if count <= 1 {
        return b;
    }
    let (x, y, z) = (dir.x, dir.y, dir.z);
    b[1] = -SH_C1 * y;
    b[2] = SH_C1 * z;
    b[3] = -SH_C1 * x;
    if count <= 4 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    b[4] = SH_C2[0] * x * y;
    b[5] = SH_C2[1] * y * z;
    b[6] = SH_C2[2] * (2.0 * zz - xx - yy);
    b[7] = SH_C2[3] * x * z;
    b[8] = SH_C2[4] * (xx - yy);
    if count <= 9 {
        return b;
    }
    b[9] = SH_C3[0] * y * (3.0 * xx - yy);
    b[10] = SH_C3[1] * x * y * z;
    b[11] = SH_C3[2] * y * (4.0 * zz - xx - yy);
    b[12] = SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    b[13] = SH_C3[4] * x * (4.0 * zz - xx - yy);
    b[14] = SH_C3[5] * z * (xx - yy);
    b[15] = SH_C3[6] * x * (xx - 3.0 * yy);
    b
}

pub fn evaluate(coeffs: &[[f64; 3]], dir: &Vector3<f64>) -> [f64; 3] {
    let b = basis(coeffs.len(), dir);
    let mut rgb = [0.5; 3];
    for (k, c) in coeffs.iter().enumerate() {
        for ch in 0..3 {
            rgb[ch] += b[k] * c[ch];
        }
    }
    rgb.map(|v| v.max(0.0))
}
