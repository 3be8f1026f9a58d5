use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{shape_err, Error, Result};

pub const DMAP_MAGIC: &[u8; 4] = b"DMAP";

/// Row-major `height × width × channels` grid, channel-fastest.
///
/// Images, depth maps (one channel) and feature maps share this layout.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl DenseMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(shape_err(format!(
                "dense map dimensions must be positive, got {height}x{width}x{channels}"
            )));
        }
        if data.len() != height * width * channels {
            return Err(shape_err(format!(
                "dense map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Self {
        assert!(height > 0 && width > 0 && channels > 0, "empty dense map");
        Self {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self::filled(height, width, channels, 0.0)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixel_count(&self) -> usize {
        self.height * self.width
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y, c)]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f64) {
        let i = self.index(x, y, c);
        self.data[i] = value;
    }

    /// Channel vector of the pixel with linear index `p = y * width + x`.
    #[inline]
    pub fn pixel(&self, p: usize) -> &[f64] {
        &self.data[p * self.channels..(p + 1) * self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, p: usize) -> &mut [f64] {
        let c = self.channels;
        &mut self.data[p * c..(p + 1) * c]
    }

    pub fn same_shape(&self, other: &DenseMap) -> bool {
        self.shape() == other.shape()
    }

    pub fn ensure_shape(&self, other: &DenseMap, what: &str) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(shape_err(format!(
                "{what}: {:?} vs {:?}",
                self.shape(),
                other.shape()
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn scale(&mut self, factor: f64) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    /// Little-endian `DMAP` encoding with 32-bit floats.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + 4 * self.data.len());
        out.extend_from_slice(DMAP_MAGIC);
        for dim in [self.height, self.width, self.channels] {
            out.extend_from_slice(&(dim as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let parse = |offset: usize, message: &str| Error::Parse {
            offset,
            message: message.to_string(),
        };
        if bytes.len() < 16 {
            return Err(parse(bytes.len(), "truncated DMAP header"));
        }
        if &bytes[..4] != DMAP_MAGIC {
            return Err(parse(0, "bad magic, expected DMAP"));
        }
        let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
        let (h, w, c) = (dim(0), dim(1), dim(2));
        if h == 0 || w == 0 || c == 0 {
            return Err(parse(4, "zero dimension"));
        }
        let n = h
            .checked_mul(w)
            .and_then(|v| v.checked_mul(c))
            .ok_or_else(|| parse(4, "dimensions overflow"))?;
        let expected = 16 + 4 * n;
        if bytes.len() != expected {
            return Err(parse(
                bytes.len().min(expected),
                &format!("expected {expected} bytes, found {}", bytes.len()),
            ));
        }
        let data = bytes[16..]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
            .collect();
        DenseMap::new(h, w, c, data)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    /// Binary P6 PPM with 8-bit samples, values clamped to [0, 1] and rounded half up.
    pub fn to_ppm(&self) -> Result<Vec<u8>> {
        if self.channels != 3 {
            return Err(shape_err(format!("PPM needs 3 channels, found {}", self.channels)));
        }
        let mut out = Vec::with_capacity(32 + self.data.len());
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.extend(self.data.iter().map(|v| to_u8(*v)));
        Ok(out)
    }
}

fn to_u8(v: f64) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0 + 0.5).floor() as u8
}
