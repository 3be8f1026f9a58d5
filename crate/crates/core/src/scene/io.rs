//! `.fgsc` scene files.
//!
//! Layout (little endian): magic `FGSC`, u32 version, u32 N, u32 D,
//! u32 sh_degree, then N records of
//! `[3 f32 center][6 f32 covariance upper triangle][(deg+1)²·3 f32 SH][f32 opacity][f32 confidence][D f32 feature]`.

use std::fs;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use super::{sh, GaussianPrimitive, GaussianScene, MAX_SH_DEGREE};
use crate::error::{Error, Result};

pub const SCENE_MAGIC: &[u8; 4] = b"FGSC";
pub const SCENE_VERSION: u32 = 1;

const HEADER_LEN: usize = 20;

pub fn record_floats(feature_dim: usize, sh_degree: usize) -> usize {
    3 + 6 + sh::coeff_count(sh_degree) * 3 + 2 + feature_dim
}

pub fn scene_to_bytes(scene: &GaussianScene) -> Vec<u8> {
    let per = record_floats(scene.feature_dim, scene.sh_degree);
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * per * scene.len());
    out.extend_from_slice(SCENE_MAGIC);
    for v in [
        SCENE_VERSION,
        scene.len() as u32,
        scene.feature_dim as u32,
        scene.sh_degree as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let mut put = |v: f64| out.extend_from_slice(&(v as f32).to_le_bytes());
    for p in &scene.primitives {
        p.center.iter().for_each(|v| put(*v));
        let c = &p.covariance;
        for (r, col) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            put(c[(r, col)]);
        }
        p.sh_color.iter().flatten().for_each(|v| put(*v));
        put(p.opacity);
        put(p.confidence);
        p.feature.iter().for_each(|v| put(*v));
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f64> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes(b.try_into().unwrap()) as f64)
    }

    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!("unexpected end of file, needed {n} more bytes"),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
}

/// Parses and validates a scene. Every primitive must satisfy its invariants.
pub fn scene_from_bytes(bytes: &[u8]) -> Result<GaussianScene> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != SCENE_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: "bad magic, expected FGSC".into(),
        });
    }
    let version = r.u32()?;
    if version != SCENE_VERSION {
        return Err(Error::Parse {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let n = r.u32()? as usize;
    let feature_dim = r.u32()? as usize;
    let sh_degree = r.u32()? as usize;
    if sh_degree > MAX_SH_DEGREE {
        return Err(Error::Parse {
            offset: 16,
            message: format!("SH degree {sh_degree} exceeds {MAX_SH_DEGREE}"),
        });
    }
    let expected = HEADER_LEN + 4 * record_floats(feature_dim, sh_degree) * n;
    if bytes.len() > expected {
        return Err(Error::Parse {
            offset: expected,
            message: format!("{} trailing bytes", bytes.len() - expected),
        });
    }

    let n_sh = sh::coeff_count(sh_degree);
    let mut primitives = Vec::with_capacity(n.min(bytes.len() / 4));
    for _ in 0..n {
        let center = Vector3::new(r.f32()?, r.f32()?, r.f32()?);
        let mut upper = [0.0; 6];
        for v in &mut upper {
            *v = r.f32()?;
        }
        let [xx, xy, xz, yy, yz, zz] = upper;
        let covariance = Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz);
        let mut sh_color = Vec::with_capacity(n_sh);
        for _ in 0..n_sh {
            sh_color.push([r.f32()?, r.f32()?, r.f32()?]);
        }
        let opacity = r.f32()?;
        let confidence = r.f32()?;
        let feature = (0..feature_dim).map(|_| r.f32()).collect::<Result<Vec<_>>>()?;
        primitives.push(GaussianPrimitive {
            center,
            covariance,
            sh_color,
            opacity,
            feature,
            confidence,
        });
    }
    GaussianScene::new(primitives, feature_dim, sh_degree)
}

pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, scene_to_bytes(scene))?;
    Ok(())
}

pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene> {
    scene_from_bytes(&fs::read(path)?)
}
