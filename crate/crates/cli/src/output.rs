use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

/// Files staged in memory and written only after every computation succeeded.
#[derive(Default)]
pub struct Outputs {
    files: Vec<(PathBuf, Vec<u8>)>,
}

impl Outputs {
    pub fn add(&mut self, path: Option<&Path>, bytes: impl FnOnce() -> anyhow::Result<Vec<u8>>) -> anyhow::Result<()> {
        if let Some(p) = path {
            self.files.push((p.to_path_buf(), bytes()?));
        }
        Ok(())
    }

    pub fn push(&mut self, path: impl Into<PathBuf>, bytes: Vec<u8>) {
        self.files.push((path.into(), bytes));
    }

    /// Writes through a sibling temp file so a failed write leaves no partial file.
    pub fn commit(self) -> anyhow::Result<()> {
        for (path, bytes) in self.files {
            let mut tmp = path.clone().into_os_string();
            tmp.push(".partial");
            let tmp = PathBuf::from(tmp);
            fs::write(&tmp, &bytes).with_context(|| format!("writing {}", path.display()))?;
            fs::rename(&tmp, &path).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

pub fn json_bytes<T: Serialize>(value: &T) -> anyhow::Result<Vec<u8>> {
    let mut s = serde_json::to_vec_pretty(value)?;
    s.push(b'\n');
    Ok(s)
}

/// Prints `value` as one JSON document, or `text` when `json` is off.
pub fn report<T: Serialize>(json: bool, value: &T, text: impl FnOnce() -> String) -> anyhow::Result<()> {
    if json {
        println!("{}", serde_json::to_string(value)?);
    } else {
        println!("{}", text());
    }
    Ok(())
}
